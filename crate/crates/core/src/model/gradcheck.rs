//! Central finite-difference verification of parameter gradients.

use rand::seq::index;

use crate::error::{Error, Result};
use crate::rng::{stream, tag};
use crate::tensor::{Bound, Graph, ParamSet, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// `|analytic - numeric| / max(|analytic|, |numeric|)` over the sampled
    /// coordinates, as vector norms.
    pub rel_error: f64,
    pub coords: usize,
    pub analytic_norm: f64,
}

/// Compares the gradient of `loss` with respect to `params` against central
/// differences with step `h` on `n_coords` randomly chosen trainable
/// coordinates.
pub fn check_params<F>(params: &ParamSet, n_coords: usize, h: f64, seed: u64, loss: F) -> Result<GradCheck>
where
    F: Fn(&mut Graph, &Bound) -> Result<Var>,
{
    let eval = |p: &ParamSet| -> Result<f64> {
        let mut g = Graph::new();
        let b = p.bind(&mut g, false);
        let l = loss(&mut g, &b)?;
        Ok(g.scalar_value(l))
    };

    let mut g = Graph::new();
    let bound = params.bind(&mut g, true);
    let l = loss(&mut g, &bound)?;
    g.backward(l)?;

    let slots: Vec<(&String, usize)> = params
        .iter()
        .filter(|(_, t)| t.requires_grad())
        .flat_map(|(n, t)| (0..t.numel()).map(move |i| (n, i)))
        .collect();
    if slots.is_empty() {
        return Err(Error::invalid("no trainable coordinates"));
    }
    let mut rng = stream(seed, &[tag("gradcheck")]);
    let picks = index::sample(&mut rng, slots.len(), n_coords.min(slots.len()));

    let (mut diff, mut an, mut nu) = (0.0, 0.0, 0.0);
    for k in picks {
        let (name, i) = slots[k];
        let analytic = g.grad(bound.var(name)?).map_or(0.0, |gr| gr[i]);
        let base = params.get(name)?.data().to_vec();
        let mut p = params.clone();
        let mut v = base.clone();
        v[i] = base[i] + h;
        p.set_data(name, &v)?;
        let up = eval(&p)?;
        v[i] = base[i] - h;
        p.set_data(name, &v)?;
        let down = eval(&p)?;
        let numeric = (up - down) / (2.0 * h);
        diff += (analytic - numeric).powi(2);
        an += analytic * analytic;
        nu += numeric * numeric;
    }
    let scale = an.sqrt().max(nu.sqrt());
    let rel_error = if scale == 0.0 { 0.0 } else { diff.sqrt() / scale };
    Ok(GradCheck {
        rel_error,
        coords: n_coords.min(slots.len()),
        analytic_norm: an.sqrt(),
    })
}
