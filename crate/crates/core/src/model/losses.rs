//! Least-squares adversarial losses with smoothed labels, plus the
//! cross-entropy classification terms.
//!
//! The discriminator regresses real target windows onto [`REAL_LABEL`] and
//! generated windows onto [`FAKE_LABEL`]. The generator pulls its samples
//! towards [`REAL_LABEL`] (non-saturating form) and additionally has to keep
//! them classifiable under their source labels.

use crate::error::{Error, Result};
use crate::tensor::{Bound, ChannelStats, Graph, Tensor, Var};

use super::layers::NetMode;
use super::nets::{ClassifierNet, DiscriminatorNet, GeneratorNet, Network};

pub const REAL_LABEL: f64 = 0.9;
pub const FAKE_LABEL: f64 = -1.0;
/// Score of the optimal least-squares discriminator where real and
/// generated densities coincide.
pub const EQUILIBRIUM_SCORE: f64 = (REAL_LABEL + FAKE_LABEL) / 2.0;

/// Row-major one-hot encoding; labels at or beyond `n_classes` are rejected.
pub fn one_hot(labels: &[usize], n_classes: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; labels.len() * n_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= n_classes {
            return Err(Error::invalid(format!("label {l} outside {n_classes} classes")));
        }
        out[i * n_classes + l] = 1.0;
    }
    Ok(out)
}

fn filled(g: &mut Graph, n: usize, value: f64) -> Var {
    g.constant(&Tensor::full(vec![n], value))
}

fn batch_rows(g: &Graph, v: Var) -> usize {
    g.shape(v).first().copied().unwrap_or(0)
}

#[derive(Debug)]
pub struct LossParts {
    pub loss: Var,
    pub stats: Vec<(String, ChannelStats)>,
}

/// `mean (D(x_t) - 0.9)^2 + mean (D(x_fake) + 1)^2`; gradients never reach
/// the generated batch.
pub fn discriminator_loss(
    g: &mut Graph,
    d: &DiscriminatorNet,
    d_bound: &Bound,
    x_t: Var,
    x_fake: Var,
) -> Result<LossParts> {
    let fake = g.detach(x_fake);
    let real_out = d.forward(g, d_bound, x_t, NetMode::Train)?;
    let fake_out = d.forward(g, d_bound, fake, NetMode::Train)?;
    let real_t = filled(g, batch_rows(g, x_t), REAL_LABEL);
    let fake_t = filled(g, batch_rows(g, fake), FAKE_LABEL);
    let lr = g.mse(real_out.out, real_t)?;
    let lf = g.mse(fake_out.out, fake_t)?;
    let loss = g.add(lr, lf)?;
    let mut stats = real_out.stats;
    stats.extend(fake_out.stats);
    Ok(LossParts { loss, stats })
}

/// Cross-entropy on source windows plus cross-entropy on their generated
/// counterparts, both under the source labels.
pub fn classifier_loss(
    g: &mut Graph,
    c: &ClassifierNet,
    c_bound: &Bound,
    x_s: Var,
    y_one_hot: &[f64],
    x_fake: Var,
) -> Result<LossParts> {
    let fake = g.detach(x_fake);
    let src = c.forward(g, c_bound, x_s, NetMode::Train)?;
    let gen = c.forward(g, c_bound, fake, NetMode::Train)?;
    let ls = g.softmax_cross_entropy(src.out, y_one_hot)?;
    let lg = g.softmax_cross_entropy(gen.out, y_one_hot)?;
    let loss = g.add(ls, lg)?;
    let mut stats = src.stats;
    stats.extend(gen.stats);
    Ok(LossParts { loss, stats })
}

#[derive(Debug)]
pub struct GeneratorLoss {
    pub total: Var,
    pub adversarial: Var,
    pub classification: Var,
    pub stats: Vec<(String, ChannelStats)>,
}

/// `lambda_adv * mean (D(G(x)) - 0.9)^2 + lambda_cls * CE(C(G(x)), y)`.
///
/// `x_in` is the already-noised source batch. Discriminator and classifier
/// must be bound frozen.
#[allow(clippy::too_many_arguments)]
pub fn generator_loss(
    g: &mut Graph,
    gen: &GeneratorNet,
    g_bound: &Bound,
    d: &DiscriminatorNet,
    d_bound: &Bound,
    c: &ClassifierNet,
    c_bound: &Bound,
    x_in: Var,
    y_one_hot: &[f64],
    lambda_adv: f64,
    lambda_cls: f64,
) -> Result<GeneratorLoss> {
    if d_bound.is_trainable() || c_bound.is_trainable() {
        return Err(Error::invalid(
            "generator loss needs the discriminator and classifier bound as frozen",
        ));
    }
    let fake = gen.forward(g, g_bound, x_in, NetMode::Train)?;
    let score = d.forward(g, d_bound, fake.out, NetMode::Train)?;
    let target = filled(g, batch_rows(g, x_in), REAL_LABEL);
    let adversarial = g.mse(score.out, target)?;
    let logits = c.forward(g, c_bound, fake.out, NetMode::Train)?;
    let classification = g.softmax_cross_entropy(logits.out, y_one_hot)?;
    let a = g.scale(adversarial, lambda_adv);
    let b = g.scale(classification, lambda_cls);
    let total = g.add(a, b)?;
    Ok(GeneratorLoss {
        total,
        adversarial,
        classification,
        stats: fake.stats,
    })
}
