use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor::{BatchNormMode, Bound, ChannelStats, Graph, Padding, ParamSet, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetMode {
    /// Batch statistics in batch norm.
    Train,
    /// Running statistics in batch norm.
    Eval,
}

/// Output of a forward pass plus the batch-norm moments it observed, keyed
/// by layer prefix.
#[derive(Debug)]
pub struct Forward {
    pub out: Var,
    pub stats: Vec<(String, ChannelStats)>,
}

pub(crate) fn add_conv(
    params: &mut ParamSet,
    name: &str,
    c_out: usize,
    c_in: usize,
    k: usize,
    gain: f64,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let bound = gain / ((c_in * k) as f64).sqrt();
    let w = (0..c_out * c_in * k).map(|_| rng.random_range(-bound..bound)).collect();
    let b = (0..c_out)
        .map(|_| rng.random_range(-bound..bound) * gain.min(1.0))
        .collect();
    params.insert(
        format!("{name}.w"),
        Tensor::new(vec![c_out, c_in, k], w)?.with_requires_grad(true),
    )?;
    params.insert(
        format!("{name}.b"),
        Tensor::new(vec![c_out], b)?.with_requires_grad(true),
    )?;
    Ok(())
}

pub(crate) fn add_batchnorm(params: &mut ParamSet, name: &str, c: usize) -> Result<()> {
    params.insert(
        format!("{name}.gamma"),
        Tensor::full(vec![c], 1.0).with_requires_grad(true),
    )?;
    params.insert(format!("{name}.beta"), Tensor::zeros(vec![c]).with_requires_grad(true))?;
    params.insert(format!("{name}.running_mean"), Tensor::zeros(vec![c]))?;
    params.insert(format!("{name}.running_var"), Tensor::full(vec![c], 1.0))?;
    Ok(())
}

pub(crate) fn add_residual_block(
    params: &mut ParamSet,
    name: &str,
    filters: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    add_conv(params, &format!("{name}.conv1"), filters, filters, 3, 1.0, rng)?;
    add_batchnorm(params, &format!("{name}.bn1"), filters)?;
    add_conv(params, &format!("{name}.conv2"), filters, filters, 3, 1.0, rng)?;
    add_batchnorm(params, &format!("{name}.bn2"), filters)?;
    Ok(())
}

/// Folds observed batch moments into the running statistics.
pub(crate) fn absorb_stats(params: &mut ParamSet, stats: &[(String, ChannelStats)]) -> Result<()> {
    for (prefix, s) in stats {
        let mk = format!("{prefix}.running_mean");
        let vk = format!("{prefix}.running_var");
        let mut m = params.get(&mk)?.data().to_vec();
        let mut v = params.get(&vk)?.data().to_vec();
        s.update_running(&mut m, &mut v);
        params.set_data(&mk, &m)?;
        params.set_data(&vk, &v)?;
    }
    Ok(())
}

/// Forward-pass context shared by the three networks.
pub(crate) struct Ctx<'a> {
    pub g: &'a mut Graph,
    pub bound: &'a Bound,
    pub params: &'a ParamSet,
    pub mode: NetMode,
    pub slope: f64,
    pub stats: Vec<(String, ChannelStats)>,
}

impl Ctx<'_> {
    pub fn conv(&mut self, name: &str, x: Var, stride: usize, padding: Padding) -> Result<Var> {
        let w = self.bound.var(&format!("{name}.w"))?;
        let b = self.bound.var(&format!("{name}.b"))?;
        self.g.conv1d(x, w, Some(b), stride, padding)
    }

    pub fn bn(&mut self, name: &str, x: Var) -> Result<Var> {
        let gamma = self.bound.var(&format!("{name}.gamma"))?;
        let beta = self.bound.var(&format!("{name}.beta"))?;
        match self.mode {
            NetMode::Train => {
                let (y, s) = self.g.batchnorm1d(x, gamma, beta, BatchNormMode::Train)?;
                if let Some(s) = s {
                    self.stats.push((name.to_string(), s));
                }
                Ok(y)
            }
            NetMode::Eval => {
                let mean = self.params.get(&format!("{name}.running_mean"))?.data();
                let var = self.params.get(&format!("{name}.running_var"))?.data();
                let (y, _) = self.g.batchnorm1d(x, gamma, beta, BatchNormMode::Eval { mean, var })?;
                Ok(y)
            }
        }
    }

    pub fn leaky(&mut self, x: Var) -> Result<Var> {
        self.g.leaky_relu(x, self.slope)
    }

    /// conv -> bn -> leaky -> conv -> bn, added to the input.
    pub fn residual(&mut self, name: &str, h: Var) -> Result<Var> {
        let r = self.conv(&format!("{name}.conv1"), h, 1, Padding::Same)?;
        let r = self.bn(&format!("{name}.bn1"), r)?;
        let r = self.leaky(r)?;
        let r = self.conv(&format!("{name}.conv2"), r, 1, Padding::Same)?;
        let r = self.bn(&format!("{name}.bn2"), r)?;
        self.g.add(h, r)
    }
}
