use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum OptimizerKind {
    SgdMomentum { momentum: f64 },
    AdaptiveMoments { beta1: f64, beta2: f64, eps: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
}

impl OptimizerConfig {
    pub fn sgd(lr: f64, momentum: f64) -> Self {
        Self {
            kind: OptimizerKind::SgdMomentum { momentum },
            lr,
        }
    }

    pub fn adam(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::AdaptiveMoments {
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
            },
            lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Optimizer(format!(
                "learning rate {} must be non-negative",
                self.lr
            )));
        }
        let in_unit = |x: f64| (0.0..1.0).contains(&x);
        match self.kind {
            OptimizerKind::SgdMomentum { momentum } if !in_unit(momentum) => {
                Err(Error::Optimizer(format!("momentum {momentum} outside [0,1)")))
            }
            OptimizerKind::AdaptiveMoments { beta1, beta2, eps }
                if !in_unit(beta1) || !in_unit(beta2) || eps <= 0.0 =>
            {
                Err(Error::Optimizer(format!(
                    "adaptive-moments coefficients beta1={beta1} beta2={beta2} eps={eps} invalid"
                )))
            }
            _ => Ok(()),
        }
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::adam(1e-3)
    }
}

/// Optimizer with per-parameter auxiliary buffers, keyed by parameter name.
#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    first: BTreeMap<String, Vec<f64>>,
    second: BTreeMap<String, Vec<f64>>,
    t: u64,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
            t: 0,
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    /// Applies one update from the accumulated gradients, then clears them.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        for (name, p) in params.iter() {
            if p.requires_grad() && p.grad().is_none() {
                return Err(Error::Optimizer(format!("parameter {name} has no gradient")));
            }
        }
        self.t += 1;
        let lr = self.config.lr;
        for (name, p) in params.iter_mut() {
            if !p.requires_grad() {
                continue;
            }
            let grad = p.grad().expect("checked above").to_vec();
            let n = grad.len();
            match self.config.kind {
                OptimizerKind::SgdMomentum { momentum } => {
                    let v = self.first.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
                    for ((vi, gi), pi) in v.iter_mut().zip(&grad).zip(p.data_mut()) {
                        *vi = momentum * *vi + gi;
                        *pi -= lr * *vi;
                    }
                }
                OptimizerKind::AdaptiveMoments { beta1, beta2, eps } => {
                    let m = self.first.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
                    let v = self.second.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
                    let bc1 = 1.0 - beta1.powi(self.t as i32);
                    let bc2 = 1.0 - beta2.powi(self.t as i32);
                    for i in 0..n {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
                        v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
                        let mh = m[i] / bc1;
                        let vh = v[i] / bc2;
                        p.data_mut()[i] -= lr * mh / (vh.sqrt() + eps);
                    }
                }
            }
            p.zero_grad();
        }
        params.bump_step();
        Ok(())
    }
}
