use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::OptimizerConfig;

/// Hyperparameters of the generator / discriminator / classifier triad and
/// of its training loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaganConfig {
    /// Number of convolutional layers in the discriminator.
    pub d_f: usize,
    /// Channel width of the discriminator's first layer; doubles per layer.
    pub d_base_filters: usize,
    pub g_f: usize,
    pub c_f: usize,
    pub n_blocks: usize,
    pub noise_sigma: f64,
    pub lambda_adv: f64,
    pub lambda_cls: f64,
    pub leaky_slope: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub d_optimizer: OptimizerConfig,
    pub c_optimizer: OptimizerConfig,
    pub g_optimizer: OptimizerConfig,
    /// Subsample size and repeats for the per-epoch W1 selection score.
    pub select_n_sub: usize,
    pub select_repeats: usize,
}

impl Default for SaganConfig {
    fn default() -> Self {
        Self {
            d_f: 3,
            d_base_filters: 16,
            g_f: 32,
            c_f: 32,
            n_blocks: 2,
            noise_sigma: 0.1,
            lambda_adv: 1.0,
            lambda_cls: 10.0,
            leaky_slope: 0.2,
            batch_size: 64,
            epochs: 200,
            seed: 0,
            d_optimizer: OptimizerConfig::sgd(1e-2, 0.9),
            c_optimizer: OptimizerConfig::adam(1e-3),
            g_optimizer: OptimizerConfig::adam(1e-3),
            select_n_sub: 256,
            select_repeats: 8,
        }
    }
}

impl SaganConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lambda_adv >= 0.0 && self.lambda_cls >= 0.0) {
            return bad(format!(
                "task factors must be non-negative (adv {}, cls {})",
                self.lambda_adv, self.lambda_cls
            ));
        }
        if self.lambda_adv + self.lambda_cls <= 0.0 {
            return bad("lambda_adv + lambda_cls must be positive".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma {} must be non-negative", self.noise_sigma));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return bad(format!("leaky_slope {} outside (0,1)", self.leaky_slope));
        }
        for (name, v) in [
            ("d_f", self.d_f),
            ("d_base_filters", self.d_base_filters),
            ("g_f", self.g_f),
            ("c_f", self.c_f),
            ("batch_size", self.batch_size),
            ("select_n_sub", self.select_n_sub),
            ("select_repeats", self.select_repeats),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2 for batch normalisation".into());
        }
        self.d_optimizer.validate()?;
        self.c_optimizer.validate()?;
        self.g_optimizer.validate()?;
        Ok(())
    }
}
