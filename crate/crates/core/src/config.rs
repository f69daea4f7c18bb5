//! Flat `key = value` run configuration.
//!
//! Every key is optional; the canonical form lists all resolved keys in
//! sorted order, and its SHA-256 is the digest recorded in every output.
//!
//! ```text
//! # comments and blank lines are ignored
//! seed = 7
//! trainer.epochs = 50
//! model.lambda_cls = 10
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::data::PipelineConfig;
use crate::error::{Error, Result};
use crate::eval::BenchConfig;
use crate::model::SaganConfig;
use crate::tensor::{OptimizerConfig, OptimizerKind};

#[derive(Debug, Clone, Copy, PartialEq)]
struct OptKeys {
    kind: &'static str,
    lr: f64,
    momentum: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

const SGD: &str = "sgd-momentum";
const ADAM: &str = "adaptive-moments";

impl OptKeys {
    fn from_config(c: OptimizerConfig) -> Self {
        let mut k = Self {
            kind: ADAM,
            lr: c.lr,
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        };
        match c.kind {
            OptimizerKind::SgdMomentum { momentum } => {
                k.kind = SGD;
                k.momentum = momentum;
            }
            OptimizerKind::AdaptiveMoments { beta1, beta2, eps } => {
                k.beta1 = beta1;
                k.beta2 = beta2;
                k.eps = eps;
            }
        }
        k
    }

    fn to_config(self) -> OptimizerConfig {
        let kind = if self.kind == SGD {
            OptimizerKind::SgdMomentum {
                momentum: self.momentum,
            }
        } else {
            OptimizerKind::AdaptiveMoments {
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.eps,
            }
        };
        OptimizerConfig { kind, lr: self.lr }
    }
}

/// Every tunable default of the pipeline, model, trainer and benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub pipeline: PipelineConfig,
    /// `seed` inside is ignored; [`RunConfig::sagan`] fills it from `seed`.
    pub model: SaganConfig,
    pub knn_neighbors: usize,
    pub knn_pca_dims: usize,
    pub classifier_epochs: usize,
    pub w1_n_sub: usize,
    pub w1_repeats: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let bench = BenchConfig::default();
        Self {
            seed: 0,
            pipeline: PipelineConfig::default(),
            model: bench.sagan,
            knn_neighbors: bench.knn_neighbors,
            knn_pca_dims: bench.knn_pca_dims,
            classifier_epochs: bench.classifier_epochs,
            w1_n_sub: bench.w1_n_sub,
            w1_repeats: bench.w1_repeats,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

impl RunConfig {
    /// Parses `key = value` lines on top of the defaults. Unknown and
    /// repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if let Some(prev) = seen.insert(k.to_string(), i + 1) {
                return Err(Error::Config(format!("line {}: {k} already set on line {prev}", i + 1)));
            }
            cfg.set(k, v).map_err(|e| {
                Error::Config(format!(
                    "line {}: {}",
                    i + 1,
                    e.to_string().trim_start_matches("config: ")
                ))
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| {
            Error::Config(format!(
                "{}: {}",
                path.display(),
                e.to_string().trim_start_matches("config: ")
            ))
        })
    }

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let p = &mut self.pipeline;
        let m = &mut self.model;
        match key {
            "seed" => self.seed = parse_num(key, v)?,
            "pipeline.window_seconds" => p.window_seconds = parse_num(key, v)?,
            "pipeline.overlap" => p.overlap = parse_num(key, v)?,
            "pipeline.sample_rate_hz" => p.sample_rate_hz = parse_num(key, v)?,
            "pipeline.pca_dims" => p.pca_dims = parse_num(key, v)?,
            "model.d_f" => m.d_f = parse_num(key, v)?,
            "model.d_base_filters" => m.d_base_filters = parse_num(key, v)?,
            "model.g_f" => m.g_f = parse_num(key, v)?,
            "model.c_f" => m.c_f = parse_num(key, v)?,
            "model.n_blocks" => m.n_blocks = parse_num(key, v)?,
            "model.noise_sigma" => m.noise_sigma = parse_num(key, v)?,
            "model.lambda_adv" => m.lambda_adv = parse_num(key, v)?,
            "model.lambda_cls" => m.lambda_cls = parse_num(key, v)?,
            "model.leaky_slope" => m.leaky_slope = parse_num(key, v)?,
            "trainer.batch_size" => m.batch_size = parse_num(key, v)?,
            "trainer.epochs" => m.epochs = parse_num(key, v)?,
            "trainer.select_n_sub" => m.select_n_sub = parse_num(key, v)?,
            "trainer.select_repeats" => m.select_repeats = parse_num(key, v)?,
            "eval.knn_neighbors" => self.knn_neighbors = parse_num(key, v)?,
            "eval.knn_pca_dims" => self.knn_pca_dims = parse_num(key, v)?,
            "eval.classifier_epochs" => self.classifier_epochs = parse_num(key, v)?,
            "eval.w1_n_sub" => self.w1_n_sub = parse_num(key, v)?,
            "eval.w1_repeats" => self.w1_repeats = parse_num(key, v)?,
            _ => return self.set_optimizer(key, v),
        }
        Ok(())
    }

    fn set_optimizer(&mut self, key: &str, v: &str) -> Result<()> {
        let unknown = || Error::Config(format!("unknown key {key}"));
        let rest = key.strip_prefix("trainer.").ok_or_else(unknown)?;
        let (net, field) = rest.split_once('_').ok_or_else(unknown)?;
        let slot = match net {
            "d" => &mut self.model.d_optimizer,
            "c" => &mut self.model.c_optimizer,
            "g" => &mut self.model.g_optimizer,
            _ => return Err(unknown()),
        };
        let mut o = OptKeys::from_config(*slot);
        match field {
            "optimizer" => {
                o.kind = match v {
                    SGD => SGD,
                    ADAM => ADAM,
                    _ => return Err(Error::Config(format!("{key}: expected {SGD} or {ADAM}, got {v:?}"))),
                }
            }
            "lr" => o.lr = parse_num(key, v)?,
            "momentum" => o.momentum = parse_num(key, v)?,
            "beta1" => o.beta1 = parse_num(key, v)?,
            "beta2" => o.beta2 = parse_num(key, v)?,
            "eps" => o.eps = parse_num(key, v)?,
            _ => return Err(unknown()),
        }
        *slot = o.to_config();
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.sagan().validate()?;
        let p = &self.pipeline;
        if !(p.window_seconds > 0.0 && p.sample_rate_hz > 0.0) {
            return Err(Error::Config(
                "window_seconds and sample_rate_hz must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&p.overlap) {
            return Err(Error::Config(format!("pipeline.overlap {} outside [0,1)", p.overlap)));
        }
        for (k, v) in [
            ("pipeline.pca_dims", p.pca_dims),
            ("eval.knn_neighbors", self.knn_neighbors),
            ("eval.knn_pca_dims", self.knn_pca_dims),
            ("eval.w1_n_sub", self.w1_n_sub),
            ("eval.w1_repeats", self.w1_repeats),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{k} must be positive")));
            }
        }
        Ok(())
    }

    /// All resolved keys in sorted order.
    pub fn entries(&self) -> Vec<(String, String)> {
        let p = &self.pipeline;
        let m = &self.model;
        let mut e: Vec<(String, String)> = vec![
            ("seed".into(), self.seed.to_string()),
            ("pipeline.window_seconds".into(), p.window_seconds.to_string()),
            ("pipeline.overlap".into(), p.overlap.to_string()),
            ("pipeline.sample_rate_hz".into(), p.sample_rate_hz.to_string()),
            ("pipeline.pca_dims".into(), p.pca_dims.to_string()),
            ("model.d_f".into(), m.d_f.to_string()),
            ("model.d_base_filters".into(), m.d_base_filters.to_string()),
            ("model.g_f".into(), m.g_f.to_string()),
            ("model.c_f".into(), m.c_f.to_string()),
            ("model.n_blocks".into(), m.n_blocks.to_string()),
            ("model.noise_sigma".into(), m.noise_sigma.to_string()),
            ("model.lambda_adv".into(), m.lambda_adv.to_string()),
            ("model.lambda_cls".into(), m.lambda_cls.to_string()),
            ("model.leaky_slope".into(), m.leaky_slope.to_string()),
            ("trainer.batch_size".into(), m.batch_size.to_string()),
            ("trainer.epochs".into(), m.epochs.to_string()),
            ("trainer.select_n_sub".into(), m.select_n_sub.to_string()),
            ("trainer.select_repeats".into(), m.select_repeats.to_string()),
            ("eval.knn_neighbors".into(), self.knn_neighbors.to_string()),
            ("eval.knn_pca_dims".into(), self.knn_pca_dims.to_string()),
            ("eval.classifier_epochs".into(), self.classifier_epochs.to_string()),
            ("eval.w1_n_sub".into(), self.w1_n_sub.to_string()),
            ("eval.w1_repeats".into(), self.w1_repeats.to_string()),
        ];
        for (net, o) in [("d", m.d_optimizer), ("c", m.c_optimizer), ("g", m.g_optimizer)] {
            let o = OptKeys::from_config(o);
            e.push((format!("trainer.{net}_optimizer"), o.kind.to_string()));
            e.push((format!("trainer.{net}_lr"), o.lr.to_string()));
            e.push((format!("trainer.{net}_momentum"), o.momentum.to_string()));
            e.push((format!("trainer.{net}_beta1"), o.beta1.to_string()));
            e.push((format!("trainer.{net}_beta2"), o.beta2.to_string()));
            e.push((format!("trainer.{net}_eps"), o.eps.to_string()));
        }
        e.sort();
        e
    }

    /// `key = value` lines of every resolved key; parses back to `self`.
    pub fn canonical(&self) -> String {
        self.entries().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Hex SHA-256 of [`RunConfig::canonical`]. Float values use Rust's
    /// shortest round-trip formatting, so the digest is platform independent.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    pub fn sagan(&self) -> SaganConfig {
        SaganConfig {
            seed: self.seed,
            ..self.model.clone()
        }
    }

    pub fn bench(&self) -> BenchConfig {
        BenchConfig {
            sagan: self.sagan(),
            knn_neighbors: self.knn_neighbors,
            knn_pca_dims: self.knn_pca_dims,
            classifier_epochs: self.classifier_epochs,
            w1_n_sub: self.w1_n_sub,
            w1_repeats: self.w1_repeats,
            seed: self.seed,
            config_digest: self.digest(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let c = RunConfig::parse("# nothing\n\n").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.sagan(), SaganConfig::default());
        assert_eq!(c.pipeline.pca_dims, 88);
    }

    #[test]
    fn canonical_round_trips() {
        let c = RunConfig::parse(
            "seed = 7\ntrainer.d_optimizer = adaptive-moments\ntrainer.d_lr=0.0005\nmodel.lambda_cls = 2.5\n",
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.model.d_optimizer, OptimizerConfig::adam(5e-4));
        assert_eq!(RunConfig::parse(&c.canonical()).unwrap(), c);
        assert_eq!(RunConfig::parse(&c.canonical()).unwrap().digest(), c.digest());
    }

    #[test]
    fn digest_ignores_layout_but_not_values() {
        let a = RunConfig::parse("seed=1\nmodel.g_f=8").unwrap();
        let b = RunConfig::parse("# same\nmodel.g_f = 8\n  seed = 1  \n").unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), RunConfig::parse("seed=2\nmodel.g_f=8").unwrap().digest());
        // Explicitly restating a default does not change the digest.
        assert_eq!(
            RunConfig::parse("trainer.epochs = 200").unwrap().digest(),
            RunConfig::default().digest()
        );
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn digest_is_pinned() {
        // Guards the canonical format: changing a key name or float rendering
        // silently orphans earlier outputs.
        let c = RunConfig::default().canonical();
        assert!(c.starts_with("eval.classifier_epochs = 200\n"));
        assert!(c.contains("trainer.d_lr = 0.01\ntrainer.d_momentum = 0.9\ntrainer.d_optimizer = sgd-momentum\n"));
        assert!(c.contains("trainer.g_eps = 0.00000001\n"));
    }

    #[test]
    fn unknown_repeated_and_bad_values_rejected() {
        let err = RunConfig::parse("model.gf = 3").unwrap_err().to_string();
        assert!(err.contains("unknown key model.gf"), "{err}");
        assert!(RunConfig::parse("trainer.x_lr = 1").is_err());
        assert!(RunConfig::parse("seed = 1\nseed = 2")
            .unwrap_err()
            .to_string()
            .contains("already set"));
        assert!(RunConfig::parse("trainer.epochs = many").is_err());
        assert!(RunConfig::parse("trainer.c_optimizer = rmsprop").is_err());
        assert!(RunConfig::parse("just a line").is_err());
        assert!(RunConfig::parse("model.lambda_cls = -1").is_err());
        assert!(RunConfig::parse("pipeline.overlap = 1").is_err());
    }

    #[test]
    fn bench_carries_digest_and_seed() {
        let c = RunConfig::parse("seed = 5").unwrap();
        let b = c.bench();
        assert_eq!(b.seed, 5);
        assert_eq!(b.sagan.seed, 5);
        assert_eq!(b.config_digest, c.digest());
    }
}
