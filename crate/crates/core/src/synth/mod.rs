//! Synthetic multi-subject datasets with controllable cross-subject shift.
//!
//! Each subject draws class-conditional Gaussians around shared prototypes
//! and pushes them through its own affine map (plus an optional smooth
//! warp). Shifts stay invertible, so the generator can in principle undo
//! them and transfer claims become testable without real recordings.

mod recordings;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Domain, Role, SubjectSplits};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, stream, tag};

pub use recordings::{synth_recordings, RecordingSynthSpec, SynthOutput, CHANNEL_SPEC_FILE, LABEL_MAP_FILE};

pub const MAX_CONDITION: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectSpec {
    pub subject_id: String,
    /// `K x k` class prototypes.
    pub prototypes: Matrix,
    /// `k x k` linear part of the subject transform.
    pub transform: Matrix,
    pub offset: Vec<f64>,
    /// Amplitude of the elementwise warp `x + a * sin(pi * x)`.
    pub nonlinearity: f64,
    pub noise_sigma: f64,
    /// Probability of replacing a label with a different random class.
    pub label_noise: f64,
    pub samples_per_class: usize,
    pub seed: u64,
}

impl SubjectSpec {
    /// Identity-transform subject with prototypes drawn uniformly from
    /// `[-0.5, 0.5]^k`.
    pub fn base(
        subject_id: impl Into<String>,
        k: usize,
        n_classes: usize,
        samples_per_class: usize,
        noise_sigma: f64,
        seed: u64,
    ) -> Result<Self> {
        if k < 2 || n_classes < 2 {
            return Err(Error::invalid(format!(
                "need k >= 2 and K >= 2, got k={k}, K={n_classes}"
            )));
        }
        let mut rng = stream(seed, &[tag("prototypes")]);
        let protos = (0..n_classes * k).map(|_| rng.random_range(-0.5..0.5)).collect();
        let mut eye = Matrix::zeros(k, k);
        for i in 0..k {
            eye.row_mut(i)[i] = 1.0;
        }
        let spec = Self {
            subject_id: subject_id.into(),
            prototypes: Matrix::new(n_classes, k, protos)?,
            transform: eye,
            offset: vec![0.0; k],
            nonlinearity: 0.0,
            noise_sigma,
            label_noise: 0.0,
            samples_per_class,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dim(&self) -> usize {
        self.prototypes.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.prototypes.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.dim();
        if k < 2 || self.n_classes() < 2 {
            return Err(Error::invalid("need k >= 2 and at least two classes"));
        }
        if self.transform.rows() != k || self.transform.cols() != k || self.offset.len() != k {
            return Err(Error::shape(
                "SubjectSpec",
                format!("transform must be {k}x{k} with a length-{k} offset"),
            ));
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid(format!(
                "degenerate covariance: noise_sigma {} must be positive",
                self.noise_sigma
            )));
        }
        if !(0.0..0.5).contains(&self.label_noise) {
            return Err(Error::invalid(format!(
                "label_noise {} outside [0, 0.5)",
                self.label_noise
            )));
        }
        if !(self.nonlinearity >= 0.0 && self.nonlinearity.is_finite()) {
            return Err(Error::invalid("nonlinearity amplitude must be non-negative"));
        }
        if self.samples_per_class == 0 {
            return Err(Error::invalid("samples_per_class must be positive"));
        }
        let cond = condition_number(&self.transform);
        if !(cond <= MAX_CONDITION) {
            return Err(Error::invalid(format!(
                "transform condition number {cond:.3e} exceeds {MAX_CONDITION}"
            )));
        }
        Ok(())
    }

    /// Copy translated by `c`.
    pub fn translated(&self, id: impl Into<String>, c: &[f64], seed: u64) -> Result<Self> {
        if c.len() != self.dim() {
            return Err(Error::shape("translated", "offset length differs from k"));
        }
        let mut s = self.clone();
        s.subject_id = id.into();
        s.offset.iter_mut().zip(c).for_each(|(o, d)| *o += d);
        s.seed = seed;
        Ok(s)
    }
}

fn condition_number(a: &Matrix) -> f64 {
    let m = DMatrix::from_row_slice(a.rows(), a.cols(), a.data());
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Samples a labeled domain (role `Source`); rows are shuffled.
pub fn synth_domain(spec: &SubjectSpec) -> Result<Domain> {
    spec.validate()?;
    let (k, n_classes) = (spec.dim(), spec.n_classes());
    let mut rng = stream(spec.seed, &[tag("samples")]);
    let n = n_classes * spec.samples_per_class;
    let mut rows: Vec<(Vec<f64>, usize)> = Vec::with_capacity(n);
    let a = &spec.transform;
    for c in 0..n_classes {
        let p = spec.prototypes.row(c);
        for _ in 0..spec.samples_per_class {
            let u: Vec<f64> = p
                .iter()
                .map(|&pi| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    pi + spec.noise_sigma * e
                })
                .collect();
            let x: Vec<f64> = (0..k)
                .map(|i| {
                    let lin = a.row(i).iter().zip(&u).map(|(w, v)| w * v).sum::<f64>() + spec.offset[i];
                    lin + spec.nonlinearity * (std::f64::consts::PI * lin).sin()
                })
                .collect();
            let mut label = c;
            if spec.label_noise > 0.0 && rng.random::<f64>() < spec.label_noise {
                let other = rng.random_range(0..n_classes - 1);
                label = if other >= c { other + 1 } else { other };
            }
            rows.push((x, label));
        }
    }
    rows.shuffle(&mut rng);
    let labels = rows.iter().map(|r| r.1).collect();
    let data = rows.into_iter().flat_map(|r| r.0).collect();
    Domain::new(
        Matrix::new(n, k, data)?,
        Some(labels),
        n_classes,
        spec.subject_id.clone(),
        Role::Source,
    )
}

/// Unit direction shared by every member of a shift family.
pub fn shift_direction(base: &SubjectSpec) -> Vec<f64> {
    let mut rng = stream(base.seed, &[tag("shift-direction")]);
    let v: Vec<f64> = (0..base.dim()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

/// Subjects translated from `base` along one fixed direction by each
/// magnitude. Ids are `<base>-m<i>`; each member samples with its own seed.
pub fn shift_family(base: &SubjectSpec, magnitudes: &[f64]) -> Result<Vec<SubjectSpec>> {
    if magnitudes.iter().any(|m| !(*m >= 0.0)) || magnitudes.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("shift magnitudes must be non-negative and ascending"));
    }
    let u = shift_direction(base);
    magnitudes
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let c: Vec<f64> = u.iter().map(|x| x * m).collect();
            base.translated(
                format!("{}-m{i}", base.subject_id),
                &c,
                derive_seed(base.seed, &[tag("family"), i as u64]),
            )
        })
        .collect()
}

/// Two-subject benchmark: a base subject and a copy translated by
/// `magnitude` along [`shift_direction`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslatedPair {
    pub dim: usize,
    pub n_classes: usize,
    pub samples_per_class: usize,
    pub noise_sigma: f64,
    pub magnitude: f64,
    pub seed: u64,
}

impl Default for TranslatedPair {
    fn default() -> Self {
        Self {
            dim: 16,
            n_classes: 6,
            samples_per_class: 100,
            noise_sigma: 0.25,
            magnitude: 3.5,
            seed: 0,
        }
    }
}

impl TranslatedPair {
    /// Source and target splits; every split is an independent draw.
    pub fn build(&self) -> Result<(SubjectSplits, SubjectSplits)> {
        let base = SubjectSpec::base(
            "s",
            self.dim,
            self.n_classes,
            self.samples_per_class,
            self.noise_sigma,
            self.seed,
        )?;
        let [src, tgt]: [SubjectSpec; 2] = shift_family(&base, &[0.0, self.magnitude])?
            .try_into()
            .expect("two magnitudes");
        let splits = |spec: &SubjectSpec, id: &str| -> Result<SubjectSplits> {
            let draw = |split: &str, role| {
                let s = SubjectSpec {
                    subject_id: id.to_string(),
                    seed: derive_seed(spec.seed, &[tag(split)]),
                    ..spec.clone()
                };
                synth_domain(&s)?.with_role(role)
            };
            Ok(SubjectSplits {
                train: draw("train", Role::Source)?,
                validation: draw("validation", Role::Validation)?,
                test: draw("test", Role::Test)?,
            })
        };
        Ok((splits(&src, "source")?, splits(&tgt, "target")?))
    }
}

#[cfg(test)]
mod tests;
