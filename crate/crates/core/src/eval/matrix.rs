use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SubjectSplits;
use crate::distance::w1_estimate;
use crate::error::{Error, Result};
use crate::model::{ClassifierNet, SaganConfig};
use crate::rng::{derive_seed, tag};
use crate::trainer::{fit, train_classifier};

use super::{evaluate, EvalReport, KnnClassifier, Mode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub sagan: SaganConfig,
    pub knn_neighbors: usize,
    pub knn_pca_dims: usize,
    /// Epochs for the plain classifiers of the no-transfer and supervised modes.
    pub classifier_epochs: usize,
    pub w1_n_sub: usize,
    pub w1_repeats: usize,
    pub seed: u64,
    /// Recorded verbatim in every report.
    pub config_digest: String,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sagan: SaganConfig::default(),
            knn_neighbors: 5,
            knn_pca_dims: 32,
            classifier_epochs: 200,
            w1_n_sub: crate::distance::DEFAULT_N_SUB,
            w1_repeats: crate::distance::DEFAULT_REPEATS,
            seed: 0,
            config_digest: String::new(),
        }
    }
}

/// Outcome of one matrix cell; failures are kept rather than aborting the run.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixCell {
    pub source: String,
    pub target: String,
    pub mode: Mode,
    pub outcome: std::result::Result<EvalReport, String>,
}

fn classifier_seed(base: u64, mode: Mode, subject: &str) -> u64 {
    derive_seed(base, &[tag(mode.as_str()), tag(subject)])
}

fn cell_seed(base: u64, mode: Mode, source: &str, target: &str) -> u64 {
    match mode {
        Mode::NoTransfer => classifier_seed(base, mode, source),
        Mode::Supervised => classifier_seed(base, mode, target),
        _ => derive_seed(base, &[tag(mode.as_str()), tag(source), tag(target)]),
    }
}

/// Evaluates every ordered (source, target) pair under every mode.
///
/// No-transfer classifiers are trained once per source and supervised ones
/// once per target; all work items run in parallel and are merged in
/// (source, target, mode) order, so the result is independent of scheduling.
pub fn run_matrix(
    subjects: &BTreeMap<String, SubjectSplits>,
    modes: &[Mode],
    cfg: &BenchConfig,
) -> Result<Vec<MatrixCell>> {
    if subjects.len() < 2 {
        return Err(Error::invalid("the benchmark matrix needs at least two subjects"));
    }
    let mut modes = modes.to_vec();
    modes.sort();
    modes.dedup();
    let ids: Vec<&String> = subjects.keys().collect();
    let pairs: Vec<(&String, &String)> = ids
        .iter()
        .flat_map(|s| ids.iter().filter(move |t| *t != s).map(move |t| (*s, *t)))
        .collect();

    let plain: Vec<(Mode, &String)> = modes
        .iter()
        .filter(|m| matches!(m, Mode::NoTransfer | Mode::Supervised))
        .flat_map(|&m| ids.iter().map(move |s| (m, *s)))
        .collect();
    let trained: BTreeMap<(Mode, String), std::result::Result<ClassifierNet, String>> = plain
        .par_iter()
        .map(|&(m, s)| {
            let seed = classifier_seed(cfg.seed, m, s);
            let r = train_classifier(&subjects[s].train, &cfg.sagan, cfg.classifier_epochs, seed)
                .map_err(|e| e.to_string());
            ((m, s.clone()), r)
        })
        .collect();

    let distances: BTreeMap<(String, String), std::result::Result<f64, String>> = pairs
        .par_iter()
        .map(|&(s, t)| {
            let (a, b) = (subjects[s].train.features(), subjects[t].train.features());
            let n = cfg.w1_n_sub.min(a.rows()).min(b.rows());
            let seed = derive_seed(cfg.seed, &[tag("w1"), tag(s), tag(t)]);
            let r = w1_estimate(a, b, n, cfg.w1_repeats, seed).map_err(|e| e.to_string());
            ((s.clone(), t.clone()), r)
        })
        .collect();

    let jobs: Vec<(&String, &String, Mode)> = pairs
        .iter()
        .flat_map(|&(s, t)| modes.iter().map(move |&m| (s, t, m)))
        .collect();
    let cells: Vec<MatrixCell> = jobs
        .par_iter()
        .map(|&(s, t, mode)| {
            let outcome = run_cell(subjects, &trained, s, t, mode, cfg).and_then(|mut r| {
                r.wasserstein = Some(distances[&(s.clone(), t.clone())].clone()?);
                Ok(r)
            });
            MatrixCell {
                source: s.clone(),
                target: t.clone(),
                mode,
                outcome,
            }
        })
        .collect();
    Ok(cells)
}

fn run_cell(
    subjects: &BTreeMap<String, SubjectSplits>,
    trained: &BTreeMap<(Mode, String), std::result::Result<ClassifierNet, String>>,
    s: &str,
    t: &str,
    mode: Mode,
    cfg: &BenchConfig,
) -> std::result::Result<EvalReport, String> {
    let src = &subjects[s];
    let tgt = &subjects[t];
    let seed = cell_seed(cfg.seed, mode, s, t);
    let e = |e: Error| e.to_string();
    let (eval, degraded, curve) = match mode {
        Mode::NoTransfer | Mode::Supervised => {
            let key = (mode, if mode == Mode::NoTransfer { s } else { t }.to_string());
            let net = trained[&key].as_ref().map_err(Clone::clone)?;
            (evaluate(net, &tgt.test).map_err(e)?, false, None)
        }
        Mode::KnnPca => {
            let knn = KnnClassifier::fit(&src.train, &tgt.train.as_target(), cfg.knn_neighbors, cfg.knn_pca_dims)
                .map_err(e)?;
            (evaluate(&knn, &tgt.test).map_err(e)?, false, None)
        }
        Mode::Sagan => {
            let sc = SaganConfig {
                seed,
                ..cfg.sagan.clone()
            };
            let out = fit(&src.train, &tgt.train.as_target(), &sc).map_err(e)?;
            let eval = evaluate(&out.model.classifier, &tgt.test).map_err(e)?;
            (eval, out.state.degraded, Some(out.state.epochs))
        }
    };
    let mut r = EvalReport::new(s, t, mode, eval, cfg.seed, cfg.config_digest.clone());
    r.degraded = degraded;
    r.curve = curve;
    Ok(r)
}
