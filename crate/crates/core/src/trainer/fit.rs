use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Domain, Role};
use crate::distance::w1_estimate;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{GeneratorNet, NetMode, SaganConfig, SaganModel};
use crate::rng::{derive_seed, stream, tag};

use super::batches::make_batches;
use super::step::{Batch, StepLosses, Trainer};

/// Loss magnitude beyond which training is considered diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

/// Epoch means of the step losses and the model-selection score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub losses: StepLosses,
    /// Estimated W1 between generated source windows and the target.
    pub selection_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub seed: u64,
    pub steps: usize,
    /// Selection score of the untrained generator.
    pub initial_score: f64,
    pub epochs: Vec<EpochRecord>,
    /// Per-batch losses in training order.
    pub history: Vec<StepLosses>,
    pub best_epoch: Option<usize>,
    pub best_score: Option<f64>,
    /// Set when training stopped on a non-finite or runaway loss.
    pub degraded: bool,
    pub halt_reason: Option<String>,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// The selected networks; `model.classifier` is the deliverable.
    pub model: SaganModel,
    pub state: TrainState,
}

/// W1 between `G(source)` (noise-free, running statistics) and the target.
pub fn selection_score(gen: &GeneratorNet, source: &Matrix, target: &Matrix, cfg: &SaganConfig) -> Result<f64> {
    let fake = gen.generate(source, &Matrix::zeros(source.rows(), source.cols()), NetMode::Eval)?;
    let n = cfg.select_n_sub.min(source.rows()).min(target.rows());
    w1_estimate(
        &fake,
        target,
        n,
        cfg.select_repeats,
        derive_seed(cfg.seed, &[tag("select")]),
    )
}

fn gaussian(rows: usize, cols: usize, sigma: f64, seed: u64, epoch: usize, batch: usize) -> Result<Matrix> {
    if sigma == 0.0 {
        return Ok(Matrix::zeros(rows, cols));
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = stream(seed, &[tag("noise"), epoch as u64, batch as u64]);
    Matrix::new(rows, cols, (0..rows * cols).map(|_| normal.sample(&mut rng)).collect())
}

fn check_domains(source: &Domain, target: &Domain) -> Result<()> {
    if source.labels().is_none() {
        return Err(Error::invalid(format!("source {} has no labels", source.subject_id())));
    }
    if target.role() != Role::Target {
        return Err(Error::invalid(format!(
            "domain {} passed as target has role {}",
            target.subject_id(),
            target.role()
        )));
    }
    if source.dim() != target.dim() {
        return Err(Error::shape(
            "fit",
            format!("source dimension {} differs from target {}", source.dim(), target.dim()),
        ));
    }
    if source.is_empty() || target.is_empty() {
        return Err(Error::invalid("source and target must be non-empty"));
    }
    Ok(())
}

/// Trains the triad for `cfg.epochs` epochs and returns the networks from
/// the epoch with the lowest selection score. On divergence the best
/// checkpoint so far (or the initial one) is returned with `degraded` set.
pub fn fit(source: &Domain, target: &Domain, cfg: &SaganConfig) -> Result<FitOutcome> {
    check_domains(source, target)?;
    let model = SaganModel::new(source.dim(), source.n_classes(), cfg)?;
    fit_from(model, source, target, |_| {})
}

/// As [`fit`], starting from an existing model and reporting each finished
/// epoch to `on_epoch`.
pub fn fit_from(
    model: SaganModel,
    source: &Domain,
    target: &Domain,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<FitOutcome> {
    check_domains(source, target)?;
    let cfg = model.config.clone();
    let labels = source.labels().expect("checked above");
    let (xs, xt) = (source.features(), target.features());
    let m = cfg.batch_size.min(xs.rows().max(xt.rows()));
    if m < 2 {
        return Err(Error::invalid("need at least two windows per batch"));
    }

    let initial = model.clone();
    let initial_score = selection_score(&model.generator, xs, xt, &cfg)?;
    let mut state = TrainState {
        seed: cfg.seed,
        steps: 0,
        initial_score,
        epochs: Vec::new(),
        history: Vec::new(),
        best_epoch: None,
        best_score: None,
        degraded: false,
        halt_reason: None,
    };
    let mut best: Option<SaganModel> = None;
    let mut trainer = Trainer::new(model)?;

    'epochs: for epoch in 1..=cfg.epochs {
        let mut rng = stream(cfg.seed, &[tag("batches"), epoch as u64]);
        let batches = make_batches(xs.rows(), xt.rows(), m, &mut rng)?;
        let mut sum = StepLosses::default();
        for (bi, (si, ti)) in batches.iter().enumerate() {
            let batch = Batch {
                x_s: xs.select_rows(si),
                y_s: si.iter().map(|&i| labels[i]).collect(),
                x_t: xt.select_rows(ti),
            };
            let noise = gaussian(m, xs.cols(), cfg.noise_sigma, cfg.seed, epoch, bi)?;
            let losses = match trainer.train_step(&batch, &noise, bi) {
                Ok(l) => l,
                Err(Error::NonFinite { step, batch }) => {
                    state.halt_reason = Some(format!("non-finite {step} loss at epoch {epoch}, batch {batch}"));
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            if losses.max_abs() > DIVERGENCE_THRESHOLD {
                state.halt_reason = Some(format!(
                    "loss above {DIVERGENCE_THRESHOLD:e} at epoch {epoch}, batch {bi}"
                ));
                break 'epochs;
            }
            state.steps += 1;
            state.history.push(losses);
            sum.discriminator += losses.discriminator;
            sum.classifier += losses.classifier;
            sum.generator_adversarial += losses.generator_adversarial;
            sum.generator_classification += losses.generator_classification;
            sum.generator_total += losses.generator_total;
        }
        let n = batches.len() as f64;
        let mean = StepLosses {
            discriminator: sum.discriminator / n,
            classifier: sum.classifier / n,
            generator_adversarial: sum.generator_adversarial / n,
            generator_classification: sum.generator_classification / n,
            generator_total: sum.generator_total / n,
        };
        let score = selection_score(&trainer.model.generator, xs, xt, &cfg)?;
        if !score.is_finite() {
            state.halt_reason = Some(format!("non-finite selection score at epoch {epoch}"));
            break;
        }
        let rec = EpochRecord {
            epoch,
            losses: mean,
            selection_score: score,
        };
        log::debug!("epoch {epoch}: score {score:.4} losses {mean:?}");
        on_epoch(&rec);
        state.epochs.push(rec);
        if state.best_score.is_none_or(|b| score < b) {
            state.best_score = Some(score);
            state.best_epoch = Some(epoch);
            best = Some(trainer.model.clone());
        }
    }

    state.degraded = state.halt_reason.is_some();
    if state.degraded {
        log::warn!("training halted: {}", state.halt_reason.as_deref().unwrap_or(""));
    }
    let model = best.unwrap_or(initial);
    Ok(FitOutcome { model, state })
}

impl TrainState {
    /// Tab-separated per-batch loss table with a header row.
    pub fn loss_table(&self) -> String {
        let mut out = String::from("step\td\tc\tg_adv\tg_cls\tg_total\n");
        for (i, l) in self.history.iter().enumerate() {
            out.push_str(&format!(
                "{i}\t{}\t{}\t{}\t{}\t{}\n",
                l.discriminator, l.classifier, l.generator_adversarial, l.generator_classification, l.generator_total
            ));
        }
        out
    }

    /// Tab-separated per-epoch curve: mean losses and selection score.
    pub fn epoch_table(&self) -> String {
        let mut out = String::from("epoch\td\tc\tg_adv\tg_cls\tg_total\tselection_w1\n");
        out.push_str(&format!("0\t\t\t\t\t\t{}\n", self.initial_score));
        for e in &self.epochs {
            let l = &e.losses;
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                e.epoch,
                l.discriminator,
                l.classifier,
                l.generator_adversarial,
                l.generator_classification,
                l.generator_total,
                e.selection_score
            ));
        }
        out
    }
}
