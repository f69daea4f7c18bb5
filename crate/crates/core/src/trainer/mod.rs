//! Alternating adversarial training with W1-based model selection.

mod batches;
mod fit;
mod step;

use crate::data::Domain;
use crate::error::{Error, Result};
use crate::model::losses::one_hot;
use crate::model::{ClassifierNet, NetMode, Network, SaganConfig};
use crate::rng::{stream, tag};
use crate::tensor::{Graph, Optimizer};

pub use batches::make_batches;
pub use fit::{fit, fit_from, selection_score, EpochRecord, FitOutcome, TrainState, DIVERGENCE_THRESHOLD};
pub use step::{Batch, StepLosses, Trainer};

/// Plain cross-entropy training of a classifier on one labeled domain, with
/// the same architecture and optimizer settings as the adversarial one.
pub fn train_classifier(train: &Domain, cfg: &SaganConfig, epochs: usize, seed: u64) -> Result<ClassifierNet> {
    cfg.validate()?;
    let labels = train
        .labels()
        .ok_or_else(|| Error::invalid(format!("{} has no labels", train.subject_id())))?;
    let x = train.features();
    let mut net = ClassifierNet::new(train.dim(), train.n_classes(), cfg, seed)?;
    let mut opt = Optimizer::new(cfg.c_optimizer)?;
    let m = cfg.batch_size.min(x.rows());
    if m < 2 {
        return Err(Error::invalid("need at least two labeled windows"));
    }
    for epoch in 0..epochs {
        let mut rng = stream(seed, &[tag("supervised"), epoch as u64]);
        for (bi, (idx, _)) in make_batches(x.rows(), x.rows(), m, &mut rng)?.iter().enumerate() {
            let xb = x.select_rows(idx);
            let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let y = one_hot(&y, train.n_classes())?;
            let mut g = Graph::new();
            let b = net.params().bind(&mut g, true);
            let xv = g.leaf(vec![xb.rows(), xb.cols()], xb.into_data(), false);
            let f = net.forward(&mut g, &b, xv, NetMode::Train)?;
            let loss = g.softmax_cross_entropy(f.out, &y)?;
            if !g.scalar_value(loss).is_finite() {
                return Err(Error::NonFinite {
                    step: "classifier",
                    batch: bi,
                });
            }
            g.backward(loss)?;
            net.params_mut().accumulate_grads(&g, &b)?;
            opt.step(net.params_mut())?;
            net.absorb(&f.stats)?;
        }
    }
    Ok(net)
}

#[cfg(test)]
mod tests;
