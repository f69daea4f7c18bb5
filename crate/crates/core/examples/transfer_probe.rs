//! Runs the translated-pair benchmark for a few seeds and prints the target
//! weighted F1 of the no-transfer, SA-GAN and supervised classifiers.
//!
//! ```sh
//! cargo run --release -p sagan-core --example transfer_probe -- 3.5 5 60 30
//! ```
//!
//! Arguments, all optional: shift magnitude, seeds, GAN epochs, classifier epochs.

use std::time::Instant;

use sagan_core::eval::evaluate;
use sagan_core::model::SaganConfig;
use sagan_core::synth::TranslatedPair;
use sagan_core::trainer::{fit, train_classifier};

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args().nth(i).and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn main() -> sagan_core::Result<()> {
    let magnitude: f64 = arg(1, 3.5);
    let seeds: u64 = arg(2, 3);
    let epochs: usize = arg(3, 60);
    let classifier_epochs: usize = arg(4, 30);
    for seed in 0..seeds {
        let t0 = Instant::now();
        let (src, tgt) = TranslatedPair {
            magnitude,
            seed,
            ..TranslatedPair::default()
        }
        .build()?;
        let cfg = SaganConfig {
            epochs,
            seed,
            ..SaganConfig::default()
        };
        let nt = train_classifier(&src.train, &cfg, classifier_epochs, seed)?;
        let sup = train_classifier(&tgt.train, &cfg, classifier_epochs, seed)?;
        let out = fit(&src.train, &tgt.train.as_target(), &cfg)?;
        println!(
            "seed {seed}: no-transfer {:.3}  sagan {:.3}  supervised {:.3}  (best epoch {:?}, {:.1}s)",
            evaluate(&nt, &tgt.test)?.weighted_f1,
            evaluate(&out.model.classifier, &tgt.test)?.weighted_f1,
            evaluate(&sup, &tgt.test)?.weighted_f1,
            out.state.best_epoch,
            t0.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
