use rand::Rng;

use super::*;
use crate::data::Role;
use crate::matrix::Matrix;
use crate::model::SaganModel;
use crate::tensor::OptimizerConfig;

fn clusters(n_per: usize, k: usize, shift: f64, seed: u64) -> Domain {
    let mut rng = crate::rng::stream(seed, &[]);
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for c in 0..3 {
        for _ in 0..n_per {
            for j in 0..k {
                let centre = if j % 3 == c { 0.4 } else { -0.2 };
                data.push(centre + shift + rng.random_range(-0.08..0.08));
            }
            labels.push(c);
        }
    }
    Domain::new(
        Matrix::new(3 * n_per, k, data).unwrap(),
        Some(labels),
        3,
        "s",
        Role::Source,
    )
    .unwrap()
}

fn cfg(epochs: usize) -> SaganConfig {
    SaganConfig {
        d_f: 2,
        d_base_filters: 4,
        g_f: 6,
        c_f: 6,
        n_blocks: 1,
        batch_size: 12,
        epochs,
        select_n_sub: 24,
        select_repeats: 2,
        seed: 11,
        ..SaganConfig::default()
    }
}

#[test]
fn each_substep_leaves_the_other_networks_bitwise_untouched() {
    let src = clusters(8, 9, 0.0, 1);
    let tgt = clusters(8, 9, 0.2, 2);
    let model = SaganModel::new(9, 3, &cfg(1)).unwrap();
    let mut t = Trainer::new(model).unwrap();
    let idx: Vec<usize> = (0..12).map(|i| i * 2).collect();
    let batch = Batch {
        x_s: src.features().select_rows(&idx),
        y_s: idx.iter().map(|&i| src.labels().unwrap()[i]).collect(),
        x_t: tgt.features().select_rows(&idx),
    };
    let x_in = t.noised(&batch, &Matrix::zeros(12, 9)).unwrap();
    let digests = |t: &Trainer| {
        (
            t.model.generator.params().digest(),
            t.model.discriminator.params().digest(),
            t.model.classifier.params().digest(),
        )
    };
    let (g0, d0, c0) = digests(&t);
    t.discriminator_step(&batch, &x_in, 0).unwrap();
    let (g1, d1, c1) = digests(&t);
    assert_eq!((&g0, &c0), (&g1, &c1));
    assert_ne!(d0, d1);
    t.classifier_step(&batch, &x_in, 0).unwrap();
    let (g2, d2, c2) = digests(&t);
    assert_eq!((&g1, &d1), (&g2, &d2));
    assert_ne!(c1, c2);
    t.generator_step(&batch, &x_in, 0).unwrap();
    let (g3, d3, c3) = digests(&t);
    assert_eq!((&d2, &c2), (&d3, &c3));
    assert_ne!(g2, g3);
}

#[test]
fn zero_epochs_return_the_initial_classifier() {
    let src = clusters(6, 6, 0.0, 1);
    let tgt = clusters(6, 6, 0.1, 2).as_target();
    let c = cfg(0);
    let out = fit(&src, &tgt, &c).unwrap();
    let init = SaganModel::new(6, 3, &c).unwrap();
    assert_eq!(out.model.classifier, init.classifier);
    assert!(out.state.epochs.is_empty());
    assert!(!out.state.degraded);
}

#[test]
fn fit_is_deterministic_and_selects_the_best_epoch() {
    let src = clusters(10, 6, 0.0, 3);
    let tgt = clusters(10, 6, 0.3, 4).as_target();
    let a = fit(&src, &tgt, &cfg(3)).unwrap();
    let b = fit(&src, &tgt, &cfg(3)).unwrap();
    assert_eq!(
        a.model.classifier.params().digest(),
        b.model.classifier.params().digest()
    );
    assert_eq!(a.state, b.state);
    let best = a.state.best_epoch.unwrap();
    let scores: Vec<f64> = a.state.epochs.iter().map(|e| e.selection_score).collect();
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(scores[best - 1], min);
    assert_eq!(a.state.steps, 3 * 30usize.div_ceil(12));
}

#[test]
fn target_must_be_unlabeled_role() {
    let src = clusters(5, 6, 0.0, 1);
    assert!(fit(&src, &src, &cfg(1)).is_err());
}

#[test]
fn runaway_losses_flag_the_run_as_degraded() {
    let src = clusters(8, 6, 0.0, 5);
    let tgt = clusters(8, 6, 0.5, 6).as_target();
    let c = SaganConfig {
        c_optimizer: OptimizerConfig::sgd(1e7, 0.9),
        ..cfg(5)
    };
    let out = fit(&src, &tgt, &c).unwrap();
    assert!(out.state.degraded, "{:?}", out.state);
    assert!(out.state.halt_reason.is_some());
    assert!(out.model.classifier.params().is_finite());
}

#[test]
fn supervised_training_fits_separable_data() {
    let d = clusters(20, 6, 0.0, 7);
    let c = SaganConfig {
        c_optimizer: OptimizerConfig::adam(1e-2),
        ..cfg(0)
    };
    let net = train_classifier(&d, &c, 15, 3).unwrap();
    let pred = net.predict(d.features()).unwrap();
    let acc = pred.iter().zip(d.labels().unwrap()).filter(|(a, b)| a == b).count() as f64 / d.len() as f64;
    assert!(acc > 0.9, "accuracy {acc}");
}

#[test]
fn zero_learning_rates_keep_trainable_values() {
    let src = clusters(8, 6, 0.0, 1);
    let tgt = clusters(8, 6, 0.3, 2);
    let c = SaganConfig {
        d_optimizer: OptimizerConfig::sgd(0.0, 0.9),
        c_optimizer: OptimizerConfig::adam(0.0),
        g_optimizer: OptimizerConfig::adam(0.0),
        ..cfg(1)
    };
    let model = SaganModel::new(6, 3, &c).unwrap();
    let before = model.clone();
    let mut t = Trainer::new(model).unwrap();
    let idx: Vec<usize> = (0..12).collect();
    let batch = Batch {
        x_s: src.features().select_rows(&idx),
        y_s: idx.iter().map(|&i| src.labels().unwrap()[i]).collect(),
        x_t: tgt.features().select_rows(&idx),
    };
    let l = t.train_step(&batch, &Matrix::zeros(12, 6), 0).unwrap();
    assert!(l.discriminator > 0.0 && l.classifier > 0.0 && l.generator_total > 0.0);
    for (a, b) in [
        (before.generator.params(), t.model.generator.params()),
        (before.discriminator.params(), t.model.discriminator.params()),
        (before.classifier.params(), t.model.classifier.params()),
    ] {
        for ((n, x), (_, y)) in a.iter().zip(b.iter()) {
            if x.requires_grad() {
                assert_eq!(x.data(), y.data(), "{n}");
            }
        }
    }
}

#[test]
fn loss_tables_have_one_row_per_step_and_epoch() {
    let src = clusters(6, 6, 0.0, 1);
    let tgt = clusters(6, 6, 0.2, 2).as_target();
    let out = fit(&src, &tgt, &cfg(2)).unwrap();
    assert_eq!(out.state.loss_table().lines().count(), 1 + out.state.steps);
    assert_eq!(out.state.epoch_table().lines().count(), 2 + 2);
}

#[test]
fn classifier_term_keeps_generated_classes_apart() {
    // Two linearly separable classes; after training the class means of
    // G's outputs stay at least half as far apart as the inputs.
    let mut rng = crate::rng::stream(21, &[]);
    let (n, k) = (40, 8);
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let c = i % 2;
        for _ in 0..k {
            data.push(if c == 0 { -0.3 } else { 0.3 } + rng.random_range(-0.05..0.05));
        }
        labels.push(c);
    }
    let x = Matrix::new(n, k, data).unwrap();
    let src = Domain::new(x.clone(), Some(labels.clone()), 2, "s", Role::Source).unwrap();
    let tgt = Domain::new(x.translated(&[0.2; 8]).unwrap(), None, 2, "t", Role::Target).unwrap();
    let out = fit(
        &src,
        &tgt,
        &SaganConfig {
            batch_size: 10,
            ..cfg(8)
        },
    )
    .unwrap();
    let fake = out
        .model
        .generator
        .generate(&x, &Matrix::zeros(n, k), crate::model::NetMode::Eval)
        .unwrap();
    let sep = |m: &Matrix| {
        let mut mean = [vec![0.0; k], vec![0.0; k]];
        for (row, &c) in m.iter_rows().zip(&labels) {
            for (a, v) in mean[c].iter_mut().zip(row) {
                *a += v / (n / 2) as f64;
            }
        }
        crate::matrix::euclidean(&mean[0], &mean[1])
    };
    assert!(sep(&fake) >= 0.5 * sep(&x), "{} vs {}", sep(&fake), sep(&x));
}
