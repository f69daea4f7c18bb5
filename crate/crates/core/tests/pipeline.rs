use sagan_core::config::RunConfig;
use sagan_core::data::{assemble_domains, load_directory, ChannelSpec, LabelMap, PipelineConfig};
use sagan_core::distance::rank_sources;
use sagan_core::eval::{evaluate, run_matrix, Mode};
use sagan_core::model::{SaganConfig, SaganModel};
use sagan_core::synth::{synth_recordings, RecordingSynthSpec};
use sagan_core::trainer::fit;

fn small_sagan() -> SaganConfig {
    SaganConfig {
        d_base_filters: 4,
        g_f: 8,
        c_f: 8,
        n_blocks: 1,
        batch_size: 32,
        epochs: 2,
        select_n_sub: 64,
        select_repeats: 2,
        ..SaganConfig::default()
    }
}

#[test]
fn raw_files_to_evaluated_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let spec = RecordingSynthSpec {
        seconds_per_file: 40.0,
        seed: 3,
        ..RecordingSynthSpec::default()
    };
    let out = synth_recordings(&spec, dir.path()).unwrap();
    assert_eq!(out.recordings.len(), 4 * 5);

    let channels = ChannelSpec::load(&out.channel_spec).unwrap();
    let labels = LabelMap::load(&out.label_map).unwrap();
    let cfg = PipelineConfig {
        pca_dims: 24,
        ..PipelineConfig::default()
    };
    let recs = load_directory(dir.path(), &channels, &labels, cfg.sample_rate_hz).unwrap();
    let assembled = assemble_domains(&recs, labels.n_classes(), &cfg).unwrap();
    assert_eq!(assembled.space.k(), 24);
    assert_eq!(assembled.subjects.len(), 4);
    let s1 = &assembled.subjects["1"];
    let s2 = &assembled.subjects["2"];
    assert_eq!(s1.train.dim(), 24);

    let candidates: Vec<_> = ["1", "2", "3"]
        .iter()
        .map(|s| assembled.subjects[*s].train.clone())
        .collect();
    let ranked = rank_sources(&assembled.subjects["4"].train, &candidates, 64, 2, 0).unwrap();
    assert_eq!(ranked[0].0, "3");

    let run = fit(&s1.train, &s2.train.as_target(), &small_sagan()).unwrap();
    assert_eq!(run.state.epochs.len(), 2);
    assert!(!run.state.degraded);
    let before = evaluate(&run.model.classifier, &s2.test).unwrap();

    let ck = dir.path().join("model.ck");
    run.model.save(&ck).unwrap();
    let loaded = SaganModel::load(&ck).unwrap();
    let after = evaluate(&loaded.classifier, &s2.test).unwrap();
    assert_eq!(before, after);
}

#[test]
fn matrix_cells_are_deterministic_and_stamped() {
    let dir = tempfile::tempdir().unwrap();
    let spec = RecordingSynthSpec {
        n_subjects: 2,
        seconds_per_file: 30.0,
        seed: 5,
        ..RecordingSynthSpec::default()
    };
    let out = synth_recordings(&spec, dir.path()).unwrap();
    let channels = ChannelSpec::load(&out.channel_spec).unwrap();
    let labels = LabelMap::load(&out.label_map).unwrap();
    let mut run_cfg = RunConfig::default();
    for (k, v) in [
        ("pipeline.pca_dims", "16"),
        ("trainer.epochs", "1"),
        ("eval.classifier_epochs", "2"),
    ] {
        run_cfg.set(k, v).unwrap();
    }
    run_cfg.model = SaganConfig {
        epochs: 1,
        ..small_sagan()
    };
    let recs = load_directory(dir.path(), &channels, &labels, 30.0).unwrap();
    let assembled = assemble_domains(&recs, labels.n_classes(), &run_cfg.pipeline).unwrap();
    let bench = run_cfg.bench();
    let modes = [Mode::NoTransfer, Mode::Sagan];
    let a = run_matrix(&assembled.subjects, &modes, &bench).unwrap();
    let b = run_matrix(&assembled.subjects, &modes, &bench).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 2 * 2);
    for cell in &a {
        let report = cell.outcome.as_ref().unwrap();
        assert_eq!(report.config_digest, run_cfg.digest());
        assert_eq!(report.seed, run_cfg.seed);
        assert!((0.0..=1.0).contains(&report.weighted_f1));
    }
}
