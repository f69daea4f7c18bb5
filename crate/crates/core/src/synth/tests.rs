use super::*;
use crate::data::{assemble_domains, load_directory, ChannelSpec, LabelMap, PipelineConfig};
use crate::distance::{rank_sources, w1_estimate, w1_exact};

#[test]
fn class_means_match_prototypes() {
    let spec = SubjectSpec::base("a", 4, 3, 2000, 0.1, 1).unwrap();
    let d = synth_domain(&spec).unwrap();
    assert_eq!(d.len(), 6000);
    let labels = d.labels().unwrap();
    for c in 0..3 {
        let rows: Vec<usize> = (0..d.len()).filter(|&i| labels[i] == c).collect();
        let means = d.features().select_rows(&rows).column_means();
        for (m, p) in means.iter().zip(spec.prototypes.row(c)) {
            // 5 standard errors of sigma / sqrt(n).
            assert!((m - p).abs() < 5.0 * 0.1 / (2000f64).sqrt(), "{m} vs {p}");
        }
    }
}

#[test]
fn deterministic_per_seed() {
    let spec = SubjectSpec::base("a", 5, 3, 40, 0.1, 9).unwrap();
    assert_eq!(synth_domain(&spec).unwrap(), synth_domain(&spec).unwrap());
    let other = SubjectSpec {
        seed: 10,
        ..spec.clone()
    };
    assert_ne!(synth_domain(&spec).unwrap(), synth_domain(&other).unwrap());
}

#[test]
fn rejects_degenerate_specs() {
    assert!(SubjectSpec::base("a", 1, 3, 10, 0.1, 0).is_err());
    assert!(SubjectSpec::base("a", 3, 1, 10, 0.1, 0).is_err());
    assert!(SubjectSpec::base("a", 3, 2, 10, 0.0, 0).is_err());
    let mut s = SubjectSpec::base("a", 3, 2, 10, 0.1, 0).unwrap();
    s.transform.row_mut(2)[2] = 1e-3;
    assert!(synth_domain(&s).is_err());
    s.transform.row_mut(2)[2] = 0.02;
    assert!(synth_domain(&s).is_ok());
    let s = SubjectSpec {
        label_noise: 0.5,
        ..SubjectSpec::base("a", 3, 2, 10, 0.1, 0).unwrap()
    };
    assert!(synth_domain(&s).is_err());
}

#[test]
fn label_noise_rate_is_respected() {
    let spec = SubjectSpec {
        label_noise: 0.2,
        ..SubjectSpec::base("a", 3, 4, 2500, 0.01, 3).unwrap()
    };
    let d = synth_domain(&spec).unwrap();
    // Without noise each sample sits next to its prototype, so the nearest
    // prototype reveals the generating class.
    let flipped = d
        .features()
        .iter_rows()
        .zip(d.labels().unwrap())
        .filter(|(x, &l)| {
            let nearest = (0..4)
                .min_by(|&a, &b| {
                    crate::matrix::euclidean(x, spec.prototypes.row(a))
                        .total_cmp(&crate::matrix::euclidean(x, spec.prototypes.row(b)))
                })
                .unwrap();
            nearest != l
        })
        .count() as f64
        / d.len() as f64;
    assert!((flipped - 0.2).abs() < 0.02, "{flipped}");
}

#[test]
fn translation_distance_tracks_offset_norm() {
    let base = SubjectSpec::base("a", 2, 3, 171, 0.05, 4).unwrap();
    let c = [1.2, -1.6];
    let moved = base.translated("b", &c, 99).unwrap();
    let (a, b) = (synth_domain(&base).unwrap(), synth_domain(&moved).unwrap());
    let n = 512;
    let idx: Vec<usize> = (0..n).collect();
    let (w, _) = w1_exact(&a.features().select_rows(&idx), &b.features().select_rows(&idx)).unwrap();
    assert!((w - 2.0).abs() < 0.2, "{w}");
}

#[test]
fn family_distance_is_monotone_and_ranked() {
    let base = SubjectSpec::base("base", 8, 3, 60, 0.1, 5).unwrap();
    let fam = shift_family(&base, &[0.0, 1.0, 5.0, 9.0]).unwrap();
    let target = synth_domain(&base).unwrap().as_target();
    let doms: Vec<_> = fam.iter().map(|s| synth_domain(s).unwrap()).collect();
    let ws: Vec<f64> = doms
        .iter()
        .map(|d| w1_estimate(d.features(), target.features(), 100, 3, 1).unwrap())
        .collect();
    assert!(ws.windows(2).all(|w| w[0] <= w[1]), "{ws:?}");
    let ranked = rank_sources(&target, &doms[1..], 100, 3, 1).unwrap();
    let ids: Vec<&str> = ranked.iter().map(|r| r.0.as_str()).collect();
    assert_eq!(ids, ["base-m1", "base-m2", "base-m3"]);
    assert!(shift_family(&base, &[2.0, 1.0]).is_err());
    assert!(shift_family(&base, &[-1.0]).is_err());
}

#[test]
fn recordings_roundtrip_through_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let spec = RecordingSynthSpec {
        n_subjects: 2,
        seconds_per_file: 40.0,
        ..RecordingSynthSpec::default()
    };
    let out = synth_recordings(&spec, dir.path()).unwrap();
    assert_eq!(out.recordings.len(), 10);
    let cs = ChannelSpec::load(&out.channel_spec).unwrap();
    let lm = LabelMap::load(&out.label_map).unwrap();
    let recs = load_directory(dir.path(), &cs, &lm, 30.0).unwrap();
    assert_eq!(recs.len(), 10);
    let cfg = PipelineConfig {
        pca_dims: 20,
        ..PipelineConfig::default()
    };
    let a = assemble_domains(&recs, lm.n_classes(), &cfg).unwrap();
    assert_eq!(a.subjects.len(), 2);
    for s in a.subjects.values() {
        for d in [&s.train, &s.validation, &s.test] {
            assert_eq!(d.dim(), 20);
            assert!(!d.is_empty());
        }
    }
    let again = tempfile::tempdir().unwrap();
    synth_recordings(&spec, again.path()).unwrap();
    for p in &out.recordings {
        let q = again.path().join(p.file_name().unwrap());
        assert_eq!(std::fs::read(p).unwrap(), std::fs::read(q).unwrap());
    }
}

#[test]
fn translated_pair_is_deterministic_and_shifted() {
    let p = TranslatedPair {
        samples_per_class: 30,
        noise_sigma: 0.1,
        magnitude: 1.5,
        ..TranslatedPair::default()
    };
    let (s, t) = p.build().unwrap();
    assert_eq!(p.build().unwrap(), (s.clone(), t.clone()));
    assert_eq!(s.train.len(), 180);
    assert_eq!(t.test.role(), crate::data::Role::Test);
    assert_ne!(s.train.features(), s.test.features());
    let mean = |d: &Domain| -> Vec<f64> {
        let x = d.features();
        (0..x.cols())
            .map(|j| (0..x.rows()).map(|i| x.row(i)[j]).sum::<f64>() / x.rows() as f64)
            .collect()
    };
    let shift: f64 = mean(&t.train)
        .iter()
        .zip(mean(&s.train))
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    assert!((shift - 1.5).abs() < 0.1, "{shift}");
}
