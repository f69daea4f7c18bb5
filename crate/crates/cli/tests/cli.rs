use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn sagan(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sagan"))
        .args(args)
        .current_dir(dir)
        .env_remove("SAGAN_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = sagan(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Short synthetic recordings, preprocessed into `data/`.
fn prepared() -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["synth", "--out", "raw", "--seconds", "40", "--seed", "1"]);
    ok(tmp.path(), &["preprocess", "--input", "raw", "--out", "data"]);
    tmp
}

fn tiny() -> String {
    fixture("tiny.cfg").to_string_lossy().into_owned()
}

#[test]
fn confusion_fixture_weighted_f1() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = fixture("transferred_s1_s2.txt");
    let line = ok(
        tmp.path(),
        &["evaluate", "--confusion", fx.to_str().unwrap(), "--out", "cm.json"],
    );
    assert!(line.contains("weighted F1 0.7177"), "{line}");
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("cm.json")).unwrap()).unwrap();
    let w = v["weighted_f1"].as_f64().unwrap();
    assert!((w - 0.718).abs() <= 0.005);
    assert_eq!(v["config_digest"].as_str().unwrap().len(), 64);
    assert_eq!(v["seed"], 0);
}

#[test]
fn missing_channel_spec_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["synth", "--out", "raw", "--seconds", "20"]);
    std::fs::remove_file(tmp.path().join("raw/channels.spec")).unwrap();
    let out = sagan(tmp.path(), &["preprocess", "--input", "raw", "--out", "data"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("channels.spec"), "{err}");
    assert!(!tmp.path().join("data").exists());
}

#[test]
fn bad_flags_and_config_keys_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(sagan(tmp.path(), &["train"]).status.code(), Some(2));
    assert_eq!(sagan(tmp.path(), &["frobnicate"]).status.code(), Some(2));
    std::fs::write(tmp.path().join("bad.cfg"), "trainer.epoch = 3\n").unwrap();
    let fx = fixture("transferred_s1_s2.txt");
    let out = sagan(
        tmp.path(),
        &["evaluate", "--confusion", fx.to_str().unwrap(), "--config", "bad.cfg"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key trainer.epoch"));
}

#[test]
fn preprocess_rerun_is_byte_identical_and_inputs_untouched() {
    let tmp = prepared();
    let p = tmp.path();
    let snapshot = |dir: &Path| -> Vec<(PathBuf, Vec<u8>)> {
        let mut files = Vec::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for e in std::fs::read_dir(d).unwrap() {
                let path = e.unwrap().path();
                if path.is_dir() {
                    stack.push(path);
                } else {
                    files.push((
                        path.strip_prefix(dir).unwrap().to_path_buf(),
                        std::fs::read(&path).unwrap(),
                    ));
                }
            }
        }
        files.sort();
        files
    };
    let raw_before = snapshot(&p.join("raw"));
    let first = snapshot(&p.join("data"));
    ok(p, &["preprocess", "--input", "raw", "--out", "data"]);
    assert_eq!(snapshot(&p.join("data")), first);
    assert_eq!(snapshot(&p.join("raw")), raw_before);
    assert!(first.iter().any(|(f, _)| f.ends_with("subjects/3/test.ck")));
    let summary = std::fs::read_to_string(p.join("data/preprocess.json")).unwrap();
    assert!(summary.contains("\"config_digest\""));
}

#[test]
fn train_twice_with_same_seed_gives_identical_checkpoints() {
    let tmp = prepared();
    let p = tmp.path();
    let cfg = tiny();
    for out in ["a", "b"] {
        ok(
            p,
            &[
                "train", "--data", "data", "--source", "1", "--target", "2", "--seed", "7", "--config", &cfg, "--out",
                out,
            ],
        );
    }
    let read = |f: &str| std::fs::read(p.join(f)).unwrap();
    assert_eq!(read("a/model.ck"), read("b/model.ck"));
    assert_eq!(read("a/losses.tsv"), read("b/losses.tsv"));
    ok(
        p,
        &[
            "train", "--data", "data", "--source", "1", "--target", "2", "--seed", "8", "--config", &cfg, "--out", "c",
        ],
    );
    assert_ne!(read("a/model.ck"), read("c/model.ck"));
    let losses = String::from_utf8(read("a/losses.tsv")).unwrap();
    assert!(losses.starts_with("# config_digest "));
    assert!(losses.contains("# seed 7\nstep\td\tc\tg_adv\tg_cls\tg_total\n"));
}

#[test]
fn evaluate_report_and_baseline_modes() {
    let tmp = prepared();
    let p = tmp.path();
    let cfg = tiny();
    ok(
        p,
        &[
            "train", "--data", "data", "--source", "1", "--target", "2", "--config", &cfg, "--out", "sg",
        ],
    );
    ok(
        p,
        &[
            "train",
            "--data",
            "data",
            "--source",
            "1",
            "--target",
            "2",
            "--mode",
            "supervised",
            "--config",
            &cfg,
            "--out",
            "sup",
        ],
    );
    let line = ok(
        p,
        &[
            "evaluate",
            "--model",
            "sg/model.ck",
            "--data",
            "data",
            "--target",
            "2",
            "--out",
            "reports/sg.json",
        ],
    );
    assert!(line.starts_with("evaluate: sagan 1 -> 2"), "{line}");
    ok(
        p,
        &[
            "evaluate",
            "--model",
            "sup/model.ck",
            "--data",
            "data",
            "--target",
            "2",
            "--out",
            "reports/sup.json",
        ],
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(p.join("reports/sg.json")).unwrap()).unwrap();
    assert_eq!(report["mode"], "sagan");
    assert!(report["wasserstein"].as_f64().unwrap() > 0.0);
    assert_eq!(report["curve"].as_array().unwrap().len(), 2);
    let r = fixture("reference.txt");
    ok(
        p,
        &[
            "report",
            "--reports",
            "reports",
            "--reference",
            r.to_str().unwrap(),
            "--out",
            "table",
        ],
    );
    let table = std::fs::read_to_string(p.join("table/table.txt")).unwrap();
    let row = table.lines().find(|l| l.starts_with("1 ")).unwrap();
    let cells: Vec<&str> = row.split(" | ").map(str::trim).collect();
    assert_eq!(&cells[..2], ["1", "2"]);
    assert_eq!(&cells[5..7], ["0.59", "0.66"]);
    assert_eq!(cells[3], "-");
    assert!(p.join("table/curves/curve-1-2.tsv").exists());
}

#[test]
fn matrix_report_over_twelve_cells_has_comparison_columns() {
    let tmp = prepared();
    let p = tmp.path();
    let line = ok(
        p,
        &[
            "matrix",
            "--data",
            "data",
            "--config",
            &tiny(),
            "--modes",
            "no-transfer,sagan",
            "--out",
            "mx",
        ],
    );
    assert!(line.contains("24 cells (0 failed)"), "{line}");
    ok(p, &["report", "--reports", "mx/reports", "--out", "rep"]);
    let table = std::fs::read_to_string(p.join("rep/table.txt")).unwrap();
    let mut lines = table.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(" | ").map(str::trim).collect();
    assert_eq!(
        header,
        [
            "Source Subject",
            "Target Subject",
            "Wasserstein Distance",
            "No Transfer",
            "KNN+PCA",
            "GFK",
            "STL",
            "SA-GAN",
            "Supervised Learning"
        ]
    );
    assert_eq!(lines.skip(1).count(), 12);
    assert_eq!(
        std::fs::read(p.join("rep/table.txt")).unwrap(),
        std::fs::read(p.join("mx/table.txt")).unwrap()
    );
    let tsv = std::fs::read_to_string(p.join("rep/table.tsv")).unwrap();
    assert_eq!(tsv.lines().filter(|l| !l.starts_with('#')).count(), 13);
}

#[test]
fn distance_ranks_other_subjects() {
    let tmp = prepared();
    let p = tmp.path();
    ok(p, &["distance", "--data", "data", "--target", "4", "--out", "rank.tsv"]);
    let text = std::fs::read_to_string(p.join("rank.tsv")).unwrap();
    let rows: Vec<Vec<&str>> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split('\t').collect())
        .collect();
    assert_eq!(rows.len(), 3);
    let d: Vec<f64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    assert!(d.windows(2).all(|w| w[0] <= w[1]));
    // Synthetic subjects drift along one direction, so 3 is nearest to 4.
    assert_eq!(rows[0][1], "3");
}

#[test]
fn out_dir_variable_relocates_relative_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let base = tmp.path().join("elsewhere");
    let out = Command::new(env!("CARGO_BIN_EXE_sagan"))
        .args(["synth", "--out", "raw", "--seconds", "20", "--subjects", "2"])
        .current_dir(tmp.path())
        .env("SAGAN_OUT_DIR", &base)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(base.join("raw/S2-ADL5.dat").exists());
    assert!(!tmp.path().join("raw").exists());
}
