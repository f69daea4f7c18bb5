use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use sagan_core::config::RunConfig;
use sagan_core::data::{assemble_domains, load_directory, ChannelSpec, Domain, LabelMap, SubjectSplits};
use sagan_core::distance::{rank_sources, w1_estimate};
use sagan_core::eval::{
    curve_table, evaluate as score, render_table, run_matrix, table_rows, ConfusionMatrix, EvalReport, Evaluation,
    Mode, ReferenceTable,
};
use sagan_core::io::read_to_string;
use sagan_core::model::ClassifierNet;
use sagan_core::rng::{derive_seed, tag};
use sagan_core::synth::{synth_recordings, RecordingSynthSpec, CHANNEL_SPEC_FILE, LABEL_MAP_FILE};
use sagan_core::tensor::{read_container, Container};
use sagan_core::trainer::{fit, train_classifier, EpochRecord};
use serde_json::json;

use crate::error::{usage, CliError, CliResult};
use crate::output::{self, resolve, Stamp};
use crate::ConfigArgs;

const SPLITS: [&str; 3] = ["train", "validation", "test"];
const FEATURE_SPACE_FILE: &str = "feature_space.ck";
const MODEL_FILE: &str = "model.ck";

fn stamp(cfg: &RunConfig) -> Stamp {
    Stamp {
        digest: cfg.digest(),
        seed: cfg.seed,
    }
}

fn domain_path(data: &Path, subject: &str, split: &str) -> PathBuf {
    data.join("subjects").join(subject).join(format!("{split}.ck"))
}

fn subjects_in(data: &Path) -> CliResult<Vec<String>> {
    let dir = data.join("subjects");
    let entries =
        std::fs::read_dir(&dir).map_err(|e| usage(format!("{}: {e} (run `sagan preprocess` first)", dir.display())))?;
    let mut ids: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    ids.sort();
    Ok(ids)
}

fn load_domain(data: &Path, subject: &str, split: &str) -> CliResult<Domain> {
    let path = domain_path(data, subject, split);
    if !path.exists() {
        let known = subjects_in(data).unwrap_or_default().join(", ");
        return Err(usage(format!(
            "no {split} split for subject {subject:?} in {} (known: {known})",
            data.display()
        )));
    }
    Ok(Domain::from_container(&read_container(&path)?)?)
}

fn load_splits(data: &Path, subject: &str) -> CliResult<SubjectSplits> {
    Ok(SubjectSplits {
        train: load_domain(data, subject, "train")?,
        validation: load_domain(data, subject, "validation")?,
        test: load_domain(data, subject, "test")?,
    })
}

fn pair_w1(cfg: &RunConfig, source: &Domain, target: &Domain) -> CliResult<f64> {
    let (a, b) = (source.features(), target.features());
    let n = cfg.w1_n_sub.min(a.rows()).min(b.rows());
    let seed = derive_seed(
        cfg.seed,
        &[tag("w1"), tag(source.subject_id()), tag(target.subject_id())],
    );
    Ok(w1_estimate(a, b, n, cfg.w1_repeats, seed)?)
}

// ---------------------------------------------------------------- synth

#[derive(Args)]
pub struct SynthArgs {
    /// Directory receiving the recordings, channel spec and label map.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    subjects: usize,
    #[arg(long, default_value_t = 6)]
    channels: usize,
    #[arg(long, default_value_t = 6)]
    classes: usize,
    #[arg(long, default_value_t = 30.0)]
    rate_hz: f64,
    /// Length of each ADL session in seconds.
    #[arg(long, default_value_t = 120.0)]
    seconds: f64,
    /// Per-subject offset step in raw sensor units.
    #[arg(long, default_value_t = 60.0)]
    shift: f64,
    /// Standard deviation of additive sensor noise, raw units.
    #[arg(long, default_value_t = 25.0)]
    noise: f64,
    /// Fraction of cells written as missing values.
    #[arg(long, default_value_t = 0.01)]
    missing_rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn synth(a: SynthArgs) -> CliResult<String> {
    let spec = RecordingSynthSpec {
        n_subjects: a.subjects,
        channels: a.channels,
        n_classes: a.classes,
        sample_rate_hz: a.rate_hz,
        seconds_per_file: a.seconds,
        shift: a.shift,
        noise: a.noise,
        missing_rate: a.missing_rate,
        seed: a.seed,
    };
    spec.validate().map_err(|e| usage(e.to_string()))?;
    let out = resolve(&a.out);
    let written = synth_recordings(&spec, &out)?;
    Ok(format!(
        "synth: {} recordings for {} subjects in {} (digest {}, seed {})",
        written.recordings.len(),
        spec.n_subjects,
        out.display(),
        &spec.digest()[..12],
        spec.seed
    ))
}

// ---------------------------------------------------------------- preprocess

#[derive(Args)]
pub struct PreprocessArgs {
    /// Directory of `S<subject>-ADL<session>.dat` files.
    #[arg(long)]
    input: PathBuf,
    /// Defaults to `<input>/channels.spec`.
    #[arg(long)]
    channel_spec: Option<PathBuf>,
    /// Defaults to `<input>/labels.map`.
    #[arg(long)]
    label_map: Option<PathBuf>,
    /// Directory receiving the feature space and per-subject split files.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

pub fn preprocess(a: PreprocessArgs) -> CliResult<String> {
    let cfg = a.config.resolve()?;
    let spec_path = a.channel_spec.unwrap_or_else(|| a.input.join(CHANNEL_SPEC_FILE));
    let map_path = a.label_map.unwrap_or_else(|| a.input.join(LABEL_MAP_FILE));
    for (what, p) in [("channel spec", &spec_path), ("label map", &map_path)] {
        if !p.is_file() {
            return Err(usage(format!("missing {what}: {}", p.display())));
        }
    }
    let spec = ChannelSpec::load(&spec_path)?;
    let labels = LabelMap::load(&map_path)?;
    let recordings = load_directory(&a.input, &spec, &labels, cfg.pipeline.sample_rate_hz)?;
    let assembled = assemble_domains(&recordings, labels.n_classes(), &cfg.pipeline)?;

    let out = resolve(&a.out);
    let st = stamp(&cfg);
    output::container(&out.join(FEATURE_SPACE_FILE), &st, assembled.space.to_container())?;
    let mut counts = BTreeMap::new();
    for (id, s) in &assembled.subjects {
        for (split, d) in SPLITS.iter().zip([&s.train, &s.validation, &s.test]) {
            output::container(&domain_path(&out, id, split), &st, d.to_container())?;
        }
        counts.insert(
            id.clone(),
            json!({"train": s.train.len(), "validation": s.validation.len(), "test": s.test.len()}),
        );
    }
    output::json(
        &out.join("preprocess.json"),
        &json!({
            "config_digest": st.digest,
            "seed": st.seed,
            "recordings": recordings.len(),
            "raw_dim": assembled.space.d_raw(),
            "dim": assembled.space.k(),
            "subjects": counts,
        }),
    )?;
    Ok(format!(
        "preprocess: {} recordings -> {} subjects, {} features, written to {}",
        recordings.len(),
        assembled.subjects.len(),
        assembled.space.k(),
        out.display()
    ))
}

// ---------------------------------------------------------------- distance

#[derive(Args)]
pub struct DistanceArgs {
    /// Output directory of `sagan preprocess`.
    #[arg(long)]
    data: PathBuf,
    /// Subject to rank the candidates against.
    #[arg(long)]
    target: String,
    /// Comma-separated candidate sources; defaults to every other subject.
    #[arg(long, value_delimiter = ',')]
    sources: Vec<String>,
    /// Ranking table (TSV).
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

pub fn distance(a: DistanceArgs) -> CliResult<String> {
    let cfg = a.config.resolve()?;
    let target = load_domain(&a.data, &a.target, "train")?;
    let sources = if a.sources.is_empty() {
        subjects_in(&a.data)?.into_iter().filter(|s| *s != a.target).collect()
    } else {
        a.sources.clone()
    };
    if sources.is_empty() {
        return Err(usage("no candidate sources"));
    }
    let candidates: Vec<Domain> = sources
        .iter()
        .map(|s| load_domain(&a.data, s, "train"))
        .collect::<CliResult<_>>()?;
    let seed = derive_seed(cfg.seed, &[tag("rank"), tag(&a.target)]);
    let ranked = rank_sources(&target, &candidates, cfg.w1_n_sub, cfg.w1_repeats, seed)?;
    let mut body = String::from("rank\tsource\ttarget\tw1\n");
    for (i, (s, d)) in ranked.iter().enumerate() {
        body.push_str(&format!("{}\t{s}\t{}\t{d}\n", i + 1, a.target));
    }
    output::text(&resolve(&a.out), &stamp(&cfg), &body)?;
    let (best, d) = &ranked[0];
    Ok(format!(
        "distance: closest source to {} is {best} (w1 {d:.4}) among {}",
        a.target,
        ranked.len()
    ))
}

// ---------------------------------------------------------------- train

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TrainMode {
    Sagan,
    NoTransfer,
    Supervised,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Output directory of `sagan preprocess`.
    #[arg(long)]
    data: PathBuf,
    /// Labeled source subject.
    #[arg(long)]
    source: String,
    /// Target subject; only its unlabeled training windows are used in
    /// `sagan` mode.
    #[arg(long)]
    target: String,
    /// `no-transfer` trains a plain classifier on the source, `supervised`
    /// on the labeled target.
    #[arg(long, value_enum, default_value = "sagan")]
    mode: TrainMode,
    /// Directory for the checkpoint and loss tables.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

pub fn train(a: TrainArgs) -> CliResult<String> {
    let cfg = a.config.resolve()?;
    if a.source == a.target {
        return Err(usage("source and target must differ"));
    }
    let source = load_domain(&a.data, &a.source, "train")?;
    let target = load_domain(&a.data, &a.target, "train")?;
    let out = resolve(&a.out);
    let st = stamp(&cfg);
    let sc = cfg.sagan();
    let with_run = |c: Container, mode: Mode| {
        c.with_meta("run_config", cfg.canonical())
            .with_meta("mode", mode.as_str())
            .with_meta("source", a.source.clone())
            .with_meta("target", a.target.clone())
    };
    match a.mode {
        TrainMode::Sagan => {
            let res = fit(&source, &target.as_target(), &sc)?;
            let s = &res.state;
            let curve = serde_json::to_string(&s.epochs).map_err(|e| CliError::Compute(e.to_string()))?;
            let c = with_run(res.model.to_container()?, Mode::Sagan)
                .with_meta("curve", curve)
                .with_meta("degraded", s.degraded.to_string());
            output::container(&out.join(MODEL_FILE), &st, c)?;
            output::text(&out.join("losses.tsv"), &st, &s.loss_table())?;
            output::text(&out.join("epochs.tsv"), &st, &s.epoch_table())?;
            output::json(
                &out.join("train.json"),
                &json!({
                    "config_digest": st.digest,
                    "seed": st.seed,
                    "mode": "sagan",
                    "source": a.source,
                    "target": a.target,
                    "steps": s.steps,
                    "initial_score": s.initial_score,
                    "best_epoch": s.best_epoch,
                    "best_score": s.best_score,
                    "degraded": s.degraded,
                    "halt_reason": s.halt_reason,
                }),
            )?;
            let flag = if s.degraded { " [degraded]" } else { "" };
            Ok(format!(
                "train: {} -> {}: {} steps, best epoch {:?} (w1 {:.4}, initial {:.4}){flag}; wrote {}",
                a.source,
                a.target,
                s.steps,
                s.best_epoch,
                s.best_score.unwrap_or(s.initial_score),
                s.initial_score,
                out.join(MODEL_FILE).display()
            ))
        }
        TrainMode::NoTransfer | TrainMode::Supervised => {
            let (mode, on) = match a.mode {
                TrainMode::NoTransfer => (Mode::NoTransfer, &source),
                _ => (Mode::Supervised, &target),
            };
            let seed = derive_seed(cfg.seed, &[tag(mode.as_str()), tag(on.subject_id())]);
            let net = train_classifier(on, &sc, cfg.classifier_epochs, seed)?;
            output::container(&out.join(MODEL_FILE), &st, with_run(net.to_container(&sc)?, mode))?;
            Ok(format!(
                "train: {mode} classifier on subject {} ({} windows); wrote {}",
                on.subject_id(),
                on.len(),
                out.join(MODEL_FILE).display()
            ))
        }
    }
}

// ---------------------------------------------------------------- evaluate

#[derive(Args)]
pub struct EvaluateArgs {
    /// Checkpoint written by `sagan train`.
    #[arg(long, conflicts_with = "confusion", requires_all = ["data", "target"])]
    model: Option<PathBuf>,
    /// Output directory of `sagan preprocess`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Subject whose test split is scored.
    #[arg(long)]
    target: Option<String>,
    /// Score a confusion-matrix text file (rows = true class) instead.
    #[arg(long, required_unless_present = "model")]
    confusion: Option<PathBuf>,
    /// Report file (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

fn meta<'a>(c: &'a Container, key: &str) -> Option<&'a str> {
    c.meta.get(key).map(String::as_str)
}

pub fn evaluate(a: EvaluateArgs) -> CliResult<String> {
    if let Some(path) = &a.confusion {
        let cfg = a.config.resolve()?;
        let cm =
            ConfusionMatrix::parse(&read_to_string(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let ev = Evaluation::from_confusion(cm)?;
        if let Some(out) = &a.out {
            let st = stamp(&cfg);
            output::json(
                &resolve(out),
                &json!({
                    "config_digest": st.digest,
                    "seed": st.seed,
                    "weighted_f1": ev.weighted_f1,
                    "per_class": ev.per_class,
                    "confusion": ev.confusion,
                }),
            )?;
        }
        return Ok(format!(
            "evaluate: weighted F1 {:.4} over {} windows, {} classes",
            ev.weighted_f1,
            ev.confusion.total(),
            ev.confusion.k()
        ));
    }

    let (Some(model), Some(data), Some(target)) = (&a.model, &a.data, &a.target) else {
        return Err(usage("evaluate needs --model, --data and --target, or --confusion"));
    };
    let c = read_container(model)?;
    let (net, _) = ClassifierNet::from_container(&c)?;
    // The checkpoint's own configuration defines the report's identity.
    let cfg = match meta(&c, "run_config") {
        Some(text) => RunConfig::parse(text)?,
        None => a.config.resolve()?,
    };
    let mode: Mode = meta(&c, "mode").unwrap_or("sagan").parse()?;
    let source_id = meta(&c, "source").unwrap_or("-").to_string();
    let test = load_domain(data, target, "test")?;
    let ev = score(&net, &test)?;
    let mut report = EvalReport::new(source_id.clone(), target.clone(), mode, ev, cfg.seed, cfg.digest());
    if source_id != "-" && source_id != *target {
        report.wasserstein = Some(pair_w1(
            &cfg,
            &load_domain(data, &source_id, "train")?,
            &load_domain(data, target, "train")?,
        )?);
    }
    report.degraded = meta(&c, "degraded") == Some("true");
    if let Some(curve) = meta(&c, "curve") {
        report.curve = Some(serde_json::from_str::<Vec<EpochRecord>>(curve).map_err(|e| usage(format!("curve: {e}")))?);
    }
    let out = resolve(a.out.as_deref().unwrap_or(Path::new("report.json")));
    sagan_core::io::write_atomic(&out, report.to_json()?.as_bytes())?;
    Ok(format!(
        "evaluate: {mode} {source_id} -> {target}: weighted F1 {:.4} on {} test windows; wrote {}",
        report.weighted_f1,
        test.len(),
        out.display()
    ))
}

// ---------------------------------------------------------------- report

#[derive(Args)]
pub struct ReportArgs {
    /// Report files or directories containing `*.json` reports.
    #[arg(long, required = true, num_args = 1..)]
    reports: Vec<PathBuf>,
    /// Reference scores for methods not recomputed here (GFK, STL).
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Directory for `table.txt`, `table.tsv` and `curves/`.
    #[arg(long)]
    out: PathBuf,
}

fn collect_reports(paths: &[PathBuf]) -> CliResult<Vec<EvalReport>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let entries = std::fs::read_dir(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            for e in entries.filter_map(|e| e.ok()) {
                let name = e.file_name().to_string_lossy().into_owned();
                // Skip in-flight temporaries of concurrent writers.
                if name.ends_with(".json") && !name.starts_with(".tmp-") {
                    files.push(e.path());
                }
            }
        } else {
            files.push(p.clone());
        }
    }
    files.sort();
    let mut out = Vec::new();
    for f in files {
        let text = read_to_string(&f)?;
        // Directories may hold other JSON (train.json, preprocess.json).
        match EvalReport::from_json(&text) {
            Ok(r) => out.push(r),
            Err(e) if paths.contains(&f) => return Err(usage(format!("{}: {e}", f.display()))),
            Err(_) => {}
        }
    }
    if out.is_empty() {
        return Err(usage("no evaluation reports found"));
    }
    Ok(out)
}

fn write_table(out: &Path, reports: &[EvalReport], reference: &ReferenceTable) -> CliResult<()> {
    let digests: BTreeSet<&str> = reports.iter().map(|r| r.config_digest.as_str()).collect();
    let seeds: BTreeSet<u64> = reports.iter().map(|r| r.seed).collect();
    let seeds: Vec<String> = seeds.iter().map(u64::to_string).collect();
    let header = format!(
        "# config_digest {}\n# seed {}\n",
        digests.into_iter().collect::<Vec<_>>().join(","),
        seeds.join(",")
    );
    let table = render_table(reports, reference);
    sagan_core::io::write_atomic(&out.join("table.txt"), format!("{header}{table}").as_bytes())?;

    let fmt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    let mut tsv = header.clone() + &sagan_core::eval::TABLE_COLUMNS.join("\t") + "\n";
    for r in table_rows(reports, reference) {
        let mut cells = vec![r.source, r.target, fmt(r.wasserstein)];
        cells.extend(r.scores.iter().map(|s| fmt(*s)));
        tsv += &(cells.join("\t") + "\n");
    }
    sagan_core::io::write_atomic(&out.join("table.tsv"), tsv.as_bytes())?;

    for r in reports {
        if let Some(curve) = &r.curve {
            let name = format!("curve-{}-{}.tsv", r.source_id, r.target_id);
            let body = format!(
                "# config_digest {}\n# seed {}\n{}",
                r.config_digest,
                r.seed,
                curve_table(curve)
            );
            sagan_core::io::write_atomic(&out.join("curves").join(name), body.as_bytes())?;
        }
    }
    Ok(())
}

fn load_reference(p: &Option<PathBuf>) -> CliResult<ReferenceTable> {
    match p {
        Some(p) => ReferenceTable::parse(&read_to_string(p)?).map_err(|e| usage(format!("{}: {e}", p.display()))),
        None => Ok(ReferenceTable::default()),
    }
}

pub fn report(a: ReportArgs) -> CliResult<String> {
    let reports = collect_reports(&a.reports)?;
    let reference = load_reference(&a.reference)?;
    let out = resolve(&a.out);
    write_table(&out, &reports, &reference)?;
    let rows = table_rows(&reports, &reference).len();
    Ok(format!(
        "report: {} reports -> {rows} table rows; wrote {}",
        reports.len(),
        out.join("table.txt").display()
    ))
}

// ---------------------------------------------------------------- matrix

#[derive(Args)]
pub struct MatrixArgs {
    /// Output directory of `sagan preprocess`.
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated subset of subjects; defaults to all.
    #[arg(long, value_delimiter = ',')]
    subjects: Vec<String>,
    /// Comma-separated modes: no-transfer, knn-pca, sagan, supervised.
    #[arg(long, value_delimiter = ',')]
    modes: Vec<String>,
    /// Reference scores for the GFK and STL columns.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Directory for per-cell reports, failures and the tables.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

pub fn matrix(a: MatrixArgs) -> CliResult<String> {
    let cfg = a.config.resolve()?;
    let ids = if a.subjects.is_empty() {
        subjects_in(&a.data)?
    } else {
        a.subjects.clone()
    };
    let modes: Vec<Mode> = if a.modes.is_empty() {
        Mode::ALL.to_vec()
    } else {
        a.modes
            .iter()
            .map(|m| m.parse().map_err(|e: sagan_core::Error| usage(e.to_string())))
            .collect::<CliResult<_>>()?
    };
    let subjects: BTreeMap<String, SubjectSplits> = ids
        .iter()
        .map(|id| Ok((id.clone(), load_splits(&a.data, id)?)))
        .collect::<CliResult<_>>()?;
    if subjects.len() < 2 {
        return Err(usage("the matrix needs at least two subjects"));
    }
    let reference = load_reference(&a.reference)?;
    let cells = run_matrix(&subjects, &modes, &cfg.bench())?;

    let out = resolve(&a.out);
    let mut reports = Vec::new();
    let mut failures = String::from("source\ttarget\tmode\terror\n");
    for c in &cells {
        match &c.outcome {
            Ok(r) => {
                let name = format!("{}-{}-{}.json", c.source, c.target, c.mode);
                sagan_core::io::write_atomic(&out.join("reports").join(name), r.to_json()?.as_bytes())?;
                reports.push(r.clone());
            }
            Err(e) => failures.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                c.source,
                c.target,
                c.mode,
                e.replace(['\t', '\n'], " ")
            )),
        }
    }
    let n_failed = cells.len() - reports.len();
    if n_failed > 0 {
        output::text(&out.join("failures.tsv"), &stamp(&cfg), &failures)?;
    }
    if reports.is_empty() {
        return Err(CliError::Compute(format!(
            "all {} cells failed; see {}",
            cells.len(),
            out.join("failures.tsv").display()
        )));
    }
    write_table(&out, &reports, &reference)?;
    Ok(format!(
        "matrix: {} cells ({} failed) over {} subjects; wrote {}",
        cells.len(),
        n_failed,
        subjects.len(),
        out.join("table.txt").display()
    ))
}
