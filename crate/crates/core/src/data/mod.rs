//! Raw recordings to windowed, PCA-projected feature domains.
//!
//! Per recording: mean imputation, range normalisation onto [-1, 1] and
//! sliding-window segmentation. Training windows of every subject are then
//! pooled to fit one shared PCA basis that projects all splits.

mod domain;
mod pca;
mod recording;
mod window;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use domain::{Domain, Role};
pub use pca::{fit_pca, project, reconstruct, FeatureSpace};
pub use recording::{impute_missing, normalize, normalize_value, parse_recording, ChannelSpec, LabelMap, RawRecording};
pub use window::{segment, stride_for, window_count, window_len_for, WindowSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub window_seconds: f64,
    pub overlap: f64,
    /// Used when the channel spec does not declare a rate.
    pub sample_rate_hz: f64,
    pub pca_dims: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            window_seconds: 3.0,
            overlap: 0.7,
            sample_rate_hz: 30.0,
            pca_dims: 88,
        }
    }
}

/// Train / validation / test domains of one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectSplits {
    pub train: Domain,
    pub validation: Domain,
    pub test: Domain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assembled {
    pub space: FeatureSpace,
    pub subjects: BTreeMap<String, SubjectSplits>,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Split {
    Train,
    Validation,
    Test,
}

fn split_of(session: usize) -> Result<Split> {
    match session {
        1..=3 => Ok(Split::Train),
        4 => Ok(Split::Validation),
        5 => Ok(Split::Test),
        s => Err(Error::Data(format!("session {s} is outside ADL1..ADL5"))),
    }
}

/// Preprocesses every recording and builds per-subject split domains in one
/// shared PCA space. Sessions 1-3 train, 4 validates, 5 tests.
pub fn assemble_domains(recordings: &[RawRecording], n_classes: usize, cfg: &PipelineConfig) -> Result<Assembled> {
    if recordings.is_empty() {
        return Err(Error::Data("no recordings given".into()));
    }
    // (subject, split) -> windows, labels
    let mut buckets: BTreeMap<(String, Split), (Vec<f64>, Vec<usize>)> = BTreeMap::new();
    let mut dim = None;
    let mut ordered: Vec<&RawRecording> = recordings.iter().collect();
    ordered.sort_by(|a, b| (&a.subject_id, a.session, &a.file_id).cmp(&(&b.subject_id, b.session, &b.file_id)));
    for rec in ordered {
        let split = split_of(rec.session)?;
        let clean = normalize(&impute_missing(rec)?)?;
        let ws = segment(&clean, cfg.window_seconds, cfg.overlap)?;
        if let Some(&bad) = ws.labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::Data(format!(
                "{}: label {bad} outside {n_classes} classes",
                rec.file_id
            )));
        }
        match dim {
            None => dim = Some(ws.dim),
            Some(d) if d != ws.dim => {
                return Err(Error::Data(format!(
                    "{}: window dimension {} differs from {d}",
                    rec.file_id, ws.dim
                )))
            }
            _ => {}
        }
        for sid in [Split::Train, Split::Validation, Split::Test] {
            buckets.entry((rec.subject_id.clone(), sid)).or_default();
        }
        let entry = buckets
            .get_mut(&(rec.subject_id.clone(), split))
            .expect("inserted above");
        entry.0.extend_from_slice(&ws.windows);
        entry.1.extend_from_slice(&ws.labels);
    }
    let dim = dim.expect("at least one recording");

    let train_parts: Vec<Matrix> = buckets
        .iter()
        .filter(|((_, s), _)| *s == Split::Train)
        .map(|(_, (w, l))| Matrix::new(l.len(), dim, w.clone()))
        .collect::<Result<_>>()?;
    let refs: Vec<&Matrix> = train_parts.iter().collect();
    let pooled = Matrix::vstack(&refs)?;
    let space = fit_pca(&pooled, cfg.pca_dims)?;

    let mut subjects = BTreeMap::new();
    let mut staged: BTreeMap<String, BTreeMap<Split, Domain>> = BTreeMap::new();
    for ((subject, split), (w, l)) in buckets {
        let features = project(&space, &Matrix::new(l.len(), dim, w)?)?;
        let role = match split {
            Split::Train => Role::Source,
            Split::Validation => Role::Validation,
            Split::Test => Role::Test,
        };
        let d = Domain::new(features, Some(l), n_classes, subject.clone(), role)?;
        staged.entry(subject).or_default().insert(split, d);
    }
    for (subject, mut splits) in staged {
        let mut take = |s| splits.remove(&s).expect("all splits staged");
        subjects.insert(
            subject,
            SubjectSplits {
                train: take(Split::Train),
                validation: take(Split::Validation),
                test: take(Split::Test),
            },
        );
    }
    Ok(Assembled { space, subjects })
}

/// Parses `S<subject>-ADL<session>.dat` into (subject, session).
pub fn parse_file_name(name: &str) -> Option<(String, usize)> {
    let stem = name.strip_suffix(".dat")?;
    let (subject, session) = stem.split_once("-ADL")?;
    let subject = subject.strip_prefix('S')?;
    if subject.is_empty() {
        return None;
    }
    Some((subject.to_string(), session.parse().ok()?))
}

/// Loads every `S*-ADL*.dat` file under `dir`.
pub fn load_directory(
    dir: &Path,
    spec: &ChannelSpec,
    labels: &LabelMap,
    default_rate_hz: f64,
) -> Result<Vec<RawRecording>> {
    let mut files: Vec<(String, usize, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some((subject, session)) = parse_file_name(&name) {
            files.push((subject, session, entry.path()));
        }
    }
    if files.is_empty() {
        return Err(Error::Data(format!("no S*-ADL*.dat files in {}", dir.display())));
    }
    files.sort();
    files
        .into_iter()
        .map(|(subject, session, path)| {
            let text = crate::io::read_to_string(&path)?;
            let rec = parse_recording(&text, &path, spec, labels, default_rate_hz)?;
            let id = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok(rec.with_identity(subject, session, id))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recording(subject: &str, session: usize, time: usize, marker: f64) -> RawRecording {
        let ch = 2;
        let samples = (0..time * ch)
            .map(|i| marker + ((i * 7919) % 101) as f64 / 101.0 * 0.1 * (1 + i % 3) as f64)
            .collect();
        let labels = (0..time).map(|t| Some((t / 20) % 3)).collect();
        RawRecording::new(samples, ch, labels, vec![(-2.0, 2.0); ch], 10.0)
            .unwrap()
            .with_identity(subject, session, format!("S{subject}-ADL{session}.dat"))
    }

    #[test]
    fn file_names() {
        assert_eq!(parse_file_name("S1-ADL3.dat"), Some(("1".into(), 3)));
        assert_eq!(parse_file_name("S1-Drill.dat"), None);
        assert_eq!(parse_file_name("notes.txt"), None);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(assemble_domains(&[], 3, &PipelineConfig::default()).is_err());
    }

    #[test]
    fn train_split_holds_exactly_sessions_one_to_three() {
        let markers = [0.1, 0.2, 0.3, 0.4, 0.5];
        let recs: Vec<_> = (1..=5).map(|s| recording("1", s, 200, markers[s - 1])).collect();
        let cfg = PipelineConfig {
            window_seconds: 3.0,
            overlap: 0.5,
            sample_rate_hz: 10.0,
            pca_dims: 8,
        };
        let a = assemble_domains(&recs, 3, &cfg).unwrap();
        let s = &a.subjects["1"];
        let per_file = window_count(200, 30, 15);
        assert_eq!(s.train.len(), 3 * per_file);
        assert_eq!(s.validation.len(), per_file);
        assert_eq!(s.test.len(), per_file);
        assert_eq!(s.train.dim(), 8);
        let mut manual = Vec::new();
        for r in &recs[..3] {
            let ws = segment(&normalize(&impute_missing(r).unwrap()).unwrap(), 3.0, 0.5).unwrap();
            manual.extend_from_slice(&ws.windows);
        }
        let manual = project(&a.space, &Matrix::new(3 * per_file, 60, manual).unwrap()).unwrap();
        assert_eq!(&manual, s.train.features());
    }
}
