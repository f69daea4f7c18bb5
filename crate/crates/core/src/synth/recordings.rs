//! Synthetic subjects written in the raw ingestion format: one
//! whitespace-separated text file per session plus the channel spec and
//! label map sidecars.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{ChannelSpec, LabelMap};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::rng::{stream, tag};

pub const CHANNEL_SPEC_FILE: &str = "channels.spec";
pub const LABEL_MAP_FILE: &str = "labels.map";
/// Raw code of unlabeled (between-activity) samples.
pub const NULL_CODE: i64 = 0;
/// Raw code of class 0; class `c` is written as `FIRST_CODE + c`.
pub const FIRST_CODE: i64 = 101;
pub const RANGE: f64 = 1000.0;
const SESSIONS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingSynthSpec {
    pub n_subjects: usize,
    pub channels: usize,
    pub n_classes: usize,
    pub sample_rate_hz: f64,
    pub seconds_per_file: f64,
    /// Per-subject offset step, in raw units per channel; subject `i` is
    /// shifted by `i * shift`.
    pub shift: f64,
    pub noise: f64,
    pub missing_rate: f64,
    pub seed: u64,
}

impl Default for RecordingSynthSpec {
    fn default() -> Self {
        Self {
            n_subjects: 4,
            channels: 6,
            n_classes: 6,
            sample_rate_hz: 30.0,
            seconds_per_file: 120.0,
            shift: 60.0,
            noise: 25.0,
            missing_rate: 0.01,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub channel_spec: PathBuf,
    pub label_map: PathBuf,
    pub recordings: Vec<PathBuf>,
}

struct ClassSignature {
    level: Vec<f64>,
    amp: Vec<f64>,
    phase: Vec<f64>,
    freq: f64,
}

impl RecordingSynthSpec {
    /// Hex SHA-256 of the spec's JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("plain data serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Comment lines stamped at the top of every generated file.
    pub fn header(&self) -> String {
        format!("# config_digest {}\n# seed {}\n", self.digest(), self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subjects == 0 || self.channels == 0 || self.n_classes < 2 {
            return Err(Error::invalid("need subjects, channels and at least two classes"));
        }
        if !(self.sample_rate_hz > 0.0 && self.seconds_per_file > 0.0) {
            return Err(Error::invalid("sample rate and duration must be positive"));
        }
        if !(0.0..1.0).contains(&self.missing_rate) || !(self.noise >= 0.0) {
            return Err(Error::invalid(
                "missing_rate must lie in [0,1) and noise be non-negative",
            ));
        }
        Ok(())
    }

    pub fn channel_spec(&self) -> ChannelSpec {
        ChannelSpec {
            label_column: self.channels + 2,
            ignore_columns: vec![1],
            sample_rate_hz: Some(self.sample_rate_hz),
            ranges: vec![(-RANGE, RANGE); self.channels],
        }
    }

    pub fn label_map(&self) -> Result<LabelMap> {
        let mut pairs = vec![(NULL_CODE, None)];
        pairs.extend((0..self.n_classes).map(|c| (FIRST_CODE + c as i64, Some(c))));
        LabelMap::from_pairs(&pairs)
    }
}

/// Writes `channels.spec`, `labels.map` and `S<i>-ADL<j>.dat` for every
/// subject and session into `dir`.
pub fn synth_recordings(spec: &RecordingSynthSpec, dir: &Path) -> Result<SynthOutput> {
    spec.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let channel_spec = dir.join(CHANNEL_SPEC_FILE);
    let label_map = dir.join(LABEL_MAP_FILE);
    let header = spec.header();
    write_atomic(
        &channel_spec,
        (header.clone() + &spec.channel_spec().to_text()).as_bytes(),
    )?;
    write_atomic(&label_map, (header.clone() + &spec.label_map()?.to_text()).as_bytes())?;

    let mut rng = stream(spec.seed, &[tag("signatures")]);
    let sigs: Vec<ClassSignature> = (0..spec.n_classes)
        .map(|_| ClassSignature {
            level: (0..spec.channels).map(|_| rng.random_range(-300.0..300.0)).collect(),
            amp: (0..spec.channels).map(|_| rng.random_range(50.0..200.0)).collect(),
            phase: (0..spec.channels)
                .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
                .collect(),
            freq: rng.random_range(0.3..2.0),
        })
        .collect();
    let direction: Vec<f64> = (0..spec.channels).map(|_| rng.random_range(-1.0..1.0)).collect();

    let mut recordings = Vec::new();
    for s in 0..spec.n_subjects {
        let offset: Vec<f64> = direction.iter().map(|d| d * spec.shift * s as f64).collect();
        for session in 1..=SESSIONS {
            let name = format!("S{}-ADL{session}.dat", s + 1);
            let mut rng = stream(spec.seed, &[tag("recording"), s as u64, session as u64]);
            let text = header.clone() + &session_text(spec, &sigs, &offset, &mut rng);
            let path = dir.join(name);
            write_atomic(&path, text.as_bytes())?;
            recordings.push(path);
        }
    }
    Ok(SynthOutput {
        channel_spec,
        label_map,
        recordings,
    })
}

fn session_text(spec: &RecordingSynthSpec, sigs: &[ClassSignature], offset: &[f64], rng: &mut impl Rng) -> String {
    let hz = spec.sample_rate_hz;
    let total = (spec.seconds_per_file * hz).round() as usize;
    let mut out = String::new();
    let mut t = 0usize;
    let mut activity = false;
    while t < total {
        let (code, class, secs) = if activity {
            let c = rng.random_range(0..spec.n_classes);
            (FIRST_CODE + c as i64, Some(c), rng.random_range(6.0..12.0))
        } else {
            (NULL_CODE, None, rng.random_range(1.0..3.0))
        };
        let len = ((secs * hz).round() as usize).max(1);
        for _ in 0..len.min(total - t) {
            let time_s = t as f64 / hz;
            let _ = write!(out, "{}", (time_s * 1000.0).round() as i64);
            for ch in 0..spec.channels {
                let base = match class {
                    Some(c) => {
                        let sg = &sigs[c];
                        sg.level[ch] + sg.amp[ch] * (std::f64::consts::TAU * sg.freq * time_s + sg.phase[ch]).sin()
                    }
                    None => 0.0,
                };
                let e: f64 = StandardNormal.sample(rng);
                let v = (base + offset[ch] + spec.noise * e).clamp(-RANGE, RANGE);
                if rng.random::<f64>() < spec.missing_rate {
                    out.push_str(" NaN");
                } else {
                    let _ = write!(out, " {v:.3}");
                }
            }
            let _ = writeln!(out, " {code}");
            t += 1;
        }
        activity = !activity;
    }
    out
}
