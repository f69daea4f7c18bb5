//! Raw per-subject recordings and the plain-text ingestion format.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Multichannel time series. Missing cells are stored as NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecording {
    /// `[time, channels]`, row-major.
    pub samples: Vec<f64>,
    pub channels: usize,
    pub labels: Vec<Option<usize>>,
    pub channel_ranges: Vec<(f64, f64)>,
    pub sample_rate_hz: f64,
    pub subject_id: String,
    /// Session index; ADL1..ADL5 map to 1..5.
    pub session: usize,
    pub file_id: String,
}

impl RawRecording {
    pub fn new(
        samples: Vec<f64>,
        channels: usize,
        labels: Vec<Option<usize>>,
        channel_ranges: Vec<(f64, f64)>,
        sample_rate_hz: f64,
    ) -> Result<Self> {
        let rec = Self {
            samples,
            channels,
            labels,
            channel_ranges,
            sample_rate_hz,
            subject_id: String::new(),
            session: 0,
            file_id: String::new(),
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn with_identity(mut self, subject_id: impl Into<String>, session: usize, file_id: impl Into<String>) -> Self {
        self.subject_id = subject_id.into();
        self.session = session;
        self.file_id = file_id.into();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::Data("recording has no channels".into()));
        }
        if !self.samples.len().is_multiple_of(self.channels) {
            return Err(Error::Data(format!(
                "{} values do not divide into {} channels",
                self.samples.len(),
                self.channels
            )));
        }
        if self.labels.len() != self.len() {
            return Err(Error::Data(format!(
                "{} labels for {} samples",
                self.labels.len(),
                self.len()
            )));
        }
        if self.channel_ranges.len() != self.channels {
            return Err(Error::Data(format!(
                "{} channel ranges for {} channels",
                self.channel_ranges.len(),
                self.channels
            )));
        }
        if let Some((c, (lo, hi))) = self.channel_ranges.iter().enumerate().find(|(_, (lo, hi))| !(lo < hi)) {
            return Err(Error::Data(format!("channel {c}: range min {lo} >= max {hi}")));
        }
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(Error::Data(format!(
                "sample rate {} must be positive",
                self.sample_rate_hz
            )));
        }
        Ok(())
    }

    /// Number of time steps.
    pub fn len(&self) -> usize {
        self.samples.len() / self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn value(&self, t: usize, c: usize) -> f64 {
        self.samples[t * self.channels + c]
    }
}

/// Replaces every missing cell by the mean of its channel's observed cells.
pub fn impute_missing(rec: &RawRecording) -> Result<RawRecording> {
    let ch = rec.channels;
    let mut sums = vec![0.0; ch];
    let mut counts = vec![0usize; ch];
    for row in rec.samples.chunks(ch) {
        for (c, &v) in row.iter().enumerate() {
            if !v.is_nan() {
                sums[c] += v;
                counts[c] += 1;
            }
        }
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::Data(format!(
            "channel {c} of {} has no observed values",
            display_id(rec)
        )));
    }
    let means: Vec<f64> = sums.iter().zip(&counts).map(|(s, &n)| s / n as f64).collect();
    let mut out = rec.clone();
    for row in out.samples.chunks_mut(ch) {
        for (v, m) in row.iter_mut().zip(&means) {
            if v.is_nan() {
                *v = *m;
            }
        }
    }
    Ok(out)
}

/// Affine map of each channel's declared range onto [-1, 1]; values outside
/// the range are clipped first.
pub fn normalize(rec: &RawRecording) -> Result<RawRecording> {
    if let Some((c, (lo, hi))) = rec.channel_ranges.iter().enumerate().find(|(_, (lo, hi))| !(lo < hi)) {
        return Err(Error::Data(format!("channel {c}: range min {lo} >= max {hi}")));
    }
    let mut out = rec.clone();
    for (t, row) in out.samples.chunks_mut(rec.channels).enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            if v.is_nan() {
                return Err(Error::Data(format!(
                    "missing value at sample {t}, channel {c}: impute before normalizing"
                )));
            }
            let (lo, hi) = rec.channel_ranges[c];
            *v = normalize_value(*v, lo, hi);
        }
    }
    Ok(out)
}

pub fn normalize_value(x: f64, lo: f64, hi: f64) -> f64 {
    let x = x.clamp(lo, hi);
    2.0 * (x - lo) / (hi - lo) - 1.0
}

fn display_id(rec: &RawRecording) -> String {
    if rec.file_id.is_empty() {
        "recording".to_string()
    } else {
        rec.file_id.clone()
    }
}

/// Sidecar describing a recording file's columns.
///
/// ```text
/// # comment
/// label_column 4          1-based index of the label column
/// ignore_columns 1        optional, e.g. a timestamp column
/// sample_rate_hz 30       optional
/// -1000 1000              one "min max" pair per remaining column, in order
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    pub label_column: usize,
    pub ignore_columns: Vec<usize>,
    pub sample_rate_hz: Option<f64>,
    pub ranges: Vec<(f64, f64)>,
}

impl ChannelSpec {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut label_column = None;
        let mut ignore_columns = Vec::new();
        let mut sample_rate_hz = None;
        let mut ranges = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let ln = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut toks = line.split_whitespace();
            let head = toks.next().expect("non-empty line");
            let rest: Vec<&str> = toks.collect();
            match head {
                "label_column" => {
                    let v: usize = rest
                        .first()
                        .and_then(|s| s.parse().ok())
                        .filter(|&v| v >= 1)
                        .ok_or_else(|| err(ln, "label_column needs a 1-based index".into()))?;
                    label_column = Some(v);
                }
                "ignore_columns" => {
                    for tok in rest.iter().flat_map(|s| s.split(',')).filter(|s| !s.is_empty()) {
                        let v: usize = tok
                            .parse()
                            .ok()
                            .filter(|&v| v >= 1)
                            .ok_or_else(|| err(ln, format!("bad column index {tok}")))?;
                        ignore_columns.push(v);
                    }
                }
                "sample_rate_hz" => {
                    let v: f64 = rest
                        .first()
                        .and_then(|s| s.parse().ok())
                        .filter(|v: &f64| *v > 0.0)
                        .ok_or_else(|| err(ln, "sample_rate_hz needs a positive number".into()))?;
                    sample_rate_hz = Some(v);
                }
                _ => {
                    let lo: f64 = head.parse().map_err(|_| err(ln, format!("unknown directive {head}")))?;
                    let hi: f64 = match rest.as_slice() {
                        [hi] => hi.parse().map_err(|_| err(ln, format!("bad max {hi}")))?,
                        _ => return Err(err(ln, "range line needs exactly two numbers".into())),
                    };
                    if !(lo < hi) {
                        return Err(err(ln, format!("range min {lo} >= max {hi}")));
                    }
                    ranges.push((lo, hi));
                }
            }
        }
        let label_column = label_column.ok_or_else(|| err(0, "missing label_column".into()))?;
        if ignore_columns.contains(&label_column) {
            return Err(err(0, "label column listed in ignore_columns".into()));
        }
        if ranges.is_empty() {
            return Err(err(0, "no channel ranges".into()));
        }
        Ok(Self {
            label_column,
            ignore_columns,
            sample_rate_hz,
            ranges,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&crate::io::read_to_string(path)?, path)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("label_column {}\n", self.label_column);
        if !self.ignore_columns.is_empty() {
            let cols: Vec<String> = self.ignore_columns.iter().map(|c| c.to_string()).collect();
            s.push_str(&format!("ignore_columns {}\n", cols.join(",")));
        }
        if let Some(r) = self.sample_rate_hz {
            s.push_str(&format!("sample_rate_hz {r}\n"));
        }
        for (lo, hi) in &self.ranges {
            s.push_str(&format!("{lo} {hi}\n"));
        }
        s
    }

    /// Total column count of a data file described by this spec.
    pub fn n_columns(&self) -> usize {
        self.ranges.len() + 1 + self.ignore_columns.len()
    }
}

/// Raw label code to contiguous class id. A code mapped to `null` marks
/// unlabeled samples.
///
/// ```text
/// 0    null
/// 101  0
/// 102  1
/// ```
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabelMap {
    map: BTreeMap<i64, Option<usize>>,
    n_classes: usize,
}

impl LabelMap {
    pub fn from_pairs(pairs: &[(i64, Option<usize>)]) -> Result<Self> {
        let mut map = BTreeMap::new();
        for &(code, id) in pairs {
            if map.insert(code, id).is_some() {
                return Err(Error::Data(format!("label code {code} mapped twice")));
            }
        }
        let mut ids: Vec<usize> = map.values().flatten().copied().collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.is_empty() || ids.iter().enumerate().any(|(i, &id)| i != id) {
            return Err(Error::Data(format!("class ids {ids:?} are not contiguous from 0")));
        }
        Ok(Self {
            map,
            n_classes: ids.len(),
        })
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg,
            };
            let toks: Vec<&str> = line.split_whitespace().collect();
            let [code, id] = toks.as_slice() else {
                return Err(err("expected `code class_id`".into()));
            };
            let code = parse_code(code).ok_or_else(|| err(format!("bad label code {code}")))?;
            let id = if id.eq_ignore_ascii_case("null") {
                None
            } else {
                Some(id.parse().map_err(|_| err(format!("bad class id {id}")))?)
            };
            pairs.push((code, id));
        }
        Self::from_pairs(&pairs).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&crate::io::read_to_string(path)?, path)
    }

    pub fn to_text(&self) -> String {
        self.map
            .iter()
            .map(|(code, id)| match id {
                Some(id) => format!("{code} {id}\n"),
                None => format!("{code} null\n"),
            })
            .collect()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// `None` for unknown codes, `Some(None)` for null-mapped ones.
    pub fn lookup(&self, code: i64) -> Option<Option<usize>> {
        self.map.get(&code).copied()
    }
}

fn parse_code(tok: &str) -> Option<i64> {
    tok.parse::<i64>().ok().or_else(|| {
        let v: f64 = tok.parse().ok()?;
        (v.fract() == 0.0 && v.is_finite()).then_some(v as i64)
    })
}

/// Parses one whitespace-separated recording file.
pub fn parse_recording(
    text: &str,
    path: &Path,
    spec: &ChannelSpec,
    labels: &LabelMap,
    default_rate_hz: f64,
) -> Result<RawRecording> {
    let n_cols = spec.n_columns();
    let mut samples = Vec::new();
    let mut out_labels = Vec::new();
    let mut row_index = 0usize;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != n_cols {
            return Err(err(format!("expected {n_cols} columns, found {}", toks.len())));
        }
        for (j, tok) in toks.iter().enumerate() {
            let col = j + 1;
            if spec.ignore_columns.contains(&col) {
                continue;
            }
            let v: f64 = if tok.eq_ignore_ascii_case("nan") {
                f64::NAN
            } else {
                tok.parse()
                    .map_err(|_| err(format!("column {col}: bad number {tok}")))?
            };
            if col == spec.label_column {
                if v.is_nan() {
                    out_labels.push(None);
                } else {
                    let code = parse_code(tok).ok_or_else(|| err(format!("label {tok} is not an integer")))?;
                    let id = labels
                        .lookup(code)
                        .ok_or_else(|| err(format!("unknown label id {code} at row {row_index}")))?;
                    out_labels.push(id);
                }
            } else {
                samples.push(v);
            }
        }
        row_index += 1;
    }
    let rate = spec.sample_rate_hz.unwrap_or(default_rate_hz);
    RawRecording::new(samples, spec.ranges.len(), out_labels, spec.ranges.clone(), rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(values: &[f64], ranges: Vec<(f64, f64)>) -> RawRecording {
        let ch = ranges.len();
        RawRecording::new(values.to_vec(), ch, vec![Some(0); values.len() / ch], ranges, 30.0).unwrap()
    }

    #[test]
    fn impute_fills_channel_mean() {
        let r = rec(
            &[1.0, 5.0, f64::NAN, 5.0, 3.0, f64::NAN],
            vec![(0.0, 10.0), (0.0, 10.0)],
        );
        let out = impute_missing(&r).unwrap();
        assert_eq!(out.samples, vec![1.0, 5.0, 2.0, 5.0, 3.0, 5.0]);
        assert_eq!(impute_missing(&out).unwrap(), out);
    }

    #[test]
    fn impute_without_missing_is_identity() {
        let r = rec(&[1.0, 2.0, 3.0], vec![(0.0, 10.0)]);
        assert_eq!(impute_missing(&r).unwrap(), r);
    }

    #[test]
    fn impute_rejects_empty_channel() {
        let r = rec(&[1.0, f64::NAN, 2.0, f64::NAN], vec![(0.0, 1.0), (0.0, 1.0)]);
        let msg = impute_missing(&r).unwrap_err().to_string();
        assert!(msg.contains("channel 1"), "{msg}");
    }

    #[test]
    fn normalize_endpoints_and_midpoint() {
        assert_eq!(normalize_value(0.0, 0.0, 10.0), -1.0);
        assert_eq!(normalize_value(10.0, 0.0, 10.0), 1.0);
        assert_eq!(normalize_value(0.0, -1000.0, 1000.0), 0.0);
        assert_eq!(normalize_value(2.5, 0.0, 10.0), -0.5);
        assert_eq!(normalize_value(99.0, 0.0, 10.0), 1.0);
        assert_eq!(normalize_value(-99.0, 0.0, 10.0), -1.0);
    }

    #[test]
    fn normalize_rejects_bad_range_and_nan() {
        let mut r = rec(&[1.0, 2.0], vec![(0.0, 10.0)]);
        r.channel_ranges[0] = (5.0, 5.0);
        assert!(normalize(&r).is_err());
        let r = rec(&[1.0, f64::NAN], vec![(0.0, 10.0)]);
        assert!(normalize(&r).is_err());
    }

    #[test]
    fn parse_roundtrip() {
        let p = Path::new("x");
        let spec = ChannelSpec::parse("label_column 3\nignore_columns 1\nsample_rate_hz 25\n-1 1\n0 10\n", p).unwrap();
        let labels = LabelMap::parse("0 null\n101 0\n102 1\n", p).unwrap();
        assert_eq!(labels.n_classes(), 2);
        let text = "0 0.5 101 NaN\n33 -0.5 0 2\n66 1 102 3\n";
        let r = parse_recording(text, p, &spec, &labels, 30.0).unwrap();
        assert_eq!(r.len(), 3);
        assert_eq!(r.channels, 2);
        assert_eq!(r.sample_rate_hz, 25.0);
        assert!(r.value(0, 1).is_nan());
        assert_eq!(r.labels, vec![Some(0), None, Some(1)]);
        assert_eq!(ChannelSpec::parse(&spec.to_text(), p).unwrap(), spec);
        assert_eq!(LabelMap::parse(&labels.to_text(), p).unwrap(), labels);
    }

    #[test]
    fn unknown_label_names_row() {
        let p = Path::new("f.dat");
        let spec = ChannelSpec::parse("label_column 2\n0 1\n", p).unwrap();
        let labels = LabelMap::parse("1 0\n", p).unwrap();
        let err = parse_recording("0.5 1\n0.5 7\n", p, &spec, &labels, 30.0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 1") && msg.contains("f.dat:2"), "{msg}");
    }

    #[test]
    fn label_map_requires_contiguous_ids() {
        let p = Path::new("x");
        assert!(LabelMap::parse("1 0\n2 2\n", p).is_err());
        assert!(LabelMap::parse("1 0\n1 1\n", p).is_err());
    }

    #[test]
    fn column_count_mismatch_reports_line() {
        let p = Path::new("f.dat");
        let spec = ChannelSpec::parse("label_column 2\n0 1\n", p).unwrap();
        let labels = LabelMap::parse("1 0\n", p).unwrap();
        let msg = parse_recording("0.5 1\n0.5\n", p, &spec, &labels, 30.0)
            .unwrap_err()
            .to_string();
        assert!(msg.starts_with("f.dat:2"), "{msg}");
    }
}
