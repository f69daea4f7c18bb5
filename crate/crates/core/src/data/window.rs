use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::RawRecording;

/// Flattened sliding windows, `window_len * channels` values per row in
/// time-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub windows: Vec<f64>,
    pub dim: usize,
    pub labels: Vec<usize>,
    pub window_len: usize,
    pub stride: usize,
    /// Set when the recording was shorter than one window.
    pub too_short: bool,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn to_matrix(&self) -> Result<Matrix> {
        Matrix::new(self.len(), self.dim, self.windows.clone())
    }
}

pub fn window_len_for(window_seconds: f64, sample_rate_hz: f64) -> Result<usize> {
    let len = (window_seconds * sample_rate_hz).round();
    if !(len >= 1.0) {
        return Err(Error::invalid(format!(
            "{window_seconds} s at {sample_rate_hz} Hz gives no samples per window"
        )));
    }
    Ok(len as usize)
}

pub fn stride_for(window_len: usize, overlap: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::invalid(format!("overlap {overlap} outside [0,1)")));
    }
    let stride = (window_len as f64 * (1.0 - overlap)).round() as usize;
    if stride < 1 {
        return Err(Error::invalid(format!(
            "overlap {overlap} leaves a zero stride for {window_len}-sample windows"
        )));
    }
    Ok(stride)
}

/// `floor((time - window_len) / stride) + 1`, or 0 when the series is shorter
/// than one window.
pub fn window_count(time: usize, window_len: usize, stride: usize) -> usize {
    if time < window_len || stride == 0 {
        0
    } else {
        (time - window_len) / stride + 1
    }
}

/// Majority label among labeled samples; ties go to the lower id.
fn majority(labels: &[Option<usize>]) -> Option<usize> {
    let max_id = labels.iter().flatten().copied().max()?;
    let mut counts = vec![0usize; max_id + 1];
    for l in labels.iter().flatten() {
        counts[*l] += 1;
    }
    let best = counts.iter().copied().max().unwrap_or(0);
    counts.iter().position(|&c| c == best)
}

/// Cuts `rec` into overlapping windows that lie fully inside the series.
/// Windows without any labeled sample are dropped.
pub fn segment(rec: &RawRecording, window_seconds: f64, overlap: f64) -> Result<WindowSet> {
    let window_len = window_len_for(window_seconds, rec.sample_rate_hz)?;
    let stride = stride_for(window_len, overlap)?;
    let n = window_count(rec.len(), window_len, stride);
    let dim = window_len * rec.channels;
    let mut windows = Vec::new();
    let mut labels = Vec::new();
    for w in 0..n {
        let start = w * stride;
        let Some(label) = majority(&rec.labels[start..start + window_len]) else {
            continue;
        };
        windows.extend_from_slice(&rec.samples[start * rec.channels..(start + window_len) * rec.channels]);
        labels.push(label);
    }
    if n == 0 {
        log::warn!(
            "{}: {} samples is shorter than one {window_len}-sample window",
            rec.file_id,
            rec.len()
        );
    }
    Ok(WindowSet {
        windows,
        dim,
        labels,
        window_len,
        stride,
        too_short: n == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(time: usize, labels: Vec<Option<usize>>) -> RawRecording {
        RawRecording::new((0..time).map(|t| t as f64).collect(), 1, labels, vec![(0.0, 1e6)], 10.0).unwrap()
    }

    #[test]
    fn default_window_and_stride() {
        let len = window_len_for(3.0, 30.0).unwrap();
        assert_eq!(len, 90);
        assert_eq!(stride_for(len, 0.7).unwrap(), 27);
    }

    #[test]
    fn count_example() {
        assert_eq!(stride_for(30, 0.7).unwrap(), 9);
        assert_eq!(window_count(100, 30, 9), 8);
        let ws = segment(&series(100, vec![Some(0); 100]), 3.0, 0.7).unwrap();
        assert_eq!((ws.window_len, ws.stride, ws.len()), (30, 9, 8));
        assert_eq!(ws.windows[30], 9.0);
    }

    #[test]
    fn zero_overlap_tiles() {
        let ws = segment(&series(95, vec![Some(1); 95]), 3.0, 0.0).unwrap();
        assert_eq!((ws.stride, ws.len()), (30, 3));
    }

    #[test]
    fn short_recording_flags() {
        let ws = segment(&series(10, vec![Some(0); 10]), 3.0, 0.5).unwrap();
        assert!(ws.is_empty() && ws.too_short);
    }

    #[test]
    fn majority_label_with_ties_and_nulls() {
        assert_eq!(majority(&[Some(2), Some(1), Some(2), Some(1)]), Some(1));
        assert_eq!(majority(&[None, Some(3), None]), Some(3));
        assert_eq!(majority(&[None, None]), None);
        let mut labels = vec![None; 60];
        labels[45..].iter_mut().for_each(|l| *l = Some(4));
        let ws = segment(&series(60, labels), 3.0, 0.0).unwrap();
        assert_eq!(ws.labels, vec![4]);
    }

    #[test]
    fn rejects_degenerate_overlap() {
        assert!(stride_for(3, 0.9).is_err());
        assert!(stride_for(30, 1.0).is_err());
        assert!(stride_for(30, -0.1).is_err());
    }

    proptest! {
        #[test]
        fn count_matches_closed_form(time in 1usize..400, window_len in 1usize..60, overlap in 0.0f64..0.95) {
            let Ok(stride) = stride_for(window_len, overlap) else { return Ok(()); };
            let rec = RawRecording::new(vec![0.0; time], 1, vec![Some(0); time], vec![(0.0, 1.0)], 1.0).unwrap();
            let ws = segment(&rec, window_len as f64, overlap).unwrap();
            let expect = if time >= window_len { (time - window_len) / stride + 1 } else { 0 };
            prop_assert_eq!(ws.len(), expect);
        }
    }
}
