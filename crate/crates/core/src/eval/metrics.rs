use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            counts: vec![0; k * k],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.len();
        if k == 0 || rows.iter().any(|r| r.len() != k) {
            return Err(Error::shape("ConfusionMatrix", "counts must form a non-empty square"));
        }
        Ok(Self {
            k,
            counts: rows.concat(),
        })
    }

    pub fn from_predictions(truth: &[usize], pred: &[usize], k: usize) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::shape("ConfusionMatrix", "truth and prediction lengths differ"));
        }
        let mut cm = Self::new(k);
        for (&t, &p) in truth.iter().zip(pred) {
            if t >= k || p >= k {
                return Err(Error::invalid(format!("class id outside 0..{k}")));
            }
            cm.counts[t * k + p] += 1;
        }
        Ok(cm)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.k + pred]
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.k).map(<[u64]>::to_vec).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn support(&self, c: usize) -> u64 {
        (0..self.k).map(|p| self.get(c, p)).sum()
    }

    pub fn predicted(&self, c: usize) -> u64 {
        (0..self.k).map(|t| self.get(t, c)).sum()
    }

    pub fn per_class(&self) -> Vec<ClassMetrics> {
        (0..self.k)
            .map(|c| {
                let tp = self.get(c, c) as f64;
                let support = self.support(c);
                let predicted = self.predicted(c);
                let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
                let recall = if support == 0 { 0.0 } else { tp / support as f64 };
                let f1 = if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                };
                ClassMetrics {
                    class: c,
                    precision,
                    recall,
                    f1,
                    support,
                }
            })
            .collect()
    }

    /// Support-weighted mean of per-class F1.
    pub fn weighted_f1(&self) -> Result<f64> {
        weighted_f1(self)
    }

    pub fn accuracy(&self) -> Result<f64> {
        let total = self.total();
        if total == 0 {
            return Err(Error::invalid("accuracy of an empty confusion matrix"));
        }
        Ok((0..self.k).map(|c| self.get(c, c)).sum::<u64>() as f64 / total as f64)
    }

    /// Whitespace-separated rows; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .map(|t| {
                    t.parse::<u64>()
                        .map_err(|_| Error::invalid(format!("line {}: bad count {t}", i + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }
}

/// Weighted F1: classes without support are excluded; weights are
/// support / total.
pub fn weighted_f1(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::invalid("weighted F1 of an all-zero confusion matrix"));
    }
    Ok(cm
        .per_class()
        .iter()
        .filter(|m| m.support > 0)
        .map(|m| m.f1 * m.support as f64 / total as f64)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_is_perfect() {
        let cm = ConfusionMatrix::from_rows(&[vec![3, 0], vec![0, 4]]).unwrap();
        assert_eq!(cm.weighted_f1().unwrap(), 1.0);
    }

    #[test]
    fn symmetric_half() {
        let cm = ConfusionMatrix::from_rows(&[vec![5, 5], vec![5, 5]]).unwrap();
        assert!((cm.weighted_f1().unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_matrix_rejected() {
        assert!(ConfusionMatrix::new(3).weighted_f1().is_err());
    }

    #[test]
    fn zero_support_class_is_excluded() {
        // Class 2 never occurs; predicting it once only costs class 0 recall.
        let cm = ConfusionMatrix::from_rows(&[vec![4, 0, 1], vec![0, 5, 0], vec![0, 0, 0]]).unwrap();
        let pc = cm.per_class();
        let expected = 0.5 * (2.0 * 1.0 * 0.8 / 1.8) + 0.5 * 1.0;
        assert!((cm.weighted_f1().unwrap() - expected).abs() < 1e-12);
        assert_eq!(pc[2].support, 0);
    }

    #[test]
    fn parse_and_orientation() {
        let cm = ConfusionMatrix::parse("# t\\p\n1 2\n3 4\n").unwrap();
        assert_eq!(cm.get(1, 0), 3);
        assert_eq!(cm.support(1), 7);
        assert_eq!(cm.predicted(1), 6);
        assert!(ConfusionMatrix::parse("1 2\n3\n").is_err());
    }

    #[test]
    fn from_predictions_counts() {
        let cm = ConfusionMatrix::from_predictions(&[0, 1, 1, 2], &[0, 1, 2, 2], 3).unwrap();
        assert_eq!(cm.total(), 4);
        assert_eq!(cm.get(1, 2), 1);
        assert!(ConfusionMatrix::from_predictions(&[3], &[0], 3).is_err());
    }
}
