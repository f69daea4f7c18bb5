use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::trainer::EpochRecord;

use super::{EvalReport, Mode};

pub const TABLE_COLUMNS: [&str; 9] = [
    "Source Subject",
    "Target Subject",
    "Wasserstein Distance",
    "No Transfer",
    "KNN+PCA",
    "GFK",
    "STL",
    "SA-GAN",
    "Supervised Learning",
];

/// Externally supplied scores for methods that are not recomputed here,
/// keyed by (source, target, method).
///
/// ```text
/// # source target method value
/// 1 2 GFK 0.59
/// 1 2 STL 0.66
/// ```
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReferenceTable {
    values: BTreeMap<(String, String, String), f64>,
}

impl ReferenceTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let [s, t, m, v] = toks[..] else {
                return Err(Error::invalid(format!(
                    "reference line {}: expected `source target method value`",
                    i + 1
                )));
            };
            let v: f64 = v
                .parse()
                .map_err(|_| Error::invalid(format!("reference line {}: bad value {v}", i + 1)))?;
            values.insert((s.to_string(), t.to_string(), m.to_ascii_uppercase()), v);
        }
        Ok(Self { values })
    }

    pub fn get(&self, source: &str, target: &str, method: &str) -> Option<f64> {
        self.values
            .get(&(source.to_string(), target.to_string(), method.to_ascii_uppercase()))
            .copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub source: String,
    pub target: String,
    pub wasserstein: Option<f64>,
    /// Columns 4..9 in [`TABLE_COLUMNS`] order.
    pub scores: [Option<f64>; 6],
}

/// Merges reports into one row per (source, target) pair, ordered by ids.
pub fn table_rows(reports: &[EvalReport], reference: &ReferenceTable) -> Vec<TableRow> {
    let mut rows: BTreeMap<(String, String), TableRow> = BTreeMap::new();
    for r in reports {
        let row = rows
            .entry((r.source_id.clone(), r.target_id.clone()))
            .or_insert_with(|| TableRow {
                source: r.source_id.clone(),
                target: r.target_id.clone(),
                wasserstein: None,
                scores: [None; 6],
            });
        if r.wasserstein.is_some() {
            row.wasserstein = r.wasserstein;
        }
        let col = match r.mode {
            Mode::NoTransfer => 0,
            Mode::KnnPca => 1,
            Mode::Sagan => 4,
            Mode::Supervised => 5,
        };
        row.scores[col] = Some(r.weighted_f1);
    }
    for row in rows.values_mut() {
        row.scores[2] = reference.get(&row.source, &row.target, "GFK");
        row.scores[3] = reference.get(&row.source, &row.target, "STL");
    }
    rows.into_values().collect()
}

/// Fixed-width text table with the column layout of [`TABLE_COLUMNS`];
/// missing entries print as `-`.
pub fn render_table(reports: &[EvalReport], reference: &ReferenceTable) -> String {
    let rows = table_rows(reports, reference);
    let fmt = |v: Option<f64>, prec: usize| v.map_or_else(|| "-".to_string(), |x| format!("{x:.prec$}"));
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut c = vec![r.source.clone(), r.target.clone(), fmt(r.wasserstein, 2)];
            c.extend(r.scores.iter().map(|s| fmt(*s, 2)));
            c
        })
        .collect();
    let widths: Vec<usize> = (0..TABLE_COLUMNS.len())
        .map(|j| {
            cells
                .iter()
                .map(|c| c[j].len())
                .chain([TABLE_COLUMNS[j].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    let line = |out: &mut String, items: &[&str]| {
        let parts: Vec<String> = items.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
        let _ = writeln!(out, "{}", parts.join(" | ").trim_end());
    };
    line(&mut out, &TABLE_COLUMNS);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    let _ = writeln!(out, "{}", rule.join("-+-"));
    for c in &cells {
        let refs: Vec<&str> = c.iter().map(String::as_str).collect();
        line(&mut out, &refs);
    }
    out
}

/// Tab-separated per-epoch curve for plotting.
pub fn curve_table(curve: &[EpochRecord]) -> String {
    let mut out = String::from("epoch\td\tc\tg_adv\tg_cls\tg_total\tselection_w1\n");
    for e in curve {
        let l = &e.losses;
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            e.epoch,
            l.discriminator,
            l.classifier,
            l.generator_adversarial,
            l.generator_classification,
            l.generator_total,
            e.selection_score
        );
    }
    out
}
