//! Experiment reports: accuracy matrices, derived statistics and rendering.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quality::RegressionFit;

/// Label of the pass-through evaluation condition.
pub const UNCODED: &str = "none";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("accuracy matrix is empty")]
    Empty,
    #[error("row {row} has {found} entries, expected {expected}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("reference row {0} does not exist")]
    NoReference(usize),
    #[error("reference accuracy is zero in column {column}")]
    ZeroReference { column: usize },
    #[error("accuracy {value} outside [0, 1]")]
    Range { value: f64 },
    #[error("unknown report format {0:?}; expected csv, json or markdown")]
    Format(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// `100 (1 - acc / reference)`.
pub fn relative_decrease(acc: f64, reference: f64) -> f64 {
    100.0 * (1.0 - acc / reference)
}

/// `100 (acc - reference) / reference`.
pub fn relative_increase(acc: f64, reference: f64) -> f64 {
    100.0 * (acc - reference) / reference
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentKind {
    /// One trained model evaluated under several codecs.
    A,
    /// Several training conditions evaluated under several codecs.
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedAccuracy {
    pub seed: u64,
    pub accuracy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub index: usize,
    pub name: String,
    /// Training items seen by the model.
    pub file_count: usize,
    /// Mean over seeds, one entry per evaluation condition.
    pub accuracy: Vec<f64>,
    pub per_seed: Vec<SeedAccuracy>,
}

/// Statistics derived from the accuracy matrix alone.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    /// Per row and column, decrease against the row's uncoded accuracy; `None` in the uncoded column.
    pub relative_decrease: Vec<Vec<Option<f64>>>,
    /// Final row against the reference row, per column.
    pub relative_increase: Vec<f64>,
    /// Mean of `relative_increase` over coded columns.
    pub mean_relative_increase: Option<f64>,
    /// Smallest coded-to-uncoded accuracy ratio of the final row.
    pub min_accuracy_ratio_vs_uncoded: Option<f64>,
}

/// Derived statistics for `matrix[row][column]`.
///
/// `uncoded_column` names the pass-through column, if any. The final row is
/// compared against `reference_row` when one is given.
pub fn summarize_report(
    matrix: &[Vec<f64>],
    uncoded_column: Option<usize>,
    reference_row: Option<usize>,
) -> Result<ReportSummary, ReportError> {
    let first = matrix.first().ok_or(ReportError::Empty)?;
    let width = first.len();
    for (row, r) in matrix.iter().enumerate() {
        if r.len() != width {
            return Err(ReportError::Ragged {
                row,
                expected: width,
                found: r.len(),
            });
        }
        if let Some(&value) = r.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(ReportError::Range { value });
        }
    }
    let coded: Vec<usize> = (0..width).filter(|&c| Some(c) != uncoded_column).collect();
    let relative_decrease = match uncoded_column {
        Some(u) if u < width => matrix
            .iter()
            .map(|r| {
                if r[u] == 0.0 {
                    return Err(ReportError::ZeroReference { column: u });
                }
                Ok((0..width)
                    .map(|c| (c != u).then(|| relative_decrease(r[c], r[u])))
                    .collect())
            })
            .collect::<Result<_, _>>()?,
        _ => vec![vec![None; width]; matrix.len()],
    };
    let last = matrix.last().expect("non-empty");
    let mut summary = ReportSummary {
        relative_decrease,
        ..ReportSummary::default()
    };
    if let Some(ref_row) = reference_row {
        let reference = matrix
            .get(ref_row)
            .ok_or(ReportError::NoReference(ref_row))?;
        if let Some(column) = (0..width).find(|&c| reference[c] == 0.0) {
            return Err(ReportError::ZeroReference { column });
        }
        summary.relative_increase = (0..width)
            .map(|c| relative_increase(last[c], reference[c]))
            .collect();
        if !coded.is_empty() {
            summary.mean_relative_increase = Some(
                coded
                    .iter()
                    .map(|&c| summary.relative_increase[c])
                    .sum::<f64>()
                    / coded.len() as f64,
            );
        }
    }
    if let Some(u) = uncoded_column.filter(|&u| u < width) {
        summary.min_accuracy_ratio_vs_uncoded =
            coded.iter().map(|&c| last[c] / last[u]).reduce(f64::min);
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub kind: ExperimentKind,
    /// Codec spec strings, or [`UNCODED`].
    pub eval_conditions: Vec<String>,
    pub rows: Vec<ReportRow>,
    pub reference_row: Option<usize>,
    pub seeds: Vec<u64>,
    /// Mean ODG proxy per evaluation condition (experiment A).
    pub odg_per_condition: Vec<Option<f64>>,
    /// Accuracy against mean ODG over the coded conditions (experiment A).
    pub odg_fit: Option<RegressionFit>,
    pub summary: ReportSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "markdown" | "md" => Ok(Self::Markdown),
            other => Err(ReportError::Format(other.to_string())),
        }
    }
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
            Self::Markdown => "md",
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "N/A".to_string(), |v| format!("{v:.1} %"))
}

impl ExperimentReport {
    /// Builds a report and computes its summary.
    pub fn new(
        kind: ExperimentKind,
        eval_conditions: Vec<String>,
        rows: Vec<ReportRow>,
        reference_row: Option<usize>,
        seeds: Vec<u64>,
    ) -> Result<Self, ReportError> {
        let mut report = Self {
            kind,
            eval_conditions,
            rows,
            reference_row,
            seeds,
            odg_per_condition: Vec::new(),
            odg_fit: None,
            summary: ReportSummary::default(),
        };
        report.recompute_summary()?;
        Ok(report)
    }

    pub fn uncoded_column(&self) -> Option<usize> {
        self.eval_conditions.iter().position(|c| c == UNCODED)
    }

    pub fn accuracy_matrix(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.accuracy.clone()).collect()
    }

    pub fn recompute_summary(&mut self) -> Result<(), ReportError> {
        if self.eval_conditions.is_empty() {
            self.summary = ReportSummary::default();
            return Ok(());
        }
        self.summary = summarize_report(
            &self.accuracy_matrix(),
            self.uncoded_column(),
            self.reference_row,
        )?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Csv => self.to_csv(),
            ReportFormat::Json => self.to_json(),
            ReportFormat::Markdown => self.to_markdown(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serialisable report");
        s.push('\n');
        s
    }

    /// Accuracy matrix: one row per training condition and seed (`seed` = `mean` for the average).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,condition,file_count,seed");
        for c in &self.eval_conditions {
            out.push(',');
            out.push_str(&csv_field(c));
        }
        out.push('\n');
        for row in &self.rows {
            let lines = std::iter::once(("mean".to_string(), &row.accuracy)).chain(
                row.per_seed
                    .iter()
                    .map(|s| (s.seed.to_string(), &s.accuracy)),
            );
            for (seed, acc) in lines {
                let _ = write!(
                    out,
                    "{},{},{},{seed}",
                    row.index,
                    csv_field(&row.name),
                    row.file_count
                );
                for a in acc {
                    let _ = write!(out, ",{a}");
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        match self.kind {
            ExperimentKind::A => self.markdown_a(),
            ExperimentKind::B => self.markdown_b(),
        }
    }

    /// One row per evaluation condition of the first training condition.
    fn markdown_a(&self) -> String {
        let mut out = String::from(
            "| Codec | Model Acc. | Relative Decrease | ODG |\n|---|---:|---:|---:|\n",
        );
        let Some(row) = self.rows.first() else {
            return out;
        };
        for (c, name) in self.eval_conditions.iter().enumerate() {
            let dec = self
                .summary
                .relative_decrease
                .first()
                .and_then(|r| r.get(c).copied().flatten());
            let odg = self
                .odg_per_condition
                .get(c)
                .copied()
                .flatten()
                .map_or_else(|| "N/A".to_string(), |v| format!("{v:.2}"));
            let _ = writeln!(
                out,
                "| {name} | {:.3} | {} | {odg} |",
                row.accuracy[c],
                pct(dec)
            );
        }
        if let Some(fit) = &self.odg_fit {
            let _ = writeln!(
                out,
                "\nODG fit: slope {:.4}, intercept {:.4}, R² {:.3}",
                fit.slope, fit.intercept, fit.r_squared
            );
        }
        out
    }

    /// Training conditions as rows, evaluation conditions as columns, derived statistics as footer rows.
    fn markdown_b(&self) -> String {
        let mut out = String::from("| Training Condition |");
        let mut rule = String::from("|---|");
        for c in &self.eval_conditions {
            let _ = write!(out, " {c} |");
            rule.push_str("---:|");
        }
        let _ = writeln!(out, "\n{rule}");
        for row in &self.rows {
            let _ = write!(
                out,
                "| {} {} ({} files) |",
                row.index, row.name, row.file_count
            );
            for a in &row.accuracy {
                let _ = write!(out, " {a:.3} |");
            }
            out.push('\n');
        }
        if self.eval_conditions.is_empty() {
            return out;
        }
        if let Some(r) = self.reference_row.and_then(|r| self.rows.get(r)) {
            let _ = write!(out, "| relative increase from {} [%] |", r.index);
            for v in &self.summary.relative_increase {
                let _ = write!(out, " {v:.1} |");
            }
            out.push('\n');
        }
        let blanks = " |".repeat(self.eval_conditions.len().saturating_sub(1));
        if let Some(m) = self.summary.mean_relative_increase {
            let _ = writeln!(
                out,
                "| mean relative increase over coded conditions [%] | {m:.1} |{blanks}"
            );
        }
        if let Some(m) = self.summary.min_accuracy_ratio_vs_uncoded {
            let _ = writeln!(
                out,
                "| min coded / uncoded accuracy ratio | {m:.3} |{blanks}"
            );
        }
        out
    }

    /// `codec_spec,mean_odg,accuracy` for every coded condition with an ODG, from the first row.
    pub fn scatter_csv(&self) -> String {
        let mut out = String::from("codec_spec,mean_odg,accuracy\n");
        if let Some(row) = self.rows.first() {
            for (c, name) in self.eval_conditions.iter().enumerate() {
                if let Some(odg) = self.odg_per_condition.get(c).copied().flatten() {
                    let _ = writeln!(out, "{},{odg},{}", csv_field(name), row.accuracy[c]);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(index: usize, name: &str, accuracy: Vec<f64>) -> ReportRow {
        ReportRow {
            index,
            name: name.into(),
            file_count: 10,
            per_seed: vec![SeedAccuracy {
                seed: 0,
                accuracy: accuracy.clone(),
            }],
            accuracy,
        }
    }

    #[test]
    fn identity_gives_zero_change() {
        let m = vec![vec![0.5, 0.4, 0.3]; 3];
        let s = summarize_report(&m, Some(0), Some(1)).unwrap();
        assert!(s.relative_increase.iter().all(|&v| v == 0.0));
        assert_eq!(s.mean_relative_increase, Some(0.0));
    }

    #[test]
    fn zero_reference_is_rejected() {
        let m = vec![vec![0.5, 0.0], vec![0.5, 0.2]];
        assert!(matches!(
            summarize_report(&m, None, Some(0)),
            Err(ReportError::ZeroReference { column: 1 })
        ));
        assert!(matches!(
            summarize_report(&[], None, None),
            Err(ReportError::Empty)
        ));
    }

    #[test]
    fn empty_eval_list_renders_one_column() {
        let r = ExperimentReport::new(
            ExperimentKind::B,
            vec![],
            vec![row(1, "none", vec![]), row(2, "baseline", vec![])],
            Some(0),
            vec![0],
        )
        .unwrap();
        let md = r.to_markdown();
        for line in md.lines() {
            assert_eq!(line.matches('|').count(), 2, "{line}");
        }
        assert_eq!(md.lines().count(), 4);
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let r = ExperimentReport::new(
            ExperimentKind::B,
            vec![UNCODED.into(), "ptc-mp3@32".into()],
            vec![
                row(1, "none", vec![0.1 + 0.2, 1.0 / 3.0]),
                row(2, "a,b", vec![0.7, 0.35]),
            ],
            Some(0),
            vec![0],
        )
        .unwrap();
        let back = ExperimentReport::from_json(&r.to_json()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_csv(), r.to_csv());
        assert!(r.to_csv().contains("\"a,b\""));
    }
}
