//! Accuracy, confusion matrices and multi-run summaries.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::Predictions;
use crate::cohort::{Cohort, DiagnosisLabel, ScanId};
use crate::split::{Partition, SplitAssignment};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("no prediction for scan {0}")]
    MissingPrediction(ScanId),
    #[error("scan {0} is not in the cohort")]
    UnknownScan(ScanId),
    #[error("nothing to aggregate")]
    EmptyInput,
}

/// Row/column order of [`ConfusionMatrix`].
pub const MATRIX_ORDER: [DiagnosisLabel; 3] = [DiagnosisLabel::Ad, DiagnosisLabel::Mci, DiagnosisLabel::Cn];

fn slot(label: DiagnosisLabel) -> usize {
    match label {
        DiagnosisLabel::Ad => 0,
        DiagnosisLabel::Mci => 1,
        DiagnosisLabel::Cn => 2,
    }
}

/// 3×3 counts. Rows are predictions, columns ground truth, both in
/// AD, MCI, CN order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    /// Builds a matrix from rows in AD, MCI, CN order.
    pub fn from_rows(counts: [[u64; 3]; 3]) -> Self {
        Self { counts }
    }

    pub fn record(&mut self, predicted: DiagnosisLabel, truth: DiagnosisLabel) {
        self.counts[slot(predicted)][slot(truth)] += 1;
    }

    pub fn get(&self, predicted: DiagnosisLabel, truth: DiagnosisLabel) -> u64 {
        self.counts[slot(predicted)][slot(truth)]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..3).map(|i| self.counts[i][i]).sum()
    }

    /// Number of scans predicted as `label`.
    pub fn predicted_count(&self, label: DiagnosisLabel) -> u64 {
        self.counts[slot(label)].iter().sum()
    }

    /// Number of scans whose ground truth is `label`.
    pub fn truth_count(&self, label: DiagnosisLabel) -> u64 {
        self.counts.iter().map(|row| row[slot(label)]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.trace() as f64 / n as f64,
        }
    }

    /// Aligned text table with a prediction axis and a ground-truth axis.
    pub fn to_table(&self) -> String {
        let width = self
            .counts
            .iter()
            .flatten()
            .map(|n| n.to_string().len())
            .max()
            .unwrap_or(1)
            .max(3);
        let mut out = format!("{:16}Ground Truth\n{:16}", "", "");
        for l in MATRIX_ORDER {
            out.push_str(&format!("{:>w$} ", l.as_str(), w = width));
        }
        out.truncate(out.trim_end().len());
        out.push('\n');
        for (i, l) in MATRIX_ORDER.into_iter().enumerate() {
            let axis = if i == 0 { "Prediction" } else { "" };
            out.push_str(&format!("{axis:<11}{:>4} ", l.as_str()));
            for n in self.counts[i] {
                out.push_str(&format!("{n:>width$} "));
            }
            out.truncate(out.trim_end().len());
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    /// `None` when nothing was predicted as this class.
    pub precision: Option<f64>,
    /// `None` when the class is absent from the ground truth.
    pub recall: Option<f64>,
    pub support: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub provenance: String,
    pub partition: String,
    pub n_scored: u64,
    pub accuracy: f64,
    pub confusion_layout: String,
    pub confusion: ConfusionMatrix,
    pub per_class: BTreeMap<DiagnosisLabel, ClassMetrics>,
}

impl EvalReport {
    pub fn from_matrix(provenance: &str, partition: &str, confusion: ConfusionMatrix) -> Self {
        let per_class = DiagnosisLabel::ALL
            .into_iter()
            .map(|l| {
                let diag = confusion.get(l, l);
                let ratio = |d: u64| (d > 0).then(|| diag as f64 / d as f64);
                let metrics = ClassMetrics {
                    precision: ratio(confusion.predicted_count(l)),
                    recall: ratio(confusion.truth_count(l)),
                    support: confusion.truth_count(l),
                };
                (l, metrics)
            })
            .collect();
        Self {
            provenance: provenance.to_owned(),
            partition: partition.to_owned(),
            n_scored: confusion.total(),
            accuracy: confusion.accuracy(),
            confusion_layout: "rows=predicted, columns=ground truth, order AD,MCI,CN".to_owned(),
            confusion,
            per_class,
        }
    }
}

/// Scores `predictions` on an explicit list of scans.
pub fn evaluate_scans<'a>(
    predictions: &Predictions,
    cohort: &Cohort,
    scans: impl IntoIterator<Item = &'a ScanId>,
    partition_label: &str,
) -> Result<EvalReport, EvalError> {
    let mut m = ConfusionMatrix::default();
    for scan in scans {
        let truth = cohort
            .scan(scan.as_str())
            .ok_or_else(|| EvalError::UnknownScan(scan.clone()))?
            .label;
        let predicted = predictions
            .get(scan.as_str())
            .ok_or_else(|| EvalError::MissingPrediction(scan.clone()))?;
        m.record(predicted, truth);
    }
    Ok(EvalReport::from_matrix(&predictions.provenance, partition_label, m))
}

/// Scores the test partition.
pub fn evaluate(predictions: &Predictions, cohort: &Cohort, assignment: &SplitAssignment) -> Result<EvalReport, EvalError> {
    evaluate_scans(predictions, cohort, assignment.scans_in(Partition::Test), "test")
}

/// Scores the union of `partitions`; labelled by joining their names with `+`.
pub fn evaluate_partitions(
    predictions: &Predictions,
    cohort: &Cohort,
    assignment: &SplitAssignment,
    partitions: &[Partition],
) -> Result<EvalReport, EvalError> {
    let label = partitions.iter().map(|p| p.as_str()).collect::<Vec<_>>().join("+");
    let scans = assignment.mapping().iter().filter(|(_, p)| partitions.contains(p)).map(|(s, _)| s);
    evaluate_scans(predictions, cohort, scans, &label)
}

/// Mean and sample standard deviation of per-run accuracies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiRunSummary {
    pub accuracies: Vec<f64>,
    pub n_runs: usize,
    pub mean: f64,
    /// n−1 denominator; 0 for a single run.
    pub std: f64,
    pub formatted: String,
}

impl MultiRunSummary {
    pub fn from_accuracies(accuracies: &[f64]) -> Result<Self, EvalError> {
        let n = accuracies.len();
        if n == 0 {
            return Err(EvalError::EmptyInput);
        }
        let mean = accuracies.iter().sum::<f64>() / n as f64;
        let std = if n == 1 {
            0.0
        } else {
            let ss: f64 = accuracies.iter().map(|a| (a - mean) * (a - mean)).sum();
            (ss / (n - 1) as f64).sqrt()
        };
        let formatted = format!("{:.1} ± {:.1} %", mean * 100.0, std * 100.0);
        Ok(Self { accuracies: accuracies.to_vec(), n_runs: n, mean, std, formatted })
    }
}

impl fmt::Display for MultiRunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.formatted)
    }
}

pub fn aggregate_runs(reports: &[EvalReport]) -> Result<MultiRunSummary, EvalError> {
    let acc: Vec<f64> = reports.iter().map(|r| r.accuracy).collect();
    MultiRunSummary::from_accuracies(&acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use DiagnosisLabel::*;

    #[test]
    fn table_layout() {
        let m = ConfusionMatrix::from_rows([[96, 59, 17], [62, 153, 90], [17, 67, 96]]);
        let t = m.to_table();
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[0].trim() == "Ground Truth");
        assert!(lines[1].split_whitespace().eq(["AD", "MCI", "CN"]));
        assert!(lines[2].starts_with("Prediction"));
        assert!(lines[3].split_whitespace().eq(["MCI", "62", "153", "90"]));
        assert_eq!(m.get(Mci, Ad), 62);
        assert_eq!(m.truth_count(Ad), 175);
        assert_eq!(m.predicted_count(Cn), 180);
    }

    #[test]
    fn per_class_metrics() {
        let m = ConfusionMatrix::from_rows([[2, 0, 0], [1, 0, 0], [0, 0, 3]]);
        let r = EvalReport::from_matrix("x", "test", m);
        assert_eq!(r.per_class[&Ad].recall, Some(2.0 / 3.0));
        assert_eq!(r.per_class[&Ad].precision, Some(1.0));
        assert_eq!(r.per_class[&Mci].recall, None);
        assert_eq!(r.per_class[&Mci].precision, Some(0.0));
        assert_eq!(r.accuracy, 5.0 / 6.0);
    }

    #[test]
    fn summary_formatting() {
        let s = MultiRunSummary::from_accuracies(&[0.524; 5]).unwrap();
        assert_eq!(s.to_string(), "52.4 ± 0.0 %");
        assert_eq!(s.std, 0.0);
        let s = MultiRunSummary::from_accuracies(&[0.50, 0.54]).unwrap();
        assert_eq!(s.to_string(), "52.0 ± 2.8 %");
        assert!((s.std - 0.04 / 2f64.sqrt()).abs() < 1e-12);
        let s = MultiRunSummary::from_accuracies(&[0.837]).unwrap();
        assert_eq!(s.to_string(), "83.7 ± 0.0 %");
        assert_eq!(MultiRunSummary::from_accuracies(&[]), Err(EvalError::EmptyInput));
        assert_eq!(aggregate_runs(&[]), Err(EvalError::EmptyInput));
    }
}
