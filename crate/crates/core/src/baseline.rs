//! Label-only and memorizing baselines.
//!
//! None of these learn anything about disease stage. Their accuracy on a split
//! measures how much of a model's score could come from repeating a subject's
//! known label (carry-forward) or recognizing the subject itself
//! (nearest neighbour on subject-dominated features).

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::cohort::{Cohort, DiagnosisLabel, ScanId};
use crate::features::{squared_distance, FeatureMatrix};
use crate::split::{Partition, SplitAssignment};

/// Predicted labels for the test partition of one assignment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Predictions {
    pub provenance: String,
    labels: BTreeMap<ScanId, DiagnosisLabel>,
}

impl Predictions {
    pub fn new(provenance: impl Into<String>, labels: BTreeMap<ScanId, DiagnosisLabel>) -> Self {
        Self { provenance: provenance.into(), labels }
    }

    pub fn get(&self, scan: &str) -> Option<DiagnosisLabel> {
        self.labels.get(scan).copied()
    }

    pub fn labels(&self) -> impl Iterator<Item = (&ScanId, DiagnosisLabel)> {
        self.labels.iter().map(|(k, v)| (k, *v))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error("k must be odd and at least 1, got {0}")]
    InvalidK(usize),
    #[error("no feature vector for scan {0}")]
    MissingFeature(ScanId),
    #[error("train/val partition is empty")]
    EmptyReference,
}

/// Most frequent label over train ∪ val; ties go to the earlier label in
/// CN, MCI, AD order. CN when the fit side is empty.
pub fn fit_side_majority(cohort: &Cohort, assignment: &SplitAssignment) -> DiagnosisLabel {
    let mut counts = [0usize; 3];
    for (scan, p) in assignment.mapping() {
        if p.is_fit_side() {
            if let Some(r) = cohort.scan(scan.as_str()) {
                counts[r.label.level()] += 1;
            }
        }
    }
    let best = counts.iter().copied().max().unwrap_or(0);
    let level = counts.iter().position(|&c| c == best).unwrap_or(0);
    DiagnosisLabel::from_level(level).expect("three levels")
}

/// Every test scan gets the fit-side majority label.
pub fn majority_class_predict(cohort: &Cohort, assignment: &SplitAssignment) -> Predictions {
    let label = fit_side_majority(cohort, assignment);
    let labels = assignment.scans_in(Partition::Test).map(|s| (s.clone(), label)).collect();
    Predictions::new(format!("majority_class(label={label})"), labels)
}

/// Each test scan gets the label of the same subject's latest strictly
/// earlier visit that sits in train or val. Test scans without such a visit
/// fall back to the fit-side majority label.
pub fn carry_forward_predict(cohort: &Cohort, assignment: &SplitAssignment) -> Predictions {
    let fallback = fit_side_majority(cohort, assignment);
    let labels = assignment
        .scans_in(Partition::Test)
        .map(|scan| {
            let label = cohort
                .scan(scan.as_str())
                .and_then(|record| {
                    let series = cohort.subject(record.subject_id.as_str())?;
                    series
                        .scans()
                        .iter()
                        .rev()
                        .filter(|s| s.visit_index < record.visit_index)
                        .find(|s| assignment.partition_of(s.scan_id.as_str()).is_some_and(Partition::is_fit_side))
                        .map(|s| s.label)
                })
                .unwrap_or(fallback);
            (scan.clone(), label)
        })
        .collect();
    Predictions::new(format!("carry_forward(fallback={fallback})"), labels)
}

/// k-nearest-neighbour vote over train ∪ val under Euclidean distance.
///
/// Neighbours are ranked by (distance, scan id). A vote tie between labels is
/// won by the tied label whose best neighbour ranks first. Work is split over
/// test scans with rayon; each prediction depends only on its own scan, so
/// the result is independent of thread count.
pub fn nearest_neighbor_predict(
    features: &FeatureMatrix,
    cohort: &Cohort,
    assignment: &SplitAssignment,
    k: usize,
) -> Result<Predictions, BaselineError> {
    if k == 0 || k.is_multiple_of(2) {
        return Err(BaselineError::InvalidK(k));
    }
    let lookup = |scan: &ScanId| features.get(scan.as_str()).ok_or_else(|| BaselineError::MissingFeature(scan.clone()));

    // Reference rows in scan-id order, so index order is the tie-break order.
    let mut reference: Vec<(&[f64], DiagnosisLabel)> = Vec::new();
    for (scan, p) in assignment.mapping() {
        if p.is_fit_side() {
            let label = cohort.scan(scan.as_str()).map_or(DiagnosisLabel::Cn, |r| r.label);
            reference.push((lookup(scan)?, label));
        }
    }
    if reference.is_empty() {
        return Err(BaselineError::EmptyReference);
    }
    let queries: Vec<(&ScanId, &[f64])> = assignment
        .scans_in(Partition::Test)
        .map(|s| Ok((s, lookup(s)?)))
        .collect::<Result<_, BaselineError>>()?;

    let k = k.min(reference.len());
    let labels = queries
        .par_iter()
        .map(|&(scan, query)| {
            let mut dists: Vec<(f64, usize)> = reference
                .iter()
                .enumerate()
                .map(|(i, (row, _))| (squared_distance(query, row), i))
                .collect();
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if k < dists.len() {
                dists.select_nth_unstable_by(k - 1, cmp);
                dists.truncate(k);
            }
            dists.sort_unstable_by(cmp);

            let mut votes = [0usize; 3];
            for &(_, i) in &dists {
                votes[reference[i].1.level()] += 1;
            }
            let top = votes.iter().copied().max().unwrap_or(0);
            let label = dists
                .iter()
                .map(|&(_, i)| reference[i].1)
                .find(|l| votes[l.level()] == top)
                .expect("k >= 1");
            (scan.clone(), label)
        })
        .collect::<BTreeMap<_, _>>();
    Ok(Predictions::new(format!("nearest_neighbor(k={k})"), labels))
}
