//! Test-only cohort builders and independent oracles.

#![allow(dead_code)]

use cohortsplit_core::cohort::{Cohort, DiagnosisLabel, ScanRecord};
use proptest::prelude::*;

pub fn label(level: u8) -> DiagnosisLabel {
    DiagnosisLabel::from_level(level as usize).unwrap()
}

/// One subject: (visit gaps, label levels), equal lengths.
pub type SubjectSpec = Vec<(u32, u8)>;

pub fn subject_spec(max_visits: usize) -> impl Strategy<Value = SubjectSpec> {
    prop::collection::vec((1u32..4, 0u8..3), 1..=max_visits)
}

pub fn cohort_spec(max_subjects: usize, max_visits: usize) -> impl Strategy<Value = Vec<SubjectSpec>> {
    prop::collection::vec(subject_spec(max_visits), 1..=max_subjects)
}

/// Records for `spec`; visit indices are cumulative gaps so they are
/// strictly increasing but not contiguous.
pub fn records(spec: &[SubjectSpec]) -> Vec<ScanRecord> {
    let mut out = Vec::new();
    for (s, visits) in spec.iter().enumerate() {
        let mut visit = 0;
        for (gap, level) in visits {
            visit += gap;
            out.push(ScanRecord::new(
                format!("scan-{s}-{visit}"),
                format!("subj-{s}"),
                visit,
                label(*level),
            ));
        }
    }
    out
}

pub fn build(spec: &[SubjectSpec]) -> Cohort {
    Cohort::build(records(spec)).unwrap()
}

/// Brute-force transition recount straight from the record list: for every
/// ordered pair of records of the same subject, count it when no record of
/// that subject lies strictly between their visits and the labels differ.
pub struct OracleCounts {
    pub pairs: usize,
    pub transitions: usize,
    pub last_visit: usize,
}

pub fn oracle_transitions(recs: &[ScanRecord]) -> OracleCounts {
    let mut c = OracleCounts { pairs: 0, transitions: 0, last_visit: 0 };
    for a in recs {
        for b in recs {
            if a.subject_id != b.subject_id || a.visit_index >= b.visit_index {
                continue;
            }
            let between = recs
                .iter()
                .any(|m| m.subject_id == a.subject_id && m.visit_index > a.visit_index && m.visit_index < b.visit_index);
            if between {
                continue;
            }
            c.pairs += 1;
            if a.label != b.label {
                c.transitions += 1;
                let after = recs.iter().any(|m| m.subject_id == b.subject_id && m.visit_index > b.visit_index);
                if !after {
                    c.last_visit += 1;
                }
            }
        }
    }
    c
}

/// Exhaustive k-NN: full sort of all reference rows by (distance, scan id),
/// plain majority vote, vote ties to the label seen first in sorted order.
pub fn oracle_knn(reference: &[(String, Vec<f64>, DiagnosisLabel)], query: &[f64], k: usize) -> DiagnosisLabel {
    let mut all: Vec<(f64, &str, DiagnosisLabel)> = reference
        .iter()
        .map(|(id, row, l)| {
            let d: f64 = row.iter().zip(query).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            (d, id.as_str(), *l)
        })
        .collect();
    all.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap().then(x.1.cmp(y.1)));
    let top = &all[..k.min(all.len())];
    let count = |l: DiagnosisLabel| top.iter().filter(|t| t.2 == l).count();
    let best = DiagnosisLabel::ALL.iter().map(|&l| count(l)).max().unwrap();
    top.iter().map(|t| t.2).find(|&l| count(l) == best).unwrap()
}
