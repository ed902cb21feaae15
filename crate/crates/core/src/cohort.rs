//! Longitudinal cohort model: scans, per-subject visit series, and
//! diagnosis-transition statistics.

use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(
    /// Opaque identifier of one scan.
    ScanId
);
string_id!(
    /// Opaque identifier of one subject (patient).
    SubjectId
);

/// Diagnosis stage. The derived ordering is the progression order CN < MCI < AD.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DiagnosisLabel {
    #[serde(rename = "CN")]
    Cn,
    #[serde(rename = "MCI")]
    Mci,
    #[serde(rename = "AD")]
    Ad,
}

impl DiagnosisLabel {
    /// All labels in progression order.
    pub const ALL: [DiagnosisLabel; 3] = [DiagnosisLabel::Cn, DiagnosisLabel::Mci, DiagnosisLabel::Ad];

    pub fn as_str(self) -> &'static str {
        match self {
            DiagnosisLabel::Cn => "CN",
            DiagnosisLabel::Mci => "MCI",
            DiagnosisLabel::Ad => "AD",
        }
    }

    /// Stage level 0, 1, 2 for CN, MCI, AD.
    pub fn level(self) -> usize {
        self as usize
    }

    pub fn from_level(level: usize) -> Option<Self> {
        Self::ALL.get(level).copied()
    }
}

impl fmt::Display for DiagnosisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown diagnosis label {0:?} (expected CN, MCI or AD)")]
pub struct ParseLabelError(pub String);

impl FromStr for DiagnosisLabel {
    type Err = ParseLabelError;

    /// Case-insensitive; surrounding whitespace is ignored.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("CN") {
            Ok(DiagnosisLabel::Cn)
        } else if t.eq_ignore_ascii_case("MCI") {
            Ok(DiagnosisLabel::Mci)
        } else if t.eq_ignore_ascii_case("AD") {
            Ok(DiagnosisLabel::Ad)
        } else {
            Err(ParseLabelError(s.to_owned()))
        }
    }
}

/// One scan of one subject at one visit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub scan_id: ScanId,
    pub subject_id: SubjectId,
    /// Visit ordinal; the only ordering key for a subject's series.
    pub visit_index: u32,
    /// ISO-8601 date, carried as metadata only.
    pub acquisition_date: Option<String>,
    pub label: DiagnosisLabel,
}

impl ScanRecord {
    pub fn new(
        scan_id: impl Into<ScanId>,
        subject_id: impl Into<SubjectId>,
        visit_index: u32,
        label: DiagnosisLabel,
    ) -> Self {
        Self {
            scan_id: scan_id.into(),
            subject_id: subject_id.into(),
            visit_index,
            acquisition_date: None,
            label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CohortError {
    #[error("cohort input is empty")]
    EmptyInput,
    #[error("duplicate scan id {0}")]
    DuplicateScanId(ScanId),
    #[error("subject {0} has more than one scan at visit {1}")]
    DuplicateVisit(SubjectId, u32),
}

/// A subject's scans, strictly increasing in `visit_index`. Never empty.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubjectSeries {
    subject_id: SubjectId,
    scans: Vec<ScanRecord>,
}

impl SubjectSeries {
    pub fn subject_id(&self) -> &SubjectId {
        &self.subject_id
    }

    pub fn scans(&self) -> &[ScanRecord] {
        &self.scans
    }

    pub fn len(&self) -> usize {
        self.scans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scans.is_empty()
    }

    pub fn first(&self) -> &ScanRecord {
        &self.scans[0]
    }

    pub fn last(&self) -> &ScanRecord {
        self.scans.last().expect("series is never empty")
    }

    pub fn last_visit(&self) -> u32 {
        self.last().visit_index
    }

    pub fn labels(&self) -> impl Iterator<Item = DiagnosisLabel> + '_ {
        self.scans.iter().map(|s| s.label)
    }

    /// True when the final consecutive pair carries different labels.
    pub fn has_last_visit_transition(&self) -> bool {
        match self.scans.as_slice() {
            [.., a, b] => a.label != b.label,
            _ => false,
        }
    }
}

/// Validated scan collection. Immutable once built; the internal layout is a
/// pure function of the input multiset, so equal inputs in any order compare
/// equal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cohort {
    subjects: BTreeMap<SubjectId, SubjectSeries>,
    // scan id -> (subject, position in its series)
    index: BTreeMap<ScanId, (SubjectId, usize)>,
}

impl Cohort {
    /// Validates `records` and groups them into per-subject series.
    pub fn build(records: impl IntoIterator<Item = ScanRecord>) -> Result<Self, CohortError> {
        let mut seen = BTreeSet::new();
        let mut grouped: BTreeMap<SubjectId, BTreeMap<u32, ScanRecord>> = BTreeMap::new();
        for record in records {
            if !seen.insert(record.scan_id.clone()) {
                return Err(CohortError::DuplicateScanId(record.scan_id));
            }
            let visits = grouped.entry(record.subject_id.clone()).or_default();
            if visits.contains_key(&record.visit_index) {
                return Err(CohortError::DuplicateVisit(record.subject_id, record.visit_index));
            }
            visits.insert(record.visit_index, record);
        }
        if grouped.is_empty() {
            return Err(CohortError::EmptyInput);
        }

        let mut index = BTreeMap::new();
        let subjects = grouped
            .into_iter()
            .map(|(subject_id, visits)| {
                let scans: Vec<ScanRecord> = visits.into_values().collect();
                for (pos, scan) in scans.iter().enumerate() {
                    index.insert(scan.scan_id.clone(), (subject_id.clone(), pos));
                }
                (subject_id.clone(), SubjectSeries { subject_id, scans })
            })
            .collect();
        Ok(Self { subjects, index })
    }

    pub fn n_scans(&self) -> usize {
        self.index.len()
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    /// Subject series in subject-id order.
    pub fn subjects(&self) -> impl ExactSizeIterator<Item = &SubjectSeries> {
        self.subjects.values()
    }

    pub fn subject(&self, id: &str) -> Option<&SubjectSeries> {
        self.subjects.get(id)
    }

    /// All scans in scan-id order.
    pub fn scans(&self) -> impl ExactSizeIterator<Item = &ScanRecord> + '_ {
        self.index.values().map(|(subject, pos)| &self.subjects[subject].scans[*pos])
    }

    pub fn scan(&self, id: &str) -> Option<&ScanRecord> {
        self.index.get(id).map(|(subject, pos)| &self.subjects[subject].scans[*pos])
    }

    pub fn scan_ids(&self) -> impl ExactSizeIterator<Item = &ScanId> {
        self.index.keys()
    }

    pub fn contains_scan(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Length of the longest subject series.
    pub fn max_series_len(&self) -> usize {
        self.subjects.values().map(SubjectSeries::len).max().unwrap_or(0)
    }

    /// Returns a copy of the cohort with labels replaced by `relabel`.
    pub fn map_labels(&self, mut relabel: impl FnMut(&ScanRecord) -> DiagnosisLabel) -> Self {
        let mut out = self.clone();
        for series in out.subjects.values_mut() {
            for scan in &mut series.scans {
                scan.label = relabel(scan);
            }
        }
        out
    }
}

/// Diagnosis-change counts over consecutive visit pairs.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionStats {
    pub total_transitions: usize,
    pub last_visit_transitions: usize,
    pub consecutive_pairs: usize,
    pub per_transition_kind: BTreeMap<(DiagnosisLabel, DiagnosisLabel), usize>,
}

impl TransitionStats {
    /// `per_transition_kind` keyed by "FROM->TO" strings, for serialization.
    pub fn kind_table(&self) -> BTreeMap<String, usize> {
        self.per_transition_kind
            .iter()
            .map(|((from, to), n)| (format!("{from}->{to}"), *n))
            .collect()
    }
}

/// Counts label changes between consecutive visits. Reversions count like
/// any other change; single-visit subjects contribute no pairs.
pub fn count_transitions(cohort: &Cohort) -> TransitionStats {
    let mut stats = TransitionStats::default();
    for series in cohort.subjects() {
        let scans = series.scans();
        for pair in scans.windows(2) {
            stats.consecutive_pairs += 1;
            let (from, to) = (pair[0].label, pair[1].label);
            if from != to {
                stats.total_transitions += 1;
                *stats.per_transition_kind.entry((from, to)).or_default() += 1;
            }
        }
        if series.has_last_visit_transition() {
            stats.last_visit_transitions += 1;
        }
    }
    stats
}

/// Subjects whose last two visits carry different labels.
pub fn filter_transition_subjects(cohort: &Cohort) -> BTreeSet<SubjectId> {
    cohort
        .subjects()
        .filter(|s| s.has_last_visit_transition())
        .map(|s| s.subject_id().clone())
        .collect()
}
