//! Structural leakage audit of a split assignment.
//!
//! A subject leaks when it has scans on the fitting side (train or val) and
//! on the test side. Train/val sharing is not leakage: validation is part of
//! model selection.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, SubjectId};
use crate::split::{Partition, SplitAssignment};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferredScheme {
    BySubject,
    ByVisitHistory,
    RandomByScanOrOther,
}

impl fmt::Display for InferredScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InferredScheme::BySubject => "by_subject",
            InferredScheme::ByVisitHistory => "by_visit_history",
            InferredScheme::RandomByScanOrOther => "random_by_scan_or_other",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakedSubject {
    pub subject_id: SubjectId,
    pub partitions: Vec<Partition>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupCounts {
    pub scans: usize,
    pub subjects: usize,
}

/// Groups of partitions that counts are reported for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionGroup {
    Train,
    Val,
    Test,
    TrainVal,
}

impl PartitionGroup {
    fn contains(self, p: Partition) -> bool {
        match self {
            PartitionGroup::Train => p == Partition::Train,
            PartitionGroup::Val => p == Partition::Val,
            PartitionGroup::Test => p == Partition::Test,
            PartitionGroup::TrainVal => p.is_fit_side(),
        }
    }

    pub const ALL: [PartitionGroup; 4] =
        [PartitionGroup::Train, PartitionGroup::Val, PartitionGroup::Test, PartitionGroup::TrainVal];
}

impl fmt::Display for PartitionGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PartitionGroup::Train => "train",
            PartitionGroup::Val => "val",
            PartitionGroup::Test => "test",
            PartitionGroup::TrainVal => "train+val",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub inferred_scheme: InferredScheme,
    pub subject_disjoint: bool,
    pub visit_history_consistent: bool,
    pub leaked_subjects: Vec<LeakedSubject>,
    pub partition_counts: BTreeMap<PartitionGroup, GroupCounts>,
}

impl AuditReport {
    pub fn is_leaky(&self) -> bool {
        !self.subject_disjoint
    }
}

/// Audits `assignment` against `cohort`. Scans of the assignment that are not
/// in the cohort are ignored.
pub fn audit_split(cohort: &Cohort, assignment: &SplitAssignment) -> AuditReport {
    let mut leaked_subjects = Vec::new();
    let mut visit_history_consistent = assignment.count(Partition::Test) > 0;
    let mut partition_counts: BTreeMap<PartitionGroup, GroupCounts> =
        PartitionGroup::ALL.into_iter().map(|g| (g, GroupCounts::default())).collect();

    for series in cohort.subjects() {
        let parts: Vec<Option<Partition>> =
            series.scans().iter().map(|s| assignment.partition_of(s.scan_id.as_str())).collect();
        let present: BTreeSet<Partition> = parts.iter().flatten().copied().collect();

        for (group, counts) in partition_counts.iter_mut() {
            let n = parts.iter().flatten().filter(|&&p| group.contains(p)).count();
            counts.scans += n;
            counts.subjects += usize::from(n > 0);
        }

        let tested = present.contains(&Partition::Test);
        if tested && present.iter().any(|p| p.is_fit_side()) {
            leaked_subjects.push(LeakedSubject {
                subject_id: series.subject_id().clone(),
                partitions: present.iter().copied().collect(),
            });
        }
        if tested {
            let test_positions: Vec<usize> = parts
                .iter()
                .enumerate()
                .filter(|(_, p)| **p == Some(Partition::Test))
                .map(|(i, _)| i)
                .collect();
            if test_positions != [series.len() - 1] {
                visit_history_consistent = false;
            }
        }
    }

    let subject_disjoint = leaked_subjects.is_empty();
    let inferred_scheme = if subject_disjoint {
        InferredScheme::BySubject
    } else if visit_history_consistent {
        InferredScheme::ByVisitHistory
    } else {
        InferredScheme::RandomByScanOrOther
    };
    AuditReport { inferred_scheme, subject_disjoint, visit_history_consistent, leaked_subjects, partition_counts }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountUnit {
    Scans,
    Subjects,
}

/// Expected counts keyed by partition group and unit.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExpectedCounts(BTreeMap<(PartitionGroup, CountUnit), usize>);

impl ExpectedCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn scans(mut self, group: PartitionGroup, n: usize) -> Self {
        self.0.insert((group, CountUnit::Scans), n);
        self
    }

    pub fn subjects(mut self, group: PartitionGroup, n: usize) -> Self {
        self.0.insert((group, CountUnit::Subjects), n);
        self
    }

    /// 2,074 train+val scans and 657 test scans.
    pub fn reference_scans() -> Self {
        Self::new().scans(PartitionGroup::TrainVal, 2074).scans(PartitionGroup::Test, 657)
    }

    /// Scan counts plus 484 train+val and 173 test subjects.
    pub fn reference_by_subject() -> Self {
        Self::reference_scans()
            .subjects(PartitionGroup::TrainVal, 484)
            .subjects(PartitionGroup::Test, 173)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountMismatch {
    pub group: PartitionGroup,
    pub unit: CountUnit,
    pub expected: usize,
    pub actual: usize,
    /// actual − expected
    pub delta: i64,
}

impl fmt::Display for CountMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let unit = match self.unit {
            CountUnit::Scans => "scans",
            CountUnit::Subjects => "subjects",
        };
        write!(f, "{} {unit}: expected {}, got {} ({:+})", self.group, self.expected, self.actual, self.delta)
    }
}

/// Mismatches between the report's counts and `expected`; empty when all
/// match.
pub fn compare_counts(report: &AuditReport, expected: &ExpectedCounts) -> Vec<CountMismatch> {
    expected
        .0
        .iter()
        .filter_map(|(&(group, unit), &want)| {
            let got = report.partition_counts.get(&group).copied().unwrap_or_default();
            let actual = match unit {
                CountUnit::Scans => got.scans,
                CountUnit::Subjects => got.subjects,
            };
            (actual != want).then(|| CountMismatch {
                group,
                unit,
                expected: want,
                actual,
                delta: actual as i64 - want as i64,
            })
        })
        .collect()
}
