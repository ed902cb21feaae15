//! Train/validation/test split generation.
//!
//! Four schemes are provided:
//!
//! * [`split_random_by_scan`] shuffles individual scans and ignores subject
//!   identity. Scans of one subject routinely land on both sides.
//! * [`split_by_subject`] keeps every scan of a subject in one partition.
//! * [`split_by_visit_history`] holds out each subject's last visit for test
//!   and trains on the earlier visits.
//! * [`group_kfold`] produces `k` subject-disjoint folds.
//!
//! Every function is a pure function of `(cohort, parameters, seed)`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{Cohort, DiagnosisLabel, ScanId, SubjectId, SubjectSeries};
use crate::rng::{self, stream};

/// Default share of the non-test scans that goes to validation.
pub const DEFAULT_VAL_FRACTION_OF_TRAIN: f64 = 0.15;

const RATIO_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Val,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Val, Partition::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Val => "val",
            Partition::Test => "test",
        }
    }

    /// Train and val together form the model-fitting side of a split.
    pub fn is_fit_side(self) -> bool {
        matches!(self, Partition::Train | Partition::Val)
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Partition {
    type Err = SplitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Partition::Train),
            "val" => Ok(Partition::Val),
            "test" => Ok(Partition::Test),
            other => Err(SplitError::UnknownPartition(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SplitError {
    #[error("cohort too small: need at least {required} {unit}, have {actual}")]
    CohortTooSmall { required: usize, actual: usize, unit: &'static str },
    #[error("ratios cannot be met by whole subjects: {0}")]
    UnreachableRatios(String),
    #[error("invalid ratios: {0}")]
    InvalidRatios(String),
    #[error("k-fold needs k >= 2, got {0}")]
    InvalidK(usize),
    #[error("too few subjects for {k} folds: have {subjects}")]
    TooFewSubjects { k: usize, subjects: usize },
    #[error("unknown partition {0:?} (expected train, val or test)")]
    UnknownPartition(String),
    #[error("unknown scheme {0:?}")]
    UnknownScheme(String),
}

/// Fractions of the cohort per partition; they sum to one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitRatios {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self, SplitError> {
        let in_open = |x: f64| x > 0.0 && x < 1.0;
        if !in_open(train) || !in_open(test) || !(0.0..1.0).contains(&val) {
            return Err(SplitError::InvalidRatios(format!(
                "need train, test in (0,1) and val in [0,1); got {train}/{val}/{test}"
            )));
        }
        if (train + val + test - 1.0).abs() > RATIO_EPS {
            return Err(SplitError::InvalidRatios(format!(
                "train + val + test = {} (must be 1)",
                train + val + test
            )));
        }
        Ok(Self { train, val, test })
    }

    /// `test` of the cohort held out; `val_fraction_of_train` of the rest
    /// goes to validation.
    pub fn from_test_share(test: f64, val_fraction_of_train: f64) -> Result<Self, SplitError> {
        if !(0.0..1.0).contains(&val_fraction_of_train) {
            return Err(SplitError::InvalidRatios(format!(
                "val fraction of train must be in [0,1), got {val_fraction_of_train}"
            )));
        }
        let fit = 1.0 - test;
        let val = fit * val_fraction_of_train;
        Self::new(fit - val, val, test)
    }

    /// 657 of 2,731 scans held out, 15% of the remaining 2,074 for validation.
    pub fn reference() -> Self {
        Self::from_test_share(657.0 / 2731.0, DEFAULT_VAL_FRACTION_OF_TRAIN).expect("constant ratios are valid")
    }

    /// Integer scan targets `(train, val, test)` for `n` items: val and test
    /// are rounded, train takes the remainder.
    pub fn targets(&self, n: usize) -> [usize; 3] {
        let test = ((n as f64) * self.test).round() as usize;
        let test = test.min(n);
        let val = (((n as f64) * self.val).round() as usize).min(n - test);
        [n - test - val, val, test]
    }
}

impl FromStr for SplitRatios {
    type Err = SplitError;

    /// `"train,val,test"` or `"train:val:test"`, e.g. `0.7,0.15,0.15`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split([',', ':']).map(str::trim).collect();
        let [train, val, test] = parts.as_slice() else {
            return Err(SplitError::InvalidRatios(format!("expected three numbers, got {s:?}")));
        };
        let num = |x: &str| {
            x.parse::<f64>()
                .map_err(|_| SplitError::InvalidRatios(format!("not a number: {x:?}")))
        };
        Self::new(num(train)?, num(val)?, num(test)?)
    }
}

/// Which scheme produced an assignment, with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Scheme {
    RandomByScan { ratios: SplitRatios },
    BySubject { ratios: SplitRatios, stratify: bool },
    ByVisitHistory { val_fraction_of_train: f64 },
    GroupKfold { fold_index: usize, k: usize },
    /// Assignment read from a file without metadata.
    Unspecified,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::RandomByScan { .. } => "random_by_scan",
            Scheme::BySubject { .. } => "by_subject",
            Scheme::ByVisitHistory { .. } => "by_visit_history",
            Scheme::GroupKfold { .. } => "group_kfold",
            Scheme::Unspecified => "unspecified",
        }
    }

    pub fn ratios(&self) -> Option<SplitRatios> {
        match self {
            Scheme::RandomByScan { ratios } | Scheme::BySubject { ratios, .. } => Some(*ratios),
            _ => None,
        }
    }
}

/// Scan → partition mapping plus the scheme and seed that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitAssignment {
    pub scheme: Scheme,
    pub seed: u64,
    mapping: BTreeMap<ScanId, Partition>,
}

impl SplitAssignment {
    pub fn new(scheme: Scheme, seed: u64, mapping: BTreeMap<ScanId, Partition>) -> Self {
        Self { scheme, seed, mapping }
    }

    pub fn mapping(&self) -> &BTreeMap<ScanId, Partition> {
        &self.mapping
    }

    pub fn partition_of(&self, scan: &str) -> Option<Partition> {
        self.mapping.get(scan).copied()
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn count(&self, partition: Partition) -> usize {
        self.mapping.values().filter(|&&p| p == partition).count()
    }

    /// `[train, val, test]` scan counts.
    pub fn counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for p in self.mapping.values() {
            c[*p as usize] += 1;
        }
        c
    }

    /// Scan ids in `partition`, in scan-id order.
    pub fn scans_in(&self, partition: Partition) -> impl Iterator<Item = &ScanId> {
        self.mapping.iter().filter(move |(_, &p)| p == partition).map(|(s, _)| s)
    }

    /// Distinct subjects with at least one scan in `partition`.
    pub fn subjects_in(&self, cohort: &Cohort, partition: Partition) -> BTreeSet<SubjectId> {
        self.scans_in(partition)
            .filter_map(|s| cohort.scan(s.as_str()))
            .map(|r| r.subject_id.clone())
            .collect()
    }

    /// Moves one scan to another partition. Returns the previous partition.
    pub fn reassign(&mut self, scan: &str, to: Partition) -> Option<Partition> {
        self.mapping.get_mut(scan).map(|p| std::mem::replace(p, to))
    }

    /// Every cohort scan assigned exactly once and nothing else assigned.
    pub fn covers(&self, cohort: &Cohort) -> bool {
        self.mapping.len() == cohort.n_scans() && self.mapping.keys().all(|s| cohort.contains_scan(s.as_str()))
    }
}

fn require(actual: usize, required: usize, unit: &'static str) -> Result<(), SplitError> {
    if actual < required {
        Err(SplitError::CohortTooSmall { required, actual, unit })
    } else {
        Ok(())
    }
}

/// Shuffles scans with no regard for subject identity, then cuts the
/// shuffled list at the integer targets of `ratios`.
pub fn split_random_by_scan(cohort: &Cohort, ratios: SplitRatios, seed: u64) -> Result<SplitAssignment, SplitError> {
    require(cohort.n_scans(), 3, "scans")?;
    let mut scans: Vec<&ScanId> = cohort.scan_ids().collect();
    scans.shuffle(&mut rng::seeded(seed, stream::RANDOM_BY_SCAN));
    let [_, val, test] = ratios.targets(scans.len());

    let mapping = scans
        .into_iter()
        .enumerate()
        .map(|(i, id)| {
            let p = if i < test {
                Partition::Test
            } else if i < test + val {
                Partition::Val
            } else {
                Partition::Train
            };
            (id.clone(), p)
        })
        .collect();
    Ok(SplitAssignment::new(Scheme::RandomByScan { ratios }, seed, mapping))
}

/// Assigns whole subjects to partitions.
///
/// Subjects are shuffled, then each is placed in the partition whose scan
/// count is furthest below its integer target (ties: test, val, train).
/// Every partition ends within the longest series length of its target. With
/// `stratify`, subjects are shuffled within strata keyed by their final-visit
/// label and the strata are interleaved evenly before placement.
pub fn split_by_subject(
    cohort: &Cohort,
    ratios: SplitRatios,
    seed: u64,
    stratify: bool,
) -> Result<SplitAssignment, SplitError> {
    let targets = ratios.targets(cohort.n_scans());
    let needed = targets.iter().filter(|&&t| t > 0).count();
    if cohort.n_subjects() < needed {
        return Err(SplitError::UnreachableRatios(format!(
            "{needed} non-empty partitions requested from {} subject(s)",
            cohort.n_subjects()
        )));
    }
    require(cohort.n_subjects(), 3, "subjects")?;

    let mut rng = rng::seeded(seed, stream::BY_SUBJECT);
    let order: Vec<&SubjectSeries> = if stratify {
        let mut strata: BTreeMap<DiagnosisLabel, Vec<&SubjectSeries>> = BTreeMap::new();
        for s in cohort.subjects() {
            strata.entry(s.last().label).or_default().push(s);
        }
        let mut keyed = Vec::with_capacity(cohort.n_subjects());
        for (label, mut members) in strata {
            members.shuffle(&mut rng);
            let n = members.len() as f64;
            keyed.extend(
                members
                    .into_iter()
                    .enumerate()
                    .map(|(i, s)| ((i as f64 + 0.5) / n, label, s)),
            );
        }
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        keyed.into_iter().map(|(_, _, s)| s).collect()
    } else {
        let mut v: Vec<&SubjectSeries> = cohort.subjects().collect();
        v.shuffle(&mut rng);
        v
    };

    let mut counts = [0usize; 3];
    let mut mapping = BTreeMap::new();
    // Ties resolve in this order.
    const PRIORITY: [Partition; 3] = [Partition::Test, Partition::Val, Partition::Train];
    for series in order {
        let deficit = |p: Partition| targets[p as usize] as i64 - counts[p as usize] as i64;
        let mut best = PRIORITY[0];
        for p in PRIORITY {
            if deficit(p) > deficit(best) {
                best = p;
            }
        }
        counts[best as usize] += series.len();
        for scan in series.scans() {
            mapping.insert(scan.scan_id.clone(), best);
        }
    }

    for p in Partition::ALL {
        if targets[p as usize] > 0 && counts[p as usize] == 0 {
            return Err(SplitError::UnreachableRatios(format!(
                "{p} target of {} scans received no subject",
                targets[p as usize]
            )));
        }
    }
    Ok(SplitAssignment::new(Scheme::BySubject { ratios, stratify }, seed, mapping))
}

/// Result of [`split_by_visit_history`].
#[derive(Clone, Debug, PartialEq)]
pub struct VisitHistorySplit {
    pub assignment: SplitAssignment,
    /// Single-visit subjects. They have no history to train on, so none of
    /// their scans are tested; their scans join the train/val pool.
    pub excluded_subjects: Vec<SubjectId>,
}

/// Holds out each multi-visit subject's last visit for test. All remaining
/// scans are split into train and val at random by scan.
pub fn split_by_visit_history(
    cohort: &Cohort,
    val_fraction_of_train: f64,
    seed: u64,
) -> Result<VisitHistorySplit, SplitError> {
    if !(0.0..1.0).contains(&val_fraction_of_train) {
        return Err(SplitError::InvalidRatios(format!(
            "val fraction of train must be in [0,1), got {val_fraction_of_train}"
        )));
    }
    let mut mapping = BTreeMap::new();
    let mut pool: Vec<&ScanId> = Vec::new();
    let mut excluded_subjects = Vec::new();
    for series in cohort.subjects() {
        if series.len() < 2 {
            excluded_subjects.push(series.subject_id().clone());
            pool.push(&series.first().scan_id);
            continue;
        }
        let (last, earlier) = series.scans().split_last().expect("non-empty");
        mapping.insert(last.scan_id.clone(), Partition::Test);
        pool.extend(earlier.iter().map(|s| &s.scan_id));
    }
    if mapping.is_empty() {
        return Err(SplitError::CohortTooSmall { required: 1, actual: 0, unit: "multi-visit subjects" });
    }

    pool.sort();
    pool.shuffle(&mut rng::seeded(seed, stream::VISIT_HISTORY));
    let n_val = ((pool.len() as f64) * val_fraction_of_train).round() as usize;
    for (i, id) in pool.into_iter().enumerate() {
        let p = if i < n_val { Partition::Val } else { Partition::Train };
        mapping.insert(id.clone(), p);
    }

    Ok(VisitHistorySplit {
        assignment: SplitAssignment::new(Scheme::ByVisitHistory { val_fraction_of_train }, seed, mapping),
        excluded_subjects,
    })
}

/// Subject-level k-fold. Subjects are shuffled and dealt into `k` folds whose
/// subject counts differ by at most one; fold `i` tests its own subjects and
/// trains on the rest. Validation is empty.
pub fn group_kfold(cohort: &Cohort, k: usize, seed: u64) -> Result<Vec<SplitAssignment>, SplitError> {
    if k < 2 {
        return Err(SplitError::InvalidK(k));
    }
    if cohort.n_subjects() < k {
        return Err(SplitError::TooFewSubjects { k, subjects: cohort.n_subjects() });
    }
    let mut subjects: Vec<&SubjectSeries> = cohort.subjects().collect();
    subjects.shuffle(&mut rng::seeded(seed, stream::GROUP_KFOLD));

    let n = subjects.len();
    let mut fold_of = Vec::with_capacity(n);
    for fold in 0..k {
        let size = n / k + usize::from(fold < n % k);
        fold_of.extend(std::iter::repeat_n(fold, size));
    }

    Ok((0..k)
        .map(|fold_index| {
            let mapping = subjects
                .iter()
                .zip(&fold_of)
                .flat_map(|(series, &f)| {
                    let p = if f == fold_index { Partition::Test } else { Partition::Train };
                    series.scans().iter().map(move |s| (s.scan_id.clone(), p))
                })
                .collect();
            SplitAssignment::new(Scheme::GroupKfold { fold_index, k }, seed, mapping)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::ScanRecord;
    use DiagnosisLabel::*;

    fn cohort_with_lengths(lengths: &[usize]) -> Cohort {
        let mut recs = Vec::new();
        for (s, &len) in lengths.iter().enumerate() {
            for v in 0..len {
                recs.push(ScanRecord::new(format!("s{s:03}-v{v}"), format!("s{s:03}"), v as u32, Cn));
            }
        }
        Cohort::build(recs).unwrap()
    }

    #[test]
    fn ratio_validation() {
        assert!(SplitRatios::new(0.7, 0.15, 0.15).is_ok());
        assert!(SplitRatios::new(0.7, 0.0, 0.3).is_ok());
        assert!(SplitRatios::new(0.7, 0.2, 0.2).is_err());
        assert!(SplitRatios::new(1.0, 0.0, 0.0).is_err());
        assert!(SplitRatios::new(0.0, 0.5, 0.5).is_err());
        assert!("0.6:0.2:0.2".parse::<SplitRatios>().is_ok());
        assert!("0.6,0.4".parse::<SplitRatios>().is_err());
        let p = SplitRatios::reference();
        assert!((p.train + p.val + p.test - 1.0).abs() < 1e-12);
    }

    #[test]
    fn targets_give_remainder_to_train() {
        let r = SplitRatios::new(0.5, 0.25, 0.25).unwrap();
        // 10 * 0.25 = 2.5 rounds to 3 for val and test.
        assert_eq!(r.targets(10), [4, 3, 3]);
        assert_eq!(SplitRatios::reference().targets(2731)[2], 657);
        let third = 1.0 / 3.0;
        let r = SplitRatios::new(1.0 - 2.0 * third, third, third).unwrap();
        assert_eq!(r.targets(3), [1, 1, 1]);
    }

    #[test]
    fn random_by_scan_exact_sizes() {
        let c = cohort_with_lengths(&[1, 1, 1]);
        let third = 1.0 / 3.0;
        let r = SplitRatios::new(1.0 - 2.0 * third, third, third).unwrap();
        let a = split_random_by_scan(&c, r, 9).unwrap();
        assert_eq!(a.counts(), [1, 1, 1]);
        assert!(a.covers(&c));
    }

    #[test]
    fn random_by_scan_rejects_tiny_cohort() {
        let c = cohort_with_lengths(&[2]);
        let err = split_random_by_scan(&c, SplitRatios::reference(), 0).unwrap_err();
        assert!(matches!(err, SplitError::CohortTooSmall { required: 3, actual: 2, .. }));
    }

    #[test]
    fn by_subject_single_subject_unreachable() {
        let c = cohort_with_lengths(&[4]);
        let r = SplitRatios::new(0.8, 0.0, 0.2).unwrap();
        assert!(matches!(split_by_subject(&c, r, 0, false), Err(SplitError::UnreachableRatios(_))));
    }

    #[test]
    fn by_subject_oversized_series_can_starve_a_partition() {
        // Targets are train 10, val 1, test 1. When the 10-scan subject lands
        // after a 1-scan subject went to train, val receives nobody.
        let c = cohort_with_lengths(&[10, 1, 1]);
        let r = SplitRatios::new(0.8, 0.1, 0.1).unwrap();
        let mut unreachable = 0;
        for seed in 0..32 {
            match split_by_subject(&c, r, seed, false) {
                Ok(a) => assert!(a.counts().iter().all(|&n| n > 0)),
                Err(SplitError::UnreachableRatios(_)) => unreachable += 1,
                Err(e) => panic!("unexpected {e}"),
            }
        }
        assert!(unreachable > 0);
    }

    #[test]
    fn by_subject_ten_subjects_no_overlap() {
        let c = cohort_with_lengths(&[1, 2, 3, 4, 5, 1, 2, 3, 4, 5]);
        for seed in 0..50 {
            let a = split_by_subject(&c, SplitRatios::new(0.6, 0.2, 0.2).unwrap(), seed, false).unwrap();
            // brute force: every pair of scans from one subject shares a partition
            let scans: Vec<_> = c.scans().collect();
            for x in &scans {
                for y in &scans {
                    if x.subject_id == y.subject_id {
                        assert_eq!(a.partition_of(x.scan_id.as_str()), a.partition_of(y.scan_id.as_str()));
                    }
                }
            }
        }
    }

    #[test]
    fn visit_history_two_visit_subject() {
        let c = cohort_with_lengths(&[2, 3, 2]);
        let vh = split_by_visit_history(&c, 0.0, 1).unwrap();
        assert_eq!(vh.assignment.partition_of("s000-v1"), Some(Partition::Test));
        assert_eq!(vh.assignment.partition_of("s000-v0"), Some(Partition::Train));
        assert_eq!(vh.assignment.count(Partition::Test), 3);
        assert!(vh.excluded_subjects.is_empty());
    }

    #[test]
    fn visit_history_excludes_single_visit_subjects() {
        let c = cohort_with_lengths(&[1, 3, 1, 2, 4, 1]);
        let vh = split_by_visit_history(&c, 0.15, 5).unwrap();
        let excluded: Vec<&str> = vh.excluded_subjects.iter().map(SubjectId::as_str).collect();
        assert_eq!(excluded, vec!["s000", "s002", "s005"]);
        assert_eq!(vh.assignment.count(Partition::Test), c.n_subjects() - 3);
        assert!(vh.assignment.covers(&c));
        for s in ["s000-v0", "s002-v0", "s005-v0"] {
            assert_ne!(vh.assignment.partition_of(s), Some(Partition::Test));
        }
    }

    #[test]
    fn kfold_leave_one_subject_out() {
        let c = cohort_with_lengths(&[2, 3, 1, 4]);
        let folds = group_kfold(&c, 4, 3).unwrap();
        assert_eq!(folds.len(), 4);
        let mut tested = BTreeSet::new();
        for f in &folds {
            let subjects = f.subjects_in(&c, Partition::Test);
            assert_eq!(subjects.len(), 1);
            let s = subjects.into_iter().next().unwrap();
            assert_eq!(f.count(Partition::Test), c.subject(s.as_str()).unwrap().len());
            assert_eq!(f.count(Partition::Val), 0);
            tested.insert(s);
        }
        assert_eq!(tested.len(), 4);
    }

    #[test]
    fn kfold_errors() {
        let c = cohort_with_lengths(&[2, 3]);
        assert_eq!(group_kfold(&c, 1, 0), Err(SplitError::InvalidK(1)));
        assert_eq!(group_kfold(&c, 3, 0), Err(SplitError::TooFewSubjects { k: 3, subjects: 2 }));
    }

    #[test]
    fn kfold_fold_sizes_657_subjects() {
        let c = cohort_with_lengths(&vec![1; 657]);
        let folds = group_kfold(&c, 10, 0).unwrap();
        let sizes: Vec<usize> = folds.iter().map(|f| f.subjects_in(&c, Partition::Test).len()).collect();
        assert_eq!(sizes.iter().filter(|&&s| s == 66).count(), 7);
        assert_eq!(sizes.iter().filter(|&&s| s == 65).count(), 3);
    }

    #[test]
    fn stratified_keeps_subjects_whole() {
        let mut recs = Vec::new();
        for s in 0..30 {
            let label = [Cn, Mci, Ad][s % 3];
            for v in 0..(1 + s % 4) {
                recs.push(ScanRecord::new(format!("x{s}-{v}"), format!("x{s}"), v as u32, label));
            }
        }
        let c = Cohort::build(recs).unwrap();
        let a = split_by_subject(&c, SplitRatios::new(0.6, 0.2, 0.2).unwrap(), 4, true).unwrap();
        let test = a.subjects_in(&c, Partition::Test);
        let fit: BTreeSet<_> = a
            .subjects_in(&c, Partition::Train)
            .union(&a.subjects_in(&c, Partition::Val))
            .cloned()
            .collect();
        assert!(test.is_disjoint(&fit));
        // each label stratum reaches the test side
        let test_labels: BTreeSet<_> = test.iter().map(|s| c.subject(s.as_str()).unwrap().last().label).collect();
        assert_eq!(test_labels.len(), 3);
    }

    #[test]
    fn partition_parse() {
        assert_eq!("val".parse::<Partition>().unwrap(), Partition::Val);
        assert!("Train".parse::<Partition>().is_err());
    }
}
