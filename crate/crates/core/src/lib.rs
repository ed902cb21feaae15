//! Splitting, auditing and scoring for longitudinal, subject-grouped datasets.
//!
//! A [`Cohort`] holds scan identifiers, subject identifiers, visit ordinals and
//! diagnosis labels. The [`split`] module produces scan → partition
//! assignments under four schemes (random by scan, by subject, by visit
//! history, group k-fold), [`audit`] checks an assignment for subject-level
//! leakage, [`baseline`] holds label-only and memorizing predictors, and
//! [`eval`] scores predictions. [`synth`] generates cohorts with a controlled
//! subject fingerprint so the effect of leaky splits can be measured without
//! access to imaging data.
//!
//! All randomness flows from an explicit `u64` seed through [`rng::seeded`].

#![forbid(unsafe_code)]

pub mod audit;
pub mod baseline;
pub mod cohort;
pub mod demo;
pub mod eval;
pub mod features;
pub mod manifest;
pub mod rng;
pub mod split;
pub mod synth;

pub use audit::{audit_split, compare_counts, AuditReport, CountMismatch, ExpectedCounts, InferredScheme};
pub use baseline::{
    carry_forward_predict, majority_class_predict, nearest_neighbor_predict, BaselineError, Predictions,
};
pub use cohort::{
    count_transitions, filter_transition_subjects, Cohort, CohortError, DiagnosisLabel, ScanId, ScanRecord,
    SubjectId, SubjectSeries, TransitionStats,
};
pub use eval::{aggregate_runs, evaluate, ConfusionMatrix, EvalError, EvalReport, MultiRunSummary};
pub use features::FeatureMatrix;
pub use manifest::{ManifestError, SplitMetadata};
pub use split::{
    group_kfold, split_by_subject, split_by_visit_history, split_random_by_scan, Partition, Scheme, SplitAssignment,
    SplitError, SplitRatios, VisitHistorySplit,
};
pub use synth::{calibrate_defaults, generate, generate_exact, ExactProfile, SynthConfig, SynthError};

/// Version string written into every metadata sidecar.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
