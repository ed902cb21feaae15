//! Leakage demonstration: the same memorizing classifier scored under each
//! split scheme on synthetic cohorts.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::{carry_forward_predict, majority_class_predict, nearest_neighbor_predict, BaselineError};
use crate::eval::{evaluate, EvalError, MultiRunSummary};
use crate::split::{
    split_by_subject, split_by_visit_history, split_random_by_scan, SplitAssignment, SplitError, SplitRatios,
    DEFAULT_VAL_FRACTION_OF_TRAIN,
};
use crate::synth::{generate, SynthConfig, SynthError};

pub const SCHEMES: [&str; 3] = ["random_by_scan", "by_visit_history", "by_subject"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DemoError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoSettings {
    pub synth: SynthConfig,
    pub seeds: Vec<u64>,
    pub k: usize,
    pub ratios: SplitRatios,
    pub val_fraction_of_train: f64,
}

impl Default for DemoSettings {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            seeds: (0..5).collect(),
            k: 1,
            ratios: SplitRatios::reference(),
            val_fraction_of_train: DEFAULT_VAL_FRACTION_OF_TRAIN,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeResult {
    pub nearest_neighbor: MultiRunSummary,
    pub carry_forward: MultiRunSummary,
    pub majority_class: MultiRunSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub settings: DemoSettings,
    pub schemes: BTreeMap<String, SchemeResult>,
    pub version: String,
}

impl DemoReport {
    pub fn nn_mean(&self, scheme: &str) -> f64 {
        self.schemes[scheme].nearest_neighbor.mean
    }

    /// random_by_scan > by_visit_history > by_subject on mean 1-NN accuracy.
    pub fn strictly_ordered(&self) -> bool {
        self.nn_mean("random_by_scan") > self.nn_mean("by_visit_history")
            && self.nn_mean("by_visit_history") > self.nn_mean("by_subject")
    }

    /// Fixed-width text table, one row per scheme.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<18} {:>16} {:>16} {:>16}\n",
            "scheme",
            format!("{}-NN", self.settings.k),
            "carry-forward",
            "majority"
        );
        for name in SCHEMES {
            let r = &self.schemes[name];
            out.push_str(&format!(
                "{name:<18} {:>16} {:>16} {:>16}\n",
                r.nearest_neighbor.formatted, r.carry_forward.formatted, r.majority_class.formatted
            ));
        }
        out
    }
}

/// Test accuracies `[nn, carry_forward, majority]` per scheme for one seed.
fn run_seed(settings: &DemoSettings, seed: u64) -> Result<Vec<[f64; 3]>, DemoError> {
    let (cohort, features) = generate(&settings.synth, seed)?;
    let assignments: [SplitAssignment; 3] = [
        split_random_by_scan(&cohort, settings.ratios, seed)?,
        split_by_visit_history(&cohort, settings.val_fraction_of_train, seed)?.assignment,
        split_by_subject(&cohort, settings.ratios, seed, false)?,
    ];
    assignments
        .iter()
        .map(|a| {
            let nn = nearest_neighbor_predict(&features, &cohort, a, settings.k)?;
            let cf = carry_forward_predict(&cohort, a);
            let mj = majority_class_predict(&cohort, a);
            Ok([
                evaluate(&nn, &cohort, a)?.accuracy,
                evaluate(&cf, &cohort, a)?.accuracy,
                evaluate(&mj, &cohort, a)?.accuracy,
            ])
        })
        .collect()
}

/// Runs every seed. With `parallel`, seeds run on the rayon pool; results
/// are collected in seed order either way, so the report is identical.
pub fn run_demo(settings: &DemoSettings, parallel: bool) -> Result<DemoReport, DemoError> {
    let per_seed: Vec<Vec<[f64; 3]>> = if parallel {
        settings.seeds.par_iter().map(|&s| run_seed(settings, s)).collect::<Result<_, _>>()?
    } else {
        settings.seeds.iter().map(|&s| run_seed(settings, s)).collect::<Result<_, _>>()?
    };
    let mut schemes = BTreeMap::new();
    for (i, name) in SCHEMES.iter().enumerate() {
        let column = |j: usize| -> Result<MultiRunSummary, EvalError> {
            MultiRunSummary::from_accuracies(&per_seed.iter().map(|run| run[i][j]).collect::<Vec<_>>())
        };
        schemes.insert(
            name.to_string(),
            SchemeResult { nearest_neighbor: column(0)?, carry_forward: column(1)?, majority_class: column(2)? },
        );
    }
    Ok(DemoReport { settings: settings.clone(), schemes, version: crate::TOOL_VERSION.to_owned() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_equals_sequential_small() {
        let settings = DemoSettings {
            synth: SynthConfig { n_subjects: 60, total_scans: Some(250), ..SynthConfig::default() },
            seeds: vec![3, 4, 5],
            ..DemoSettings::default()
        };
        let a = run_demo(&settings, false).unwrap();
        let b = run_demo(&settings, true).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.schemes.len(), 3);
        assert!(a.to_table().lines().count() == 4);
    }

    #[test]
    fn empty_seed_list_is_an_error() {
        let settings = DemoSettings { seeds: vec![], ..DemoSettings::default() };
        assert!(matches!(run_demo(&settings, false), Err(DemoError::Eval(EvalError::EmptyInput))));
    }
}
