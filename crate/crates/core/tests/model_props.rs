mod common;

use std::collections::BTreeMap;

use cohortsplit_core::baseline::{
    carry_forward_predict, majority_class_predict, nearest_neighbor_predict, Predictions,
};
use cohortsplit_core::cohort::{count_transitions, Cohort, DiagnosisLabel, ScanId};
use cohortsplit_core::eval::{evaluate, evaluate_scans};
use cohortsplit_core::features::FeatureMatrix;
use cohortsplit_core::split::{split_by_visit_history, split_random_by_scan, Partition, SplitRatios};
use cohortsplit_core::synth::{generate, SynthConfig};
use common::{build, cohort_spec, label, oracle_knn, records};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Small-integer features so exact distance ties are common.
fn coarse_features(cohort: &Cohort, dim: usize, seed: u64) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = FeatureMatrix::new(dim).unwrap();
    for id in cohort.scan_ids() {
        m.insert(id.clone(), (0..dim).map(|_| rng.random_range(0..3) as f64).collect()).unwrap();
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn carry_forward_errors_equal_last_visit_transitions(spec in cohort_spec(40, 6), seed in any::<u64>()) {
        let cohort = build(&spec);
        let Ok(split) = split_by_visit_history(&cohort, 0.15, seed) else { return Ok(()); };
        let preds = carry_forward_predict(&cohort, &split.assignment);
        let report = evaluate(&preds, &cohort, &split.assignment).unwrap();
        let errors = report.n_scored - report.confusion.trace();
        prop_assert_eq!(errors as usize, count_transitions(&cohort).last_visit_transitions);
    }

    #[test]
    fn knn_matches_exhaustive_oracle(spec in cohort_spec(30, 5), seed in any::<u64>(), k in prop::sample::select(vec![1usize, 3, 5])) {
        let cohort = build(&spec);
        prop_assume!(cohort.n_scans() >= 3);
        let a = split_random_by_scan(&cohort, SplitRatios::new(0.6, 0.1, 0.3).unwrap(), seed).unwrap();
        let features = coarse_features(&cohort, 2, seed);
        let preds = nearest_neighbor_predict(&features, &cohort, &a, k).unwrap();
        let reference: Vec<(String, Vec<f64>, DiagnosisLabel)> = a
            .mapping()
            .iter()
            .filter(|(_, p)| p.is_fit_side())
            .map(|(s, _)| (s.to_string(), features.get(s.as_str()).unwrap().to_vec(), cohort.scan(s.as_str()).unwrap().label))
            .collect();
        prop_assert_eq!(preds.len(), a.count(Partition::Test));
        for scan in a.scans_in(Partition::Test) {
            let want = oracle_knn(&reference, features.get(scan.as_str()).unwrap(), k);
            prop_assert_eq!(preds.get(scan.as_str()), Some(want), "scan {}", scan);
        }
    }

    #[test]
    fn majority_matches_counting_oracle(spec in cohort_spec(40, 6), seed in any::<u64>()) {
        let cohort = build(&spec);
        prop_assume!(cohort.n_scans() >= 3);
        let a = split_random_by_scan(&cohort, SplitRatios::new(0.6, 0.1, 0.3).unwrap(), seed).unwrap();
        let mut fit = BTreeMap::new();
        for (s, p) in a.mapping() {
            if p.is_fit_side() {
                *fit.entry(cohort.scan(s.as_str()).unwrap().label).or_insert(0usize) += 1;
            }
        }
        let best = fit.values().copied().max().unwrap_or(0);
        let majority = DiagnosisLabel::ALL.into_iter().find(|l| fit.get(l).copied().unwrap_or(0) == best).unwrap();
        let test: Vec<_> = a.scans_in(Partition::Test).collect();
        let hits = test.iter().filter(|s| cohort.scan(s.as_str()).unwrap().label == majority).count();
        let report = evaluate(&majority_class_predict(&cohort, &a), &cohort, &a).unwrap();
        prop_assert_eq!(report.accuracy, hits as f64 / test.len() as f64);
    }

    #[test]
    fn evaluation_is_order_free_and_sums_match(spec in cohort_spec(30, 5), seed in any::<u64>()) {
        let recs = records(&spec);
        let cohort = Cohort::build(recs.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: BTreeMap<ScanId, DiagnosisLabel> =
            cohort.scan_ids().map(|s| (s.clone(), label(rng.random_range(0..3)))).collect();
        let mut order: Vec<ScanId> = cohort.scan_ids().cloned().collect();
        order.shuffle(&mut rng);
        let preds = Predictions::new("random", labels.clone());
        let reversed = Predictions::new("random", labels.iter().rev().map(|(k, v)| (k.clone(), *v)).collect());
        let a = evaluate_scans(&preds, &cohort, cohort.scan_ids(), "all").unwrap();
        let b = evaluate_scans(&reversed, &cohort, order.iter(), "all").unwrap();
        prop_assert_eq!(&a, &b);
        for l in DiagnosisLabel::ALL {
            prop_assert_eq!(a.confusion.truth_count(l) as usize, recs.iter().filter(|r| r.label == l).count());
            prop_assert_eq!(a.confusion.predicted_count(l) as usize, labels.values().filter(|&&p| p == l).count());
        }
        prop_assert_eq!(a.confusion.total() as usize, cohort.n_scans());
    }
}

#[test]
fn identical_rows_within_subject_make_one_nn_copy_a_sibling() {
    let config = SynthConfig {
        n_subjects: 80,
        total_scans: Some(340),
        sigma_stage: 0.0,
        sigma_noise: 0.0,
        ..SynthConfig::default()
    };
    for seed in 0..5 {
        let (cohort, features) = generate(&config, seed).unwrap();
        let a = split_random_by_scan(&cohort, SplitRatios::new(0.6, 0.1, 0.3).unwrap(), seed).unwrap();
        let preds = nearest_neighbor_predict(&features, &cohort, &a, 1).unwrap();
        for scan in a.scans_in(Partition::Test) {
            let series = cohort.subject(cohort.scan(scan.as_str()).unwrap().subject_id.as_str()).unwrap();
            let sibling = series
                .scans()
                .iter()
                .filter(|r| a.partition_of(r.scan_id.as_str()).unwrap().is_fit_side())
                .min_by(|x, y| x.scan_id.cmp(&y.scan_id));
            if let Some(sib) = sibling {
                assert_eq!(preds.get(scan.as_str()), Some(sib.label));
            }
        }
    }
}

#[test]
fn random_guessing_scores_about_a_third() {
    let (cohort, _) = generate(&SynthConfig::default(), 11).unwrap();
    let a = split_random_by_scan(&cohort, SplitRatios::new(0.1, 0.0, 0.9).unwrap(), 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let labels = a.scans_in(Partition::Test).map(|s| (s.clone(), label(rng.random_range(0..3)))).collect();
    let report = evaluate(&Predictions::new("uniform", labels), &cohort, &a).unwrap();
    let n = report.n_scored as f64;
    let bound = 3.0 * (1.0 / 3.0 * 2.0 / 3.0 / n).sqrt();
    assert!((report.accuracy - 1.0 / 3.0).abs() <= bound, "{} outside ±{bound}", report.accuracy);
}

#[test]
fn synthetic_transition_rate_is_calibrated() {
    let config = SynthConfig::default();
    let p = config.transition_prob;
    let mut totals = Vec::new();
    for seed in 0..20 {
        let (cohort, _) = generate(&config, seed).unwrap();
        let stats = count_transitions(&cohort);
        let pairs = stats.consecutive_pairs as f64;
        let sd = (pairs * p * (1.0 - p)).sqrt();
        assert!((stats.total_transitions as f64 - p * pairs).abs() <= 3.0 * sd + 1.0, "seed {seed}: {}", stats.total_transitions);
        totals.push((stats.total_transitions as f64, pairs));
    }
    let mean_t = totals.iter().map(|t| t.0).sum::<f64>() / 20.0;
    let mean_expected = totals.iter().map(|t| t.1 * p).sum::<f64>() / 20.0;
    assert!((mean_t - mean_expected).abs() <= 0.05 * mean_expected, "{mean_t} vs {mean_expected}");
}
