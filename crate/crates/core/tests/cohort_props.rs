mod common;

use cohortsplit_core::cohort::{count_transitions, filter_transition_subjects, Cohort};
use cohortsplit_core::manifest::{parse_manifest, read_cohort, write_manifest};
use common::{build, cohort_spec, oracle_transitions, records};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn transitions_match_pairwise_recount(spec in cohort_spec(25, 7)) {
        let recs = records(&spec);
        let cohort = Cohort::build(recs.clone()).unwrap();
        let stats = count_transitions(&cohort);
        let oracle = oracle_transitions(&recs);
        prop_assert_eq!(stats.consecutive_pairs, oracle.pairs);
        prop_assert_eq!(stats.total_transitions, oracle.transitions);
        prop_assert_eq!(stats.last_visit_transitions, oracle.last_visit);
        prop_assert_eq!(stats.consecutive_pairs + cohort.n_subjects(), cohort.n_scans());
        prop_assert_eq!(stats.per_transition_kind.values().sum::<usize>(), stats.total_transitions);
        prop_assert_eq!(filter_transition_subjects(&cohort).len(), stats.last_visit_transitions);
    }

    #[test]
    fn build_ignores_input_order(spec in cohort_spec(20, 6), shuffle_seed in any::<u64>()) {
        let recs = records(&spec);
        let mut shuffled = recs.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(shuffle_seed));
        let a = Cohort::build(recs).unwrap();
        let b = Cohort::build(shuffled).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(count_transitions(&a), count_transitions(&b));
    }

    #[test]
    fn series_are_visit_ordered(spec in cohort_spec(20, 6)) {
        let cohort = build(&spec);
        for s in cohort.subjects() {
            prop_assert!(s.scans().windows(2).all(|w| w[0].visit_index < w[1].visit_index));
            prop_assert_eq!(s.last().visit_index, s.last_visit());
        }
        let ids: Vec<_> = cohort.scan_ids().cloned().collect();
        prop_assert!(ids.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn manifest_round_trip(spec in cohort_spec(20, 6)) {
        let cohort = build(&spec);
        let text = write_manifest(&cohort);
        prop_assert_eq!(read_cohort(&text).unwrap(), cohort.clone());
        prop_assert_eq!(write_manifest(&read_cohort(&text).unwrap()), text.clone());
        prop_assert_eq!(parse_manifest(&text).unwrap().len(), cohort.n_scans());
        let crlf = text.replace('\n', "\r\n");
        prop_assert_eq!(read_cohort(&crlf).unwrap(), cohort);
    }
}
