mod support;

use proptest::prelude::*;
use support::suites;
use tablesim_core::baselines::MethodScore;
use tablesim_core::corpus::Label;
use tablesim_core::layers::TabularVariant;
use tablesim_core::metrics::{ndcg_at_k, prf_macro, roc_auc, GainKind};
use tablesim_core::siamese::contrastive_loss;

#[test]
fn distance_is_symmetric_and_zero_on_the_diagonal() {
    let r = suites::symmetry(200, TabularVariant::Attention, 11);
    assert_eq!((r.asymmetric, r.nonzero_self), (0, 0));
    let r = suites::symmetry(50, TabularVariant::SequenceL, 12);
    assert_eq!((r.asymmetric, r.nonzero_self), (0, 0));
}

#[test]
fn hungarian_matches_brute_force() {
    let r = suites::hungarian_suite(500, 21);
    assert_eq!(r.invalid_matchings, 0);
    assert_eq!(r.integer_mismatches, 0);
    assert!(r.real_max_error < 1e-9, "{}", r.real_max_error);
}

#[test]
fn metrics_match_direct_definitions() {
    for (name, err) in suites::metric_oracle_suite(1000, 31) {
        assert!(err < 1e-9, "{name}: {err:e}");
    }
}

#[test]
fn contrastive_loss_unit_values() {
    assert_eq!(contrastive_loss(0.0, 0.0, 1.0), 0.0);
    assert_eq!(contrastive_loss(1.0, 0.0, 1.0), 0.5);
    assert_eq!(contrastive_loss(1.0, 1.5, 1.0), 0.0);
}

fn labels(bits: &[bool]) -> Vec<Label> {
    bits.iter()
        .map(|&b| if b { Label::Similar } else { Label::Dissimilar })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn attention_is_permutation_equivariant(seed in any::<u64>()) {
        prop_assert!(suites::equivariance_instance(seed) < 1e-6);
    }

    #[test]
    fn auc_flips_with_orientation(
        values in proptest::collection::vec(0u8..8, 2..16),
        bits in proptest::collection::vec(any::<bool>(), 16),
    ) {
        let mut gold = labels(&bits[..values.len()]);
        gold[0] = Label::Similar;
        gold[1] = Label::Dissimilar;
        let sim: Vec<MethodScore> = values.iter().map(|&v| MethodScore::similarity(v as f64)).collect();
        let dist: Vec<MethodScore> = values.iter().map(|&v| MethodScore::distance(v as f64)).collect();
        let sum = roc_auc(&sim, &gold).unwrap() + roc_auc(&dist, &gold).unwrap();
        prop_assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ndcg_is_bounded_and_ideal_only_when_sorted(gains in proptest::collection::vec(0u32..4, 1..9), k in 1usize..10) {
        let v = ndcg_at_k(&gains, k, GainKind::Exponential);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        let mut sorted = gains.clone();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        if sorted.iter().any(|&g| g > 0) {
            prop_assert!((ndcg_at_k(&sorted, k, GainKind::Exponential) - 1.0).abs() < 1e-12);
            // with every position inside the cutoff, 1 exactly when the
            // gains are non-increasing
            if k >= gains.len() {
                let non_increasing = gains.windows(2).all(|w| w[0] >= w[1]);
                prop_assert_eq!((v - 1.0).abs() < 1e-12, non_increasing);
            }
        }
    }

    #[test]
    fn ndcg_ignores_order_among_equal_gains(gains in proptest::collection::vec(0u32..3, 2..9), k in 1usize..10) {
        // swapping two equal-gain positions leaves the value unchanged
        let v = ndcg_at_k(&gains, k, GainKind::Linear);
        for i in 0..gains.len() {
            for j in i + 1..gains.len() {
                if gains[i] == gains[j] {
                    let mut g = gains.clone();
                    g.swap(i, j);
                    prop_assert_eq!(ndcg_at_k(&g, k, GainKind::Linear), v);
                }
            }
        }
    }

    #[test]
    fn confusion_counts_cover_every_pair(bits in proptest::collection::vec(any::<(bool, bool)>(), 1..30)) {
        let pred = labels(&bits.iter().map(|b| b.0).collect::<Vec<_>>());
        let gold = labels(&bits.iter().map(|b| b.1).collect::<Vec<_>>());
        let p = prf_macro(&pred, &gold).unwrap();
        for c in [p.similar, p.dissimilar] {
            prop_assert_eq!(c.tp + c.fp + c.fn_ + c.tn, bits.len());
        }
        for v in [p.precision, p.recall, p.f1, p.accuracy] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}
