use front_core::interference::kappa_from_weights;
use front_core::{Action, KappaState, WeightScheme, ZetaTable};
use proptest::prelude::*;

fn schemes() -> Vec<WeightScheme> {
    vec![
        WeightScheme::FixedWindow { window: 1 },
        WeightScheme::FixedWindow { window: 5 },
        WeightScheme::FixedWindow { window: 20 },
        WeightScheme::GrowingLinear { rho: 0.2 },
        WeightScheme::GrowingLinear { rho: 0.5 },
        WeightScheme::GrowingSqrt { rho: 5.0 },
        WeightScheme::GrowingPower { scale: 20.0, exponent: 0.2 },
    ]
}

/// Column sum `Σ_{s>t} w_st` straight from the weight function, scanning far
/// past any plausible support.
fn brute_zeta(scheme: &WeightScheme, t: u64, upto: u64) -> f64 {
    (t + 1..=upto).map(|s| scheme.weight(s, t)).sum()
}

fn scheme_strategy() -> impl Strategy<Value = WeightScheme> {
    prop_oneof![
        (1u64..60).prop_map(|window| WeightScheme::FixedWindow { window }),
        (0.05f64..0.9).prop_map(|rho| WeightScheme::GrowingLinear { rho }),
        (0.5f64..8.0).prop_map(|rho| WeightScheme::GrowingSqrt { rho }),
        ((1.0f64..30.0), (0.05f64..0.6)).prop_map(|(scale, exponent)| WeightScheme::GrowingPower { scale, exponent }),
    ]
}

#[test]
fn neighborhood_sizes() {
    assert_eq!(WeightScheme::GrowingLinear { rho: 0.2 }.neighborhood_size(100), 20);
    assert_eq!(WeightScheme::GrowingSqrt { rho: 5.0 }.neighborhood_size(100), 50);
    assert_eq!(
        WeightScheme::GrowingPower { scale: 20.0, exponent: 0.2 }.neighborhood_size(32),
        40
    );
    // floored at one individual
    assert_eq!(WeightScheme::GrowingLinear { rho: 0.2 }.neighborhood_size(2), 1);
}

#[test]
fn zeta_matches_brute_force_column_sums() {
    for scheme in schemes() {
        for t in [1u64, 2, 7, 50, 333, 2000] {
            let upto = 4 * t + 20 * ((t as f64).sqrt() as u64) + 200;
            let oracle = brute_zeta(&scheme, t, upto);
            let ours = scheme.zeta(t).unwrap();
            assert!((ours - oracle).abs() < 1e-10, "{scheme:?} t={t}: {ours} vs {oracle}");
        }
    }
}

#[test]
fn fixed_window_zeta_is_one() {
    let scheme = WeightScheme::FixedWindow { window: 20 };
    for t in [1u64, 19, 20, 21, 10_000] {
        assert_eq!(scheme.zeta(t).unwrap(), 1.0);
    }
}

#[test]
fn truncated_zeta_examples() {
    let fw = WeightScheme::FixedWindow { window: 5 };
    assert!((fw.zeta_truncated(10, 12) - 0.4).abs() < 1e-15);
    for scheme in schemes() {
        assert_eq!(scheme.zeta_truncated(40, 40), 0.0);
    }
    let lin = WeightScheme::GrowingLinear { rho: 0.2 };
    assert!((lin.zeta_truncated(100, 1_000_000) - lin.zeta(100).unwrap()).abs() < 1e-6);
}

#[test]
fn growing_linear_support_ends_at_t_over_one_minus_rho() {
    let scheme = WeightScheme::GrowingLinear { rho: 0.2 };
    for t in [50u64, 500, 5000] {
        let brute = (t + 1..3 * t).filter(|&s| scheme.weight(s, t) > 0.0).max().unwrap();
        assert_eq!(brute, (t as f64 / 0.8).floor() as u64);
        assert_eq!(scheme.last_influenced(t), brute);
    }
}

#[test]
fn growing_linear_zeta_approaches_log_limit() {
    let rho: f64 = 0.2;
    let limit = (1.0 / rho) * (1.0 / (1.0 - rho)).ln();
    let z = WeightScheme::GrowingLinear { rho }.zeta(100_000).unwrap();
    assert!((z - limit).abs() / limit < 0.01, "{z} vs {limit}");
}

#[test]
fn growing_sqrt_zeta_approaches_one() {
    let z = WeightScheme::GrowingSqrt { rho: 5.0 }.zeta(100_000).unwrap();
    assert!((z - 1.0).abs() < 0.02, "{z}");
}

#[test]
fn growing_power_zeta_stabilizes() {
    let scheme = WeightScheme::GrowingPower { scale: 20.0, exponent: 0.2 };
    let a = scheme.zeta(5_000).unwrap();
    let b = scheme.zeta(10_000).unwrap();
    assert!((a - b).abs() < 0.02, "{a} vs {b}");
}

#[test]
fn kappa_examples() {
    let mut st = KappaState::new(WeightScheme::FixedWindow { window: 4 });
    for a in [0u8, 0, 1, 0, 1, 1] {
        st.push(a);
    }
    assert!((st.next_kappa() - 0.75).abs() < 1e-15);

    let mut ones = KappaState::new(WeightScheme::GrowingLinear { rho: 0.2 });
    let mut zeros = KappaState::new(WeightScheme::GrowingLinear { rho: 0.2 });
    for _ in 0..200 {
        ones.push(1);
        zeros.push(0);
    }
    assert!((ones.next_kappa() - 1.0).abs() < 1e-15);
    assert_eq!(zeros.next_kappa(), 0.0);
}

#[test]
fn zeta_table_agrees_with_direct_evaluation() {
    let scheme = WeightScheme::GrowingSqrt { rho: 5.0 };
    let table = ZetaTable::new(scheme, 3_000).unwrap();
    for t in [1u64, 10, 999, 2_900, 3_000] {
        assert_eq!(table.zeta(t), scheme.zeta(t).unwrap());
        assert!((table.zeta_truncated(t) - scheme.zeta_truncated(t, 3_000)).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn weights_sum_to_at_most_one(scheme in scheme_strategy(), t in 1u64..3000) {
        let total: f64 = (1..t).map(|s| scheme.weight(t, s)).sum();
        prop_assert!(total <= 1.0 + 1e-12);
        prop_assert!((1..t).all(|s| scheme.weight(t, s) >= 0.0));
        if t > scheme.neighborhood_size(t) {
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn truncated_zeta_is_monotone_and_bounded(scheme in scheme_strategy(), t in 1u64..500, extra in 0u64..400) {
        let full = scheme.zeta(t).unwrap();
        let a = scheme.zeta_truncated(t, t + extra);
        let b = scheme.zeta_truncated(t, t + extra + 1);
        prop_assert!(a <= b + 1e-15);
        prop_assert!(b <= full + 1e-12);
    }

    #[test]
    fn incremental_kappa_matches_weights(
        scheme in scheme_strategy(),
        actions in prop::collection::vec(0u8..2, 1..300),
    ) {
        let mut st = KappaState::new(scheme);
        for (i, &a) in actions.iter().enumerate() {
            let t = i as u64 + 1;
            let direct = kappa_from_weights(&scheme, st.actions(), t);
            prop_assert!((st.kappa(t) - direct).abs() < 1e-12);
            st.push(a);
        }
        let acts: Vec<Action> = actions.clone();
        let t = acts.len() as u64 + 1;
        prop_assert!((st.kappa(t) - kappa_from_weights(&scheme, &acts, t)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&st.kappa(t)));
    }
}
