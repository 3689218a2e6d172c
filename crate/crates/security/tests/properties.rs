use blockclique_security::{
    attack_success_probability, attack_success_probability_lu, closed_form_success,
    newcomer_safety_threshold, FitnessChain, ThreatModel,
};
use proptest::prelude::*;

proptest! {
    #[test]
    fn chain_is_row_stochastic(beta in 0.0f64..0.99, mu in 0.0f64..0.99, f in 1u32..12, e in 0u32..10) {
        let chain = FitnessChain::new(&ThreatModel::new(beta, mu, f, e).unwrap());
        for s in chain.row_sums() {
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn elimination_matches_dense_solve(beta in 0.05f64..0.6, mu in 0.0f64..0.3, f in 2u32..10, e in 0u32..5, frac in 0.0f64..1.0) {
        let tm = ThreatModel::new(beta, mu, f, e).unwrap();
        let d = tm.threshold();
        let start = -1 - ((d - 2) as f64 * frac) as i64;
        let a = attack_success_probability(&tm, start).unwrap();
        let b = attack_success_probability_lu(&tm, start).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((a - b).abs() <= 1e-10 * a + 1e-14, "{} {}", a, b);
    }

    #[test]
    fn numeric_matches_closed_form(beta in 0.01f64..0.45, mu in 0.0f64..0.05, f in 1u32..100) {
        let tm = ThreatModel::new(beta, mu, f, 0).unwrap();
        prop_assume!(tm.beta < tm.gamma());
        prop_assume!(f > 1);
        let numeric = attack_success_probability(&tm, tm.default_start()).unwrap();
        let exact = closed_form_success(&tm).unwrap();
        prop_assert!(((numeric - exact) / exact).abs() < 1e-9);
    }

    #[test]
    fn success_non_increasing_in_finality(beta in 0.05f64..0.45, mu in 0.0f64..0.05, e in 0u32..4, f in 2u32..20) {
        let a = ThreatModel::new(beta, mu, f, e).unwrap();
        let b = ThreatModel::new(beta, mu, f + 1, e).unwrap();
        let pa = attack_success_probability(&a, a.default_start()).unwrap();
        let pb = attack_success_probability(&b, b.default_start()).unwrap();
        prop_assert!(pb <= pa * (1.0 + 1e-12));
    }

    #[test]
    fn newcomer_threshold_decreases_in_mu(mu in 0.0f64..0.9, dmu in 0.001f64..0.09, e in 0u32..16) {
        let a = newcomer_safety_threshold(mu, e).unwrap();
        let b = newcomer_safety_threshold(mu + dmu, e).unwrap();
        prop_assert!(b < a);
        prop_assert!((a - (1.0 - mu) / (2.0 - mu)).abs() < 1e-9);
    }
}

#[test]
fn endorsements_reduce_success_probability() {
    let mut prev = 1.0;
    for e in 0..=8 {
        let tm = ThreatModel::new(0.45, 0.01, 64, e).unwrap();
        let p = attack_success_probability(&tm, tm.default_start()).unwrap();
        assert!(p < prev, "E={e}: {p}");
        prev = p;
    }
}

#[test]
fn reference_operating_points() {
    let tm = ThreatModel::new(0.45, 0.01, 64, 0).unwrap();
    let p = attack_success_probability(&tm, tm.default_start()).unwrap();
    assert!(p > 0.5e-6 && p < 2e-6, "{p}");
    let tm = ThreatModel::new(0.45, 0.01, 64, 8).unwrap();
    let p = attack_success_probability(&tm, tm.default_start()).unwrap();
    assert!((p.log10() + 16.0).abs() <= 1.0, "{p}");
    assert_eq!((newcomer_safety_threshold(0.01, 8).unwrap() * 1000.0).round(), 497.0);
}
