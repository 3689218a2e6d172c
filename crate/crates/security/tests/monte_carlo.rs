//! Matrix results against walks simulated slot by slot.

use blockclique_security::{
    attack_duration_stats, attack_success_probability, closed_form_success, duration_tail_bound,
    ThreatModel,
};
use blockclique_testkit::walk::{run_walks, WalkSpec};

fn spec(tm: &ThreatModel, start: i64) -> WalkSpec {
    WalkSpec {
        beta: tm.beta,
        mu: tm.mu,
        finality: tm.finality,
        endorsement_slots: tm.endorsement_slots,
        start,
    }
}

fn threads() -> usize {
    std::thread::available_parallelism().map_or(4, |n| n.get())
}

#[test]
fn absorption_frequency_within_binomial_band() {
    for (beta, mu, f, e, seed) in [(0.4, 0.05, 4, 2, 1), (0.3, 0.0, 5, 0, 2), (0.45, 0.01, 3, 4, 3)] {
        let tm = ThreatModel::new(beta, mu, f, e).unwrap();
        let start = tm.default_start();
        let p = attack_success_probability(&tm, start).unwrap();
        let walks = 1_000_000;
        let st = run_walks(&spec(&tm, start), walks, seed, threads(), &[]);
        let sigma = (p * (1.0 - p) / walks as f64).sqrt();
        assert!(
            (st.success_rate() - p).abs() <= 4.0 * sigma,
            "beta={beta} E={e}: mc {} vs {p} (sigma {sigma})",
            st.success_rate()
        );
    }
}

#[test]
fn duration_moments_match_simulation() {
    for (beta, mu, f, e, seed) in [(0.5, 0.01, 6, 2, 11), (0.3, 0.1, 8, 1, 12)] {
        let tm = ThreatModel::new(beta, mu, f, e).unwrap();
        let start = tm.default_start();
        let d = attack_duration_stats(&tm, start).unwrap();
        let st = run_walks(&spec(&tm, start), 400_000, seed, threads(), &[]);
        assert!(
            (st.mean() - d.mean).abs() <= 3.0 * st.std_error(),
            "mean {} vs {}",
            st.mean(),
            d.mean
        );
        assert!((st.std_dev() - d.std_dev).abs() / d.std_dev < 0.02);
    }
}

#[test]
fn tail_frequencies_respect_bound() {
    let points: Vec<u64> = (0..40).map(|k| k * 6).collect();
    for e in [0, 2] {
        let tm = ThreatModel::new(0.3, 0.0, 8, e).unwrap();
        let start = tm.default_start();
        let walks = 100_000;
        let st = run_walks(&spec(&tm, start), walks, 40 + u64::from(e), threads(), &points);
        for (&n, &exceed) in points.iter().zip(&st.exceed) {
            let freq = exceed as f64 / walks as f64;
            assert!(freq <= duration_tail_bound(&tm, n), "E={e} n={n}: {freq}");
        }
    }
}

#[test]
fn closed_form_grid() {
    for mu in [0.0, 0.01] {
        for f in [4, 8, 16, 32, 64] {
            for k in 1..=9 {
                let tm = ThreatModel::new(0.05 * k as f64, mu, f, 0).unwrap();
                let numeric = attack_success_probability(&tm, tm.default_start()).unwrap();
                let exact = closed_form_success(&tm).unwrap();
                assert!(
                    ((numeric - exact) / exact).abs() < 1e-9,
                    "beta={} F={f} mu={mu}: {numeric} vs {exact}",
                    tm.beta
                );
            }
        }
    }
}
