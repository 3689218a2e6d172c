//! Monte Carlo simulation of the fitness-difference walk of a finality fork
//! attack, slot by slot.
//!
//! Each slot is simulated mechanically: the slot goes to the attacker with
//! probability β, in which case every one of the E endorsement slots is
//! independently filled by the attacker with probability β; otherwise the
//! honest producer misses with probability μ, and when it does not, each
//! endorsement slot is filled by an honest node with probability γ.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
pub struct WalkSpec {
    pub beta: f64,
    pub mu: f64,
    pub finality: u32,
    pub endorsement_slots: u32,
    /// Starting fitness difference, in `(-F(E+1), 0)`.
    pub start: i64,
}

impl WalkSpec {
    pub fn threshold(&self) -> i64 {
        i64::from(self.finality) * (i64::from(self.endorsement_slots) + 1)
    }

    pub fn gamma(&self) -> f64 {
        (1.0 - self.beta) * (1.0 - self.mu)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WalkOutcome {
    pub success: bool,
    pub slots: u64,
}

fn threshold_u64(p: f64) -> u64 {
    if p >= 1.0 {
        u64::MAX
    } else {
        (p * 18_446_744_073_709_551_616.0) as u64
    }
}

pub fn walk(spec: &WalkSpec, rng: &mut impl RngCore) -> WalkOutcome {
    let beta = threshold_u64(spec.beta);
    let miss = threshold_u64(spec.mu);
    let gamma_endorse = threshold_u64(spec.gamma());
    let barrier = -spec.threshold();
    let mut df = spec.start;
    let mut slots = 0u64;
    while df < 0 && df > barrier {
        slots += 1;
        if rng.next_u64() < beta {
            let mut jump = 1;
            for _ in 0..spec.endorsement_slots {
                if rng.next_u64() < beta {
                    jump += 1;
                }
            }
            df += jump;
        } else if rng.next_u64() >= miss {
            let mut jump = 1;
            for _ in 0..spec.endorsement_slots {
                if rng.next_u64() < gamma_endorse {
                    jump += 1;
                }
            }
            df -= jump;
        }
    }
    WalkOutcome {
        success: df >= 0,
        slots,
    }
}

/// Aggregate of many walks.
#[derive(Debug, Clone, Default)]
pub struct WalkStats {
    pub walks: u64,
    pub successes: u64,
    pub sum: f64,
    pub sum_sq: f64,
    /// `exceed[i]` counts walks lasting more than `tail_points[i]` slots.
    pub tail_points: Vec<u64>,
    pub exceed: Vec<u64>,
}

impl WalkStats {
    pub fn mean(&self) -> f64 {
        self.sum / self.walks as f64
    }

    pub fn std_dev(&self) -> f64 {
        let m = self.mean();
        (self.sum_sq / self.walks as f64 - m * m).max(0.0).sqrt()
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        self.std_dev() / (self.walks as f64).sqrt()
    }

    pub fn success_rate(&self) -> f64 {
        self.successes as f64 / self.walks as f64
    }

    fn merge(&mut self, other: WalkStats) {
        self.walks += other.walks;
        self.successes += other.successes;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        for (a, b) in self.exceed.iter_mut().zip(other.exceed) {
            *a += b;
        }
    }
}

/// Runs `walks` walks split over `threads` deterministic streams.
pub fn run_walks(
    spec: &WalkSpec,
    walks: u64,
    seed: u64,
    threads: usize,
    tail_points: &[u64],
) -> WalkStats {
    let threads = threads.max(1) as u64;
    let chunks: Vec<WalkStats> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|k| {
                let n = walks / threads + u64::from(k < walks % threads);
                s.spawn(move || {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (k.wrapping_mul(0x9e37_79b9_7f4a_7c15)));
                    let mut st = WalkStats {
                        tail_points: tail_points.to_vec(),
                        exceed: vec![0; tail_points.len()],
                        ..Default::default()
                    };
                    for _ in 0..n {
                        let o = walk(spec, &mut rng);
                        st.walks += 1;
                        st.successes += u64::from(o.success);
                        let d = o.slots as f64;
                        st.sum += d;
                        st.sum_sq += d * d;
                        for (i, &p) in tail_points.iter().enumerate() {
                            if o.slots > p {
                                st.exceed[i] += 1;
                            }
                        }
                    }
                    st
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut total = WalkStats {
        tail_points: tail_points.to_vec(),
        exceed: vec![0; tail_points.len()],
        ..Default::default()
    };
    for c in chunks {
        total.merge(c);
    }
    total
}
