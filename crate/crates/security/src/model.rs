//! Threat model and the fitness-difference chain it induces.

use serde::{Deserialize, Serialize};

use crate::SecurityError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreatModel {
    /// Attacker share of the selection resource, β.
    pub beta: f64,
    /// Fraction of honest resource that misses its slots, μ.
    pub mu: f64,
    pub finality: u32,
    pub endorsement_slots: u32,
    /// Resource snapshot delay K in seconds. Carried, not modelled.
    #[serde(default)]
    pub snapshot_delay: f64,
    /// Maximum network delay δ in seconds. The analysis assumes δ < t0/2.
    #[serde(default)]
    pub max_delay: f64,
}

impl ThreatModel {
    pub fn new(beta: f64, mu: f64, finality: u32, endorsement_slots: u32) -> Result<Self, SecurityError> {
        let tm = ThreatModel {
            beta,
            mu,
            finality,
            endorsement_slots,
            snapshot_delay: 0.0,
            max_delay: 0.0,
        };
        tm.validate()?;
        Ok(tm)
    }

    pub fn validate(&self) -> Result<(), SecurityError> {
        if !(0.0..1.0).contains(&self.beta) {
            return Err(SecurityError::Domain(format!("beta must lie in [0, 1), got {}", self.beta)));
        }
        if !(0.0..1.0).contains(&self.mu) {
            return Err(SecurityError::Domain(format!("mu must lie in [0, 1), got {}", self.mu)));
        }
        if self.finality == 0 {
            return Err(SecurityError::Domain("finality must be positive".into()));
        }
        if !(self.snapshot_delay >= 0.0 && self.max_delay >= 0.0) {
            return Err(SecurityError::Domain("delays must be non-negative".into()));
        }
        Ok(())
    }

    /// Active honest share, γ = (1−β)(1−μ).
    pub fn gamma(&self) -> f64 {
        (1.0 - self.beta) * (1.0 - self.mu)
    }

    /// Fitness gap at which the losing side settles, F(E+1).
    pub fn threshold(&self) -> i64 {
        i64::from(self.finality) * (i64::from(self.endorsement_slots) + 1)
    }

    /// −(F−1)(E+1): one block away from finality.
    pub fn default_start(&self) -> i64 {
        -(i64::from(self.finality) - 1) * (i64::from(self.endorsement_slots) + 1)
    }

    /// False when δ ≥ t0/2, where the drift argument no longer applies.
    pub fn delay_assumption_holds(&self, slot_interval: f64) -> bool {
        self.max_delay < slot_interval / 2.0
    }
}

/// One-slot jump distribution of the fitness difference.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpProbabilities {
    /// `forward[n-1]` is the probability of a +n jump, n = 1..=E+1.
    pub forward: Vec<f64>,
    /// `backward[n-1]` is the probability of a −n jump.
    pub backward: Vec<f64>,
    pub stay: f64,
}

fn binomial_terms(e: u32, p: f64) -> Vec<f64> {
    // C(E, k) p^k (1-p)^(E-k) for k = 0..=E, built in log space so large E
    // with tiny p does not underflow prematurely.
    let e = e as usize;
    let mut out = Vec::with_capacity(e + 1);
    let mut log_c = 0.0f64;
    for k in 0..=e {
        if k > 0 {
            log_c += ((e - k + 1) as f64).ln() - (k as f64).ln();
        }
        let v = if p == 0.0 {
            if k == 0 { 1.0 } else { 0.0 }
        } else if p == 1.0 {
            if k == e { 1.0 } else { 0.0 }
        } else {
            (log_c + k as f64 * p.ln() + (e - k) as f64 * (-p).ln_1p()).exp()
        };
        out.push(v);
    }
    out
}

pub fn jump_probabilities(tm: &ThreatModel) -> JumpProbabilities {
    let gamma = tm.gamma();
    let forward = binomial_terms(tm.endorsement_slots, tm.beta)
        .into_iter()
        .map(|b| tm.beta * b)
        .collect();
    let backward = binomial_terms(tm.endorsement_slots, gamma)
        .into_iter()
        .map(|b| gamma * b)
        .collect();
    JumpProbabilities {
        forward,
        backward,
        stay: (1.0 - tm.beta) * tm.mu,
    }
}

/// The chain over Δf ∈ {−D, …, 0}, D = F(E+1). State `k` in the matrix is
/// Δf = k − D, so index 0 is the failure barrier and index D is success.
#[derive(Debug, Clone)]
pub struct FitnessChain {
    pub threshold: i64,
    /// Row-major (D+1)×(D+1) transition matrix.
    pub matrix: Vec<f64>,
}

impl FitnessChain {
    pub fn new(tm: &ThreatModel) -> Self {
        let d = tm.threshold() as usize;
        let size = d + 1;
        let jumps = jump_probabilities(tm);
        let mut matrix = vec![0.0; size * size];
        matrix[0] = 1.0;
        matrix[size * size - 1] = 1.0;
        for i in 1..d {
            let row = &mut matrix[i * size..(i + 1) * size];
            row[i] += jumps.stay;
            for (n, &p) in jumps.forward.iter().enumerate() {
                row[(i + n + 1).min(d)] += p;
            }
            for (n, &p) in jumps.backward.iter().enumerate() {
                row[i.saturating_sub(n + 1)] += p;
            }
        }
        FitnessChain {
            threshold: d as i64,
            matrix,
        }
    }

    pub fn size(&self) -> usize {
        self.threshold as usize + 1
    }

    pub fn state_index(&self, delta_f: i64) -> usize {
        (delta_f + self.threshold) as usize
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.matrix[from * self.size() + to]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.matrix.chunks(self.size()).map(|r| r.iter().sum()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_jumps() {
        let j = jump_probabilities(&ThreatModel::new(0.3, 0.0, 4, 0).unwrap());
        assert!((j.forward[0] - 0.3).abs() < 1e-15);
        assert!((j.backward[0] - 0.7).abs() < 1e-15);
        assert_eq!(j.stay, 0.0);
    }

    #[test]
    fn two_point_forward_jump() {
        let j = jump_probabilities(&ThreatModel::new(0.2, 0.0, 4, 2).unwrap());
        assert!((j.forward[1] - 0.064).abs() < 1e-15);
        assert_eq!(j.forward.len(), 3);
    }

    #[test]
    fn jumps_sum_to_one() {
        for &(b, m, e) in &[(0.1, 0.0, 0), (0.45, 0.01, 8), (0.0, 0.3, 3), (0.7, 0.9, 12)] {
            let j = jump_probabilities(&ThreatModel::new(b, m, 4, e).unwrap());
            let s: f64 = j.forward.iter().chain(&j.backward).sum::<f64>() + j.stay;
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn chain_rows_and_barriers() {
        let c = FitnessChain::new(&ThreatModel::new(0.4, 0.05, 5, 3).unwrap());
        assert_eq!(c.size(), 21);
        for s in c.row_sums() {
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert_eq!(c.get(0, 0), 1.0);
        assert_eq!(c.get(20, 20), 1.0);
        assert_eq!(c.state_index(0), 20);
        // From Δf = -1, any forward jump lands on success.
        let i = c.state_index(-1);
        let fwd: f64 = jump_probabilities(&ThreatModel::new(0.4, 0.05, 5, 3).unwrap())
            .forward
            .iter()
            .sum();
        assert!((c.get(i, 20) - fwd).abs() < 1e-15);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(ThreatModel::new(1.0, 0.0, 4, 0).is_err());
        assert!(ThreatModel::new(0.2, -0.1, 4, 0).is_err());
        assert!(ThreatModel::new(0.2, 0.0, 0, 0).is_err());
    }
}
