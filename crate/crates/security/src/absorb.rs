//! Absorption probabilities and times of the fitness chain.

use nalgebra::{DMatrix, DVector};

use crate::model::{FitnessChain, ThreatModel};
use crate::SecurityError;

fn check_start(tm: &ThreatModel, start: i64) -> Result<(), SecurityError> {
    if tm.beta == 0.0 && tm.gamma() == 0.0 {
        return Err(SecurityError::SingularSystem);
    }
    tm.validate()?;
    if start <= -tm.threshold() || start >= 0 {
        return Err(SecurityError::Domain(format!(
            "start {start} outside the transient range ({}, 0)",
            -tm.threshold()
        )));
    }
    Ok(())
}

/// Probability that the walk started at `start` reaches Δf = 0 before −F(E+1).
///
/// Eliminates every transient state other than the start one at a time,
/// rerouting its mass to its neighbours. The self-loop complement is taken as
/// the sum of the outgoing entries instead of `1 − p_kk`, so no subtraction
/// occurs and tiny probabilities keep full relative precision.
pub fn attack_success_probability(tm: &ThreatModel, start: i64) -> Result<f64, SecurityError> {
    check_start(tm, start)?;
    let chain = FitnessChain::new(tm);
    let n = chain.size();
    let d = n - 1;
    let s = chain.state_index(start);
    let mut p = chain.matrix;

    // Outer states first so fill-in stays inside the jump band.
    let order = (1..s).chain((s + 1..d).rev());
    for k in order {
        let out: f64 = (0..n).filter(|&j| j != k).map(|j| p[k * n + j]).sum();
        if out == 0.0 {
            return Err(SecurityError::SingularSystem);
        }
        let row_k: Vec<(usize, f64)> = (0..n)
            .filter(|&j| j != k && p[k * n + j] != 0.0)
            .map(|j| (j, p[k * n + j] / out))
            .collect();
        for i in 1..d {
            if i == k {
                continue;
            }
            let a = p[i * n + k];
            if a == 0.0 {
                continue;
            }
            p[i * n + k] = 0.0;
            for &(j, w) in &row_k {
                p[i * n + j] += a * w;
            }
        }
    }
    let win = p[s * n + d];
    let lose = p[s * n];
    if win + lose == 0.0 {
        return Err(SecurityError::SingularSystem);
    }
    Ok(win / (win + lose))
}

fn transient_system(tm: &ThreatModel) -> (DMatrix<f64>, DVector<f64>) {
    // (I − Q) over Δf = −D+1 … −1 and the one-step success column.
    let chain = FitnessChain::new(tm);
    let d = chain.size() - 1;
    let m = d - 1;
    let a = DMatrix::from_fn(m, m, |r, c| {
        let q = chain.get(r + 1, c + 1);
        if r == c {
            1.0 - q
        } else {
            -q
        }
    });
    let r = DVector::from_fn(m, |i, _| chain.get(i + 1, d));
    (a, r)
}

fn solve_refined(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, SecurityError> {
    let lu = a.clone().lu();
    let mut x = lu.solve(b).ok_or(SecurityError::SingularSystem)?;
    let residual = b - a * &x;
    if let Some(dx) = lu.solve(&residual) {
        x += dx;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SecurityError::SingularSystem);
    }
    Ok(x)
}

/// Same quantity as [`attack_success_probability`] through a dense LU solve
/// of (I − Q)h = R with one round of iterative refinement. Loses relative
/// accuracy once the answer approaches machine epsilon.
pub fn attack_success_probability_lu(tm: &ThreatModel, start: i64) -> Result<f64, SecurityError> {
    check_start(tm, start)?;
    let (a, r) = transient_system(tm);
    let h = solve_refined(&a, &r)?;
    Ok(h[(start + tm.threshold() - 1) as usize])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DurationStats {
    pub mean: f64,
    pub std_dev: f64,
}

/// Expected number of slots until absorption and its standard deviation,
/// from t = N·1 and Var = (2N − I)t − t∘t with N = (I − Q)⁻¹.
pub fn attack_duration_stats(tm: &ThreatModel, start: i64) -> Result<DurationStats, SecurityError> {
    check_start(tm, start)?;
    let (a, _) = transient_system(tm);
    let ones = DVector::from_element(a.nrows(), 1.0);
    let t = solve_refined(&a, &ones)?;
    let nt = solve_refined(&a, &t)?;
    let i = (start + tm.threshold() - 1) as usize;
    let var = 2.0 * nt[i] - t[i] - t[i] * t[i];
    Ok(DurationStats {
        mean: t[i],
        std_dev: var.max(0.0).sqrt(),
    })
}
