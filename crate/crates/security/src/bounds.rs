//! Closed-form results for the E = 0 walk and related bounds.

use crate::model::ThreatModel;
use crate::SecurityError;

/// Gambler's-ruin success probability from Δf = −(F−1) when E = 0:
/// (r − 1)/(r^F − 1) with r = γ/β.
pub fn closed_form_success(tm: &ThreatModel) -> Result<f64, SecurityError> {
    tm.validate()?;
    if tm.endorsement_slots != 0 {
        return Err(SecurityError::Domain(
            "closed form only holds without endorsements (E = 0)".into(),
        ));
    }
    let gamma = tm.gamma();
    if tm.beta >= gamma {
        return Err(SecurityError::Domain(format!(
            "closed form needs beta < gamma, got beta = {} and gamma = {gamma}",
            tm.beta
        )));
    }
    if tm.beta == 0.0 {
        return Ok(if tm.finality == 1 { 1.0 } else { 0.0 });
    }
    // Written in x = r^-F so large F does not overflow.
    let r = gamma / tm.beta;
    let x = (tm.beta / gamma).powi(tm.finality as i32);
    Ok((r - 1.0) * x / (1.0 - x))
}

/// Upper bound on P(duration > n):
/// (1 − β^D − γ^D)^⌊n/D⌋ with D = F(E+1).
pub fn duration_tail_bound(tm: &ThreatModel, n: u64) -> f64 {
    let d = tm.threshold();
    let k = n / d as u64;
    if k == 0 {
        return 1.0;
    }
    let escape = tm.beta.powi(d as i32) + tm.gamma().powi(d as i32);
    (k as f64 * (-escape).ln_1p()).exp()
}

/// Largest β for which the attacker's expected fitness per slot, β(1+βE),
/// stays below the honest γ(1+γE). Found by bisection to 1e-12.
pub fn newcomer_safety_threshold(mu: f64, endorsement_slots: u32) -> Result<f64, SecurityError> {
    if !(0.0..1.0).contains(&mu) {
        return Err(SecurityError::Domain(format!("mu must lie in [0, 1), got {mu}")));
    }
    let e = f64::from(endorsement_slots);
    let margin = |beta: f64| {
        let gamma = (1.0 - beta) * (1.0 - mu);
        gamma * (1.0 + gamma * e) - beta * (1.0 + beta * e)
    };
    // margin is strictly decreasing on [0, 1], positive at 0, negative at 1.
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if margin(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}
