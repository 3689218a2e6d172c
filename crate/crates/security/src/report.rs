//! Serializable summaries for the command line.

use serde::Serialize;

use crate::absorb::{attack_duration_stats, attack_success_probability};
use crate::bounds::{closed_form_success, duration_tail_bound, newcomer_safety_threshold};
use crate::model::ThreatModel;
use crate::SecurityError;

#[derive(Debug, Clone, Serialize)]
pub struct TailPoint {
    pub n: u64,
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AttackReport {
    pub model: ThreatModel,
    pub gamma: f64,
    pub start: i64,
    pub p_success: f64,
    pub log10_p: f64,
    /// Present when E = 0 and β < γ.
    pub closed_form: Option<f64>,
    pub mean_slots: f64,
    pub std_slots: f64,
    pub tail_bounds: Vec<TailPoint>,
    pub beta_star: f64,
    pub drift_toward_attacker: bool,
    /// Set when a slot interval was supplied and δ ≥ t0/2.
    pub delay_assumption_violated: bool,
}

pub fn attack_report(
    tm: &ThreatModel,
    start: Option<i64>,
    tail_points: &[u64],
    slot_interval: Option<f64>,
) -> Result<AttackReport, SecurityError> {
    let start = start.unwrap_or_else(|| tm.default_start());
    let p = attack_success_probability(tm, start)?;
    let d = attack_duration_stats(tm, start)?;
    let closed_form = if tm.endorsement_slots == 0 && tm.beta < tm.gamma() {
        Some(closed_form_success(tm)?)
    } else {
        None
    };
    Ok(AttackReport {
        model: *tm,
        gamma: tm.gamma(),
        start,
        p_success: p,
        log10_p: p.log10(),
        closed_form,
        mean_slots: d.mean,
        std_slots: d.std_dev,
        tail_bounds: tail_points
            .iter()
            .map(|&n| TailPoint {
                n,
                bound: duration_tail_bound(tm, n),
            })
            .collect(),
        beta_star: newcomer_safety_threshold(tm.mu, tm.endorsement_slots)?,
        drift_toward_attacker: tm.beta >= tm.gamma(),
        delay_assumption_violated: slot_interval.is_some_and(|t0| !tm.delay_assumption_holds(t0)),
    })
}

/// One point of a success-probability curve.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub beta: f64,
    pub mu: f64,
    pub finality: u32,
    pub endorsement_slots: u32,
    pub start: i64,
    pub p_success: f64,
    pub log10_p: f64,
}

/// Success probability for each β in `betas`, other parameters from `base`,
/// each at its default start unless `start` is given.
pub fn sweep_beta(
    base: &ThreatModel,
    betas: &[f64],
    start: Option<i64>,
) -> Result<Vec<SweepRow>, SecurityError> {
    betas
        .iter()
        .map(|&beta| {
            let tm = ThreatModel { beta, ..*base };
            let start = start.unwrap_or_else(|| tm.default_start());
            let p = attack_success_probability(&tm, start)?;
            Ok(SweepRow {
                beta,
                mu: tm.mu,
                finality: tm.finality,
                endorsement_slots: tm.endorsement_slots,
                start,
                p_success: p,
                log10_p: p.log10(),
            })
        })
        .collect()
}

/// Parses `lo:hi:step` into an inclusive grid, tolerant of rounding at `hi`.
pub fn parse_range(spec: &str) -> Result<Vec<f64>, SecurityError> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || SecurityError::Domain(format!("expected lo:hi:step, got {spec:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    let (lo, hi, step) = (nums[0], nums[1], nums[2]);
    if step.is_nan() || step <= 0.0 || hi < lo {
        return Err(bad());
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize;
    // Trim float noise so 0.05 + 2·0.05 prints as 0.15.
    Ok((0..=count)
        .map(|k| ((lo + k as f64 * step) * 1e12).round() / 1e12)
        .collect())
}
