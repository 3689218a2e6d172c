//! Finality fork attack analysis: the absorbing Markov chain over the fitness
//! difference between an attacker clique and the blockclique.

pub mod absorb;
pub mod bounds;
pub mod model;
pub mod report;

pub use absorb::{
    attack_duration_stats, attack_success_probability, attack_success_probability_lu,
    DurationStats,
};
pub use bounds::{closed_form_success, duration_tail_bound, newcomer_safety_threshold};
pub use model::{jump_probabilities, FitnessChain, JumpProbabilities, ThreatModel};
pub use report::{attack_report, parse_range, sweep_beta, AttackReport, SweepRow, TailPoint};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SecurityError {
    #[error("{0}")]
    Domain(String),
    #[error("singular transient system (beta and gamma both zero)")]
    SingularSystem,
}
