//! Differentially private decentralized least-squares regression.
//!
//! Nodes of a connected network each hold a private slice of a regression
//! problem. Every round they publish their estimate perturbed by Laplace
//! noise, project what they receive onto a bounded ball, and take a consensus
//! plus local-gradient step. This crate simulates that protocol, computes its
//! closed-form privacy budget, audits the privacy loss realized on recorded
//! runs, and checks how the estimation error grows.

// `!(x > 0.0)` is used deliberately: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Round-indexed loops read several parallel arrays at the same `t`.
#![allow(clippy::needless_range_loop)]

pub mod audit;
pub mod data;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod io;
pub mod projection;
pub mod randomness;
pub mod schedules;
pub mod topology;
pub mod transport;

pub use audit::{audit, monte_carlo_dp_check, realized_privacy_loss, MonteCarloReport, PrivacyAuditReport};
pub use data::{
    adjacency_params, closed_form_solution, generate_synthetic, local_gradient, make_adjacent, spectral_norm,
    stack, AdjacencyParams, LocalDataset, NetworkDataset, SyntheticSpec,
};
pub use engine::{
    replay_transition_mean, run_baseline, run_private, NoiseMode, RunKind, RunSetup, Trajectory,
};
pub use error::{Error, Result};
pub use experiments::{
    error_trajectory, growth_envelope_check, mean_error_over_trials, EnvelopeVerdict, ErrorSeries,
};
pub use projection::{project, suggest_omega, OmegaBall};
pub use randomness::{laplace_log_density, sample_laplace_vector, RngStream};
pub use schedules::{
    alpha, check_budget_regime, noise_scale, per_step_loss_bound, privacy_budget, BudgetInputs,
    BudgetSummary, RegimeVerdict, ScheduleParams,
};
pub use topology::{build_graph, metropolis_weights, validate_weights, NetworkGraph, WeightMatrix};
