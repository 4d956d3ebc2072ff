//! Realized privacy loss of recorded runs.
//!
//! For a trajectory recorded under dataset `d`, the release at round `t >= 1`
//! has density `Lap(beta~(t) - mu(t-1); v(t))` where `mu(t-1)` is the replayed
//! transition mean. Swapping in an adjacent dataset only changes the mean, so
//! the log-likelihood ratio of the observed release is computed exactly from
//! the same observations. The release at round 0 does not depend on the data
//! and is charged zero.
//!
//! Report entry `t` therefore pairs the loss of release `t` with the bound of
//! the step that produced it, `eps_step(t - 1)`; entry 0 has bound 0.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::data::{differing_nodes, AdjacencyParams, NetworkDataset};
use crate::engine::{replay_transition_mean, run_private, NoiseMode, RunSetup, Trajectory};
use crate::error::{Error, Result};
use crate::projection::OmegaBall;
use crate::randomness::{derive_seed, laplace_log_density};
use crate::schedules::{
    budget_summary, noise_scale, per_step_loss_bound, BudgetInputs, BudgetSummary, ScheduleParams,
};
use crate::topology::WeightMatrix;

/// Slack allowed when comparing realized losses to their bounds.
pub const AUDIT_TOLERANCE: f64 = 1e-9;

fn flatten(vectors: &[DVector<f64>]) -> Vec<f64> {
    vectors.iter().flat_map(|v| v.iter().copied()).collect()
}

/// Signed log-likelihood ratios `log p_d - log p_adj` per release; entry 0 is 0.
pub fn signed_privacy_loss(
    traj: &Trajectory,
    d: &NetworkDataset,
    d_adj: &NetworkDataset,
    weights: &WeightMatrix,
    region: &OmegaBall,
    params: &ScheduleParams,
) -> Result<Vec<f64>> {
    if traj.fingerprint.noise != NoiseMode::Laplace {
        return Err(Error::NonAuditable(
            "trajectory was recorded without noise; the release has no density".into(),
        ));
    }
    let differing = differing_nodes(d, d_adj)?;
    if differing.len() > 1 {
        return Err(Error::NotAdjacent(format!(
            "datasets differ at nodes {differing:?}"
        )));
    }
    if traj.node_count() != d.node_count() || traj.features() != d.features() {
        return Err(Error::ShapeMismatch(format!(
            "trajectory is {}x{}, dataset is {}x{}",
            traj.node_count(),
            traj.features(),
            d.node_count(),
            d.features()
        )));
    }
    let mut losses = vec![0.0; traj.rounds()];
    if differing.is_empty() {
        return Ok(losses);
    }
    for t in 1..traj.rounds() {
        let observed = flatten(&traj.published[t]);
        let mu = flatten(&replay_transition_mean(
            d,
            weights,
            region,
            params,
            &traj.published[t - 1],
            t - 1,
        )?);
        let mu_adj = flatten(&replay_transition_mean(
            d_adj,
            weights,
            region,
            params,
            &traj.published[t - 1],
            t - 1,
        )?);
        let scale = noise_scale(t, params);
        let centered: Vec<f64> = observed.iter().zip(&mu).map(|(x, m)| x - m).collect();
        let centered_adj: Vec<f64> = observed.iter().zip(&mu_adj).map(|(x, m)| x - m).collect();
        losses[t] = laplace_log_density(&centered, scale)? - laplace_log_density(&centered_adj, scale)?;
    }
    Ok(losses)
}

/// Absolute per-release privacy loss; see the module docs for indexing.
pub fn realized_privacy_loss(
    traj: &Trajectory,
    d: &NetworkDataset,
    d_adj: &NetworkDataset,
    weights: &WeightMatrix,
    region: &OmegaBall,
    params: &ScheduleParams,
) -> Result<Vec<f64>> {
    Ok(signed_privacy_loss(traj, d, d_adj, weights, region, params)?
        .into_iter()
        .map(f64::abs)
        .collect())
}

/// Bound applicable to each release: 0 for round 0, `eps_step(t - 1)` after.
pub fn release_bounds(rounds: usize, params: &ScheduleParams, b: &BudgetInputs) -> Vec<f64> {
    (0..rounds)
        .map(|t| {
            if t == 0 {
                0.0
            } else {
                per_step_loss_bound(t - 1, params, b)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyAuditReport {
    /// Max over trials of the loss of each release.
    pub per_step_realized: Vec<f64>,
    pub per_step_bound: Vec<f64>,
    /// Max over trials of the summed loss of the whole trajectory.
    pub total_realized: f64,
    pub budget: BudgetSummary,
    pub trials: usize,
}

impl PrivacyAuditReport {
    pub fn step_passes(&self) -> Vec<bool> {
        self.per_step_realized
            .iter()
            .zip(&self.per_step_bound)
            .map(|(r, b)| *r <= b + AUDIT_TOLERANCE)
            .collect()
    }

    pub fn margins(&self) -> Vec<f64> {
        self.per_step_bound
            .iter()
            .zip(&self.per_step_realized)
            .map(|(b, r)| b - r)
            .collect()
    }

    /// The closed form is only compared against when its regime holds.
    pub fn regime_violation(&self) -> bool {
        !self.budget.regime.closed_form_valid()
    }

    pub fn total_passes(&self) -> bool {
        self.total_realized <= self.budget.effective() + AUDIT_TOLERANCE
    }

    pub fn passed(&self) -> bool {
        self.step_passes().into_iter().all(|p| p) && self.total_passes()
    }
}

/// Aggregates realized losses over trajectories recorded under `setup`.
pub fn audit(
    trials: &[Trajectory],
    setup: &RunSetup,
    d_adj: &NetworkDataset,
    b: &BudgetInputs,
) -> Result<PrivacyAuditReport> {
    let expected = setup.params_hash();
    if trials.is_empty() {
        return Err(Error::ConfigMismatch("no trajectories to audit".into()));
    }
    if let Some(bad) = trials.iter().find(|t| t.fingerprint.params_hash != expected) {
        return Err(Error::ConfigMismatch(format!(
            "trajectory with seed {:?} has hash {}, expected {expected}",
            bad.fingerprint.seed, bad.fingerprint.params_hash
        )));
    }
    let bounds = AdjacencyParams {
        delta_x: b.delta_x,
        delta_y: b.delta_y,
    };
    let node = differing_nodes(&setup.dataset, d_adj)?;
    if node.len() > 1 {
        return Err(Error::NotAdjacent(format!("datasets differ at nodes {node:?}")));
    }
    for &n in &node {
        bounds
            .certify_local(n, setup.dataset.local(n))
            .and_then(|_| bounds.certify_local(n, d_adj.local(n)))
            .map_err(|e| Error::NotAdjacent(e.to_string()))?;
    }

    let losses = trials
        .par_iter()
        .map(|t| {
            realized_privacy_loss(
                t,
                &setup.dataset,
                d_adj,
                &setup.weights,
                &setup.region,
                &setup.params,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let rounds = setup.rounds;
    let mut per_step_realized = vec![0.0f64; rounds];
    let mut total_realized = 0.0f64;
    for trial in &losses {
        for (acc, l) in per_step_realized.iter_mut().zip(trial) {
            *acc = acc.max(*l);
        }
        total_realized = total_realized.max(trial.iter().sum());
    }
    Ok(PrivacyAuditReport {
        per_step_realized,
        per_step_bound: release_bounds(rounds, &setup.params, b),
        total_realized,
        budget: budget_summary(&setup.params, b),
        trials: trials.len(),
    })
}

/// Runs `trials` private trajectories (seeds derived from `master_seed`) and audits them.
pub fn run_and_audit(
    setup: &RunSetup,
    d_adj: &NetworkDataset,
    b: &BudgetInputs,
    trials: usize,
    master_seed: u64,
) -> Result<PrivacyAuditReport> {
    let trajectories = (0..trials as u64)
        .into_par_iter()
        .map(|r| run_private(setup, derive_seed(master_seed, "trial", r)))
        .collect::<Result<Vec<_>>>()?;
    audit(&trajectories, setup, d_adj, b)
}

/// Two-sided 99% normal quantile used for the Wilson intervals.
pub const WILSON_Z_99: f64 = 2.5758293035489004;
/// Minimum count per histogram cell under each dataset.
pub const MIN_CELL_COUNT: usize = 25;
pub const MIN_MONTE_CARLO_TRIALS: usize = 10_000;
/// Cells span the pooled `[q, 1 - q]` quantile range of each coordinate.
pub const HISTOGRAM_TAIL_QUANTILE: f64 = 0.005;

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellRatio {
    /// Flattened coordinate index `(node - 1) * m + c`.
    pub coordinate: usize,
    pub lower_edge: f64,
    pub upper_edge: f64,
    pub count: usize,
    pub count_adj: usize,
    /// `max(p/p', p'/p)` from point estimates.
    pub ratio: f64,
    /// The same ratio with the numerator at its lower and the denominator at
    /// its upper Wilson bound.
    pub ratio_lower: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloReport {
    pub trials: usize,
    pub bins: usize,
    pub epsilon_step: f64,
    pub cells: Vec<CellRatio>,
}

impl MonteCarloReport {
    pub fn bound_ratio(&self) -> f64 {
        self.epsilon_step.exp()
    }

    pub fn max_ratio(&self) -> f64 {
        self.cells.iter().map(|c| c.ratio).fold(0.0, f64::max)
    }

    pub fn max_ratio_lower(&self) -> f64 {
        self.cells.iter().map(|c| c.ratio_lower).fold(0.0, f64::max)
    }

    /// No cell's ratio exceeds `exp(eps_step(0))` at 99% confidence.
    pub fn passed(&self) -> bool {
        self.max_ratio_lower() <= self.bound_ratio() * (1.0 + AUDIT_TOLERANCE)
    }
}

/// First data-dependent release `beta~(1)` of independent runs.
fn first_release_samples(setup: &RunSetup, trials: usize, seed: u64, family: &str) -> Result<Vec<Vec<f64>>> {
    let mut short = setup.clone();
    short.rounds = 2;
    (0..trials as u64)
        .into_par_iter()
        .map(|r| run_private(&short, derive_seed(seed, family, r)).map(|t| flatten(&t.published[1])))
        .collect()
}

/// Histograms each coordinate of the first data-dependent release under `d`
/// and `d_adj` and compares cell probability ratios against
/// `exp(eps_step(0))`.
pub fn monte_carlo_dp_check(
    setup: &RunSetup,
    d_adj: &NetworkDataset,
    b: &BudgetInputs,
    trials: usize,
    bins: usize,
    seed: u64,
) -> Result<MonteCarloReport> {
    if trials < MIN_MONTE_CARLO_TRIALS {
        return Err(Error::InsufficientTrials(format!(
            "{trials} trials, need at least {MIN_MONTE_CARLO_TRIALS}"
        )));
    }
    if bins == 0 {
        return Err(Error::InsufficientTrials("need at least one bin".into()));
    }
    if setup.noise != NoiseMode::Laplace {
        return Err(Error::NonAuditable("noise is disabled".into()));
    }
    if differing_nodes(&setup.dataset, d_adj)?.len() > 1 {
        return Err(Error::NotAdjacent("datasets differ at more than one node".into()));
    }
    let mut adj_setup = setup.clone();
    adj_setup.dataset = d_adj.clone();
    let samples = first_release_samples(setup, trials, seed, "mc-d")?;
    let samples_adj = first_release_samples(&adj_setup, trials, seed, "mc-adj")?;

    let dims = setup.node_count() * setup.features();
    let mut cells = Vec::with_capacity(dims * bins);
    for c in 0..dims {
        let xs: Vec<f64> = samples.iter().map(|s| s[c]).collect();
        let ys: Vec<f64> = samples_adj.iter().map(|s| s[c]).collect();
        let mut pooled: Vec<f64> = xs.iter().chain(&ys).copied().collect();
        pooled.sort_by(f64::total_cmp);
        let at = |q: f64| pooled[((pooled.len() - 1) as f64 * q).round() as usize];
        let lo = at(HISTOGRAM_TAIL_QUANTILE);
        let hi = at(1.0 - HISTOGRAM_TAIL_QUANTILE);
        let width = (hi - lo) / bins as f64;
        if !(width > 0.0) {
            return Err(Error::InsufficientTrials(format!(
                "coordinate {c} has a degenerate sample range"
            )));
        }
        let histogram = |values: &[f64]| {
            let mut counts = vec![0usize; bins];
            for &v in values {
                if v >= lo && v <= hi {
                    let idx = (((v - lo) / width) as usize).min(bins - 1);
                    counts[idx] += 1;
                }
            }
            counts
        };
        let counts = histogram(&xs);
        let counts_adj = histogram(&ys);
        for cell in 0..bins {
            let (n, n_adj) = (counts[cell], counts_adj[cell]);
            if n < MIN_CELL_COUNT || n_adj < MIN_CELL_COUNT {
                return Err(Error::InsufficientTrials(format!(
                    "cell {cell} of coordinate {c} has counts {n} / {n_adj}, need {MIN_CELL_COUNT}"
                )));
            }
            let p = n as f64 / trials as f64;
            let p_adj = n_adj as f64 / trials as f64;
            let (p_lo, p_hi) = wilson_interval(n, trials, WILSON_Z_99);
            let (q_lo, q_hi) = wilson_interval(n_adj, trials, WILSON_Z_99);
            cells.push(CellRatio {
                coordinate: c,
                lower_edge: lo + width * cell as f64,
                upper_edge: lo + width * (cell + 1) as f64,
                count: n,
                count_adj: n_adj,
                ratio: (p / p_adj).max(p_adj / p),
                ratio_lower: (p_lo / q_hi).max(q_lo / p_hi),
            });
        }
    }
    Ok(MonteCarloReport {
        trials,
        bins,
        epsilon_step: per_step_loss_bound(0, &setup.params, b),
        cells,
    })
}
