//! Synchronous-round simulation of the private dynamics and of the noiseless
//! baseline.
//!
//! Each private round `t`:
//! 1. node `i` draws `omega_i(t) ~ Lap^m(v(t))` from its own stream;
//! 2. publishes `beta~_i(t) = beta_i(t) + omega_i(t)`;
//! 3. every receiver projects each neighbor payload (and its own) onto the region;
//! 4. `beta_i(t+1) = sum_{j in N_i} w_ij P(beta~_j(t)) - alpha(t) grad L_i(P(beta~_i(t)))`.
//!
//! The weighted sum runs over neighbors in ascending id, and the same update
//! routine serves the engine and [`replay_transition_mean`], so replaying a
//! published round reproduces the next internal state bit for bit.

use nalgebra::DVector;
use sha2::{Digest, Sha256};

use crate::data::{local_gradient, LocalDataset, NetworkDataset};
use crate::error::{Error, Result};
use crate::projection::{project, OmegaBall};
use crate::randomness::{sample_laplace_vector, RngStream};
use crate::schedules::{alpha, noise_scale, ScheduleParams};
use crate::topology::{validate_weights, NetworkGraph, WeightMatrix};
use crate::transport::{Access, Mailbox};

/// Whether the private run injects Laplace noise. `Disabled` is the zero-noise
/// override used for degeneracy checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseMode {
    Laplace,
    Disabled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunKind {
    Private,
    Baseline,
}

/// Everything a run needs except the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSetup {
    pub dataset: NetworkDataset,
    pub graph: NetworkGraph,
    pub weights: WeightMatrix,
    pub params: ScheduleParams,
    pub region: OmegaBall,
    pub rounds: usize,
    pub init: Vec<DVector<f64>>,
    pub noise: NoiseMode,
}

impl RunSetup {
    /// Zero initial states and Laplace noise.
    pub fn new(
        dataset: NetworkDataset,
        graph: NetworkGraph,
        weights: WeightMatrix,
        params: ScheduleParams,
        region: OmegaBall,
        rounds: usize,
    ) -> Self {
        let init = vec![DVector::zeros(dataset.features()); dataset.node_count()];
        Self {
            dataset,
            graph,
            weights,
            params,
            region,
            rounds,
            init,
            noise: NoiseMode::Laplace,
        }
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn features(&self) -> usize {
        self.dataset.features()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.graph.node_count();
        let m = self.dataset.features();
        if self.rounds == 0 {
            return Err(Error::ShapeMismatch("need at least one round".into()));
        }
        if self.dataset.node_count() != k {
            return Err(Error::ShapeMismatch(format!(
                "dataset has {} nodes, graph has {k}",
                self.dataset.node_count()
            )));
        }
        if self.region.dim() != m {
            return Err(Error::ShapeMismatch(format!(
                "region has dimension {}, data has {m} features",
                self.region.dim()
            )));
        }
        if self.init.len() != k || self.init.iter().any(|b| b.len() != m) {
            return Err(Error::ShapeMismatch(format!(
                "initial state must be {k} vectors of length {m}"
            )));
        }
        self.params.validate()?;
        let verdict = validate_weights(&self.weights, &self.graph);
        if !verdict.passed() {
            return Err(Error::InvalidWeights(format!("{:?}", verdict.violations)));
        }
        Ok(())
    }

    /// Hash of everything that determines a run's distribution (not the seed).
    pub fn params_hash(&self) -> String {
        let mut h = Sha256::new();
        let mut put = |v: f64| h.update(v.to_bits().to_le_bytes());
        let p = &self.params;
        for v in [p.c_alpha, p.d_alpha, p.e_alpha, p.c_v, p.d_v, p.e_v] {
            put(v);
        }
        self.region.center().iter().for_each(|&v| put(v));
        put(self.region.radius());
        self.weights.matrix().iter().for_each(|&v| put(v));
        for local in self.dataset.locals() {
            put(local.rows() as f64);
            local.design().iter().for_each(|&v| put(v));
            local.labels().iter().for_each(|&v| put(v));
        }
        self.init.iter().flatten().for_each(|&v| put(v));
        put(self.rounds as f64);
        h.update([self.noise as u8]);
        hex::encode(&h.finalize()[..16])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fingerprint {
    pub kind: RunKind,
    pub noise: NoiseMode,
    pub seed: Option<u64>,
    pub params_hash: String,
}

/// Recorded run, indexed `[round][node - 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `beta~_i(t)`, `t < T`: what an eavesdropper sees.
    pub published: Vec<Vec<DVector<f64>>>,
    /// `beta_i(t)`, `t <= T`.
    pub internal: Vec<Vec<DVector<f64>>>,
    /// `P(beta~_i(t))`, `t < T`.
    pub projected: Vec<Vec<DVector<f64>>>,
    /// `omega_i(t)`, `t < T`; empty when noise is disabled.
    pub noise: Vec<Vec<DVector<f64>>>,
    pub fingerprint: Fingerprint,
}

impl Trajectory {
    pub fn rounds(&self) -> usize {
        self.published.len()
    }

    pub fn node_count(&self) -> usize {
        self.published.first().map_or(0, Vec::len)
    }

    pub fn features(&self) -> usize {
        self.published
            .first()
            .and_then(|r| r.first())
            .map_or(0, DVector::len)
    }

    pub fn published_at(&self, node: usize, round: usize) -> &DVector<f64> {
        &self.published[round][node - 1]
    }

    /// Messages an eavesdropper observed: one per node per round.
    pub fn message_count(&self) -> usize {
        self.published.iter().map(Vec::len).sum()
    }
}

/// `sum_{j in N_i} w_ij states_j - step * grad L_i(states_i)`, summed in
/// ascending `j`. `neighbors` yields `(j, w_ij, state_j)`.
fn node_update<'a>(
    neighbors: impl Iterator<Item = (usize, f64, &'a DVector<f64>)>,
    own: &DVector<f64>,
    local: &LocalDataset,
    step: f64,
) -> Result<DVector<f64>> {
    let mut acc = DVector::zeros(own.len());
    for (_, w, state) in neighbors {
        acc.axpy(w, state, 1.0);
    }
    let grad = local_gradient(local, own)?;
    acc.axpy(-step, &grad, 1.0);
    Ok(acc)
}

fn check_finite(states: &[DVector<f64>], round: usize) -> Result<()> {
    match states.iter().position(|b| b.iter().any(|v| !v.is_finite())) {
        Some(idx) => Err(Error::NonFiniteState { round, node: idx + 1 }),
        None => Ok(()),
    }
}

pub fn run_private(setup: &RunSetup, seed: u64) -> Result<Trajectory> {
    run_private_logged(setup, seed).map(|(t, _)| t)
}

/// [`run_private`] plus the transport access log.
pub fn run_private_logged(setup: &RunSetup, seed: u64) -> Result<(Trajectory, Vec<Access>)> {
    setup.validate()?;
    let k = setup.node_count();
    let m = setup.features();
    let mut streams: Vec<RngStream> = (1..=k).map(|i| RngStream::new(seed, i, "noise")).collect();
    let mut mailbox = Mailbox::new(&setup.graph);

    let mut internal = vec![setup.init.clone()];
    let mut published = Vec::with_capacity(setup.rounds);
    let mut projected = Vec::with_capacity(setup.rounds);
    let mut noise = Vec::new();

    for t in 0..setup.rounds {
        let current = &internal[t];
        let (round_published, round_noise) = match setup.noise {
            NoiseMode::Laplace => {
                let scale = noise_scale(t, &setup.params);
                let draws = streams
                    .iter_mut()
                    .map(|s| sample_laplace_vector(m, scale, s))
                    .collect::<Result<Vec<_>>>()?;
                let sent: Vec<_> = current.iter().zip(&draws).map(|(b, w)| b + w).collect();
                (sent, Some(draws))
            }
            NoiseMode::Disabled => (current.clone(), None),
        };
        check_finite(&round_published, t)?;
        for (idx, payload) in round_published.iter().enumerate() {
            mailbox.publish(idx + 1, t, payload.clone());
        }

        let step = alpha(t, &setup.params);
        let mut next = Vec::with_capacity(k);
        let mut round_projected = Vec::with_capacity(k);
        for i in 1..=k {
            let mut views = Vec::with_capacity(setup.graph.neighbors(i).len());
            for &j in setup.graph.neighbors(i) {
                let payload = mailbox.receive(i, j, t)?;
                views.push((j, project(&setup.region, payload)?));
            }
            let own = views
                .iter()
                .find(|(j, _)| *j == i)
                .map(|(_, v)| v.clone())
                .expect("neighbor set contains the node itself");
            let updated = node_update(
                views.iter().map(|(j, v)| (*j, setup.weights.weight(i, *j), v)),
                &own,
                setup.dataset.local(i),
                step,
            )?;
            next.push(updated);
            round_projected.push(own);
        }
        check_finite(&next, t + 1)?;
        mailbox.retire_before(t + 1);
        internal.push(next);
        published.push(round_published);
        projected.push(round_projected);
        if let Some(draws) = round_noise {
            noise.push(draws);
        }
    }

    let trajectory = Trajectory {
        published,
        internal,
        projected,
        noise,
        fingerprint: Fingerprint {
            kind: RunKind::Private,
            noise: setup.noise,
            seed: Some(seed),
            params_hash: setup.params_hash(),
        },
    };
    Ok((trajectory, mailbox.into_access_log()))
}

/// Noiseless, unprojected dynamics
/// `beta_i(t+1) = sum_{j in N_i} w_ij beta_j(t) - alpha(t) grad L_i(beta_i(t))`.
pub fn run_baseline(setup: &RunSetup) -> Result<Trajectory> {
    setup.validate()?;
    let k = setup.node_count();
    let mut internal = vec![setup.init.clone()];
    for t in 0..setup.rounds {
        let current = &internal[t];
        let step = alpha(t, &setup.params);
        let next = (1..=k)
            .map(|i| {
                node_update(
                    setup
                        .graph
                        .neighbors(i)
                        .iter()
                        .map(|&j| (j, setup.weights.weight(i, j), &current[j - 1])),
                    &current[i - 1],
                    setup.dataset.local(i),
                    step,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        check_finite(&next, t + 1)?;
        internal.push(next);
    }
    let published: Vec<_> = internal[..setup.rounds].to_vec();
    Ok(Trajectory {
        projected: published.clone(),
        published,
        internal,
        noise: Vec::new(),
        fingerprint: Fingerprint {
            kind: RunKind::Baseline,
            noise: NoiseMode::Disabled,
            seed: None,
            params_hash: setup.params_hash(),
        },
    })
}

/// Noise-free mean of round `t + 1` given the published round `t`:
/// `(W (x) I) P*(beta~(t)) - alpha(t) G(P*(beta~(t)))`. Neighbors are read from
/// the support of `weights`.
pub fn replay_transition_mean(
    dataset: &NetworkDataset,
    weights: &WeightMatrix,
    region: &OmegaBall,
    params: &ScheduleParams,
    published_round: &[DVector<f64>],
    t: usize,
) -> Result<Vec<DVector<f64>>> {
    let k = dataset.node_count();
    if published_round.len() != k || weights.size() != k {
        return Err(Error::ShapeMismatch(format!(
            "expected {k} published vectors and a {k}x{k} weight matrix"
        )));
    }
    let projected = published_round
        .iter()
        .map(|b| project(region, b))
        .collect::<Result<Vec<_>>>()?;
    let step = alpha(t, params);
    (1..=k)
        .map(|i| {
            node_update(
                (1..=k)
                    .filter(|&j| weights.weight(i, j) != 0.0)
                    .map(|j| (j, weights.weight(i, j), &projected[j - 1])),
                &projected[i - 1],
                dataset.local(i),
                step,
            )
        })
        .collect()
}
