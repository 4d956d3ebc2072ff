//! Shared fixtures for the benchmarks.

use dplr_core::randomness::RngStream;
use dplr_core::topology::ring_graph;
use dplr_core::{
    generate_synthetic, metropolis_weights, NetworkDataset, OmegaBall, RunSetup, ScheduleParams,
    SyntheticSpec,
};
use nalgebra::DVector;

pub fn dataset(nodes: usize, rows: usize, features: usize, seed: u64) -> NetworkDataset {
    let mut rng = RngStream::new(seed, 0, "ground-truth");
    generate_synthetic(&SyntheticSpec {
        per_node_rows: vec![rows; nodes],
        features,
        ground_truth: DVector::from_fn(features, |_, _| rng.standard_normal()),
        label_noise_scale: 0.1,
        design_norm: 1.0,
        seed,
        latent_rank: None,
    })
    .expect("valid synthetic spec")
}

/// Ring of `nodes` nodes in the valid budget regime.
pub fn ring_setup(nodes: usize, rows: usize, features: usize, rounds: usize) -> RunSetup {
    let graph = ring_graph(nodes).expect("ring");
    let weights = metropolis_weights(&graph);
    let params = ScheduleParams::new(0.5, 2.0, 1.0, 1.0, 1.0, 1.0).expect("valid schedule");
    let region = OmegaBall::centered(features, 5.0).expect("valid region");
    RunSetup::new(
        dataset(nodes, rows, features, 7),
        graph,
        weights,
        params,
        region,
        rounds,
    )
}
