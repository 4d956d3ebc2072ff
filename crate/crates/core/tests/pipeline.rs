//! Cross-module checks: files -> engine -> audit / experiments.

use dplr_core::audit::run_and_audit;
use dplr_core::data::{adjacency_params, make_adjacent};
use dplr_core::engine::{run_private_logged, RunKind};
use dplr_core::io::{parse_dataset, parse_graph, trajectory_csv, write_dataset, write_graph};
use dplr_core::randomness::trial_seeds;
use dplr_core::topology::erdos_renyi_graph;
use dplr_core::{
    closed_form_solution, generate_synthetic, mean_error_over_trials, metropolis_weights,
    replay_transition_mean, run_private, stack, suggest_omega, BudgetInputs, Error, LocalDataset, OmegaBall,
    RunSetup, ScheduleParams, SyntheticSpec,
};
use nalgebra::DVector;

fn setup(seed: u64, rounds: usize) -> RunSetup {
    let graph = erdos_renyi_graph(6, 0.4, seed, 1000).unwrap();
    let dataset = generate_synthetic(&SyntheticSpec {
        per_node_rows: vec![5, 3, 4, 6, 3, 5],
        features: 3,
        ground_truth: DVector::from_vec(vec![0.5, -1.0, 2.0]),
        label_noise_scale: 0.2,
        design_norm: 1.0,
        seed,
        latent_rank: None,
    })
    .unwrap();
    let weights = metropolis_weights(&graph);
    let params = ScheduleParams::new(0.4, 3.0, 1.0, 2.0, 1.0, 0.9).unwrap();
    let region = suggest_omega(&dataset, 1.0).unwrap().region;
    RunSetup::new(dataset, graph, weights, params, region, rounds)
}

#[test]
fn round_tripped_inputs_reproduce_the_run() {
    let s = setup(3, 40);
    let graph = parse_graph(&write_graph(&s.graph)).unwrap();
    let dataset = parse_dataset(&write_dataset(&s.dataset)).unwrap();
    let weights = metropolis_weights(&graph);
    let copy = RunSetup::new(dataset, graph, weights, s.params, s.region.clone(), s.rounds);
    assert_eq!(copy.params_hash(), s.params_hash());
    assert_eq!(
        trajectory_csv(&run_private(&s, 9).unwrap()),
        trajectory_csv(&run_private(&copy, 9).unwrap())
    );
}

#[test]
fn every_release_is_replayable_from_public_data() {
    let s = setup(4, 25);
    let traj = run_private(&s, 1).unwrap();
    for t in 0..s.rounds {
        let replayed = replay_transition_mean(
            &s.dataset,
            &s.weights,
            &s.region,
            &s.params,
            &traj.published[t],
            t,
        )
        .unwrap();
        assert_eq!(replayed, traj.internal[t + 1], "round {t}");
    }
}

#[test]
fn nodes_only_read_from_neighbors() {
    let s = setup(5, 10);
    let (traj, log) = run_private_logged(&s, 2).unwrap();
    assert_eq!(traj.message_count(), s.node_count() * s.rounds);
    assert!(!log.is_empty());
    for access in &log {
        assert!(
            s.graph.neighbors(access.receiver).contains(&access.sender),
            "{access:?}"
        );
    }
}

#[test]
fn audit_of_a_valid_regime_run_passes() {
    let s = setup(6, 30);
    let bounds = adjacency_params(&s.dataset);
    let old = s.dataset.local(4);
    let d_adj = make_adjacent(
        &s.dataset,
        4,
        LocalDataset::new(-old.design(), old.labels().clone()).unwrap(),
        &bounds,
    )
    .unwrap();
    let b = BudgetInputs {
        rounds: s.rounds,
        features: s.features(),
        nodes: s.node_count(),
        max_rows: s.dataset.max_rows(),
        delta_x: bounds.delta_x,
        delta_y: bounds.delta_y,
        b_omega: s.region.b_omega(),
    };
    let report = run_and_audit(&s, &d_adj, &b, 50, 77).unwrap();
    assert!(report.passed());
    assert!(!report.regime_violation());
    assert_eq!(report.per_step_realized[0], 0.0);
    assert!(report.total_realized > 0.0);

    // Trajectories recorded under a different config are refused.
    let mut other = s.clone();
    other.rounds += 1;
    let foreign = vec![run_private(&other, 1).unwrap()];
    assert!(matches!(
        dplr_core::audit(&foreign, &s, &d_adj, &b),
        Err(Error::ConfigMismatch(_))
    ));
}

#[test]
fn private_error_stays_bounded_by_the_region() {
    let s = setup(7, 200);
    let (x, y) = stack(&s.dataset);
    let beta_star = closed_form_solution(&x, &y).unwrap();
    let series = mean_error_over_trials(&s, RunKind::Private, &beta_star, &trial_seeds(1, 8)).unwrap();
    let cap = s.node_count() as f64 * (s.region.b_omega() + beta_star.norm());
    assert!(series.values.iter().all(|&v| v.is_finite() && v >= 0.0));
    // Projected points stay in the region; published ones add finite noise,
    // so the mean error of the projections is what the cap controls.
    let traj = run_private(&s, 3).unwrap();
    for round in &traj.projected {
        let sum: f64 = round.iter().map(|b| (b - &beta_star).norm()).sum();
        assert!(sum <= cap * (1.0 + 1e-12));
    }
}

#[test]
fn unbounded_region_reports_infinite_b_omega() {
    let r = OmegaBall::unbounded(2);
    assert!(!r.is_bounded());
    assert!(r.b_omega().is_infinite());
}
