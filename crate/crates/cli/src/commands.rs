use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dplr_core::data::{differing_nodes, AdjacencyParams};
use dplr_core::engine::{RunKind, RunSetup};
use dplr_core::experiments::{error_trajectory, mean_series};
use dplr_core::io::{
    audit_csv, monte_carlo_csv, parse_dataset, parse_graph, series_csv, trajectory_csv, write_dataset,
    write_graph,
};
use dplr_core::randomness::{derive_seed, trial_seeds, RngStream};
use dplr_core::schedules::budget_summary;
use dplr_core::topology::{complete_graph, erdos_renyi_graph, path_graph, ring_graph};
use dplr_core::{
    adjacency_params, closed_form_solution, generate_synthetic, growth_envelope_check, make_adjacent,
    metropolis_weights, monte_carlo_dp_check, run_baseline, run_private, stack, BudgetInputs, LocalDataset,
    NetworkDataset, NetworkGraph, NoiseMode, OmegaBall, ScheduleParams, SyntheticSpec,
};
use nalgebra::DVector;

use crate::config::{load_ini, to_params, DataSpec, ExperimentConfig, GraphSpec, Ini, Perturbation};
use crate::{BudgetArgs, Common};

const ER_MAX_ATTEMPTS: usize = 10_000;
const DEFAULT_OUTPUT_DIR: &str = "dplr-out";

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn vector(v: &DVector<f64>) -> String {
    v.iter().map(|&x| num(x)).collect::<Vec<_>>().join(",")
}

struct Session {
    cfg: ExperimentConfig,
    out: PathBuf,
    force: bool,
}

/// Loads the config, applies command-line overrides (which enter the hash)
/// and resolves the output directory.
fn load(common: &Common, overrides: &[(&str, &str, String)]) -> Result<Session> {
    let mut ini: Ini = load_ini(&common.config)?;
    for (section, key, value) in overrides {
        ini.set(section, key, value.clone());
    }
    let base = common.config.parent().unwrap_or(Path::new("."));
    let cfg = ExperimentConfig::from_ini(&ini, base)?;
    let out = common
        .output_dir
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os("DPLR_OUTPUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
    Ok(Session {
        cfg,
        out,
        force: common.force,
    })
}

impl Session {
    fn write(&self, name: &str, body: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.out.join(name);
        if path.exists() && !self.force {
            bail!("{} already exists (pass --force to overwrite)", path.display());
        }
        fs::write(&path, format!("# config_hash={}\n{body}", self.cfg.hash))
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

fn build_graph(cfg: &ExperimentConfig) -> Result<NetworkGraph> {
    Ok(match &cfg.graph {
        GraphSpec::Path(k) => path_graph(*k)?,
        GraphSpec::Ring(k) => ring_graph(*k)?,
        GraphSpec::Complete(k) => complete_graph(*k)?,
        GraphSpec::ErdosRenyi { nodes, p, seed } => erdos_renyi_graph(*nodes, *p, *seed, ER_MAX_ATTEMPTS)?,
        GraphSpec::File(path) => {
            parse_graph(&fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)
                .with_context(|| format!("parsing {}", path.display()))?
        }
    })
}

fn build_dataset(cfg: &ExperimentConfig, nodes: usize) -> Result<NetworkDataset> {
    let d = match &cfg.data {
        DataSpec::Synthetic {
            rows,
            features,
            design_norm,
            label_noise,
            ground_truth,
            latent_rank,
            seed,
        } => {
            let per_node_rows = match rows.len() {
                1 => vec![rows[0]; nodes],
                n if n == nodes => rows.clone(),
                n => bail!("[data] rows lists {n} values for {nodes} nodes"),
            };
            let ground_truth = match ground_truth {
                Some(v) => DVector::from_vec(v.clone()),
                None => {
                    let mut rng = RngStream::new(*seed, 0, "ground-truth");
                    DVector::from_fn(*features, |_, _| rng.standard_normal())
                }
            };
            generate_synthetic(&SyntheticSpec {
                per_node_rows,
                features: *features,
                ground_truth,
                label_noise_scale: *label_noise,
                design_norm: *design_norm,
                seed: *seed,
                latent_rank: *latent_rank,
            })?
        }
        DataSpec::File(path) => {
            parse_dataset(&fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)
                .with_context(|| format!("parsing {}", path.display()))?
        }
    };
    if d.node_count() != nodes {
        bail!("dataset has {} nodes but the graph has {nodes}", d.node_count());
    }
    Ok(d)
}

fn build_region(cfg: &ExperimentConfig, m: usize) -> Result<OmegaBall> {
    if cfg.omega_radius.is_infinite() {
        return Ok(OmegaBall::unbounded(m));
    }
    let center = match &cfg.omega_center {
        Some(c) => DVector::from_vec(c.clone()),
        None => DVector::zeros(m),
    };
    Ok(OmegaBall::new(center, cfg.omega_radius)?)
}

fn setup_with(cfg: &ExperimentConfig, params: ScheduleParams) -> Result<RunSetup> {
    let graph = build_graph(cfg)?;
    let dataset = build_dataset(cfg, graph.node_count())?;
    let region = build_region(cfg, dataset.features())?;
    let weights = metropolis_weights(&graph);
    let mut setup = RunSetup::new(dataset, graph, weights, params, region, cfg.rounds);
    if !cfg.noise {
        setup.noise = NoiseMode::Disabled;
    }
    setup.validate()?;
    Ok(setup)
}

fn pooled_solution(d: &NetworkDataset) -> Result<DVector<f64>> {
    let (x, y) = stack(d);
    closed_form_solution(&x, &y).context("pooled least-squares solution")
}

pub fn generate(common: &Common) -> Result<bool> {
    let ctx = load(common, &[])?;
    let graph = build_graph(&ctx.cfg)?;
    let dataset = build_dataset(&ctx.cfg, graph.node_count())?;
    let beta_star = pooled_solution(&dataset)?;
    let bounds = adjacency_params(&dataset);
    let g = ctx.write("graph.txt", &write_graph(&graph))?;
    let d = ctx.write("dataset.txt", &write_dataset(&dataset))?;
    println!("wrote {} and {}", g.display(), d.display());
    println!("delta_x={}", num(bounds.delta_x));
    println!("delta_y={}", num(bounds.delta_y));
    println!("beta_star={}", vector(&beta_star));
    Ok(true)
}

pub fn run(common: &Common, baseline: bool, zero_noise: bool, dump_all: bool) -> Result<bool> {
    let mut overrides = vec![(
        "run",
        "mode",
        if baseline { "baseline" } else { "private" }.to_string(),
    )];
    if zero_noise {
        overrides.push(("run", "noise", "off".to_string()));
    }
    let ctx = load(common, &overrides)?;
    let setup = setup_with(&ctx.cfg, ctx.cfg.schedule.single()?)?;
    let beta_star = pooled_solution(&setup.dataset)?;
    let seeds = trial_seeds(ctx.cfg.seed, ctx.cfg.trials.max(1));

    let mut series = Vec::with_capacity(seeds.len());
    for (r, &seed) in seeds.iter().enumerate() {
        let traj = if baseline {
            run_baseline(&setup)?
        } else {
            run_private(&setup, seed).with_context(|| format!("trial {r}"))?
        };
        if r == 0 || dump_all {
            let name = if dump_all {
                format!("trajectory_trial{r}.csv")
            } else {
                "trajectory.csv".to_string()
            };
            ctx.write(&name, &trajectory_csv(&traj))?;
        }
        let errors = error_trajectory(&traj, &beta_star)?;
        if baseline {
            // Deterministic, so every trial is the same series.
            series = vec![errors; seeds.len()];
            break;
        }
        series.push(errors);
    }
    let mean = mean_series(&series);
    ctx.write("series.csv", &series_csv(&mean))?;
    let kind = if baseline {
        RunKind::Baseline
    } else {
        RunKind::Private
    };
    let final_error = *mean.values.last().expect("at least one round");
    println!(
        "kind={kind:?} trials={} final_mean_error={}",
        series.len(),
        num(final_error)
    );
    if let Some(threshold) = ctx.cfg.baseline_threshold {
        let ok = final_error <= threshold;
        println!(
            "threshold={} verdict={}",
            num(threshold),
            if ok { "pass" } else { "fail" }
        );
        return Ok(ok);
    }
    Ok(true)
}

fn perturb(local: &LocalDataset, how: Perturbation) -> Result<LocalDataset> {
    let x = local.design().clone();
    let y = local.labels().clone();
    Ok(match how {
        Perturbation::Identical => local.clone(),
        Perturbation::NegateLabels => LocalDataset::new(x, -y)?,
        Perturbation::NegateDesign => LocalDataset::new(-x, y)?,
        Perturbation::ReverseLabels => {
            let n = y.len();
            LocalDataset::new(x, DVector::from_iterator(n, y.iter().rev().copied()))?
        }
        Perturbation::ZeroLabels => LocalDataset::new(x, DVector::zeros(y.len()))?,
    })
}

fn budget_inputs(setup: &RunSetup, bounds: &AdjacencyParams) -> BudgetInputs {
    BudgetInputs {
        rounds: setup.rounds,
        features: setup.features(),
        nodes: setup.node_count(),
        max_rows: setup.dataset.max_rows(),
        delta_x: bounds.delta_x,
        delta_y: bounds.delta_y,
        b_omega: setup.region.b_omega(),
    }
}

pub fn audit(
    common: &Common,
    node: Option<usize>,
    perturbation: Option<&str>,
    monte_carlo: Option<usize>,
    bins: usize,
) -> Result<bool> {
    let mut overrides = Vec::new();
    if let Some(n) = node {
        overrides.push(("audit", "node", n.to_string()));
    }
    if let Some(p) = perturbation {
        overrides.push(("audit", "perturb", p.to_string()));
    }
    let ctx = load(common, &overrides)?;
    let setup = setup_with(&ctx.cfg, ctx.cfg.schedule.single()?)?;
    let node = ctx.cfg.audit_node;
    if node == 0 || node > setup.node_count() {
        bail!("audit node {node} is outside 1..={}", setup.node_count());
    }
    let replacement = perturb(setup.dataset.local(node), ctx.cfg.perturbation)?;

    // Bounds must certify both sides of the pair.
    let own = adjacency_params(&setup.dataset);
    let mut probe = setup.dataset.locals().to_vec();
    probe[node - 1] = replacement.clone();
    let other = adjacency_params(&NetworkDataset::new(probe)?);
    let bounds = AdjacencyParams {
        delta_x: own.delta_x.max(other.delta_x),
        delta_y: own.delta_y.max(other.delta_y),
    };
    let d_adj = make_adjacent(&setup.dataset, node, replacement, &bounds)?;
    let b = budget_inputs(&setup, &bounds);

    let report = dplr_core::audit::run_and_audit(&setup, &d_adj, &b, ctx.cfg.trials.max(1), ctx.cfg.seed)?;
    let path = ctx.write("audit.csv", &audit_csv(&report))?;
    let differing = differing_nodes(&setup.dataset, &d_adj)?;
    println!("wrote {}", path.display());
    println!(
        "differing_nodes={differing:?} trials={} total_realized={} epsilon_formula={} epsilon_sum={} regime={} verdict={}",
        report.trials,
        num(report.total_realized),
        num(report.budget.formula),
        num(report.budget.sum),
        if report.regime_violation() { "violated" } else { "ok" },
        if report.passed() { "pass" } else { "fail" },
    );
    let mut ok = report.passed() && !report.regime_violation();

    if let Some(trials) = monte_carlo {
        let mc = monte_carlo_dp_check(
            &setup,
            &d_adj,
            &b,
            trials,
            bins,
            derive_seed(ctx.cfg.seed, "monte-carlo", 0),
        )?;
        let path = ctx.write("monte_carlo.csv", &monte_carlo_csv(&mc))?;
        println!("wrote {}", path.display());
        println!(
            "monte_carlo max_ratio={} max_ratio_lower={} bound={} verdict={}",
            num(mc.max_ratio()),
            num(mc.max_ratio_lower()),
            num(mc.bound_ratio()),
            if mc.passed() { "pass" } else { "fail" }
        );
        ok &= mc.passed();
    }
    Ok(ok)
}

pub fn budget(args: &BudgetArgs) -> Result<bool> {
    let params = ScheduleParams::new(
        args.c_alpha,
        args.d_alpha,
        args.e_alpha,
        args.c_v,
        args.d_v,
        args.e_v,
    )?;
    let inputs = BudgetInputs {
        rounds: args.rounds,
        features: args.features,
        nodes: args.nodes,
        max_rows: args.max_rows,
        delta_x: args.delta_x,
        delta_y: args.delta_y,
        b_omega: args.b_omega,
    };
    let summary = budget_summary(&params, &inputs);
    let regime_ok = summary.regime.closed_form_valid();
    println!("epsilon_formula={}", num(summary.formula));
    println!("epsilon_sum={}", num(summary.sum));
    println!("epsilon_effective={}", num(summary.effective()));
    println!(
        "regime={} offsets_ordered={} exponents_ordered={} summable={}",
        if regime_ok { "ok" } else { "violated" },
        summary.regime.offsets_ordered,
        summary.regime.exponents_ordered,
        summary.regime.summable
    );
    Ok(regime_ok)
}

pub fn sweep(common: &Common) -> Result<bool> {
    let ctx = load(common, &[])?;
    let points = ctx.cfg.schedule.points();
    let mut out = String::from(
        "c_alpha,d_alpha,e_alpha,c_v,d_v,e_v,epsilon_formula,epsilon_sum,regime,final_mean_error,fitted_c,worst_test_ratio,envelope\n",
    );
    let seeds = trial_seeds(ctx.cfg.seed, ctx.cfg.trials.max(1));
    for point in &points {
        let setup = setup_with(&ctx.cfg, to_params(*point)?)?;
        let beta_star = pooled_solution(&setup.dataset)?;
        let bounds = adjacency_params(&setup.dataset);
        let summary = budget_summary(&setup.params, &budget_inputs(&setup, &bounds));
        let mean = dplr_core::mean_error_over_trials(&setup, RunKind::Private, &beta_star, &seeds)?;
        let (fitted, worst, verdict) = match &ctx.cfg.envelope {
            Some(env) => {
                let v = growth_envelope_check(
                    &mean,
                    point[2],
                    env.fit.0..=env.fit.1,
                    env.test.0..=env.test.1,
                    env.slack,
                )?;
                (
                    num(v.fitted_constant),
                    num(v.worst_test_ratio),
                    if v.passed { "pass" } else { "fail" },
                )
            }
            None => (String::new(), String::new(), "skipped"),
        };
        let cells: Vec<String> = point.iter().map(|&v| num(v)).collect();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            cells.join(","),
            num(summary.formula),
            num(summary.sum),
            if summary.regime.closed_form_valid() {
                "ok"
            } else {
                "violated"
            },
            num(*mean.values.last().expect("at least one round")),
            fitted,
            worst,
            verdict,
        ));
    }
    let path = ctx.write("sweep.csv", &out)?;
    println!("wrote {} ({} points)", path.display(), points.len());
    Ok(true)
}
