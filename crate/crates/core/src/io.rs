//! Plain-text file formats.
//!
//! Floats are written with Rust's `Debug` formatting, which emits the shortest
//! decimal string that parses back to the same `f64`.
//!
//! Graph file:
//! ```text
//! # comment
//! 3
//! 1 2
//! 2 3
//! ```
//!
//! Dataset file: header `k m`, then for each node a line `node <id> <n_i>`
//! followed by `n_i` lines holding a row of `X_i` and the matching `y_i`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::audit::{MonteCarloReport, PrivacyAuditReport};
use crate::data::{LocalDataset, NetworkDataset};
use crate::engine::Trajectory;
use crate::error::{Error, Result};
use crate::experiments::ErrorSeries;
use crate::topology::{build_graph, NetworkGraph};

fn num(v: f64) -> String {
    format!("{v:?}")
}

/// Non-empty, non-comment lines with their 1-based line numbers. Text after
/// `#` is dropped.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(idx, line)| {
        let line = line.split('#').next().unwrap_or("").trim();
        (!line.is_empty()).then_some((idx + 1, line))
    })
}

fn parse_field<T: std::str::FromStr>(line: usize, token: Option<&str>, what: &str) -> Result<T> {
    let token = token.ok_or_else(|| Error::Parse {
        line,
        msg: format!("missing {what}"),
    })?;
    token.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid {what} {token:?}"),
    })
}

pub fn write_graph(g: &NetworkGraph) -> String {
    let mut out = format!("{}\n", g.node_count());
    for (i, j) in g.edges() {
        let _ = writeln!(out, "{i} {j}");
    }
    out
}

pub fn parse_graph(text: &str) -> Result<NetworkGraph> {
    let mut lines = content_lines(text);
    let (line, header) = lines.next().ok_or(Error::Parse {
        line: 0,
        msg: "empty graph file".into(),
    })?;
    let k: usize = parse_field(line, Some(header), "node count")?;
    let mut edges = Vec::new();
    for (line, content) in lines {
        let mut tokens = content.split_whitespace();
        let i = parse_field(line, tokens.next(), "edge endpoint")?;
        let j = parse_field(line, tokens.next(), "edge endpoint")?;
        if tokens.next().is_some() {
            return Err(Error::Parse {
                line,
                msg: "expected two endpoints".into(),
            });
        }
        edges.push((i, j));
    }
    build_graph(k, &edges)
}

pub fn write_dataset(d: &NetworkDataset) -> String {
    let mut out = format!("{} {}\n", d.node_count(), d.features());
    for (idx, local) in d.locals().iter().enumerate() {
        let _ = writeln!(out, "node {} {}", idx + 1, local.rows());
        for r in 0..local.rows() {
            let row: Vec<String> = local
                .design()
                .row(r)
                .iter()
                .map(|&v| num(v))
                .chain(std::iter::once(num(local.labels()[r])))
                .collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
    }
    out
}

pub fn parse_dataset(text: &str) -> Result<NetworkDataset> {
    let mut lines = content_lines(text).peekable();
    let (line, header) = lines.next().ok_or(Error::Parse {
        line: 0,
        msg: "empty dataset file".into(),
    })?;
    let mut tokens = header.split_whitespace();
    let k: usize = parse_field(line, tokens.next(), "node count")?;
    let m: usize = parse_field(line, tokens.next(), "feature count")?;
    let mut locals: BTreeMap<usize, LocalDataset> = BTreeMap::new();
    while let Some((line, content)) = lines.next() {
        let mut tokens = content.split_whitespace();
        if tokens.next() != Some("node") {
            return Err(Error::Parse {
                line,
                msg: "expected `node <id> <rows>`".into(),
            });
        }
        let id: usize = parse_field(line, tokens.next(), "node id")?;
        let rows: usize = parse_field(line, tokens.next(), "row count")?;
        if id == 0 || id > k {
            return Err(Error::Parse {
                line,
                msg: format!("node id {id} outside 1..={k}"),
            });
        }
        let mut design = Vec::with_capacity(rows * m);
        let mut labels = Vec::with_capacity(rows);
        for _ in 0..rows {
            let (line, content) = lines.next().ok_or(Error::Parse {
                line,
                msg: format!("node {id} is missing rows"),
            })?;
            let values = content
                .split_whitespace()
                .map(|t| parse_field::<f64>(line, Some(t), "value"))
                .collect::<Result<Vec<_>>>()?;
            if values.len() != m + 1 {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected {} values, found {}", m + 1, values.len()),
                });
            }
            design.extend_from_slice(&values[..m]);
            labels.push(values[m]);
        }
        let local = LocalDataset::new(
            DMatrix::from_row_slice(rows, m, &design),
            DVector::from_vec(labels),
        )?;
        if locals.insert(id, local).is_some() {
            return Err(Error::Parse {
                line,
                msg: format!("node {id} appears twice"),
            });
        }
    }
    if locals.len() != k {
        let missing: Vec<_> = (1..=k).filter(|i| !locals.contains_key(i)).collect();
        return Err(Error::Parse {
            line: 0,
            msg: format!("missing nodes {missing:?}"),
        });
    }
    NetworkDataset::new(locals.into_values().collect())
}

/// `round,node,kind,coord_0..` ordered by round, node, then
/// published / internal / projected. The final internal state has its own row.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let m = traj.features();
    let mut out = String::from("round,node,kind");
    for c in 0..m {
        let _ = write!(out, ",coord_{c}");
    }
    out.push('\n');
    let mut row = |round: usize, node: usize, kind: &str, v: &DVector<f64>| {
        let _ = write!(out, "{round},{node},{kind}");
        for &x in v.iter() {
            let _ = write!(out, ",{}", num(x));
        }
        out.push('\n');
    };
    for t in 0..traj.internal.len() {
        for i in 0..traj.internal[t].len() {
            if t < traj.rounds() {
                row(t, i + 1, "published", &traj.published[t][i]);
            }
            row(t, i + 1, "internal", &traj.internal[t][i]);
            if t < traj.rounds() {
                row(t, i + 1, "projected", &traj.projected[t][i]);
            }
        }
    }
    out
}

pub fn series_csv(series: &ErrorSeries) -> String {
    let mut out = String::from("round,value,stderr\n");
    for (t, v) in series.values.iter().enumerate() {
        let se = series.stderr.as_ref().map(|s| num(s[t])).unwrap_or_default();
        let _ = writeln!(out, "{t},{},{se}", num(*v));
    }
    out
}

/// Per-step rows `t,realized_max,bound,margin` and a trailing summary line.
pub fn audit_csv(report: &PrivacyAuditReport) -> String {
    let mut out = String::from("t,realized_max,bound,margin\n");
    for (t, ((r, b), m)) in report
        .per_step_realized
        .iter()
        .zip(&report.per_step_bound)
        .zip(report.margins())
        .enumerate()
    {
        let _ = writeln!(out, "{t},{},{},{}", num(*r), num(*b), num(m));
    }
    let _ = writeln!(
        out,
        "# epsilon_formula={},epsilon_sum={},total_realized={},verdict={},regime={},trials={}",
        num(report.budget.formula),
        num(report.budget.sum),
        num(report.total_realized),
        if report.passed() { "pass" } else { "fail" },
        if report.regime_violation() {
            "violated"
        } else {
            "ok"
        },
        report.trials,
    );
    out
}

pub fn monte_carlo_csv(report: &MonteCarloReport) -> String {
    let mut out = String::from("coordinate,lower_edge,upper_edge,count,count_adj,ratio,ratio_lower\n");
    for c in &report.cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            c.coordinate,
            num(c.lower_edge),
            num(c.upper_edge),
            c.count,
            c.count_adj,
            num(c.ratio),
            num(c.ratio_lower)
        );
    }
    let _ = writeln!(
        out,
        "# epsilon_step={},bound_ratio={},max_ratio={},max_ratio_lower={},verdict={}",
        num(report.epsilon_step),
        num(report.bound_ratio()),
        num(report.max_ratio()),
        num(report.max_ratio_lower()),
        if report.passed() { "pass" } else { "fail" }
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};
    use crate::topology::{erdos_renyi_graph, path_graph};
    use proptest::prelude::*;

    #[test]
    fn graph_round_trip_and_comments() {
        let g = erdos_renyi_graph(7, 0.4, 3, 100).unwrap();
        assert_eq!(parse_graph(&write_graph(&g)).unwrap(), g);
        let text = "# path\n3\n1 2 # first\n\n2 3\n";
        assert_eq!(parse_graph(text).unwrap(), path_graph(3).unwrap());
        assert!(matches!(
            parse_graph("3\n1 2\n"),
            Err(Error::DisconnectedGraph { .. })
        ));
        assert!(matches!(
            parse_graph("3\n1 x\n"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn dataset_nodes_may_appear_in_any_order() {
        let text = "2 1\nnode 2 1\n3 4\nnode 1 2\n1 2\n0.5 -1e-300\n";
        let d = parse_dataset(text).unwrap();
        assert_eq!(d.local(1).rows(), 2);
        assert_eq!(d.local(2).labels()[0], 4.0);
        assert_eq!(d.local(1).labels()[1], -1e-300);
        assert!(parse_dataset("2 1\nnode 1 1\n1 2\n").is_err());
        assert!(parse_dataset("1 2\nnode 1 1\n1 2\n").is_err());
    }

    proptest! {
        #[test]
        fn dataset_round_trips_bit_exactly(seed in any::<u64>(), noise in 0.0f64..10.0) {
            let d = generate_synthetic(&SyntheticSpec {
                per_node_rows: vec![2, 3],
                features: 2,
                ground_truth: DVector::from_vec(vec![1.0 / 3.0, -7.25e-5]),
                label_noise_scale: noise,
                design_norm: 0.7,
                seed,
                latent_rank: None,
            }).unwrap();
            let back = parse_dataset(&write_dataset(&d)).unwrap();
            prop_assert_eq!(back, d);
        }
    }
}
