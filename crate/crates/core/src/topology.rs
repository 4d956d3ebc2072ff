//! Communication graph and consensus weights.
//!
//! Node ids are 1-based throughout the public API. Neighbor sets include the
//! node itself and are kept sorted ascending, which is also the summation order
//! used by the engine.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::randomness::RngStream;

pub const WEIGHT_TOLERANCE: f64 = 1e-12;

/// Connected undirected graph without self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    node_count: usize,
    edges: BTreeSet<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl NetworkGraph {
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Edges as `(i, j)` with `i < j`, ascending.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    /// `N_i`: neighbors of `i` plus `i` itself, ascending.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i - 1]
    }

    /// Number of neighbors excluding `i`.
    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i - 1].len() - 1
    }

    pub fn contains(&self, i: usize) -> bool {
        (1..=self.node_count).contains(&i)
    }
}

pub fn build_graph(k: usize, edges: &[(usize, usize)]) -> Result<NetworkGraph> {
    if k == 0 {
        return Err(Error::EmptyGraph);
    }
    let mut set = BTreeSet::new();
    for &(i, j) in edges {
        if i == j {
            return Err(Error::InvalidEdge(i, j, "self-loop"));
        }
        if i == 0 || j == 0 || i > k || j > k {
            return Err(Error::InvalidEdge(i, j, "endpoint out of range"));
        }
        set.insert((i.min(j), i.max(j)));
    }
    let mut adjacency: Vec<BTreeSet<usize>> = (1..=k).map(|i| BTreeSet::from([i])).collect();
    for &(i, j) in &set {
        adjacency[i - 1].insert(j);
        adjacency[j - 1].insert(i);
    }
    let neighbors: Vec<Vec<usize>> = adjacency.into_iter().map(|s| s.into_iter().collect()).collect();

    let mut seen = vec![false; k];
    let mut queue = VecDeque::from([1usize]);
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        for &j in &neighbors[i - 1] {
            if !seen[j - 1] {
                seen[j - 1] = true;
                queue.push_back(j);
            }
        }
    }
    if let Some(pos) = seen.iter().position(|s| !s) {
        return Err(Error::DisconnectedGraph { unreachable: pos + 1 });
    }
    Ok(NetworkGraph {
        node_count: k,
        edges: set,
        neighbors,
    })
}

pub fn path_graph(k: usize) -> Result<NetworkGraph> {
    let edges: Vec<_> = (1..k).map(|i| (i, i + 1)).collect();
    build_graph(k, &edges)
}

pub fn ring_graph(k: usize) -> Result<NetworkGraph> {
    let mut edges: Vec<_> = (1..k).map(|i| (i, i + 1)).collect();
    if k > 2 {
        edges.push((k, 1));
    }
    build_graph(k, &edges)
}

pub fn complete_graph(k: usize) -> Result<NetworkGraph> {
    let edges: Vec<_> = (1..=k).flat_map(|i| (i + 1..=k).map(move |j| (i, j))).collect();
    build_graph(k, &edges)
}

/// Erdős–Rényi G(k, p), resampled until connected. Gives up after
/// `max_attempts` draws with the last disconnection error.
pub fn erdos_renyi_graph(k: usize, p: f64, seed: u64, max_attempts: usize) -> Result<NetworkGraph> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidEdge(0, 0, "edge probability outside [0, 1]"));
    }
    let mut stream = RngStream::new(seed, 0, "graph");
    let mut last = Error::EmptyGraph;
    for _ in 0..max_attempts.max(1) {
        let mut edges = Vec::new();
        for i in 1..=k {
            for j in i + 1..=k {
                if stream.uniform() < p {
                    edges.push((i, j));
                }
            }
        }
        match build_graph(k, &edges) {
            Ok(g) => return Ok(g),
            Err(e) => last = e,
        }
    }
    Err(last)
}

/// Symmetric row-stochastic consensus weights supported on `N_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    entries: DMatrix<f64>,
}

impl WeightMatrix {
    pub fn from_matrix(entries: DMatrix<f64>) -> Self {
        Self { entries }
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    /// `w_ij` with 1-based ids.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.entries[(i - 1, j - 1)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }
}

pub fn metropolis_weights(g: &NetworkGraph) -> WeightMatrix {
    let k = g.node_count();
    let mut w = DMatrix::zeros(k, k);
    for (i, j) in g.edges() {
        let wij = 1.0 / (1.0 + g.degree(i).max(g.degree(j)) as f64);
        w[(i - 1, j - 1)] = wij;
        w[(j - 1, i - 1)] = wij;
    }
    for i in 0..k {
        let off: f64 = (0..k).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    WeightMatrix { entries: w }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeightViolation {
    Shape {
        expected: usize,
        actual: (usize, usize),
    },
    /// Positive weight off the neighbor set, or non-positive weight on it.
    Support {
        i: usize,
        j: usize,
        weight: f64,
    },
    Asymmetry {
        i: usize,
        j: usize,
        difference: f64,
    },
    RowSum {
        i: usize,
        deviation: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightVerdict {
    pub violations: Vec<WeightViolation>,
}

impl WeightVerdict {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_weights(w: &WeightMatrix, g: &NetworkGraph) -> WeightVerdict {
    let k = g.node_count();
    let m = w.matrix();
    let mut violations = Vec::new();
    if m.nrows() != k || m.ncols() != k {
        violations.push(WeightViolation::Shape {
            expected: k,
            actual: m.shape(),
        });
        return WeightVerdict { violations };
    }
    for i in 1..=k {
        for j in 1..=k {
            let wij = m[(i - 1, j - 1)];
            let in_support = i == j || g.has_edge(i, j);
            if in_support != (wij > 0.0) || (!in_support && wij != 0.0) {
                violations.push(WeightViolation::Support { i, j, weight: wij });
            }
            if j > i {
                let difference = wij - m[(j - 1, i - 1)];
                if difference != 0.0 {
                    violations.push(WeightViolation::Asymmetry { i, j, difference });
                }
            }
        }
        let deviation = m.row(i - 1).sum() - 1.0;
        if deviation.abs() > WEIGHT_TOLERANCE {
            violations.push(WeightViolation::RowSum { i, deviation });
        }
    }
    WeightVerdict { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn single_node_graph() {
        let g = build_graph(1, &[]).unwrap();
        assert_eq!(g.neighbors(1), &[1]);
        let w = metropolis_weights(&g);
        assert_eq!(w.matrix(), &DMatrix::from_element(1, 1, 1.0));
    }

    #[test]
    fn path_neighbors() {
        let g = build_graph(3, &[(1, 2), (2, 3)]).unwrap();
        assert_eq!(g.neighbors(2), &[1, 2, 3]);
        assert_eq!(g.neighbors(1), &[1, 2]);
    }

    #[test]
    fn disconnected_is_rejected() {
        assert_eq!(
            build_graph(4, &[(1, 2), (3, 4)]),
            Err(Error::DisconnectedGraph { unreachable: 3 })
        );
    }

    #[test]
    fn invalid_edges() {
        assert!(matches!(
            build_graph(3, &[(2, 2)]),
            Err(Error::InvalidEdge(2, 2, _))
        ));
        assert!(matches!(
            build_graph(3, &[(1, 4)]),
            Err(Error::InvalidEdge(1, 4, _))
        ));
        assert!(matches!(
            build_graph(3, &[(0, 1)]),
            Err(Error::InvalidEdge(0, 1, _))
        ));
        assert_eq!(build_graph(0, &[]), Err(Error::EmptyGraph));
    }

    #[test]
    fn metropolis_on_path() {
        let w = metropolis_weights(&path_graph(3).unwrap());
        let third = 1.0 / 3.0;
        assert!((w.weight(1, 2) - third).abs() < 1e-15);
        assert!((w.weight(2, 3) - third).abs() < 1e-15);
        assert!((w.weight(1, 1) - 2.0 * third).abs() < 1e-15);
        assert!((w.weight(2, 2) - third).abs() < 1e-15);
        assert!((w.weight(3, 3) - 2.0 * third).abs() < 1e-15);
        assert_eq!(w.weight(1, 3), 0.0);
    }

    #[test]
    fn metropolis_on_complete_three() {
        let w = metropolis_weights(&complete_graph(3).unwrap());
        for i in 1..=3 {
            for j in 1..=3 {
                assert!((w.weight(i, j) - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn asymmetry_and_support_violations() {
        let g = path_graph(3).unwrap();
        let mut m = metropolis_weights(&g).matrix().clone();
        m[(0, 1)] += 0.01;
        m[(0, 0)] -= 0.01;
        let verdict = validate_weights(&WeightMatrix::from_matrix(m), &g);
        assert!(verdict
            .violations
            .iter()
            .any(|v| matches!(v, WeightViolation::Asymmetry { i: 1, j: 2, .. })));

        let g2 = path_graph(2).unwrap();
        let verdict = validate_weights(&WeightMatrix::from_matrix(DMatrix::identity(2, 2)), &g2);
        assert!(verdict
            .violations
            .iter()
            .any(|v| matches!(v, WeightViolation::Support { i: 1, j: 2, .. })));
    }

    #[test]
    fn row_sum_violation() {
        let g = complete_graph(2).unwrap();
        let w = WeightMatrix::from_matrix(DMatrix::from_element(2, 2, 0.6));
        let verdict = validate_weights(&w, &g);
        assert_eq!(verdict.violations.len(), 2);
    }

    #[test]
    fn generators() {
        assert_eq!(ring_graph(5).unwrap().edge_count(), 5);
        assert_eq!(ring_graph(2).unwrap().edge_count(), 1);
        assert_eq!(complete_graph(5).unwrap().edge_count(), 10);
        assert_eq!(path_graph(1).unwrap().edge_count(), 0);
        let a = erdos_renyi_graph(12, 0.3, 5, 1000).unwrap();
        let b = erdos_renyi_graph(12, 0.3, 5, 1000).unwrap();
        assert_eq!(a, b);
        assert!(erdos_renyi_graph(5, 0.0, 1, 10).is_err());
    }

    #[test]
    fn ones_is_fixed_point_and_max_norm_contracts() {
        let g = erdos_renyi_graph(9, 0.4, 11, 1000).unwrap();
        let w = metropolis_weights(&g);
        let ones = DVector::from_element(9, 1.0);
        let image = w.matrix() * &ones;
        assert!((image - &ones).amax() <= WEIGHT_TOLERANCE);
        let mut s = RngStream::new(3, 0, "test");
        for _ in 0..100 {
            let raw: Vec<f64> = (0..9).map(|_| s.uniform()).collect();
            let total: f64 = raw.iter().sum();
            let x = DVector::from_iterator(9, raw.into_iter().map(|v| v / total));
            assert!((w.matrix() * &x).amax() <= x.amax() + 1e-15);
        }
    }
}
