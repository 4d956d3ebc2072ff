//! Decentralized least-squares datasets.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::randomness::RngStream;

/// Relative threshold below which a singular value counts as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// One node's private data: an `n_i x m` design and `n_i` labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDataset {
    design: DMatrix<f64>,
    labels: DVector<f64>,
}

impl LocalDataset {
    pub fn new(design: DMatrix<f64>, labels: DVector<f64>) -> Result<Self> {
        if design.nrows() == 0 || design.ncols() == 0 {
            return Err(Error::InvalidDataset("local design must be at least 1x1".into()));
        }
        if design.nrows() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "design has {} rows but {} labels",
                design.nrows(),
                labels.len()
            )));
        }
        if design.iter().chain(labels.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("non-finite entry".into()));
        }
        Ok(Self { design, labels })
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn labels(&self) -> &DVector<f64> {
        &self.labels
    }

    pub fn rows(&self) -> usize {
        self.design.nrows()
    }

    pub fn features(&self) -> usize {
        self.design.ncols()
    }

    /// `1/2 ||X beta - y||^2`
    pub fn loss(&self, beta: &DVector<f64>) -> f64 {
        0.5 * (&self.design * beta - &self.labels).norm_squared()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkDataset {
    locals: Vec<LocalDataset>,
    features: usize,
}

impl NetworkDataset {
    pub fn new(locals: Vec<LocalDataset>) -> Result<Self> {
        let features = locals
            .first()
            .ok_or_else(|| Error::InvalidDataset("no nodes".into()))?
            .features();
        if let Some(bad) = locals.iter().position(|l| l.features() != features) {
            return Err(Error::ShapeMismatch(format!(
                "node {} has {} features, expected {}",
                bad + 1,
                locals[bad].features(),
                features
            )));
        }
        Ok(Self { locals, features })
    }

    pub fn node_count(&self) -> usize {
        self.locals.len()
    }

    pub fn features(&self) -> usize {
        self.features
    }

    /// Local dataset of node `i` (1-based).
    pub fn local(&self, i: usize) -> &LocalDataset {
        &self.locals[i - 1]
    }

    pub fn locals(&self) -> &[LocalDataset] {
        &self.locals
    }

    pub fn total_rows(&self) -> usize {
        self.locals.iter().map(LocalDataset::rows).sum()
    }

    /// `n_M`, the largest local row count.
    pub fn max_rows(&self) -> usize {
        self.locals.iter().map(LocalDataset::rows).max().unwrap_or(0)
    }

    /// Starting row of each node in the stacked design, plus the total.
    pub fn row_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.locals.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for l in &self.locals {
            acc += l.rows();
            offsets.push(acc);
        }
        offsets
    }

    pub fn loss(&self, beta: &DVector<f64>) -> f64 {
        self.locals.iter().map(|l| l.loss(beta)).sum()
    }
}

/// Parameters of a synthetic Gaussian dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub per_node_rows: Vec<usize>,
    pub features: usize,
    pub ground_truth: DVector<f64>,
    pub label_noise_scale: f64,
    /// Every local design is rescaled to exactly this spectral norm.
    pub design_norm: f64,
    pub seed: u64,
    /// When set below `features`, every design is `Z A` for one shared
    /// `latent_rank x features` mixing matrix `A`, so the pooled design has
    /// rank at most `latent_rank`.
    pub latent_rank: Option<usize>,
}

/// Standard-normal designs rescaled to `design_norm`, with labels
/// `X_i * ground_truth + N(0, label_noise_scale^2)`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<NetworkDataset> {
    let m = spec.features;
    let rows: usize = spec.per_node_rows.iter().sum();
    if m == 0 || spec.per_node_rows.is_empty() || spec.per_node_rows.contains(&0) {
        return Err(Error::InvalidDataset(
            "need at least one node, one feature and one row per node".into(),
        ));
    }
    if rows < m {
        return Err(Error::InsufficientRows { rows, features: m });
    }
    if spec.ground_truth.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: spec.ground_truth.len(),
        });
    }
    if !(spec.design_norm > 0.0) || !(spec.label_noise_scale >= 0.0) {
        return Err(Error::InvalidDataset(
            "design_norm must be positive and label noise nonnegative".into(),
        ));
    }
    let mixing = match spec.latent_rank {
        Some(0) => return Err(Error::InvalidDataset("latent_rank must be positive".into())),
        Some(r) if r < m => {
            let mut mixing_rng = RngStream::new(spec.seed, 0, "mixing");
            Some(DMatrix::from_row_iterator(
                r,
                m,
                (0..r * m).map(|_| mixing_rng.standard_normal()),
            ))
        }
        _ => None,
    };
    let locals = spec
        .per_node_rows
        .iter()
        .enumerate()
        .map(|(idx, &n_i)| {
            let node = idx + 1;
            let mut design_rng = RngStream::new(spec.seed, node, "design");
            let mut label_rng = RngStream::new(spec.seed, node, "label-noise");
            // Row-major fill so the draw order is independent of storage layout.
            let cols = mixing.as_ref().map_or(m, |a| a.nrows());
            let mut raw =
                DMatrix::from_row_iterator(n_i, cols, (0..n_i * cols).map(|_| design_rng.standard_normal()));
            if let Some(a) = &mixing {
                raw *= a;
            }
            let norm = spectral_norm(&raw);
            let design = if norm > 0.0 {
                raw * (spec.design_norm / norm)
            } else {
                raw
            };
            let noise = DVector::from_iterator(
                n_i,
                (0..n_i).map(|_| spec.label_noise_scale * label_rng.standard_normal()),
            );
            let labels = &design * &spec.ground_truth + noise;
            LocalDataset::new(design, labels)
        })
        .collect::<Result<Vec<_>>>()?;
    NetworkDataset::new(locals)
}

/// Row-concatenation `X = [X_1; ...; X_k]`, `y = [y_1; ...; y_k]` in node order.
pub fn stack(d: &NetworkDataset) -> (DMatrix<f64>, DVector<f64>) {
    let n = d.total_rows();
    let m = d.features();
    let mut x = DMatrix::zeros(n, m);
    let mut y = DVector::zeros(n);
    let mut offset = 0;
    for l in d.locals() {
        x.rows_mut(offset, l.rows()).copy_from(l.design());
        y.rows_mut(offset, l.rows()).copy_from(l.labels());
        offset += l.rows();
    }
    (x, y)
}

/// Inverse of [`stack`] given the offsets from [`NetworkDataset::row_offsets`].
pub fn split(x: &DMatrix<f64>, y: &DVector<f64>, offsets: &[usize]) -> Result<NetworkDataset> {
    let locals = offsets
        .windows(2)
        .map(|w| {
            LocalDataset::new(
                x.rows(w[0], w[1] - w[0]).into_owned(),
                y.rows(w[0], w[1] - w[0]).into_owned(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    NetworkDataset::new(locals)
}

/// Least-squares minimizer via SVD.
pub fn closed_form_solution(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    solve_least_squares(x, y, None)
}

pub(crate) fn solve_least_squares(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    node: Option<usize>,
) -> Result<DVector<f64>> {
    let m = x.ncols();
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    let svd = x.clone().svd(true, true);
    let largest = svd.singular_values.max();
    let threshold = RANK_TOLERANCE * largest;
    let rank = svd.singular_values.iter().filter(|&&s| s > threshold).count();
    if rank < m || largest == 0.0 {
        return Err(Error::RankDeficient {
            rank: if largest == 0.0 { 0 } else { rank },
            features: m,
            node,
        });
    }
    svd.solve(y, threshold)
        .map_err(|msg| Error::InvalidDataset(msg.to_string()))
}

/// `X_i^T (X_i beta - y_i)`
pub fn local_gradient(d: &LocalDataset, beta: &DVector<f64>) -> Result<DVector<f64>> {
    if beta.len() != d.features() {
        return Err(Error::DimensionMismatch {
            expected: d.features(),
            actual: beta.len(),
        });
    }
    let residual = d.design() * beta - d.labels();
    Ok(d.design().tr_mul(&residual))
}

/// Sensitivity bounds `(delta_X, delta_y)` of a dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjacencyParams {
    pub delta_x: f64,
    pub delta_y: f64,
}

impl AdjacencyParams {
    /// Checks one local against the bounds; `node` is only used in the error.
    pub fn certify_local(&self, node: usize, local: &LocalDataset) -> Result<()> {
        let x_norm = spectral_norm(local.design());
        if x_norm > self.delta_x {
            return Err(Error::BoundViolation {
                node,
                what: "spectral norm of design",
                value: x_norm,
                bound: self.delta_x,
            });
        }
        let y_norm = local.labels().norm();
        if y_norm > self.delta_y {
            return Err(Error::BoundViolation {
                node,
                what: "label norm",
                value: y_norm,
                bound: self.delta_y,
            });
        }
        Ok(())
    }

    pub fn certify(&self, d: &NetworkDataset) -> Result<()> {
        d.locals()
            .iter()
            .enumerate()
            .try_for_each(|(idx, l)| self.certify_local(idx + 1, l))
    }
}

pub fn adjacency_params(d: &NetworkDataset) -> AdjacencyParams {
    let delta_x = d
        .locals()
        .iter()
        .map(|l| spectral_norm(l.design()))
        .fold(0.0, f64::max);
    let delta_y = d.locals().iter().map(|l| l.labels().norm()).fold(0.0, f64::max);
    AdjacencyParams { delta_x, delta_y }
}

/// Replaces node `node`'s data, producing a dataset adjacent to `d` under
/// `bounds`. Row counts must match the replaced local.
pub fn make_adjacent(
    d: &NetworkDataset,
    node: usize,
    new_local: LocalDataset,
    bounds: &AdjacencyParams,
) -> Result<NetworkDataset> {
    if node == 0 || node > d.node_count() {
        return Err(Error::UnknownNode(node));
    }
    let old = d.local(node);
    if new_local.features() != old.features() || new_local.rows() != old.rows() {
        return Err(Error::ShapeMismatch(format!(
            "replacement at node {node} is {}x{}, expected {}x{}",
            new_local.rows(),
            new_local.features(),
            old.rows(),
            old.features()
        )));
    }
    bounds.certify_local(node, old)?;
    bounds.certify_local(node, &new_local)?;
    let mut locals = d.locals().to_vec();
    locals[node - 1] = new_local;
    NetworkDataset::new(locals)
}

/// Nodes at which two datasets of identical shape differ.
pub fn differing_nodes(a: &NetworkDataset, b: &NetworkDataset) -> Result<Vec<usize>> {
    if a.node_count() != b.node_count() || a.features() != b.features() {
        return Err(Error::ShapeMismatch(format!(
            "datasets have shapes k={},m={} and k={},m={}",
            a.node_count(),
            a.features(),
            b.node_count(),
            b.features()
        )));
    }
    let mut nodes = Vec::new();
    for (idx, (la, lb)) in a.locals().iter().zip(b.locals()).enumerate() {
        if la.rows() != lb.rows() {
            return Err(Error::ShapeMismatch(format!(
                "node {} has {} rows vs {}",
                idx + 1,
                la.rows(),
                lb.rows()
            )));
        }
        if la != lb {
            nodes.push(idx + 1);
        }
    }
    Ok(nodes)
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}
