//! The compact convex region the estimates are projected onto, realized as a
//! closed Euclidean ball.

use nalgebra::DVector;

use crate::data::{solve_least_squares, NetworkDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct OmegaBall {
    center: DVector<f64>,
    radius: f64,
}

impl OmegaBall {
    pub fn new(center: DVector<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidRegion(format!(
                "radius must be positive, got {radius}"
            )));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidRegion("center must be finite".into()));
        }
        Ok(Self { center, radius })
    }

    pub fn centered(dim: usize, radius: f64) -> Result<Self> {
        Self::new(DVector::zeros(dim), radius)
    }

    /// Infinite radius: projection is the identity.
    pub fn unbounded(dim: usize) -> Self {
        Self {
            center: DVector::zeros(dim),
            radius: f64::INFINITY,
        }
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn is_bounded(&self) -> bool {
        self.radius.is_finite()
    }

    /// `sup ||beta||` over the ball.
    pub fn b_omega(&self) -> f64 {
        self.center.norm() + self.radius
    }

    pub fn contains(&self, beta: &DVector<f64>, tolerance: f64) -> bool {
        (beta - &self.center).norm() <= self.radius + tolerance
    }
}

/// Nearest point of the ball.
pub fn project(region: &OmegaBall, beta: &DVector<f64>) -> Result<DVector<f64>> {
    if beta.len() != region.dim() {
        return Err(Error::DimensionMismatch {
            expected: region.dim(),
            actual: beta.len(),
        });
    }
    let offset = beta - &region.center;
    let dist = offset.norm();
    if dist <= region.radius {
        return Ok(beta.clone());
    }
    let mut out = &region.center + offset * (region.radius / dist);
    // Rounding can leave the scaled point a hair outside; pull it back.
    let mut scale = 1.0;
    while (&out - &region.center).norm() > region.radius {
        scale *= 1.0 - f64::EPSILON;
        out = &region.center + (beta - &region.center) * (region.radius * scale / dist);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OmegaSuggestion {
    pub region: OmegaBall,
    pub local_optima: Vec<DVector<f64>>,
    /// Whether the global least-squares solution was checked to lie inside.
    /// `None` when the stacked design is itself rank deficient.
    pub contains_global: Option<bool>,
}

impl OmegaSuggestion {
    pub fn containment_unverified(&self) -> bool {
        self.contains_global != Some(true)
    }
}

/// Centered ball of radius `slack * max_i ||beta*_i||` around the local
/// least-squares optima. This is a heuristic: it always contains every local
/// optimum, but not necessarily the global one.
pub fn suggest_omega(d: &NetworkDataset, slack: f64) -> Result<OmegaSuggestion> {
    if !(slack >= 1.0) {
        return Err(Error::InvalidRegion(format!("slack must be >= 1, got {slack}")));
    }
    let local_optima = d
        .locals()
        .iter()
        .enumerate()
        .map(|(idx, l)| solve_least_squares(l.design(), l.labels(), Some(idx + 1)))
        .collect::<Result<Vec<_>>>()?;
    let largest = local_optima.iter().map(|b| b.norm()).fold(0.0, f64::max);
    let radius = if largest > 0.0 {
        slack * largest
    } else {
        f64::MIN_POSITIVE
    };
    let region = OmegaBall::centered(d.features(), radius)?;
    let (x, y) = crate::data::stack(d);
    let contains_global = crate::data::closed_form_solution(&x, &y)
        .ok()
        .map(|beta| region.contains(&beta, 0.0));
    Ok(OmegaSuggestion {
        region,
        local_optima,
        contains_global,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LocalDataset;
    use nalgebra::{dmatrix, dvector, DMatrix};

    #[test]
    fn project_examples() {
        let ball = OmegaBall::centered(2, 1.0).unwrap();
        let p = project(&ball, &dvector![3.0, 4.0]).unwrap();
        assert!((p - dvector![0.6, 0.8]).amax() < 1e-15);
        assert_eq!(project(&ball, &dvector![0.3, 0.0]).unwrap(), dvector![0.3, 0.0]);
        let off = OmegaBall::new(dvector![1.0, -2.0], 0.5).unwrap();
        assert_eq!(project(&off, &dvector![1.0, -2.0]).unwrap(), dvector![1.0, -2.0]);
        assert!(matches!(
            project(&ball, &dvector![1.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                actual: 1
            })
        ));
    }

    #[test]
    fn b_omega_is_center_norm_plus_radius() {
        let ball = OmegaBall::new(dvector![3.0, 4.0], 2.0).unwrap();
        assert_eq!(ball.b_omega(), 7.0);
        assert!(OmegaBall::centered(2, 0.0).is_err());
    }

    #[test]
    fn unbounded_is_identity() {
        let ball = OmegaBall::unbounded(3);
        let v = dvector![1e300, -4.0, 0.0];
        assert_eq!(project(&ball, &v).unwrap(), v);
    }

    #[test]
    fn suggest_identical_locals() {
        let local = LocalDataset::new(DMatrix::identity(2, 2), dvector![1.0, 0.0]).unwrap();
        let d = NetworkDataset::new(vec![local.clone(), local]).unwrap();
        let s = suggest_omega(&d, 2.0).unwrap();
        assert!((s.region.radius() - 2.0).abs() < 1e-14);
        assert_eq!(s.contains_global, Some(true));
        let s = suggest_omega(&d, 1.0).unwrap();
        assert!((s.region.radius() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn suggest_can_miss_the_global_optimum() {
        // Local optima (1, 0) and (0, 1); pooled normal equations
        // [[3, -2], [-2, 3]] beta = (1, 1) give beta* = (1, 1), norm sqrt(2).
        let n1 = LocalDataset::new(dmatrix![1.0, 0.0; 1.0, -1.0], dvector![1.0, 1.0]).unwrap();
        let n2 = LocalDataset::new(dmatrix![0.0, 1.0; -1.0, 1.0], dvector![1.0, 1.0]).unwrap();
        let d = NetworkDataset::new(vec![n1, n2]).unwrap();
        let s = suggest_omega(&d, 1.0).unwrap();
        assert!((&s.local_optima[0] - dvector![1.0, 0.0]).amax() < 1e-12);
        assert!((&s.local_optima[1] - dvector![0.0, 1.0]).amax() < 1e-12);
        assert_eq!(s.contains_global, Some(false));
        assert!(s.containment_unverified());
    }

    #[test]
    fn suggest_requires_local_rank() {
        let local = LocalDataset::new(dmatrix![1.0, 0.0], dvector![1.0]).unwrap();
        let d = NetworkDataset::new(vec![local]).unwrap();
        assert!(matches!(
            suggest_omega(&d, 1.0),
            Err(Error::RankDeficient { node: Some(1), .. })
        ));
    }
}
