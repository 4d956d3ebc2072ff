//! Estimation-error series and growth-envelope checks.

use std::ops::RangeInclusive;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::engine::{run_baseline, run_private, RunKind, RunSetup, Trajectory};
use crate::error::{Error, Result};

/// Summed per-node error `sum_i ||beta~_i(t) - beta*||` per round, optionally
/// averaged over trials.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSeries {
    pub values: Vec<f64>,
    /// Standard error of the mean; `None` for a single trajectory.
    pub stderr: Option<Vec<f64>>,
}

impl ErrorSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
            stderr: self
                .stderr
                .as_ref()
                .map(|s| s.iter().map(|v| v * factor.abs()).collect()),
        }
    }
}

pub fn error_trajectory(traj: &Trajectory, beta_star: &DVector<f64>) -> Result<ErrorSeries> {
    if traj.features() != beta_star.len() {
        return Err(Error::DimensionMismatch {
            expected: traj.features(),
            actual: beta_star.len(),
        });
    }
    let values = traj
        .published
        .iter()
        .map(|round| round.iter().map(|b| (b - beta_star).norm()).sum())
        .collect();
    Ok(ErrorSeries { values, stderr: None })
}

/// Per-node error series `||beta~_i(t) - beta*||`, node-major.
pub fn node_error_series(traj: &Trajectory, beta_star: &DVector<f64>) -> Vec<Vec<f64>> {
    (0..traj.node_count())
        .map(|i| {
            traj.published
                .iter()
                .map(|round| (&round[i] - beta_star).norm())
                .collect()
        })
        .collect()
}

/// Pointwise mean and standard error of the error series of one run per seed.
/// Baseline runs ignore the seeds.
pub fn mean_error_over_trials(
    setup: &RunSetup,
    kind: RunKind,
    beta_star: &DVector<f64>,
    seeds: &[u64],
) -> Result<ErrorSeries> {
    if seeds.is_empty() {
        return Err(Error::InsufficientTrials("need at least one trial".into()));
    }
    let series = seeds
        .par_iter()
        .map(|&seed| {
            let traj = match kind {
                RunKind::Private => run_private(setup, seed)?,
                RunKind::Baseline => run_baseline(setup)?,
            };
            error_trajectory(&traj, beta_star)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_series(&series))
}

pub fn mean_series(series: &[ErrorSeries]) -> ErrorSeries {
    let r = series.len() as f64;
    let len = series[0].len();
    let values: Vec<f64> = (0..len)
        .map(|t| series.iter().map(|s| s.values[t]).sum::<f64>() / r)
        .collect();
    if series.len() == 1 {
        return ErrorSeries { values, stderr: None };
    }
    let stderr = (0..len)
        .map(|t| {
            let var = series
                .iter()
                .map(|s| (s.values[t] - values[t]).powi(2))
                .sum::<f64>()
                / (r - 1.0);
            (var / r).sqrt()
        })
        .collect();
    ErrorSeries {
        values,
        stderr: Some(stderr),
    }
}

/// `t` when `e_alpha = 1`, else `exp(t^(1 - e_alpha))`.
pub fn envelope(t: usize, e_alpha: f64) -> f64 {
    if e_alpha == 1.0 {
        t as f64
    } else {
        (t as f64).powf(1.0 - e_alpha).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeVerdict {
    /// `max_{t in fit} values[t] / g(t)`
    pub fitted_constant: f64,
    /// `max_{t in test} values[t] / (C g(t))`; the check passes iff this is at most `slack`.
    pub worst_test_ratio: f64,
    pub slack: f64,
    pub passed: bool,
}

pub fn growth_envelope_check(
    series: &ErrorSeries,
    e_alpha: f64,
    fit_window: RangeInclusive<usize>,
    test_window: RangeInclusive<usize>,
    slack: f64,
) -> Result<EnvelopeVerdict> {
    if fit_window.is_empty() || test_window.is_empty() {
        return Err(Error::EmptyWindow(
            "fit and test windows must be non-empty".into(),
        ));
    }
    if *fit_window.end() > *test_window.start() {
        return Err(Error::EmptyWindow(format!(
            "fit window {fit_window:?} must precede test window {test_window:?}"
        )));
    }
    if *test_window.end() >= series.len() {
        return Err(Error::EmptyWindow(format!(
            "test window {test_window:?} extends past the series of length {}",
            series.len()
        )));
    }
    if e_alpha == 1.0 && *fit_window.start() == 0 {
        return Err(Error::EmptyWindow("the linear envelope vanishes at t = 0".into()));
    }
    if !(slack >= 1.0) {
        return Err(Error::EmptyWindow(format!("slack must be >= 1, got {slack}")));
    }
    let fitted_constant = fit_window
        .map(|t| series.values[t] / envelope(t, e_alpha))
        .fold(0.0, f64::max);
    let worst_test_ratio = test_window
        .map(|t| {
            let cap = fitted_constant * envelope(t, e_alpha);
            if cap > 0.0 {
                series.values[t] / cap
            } else if series.values[t] > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    Ok(EnvelopeVerdict {
        fitted_constant,
        worst_test_ratio,
        slack,
        passed: worst_test_ratio <= slack,
    })
}

/// Whether the last quarter of `series` is non-increasing up to a relative
/// noise band `tolerance`: every value is at most `(1 + tolerance)` times the
/// running minimum before it.
pub fn eventually_decreasing(series: &ErrorSeries, tolerance: f64) -> bool {
    let start = series.len() * 3 / 4;
    let mut running_min = f64::INFINITY;
    series.values[start..].iter().all(|&v| {
        let ok = v <= running_min * (1.0 + tolerance) || running_min.is_infinite();
        running_min = running_min.min(v);
        ok
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{Fingerprint, NoiseMode};
    use nalgebra::dvector;
    use proptest::prelude::*;

    fn series(values: Vec<f64>) -> ErrorSeries {
        ErrorSeries { values, stderr: None }
    }

    fn traj_of(published: Vec<Vec<DVector<f64>>>) -> Trajectory {
        Trajectory {
            internal: published.clone(),
            projected: published.clone(),
            published,
            noise: Vec::new(),
            fingerprint: Fingerprint {
                kind: RunKind::Private,
                noise: NoiseMode::Disabled,
                seed: None,
                params_hash: String::new(),
            },
        }
    }

    #[test]
    fn error_trajectory_examples() {
        let star = dvector![2.0];
        let t = traj_of(vec![
            vec![star.clone(), star.clone()],
            vec![dvector![3.0], dvector![1.0]],
        ]);
        let s = error_trajectory(&t, &star).unwrap();
        assert_eq!(s.values, vec![0.0, 2.0]);
        let per_node = node_error_series(&t, &star);
        for r in 0..2 {
            assert_eq!(per_node[0][r] + per_node[1][r], s.values[r]);
        }
        assert!(error_trajectory(&t, &dvector![1.0, 2.0]).is_err());
    }

    #[test]
    fn error_is_invariant_under_node_relabeling() {
        let star = dvector![0.5, 0.5];
        let a = vec![dvector![1.0, 2.0], dvector![-1.0, 0.0], dvector![0.3, 0.3]];
        let mut b = a.clone();
        b.reverse();
        let ea = error_trajectory(&traj_of(vec![a]), &star).unwrap();
        let eb = error_trajectory(&traj_of(vec![b]), &star).unwrap();
        assert!((ea.values[0] - eb.values[0]).abs() < 1e-15);
    }

    #[test]
    fn mean_of_one_is_identity() {
        let s = series(vec![1.0, 2.0, 3.0]);
        assert_eq!(mean_series(std::slice::from_ref(&s)), s);
        let m = mean_series(&[s.clone(), s.clone()]);
        assert_eq!(m.values, s.values);
        assert_eq!(m.stderr, Some(vec![0.0; 3]));
    }

    #[test]
    fn envelope_examples() {
        let constant = series(vec![3.0; 100]);
        assert!(
            growth_envelope_check(&constant, 1.0, 5..=20, 20..=99, 1.0)
                .unwrap()
                .passed
        );

        let quadratic = series((0..100).map(|t| (t * t) as f64).collect());
        let v = growth_envelope_check(&quadratic, 1.0, 10..=20, 40..=80, 2.0).unwrap();
        assert_eq!(v.fitted_constant, 20.0);
        assert!(!v.passed);

        let root_exp = series((0..400).map(|t| (t as f64).sqrt().exp()).collect());
        let v = growth_envelope_check(&root_exp, 0.5, 10..=100, 100..=399, 1.5).unwrap();
        assert!(v.passed);
    }

    #[test]
    fn envelope_window_errors() {
        let s = series(vec![1.0; 10]);
        assert!(matches!(
            growth_envelope_check(&s, 1.0, 5..=6, 2..=9, 2.0),
            Err(Error::EmptyWindow(_))
        ));
        assert!(matches!(
            growth_envelope_check(&s, 1.0, 1..=2, 3..=10, 2.0),
            Err(Error::EmptyWindow(_))
        ));
        assert!(matches!(
            growth_envelope_check(&s, 1.0, 0..=2, 3..=9, 2.0),
            Err(Error::EmptyWindow(_))
        ));
        #[allow(clippy::reversed_empty_ranges)]
        let empty = 4..=3;
        assert!(matches!(
            growth_envelope_check(&s, 1.0, empty, 5..=9, 2.0),
            Err(Error::EmptyWindow(_))
        ));
    }

    #[test]
    fn eventually_decreasing_detects_growth() {
        let falling = series((0..100).map(|t| 1.0 / (t + 1) as f64).collect());
        assert!(eventually_decreasing(&falling, 0.05));
        let rising = series((0..100).map(|t| t as f64).collect());
        assert!(!eventually_decreasing(&rising, 0.05));
    }

    proptest! {
        #[test]
        fn envelope_check_is_scale_covariant(
            values in prop::collection::vec(0.01f64..100.0, 60),
            lambda in 0.01f64..100.0,
            e_alpha in prop::sample::select(vec![1.0, 0.5, 0.8]),
        ) {
            let s = series(values);
            let a = growth_envelope_check(&s, e_alpha, 5..=20, 20..=59, 2.0).unwrap();
            let b = growth_envelope_check(&s.scaled(lambda), e_alpha, 5..=20, 20..=59, 2.0).unwrap();
            prop_assert!((b.fitted_constant - lambda * a.fitted_constant).abs() <= 1e-12 * b.fitted_constant);
            prop_assert_eq!(a.passed, b.passed);
        }
    }
}
