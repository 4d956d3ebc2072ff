//! Power-law step-size and noise schedules, and the closed-form privacy budget.

use crate::error::{Error, Result};

/// `alpha(t) = c_alpha / (t + d_alpha)^e_alpha`, `v(t) = c_v / (t + d_v)^e_v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleParams {
    pub c_alpha: f64,
    pub d_alpha: f64,
    pub e_alpha: f64,
    pub c_v: f64,
    pub d_v: f64,
    pub e_v: f64,
}

impl ScheduleParams {
    pub fn new(c_alpha: f64, d_alpha: f64, e_alpha: f64, c_v: f64, d_v: f64, e_v: f64) -> Result<Self> {
        let p = Self {
            c_alpha,
            d_alpha,
            e_alpha,
            c_v,
            d_v,
            e_v,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("c_alpha", self.c_alpha),
            ("d_alpha", self.d_alpha),
            ("e_alpha", self.e_alpha),
            ("c_v", self.c_v),
            ("d_v", self.d_v),
            ("e_v", self.e_v),
        ];
        for (name, value) in named {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidSchedule(format!(
                    "{name} must be positive and finite, got {value}"
                )));
            }
        }
        Ok(())
    }

    pub fn alpha(&self, t: usize) -> f64 {
        alpha(t, self)
    }

    pub fn noise_scale(&self, t: usize) -> f64 {
        noise_scale(t, self)
    }
}

pub fn alpha(t: usize, p: &ScheduleParams) -> f64 {
    p.c_alpha / libm::pow(t as f64 + p.d_alpha, p.e_alpha)
}

pub fn noise_scale(t: usize, p: &ScheduleParams) -> f64 {
    p.c_v / libm::pow(t as f64 + p.d_v, p.e_v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegimeVerdict {
    /// `1 < d_v + 1 <= d_alpha`
    pub offsets_ordered: bool,
    /// `e_v <= e_alpha`, so every `alpha(t)/v(t+1) <= c_alpha/c_v`.
    pub exponents_ordered: bool,
    /// `e_alpha - e_v > 1`: the ratio sequence is summable.
    pub summable: bool,
}

impl RegimeVerdict {
    /// Preconditions of the closed-form budget.
    pub fn closed_form_valid(&self) -> bool {
        self.offsets_ordered && self.exponents_ordered
    }
}

pub fn check_budget_regime(p: &ScheduleParams) -> RegimeVerdict {
    RegimeVerdict {
        offsets_ordered: 1.0 < p.d_v + 1.0 && p.d_v + 1.0 <= p.d_alpha,
        exponents_ordered: p.e_v <= p.e_alpha,
        summable: p.e_alpha - p.e_v > 1.0,
    }
}

/// Problem-size inputs of the budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetInputs {
    pub rounds: usize,
    pub features: usize,
    pub nodes: usize,
    pub max_rows: usize,
    pub delta_x: f64,
    pub delta_y: f64,
    pub b_omega: f64,
}

impl BudgetInputs {
    /// `4 delta_X sqrt(m n_M) (delta_X B_Omega sqrt(k m) + delta_y)`, the
    /// l1-sensitivity of one gradient step per unit of `alpha(t)/v(t+1)`.
    pub fn sensitivity(&self) -> f64 {
        if self.delta_x == 0.0 {
            return 0.0;
        }
        let m = self.features as f64;
        let k = self.nodes as f64;
        let n_max = self.max_rows as f64;
        4.0 * self.delta_x
            * (m * n_max).sqrt()
            * (self.delta_x * self.b_omega * (k * m).sqrt() + self.delta_y)
    }
}

/// Bound on the log-likelihood ratio of the transition from round `t` to
/// round `t + 1`.
pub fn per_step_loss_bound(t: usize, p: &ScheduleParams, b: &BudgetInputs) -> f64 {
    let s = b.sensitivity();
    if s == 0.0 {
        return 0.0;
    }
    s * alpha(t, p) / noise_scale(t + 1, p)
}

/// `sum_{t < T} per_step_loss_bound(t)`
pub fn budget_sum(p: &ScheduleParams, b: &BudgetInputs) -> f64 {
    (0..b.rounds).map(|t| per_step_loss_bound(t, p, b)).sum()
}

/// `4 delta_X c_alpha c_v^{-1} T sqrt(m n_M) (delta_X B_Omega sqrt(k m) + delta_y)`,
/// without checking the regime.
pub fn privacy_budget_unchecked(p: &ScheduleParams, b: &BudgetInputs) -> f64 {
    let s = b.sensitivity();
    if s == 0.0 {
        return 0.0;
    }
    s * p.c_alpha / p.c_v * b.rounds as f64
}

pub fn privacy_budget(p: &ScheduleParams, b: &BudgetInputs) -> Result<f64> {
    let regime = check_budget_regime(p);
    if !regime.offsets_ordered {
        return Err(Error::RegimeViolation(format!(
            "need 1 < d_v + 1 <= d_alpha, got d_v = {}, d_alpha = {}",
            p.d_v, p.d_alpha
        )));
    }
    if !regime.exponents_ordered {
        return Err(Error::RegimeViolation(format!(
            "need e_v <= e_alpha, got e_v = {}, e_alpha = {}",
            p.e_v, p.e_alpha
        )));
    }
    Ok(privacy_budget_unchecked(p, b))
}

/// Both budget numbers together with the regime they were computed under.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetSummary {
    pub formula: f64,
    pub sum: f64,
    pub regime: RegimeVerdict,
}

impl BudgetSummary {
    /// The tightest budget the regime allows claiming.
    pub fn effective(&self) -> f64 {
        if self.regime.closed_form_valid() {
            self.formula.min(self.sum)
        } else {
            self.sum
        }
    }
}

pub fn budget_summary(p: &ScheduleParams, b: &BudgetInputs) -> BudgetSummary {
    BudgetSummary {
        formula: privacy_budget_unchecked(p, b),
        sum: budget_sum(p, b),
        regime: check_budget_regime(p),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_params() -> ScheduleParams {
        ScheduleParams::new(1.0, 2.0, 1.0, 1.0, 1.0, 1.0).unwrap()
    }

    fn unit_inputs(rounds: usize) -> BudgetInputs {
        BudgetInputs {
            rounds,
            features: 1,
            nodes: 1,
            max_rows: 1,
            delta_x: 1.0,
            delta_y: 1.0,
            b_omega: 1.0,
        }
    }

    #[test]
    fn alpha_examples() {
        let p = ScheduleParams::new(1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(alpha(0, &p), 1.0);
        let p = ScheduleParams::new(2.0, 2.0, 0.5, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(alpha(2, &p), 1.0);
        for t in 0..1000 {
            assert!(alpha(t + 1, &p) < alpha(t, &p));
        }
    }

    #[test]
    fn noise_scale_examples() {
        let p = ScheduleParams::new(1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(noise_scale(0, &p), 1.0);
        assert!(noise_scale(1_000_000, &p) < 1e-3);
        let p = ScheduleParams::new(1.0, 1.0, 1.0, 3.0, 2.0, 2.0).unwrap();
        assert!((noise_scale(1, &p) - 1.0 / 3.0).abs() < 1e-16);
    }

    #[test]
    fn rejects_non_positive_parameters() {
        assert!(ScheduleParams::new(1.0, 0.0, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(ScheduleParams::new(1.0, 1.0, 1.0, 1.0, 0.0, 1.0).is_err());
        assert!(ScheduleParams::new(1.0, 1.0, f64::NAN, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn regime_examples() {
        let p = ScheduleParams::new(1.0, 2.0, 1.0, 1.0, 1.0, 0.5).unwrap();
        let v = check_budget_regime(&p);
        assert!(v.offsets_ordered && v.exponents_ordered && !v.summable);

        let p = ScheduleParams::new(1.0, 3.0, 2.5, 1.0, 1.0, 1.0).unwrap();
        let v = check_budget_regime(&p);
        assert!(v.offsets_ordered && v.exponents_ordered && v.summable);

        let p = ScheduleParams::new(1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(!check_budget_regime(&p).offsets_ordered);
    }

    #[test]
    fn per_step_examples() {
        let p = unit_params();
        assert_eq!(per_step_loss_bound(0, &p, &unit_inputs(1)), 8.0);
        let zero = BudgetInputs {
            delta_x: 0.0,
            b_omega: f64::INFINITY,
            ..unit_inputs(5)
        };
        for t in 0..5 {
            assert_eq!(per_step_loss_bound(t, &p, &zero), 0.0);
        }
        // Level bound: e_alpha = e_v, d_alpha = d_v + 1.
        let p = ScheduleParams::new(0.3, 3.5, 0.7, 1.9, 2.5, 0.7).unwrap();
        let b = unit_inputs(1);
        for t in 0..200 {
            let ratio = alpha(t, &p) / noise_scale(t + 1, &p);
            assert!((ratio - 0.3 / 1.9).abs() <= 1e-15);
            let rel = per_step_loss_bound(t, &p, &b) / (8.0 * 0.3 / 1.9);
            assert!((rel - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn budget_examples() {
        let p = unit_params();
        assert_eq!(privacy_budget(&p, &unit_inputs(1)).unwrap(), 8.0);
        let one = privacy_budget(&p, &unit_inputs(7)).unwrap();
        let two = privacy_budget(&p, &unit_inputs(14)).unwrap();
        assert_eq!(two, 2.0 * one);

        let b = BudgetInputs {
            rounds: 10,
            features: 2,
            nodes: 3,
            max_rows: 5,
            delta_x: 1.0,
            delta_y: 1.0,
            b_omega: 2.0,
        };
        let expected = 40.0 * 10f64.sqrt() * (2.0 * 6f64.sqrt() + 1.0);
        let got = privacy_budget(&p, &b).unwrap();
        assert!((got - expected).abs() <= 1e-12 * expected);
        assert!(budget_sum(&p, &b) <= got * (1.0 + 1e-9));
    }

    #[test]
    fn regime_violation_is_reported() {
        let p = ScheduleParams::new(1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(matches!(
            privacy_budget(&p, &unit_inputs(3)),
            Err(Error::RegimeViolation(_))
        ));
        let p = ScheduleParams::new(1.0, 2.0, 0.5, 1.0, 1.0, 1.0).unwrap();
        assert!(matches!(
            privacy_budget(&p, &unit_inputs(3)),
            Err(Error::RegimeViolation(_))
        ));
        let s = budget_summary(&p, &unit_inputs(3));
        assert_eq!(s.effective(), s.sum);
    }

    fn valid_params() -> impl Strategy<Value = ScheduleParams> {
        (
            0.01f64..5.0,
            0.01f64..5.0,
            0.05f64..2.0,
            0.0f64..3.0,
            0.01f64..5.0,
            0.0f64..1.0,
        )
            .prop_map(|(c_alpha, d_v, e_alpha, d_gap, c_v, e_frac)| ScheduleParams {
                c_alpha,
                d_alpha: d_v + 1.0 + d_gap,
                e_alpha,
                c_v,
                d_v,
                e_v: (e_alpha * e_frac).max(1e-3).min(e_alpha),
            })
    }

    fn inputs() -> impl Strategy<Value = BudgetInputs> {
        (
            1usize..200,
            1usize..6,
            1usize..8,
            1usize..30,
            0.0f64..3.0,
            0.0f64..3.0,
            0.1f64..10.0,
        )
            .prop_map(|(rounds, features, nodes, max_rows, delta_x, delta_y, b_omega)| {
                BudgetInputs {
                    rounds,
                    features,
                    nodes,
                    max_rows,
                    delta_x,
                    delta_y,
                    b_omega,
                }
            })
    }

    proptest! {
        #[test]
        fn step_sum_never_exceeds_formula(p in valid_params(), b in inputs()) {
            let formula = privacy_budget(&p, &b).unwrap();
            prop_assert!(budget_sum(&p, &b) <= formula * (1.0 + 1e-9) + 1e-300);
        }

        #[test]
        fn schedules_positive_and_decreasing(p in valid_params(), t in 0usize..100_000) {
            prop_assert!(alpha(t + 1, &p) < alpha(t, &p) && alpha(t + 1, &p) > 0.0);
            prop_assert!(noise_scale(t + 1, &p) < noise_scale(t, &p) && noise_scale(t + 1, &p) > 0.0);
        }
    }
}
