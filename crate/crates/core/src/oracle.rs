//! Independent solver for the intervention LP
//!
//! ```text
//! min  sum_k c_k f_k
//! s.t. sum_k a_k f_k >= b,   0 <= f_k <= 1
//! ```
//!
//! with `c = lambda(.;t)`, `a = (T-t)/T (tau_d mu - tau_c lambda)` and
//! `b = tau_d - tau_c`. A single covering constraint over a box is a
//! fractional knapsack: fill variables by decreasing `a_k / c_k` until the
//! constraint binds. Nothing here assumes the fill order follows `k`, so the
//! threshold structure of the closed-form rule is tested rather than reused.
//! Optimality is certified through the dual multiplier of the constraint.

use std::cmp::Ordering;

use serde::Serialize;

use crate::designer::InterventionRule;
use crate::error::{Error, Result};
use crate::model::{self, Scenario, SystemParams};

/// Ratios closer than this (relative) are considered tied and ordered by index.
const RATIO_TIE_TOL: f64 = 1e-12;
/// Levels within this distance of 0 or 1 count as integral.
const INTEGRAL_TOL: f64 = 1e-12;
/// Reduced-cost and slackness tolerance used by [`certify`].
const DUAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpInstance {
    objective_coeffs: Vec<f64>,
    constraint_coeffs: Vec<f64>,
    rhs: f64,
}

impl LpInstance {
    pub fn new(objective_coeffs: Vec<f64>, constraint_coeffs: Vec<f64>, rhs: f64) -> Result<Self> {
        if objective_coeffs.len() != constraint_coeffs.len() {
            return Err(Error::InvalidInstance(format!(
                "{} objective coefficients but {} constraint coefficients",
                objective_coeffs.len(),
                constraint_coeffs.len()
            )));
        }
        if objective_coeffs.is_empty() {
            return Err(Error::InvalidInstance("no variables".into()));
        }
        if let Some((k, c)) = objective_coeffs
            .iter()
            .enumerate()
            .find(|(_, c)| !(c.is_finite() && **c > 0.0))
        {
            return Err(Error::InvalidInstance(format!(
                "objective coefficient {c} at {k} is not positive"
            )));
        }
        if constraint_coeffs.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidInstance(
                "non-finite constraint coefficient".into(),
            ));
        }
        if !(rhs.is_finite() && rhs > 0.0) {
            return Err(Error::InvalidInstance(format!(
                "right-hand side {rhs} must be positive"
            )));
        }
        Ok(Self {
            objective_coeffs,
            constraint_coeffs,
            rhs,
        })
    }

    pub fn objective_coeffs(&self) -> &[f64] {
        &self.objective_coeffs
    }

    pub fn constraint_coeffs(&self) -> &[f64] {
        &self.constraint_coeffs
    }

    pub fn rhs(&self) -> f64 {
        self.rhs
    }

    pub fn len(&self) -> usize {
        self.objective_coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objective_coeffs.is_empty()
    }

    pub fn objective(&self, levels: &[f64]) -> f64 {
        dot(&self.objective_coeffs, levels)
    }

    /// Constraint LHS minus RHS.
    pub fn gap(&self, levels: &[f64]) -> f64 {
        dot(&self.constraint_coeffs, levels) - self.rhs
    }

    /// LHS with every positive-coefficient variable at 1.
    pub fn capacity(&self) -> f64 {
        self.constraint_coeffs.iter().filter(|a| **a > 0.0).sum()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSolution {
    pub levels: Vec<f64>,
    /// Expected device transmission probability, `sum_k c_k f_k`.
    pub objective: f64,
    pub feasible: bool,
    /// Dual multiplier of the incentive constraint; absent when infeasible.
    pub certificate: Option<f64>,
    /// Indices in the order the greedy pass considered them.
    pub fill_order: Vec<usize>,
}

impl OracleSolution {
    /// Wraps an externally computed rule so it can be certified.
    pub fn from_rule(instance: &LpInstance, rule: &InterventionRule) -> Result<Self> {
        let levels = rule.levels().to_vec();
        if levels.len() != instance.len() {
            return Err(Error::RuleLengthMismatch {
                len: levels.len(),
                t: instance.len() - 1,
            });
        }
        let feasible = instance.gap(&levels) >= -DUAL_TOL;
        let certificate = if feasible {
            dual_multiplier(instance, &levels)
        } else {
            None
        };
        Ok(Self {
            objective: instance.objective(&levels),
            levels,
            feasible,
            certificate,
            fill_order: Vec::new(),
        })
    }
}

/// LP data for test period `t`, built directly from the signal
/// distributions and throughputs.
pub fn build_instance(params: &SystemParams, t: usize) -> Result<LpInstance> {
    params.check_test_period(t)?;
    if t == params.horizon() {
        return Err(Error::InvalidInstance(
            "test period equals the horizon; no slots remain for intervention".into(),
        ));
    }
    let lambda = model::signal_pmf(params, t, Scenario::AllCooperate)?.probs;
    let mu = model::signal_pmf(params, t, Scenario::OneDefects)?.probs;
    let th = model::throughputs(params);
    let weight = params.intervention_weight(t);
    let constraint = lambda
        .iter()
        .zip(&mu)
        .map(|(l, m)| weight * (th.defect * m - th.coop * l))
        .collect();
    LpInstance::new(lambda, constraint, th.defect - th.coop)
}

fn ratio_order(instance: &LpInstance) -> Vec<usize> {
    let ratio = |k: usize| instance.constraint_coeffs[k] / instance.objective_coeffs[k];
    let mut order: Vec<usize> = (0..instance.len())
        .filter(|&k| instance.constraint_coeffs[k] > 0.0)
        .collect();
    order.sort_by(|&i, &j| ratio(j).total_cmp(&ratio(i)).then(i.cmp(&j)));

    // Near-ties go to the smaller index. Adjacent swaps keep the comparison
    // well defined even though "within tolerance" is not transitive.
    let tied = |i: usize, j: usize| {
        let (a, b) = (ratio(i), ratio(j));
        (a - b).abs() <= RATIO_TIE_TOL * a.abs().max(b.abs())
    };
    let mut changed = true;
    while changed {
        changed = false;
        for w in 0..order.len().saturating_sub(1) {
            let (i, j) = (order[w], order[w + 1]);
            if tied(i, j) && j.cmp(&i) == Ordering::Less {
                order.swap(w, w + 1);
                changed = true;
            }
        }
    }
    order
}

/// Greedy fractional-knapsack solution of the LP.
pub fn solve_greedy(instance: &LpInstance) -> OracleSolution {
    let order = ratio_order(instance);
    let mut levels = vec![0.0; instance.len()];

    let capacity: f64 = order.iter().map(|&k| instance.constraint_coeffs[k]).sum();
    if capacity < instance.rhs {
        for &k in &order {
            levels[k] = 1.0;
        }
        return OracleSolution {
            objective: instance.objective(&levels),
            levels,
            feasible: false,
            certificate: None,
            fill_order: order,
        };
    }

    let mut remaining = instance.rhs;
    for &k in &order {
        let a = instance.constraint_coeffs[k];
        if a >= remaining {
            levels[k] = remaining / a;
            break;
        }
        levels[k] = 1.0;
        remaining -= a;
    }
    let certificate = dual_multiplier(instance, &levels);
    OracleSolution {
        objective: instance.objective(&levels),
        levels,
        feasible: true,
        certificate,
        fill_order: order,
    }
}

fn is_fractional(v: f64) -> bool {
    v > INTEGRAL_TOL && v < 1.0 - INTEGRAL_TOL
}

/// `y = c_k / a_k` at the first fractional index, or, for an integral
/// solution, the largest `c_k / a_k` over the variables set to one.
fn dual_multiplier(instance: &LpInstance, levels: &[f64]) -> Option<f64> {
    let c = &instance.objective_coeffs;
    let a = &instance.constraint_coeffs;
    if let Some(k) = (0..levels.len()).find(|&k| is_fractional(levels[k])) {
        return (a[k] > 0.0).then(|| c[k] / a[k]);
    }
    (0..levels.len())
        .filter(|&k| levels[k] >= 1.0 - INTEGRAL_TOL && a[k] > 0.0)
        .map(|k| c[k] / a[k])
        .max_by(f64::total_cmp)
}

/// Checks primal feasibility, dual feasibility of the reduced costs and
/// complementary slackness for `solution`.
pub fn certify(instance: &LpInstance, solution: &OracleSolution) -> bool {
    let levels = &solution.levels;
    if !solution.feasible || levels.len() != instance.len() {
        return false;
    }
    if levels
        .iter()
        .any(|v| !(-INTEGRAL_TOL..=1.0 + INTEGRAL_TOL).contains(v))
    {
        return false;
    }
    let gap = instance.gap(levels);
    if gap < -DUAL_TOL {
        return false;
    }
    let Some(y) = dual_multiplier(instance, levels) else {
        return false;
    };
    if y.is_nan() || y < 0.0 {
        return false;
    }
    if y > 0.0 && gap.abs() > DUAL_TOL {
        return false;
    }
    let c = &instance.objective_coeffs;
    let a = &instance.constraint_coeffs;
    levels.iter().enumerate().all(|(k, &v)| {
        let reduced = c[k] - y * a[k];
        if is_fractional(v) {
            reduced.abs() <= DUAL_TOL
        } else if v >= 1.0 - INTEGRAL_TOL {
            reduced <= DUAL_TOL
        } else {
            reduced >= -DUAL_TOL
        }
    })
}
