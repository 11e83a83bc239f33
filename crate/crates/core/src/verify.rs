//! Cross-checks between the closed-form designer, the LP oracle and the
//! structural properties the closed form relies on, for every test period.

use serde::Serialize;

use crate::designer::{self, InterventionRule};
use crate::error::Result;
use crate::model::{self, SystemParams};
use crate::oracle::{self, OracleSolution};
use crate::sweep;

const LEVEL_TOL: f64 = 1e-9;
const OBJECTIVE_TOL: f64 = 1e-12;
const GAP_TOL: f64 = 1e-9;
const SHAPE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Largest violation observed, in the check's own units.
    pub worst_residual: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub checks: Vec<CheckResult>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Test hook: shifts the threshold level of every optimal rule before the
/// checks run, emulating a faulty designer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultInjection {
    pub level_shift: f64,
}

impl FaultInjection {
    fn apply(&self, rule: &InterventionRule, kbar: usize) -> InterventionRule {
        let mut levels = rule.levels().to_vec();
        let v = levels[kbar];
        levels[kbar] = if v + self.level_shift <= 1.0 {
            v + self.level_shift
        } else {
            (v - self.level_shift).max(0.0)
        };
        InterventionRule::new(rule.test_period(), levels).expect("shifted level stays in [0, 1]")
    }
}

struct Check {
    name: &'static str,
    tolerance: f64,
    worst: f64,
    failed: bool,
}

impl Check {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            tolerance,
            worst: 0.0,
            failed: false,
        }
    }

    /// Records a residual that must not exceed the tolerance.
    fn bound(&mut self, residual: f64) {
        self.worst = self.worst.max(residual);
        if residual.is_nan() || residual > self.tolerance {
            self.failed = true;
        }
    }

    /// Records a boolean outcome; failures count as a residual of one.
    fn require(&mut self, ok: bool) {
        if !ok {
            self.worst += 1.0;
            self.failed = true;
        }
    }

    fn finish(self) -> CheckResult {
        CheckResult {
            name: self.name,
            passed: !self.failed,
            worst_residual: self.worst,
            tolerance: self.tolerance,
        }
    }
}

pub fn verify(params: &SystemParams, fault: Option<FaultInjection>) -> Result<VerificationReport> {
    let result = sweep::sweep(params)?;
    let th = model::throughputs(params);
    let n = params.n_users() as f64;

    let mut feasibility = Check::new("feasibility_agrees_with_oracle", 0.0);
    let mut levels = Check::new("levels_match_oracle", LEVEL_TOL);
    let mut objective = Check::new("objective_matches_oracle", OBJECTIVE_TOL);
    let mut certified = Check::new("dual_certificate", 0.0);
    let mut gap = Check::new("incentive_constraint_binds", GAP_TOL);
    let mut shape = Check::new("threshold_shape_and_kbar_le_k0", 0.0);
    let mut throughput = Check::new("throughput_from_oracle_objective", OBJECTIVE_TOL);
    let mut kbar_monotone = Check::new("kbar_non_decreasing_in_t", 0.0);
    let mut lr_in_k = Check::new("likelihood_ratio_decreasing_in_k", 0.0);
    let mut lr_in_t = Check::new("likelihood_ratio_increasing_in_t", 0.0);

    let mut last_kbar: Option<usize> = None;
    for row in &result.rows {
        let t = row.test_period;
        if t == params.horizon() {
            feasibility.require(!row.feasible);
            continue;
        }
        let instance = oracle::build_instance(params, t)?;
        let greedy = oracle::solve_greedy(&instance);
        feasibility.require(greedy.feasible == row.feasible);

        let (Some(rule), Some(kbar)) = (&row.rule, row.threshold_kbar) else {
            continue;
        };
        let rule = match fault {
            Some(f) => f.apply(rule, kbar),
            None => rule.clone(),
        };

        let diff = rule
            .levels()
            .iter()
            .zip(&greedy.levels)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        levels.bound(diff);

        let as_solution = OracleSolution::from_rule(&instance, &rule)?;
        objective.bound((as_solution.objective - greedy.objective).abs());
        certified.require(oracle::certify(&instance, &as_solution));
        gap.bound(designer::constraint_gap(params, &rule)?.abs());

        shape.require(designer::has_threshold_shape(rule.levels(), SHAPE_TOL));
        shape.require(kbar <= row.cutoff_k0);

        let weight = params.intervention_weight(t);
        let from_oracle = n * (1.0 - weight * greedy.objective) * th.coop;
        throughput.bound((from_oracle - row.optimal_throughput).abs());

        if let Some(prev) = last_kbar {
            kbar_monotone.bound(prev.saturating_sub(kbar) as f64);
        }
        last_kbar = Some(kbar);
    }

    for t in 1..=params.horizon() {
        for k in 0..t {
            let step = designer::ln_likelihood_ratio(params, k + 1, t)?
                - designer::ln_likelihood_ratio(params, k, t)?;
            lr_in_k.require(step < 0.0);
        }
        if t < params.horizon() {
            for k in 0..=t {
                let step = designer::ln_likelihood_ratio(params, k, t + 1)?
                    - designer::ln_likelihood_ratio(params, k, t)?;
                lr_in_t.require(step > 0.0);
            }
        }
    }

    Ok(VerificationReport {
        checks: [
            feasibility,
            levels,
            objective,
            certified,
            gap,
            shape,
            throughput,
            kbar_monotone,
            lr_in_k,
            lr_in_t,
        ]
        .into_iter()
        .map(Check::finish)
        .collect(),
    })
}
