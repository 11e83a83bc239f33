//! Closed-form optimal intervention rule for a fixed test period.
//!
//! With `lambda(k;t)` and `mu(k;t)` the idle-count distributions under full
//! cooperation and under a single deviation, the net deterrence of punishing
//! signal `k` is `tau_d mu(k;t) - tau_c lambda(k;t)`. It is positive exactly
//! for `k <= k0`, because the likelihood ratio `mu/lambda` falls in `k`. The
//! cheapest rule that still deters deviation fills signals `0, 1, ...` with
//! full intervention until the incentive constraint binds, leaving a single
//! fractional level at the threshold `kbar`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, Scenario, SystemParams, Throughputs};

/// Margin applied to the strict inequality defining `k0`, in log-likelihood
/// units (a relative margin on the net coefficient).
const CUTOFF_TOL: f64 = 1e-12;

/// A constraint shortfall this small at the threshold index is treated as
/// already met by the preceding signals.
const TIE_TOL: f64 = 1e-12;

/// Largest excursion of the fractional level outside `[0, 1]` attributed to
/// rounding. Anything larger is reported as a consistency failure.
const LEVEL_BAND: f64 = 1e-9;

/// Device transmission probability for each idle count `0..=test_period`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRule")]
pub struct InterventionRule {
    test_period: usize,
    levels: Vec<f64>,
}

#[derive(Deserialize)]
struct RawRule {
    test_period: usize,
    levels: Vec<f64>,
}

impl TryFrom<RawRule> for InterventionRule {
    type Error = Error;

    fn try_from(raw: RawRule) -> Result<Self> {
        InterventionRule::new(raw.test_period, raw.levels)
    }
}

impl InterventionRule {
    pub fn new(test_period: usize, levels: Vec<f64>) -> Result<Self> {
        if test_period == 0 {
            return Err(Error::TestPeriodOutOfRange {
                t: 0,
                horizon: usize::MAX,
            });
        }
        if levels.len() != test_period + 1 {
            return Err(Error::RuleLengthMismatch {
                len: levels.len(),
                t: test_period,
            });
        }
        if let Some((index, &value)) = levels
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::InvalidLevel { index, value });
        }
        Ok(Self {
            test_period,
            levels,
        })
    }

    pub fn constant(test_period: usize, level: f64) -> Result<Self> {
        Self::new(test_period, vec![level; test_period + 1])
    }

    pub fn test_period(&self) -> usize {
        self.test_period
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn into_levels(self) -> Vec<f64> {
        self.levels
    }

    /// `sum_k probs[k] * f(k)`: the device's expected transmission probability.
    pub fn expected_level(&self, probs: &[f64]) -> f64 {
        probs.iter().zip(&self.levels).map(|(p, f)| p * f).sum()
    }
}

/// Result of solving the design problem at one test period.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignOutcome {
    pub test_period: usize,
    pub feasible: bool,
    /// Optimal rule; absent when no rule satisfies the incentive constraint.
    pub rule: Option<InterventionRule>,
    pub threshold_kbar: Option<usize>,
    pub cutoff_k0: usize,
    /// Total throughput of the optimal rule, or the Nash throughput when infeasible.
    pub optimal_throughput: f64,
    /// Incentive-constraint LHS minus RHS at the optimal rule.
    pub constraint_gap: Option<f64>,
    /// Incentive-constraint LHS minus RHS when every signal up to `k0` is punished.
    pub feasibility_slack: f64,
}

/// Verdict of the feasibility test for one test period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Feasibility {
    pub feasible: bool,
    pub slack: f64,
    pub cutoff_k0: usize,
}

/// Idle-count distributions and their net deterrence coefficients.
#[derive(Debug, Clone)]
pub(crate) struct SignalTerms {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub net: Vec<f64>,
    pub throughputs: Throughputs,
}

impl SignalTerms {
    pub(crate) fn new(params: &SystemParams, t: usize) -> Result<Self> {
        let lambda = model::signal_pmf(params, t, Scenario::AllCooperate)?.probs;
        let mu = model::signal_pmf(params, t, Scenario::OneDefects)?.probs;
        let th = model::throughputs(params);
        let net = lambda
            .iter()
            .zip(&mu)
            .map(|(l, m)| th.defect * m - th.coop * l)
            .collect();
        Ok(Self {
            lambda,
            mu,
            net,
            throughputs: th,
        })
    }
}

fn ln_ratio_factors(params: &SystemParams) -> (f64, f64) {
    let per_idle = (-params.p_high()).ln_1p() - (-params.p_low()).ln_1p();
    let q_coop = params.idle_probability(Scenario::AllCooperate);
    let q_defect = params.idle_probability(Scenario::OneDefects);
    let per_busy = (-q_defect).ln_1p() - (-q_coop).ln_1p();
    (per_idle, per_busy)
}

/// `ln L(k;t)`; stays finite where `L` itself would under- or overflow.
pub fn ln_likelihood_ratio(params: &SystemParams, k: usize, t: usize) -> Result<f64> {
    if k > t {
        return Err(Error::SignalOutOfRange { k, t });
    }
    let (per_idle, per_busy) = ln_ratio_factors(params);
    Ok(k as f64 * per_idle + (t - k) as f64 * per_busy)
}

/// `L(k;t) = mu(k;t) / lambda(k;t)`, the evidence of a deviation carried by
/// observing `k` idle slots out of `t`.
pub fn likelihood_ratio(params: &SystemParams, k: usize, t: usize) -> Result<f64> {
    if k > t {
        return Err(Error::SignalOutOfRange { k, t });
    }
    let idle = (1.0 - params.p_high()) / (1.0 - params.p_low());
    let q_coop = params.idle_probability(Scenario::AllCooperate);
    let q_defect = params.idle_probability(Scenario::OneDefects);
    let busy = (1.0 - q_defect) / (1.0 - q_coop);
    Ok(idle.powi(k as i32) * busy.powi((t - k) as i32))
}

/// Largest idle count whose punishment still deters deviation, i.e. the
/// largest `k` with `L(k;t) > p_l / p_h`. Never below 0 since `L(0;t) > 1`.
pub fn cutoff_k0(params: &SystemParams, t: usize) -> usize {
    let threshold = (params.p_low() / params.p_high()).ln();
    let (per_idle, per_busy) = ln_ratio_factors(params);
    (0..=t)
        .filter(|&k| k as f64 * per_idle + (t - k) as f64 * per_busy - threshold > CUTOFF_TOL)
        .max()
        .unwrap_or(0)
}

/// Whether any rule can satisfy the incentive constraint at test period `t`.
pub fn check_feasibility(params: &SystemParams, t: usize) -> Result<Feasibility> {
    params.check_test_period(t)?;
    let k0 = cutoff_k0(params, t);
    let gain = model::throughputs(params).deviation_gain();
    if t == params.horizon() {
        return Ok(Feasibility {
            feasible: false,
            slack: -gain,
            cutoff_k0: k0,
        });
    }
    let terms = SignalTerms::new(params, t)?;
    Ok(feasibility_from_terms(params, t, &terms, k0))
}

fn feasibility_from_terms(
    params: &SystemParams,
    t: usize,
    terms: &SignalTerms,
    k0: usize,
) -> Feasibility {
    let deterrence: f64 = terms.net[..=k0].iter().sum();
    let slack = params.intervention_weight(t) * deterrence - terms.throughputs.deviation_gain();
    Feasibility {
        feasible: slack >= 0.0,
        slack,
        cutoff_k0: k0,
    }
}

/// Optimal rule for test period `t`.
pub fn design_rule(params: &SystemParams, t: usize) -> Result<DesignOutcome> {
    params.check_test_period(t)?;
    let feasibility = check_feasibility(params, t)?;
    let infeasible = || DesignOutcome {
        test_period: t,
        feasible: false,
        rule: None,
        threshold_kbar: None,
        cutoff_k0: feasibility.cutoff_k0,
        optimal_throughput: params.nash_throughput(),
        constraint_gap: None,
        feasibility_slack: feasibility.slack,
    };
    if !feasibility.feasible {
        return Ok(infeasible());
    }

    let terms = SignalTerms::new(params, t)?;
    let k0 = feasibility.cutoff_k0;
    let weight = params.intervention_weight(t);
    let gain = terms.throughputs.deviation_gain();
    let horizon = params.horizon() as f64;
    let target = horizon / (horizon - t as f64) * gain;

    let mut before = 0.0;
    let mut kbar = None;
    for k in 0..=k0 {
        if weight * (before + terms.net[k]) >= gain {
            kbar = Some(k);
            break;
        }
        before += terms.net[k];
    }
    let Some(mut kbar) = kbar else {
        return Err(Error::Inconsistent(format!(
            "feasible at t={t} but the constraint never binds up to k0={k0}"
        )));
    };

    let mut level = (target - before) / terms.net[kbar];
    if target - before <= TIE_TOL && kbar > 0 {
        kbar -= 1;
        level = 1.0;
    }
    if !(-LEVEL_BAND..=1.0 + LEVEL_BAND).contains(&level) {
        return Err(Error::Inconsistent(format!(
            "threshold level {level} at k={kbar}, t={t} is outside [0, 1]"
        )));
    }
    let level = level.clamp(0.0, 1.0);

    let mut levels = vec![0.0; t + 1];
    levels[..kbar].fill(1.0);
    levels[kbar] = level;
    let rule = InterventionRule::new(t, levels)?;

    let gap = gap_from_terms(params, &terms, &rule);
    let optimal_throughput = total_throughput(params, &terms, &rule);
    Ok(DesignOutcome {
        test_period: t,
        feasible: true,
        rule: Some(rule),
        threshold_kbar: Some(kbar),
        cutoff_k0: k0,
        optimal_throughput,
        constraint_gap: Some(gap),
        feasibility_slack: feasibility.slack,
    })
}

fn gap_from_terms(params: &SystemParams, terms: &SignalTerms, rule: &InterventionRule) -> f64 {
    params.intervention_weight(rule.test_period()) * rule.expected_level(&terms.net)
        - terms.throughputs.deviation_gain()
}

fn total_throughput(params: &SystemParams, terms: &SignalTerms, rule: &InterventionRule) -> f64 {
    let weight = params.intervention_weight(rule.test_period());
    params.n_users() as f64
        * (1.0 - weight * rule.expected_level(&terms.lambda))
        * terms.throughputs.coop
}

/// Incentive-constraint LHS minus RHS,
/// `(T-t)/T * sum_k [tau_d mu(k) - tau_c lambda(k)] f(k) - (tau_d - tau_c)`.
pub fn constraint_gap(params: &SystemParams, rule: &InterventionRule) -> Result<f64> {
    let terms = SignalTerms::new(params, rule.test_period())?;
    Ok(gap_from_terms(params, &terms, rule))
}

/// Total throughput when every user cooperates and the device follows `rule`.
pub fn cooperative_throughput(params: &SystemParams, rule: &InterventionRule) -> Result<f64> {
    let terms = SignalTerms::new(params, rule.test_period())?;
    Ok(total_throughput(params, &terms, rule))
}

/// `l(f) = sum mu f / sum lambda f`; `None` for the all-zero rule.
pub fn rule_likelihood_ratio(
    params: &SystemParams,
    rule: &InterventionRule,
) -> Result<Option<f64>> {
    let terms = SignalTerms::new(params, rule.test_period())?;
    let denom = rule.expected_level(&terms.lambda);
    if denom <= 0.0 {
        return Ok(None);
    }
    Ok(Some(rule.expected_level(&terms.mu) / denom))
}

/// Total throughput of a binding rule expressed through its likelihood
/// ratio: `N [1 - (tau_d - tau_c) / (tau_d l - tau_c)] tau_c`.
pub fn throughput_from_likelihood_ratio(params: &SystemParams, rule_ratio: f64) -> f64 {
    let th = model::throughputs(params);
    params.n_users() as f64
        * (1.0 - th.deviation_gain() / (th.defect * rule_ratio - th.coop))
        * th.coop
}

/// Ones, then at most one entry strictly inside `(0, 1)`, then zeros.
pub fn has_threshold_shape(levels: &[f64], tol: f64) -> bool {
    let ones = levels.iter().take_while(|&&v| v >= 1.0 - tol).count();
    let rest = &levels[ones..];
    match rest.split_first() {
        None => true,
        Some((_, tail)) => tail.iter().all(|&v| v <= tol),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> SystemParams {
        SystemParams::new(5, 0.2, 0.8, 100).unwrap()
    }

    #[test]
    fn likelihood_ratio_examples() {
        let p = example();
        for t in [1, 5, 40] {
            assert!(likelihood_ratio(&p, 0, t).unwrap() > 1.0);
            assert!(likelihood_ratio(&p, t, t).unwrap() < 1.0);
        }
        let l = likelihood_ratio(&p, 0, 1).unwrap();
        assert!((l - 0.91808 / 0.67232).abs() < 1e-12);
        let lam = model::signal_pmf(&p, 1, Scenario::AllCooperate).unwrap();
        let mu = model::signal_pmf(&p, 1, Scenario::OneDefects).unwrap();
        assert!((l - mu.probs[0] / lam.probs[0]).abs() < 1e-12);
        assert!(matches!(
            likelihood_ratio(&p, 3, 2),
            Err(Error::SignalOutOfRange { k: 3, t: 2 })
        ));
    }

    #[test]
    fn ln_ratio_matches_ratio() {
        let p = example();
        for t in 1..30 {
            for k in 0..=t {
                let a = likelihood_ratio(&p, k, t).unwrap().ln();
                let b = ln_likelihood_ratio(&p, k, t).unwrap();
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cutoff_matches_direct_sign_test() {
        let p = example();
        for t in 1..=60 {
            let terms = SignalTerms::new(&p, t).unwrap();
            let direct = (0..=t).filter(|&k| terms.net[k] > 0.0).max().unwrap();
            assert_eq!(cutoff_k0(&p, t), direct, "t={t}");
        }
        assert!(cutoff_k0(&p, 18) >= 3);
    }

    #[test]
    fn feasibility_window_edges() {
        let p = example();
        assert!(!check_feasibility(&p, 1).unwrap().feasible);
        assert!(check_feasibility(&p, 2).unwrap().feasible);
        assert!(check_feasibility(&p, 18).unwrap().feasible);
        assert!(check_feasibility(&p, 20).unwrap().feasible);
        assert!(!check_feasibility(&p, 21).unwrap().feasible);
        let at_horizon = check_feasibility(&p, 100).unwrap();
        assert!(!at_horizon.feasible);
        assert!((at_horizon.slack + 0.24576).abs() < 1e-15);
    }

    #[test]
    fn design_examples() {
        let p = example();
        let out = design_rule(&p, 18).unwrap();
        assert!(out.feasible);
        assert_eq!(out.threshold_kbar, Some(3));
        assert!((out.optimal_throughput - 0.37).abs() < 0.005);
        assert_eq!(design_rule(&p, 2).unwrap().threshold_kbar, Some(1));

        let out = design_rule(&p, 1).unwrap();
        assert!(!out.feasible);
        assert!(out.rule.is_none());
        assert!((out.optimal_throughput - 0.0064).abs() < 1e-15);
        assert!(out.feasibility_slack < 0.0);

        assert!(design_rule(&p, 0).is_err());
        assert!(design_rule(&p, 101).is_err());
    }

    #[test]
    fn constraint_gap_examples() {
        let p = example();
        let out = design_rule(&p, 12).unwrap();
        assert!(out.constraint_gap.unwrap().abs() <= 1e-9);
        let rule = out.rule.unwrap();
        assert!(constraint_gap(&p, &rule).unwrap().abs() <= 1e-9);

        let zero = InterventionRule::constant(12, 0.0).unwrap();
        assert!((constraint_gap(&p, &zero).unwrap() + 0.24576).abs() < 1e-15);

        let k0 = cutoff_k0(&p, 12);
        let mut levels = vec![0.0; 13];
        levels[..=k0].fill(1.0);
        let full = InterventionRule::new(12, levels).unwrap();
        let slack = check_feasibility(&p, 12).unwrap().slack;
        assert!(slack >= 0.0);
        assert!((constraint_gap(&p, &full).unwrap() - slack).abs() < 1e-15);
    }

    #[test]
    fn threshold_shape_detection() {
        assert!(has_threshold_shape(&[1.0, 1.0, 0.3, 0.0], 1e-12));
        assert!(has_threshold_shape(&[0.3, 0.0, 0.0], 1e-12));
        assert!(has_threshold_shape(&[1.0, 1.0], 1e-12));
        assert!(!has_threshold_shape(&[1.0, 0.3, 0.3], 1e-12));
        assert!(!has_threshold_shape(&[0.0, 1.0], 1e-12));
    }

    #[test]
    fn rule_validation() {
        assert!(matches!(
            InterventionRule::new(3, vec![0.0; 3]),
            Err(Error::RuleLengthMismatch { len: 3, t: 3 })
        ));
        assert!(matches!(
            InterventionRule::new(1, vec![0.0, 1.5]),
            Err(Error::InvalidLevel { index: 1, .. })
        ));
        assert!(InterventionRule::new(0, vec![0.0]).is_err());
    }

    #[test]
    fn likelihood_ratio_throughput_identity() {
        let p = example();
        for t in 2..=20 {
            let out = design_rule(&p, t).unwrap();
            let l = rule_likelihood_ratio(&p, out.rule.as_ref().unwrap())
                .unwrap()
                .unwrap();
            let alt = throughput_from_likelihood_ratio(&p, l);
            assert!((alt - out.optimal_throughput).abs() < 1e-9, "t={t}");
        }
    }
}
