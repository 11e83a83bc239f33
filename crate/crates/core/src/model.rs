//! Game primitives: users choosing between a low and a high transmission
//! probability on a collision channel, the idle-signal statistics seen by the
//! intervention device, and the resulting per-user payoffs.

use serde::Serialize;

use crate::designer::InterventionRule;
use crate::error::{Error, Result};

/// Above this many trials the binomial pmf is evaluated in log space.
const LINEAR_PMF_MAX_TRIALS: usize = 1000;

/// Smallest starting term `(1-q)^t` for which the linear recurrence is used.
/// Below it the leading terms have lost (or are about to lose) precision.
const LINEAR_PMF_MIN_START: f64 = 1e-280;

/// Primitives of one period: `n_users` saturated users, each transmitting
/// with `p_low` (cooperate) or `p_high` (defect) in every one of `horizon`
/// slots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SystemParams {
    n_users: usize,
    p_low: f64,
    p_high: f64,
    horizon: usize,
}

impl SystemParams {
    pub fn new(n_users: usize, p_low: f64, p_high: f64, horizon: usize) -> Result<Self> {
        if n_users < 2 {
            return Err(Error::InvalidParams(format!(
                "n_users must be at least 2, got {n_users}"
            )));
        }
        if !(p_low > 0.0 && p_low < p_high && p_high < 1.0) {
            return Err(Error::InvalidParams(format!(
                "need 0 < p_low < p_high < 1, got p_low={p_low}, p_high={p_high}"
            )));
        }
        if horizon < 1 {
            return Err(Error::InvalidParams("horizon must be at least 1".into()));
        }
        Ok(Self {
            n_users,
            p_low,
            p_high,
            horizon,
        })
    }

    /// Parameters with the throughput-maximizing cooperative action `p_low = 1/N`.
    pub fn canonical(n_users: usize, p_high: f64, horizon: usize) -> Result<Self> {
        Self::new(n_users, 1.0 / n_users as f64, p_high, horizon)
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn p_low(&self) -> f64 {
        self.p_low
    }

    pub fn p_high(&self) -> f64 {
        self.p_high
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Whether `p_low` equals `1/N`, the symmetric throughput optimum.
    pub fn is_canonical(&self, tol: f64) -> bool {
        (self.p_low - 1.0 / self.n_users as f64).abs() <= tol
    }

    /// Fraction `(T - t)/T` of the period in which the device can intervene.
    pub fn intervention_weight(&self, t: usize) -> f64 {
        (self.horizon - t.min(self.horizon)) as f64 / self.horizon as f64
    }

    pub fn check_test_period(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.horizon {
            return Err(Error::TestPeriodOutOfRange {
                t,
                horizon: self.horizon,
            });
        }
        Ok(())
    }

    /// Probability of an idle slot under the given scenario.
    pub fn idle_probability(&self, scenario: Scenario) -> f64 {
        let others = (1.0 - self.p_low).powi(self.n_users as i32 - 1);
        match scenario {
            Scenario::AllCooperate => others * (1.0 - self.p_low),
            Scenario::OneDefects => others * (1.0 - self.p_high),
        }
    }

    /// Total throughput of the unique Nash equilibrium, everyone at `p_high`.
    pub fn nash_throughput(&self) -> f64 {
        self.n_users as f64 * self.p_high * (1.0 - self.p_high).powi(self.n_users as i32 - 1)
    }
}

/// The two action profiles the designer reasons about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Every user transmits with `p_low`.
    AllCooperate,
    /// One user transmits with `p_high`, the rest with `p_low`.
    OneDefects,
}

/// Per-user transmission probabilities for one period.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionProfile(Vec<f64>);

impl ActionProfile {
    pub fn new(actions: Vec<f64>) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::InvalidProfile("profile is empty".into()));
        }
        if let Some((i, a)) = actions
            .iter()
            .enumerate()
            .find(|(_, a)| !(0.0..=1.0).contains(*a))
        {
            return Err(Error::InvalidProfile(format!(
                "action {a} of user {i} is not a probability"
            )));
        }
        Ok(Self(actions))
    }

    pub fn all_cooperate(params: &SystemParams) -> Self {
        Self(vec![params.p_low; params.n_users])
    }

    /// `deviant` plays `p_high`, everyone else `p_low`.
    pub fn one_defects(params: &SystemParams, deviant: usize) -> Result<Self> {
        if deviant >= params.n_users {
            return Err(Error::UserOutOfRange {
                user: deviant,
                n_users: params.n_users,
            });
        }
        let mut actions = vec![params.p_low; params.n_users];
        actions[deviant] = params.p_high;
        Ok(Self(actions))
    }

    /// Canonical profile for a scenario; the deviant, if any, is user 0.
    pub fn for_scenario(params: &SystemParams, scenario: Scenario) -> Self {
        match scenario {
            Scenario::AllCooperate => Self::all_cooperate(params),
            Scenario::OneDefects => {
                Self::one_defects(params, 0).expect("n_users >= 2 by construction")
            }
        }
    }

    pub fn actions(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn check_against(&self, params: &SystemParams) -> Result<()> {
        if self.0.len() != params.n_users {
            return Err(Error::InvalidProfile(format!(
                "profile has {} entries for {} users",
                self.0.len(),
                params.n_users
            )));
        }
        Ok(())
    }

    fn check_user(&self, user: usize) -> Result<()> {
        if user >= self.0.len() {
            return Err(Error::UserOutOfRange {
                user,
                n_users: self.0.len(),
            });
        }
        Ok(())
    }

    /// Probability that `user` transmits and nobody else does:
    /// `a_i * prod_{j != i} (1 - a_j)`.
    pub fn solo_success_probability(&self, user: usize) -> Result<f64> {
        self.check_user(user)?;
        let others = sorted_product(
            self.0
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != user)
                .map(|(_, a)| 1.0 - a),
        );
        Ok(self.0[user] * others)
    }
}

/// Product of the factors in ascending order, so that the result does not
/// depend on the order the factors arrive in.
fn sorted_product(factors: impl Iterator<Item = f64>) -> f64 {
    let mut factors: Vec<f64> = factors.collect();
    factors.sort_by(f64::total_cmp);
    factors.into_iter().product()
}

/// Probability that a slot is idle, `prod_i (1 - a_i)`.
pub fn idle_probability(profile: &ActionProfile) -> f64 {
    sorted_product(profile.0.iter().map(|a| 1.0 - a))
}

/// Per-user success rates without intervention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Throughputs {
    /// Each user's rate when everyone plays `p_low`.
    pub coop: f64,
    /// The deviant's rate when it alone switches to `p_high`.
    pub defect: f64,
}

impl Throughputs {
    /// Gain from a unilateral deviation, `defect - coop`.
    pub fn deviation_gain(&self) -> f64 {
        self.defect - self.coop
    }
}

pub fn throughputs(params: &SystemParams) -> Throughputs {
    let others_silent = (1.0 - params.p_low).powi(params.n_users as i32 - 1);
    Throughputs {
        coop: params.p_low * others_silent,
        defect: params.p_high * others_silent,
    }
}

/// Distribution of the number of idle slots among `test_period` sensed slots.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignalPmf {
    pub test_period: usize,
    /// `probs[k]` is the probability of exactly `k` idle slots.
    pub probs: Vec<f64>,
}

pub fn signal_pmf(params: &SystemParams, t: usize, scenario: Scenario) -> Result<SignalPmf> {
    params.check_test_period(t)?;
    Ok(SignalPmf {
        test_period: t,
        probs: binomial_pmf(t, params.idle_probability(scenario)),
    })
}

/// Binomial(trials, p) probabilities for 0..=trials successes.
///
/// Uses the ratio recurrence `P(k+1) = P(k) (n-k)/(k+1) p/(1-p)` when the
/// starting term `(1-p)^n` is representable, and log-factorials otherwise.
pub fn binomial_pmf(trials: usize, p: f64) -> Vec<f64> {
    let mut probs = vec![0.0; trials + 1];
    if p <= 0.0 {
        probs[0] = 1.0;
        return probs;
    }
    if p >= 1.0 {
        probs[trials] = 1.0;
        return probs;
    }

    let start = if trials <= i32::MAX as usize {
        (1.0 - p).powi(trials as i32)
    } else {
        (1.0 - p).powf(trials as f64)
    };

    if trials <= LINEAR_PMF_MAX_TRIALS && start >= LINEAR_PMF_MIN_START {
        let odds = p / (1.0 - p);
        probs[0] = start;
        for k in 0..trials {
            probs[k + 1] = probs[k] * ((trials - k) as f64 / (k + 1) as f64) * odds;
        }
    } else {
        let ln_fact = ln_factorials(trials);
        let ln_p = p.ln();
        let ln_q = (-p).ln_1p();
        for (k, prob) in probs.iter_mut().enumerate() {
            let ln_choose = ln_fact[trials] - ln_fact[k] - ln_fact[trials - k];
            *prob = (ln_choose + k as f64 * ln_p + (trials - k) as f64 * ln_q).exp();
        }
    }
    probs
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(acc);
    for i in 1..=n {
        acc += (i as f64).ln();
        out.push(acc);
    }
    out
}

/// Payoff of `user` when the device transmits with `device_action` in the
/// slots after the test period:
/// `(1 - (T-t)/T * a_0) * a_i * prod_{j != i} (1 - a_j)`.
pub fn stage_payoff(
    params: &SystemParams,
    device_action: f64,
    profile: &ActionProfile,
    user: usize,
    t: usize,
) -> Result<f64> {
    params.check_test_period(t)?;
    if !(0.0..=1.0).contains(&device_action) {
        return Err(Error::InvalidParams(format!(
            "device action {device_action} is not a probability"
        )));
    }
    profile.check_against(params)?;
    let base = profile.solo_success_probability(user)?;
    Ok((1.0 - params.intervention_weight(t) * device_action) * base)
}

/// Payoff of `user` averaged over the idle-count distribution induced by
/// `profile`, with the device following `rule`.
pub fn expected_payoff(
    params: &SystemParams,
    rule: &InterventionRule,
    profile: &ActionProfile,
    user: usize,
) -> Result<f64> {
    let t = rule.test_period();
    params.check_test_period(t)?;
    if rule.levels().len() != t + 1 {
        return Err(Error::RuleLengthMismatch {
            len: rule.levels().len(),
            t,
        });
    }
    profile.check_against(params)?;
    let base = profile.solo_success_probability(user)?;
    let pmf = binomial_pmf(t, idle_probability(profile));
    let expected_level: f64 = pmf.iter().zip(rule.levels()).map(|(p, f)| p * f).sum();
    Ok((1.0 - params.intervention_weight(t) * expected_level) * base)
}
