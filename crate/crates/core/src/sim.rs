//! Slot-level simulation of one period.
//!
//! In every slot each user transmits independently with its action
//! probability. During the first `t` slots the device only senses and counts
//! idle slots; for slots `t+1..=T` it transmits with probability `f(k)` and
//! any of its transmissions destroys a concurrent user packet. A packet
//! succeeds iff its sender is the only transmitter in the slot.
//!
//! Replication `i` draws from ChaCha8 seeded with `seed` and switched to
//! stream `i` (`ChaCha8Rng::seed_from_u64(seed)` then `set_stream(i)`), so
//! each replication is reproducible on its own. Accumulators are exact
//! integer counts, which makes the aggregate independent of how the
//! replications are split across threads.

use rand::distributions::{Bernoulli, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::designer::InterventionRule;
use crate::error::{Error, Result};
use crate::model::{ActionProfile, SystemParams};

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub params: SystemParams,
    pub rule: InterventionRule,
    pub profile: ActionProfile,
    pub replications: u64,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(
        params: SystemParams,
        rule: InterventionRule,
        profile: ActionProfile,
        replications: u64,
        seed: u64,
    ) -> Result<Self> {
        if replications == 0 {
            return Err(Error::InvalidParams(
                "replications must be at least 1".into(),
            ));
        }
        params.check_test_period(rule.test_period())?;
        if profile.len() != params.n_users() {
            return Err(Error::InvalidProfile(format!(
                "profile has {} entries for {} users",
                profile.len(),
                params.n_users()
            )));
        }
        Ok(Self {
            params,
            rule,
            profile,
            replications,
            seed,
        })
    }
}

/// Outcome of a single simulated period.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeriodRecord {
    /// Successful transmissions per user over all `T` slots.
    pub successes: Vec<u32>,
    /// Idle slots observed during the test period.
    pub idle_count: usize,
}

impl PeriodRecord {
    pub fn device_level(&self, rule: &InterventionRule) -> f64 {
        rule.levels()[self.idle_count]
    }
}

/// Mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimEstimate {
    /// Packets per slot for each user.
    pub per_user_payoff: Vec<Estimate>,
    /// Packets per slot summed over users.
    pub total_throughput: Estimate,
    /// Empirical frequency of each idle count `0..=t`.
    pub idle_count_histogram: Vec<f64>,
    pub mean_device_level: Estimate,
    pub replications_used: u64,
}

/// Deterministic per-replication generator.
pub fn replication_rng(seed: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    rng
}

/// Simulates one period of `T` slots.
pub fn run_period<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> PeriodRecord {
    let users: Vec<Bernoulli> = config
        .profile
        .actions()
        .iter()
        .map(|&a| Bernoulli::new(a).expect("profile entries are probabilities"))
        .collect();
    let t = config.rule.test_period();
    let horizon = config.params.horizon();
    let mut successes = vec![0u32; users.len()];
    let mut idle_count = 0usize;

    let mut slot = |rng: &mut R, device: Option<&Bernoulli>| -> bool {
        let mut transmitters = 0usize;
        let mut sender = 0usize;
        for (u, b) in users.iter().enumerate() {
            if b.sample(rng) {
                transmitters += 1;
                sender = u;
            }
        }
        if transmitters == 1 && !device.is_some_and(|d| d.sample(rng)) {
            successes[sender] += 1;
        }
        transmitters == 0
    };

    for _ in 0..t {
        if slot(rng, None) {
            idle_count += 1;
        }
    }
    let device =
        Bernoulli::new(config.rule.levels()[idle_count]).expect("rule levels are probabilities");
    for _ in t..horizon {
        slot(rng, Some(&device));
    }
    PeriodRecord {
        successes,
        idle_count,
    }
}

/// Exact integer sums over a batch of replications.
#[derive(Debug, Clone)]
struct Tally {
    count: u64,
    user_sum: Vec<u64>,
    user_sum_sq: Vec<u128>,
    total_sum: u64,
    total_sum_sq: u128,
    idle_hist: Vec<u64>,
}

impl Tally {
    fn new(n_users: usize, t: usize) -> Self {
        Self {
            count: 0,
            user_sum: vec![0; n_users],
            user_sum_sq: vec![0; n_users],
            total_sum: 0,
            total_sum_sq: 0,
            idle_hist: vec![0; t + 1],
        }
    }

    fn push(mut self, record: &PeriodRecord) -> Self {
        self.count += 1;
        let mut total = 0u64;
        for (u, &s) in record.successes.iter().enumerate() {
            let s = s as u64;
            self.user_sum[u] += s;
            self.user_sum_sq[u] += (s as u128) * (s as u128);
            total += s;
        }
        self.total_sum += total;
        self.total_sum_sq += (total as u128) * (total as u128);
        self.idle_hist[record.idle_count] += 1;
        self
    }

    fn merge(mut self, other: Self) -> Self {
        self.count += other.count;
        for u in 0..self.user_sum.len() {
            self.user_sum[u] += other.user_sum[u];
            self.user_sum_sq[u] += other.user_sum_sq[u];
        }
        self.total_sum += other.total_sum;
        self.total_sum_sq += other.total_sum_sq;
        for (a, b) in self.idle_hist.iter_mut().zip(&other.idle_hist) {
            *a += b;
        }
        self
    }
}

/// Mean and standard error of `x / scale` from exact sums of `x` and `x^2`.
fn integer_estimate(n: u64, sum: u64, sum_sq: u128, scale: f64) -> Estimate {
    let mean = sum as f64 / n as f64 / scale;
    if n < 2 {
        return Estimate {
            mean,
            std_error: 0.0,
        };
    }
    let n128 = n as u128;
    let spread = n128 * sum_sq - (sum as u128) * (sum as u128);
    let variance = spread as f64 / (n as f64 * (n - 1) as f64) / (scale * scale);
    Estimate {
        mean,
        std_error: (variance / n as f64).sqrt(),
    }
}

/// Averages `config.replications` independent periods.
pub fn estimate(config: &SimConfig) -> SimEstimate {
    let n_users = config.params.n_users();
    let t = config.rule.test_period();
    let tally = (0..config.replications)
        .into_par_iter()
        .fold(
            || Tally::new(n_users, t),
            |tally, i| {
                let mut rng = replication_rng(config.seed, i);
                tally.push(&run_period(config, &mut rng))
            },
        )
        .reduce(|| Tally::new(n_users, t), Tally::merge);
    summarize(config, &tally)
}

fn summarize(config: &SimConfig, tally: &Tally) -> SimEstimate {
    let n = tally.count;
    let horizon = config.params.horizon() as f64;
    let per_user_payoff = (0..tally.user_sum.len())
        .map(|u| integer_estimate(n, tally.user_sum[u], tally.user_sum_sq[u], horizon))
        .collect();
    let total_throughput = integer_estimate(n, tally.total_sum, tally.total_sum_sq, horizon);
    let idle_count_histogram = tally
        .idle_hist
        .iter()
        .map(|&c| c as f64 / n as f64)
        .collect();

    let levels = config.rule.levels();
    let (mut first, mut second) = (0.0, 0.0);
    for (&c, &f) in tally.idle_hist.iter().zip(levels) {
        first += c as f64 * f;
        second += c as f64 * f * f;
    }
    let mean = first / n as f64;
    let std_error = if n < 2 {
        0.0
    } else {
        let variance = ((second - n as f64 * mean * mean) / (n - 1) as f64).max(0.0);
        (variance / n as f64).sqrt()
    };

    SimEstimate {
        per_user_payoff,
        total_throughput,
        idle_count_histogram,
        mean_device_level: Estimate { mean, std_error },
        replications_used: n,
    }
}

impl SimEstimate {
    /// Average idle slots per sensed slot.
    pub fn idle_fraction(&self) -> f64 {
        let t = self.idle_count_histogram.len() - 1;
        let mean_count: f64 = self
            .idle_count_histogram
            .iter()
            .enumerate()
            .map(|(k, p)| k as f64 * p)
            .sum();
        mean_count / t as f64
    }
}

/// Empirical incentive check: cooperation payoff versus the payoff of user 0
/// when it alone deviates to `p_high`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationComparison {
    /// Per-user payoff when all cooperate, averaged across users.
    pub coop_payoff: Estimate,
    /// Payoff of the deviant.
    pub deviation_payoff: Estimate,
    /// `coop_payoff - deviation_payoff`; nonnegative when deviation does not pay.
    pub gap: Estimate,
    pub cooperate: SimEstimate,
    pub deviate: SimEstimate,
}

/// Seed for the deviation run, derived from the base seed by one SplitMix64
/// step so the two scenarios use unrelated streams.
pub fn deviation_seed(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn compare_deviation(
    params: &SystemParams,
    rule: &InterventionRule,
    replications: u64,
    seed: u64,
) -> Result<DeviationComparison> {
    let coop_cfg = SimConfig::new(
        *params,
        rule.clone(),
        ActionProfile::all_cooperate(params),
        replications,
        seed,
    )?;
    let dev_cfg = SimConfig::new(
        *params,
        rule.clone(),
        ActionProfile::one_defects(params, 0)?,
        replications,
        deviation_seed(seed),
    )?;
    let cooperate = estimate(&coop_cfg);
    let deviate = estimate(&dev_cfg);

    let n = params.n_users() as f64;
    let coop_payoff = Estimate {
        mean: cooperate.total_throughput.mean / n,
        std_error: cooperate.total_throughput.std_error / n,
    };
    let deviation_payoff = deviate.per_user_payoff[0];
    let gap = Estimate {
        mean: coop_payoff.mean - deviation_payoff.mean,
        std_error: coop_payoff.std_error.hypot(deviation_payoff.std_error),
    };
    Ok(DeviationComparison {
        coop_payoff,
        deviation_payoff,
        gap,
        cooperate,
        deviate,
    })
}
