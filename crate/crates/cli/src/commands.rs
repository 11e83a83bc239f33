use std::fmt::Write as _;

use intervention::designer::{self, DesignOutcome, InterventionRule};
use intervention::model::{self, ActionProfile, Scenario, SystemParams};
use intervention::sim::{self, Estimate, SimEstimate};
use intervention::sweep::{self, SweepResult};
use intervention::verify::{self, FaultInjection, VerificationReport};
use serde::Serialize;

use crate::config::{self, Format, RunConfig};
use crate::{CliError, Status};

/// Rendered command output plus the exit status it maps to.
pub struct CommandOutput {
    pub body: String,
    pub status: Status,
}

/// 17 significant digits: enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Validation(format!("serializing output: {e}")))?;
    s.push('\n');
    Ok(s)
}

#[derive(Serialize)]
struct DesignReport<'a> {
    params: &'a SystemParams,
    test_period: usize,
    feasible: bool,
    kbar: Option<usize>,
    k0: usize,
    tau_star: f64,
    gap: Option<f64>,
    slack: f64,
    levels: Option<&'a [f64]>,
}

impl<'a> DesignReport<'a> {
    fn new(params: &'a SystemParams, out: &'a DesignOutcome) -> Self {
        Self {
            params,
            test_period: out.test_period,
            feasible: out.feasible,
            kbar: out.threshold_kbar,
            k0: out.cutoff_k0,
            tau_star: out.optimal_throughput,
            gap: out.constraint_gap,
            slack: out.feasibility_slack,
            levels: out.rule.as_ref().map(|r| r.levels()),
        }
    }
}

pub fn design(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let t = cfg.require_test_period()?;
    let out = designer::design_rule(&cfg.params, t).map_err(CliError::from_domain)?;
    let report = DesignReport::new(&cfg.params, &out);
    let body = match cfg.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&report)?,
        Format::Csv => {
            let mut s = String::from("field,value\n");
            let _ = writeln!(s, "test_period,{}", report.test_period);
            let _ = writeln!(s, "feasible,{}", report.feasible);
            let _ = writeln!(s, "kbar,{}", fmt_opt(report.kbar));
            let _ = writeln!(s, "k0,{}", report.k0);
            let _ = writeln!(s, "tau_star,{}", fmt_f64(report.tau_star));
            let _ = writeln!(s, "gap,{}", fmt_opt(report.gap.map(fmt_f64)));
            let _ = writeln!(s, "slack,{}", fmt_f64(report.slack));
            for (k, level) in report.levels.unwrap_or_default().iter().enumerate() {
                let _ = writeln!(s, "level_{k},{}", fmt_f64(*level));
            }
            s
        }
    };
    let status = if out.feasible {
        Status::Success
    } else {
        Status::Infeasible
    };
    Ok(CommandOutput { body, status })
}

#[derive(Serialize)]
struct SweepRow {
    t: usize,
    feasible: bool,
    kbar: Option<usize>,
    k0: usize,
    tau_star: f64,
    gap: Option<f64>,
    slack: f64,
}

#[derive(Serialize)]
struct SweepReport<'a> {
    params: &'a SystemParams,
    rows: Vec<SweepRow>,
    best_t: Option<usize>,
    best_throughput: f64,
    coop_reference: f64,
}

fn sweep_rows(result: &SweepResult) -> Vec<SweepRow> {
    result
        .rows
        .iter()
        .map(|r| SweepRow {
            t: r.test_period,
            feasible: r.feasible,
            kbar: r.threshold_kbar,
            k0: r.cutoff_k0,
            tau_star: r.optimal_throughput,
            gap: r.constraint_gap,
            slack: r.feasibility_slack,
        })
        .collect()
}

pub fn sweep(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let result = sweep::sweep(&cfg.params).map_err(CliError::from_domain)?;
    let rows = sweep_rows(&result);
    let body = match cfg.format.unwrap_or(Format::Csv) {
        Format::Json => to_json(&SweepReport {
            params: &result.params,
            rows,
            best_t: result.best_t,
            best_throughput: result.best_throughput,
            coop_reference: result.coop_reference,
        })?,
        Format::Csv => {
            let mut s = String::from("t,feasible,kbar,k0,tau_star,gap,slack\n");
            for r in &rows {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{}",
                    r.t,
                    r.feasible,
                    fmt_opt(r.kbar),
                    r.k0,
                    fmt_f64(r.tau_star),
                    fmt_opt(r.gap.map(fmt_f64)),
                    fmt_f64(r.slack)
                );
            }
            let _ = writeln!(
                s,
                "# best_t={},best_throughput={},coop_reference={}",
                result.best_t.map_or("none".to_string(), |t| t.to_string()),
                fmt_f64(result.best_throughput),
                fmt_f64(result.coop_reference)
            );
            s
        }
    };
    Ok(CommandOutput {
        body,
        status: Status::Success,
    })
}

#[derive(Serialize)]
struct Compared {
    mean: f64,
    std_error: f64,
    analytic: f64,
}

impl Compared {
    fn new(est: Estimate, analytic: f64) -> Self {
        Self {
            mean: est.mean,
            std_error: est.std_error,
            analytic,
        }
    }
}

#[derive(Serialize)]
struct HistogramBin {
    k: usize,
    frequency: f64,
    analytic: f64,
}

#[derive(Serialize)]
struct ScenarioReport {
    scenario: Scenario,
    total_throughput: Compared,
    per_user_payoff: Vec<Compared>,
    mean_device_level: Compared,
    idle_count_histogram: Vec<HistogramBin>,
}

impl ScenarioReport {
    fn new(
        params: &SystemParams,
        rule: &InterventionRule,
        scenario: Scenario,
        est: &SimEstimate,
    ) -> Result<Self, CliError> {
        let profile = ActionProfile::for_scenario(params, scenario);
        let payoffs = (0..params.n_users())
            .map(|u| model::expected_payoff(params, rule, &profile, u))
            .collect::<Result<Vec<_>, _>>()
            .map_err(CliError::from_domain)?;
        let pmf = model::binomial_pmf(rule.test_period(), model::idle_probability(&profile));
        Ok(Self {
            scenario,
            total_throughput: Compared::new(est.total_throughput, payoffs.iter().sum()),
            per_user_payoff: est
                .per_user_payoff
                .iter()
                .zip(&payoffs)
                .map(|(e, a)| Compared::new(*e, *a))
                .collect(),
            mean_device_level: Compared::new(est.mean_device_level, rule.expected_level(&pmf)),
            idle_count_histogram: est
                .idle_count_histogram
                .iter()
                .zip(&pmf)
                .enumerate()
                .map(|(k, (f, a))| HistogramBin {
                    k,
                    frequency: *f,
                    analytic: *a,
                })
                .collect(),
        })
    }
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    params: &'a SystemParams,
    test_period: usize,
    replications: u64,
    seed: u64,
    levels: &'a [f64],
    cooperate: ScenarioReport,
    deviate: ScenarioReport,
    /// Cooperation payoff minus the deviant's payoff.
    incentive_gap: Compared,
}

pub fn simulate(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let t = cfg.require_test_period()?;
    let params = &cfg.params;
    let rule = match &cfg.rule_file {
        Some(path) => config::read_rule_file(path, t)?,
        None => match designer::design_rule(params, t)
            .map_err(CliError::from_domain)?
            .rule
        {
            Some(rule) => rule,
            None => {
                return Err(CliError::Infeasible(format!(
                    "no intervention rule sustains cooperation at t={t}; pass --rule-file to simulate a fixed rule"
                )))
            }
        },
    };

    let cmp = sim::compare_deviation(params, &rule, cfg.replications, cfg.seed)
        .map_err(CliError::from_domain)?;
    let cooperate = ScenarioReport::new(params, &rule, Scenario::AllCooperate, &cmp.cooperate)?;
    let deviate = ScenarioReport::new(params, &rule, Scenario::OneDefects, &cmp.deviate)?;
    let n = params.n_users() as f64;
    let gap_analytic =
        cooperate.total_throughput.analytic / n - deviate.per_user_payoff[0].analytic;
    let report = SimulateReport {
        params,
        test_period: t,
        replications: cfg.replications,
        seed: cfg.seed,
        levels: rule.levels(),
        incentive_gap: Compared::new(cmp.gap, gap_analytic),
        cooperate,
        deviate,
    };

    let body = match cfg.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&report)?,
        Format::Csv => {
            let mut s = String::from("scenario,metric,estimate,std_error,analytic\n");
            let mut row = |scenario: &str, metric: &str, c: &Compared| {
                let _ = writeln!(
                    s,
                    "{scenario},{metric},{},{},{}",
                    fmt_f64(c.mean),
                    fmt_f64(c.std_error),
                    fmt_f64(c.analytic)
                );
            };
            for (name, sc) in [
                ("cooperate", &report.cooperate),
                ("deviate", &report.deviate),
            ] {
                row(name, "total_throughput", &sc.total_throughput);
                for (u, c) in sc.per_user_payoff.iter().enumerate() {
                    row(name, &format!("payoff_user_{u}"), c);
                }
                row(name, "mean_device_level", &sc.mean_device_level);
            }
            row("both", "incentive_gap", &report.incentive_gap);
            s
        }
    };
    Ok(CommandOutput {
        body,
        status: Status::Success,
    })
}

#[derive(Serialize)]
struct VerifyOutput<'a> {
    params: &'a SystemParams,
    passed: bool,
    #[serde(flatten)]
    report: &'a VerificationReport,
}

pub fn verify(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let fault = cfg
        .inject_fault
        .map(|level_shift| FaultInjection { level_shift });
    let report = verify::verify(&cfg.params, fault).map_err(CliError::from_domain)?;
    let passed = report.passed();
    let body = match cfg.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&VerifyOutput {
            params: &cfg.params,
            passed,
            report: &report,
        })?,
        Format::Csv => {
            let mut s = String::from("check,passed,worst_residual,tolerance\n");
            for c in &report.checks {
                let _ = writeln!(
                    s,
                    "{},{},{},{}",
                    c.name,
                    c.passed,
                    fmt_f64(c.worst_residual),
                    fmt_f64(c.tolerance)
                );
            }
            s
        }
    };
    Ok(CommandOutput {
        body,
        status: if passed {
            Status::Success
        } else {
            Status::VerificationFailed
        },
    })
}
