use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use intervention::{InterventionRule, SystemParams};
use serde::Deserialize;

use crate::CliError;

pub const DEFAULT_N_USERS: usize = 5;
pub const DEFAULT_P_HIGH: f64 = 0.8;
pub const DEFAULT_HORIZON: usize = 100;
pub const DEFAULT_REPLICATIONS: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Flags shared by every subcommand. Each one overrides the same key in
/// `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Number of users N
    #[arg(long)]
    pub n_users: Option<usize>,
    /// Cooperative transmission probability (defaults to 1/N)
    #[arg(long)]
    pub p_low: Option<f64>,
    /// Deviating transmission probability
    #[arg(long)]
    pub p_high: Option<f64>,
    /// Slots per period T
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Sensing slots t before the device acts
    #[arg(long)]
    pub test_period: Option<usize>,
    /// Monte Carlo replications (simulate)
    #[arg(long)]
    pub replications: Option<u64>,
    /// Base seed (simulate)
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON array of intervention levels, or an object with a "levels" array (simulate)
    #[arg(long)]
    pub rule_file: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Write the result here instead of stdout
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// JSON file with any of: n_users, p_low, p_high, horizon, test_period,
    /// replications, seed, format, output
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Shift applied to every optimal threshold level before verification
    #[arg(long, hide = true)]
    pub inject_fault: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    n_users: Option<usize>,
    p_low: Option<f64>,
    p_high: Option<f64>,
    horizon: Option<usize>,
    test_period: Option<usize>,
    replications: Option<u64>,
    seed: Option<u64>,
    format: Option<Format>,
    output: Option<PathBuf>,
}

/// Fully resolved and validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub params: SystemParams,
    pub test_period: Option<usize>,
    pub replications: u64,
    pub seed: u64,
    pub rule_file: Option<PathBuf>,
    pub format: Option<Format>,
    pub output: Option<PathBuf>,
    pub inject_fault: Option<f64>,
}

impl RunConfig {
    pub fn resolve(args: RunArgs) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(path) => read_file_config(path)?,
            None => FileConfig::default(),
        };
        let n_users = args.n_users.or(file.n_users).unwrap_or(DEFAULT_N_USERS);
        if n_users == 0 {
            return Err(CliError::Validation("n_users must be at least 2".into()));
        }
        let p_low = args.p_low.or(file.p_low).unwrap_or(1.0 / n_users as f64);
        let p_high = args.p_high.or(file.p_high).unwrap_or(DEFAULT_P_HIGH);
        let horizon = args.horizon.or(file.horizon).unwrap_or(DEFAULT_HORIZON);
        let params = SystemParams::new(n_users, p_low, p_high, horizon)
            .map_err(|e| CliError::Validation(e.to_string()))?;

        let test_period = args.test_period.or(file.test_period);
        if let Some(t) = test_period {
            params
                .check_test_period(t)
                .map_err(|e| CliError::Validation(e.to_string()))?;
        }
        let replications = args
            .replications
            .or(file.replications)
            .unwrap_or(DEFAULT_REPLICATIONS);
        if replications == 0 {
            return Err(CliError::Validation(
                "replications must be at least 1".into(),
            ));
        }
        if let Some(shift) = args.inject_fault {
            if !(0.0..=1.0).contains(&shift) {
                return Err(CliError::Validation(format!(
                    "fault shift {shift} must lie in [0, 1]"
                )));
            }
        }

        Ok(Self {
            params,
            test_period,
            replications,
            seed: args.seed.or(file.seed).unwrap_or(0),
            rule_file: args.rule_file,
            format: args.format.or(file.format),
            output: args.output.or(file.output),
            inject_fault: args.inject_fault,
        })
    }

    pub fn require_test_period(&self) -> Result<usize, CliError> {
        self.test_period
            .ok_or_else(|| CliError::Validation("--test-period is required".into()))
    }
}

fn read_file_config(path: &Path) -> Result<FileConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RuleFile {
    Levels(Vec<f64>),
    Object { levels: Vec<f64> },
}

/// Reads a rule for test period `t`. Accepts a bare JSON array of levels
/// or any object with a `levels` array, such as the output of `design`.
pub fn read_rule_file(path: &Path, t: usize) -> Result<InterventionRule, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
    let levels = match serde_json::from_str::<RuleFile>(&text) {
        Ok(RuleFile::Levels(levels)) | Ok(RuleFile::Object { levels }) => levels,
        Err(e) => {
            return Err(CliError::Validation(format!(
                "rule file {}: {e}",
                path.display()
            )))
        }
    };
    InterventionRule::new(t, levels)
        .map_err(|e| CliError::Validation(format!("rule file {}: {e}", path.display())))
}
