//! Intervention rules for a slotted random-access channel whose users are
//! monitored only through idle/busy channel signals.
//!
//! An intervention device listens for the first `t` slots of a period,
//! counts idle slots, and then jams with a probability chosen from that
//! count for the remaining `T - t` slots. The crate computes the rule that
//! sustains cooperation at minimum throughput loss, the best listening
//! length `t`, and checks both against an independent LP solver and a
//! slot-level Monte Carlo simulator.
//!
//! Module map:
//! - [`model`]: game primitives, signal distributions and payoffs.
//! - [`designer`]: closed-form optimal threshold rule for a fixed `t`.
//! - [`oracle`]: single-constraint box LP solved greedily, with a dual certificate.
//! - [`sweep`]: optimal throughput over every test period.
//! - [`sim`]: seeded, reproducible slot-level simulation.
//! - [`verify`]: cross-checks bundled into a report.

pub mod designer;
pub mod error;
pub mod model;
pub mod oracle;
pub mod sim;
pub mod sweep;
pub mod verify;

pub use designer::{DesignOutcome, InterventionRule};
pub use error::{Error, Result};
pub use model::{ActionProfile, Scenario, SignalPmf, SystemParams, Throughputs};
pub use oracle::{LpInstance, OracleSolution};
pub use sim::{DeviationComparison, SimConfig, SimEstimate};
pub use sweep::SweepResult;
pub use verify::VerificationReport;

/// Default absolute tolerance for probability comparisons.
pub const DEFAULT_TOL: f64 = 1e-12;
