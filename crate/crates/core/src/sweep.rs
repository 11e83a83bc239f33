//! Optimal throughput as a function of the test period.
//!
//! A longer test period sharpens the idle-count statistics but leaves fewer
//! slots in which intervention can punish, so `tau*(t)` is generally not
//! monotone and the best `t` has to be found by enumeration.

use rayon::prelude::*;
use serde::Serialize;

use crate::designer::{self, DesignOutcome};
use crate::error::{Error, Result};
use crate::model::{self, SystemParams};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub params: SystemParams,
    /// One outcome per test period, `rows[i].test_period == i + 1`.
    pub rows: Vec<DesignOutcome>,
    pub best_t: Option<usize>,
    /// Best throughput over feasible rows; the Nash throughput if none is feasible.
    pub best_throughput: f64,
    /// `N tau_c`, the throughput of full cooperation without intervention.
    pub coop_reference: f64,
}

impl SweepResult {
    pub fn row(&self, t: usize) -> Option<&DesignOutcome> {
        t.checked_sub(1).and_then(|i| self.rows.get(i))
    }

    pub fn feasible_rows(&self) -> impl Iterator<Item = &DesignOutcome> {
        self.rows.iter().filter(|r| r.feasible)
    }
}

/// Solves the design problem for every `t` in `1..=T`.
pub fn sweep(params: &SystemParams) -> Result<SweepResult> {
    let rows = (1..=params.horizon())
        .into_par_iter()
        .map(|t| designer::design_rule(params, t))
        .collect::<Result<Vec<_>>>()?;

    let mut best: Option<&DesignOutcome> = None;
    for row in rows.iter().filter(|r| r.feasible) {
        // strict comparison keeps the smallest t on ties
        if best.is_none_or(|b| row.optimal_throughput > b.optimal_throughput) {
            best = Some(row);
        }
    }
    let best_t = best.map(|b| b.test_period);
    let best_throughput = best
        .map(|b| b.optimal_throughput)
        .unwrap_or_else(|| params.nash_throughput());
    let coop_reference = params.n_users() as f64 * model::throughputs(params).coop;

    Ok(SweepResult {
        params: *params,
        rows,
        best_t,
        best_throughput,
        coop_reference,
    })
}

/// Throughput lost to imperfect monitoring at the best test period.
pub fn efficiency_loss(result: &SweepResult) -> Result<f64> {
    if result.best_t.is_none() {
        return Err(Error::NoFeasiblePeriod);
    }
    Ok(result.coop_reference - result.best_throughput)
}

/// `(t, kbar)` for every feasible row, ascending in `t`.
pub fn kbar_schedule(result: &SweepResult) -> Vec<(usize, usize)> {
    result
        .rows
        .iter()
        .filter_map(|r| r.threshold_kbar.map(|k| (r.test_period, k)))
        .collect()
}
