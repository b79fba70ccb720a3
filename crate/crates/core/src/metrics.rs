//! Topology match and timing metrics.
//!
//! - PTM: percentage of a node's ground direct neighbours it discovered.
//! - CTM: mean PTM over the nodes of one run.
//! - ATTR: per-run node mean of a time mark, averaged over runs.
//! - ATM: mean CTM over runs.
//! - PTDD: ATTR at full topology discovery minus ATTR at the N-1 mark.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::engine::{Mark, RunRecord};
use crate::topology::NodeId;

/// Two-sided normal quantile for 95% intervals.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no completed runs to aggregate")]
    Empty,
    #[error("runs from different scenarios cannot be aggregated together")]
    MixedScenarios,
    #[error("run with seed {seed} lacks the {mark:?} mark for at least one node")]
    MissingMark { seed: u64, mark: Mark },
}

/// `100 * |DNL ∩ DNL*| / |DNL*|`, or 100 when the ground list is empty.
pub fn ptm(discovered: &BTreeSet<NodeId>, ground: &BTreeSet<NodeId>) -> f64 {
    if ground.is_empty() {
        return 100.0;
    }
    let hits = discovered.intersection(ground).count();
    100.0 * hits as f64 / ground.len() as f64
}

pub fn ctm(ptms: &[f64]) -> f64 {
    if ptms.is_empty() {
        return 100.0;
    }
    ptms.iter().sum::<f64>() / ptms.len() as f64
}

fn check_same_key(records: &[RunRecord]) -> Result<(), MetricsError> {
    let first = records.first().ok_or(MetricsError::Empty)?;
    if records.iter().any(|r| r.key != first.key) {
        return Err(MetricsError::MixedScenarios);
    }
    Ok(())
}

fn per_run(records: &[RunRecord], mark: Mark) -> Result<Vec<f64>, MetricsError> {
    check_same_key(records)?;
    records
        .iter()
        .map(|r| {
            r.node_mean(mark)
                .ok_or(MetricsError::MissingMark { seed: r.seed, mark })
        })
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Half-width of a normal-approximation 95% interval for the mean.
pub fn ci95(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    Z95 * (var / xs.len() as f64).sqrt()
}

/// Mean over runs of the per-run node mean of `mark`, in slots.
pub fn attr(records: &[RunRecord], mark: Mark) -> Result<f64, MetricsError> {
    Ok(mean(&per_run(records, mark)?))
}

pub fn atm(records: &[RunRecord]) -> Result<f64, MetricsError> {
    check_same_key(records)?;
    Ok(mean(&records.iter().map(|r| r.ctm).collect::<Vec<_>>()))
}

pub fn ptdd(records: &[RunRecord]) -> Result<f64, MetricsError> {
    Ok(attr(records, Mark::Full)? - attr(records, Mark::N1)?)
}

/// Per-run PTDD samples (node-mean full minus node-mean N-1).
pub fn ptdd_samples(records: &[RunRecord]) -> Result<Vec<f64>, MetricsError> {
    let full = per_run(records, Mark::Full)?;
    let n1 = per_run(records, Mark::N1)?;
    Ok(full.iter().zip(&n1).map(|(f, n)| f - n).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateMetrics {
    /// Completed runs included in the means.
    pub runs: usize,
    /// Runs dropped because they hit the slot cap.
    pub incomplete: usize,
    pub attr_policy: f64,
    pub attr_n1: f64,
    pub attr_full: f64,
    pub atm: f64,
    pub ptdd: f64,
    pub attr_ci95: f64,
    pub atm_ci95: f64,
    pub ptdd_ci95: f64,
}

/// Aggregates one scenario cell. Incomplete runs are excluded and counted.
pub fn aggregate(records: &[RunRecord]) -> Result<AggregateMetrics, MetricsError> {
    check_same_key(records)?;
    let done: Vec<RunRecord> = records.iter().filter(|r| r.completed).cloned().collect();
    let incomplete = records.len() - done.len();
    let policy = per_run(&done, Mark::Policy)?;
    let ctms: Vec<f64> = done.iter().map(|r| r.ctm).collect();
    let ptdds = ptdd_samples(&done)?;
    Ok(AggregateMetrics {
        runs: done.len(),
        incomplete,
        attr_policy: mean(&policy),
        attr_n1: attr(&done, Mark::N1)?,
        attr_full: attr(&done, Mark::Full)?,
        atm: mean(&ctms),
        ptdd: ptdd(&done)?,
        attr_ci95: ci95(&policy),
        atm_ci95: ci95(&ctms),
        ptdd_ci95: ci95(&ptdds),
    })
}
