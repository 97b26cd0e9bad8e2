//! Exhaustive search over the backoff parameters (N, q).
//!
//! The feasible set contains the pairs that yield a stable coupled
//! solution; over those the objective is the mean queueing delay E[W_q].
//! When no pair is stable the objective falls back to the mean service
//! delay 𝒟. Ties break toward the least intrusive configuration: smaller
//! N first, then larger q.

use crate::coupling::{self, CouplingError, FixedPointConfig, MetricsMode, SchemeAnalysis};
use crate::scenario::{NetworkScenario, SchemeConfig};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone)]
pub struct BackoffSearchSpace {
    pub slot_values: Vec<u32>,
    pub prob_values: Vec<f64>,
}

impl Default for BackoffSearchSpace {
    fn default() -> Self {
        BackoffSearchSpace {
            slot_values: (0..=8).collect(),
            prob_values: (1..=100).map(|i| i as f64 / 100.0).collect(),
        }
    }
}

impl BackoffSearchSpace {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        if self.slot_values.is_empty() || self.prob_values.is_empty() {
            return Err(OptimizeError::EmptySearchSpace);
        }
        if self.prob_values.iter().any(|&q| !(q > 0.0 && q <= 1.0)) {
            return Err(OptimizeError::InvalidProbability);
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error("backoff search space is empty")]
    EmptySearchSpace,
    #[error("backoff probabilities must lie in (0, 1]")]
    InvalidProbability,
    #[error("every backoff solve failed; first failure: {0}")]
    AllFailed(String),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ObjectiveKind {
    WaitingTime,
    Retransmissions,
}

/// One evaluated cell of the (N, q) surface.
#[derive(Debug, Clone, Serialize)]
pub struct BackoffCell {
    pub slots: u32,
    pub prob: f64,
    pub stable: bool,
    pub waiting_time: Option<f64>,
    pub service_delay: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BackoffOptimum {
    pub slots: u32,
    pub prob: f64,
    pub objective: f64,
    pub kind: ObjectiveKind,
    pub stable: bool,
    pub mean_backoff_slots: f64,
    pub analysis: SchemeAnalysis,
}

/// Expected slots from a transmission failure to the next attempt:
/// N deterministic deferrals plus a geometric(q) return.
pub fn mean_backoff_slots(slots: u32, prob: f64) -> f64 {
    slots as f64 + 1.0 / prob
}

/// Evaluate the full (N, q) grid and return the optimum plus every cell
/// (for surface dumps). Cells are solved in parallel and scanned in a
/// fixed order, so the argmin is deterministic.
pub fn optimize(
    s: &NetworkScenario,
    space: &BackoffSearchSpace,
    cfg: &FixedPointConfig,
) -> Result<(BackoffOptimum, Vec<BackoffCell>), OptimizeError> {
    space.validate()?;
    // (N ascending, q descending) so the first strict minimum wins ties
    // toward small N and large q.
    let mut probs_desc = space.prob_values.clone();
    probs_desc.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let grid: Vec<(u32, f64)> = space
        .slot_values
        .iter()
        .flat_map(|&n| probs_desc.iter().map(move |&q| (n, q)))
        .collect();

    let cells: Vec<BackoffCell> = grid
        .par_iter()
        .map(|&(slots, prob)| {
            let scheme = SchemeConfig::Backoff { slots, prob };
            match coupling::solve_scheme_with(s, &scheme, cfg, MetricsMode::Fast) {
                Ok(a) => BackoffCell {
                    slots,
                    prob,
                    stable: a.stable,
                    waiting_time: a.mean_waiting_time,
                    service_delay: a.mean_service_delay,
                    error: None,
                },
                Err(err) => BackoffCell {
                    slots,
                    prob,
                    stable: false,
                    waiting_time: None,
                    service_delay: None,
                    error: Some(err.to_string()),
                },
            }
        })
        .collect();

    if cells.iter().all(|c| c.error.is_some()) {
        let first = cells
            .iter()
            .find_map(|c| c.error.clone())
            .unwrap_or_default();
        return Err(OptimizeError::AllFailed(first));
    }

    let any_stable = cells.iter().any(|c| c.stable && c.error.is_none());
    let (kind, best) = if any_stable {
        let best = cells
            .iter()
            .filter(|c| c.stable && c.error.is_none())
            .fold(None::<&BackoffCell>, |acc, c| {
                let obj = c.waiting_time.unwrap_or(f64::INFINITY);
                match acc {
                    Some(b) if b.waiting_time.unwrap_or(f64::INFINITY) <= obj => acc,
                    _ => Some(c),
                }
            })
            .expect("stable subset nonempty");
        (ObjectiveKind::WaitingTime, best)
    } else {
        let best = cells
            .iter()
            .filter(|c| c.error.is_none())
            .fold(None::<&BackoffCell>, |acc, c| {
                let obj = c.service_delay.unwrap_or(f64::INFINITY);
                match acc {
                    Some(b) if b.service_delay.unwrap_or(f64::INFINITY) <= obj => acc,
                    _ => Some(c),
                }
            })
            .expect("at least one cell solved");
        (ObjectiveKind::Retransmissions, best)
    };

    // Final full solve (distribution-based waiting time) at the optimum.
    let scheme = SchemeConfig::Backoff {
        slots: best.slots,
        prob: best.prob,
    };
    let analysis = coupling::solve_scheme_with(s, &scheme, cfg, MetricsMode::Full)?;
    let objective = match kind {
        ObjectiveKind::WaitingTime => analysis
            .mean_waiting_time
            .expect("optimum of the stable subset has a waiting time"),
        ObjectiveKind::Retransmissions => analysis
            .mean_service_delay
            .expect("service delay defined for a loaded network"),
    };
    Ok((
        BackoffOptimum {
            slots: best.slots,
            prob: best.prob,
            objective,
            kind,
            stable: analysis.stable,
            mean_backoff_slots: mean_backoff_slots(best.slots, best.prob),
            analysis,
        },
        cells,
    ))
}
