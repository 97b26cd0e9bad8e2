//! Fixed-point coupling between the stochastic-geometry success
//! probabilities and the queueing steady state.
//!
//! The interferer activity Π determines the success probabilities, which
//! determine the PH service and hence the queue solution, which produces a
//! new Π. The iteration runs until the max-abs change in Π drops below the
//! configured tolerance. Near the stability boundary the map can alternate
//! between the stable and unstable branches; the engine then halves the
//! damping once and, if the oscillation persists, classifies the point as
//! unstable and reports the iteration trace.

use crate::qbd::{self, QbdError};
use crate::scenario::{NetworkScenario, ScenarioError, SchemeConfig};
use crate::sgeom::{self, SgeomError};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Copy)]
pub struct FixedPointConfig {
    /// Convergence threshold on max|Π⁽ⁱ⁾ − Π⁽ⁱ⁻¹⁾|.
    pub tolerance: f64,
    pub max_iterations: u32,
    /// Mixing factor: Π ← (1−d)Π_old + d Π_new.
    pub damping: f64,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        FixedPointConfig {
            tolerance: 1e-8,
            max_iterations: 1000,
            damping: 1.0,
        }
    }
}

impl FixedPointConfig {
    pub fn validate(&self) -> Result<(), CouplingError> {
        if !(self.tolerance > 0.0 && self.tolerance <= 1e-3) {
            return Err(CouplingError::Config(format!(
                "tolerance {} outside (0, 1e-3]",
                self.tolerance
            )));
        }
        if self.max_iterations < 10 {
            return Err(CouplingError::Config(format!(
                "max_iterations {} below 10",
                self.max_iterations
            )));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(CouplingError::Config(format!(
                "damping {} outside (0, 1]",
                self.damping
            )));
        }
        Ok(())
    }
}

/// Per-iteration record of the fixed-point run.
#[derive(Debug, Clone, Default, Serialize)]
pub struct FixedPointTrace {
    /// Π after each iteration.
    pub profiles: Vec<Vec<f64>>,
    /// max-abs change at each iteration.
    pub changes: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum CouplingError {
    #[error("fixed point did not converge within {iterations} iterations (last change {last_change:e})")]
    MaxIterations {
        iterations: u32,
        last_change: f64,
        trace: FixedPointTrace,
    },
    #[error("fixed point oscillates without damping progress after {iterations} iterations")]
    Oscillation {
        iterations: u32,
        trace: FixedPointTrace,
    },
    #[error(transparent)]
    Qbd(#[from] QbdError),
    #[error(transparent)]
    Sgeom(#[from] SgeomError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{0}")]
    Config(String),
}

const OSCILLATION_WINDOW: usize = 20;
const OSCILLATION_MIN_ITERS: usize = 40;

/// Damped fixed-point iteration of an arbitrary Π → Π map.
///
/// On detected oscillation (the change failing to decrease over a trailing
/// window) the damping is halved once; a second detection aborts with the
/// trace.
pub fn fixed_point<F>(
    mut update: F,
    init: Vec<f64>,
    cfg: &FixedPointConfig,
) -> Result<(Vec<f64>, FixedPointTrace), CouplingError>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, CouplingError>,
{
    cfg.validate()?;
    let mut current = init;
    let mut damping = cfg.damping;
    let mut damped_once = false;
    let mut trace = FixedPointTrace::default();
    for _ in 0..cfg.max_iterations {
        let proposed = update(&current)?;
        assert_eq!(proposed.len(), current.len(), "update changed dimension");
        let mut change: f64 = 0.0;
        let mut next = Vec::with_capacity(current.len());
        for (old, new) in current.iter().zip(&proposed) {
            let mixed = (1.0 - damping) * old + damping * new;
            change = change.max((mixed - old).abs());
            next.push(mixed);
        }
        current = next;
        trace.profiles.push(current.clone());
        trace.changes.push(change);
        if change <= cfg.tolerance {
            return Ok((current, trace));
        }
        let n = trace.changes.len();
        if n >= OSCILLATION_MIN_ITERS {
            let recent = trace.changes[n - 1];
            let past = trace.changes[n - 1 - OSCILLATION_WINDOW];
            if recent >= 0.98 * past {
                if damped_once {
                    return Err(CouplingError::Oscillation {
                        iterations: n as u32,
                        trace,
                    });
                }
                damping *= 0.5;
                damped_once = true;
            }
        }
    }
    let last_change = trace.changes.last().copied().unwrap_or(f64::NAN);
    Err(CouplingError::MaxIterations {
        iterations: cfg.max_iterations,
        last_change,
        trace,
    })
}

/// Converged joint interference/queueing solution for one scheme.
#[derive(Debug, Clone, Serialize)]
pub struct SchemeAnalysis {
    pub scheme: SchemeConfig,
    pub stable: bool,
    /// Idle probability x₀ (zero when unstable).
    pub idle_prob: f64,
    /// Marginal phase probabilities Π.
    pub phase_marginals: Vec<f64>,
    /// Success probability per transmit phase (one entry except ramping).
    pub success_probs: Vec<f64>,
    /// E[Q_L]; present only for stable solutions.
    pub mean_queue_length: Option<f64>,
    /// E[W_q]; present only for stable solutions.
    pub mean_waiting_time: Option<f64>,
    /// 𝒟, busy slots per delivered packet; absent only when the network is
    /// fully idle.
    pub mean_service_delay: Option<f64>,
    /// P_success = Σ_m Π_m p_m / (1 − x₀).
    pub success_prob_conditional: Option<f64>,
    pub iterations_used: u32,
    /// True when persistent boundary oscillation forced the unstable
    /// classification.
    pub forced_unstable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum MetricsMode {
    /// Waiting time from the full distribution recursion.
    Full,
    /// Waiting time from the first-moment identity (identical value,
    /// used inside large parameter sweeps).
    Fast,
}

fn transmit_success(
    s: &NetworkScenario,
    scheme: &SchemeConfig,
    phases: &[f64],
) -> Result<Vec<f64>, CouplingError> {
    let clamp = |p: f64| p.clamp(0.0, 1.0);
    Ok(match scheme {
        SchemeConfig::Baseline => vec![sgeom::success_baseline(s, clamp(phases[0]))],
        SchemeConfig::Backoff { .. } => vec![sgeom::success_backoff(s, clamp(phases[0]))],
        SchemeConfig::PowerRamping { thresholds } => {
            let probs: Vec<f64> = phases.iter().map(|&p| clamp(p)).collect();
            sgeom::success_ramping_all(s, thresholds, &probs)?
        }
    })
}

pub(crate) fn solve_scheme_with(
    s: &NetworkScenario,
    scheme: &SchemeConfig,
    cfg: &FixedPointConfig,
    metrics: MetricsMode,
) -> Result<SchemeAnalysis, CouplingError> {
    s.validate()?;
    scheme.validate()?;
    cfg.validate()?;
    let n = scheme.phase_count();
    let arrival = s.arrival_prob;

    // Start from x₀ = 0.75 with the whole busy mass in the first phase.
    let mut init = vec![0.0; n];
    init[0] = 0.25;

    let update = |phases: &[f64]| -> Result<Vec<f64>, CouplingError> {
        let probs = transmit_success(s, scheme, phases)?;
        let ph = qbd::build_ph(scheme, &probs)?;
        let sol = qbd::solve(&ph, arrival)?;
        Ok(sol.phases.iter().copied().collect())
    };

    let (phases, iterations, forced_unstable) = match fixed_point(update, init, cfg) {
        Ok((phases, trace)) => (phases, trace.profiles.len() as u32, false),
        Err(CouplingError::Oscillation { iterations, trace }) => {
            // Boundary oscillation: settle on the unstable branch.
            let last = trace.profiles.last().expect("oscillation implies iterations");
            let probs = transmit_success(s, scheme, last)?;
            let ph = qbd::build_ph(scheme, &probs)?;
            let phases = qbd::unstable_phases(&ph);
            (phases.iter().copied().collect(), iterations, true)
        }
        Err(other) => return Err(other),
    };

    finalize(s, scheme, &phases, iterations, forced_unstable, metrics)
}

fn finalize(
    s: &NetworkScenario,
    scheme: &SchemeConfig,
    phases: &[f64],
    iterations: u32,
    forced_unstable: bool,
    metrics: MetricsMode,
) -> Result<SchemeAnalysis, CouplingError> {
    let probs = transmit_success(s, scheme, phases)?;
    let ph = qbd::build_ph(scheme, &probs)?;
    let sol = if forced_unstable {
        let mut sol = qbd::solve(&ph, s.arrival_prob)?;
        if sol.stable {
            // Oscillation straddled the boundary; report the unstable branch.
            sol.stable = false;
            sol.x0 = 0.0;
            sol.phases = qbd::unstable_phases(&ph);
        }
        sol
    } else {
        qbd::solve(&ph, s.arrival_prob)?
    };

    let phase_marginals: Vec<f64> = sol.phases.iter().copied().collect();
    let phase_success = qbd::phase_success_vector(scheme, &probs);
    let delay = qbd::mean_service_delay(&phase_marginals, sol.x0, &phase_success).ok();
    let (mean_queue_length, mean_waiting_time) = if sol.stable {
        let eq = qbd::mean_queue_length(&sol)?;
        let ew = match metrics {
            MetricsMode::Full => qbd::mean_waiting_time(&sol, &ph)?,
            MetricsMode::Fast => qbd::mean_waiting_time_moment(&sol, &ph)?,
        };
        (Some(eq), Some(ew))
    } else {
        (None, None)
    };

    Ok(SchemeAnalysis {
        scheme: scheme.clone(),
        stable: sol.stable,
        idle_prob: sol.x0,
        phase_marginals,
        success_probs: probs,
        mean_queue_length,
        mean_waiting_time,
        mean_service_delay: delay.map(|d| d.mean_attempts),
        success_prob_conditional: delay.map(|d| d.success_prob),
        iterations_used: iterations,
        forced_unstable,
    })
}

/// Joint solve for the baseline scheme.
pub fn solve_baseline(
    s: &NetworkScenario,
    cfg: &FixedPointConfig,
) -> Result<SchemeAnalysis, CouplingError> {
    solve_scheme_with(s, &SchemeConfig::Baseline, cfg, MetricsMode::Full)
}

/// Joint solve for the power-ramping scheme with the given thresholds (mW).
pub fn solve_ramping(
    s: &NetworkScenario,
    thresholds: &[f64],
    cfg: &FixedPointConfig,
) -> Result<SchemeAnalysis, CouplingError> {
    let scheme = SchemeConfig::PowerRamping {
        thresholds: thresholds.to_vec(),
    };
    solve_scheme_with(s, &scheme, cfg, MetricsMode::Full)
}

/// Joint solve for the backoff scheme with N deferral slots and return
/// probability q.
pub fn solve_backoff(
    s: &NetworkScenario,
    slots: u32,
    prob: f64,
    cfg: &FixedPointConfig,
) -> Result<SchemeAnalysis, CouplingError> {
    solve_scheme_with(s, &SchemeConfig::Backoff { slots, prob }, cfg, MetricsMode::Full)
}

/// Joint solve dispatching on the scheme variant.
pub fn solve_scheme(
    s: &NetworkScenario,
    scheme: &SchemeConfig,
    cfg: &FixedPointConfig,
) -> Result<SchemeAnalysis, CouplingError> {
    solve_scheme_with(s, scheme, cfg, MetricsMode::Full)
}
