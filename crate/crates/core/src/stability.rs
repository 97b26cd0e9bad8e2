//! Closed-form stability conditions, device-intensity bounds, and the
//! Pareto-frontier sweeps over (θ, a, α̃).
//!
//! The sufficient condition evaluates the drift test at the most
//! pessimistic interferer activity (everyone transmitting), the necessary
//! condition at the most optimistic one (activity pinned to the arrival
//! probability). Whenever the two disagree, the iterative coupling solve
//! settles the verdict.

use crate::coupling::{self, CouplingError, FixedPointConfig, MetricsMode};
use crate::qbd;
use crate::scenario::{db_to_linear, NetworkScenario, SchemeConfig};
use crate::sgeom;
use crate::specfun::VORONOI_SHAPE;
use rayon::prelude::*;
use serde::Serialize;

/// Joint verdict of the two closed-form conditions, optionally settled by
/// the iterative solver when they disagree.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StabilityVerdict {
    pub sufficient_holds: bool,
    pub necessary_holds: bool,
    pub iterative_verdict: Option<bool>,
}

impl StabilityVerdict {
    /// Best available stability answer.
    pub fn stable(&self) -> bool {
        if self.sufficient_holds {
            true
        } else if !self.necessary_holds {
            false
        } else {
            self.iterative_verdict.unwrap_or(false)
        }
    }
}

/// Closed-form baseline conditions: p(x̄₀ = 1) > a is sufficient,
/// p(x̄₀ = a) > a is necessary.
pub fn baseline_conditions(
    s: &NetworkScenario,
    cfg: &FixedPointConfig,
) -> Result<StabilityVerdict, CouplingError> {
    let a = s.arrival_prob;
    let sufficient_holds = sgeom::success_baseline(s, 1.0) > a;
    let necessary_holds = sgeom::success_baseline(s, a) > a;
    let iterative_verdict = if sufficient_holds != necessary_holds {
        Some(coupling::solve_baseline(s, cfg)?.stable)
    } else {
        None
    };
    Ok(StabilityVerdict {
        sufficient_holds,
        necessary_holds,
        iterative_verdict,
    })
}

/// Upper bounds on α̃ (device/BS/code) from the polynomial part of the
/// baseline conditions: the sufficient-side bound
/// (a^{−1/c} − 1)(θ+1)c/θ and the necessary-side bound, which is the same
/// expression divided by a.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AlphaBounds {
    pub sufficient: f64,
    pub necessary: f64,
}

pub fn alpha_bounds(arrival_prob: f64, theta: f64) -> AlphaBounds {
    debug_assert!(arrival_prob > 0.0 && arrival_prob < 1.0);
    debug_assert!(theta > 0.0);
    let c = VORONOI_SHAPE;
    let sufficient = (arrival_prob.powf(-1.0 / c) - 1.0) * (theta + 1.0) * c / theta;
    AlphaBounds {
        sufficient,
        necessary: sufficient / arrival_prob,
    }
}

fn with_alpha(s: &NetworkScenario, alpha: f64) -> NetworkScenario {
    let mut t = s.clone();
    t.device_density = alpha * s.bs_density * s.codes_per_bs as f64;
    t
}

/// Exact root in α̃ of the full sufficient condition p(x̄₀ = 1; α̃) = a,
/// including the noise and hypergeometric factors that the polynomial
/// bound drops. Returns 0 when even an empty network fails.
pub fn alpha_sufficient_exact(s: &NetworkScenario) -> f64 {
    alpha_root(s, 1.0)
}

/// Exact root in α̃ of the full necessary condition p(x̄₀ = a; α̃) = a.
pub fn alpha_necessary_exact(s: &NetworkScenario) -> f64 {
    alpha_root(s, s.arrival_prob)
}

fn alpha_root(s: &NetworkScenario, activity: f64) -> f64 {
    let a = s.arrival_prob;
    let p_at = |alpha: f64| sgeom::success_baseline(&with_alpha(s, alpha), activity);
    if p_at(0.0) <= a {
        return 0.0;
    }
    let mut hi = 1.0;
    while p_at(hi) > a {
        hi *= 2.0;
        if hi > 1e12 {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if p_at(mid) > a {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Closed-form conditions for ramping and backoff: the drift test with the
/// success probabilities evaluated at the extreme activity profiles
/// (Π₁ = a for the necessary side, saturated activity for the sufficient
/// side).
pub fn scheme_conditions(
    s: &NetworkScenario,
    scheme: &SchemeConfig,
    cfg: &FixedPointConfig,
) -> Result<StabilityVerdict, CouplingError> {
    let a = s.arrival_prob;
    let (sufficient_holds, necessary_holds) = match scheme {
        SchemeConfig::Baseline => {
            let v = baseline_conditions(s, cfg)?;
            return Ok(v);
        }
        SchemeConfig::PowerRamping { thresholds } => {
            let m = thresholds.len();
            let mut mild = vec![0.0; m];
            mild[0] = a;
            let mut harsh = vec![0.0; m];
            harsh[m - 1] = 1.0;
            (
                drift_holds(s, scheme, thresholds, &harsh, a)?,
                drift_holds(s, scheme, thresholds, &mild, a)?,
            )
        }
        SchemeConfig::Backoff { .. } => {
            let thresholds = [s.power_threshold];
            (
                drift_holds(s, scheme, &thresholds, &[1.0], a)?,
                drift_holds(s, scheme, &thresholds, &[a], a)?,
            )
        }
    };
    let iterative_verdict = if sufficient_holds != necessary_holds {
        Some(coupling::solve_scheme(s, scheme, cfg)?.stable)
    } else {
        None
    };
    Ok(StabilityVerdict {
        sufficient_holds,
        necessary_holds,
        iterative_verdict,
    })
}

fn drift_holds(
    s: &NetworkScenario,
    scheme: &SchemeConfig,
    thresholds: &[f64],
    transmit_activity: &[f64],
    arrival: f64,
) -> Result<bool, CouplingError> {
    let probs = match scheme {
        SchemeConfig::PowerRamping { .. } => {
            sgeom::success_ramping_all(s, thresholds, transmit_activity)?
        }
        _ => vec![sgeom::success_backoff(s, transmit_activity[0])],
    };
    let ph = qbd::build_ph(scheme, &probs)?;
    Ok(qbd::is_stable(&ph, arrival)?.stable)
}

/// Axis of a frontier sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Axis {
    ThetaDb,
    Arrival,
    AlphaTilde,
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Axis::ThetaDb => "theta_db",
            Axis::Arrival => "arrival_prob",
            Axis::AlphaTilde => "alpha_tilde",
        }
    }

    fn apply(&self, s: &NetworkScenario, value: f64) -> NetworkScenario {
        let mut t = s.clone();
        match self {
            Axis::ThetaDb => t.sinr_threshold = db_to_linear(value),
            Axis::Arrival => t.arrival_prob = value,
            Axis::AlphaTilde => return with_alpha(s, value),
        }
        t
    }
}

/// One grid point of a frontier sweep.
#[derive(Debug, Clone, Serialize)]
pub struct FrontierPoint {
    pub axis1: f64,
    pub axis2: f64,
    pub theta_db: f64,
    pub arrival_prob: f64,
    pub alpha_tilde: f64,
    pub stable: bool,
    /// Conditional success probability at the fixed point (first-phase
    /// probability when the network is idle).
    pub success_prob: f64,
    pub idle_prob: f64,
    /// Per-point solver failure, recorded instead of aborting the sweep.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FrontierResult {
    pub points: Vec<FrontierPoint>,
    /// Per axis1 grid line: the bisected axis2 boundary between the stable
    /// and unstable cells, when the line crosses one.
    pub frontier: Vec<(f64, f64)>,
}

fn solve_point(
    s: &NetworkScenario,
    scheme: &SchemeConfig,
    cfg: &FixedPointConfig,
) -> Result<(bool, f64, f64), CouplingError> {
    let a = coupling::solve_scheme_with(s, scheme, cfg, MetricsMode::Fast)?;
    let p = a
        .success_prob_conditional
        .unwrap_or_else(|| a.success_probs[0]);
    Ok((a.stable, p, a.idle_prob))
}

/// Sweep a 2-D grid, solve every point, and extract the stability frontier
/// along each axis1 grid line by bisection (8 refinement steps).
pub fn frontier_sweep(
    s: &NetworkScenario,
    scheme: &SchemeConfig,
    axis1: Axis,
    grid1: &[f64],
    axis2: Axis,
    grid2: &[f64],
    cfg: &FixedPointConfig,
) -> FrontierResult {
    let cells: Vec<(usize, usize)> = (0..grid1.len())
        .flat_map(|i| (0..grid2.len()).map(move |j| (i, j)))
        .collect();
    let points: Vec<FrontierPoint> = cells
        .par_iter()
        .map(|&(i, j)| {
            let scen = axis2.apply(&axis1.apply(s, grid1[i]), grid2[j]);
            let mut point = FrontierPoint {
                axis1: grid1[i],
                axis2: grid2[j],
                theta_db: crate::scenario::linear_to_db(scen.sinr_threshold),
                arrival_prob: scen.arrival_prob,
                alpha_tilde: scen.alpha_tilde(),
                stable: false,
                success_prob: f64::NAN,
                idle_prob: f64::NAN,
                error: None,
            };
            match solve_point(&scen, scheme, cfg) {
                Ok((stable, p, x0)) => {
                    point.stable = stable;
                    point.success_prob = p;
                    point.idle_prob = x0;
                }
                Err(err) => point.error = Some(err.to_string()),
            }
            point
        })
        .collect();

    // Frontier per axis1 line: stability is monotone non-increasing along
    // each of the supported axes, so a single transition exists when the
    // line is mixed.
    let mut frontier = Vec::new();
    for (i, &v1) in grid1.iter().enumerate() {
        let line: Vec<&FrontierPoint> = points[i * grid2.len()..(i + 1) * grid2.len()].iter().collect();
        let last_stable = line.iter().rposition(|p| p.stable && p.error.is_none());
        let first_unstable = line.iter().position(|p| !p.stable && p.error.is_none());
        let (Some(ls), Some(fu)) = (last_stable, first_unstable) else {
            continue;
        };
        if fu == 0 || ls + 1 != fu {
            // no clean transition on this line
            continue;
        }
        let mut lo = grid2[ls];
        let mut hi = grid2[fu];
        for _ in 0..8 {
            let mid = 0.5 * (lo + hi);
            let scen = axis2.apply(&axis1.apply(s, v1), mid);
            match solve_point(&scen, scheme, cfg) {
                Ok((true, _, _)) => lo = mid,
                _ => hi = mid,
            }
        }
        frontier.push((v1, 0.5 * (lo + hi)));
    }
    FrontierResult { points, frontier }
}

/// The θ grid used by the shipped sweeps: −20..0 dB in 1 dB steps.
pub fn default_theta_grid_db() -> Vec<f64> {
    (-20..=0).map(|v| v as f64).collect()
}

/// The arrival-probability grid used by the shipped sweeps: 0..0.5 in
/// steps of 0.0125.
pub fn default_arrival_grid() -> Vec<f64> {
    (0..=40).map(|i| i as f64 * 0.0125).collect()
}
