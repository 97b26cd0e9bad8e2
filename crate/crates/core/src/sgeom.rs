//! Closed-form transmission success probabilities per scheme.
//!
//! Each probability is a product of a noise term exp(−σ²θ/ρ) and, per
//! interfering population, an inter-cell Laplace-transform factor (the
//! hypergeometric exponent) and an intra-cell factor (the negative-binomial
//! generating function of the same-code neighbor count). The decomposed
//! transforms are kept as crate-internal functions so the tests can check
//! the closed forms against direct quadrature and PMF summation.

use crate::scenario::NetworkScenario;
use crate::specfun::{
    gauss_2f1_interference, integrate, neighbor_pmf_with_shape, Quadrature, VORONOI_SHAPE,
};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SgeomError {
    #[error("phase index {index} out of range for {phases} ramping phases")]
    PhaseOutOfRange { index: usize, phases: usize },
    #[error("activity profile: {0}")]
    InvalidProfile(String),
}

/// Per-slot transmission activity of the interfering population, the
/// quantity the queueing side feeds back into the interference analysis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ActivityProfile {
    /// Baseline: probability of a non-empty buffer, x̄₀ = 1 − x₀.
    Baseline { busy_prob: f64 },
    /// Backoff: probability of being in the transmit phase, Π₁.
    Backoff { transmit_prob: f64 },
    /// Power-ramping: marginal probability of each power phase, Π₁..Π_M.
    Ramping { phase_probs: Vec<f64> },
}

impl ActivityProfile {
    pub fn validate(&self) -> Result<(), SgeomError> {
        let ok = |p: f64| (0.0..=1.0).contains(&p);
        match self {
            ActivityProfile::Baseline { busy_prob } => {
                if !ok(*busy_prob) {
                    return Err(SgeomError::InvalidProfile(format!(
                        "busy probability {busy_prob} outside [0, 1]"
                    )));
                }
            }
            ActivityProfile::Backoff { transmit_prob } => {
                if !ok(*transmit_prob) {
                    return Err(SgeomError::InvalidProfile(format!(
                        "transmit probability {transmit_prob} outside [0, 1]"
                    )));
                }
            }
            ActivityProfile::Ramping { phase_probs } => {
                if phase_probs.iter().any(|p| !ok(*p)) {
                    return Err(SgeomError::InvalidProfile(
                        "phase probability outside [0, 1]".into(),
                    ));
                }
                let total: f64 = phase_probs.iter().sum();
                if total > 1.0 + 1e-9 {
                    return Err(SgeomError::InvalidProfile(format!(
                        "phase probabilities sum to {total} > 1"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Exponent of the inter-cell interference Laplace transform at normalized
/// threshold `z` and interferer load `load` (devices per BS per code that
/// transmit): 2 z · load · ψ(1, η, z) / (η − 2).
pub(crate) fn intercell_exponent(load: f64, z: f64, eta: f64) -> f64 {
    if load == 0.0 || z == 0.0 {
        return 0.0;
    }
    let psi = gauss_2f1_interference(1, eta, z)
        .expect("hypergeometric series converges for non-negative argument");
    2.0 * z * load / (eta - 2.0) * psi
}

/// Same exponent evaluated by direct numerical integration of
/// 2 · load · z^{2/η} ∫_{z^{−1/η}}^∞ y/(y^η+1) dy; test oracle for the
/// closed form above.
pub(crate) fn intercell_exponent_quad(
    load: f64,
    z: f64,
    eta: f64,
    quad: &Quadrature,
) -> Result<f64, crate::specfun::SpecFunError> {
    if load == 0.0 || z == 0.0 {
        return Ok(0.0);
    }
    let tail = intercell_tail_integral(z, eta, quad)?;
    Ok(2.0 * load * z.powf(2.0 / eta) * tail)
}

/// Tail integral of the inter-cell transform, ∫_{z^{−1/η}}^∞ y/(y^η+1) dy,
/// by adaptive quadrature.
pub(crate) fn intercell_tail_integral(
    z: f64,
    eta: f64,
    quad: &Quadrature,
) -> Result<f64, crate::specfun::SpecFunError> {
    let lower = z.powf(-1.0 / eta);
    integrate(|y| y / (y.powf(eta) + 1.0), lower, f64::INFINITY, quad)
}

/// Negative-binomial cell-population transform (1 + τ · load / c)^{−c},
/// the expectation of t^N over the neighbor PMF with τ = 1 − t.
pub(crate) fn nb_cell_lt(load: f64, tau: f64) -> f64 {
    nb_cell_lt_with_shape(load, tau, VORONOI_SHAPE)
}

pub(crate) fn nb_cell_lt_with_shape(load: f64, tau: f64, c: f64) -> f64 {
    (1.0 + tau * load / c).powf(-c)
}

/// E[t^N] by direct summation over the neighbor PMF, truncated once the
/// tail mass drops below 1e-12; test oracle for `nb_cell_lt`.
pub(crate) fn nb_pgf_sum(load: f64, t: f64) -> f64 {
    let mut total = 0.0;
    let mut mass = 0.0;
    let mut n = 0u32;
    loop {
        let p = neighbor_pmf_with_shape(n, load, 1.0, VORONOI_SHAPE);
        total += p * t.powi(n as i32);
        mass += p;
        if 1.0 - mass < 1e-12 {
            break;
        }
        n += 1;
        assert!(n < 1_000_000, "neighbor PMF tail did not vanish");
    }
    total
}

/// Intra-cell interference Laplace transform at normalized threshold `z`:
/// each same-code neighbor contributes a factor 1/(1+z).
pub(crate) fn intracell_lt(load: f64, z: f64) -> f64 {
    nb_cell_lt(load, z / (1.0 + z))
}

/// Intra-cell transform by PMF summation; test oracle for `intracell_lt`.
pub(crate) fn intracell_lt_pmf_sum(load: f64, z: f64) -> f64 {
    nb_pgf_sum(load, 1.0 / (1.0 + z))
}

/// Shared kernel: success probability for a test link with noise exponent
/// σ²θ/ρ_own against independent interferer populations, each described by
/// (activity probability, normalized threshold z_k = θ ρ_k/ρ_own).
fn success_probability(
    noise_exponent: f64,
    eta: f64,
    alpha_tilde: f64,
    populations: &[(f64, f64)],
) -> f64 {
    let mut p = (-noise_exponent).exp();
    for &(activity, z) in populations {
        let load = activity * alpha_tilde;
        p *= (-intercell_exponent(load, z, eta)).exp();
        p *= intracell_lt(load, z);
    }
    p
}

/// Transmission success probability for the baseline scheme at interferer
/// activity x̄₀ (probability of a non-empty buffer).
pub fn success_baseline(s: &NetworkScenario, busy_prob: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&busy_prob));
    success_probability(
        s.noise_exponent(s.power_threshold),
        s.pathloss_exponent,
        s.alpha_tilde(),
        &[(busy_prob, s.sinr_threshold)],
    )
}

/// Transmission success probability for the backoff scheme at transmit-phase
/// probability Π₁. Identical in form to the baseline expression.
pub fn success_backoff(s: &NetworkScenario, transmit_prob: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&transmit_prob));
    success_probability(
        s.noise_exponent(s.power_threshold),
        s.pathloss_exponent,
        s.alpha_tilde(),
        &[(transmit_prob, s.sinr_threshold)],
    )
}

/// Transmission success probability for a power-ramping device operating at
/// threshold ρ_m (zero-based `phase` index) against per-phase interferer
/// activities Π₁..Π_M. The k-th population enters at the power ratio
/// ρ_k/ρ_m.
pub fn success_ramping(
    s: &NetworkScenario,
    thresholds: &[f64],
    phase_probs: &[f64],
    phase: usize,
) -> Result<f64, SgeomError> {
    let m = thresholds.len();
    if phase >= m || phase_probs.len() != m {
        return Err(SgeomError::PhaseOutOfRange {
            index: phase,
            phases: m,
        });
    }
    let own = thresholds[phase];
    let theta = s.sinr_threshold;
    let populations: Vec<(f64, f64)> = (0..m)
        .map(|k| (phase_probs[k], theta * thresholds[k] / own))
        .collect();
    Ok(success_probability(
        s.noise_exponent(own),
        s.pathloss_exponent,
        s.alpha_tilde(),
        &populations,
    ))
}

/// Baseline/backoff success probability with both Laplace-transform
/// factors evaluated numerically: the inter-cell exponent by adaptive
/// quadrature of its tail integral and the intra-cell transform by
/// neighbor-PMF summation. Verification route for `success_baseline`.
pub fn success_baseline_quadrature(
    s: &NetworkScenario,
    busy_prob: f64,
    quad: &Quadrature,
) -> Result<f64, crate::specfun::SpecFunError> {
    let theta = s.sinr_threshold;
    let load = busy_prob * s.alpha_tilde();
    let inter = intercell_exponent_quad(load, theta, s.pathloss_exponent, quad)?;
    Ok((-s.noise_exponent(s.power_threshold) - inter).exp() * intracell_lt_pmf_sum(load, theta))
}

/// All per-phase ramping success probabilities at once.
pub fn success_ramping_all(
    s: &NetworkScenario,
    thresholds: &[f64],
    phase_probs: &[f64],
) -> Result<Vec<f64>, SgeomError> {
    (0..thresholds.len())
        .map(|m| success_ramping(s, thresholds, phase_probs, m))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::load_scenario;

    fn defaults(alpha: f64) -> NetworkScenario {
        let mut s = load_scenario(
            "bs_density = 10\ndevice_density = 2560\ncodes_per_bs = 64\n\
             pathloss_exponent = 4\npower_threshold = -90 dBm\nnoise = -90 dBm\n\
             sinr_threshold = -10 dB\narrival_prob = 0.1\n",
        )
        .unwrap()
        .scenario;
        s.device_density = alpha * s.bs_density * s.codes_per_bs as f64;
        s
    }

    // Reference values from an arbitrary-precision evaluation of the closed
    // form.
    const P_BASE_A4_FULL: f64 = 0.434429462061916916;
    const P_BASE_A8_HALF: f64 = 0.434429462061916916; // load 8·0.5 == 4·1.0
    const P_BASE_ETA33: f64 = 0.296612238370244409;

    #[test]
    fn baseline_reference_value() {
        let s = defaults(4.0);
        let p = success_baseline(&s, 1.0);
        assert!((p - P_BASE_A4_FULL).abs() < 1e-14, "p = {p}");
        let s8 = defaults(8.0);
        assert!((success_baseline(&s8, 0.5) - P_BASE_A8_HALF).abs() < 1e-14);
    }

    #[test]
    fn baseline_general_eta_reference() {
        let mut s = defaults(2.5);
        s.pathloss_exponent = 3.3;
        s.sinr_threshold = 0.25;
        let p = success_baseline(&s, 0.7);
        assert!((p - P_BASE_ETA33).abs() < 1e-14, "p = {p}");
    }

    #[test]
    fn baseline_noise_limited_when_idle() {
        let s = defaults(4.0);
        let expect = (-s.noise_power * s.sinr_threshold / s.power_threshold).exp();
        assert!((success_baseline(&s, 0.0) - expect).abs() < 1e-15);
    }

    #[test]
    fn baseline_goes_to_one_as_threshold_vanishes() {
        let mut s = defaults(4.0);
        s.sinr_threshold = 1e-12;
        let p = success_baseline(&s, 1.0);
        assert!(p > 1.0 - 1e-9, "p = {p}");
    }

    #[test]
    fn eta4_arctan_form_matches_general() {
        // For η = 4 the hypergeometric exponent collapses to
        // x̄₀ α̃ √θ arctan √θ.
        for &theta_db in &[-15.0, -10.0, -5.0, 0.0] {
            for &alpha in &[1.0, 4.0, 8.0] {
                for &act in &[0.2, 0.7, 1.0] {
                    let mut s = defaults(alpha);
                    s.sinr_threshold = crate::scenario::db_to_linear(theta_db);
                    let theta = s.sinr_threshold;
                    let c = VORONOI_SHAPE;
                    let closed = (-theta
                        - act * alpha * theta.sqrt() * theta.sqrt().atan())
                    .exp()
                        / (1.0 + theta * act * alpha / ((1.0 + theta) * c)).powf(c);
                    let general = success_baseline(&s, act);
                    assert!(
                        (closed - general).abs() < 1e-10,
                        "mismatch at theta_db={theta_db} alpha={alpha} act={act}"
                    );
                }
            }
        }
    }

    #[test]
    fn backoff_equals_baseline_everywhere() {
        for &alpha in &[0.5, 4.0, 8.0] {
            let s = defaults(alpha);
            for &p in &[0.0, 0.3, 0.77, 1.0] {
                assert_eq!(success_baseline(&s, p), success_backoff(&s, p));
            }
        }
    }

    #[test]
    fn ramping_single_phase_reduces_to_baseline() {
        let s = defaults(4.0);
        for &act in &[0.0, 0.4, 1.0] {
            let pm = success_ramping(&s, &[s.power_threshold], &[act], 0).unwrap();
            assert_eq!(pm, success_baseline(&s, act));
        }
    }

    #[test]
    fn ramping_idle_network_is_noise_limited() {
        let s = defaults(4.0);
        let thresholds = [1e-9, 2.5e-9, 6.3e-9];
        let probs = [0.0, 0.0, 0.0];
        for m in 0..3 {
            let p = success_ramping(&s, &thresholds, &probs, m).unwrap();
            let expect = (-s.noise_power * s.sinr_threshold / thresholds[m]).exp();
            assert!((p - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn ramping_higher_power_wins_against_same_field() {
        // Same interference field, higher own power: p_M ≥ p_1.
        let s = defaults(4.0);
        let thresholds = [1e-9, 2.5e-9, 6.3e-9];
        let probs = [0.2, 0.1, 0.05];
        let p1 = success_ramping(&s, &thresholds, &probs, 0).unwrap();
        let pm = success_ramping(&s, &thresholds, &probs, 2).unwrap();
        assert!(pm > p1, "p_M={pm} p_1={p1}");
    }

    #[test]
    fn ramping_index_out_of_range() {
        let s = defaults(4.0);
        assert!(matches!(
            success_ramping(&s, &[1e-9], &[0.1], 1),
            Err(SgeomError::PhaseOutOfRange { .. })
        ));
    }

    #[test]
    fn success_monotone_in_threshold_load_noise_and_activity() {
        let s = defaults(4.0);
        let base = success_baseline(&s, 0.5);
        let mut hi_theta = s.clone();
        hi_theta.sinr_threshold *= 2.0;
        assert!(success_baseline(&hi_theta, 0.5) < base);
        let mut hi_alpha = s.clone();
        hi_alpha.device_density *= 2.0;
        assert!(success_baseline(&hi_alpha, 0.5) < base);
        let mut hi_noise = s.clone();
        hi_noise.noise_power *= 10.0;
        assert!(success_baseline(&hi_noise, 0.5) < base);
        assert!(success_baseline(&s, 0.6) < base);
        assert!(base > 0.0 && base <= 1.0);
    }

    #[test]
    fn intercell_exponent_matches_quadrature() {
        let quad = Quadrature::default();
        for &eta in &[3.0, 4.0, 5.5] {
            for &z in &[0.01, 0.1, 1.0, 10.0] {
                for &load in &[0.3, 4.0] {
                    let closed = intercell_exponent(load, z, eta);
                    let numeric = intercell_exponent_quad(load, z, eta, &quad).unwrap();
                    assert!(
                        (closed - numeric).abs() < 1e-8 * closed.max(1e-6),
                        "eta={eta} z={z} load={load}: {closed} vs {numeric}"
                    );
                }
            }
        }
    }

    #[test]
    fn intracell_lt_matches_pmf_sum() {
        for &z in &[0.05, 0.1, 1.0, 12.0] {
            for &load in &[0.1, 1.0, 4.0, 8.0] {
                let closed = intracell_lt(load, z);
                let summed = intracell_lt_pmf_sum(load, z);
                assert!(
                    (closed - summed).abs() < 1e-9,
                    "z={z} load={load}: {closed} vs {summed}"
                );
            }
        }
    }

    #[test]
    fn activity_profile_validation() {
        assert!(ActivityProfile::Baseline { busy_prob: 0.4 }.validate().is_ok());
        assert!(ActivityProfile::Baseline { busy_prob: 1.4 }.validate().is_err());
        assert!(ActivityProfile::Ramping {
            phase_probs: vec![0.6, 0.5]
        }
        .validate()
        .is_err());
        assert!(ActivityProfile::Ramping {
            phase_probs: vec![0.6, 0.3]
        }
        .validate()
        .is_ok());
    }
}
