//! Temporal interference correlation across two slots: joint and
//! conditional transmission failure probabilities for a population whose
//! devices interfere independently with probability 𝒦 in each slot.
//!
//! Devices active in both slots contribute twice with the same location
//! but independent fading, which couples the two SINRs. The closed forms
//! split the interferer field into slot-exclusive parts (intensity
//! 𝒦(1−𝒦)𝒰/n_Z each) and the common part (intensity 𝒦²𝒰/n_Z); each
//! part yields one intra-cell negative-binomial factor and one inter-cell
//! exponent. A quadrature/PMF-summation oracle of the same decomposition
//! backs every closed-form factor.

use crate::scenario::{db_to_linear, NetworkScenario};
use crate::sgeom;
use crate::specfun::{hyp2f1_neg, integrate, Quadrature, SpecFunError};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TempCorrError {
    #[error("activity probability {0} outside [0, 1]")]
    InvalidActivity(f64),
    #[error("marginal failure probability {0:e} too small to condition on")]
    DegenerateMarginal(f64),
    #[error(transparent)]
    Quadrature(#[from] SpecFunError),
}

/// Scenario plus the per-slot probability 𝒦 that a device of the
/// same-code pool acts as an interferer in a given slot.
#[derive(Debug, Clone, Serialize)]
pub struct CorrelationScenario {
    pub scenario: NetworkScenario,
    pub activity_prob: f64,
}

impl CorrelationScenario {
    pub fn validate(&self) -> Result<(), TempCorrError> {
        if !(0.0..=1.0).contains(&self.activity_prob) {
            return Err(TempCorrError::InvalidActivity(self.activity_prob));
        }
        Ok(())
    }
}

/// Single-slot success probability at activity 𝒦 (the baseline closed
/// form with x̄₀ = 𝒦).
pub fn marginal_success(cs: &CorrelationScenario) -> f64 {
    sgeom::success_baseline(&cs.scenario, cs.activity_prob)
}

/// Single-slot failure probability.
pub fn marginal_failure(cs: &CorrelationScenario) -> f64 {
    1.0 - marginal_success(cs)
}

/// Single-slot inter-cell exponent per unit load, θ ψ(1,η,θ)/(η−2)
/// (equals θ^{2/η} ∫_{θ^{−1/η}}^∞ y/(y^η+1) dy).
fn one_slot_exponent(theta: f64, eta: f64) -> f64 {
    sgeom::intercell_exponent(1.0, theta, eta) / 2.0
}

/// Two-slot inter-cell exponent per unit load for a common interferer,
/// θ^{2/η} ∫_{θ^{−1/η}}^∞ (1 − (1 + y^{−η})^{−2}) y dy in closed form:
/// 2θψ(1,η,θ)/(η−2) − θ² ₂F₁(1, 1−2/η; 3−2/η; −θ) / (2(η−1)(1+θ)).
fn two_slot_exponent(theta: f64, eta: f64) -> f64 {
    let psi1 = crate::specfun::gauss_2f1_interference(1, eta, theta)
        .expect("hypergeometric series converges for non-negative argument");
    let fstar = hyp2f1_neg(1.0, 1.0 - 2.0 / eta, 3.0 - 2.0 / eta, theta)
        .expect("hypergeometric series converges for non-negative argument");
    2.0 * theta * psi1 / (eta - 2.0) - theta * theta * fstar / (2.0 * (eta - 1.0) * (1.0 + theta))
}

fn joint_success_closed(cs: &CorrelationScenario) -> f64 {
    let s = &cs.scenario;
    let k = cs.activity_prob;
    let theta = s.sinr_threshold;
    let eta = s.pathloss_exponent;
    let alpha = s.alpha_tilde();
    let noise = s.noise_power * theta / s.power_threshold;

    let tau1 = theta / (1.0 + theta);
    let tau2 = 1.0 - 1.0 / ((1.0 + theta) * (1.0 + theta));
    let intra = sgeom::nb_cell_lt(k * (1.0 - k) * alpha, tau1).powi(2)
        * sgeom::nb_cell_lt(k * k * alpha, tau2);
    let inter = 2.0
        * alpha
        * (2.0 * k * (1.0 - k) * one_slot_exponent(theta, eta)
            + k * k * two_slot_exponent(theta, eta));
    (-2.0 * noise - inter).exp() * intra
}

/// Joint two-slot transmission failure probability,
/// P{SINR₁ < θ, SINR₂ < θ} = 1 − 2 p_marginal + p_joint.
pub fn joint_failure(cs: &CorrelationScenario) -> Result<f64, TempCorrError> {
    cs.validate()?;
    let p = marginal_success(cs);
    let joint = joint_success_closed(cs);
    Ok((1.0 - 2.0 * p + joint).clamp(0.0, 1.0))
}

/// The same probability with every factor evaluated numerically: the
/// inter-cell exponents by adaptive quadrature of the tail integrals and
/// the intra-cell transforms by neighbor-PMF summation.
pub fn joint_failure_quadrature(
    cs: &CorrelationScenario,
    quad: &Quadrature,
) -> Result<f64, TempCorrError> {
    cs.validate()?;
    let s = &cs.scenario;
    let k = cs.activity_prob;
    let theta = s.sinr_threshold;
    let eta = s.pathloss_exponent;
    let alpha = s.alpha_tilde();
    let noise = s.noise_power * theta / s.power_threshold;
    let scale = theta.powf(2.0 / eta);

    let j1 = scale * sgeom::intercell_tail_integral(theta, eta, quad)?;
    let lower = theta.powf(-1.0 / eta);
    let j2 = scale
        * integrate(
            |y: f64| {
                let w = 1.0 + y.powf(-eta);
                (1.0 - 1.0 / (w * w)) * y
            },
            lower,
            f64::INFINITY,
            quad,
        )?;

    let t1 = 1.0 / (1.0 + theta);
    let p_marg = (-noise - 2.0 * alpha * k * j1).exp() * sgeom::nb_pgf_sum(k * alpha, t1);

    let intra = sgeom::nb_pgf_sum(k * (1.0 - k) * alpha, t1).powi(2)
        * sgeom::nb_pgf_sum(k * k * alpha, t1 * t1);
    let inter = 2.0 * alpha * (2.0 * k * (1.0 - k) * j1 + k * k * j2);
    let p_joint = (-2.0 * noise - inter).exp() * intra;

    Ok((1.0 - 2.0 * p_marg + p_joint).clamp(0.0, 1.0))
}

/// Conditional failure probability P{SINR₂ < θ | SINR₁ < θ}.
pub fn conditional_failure(cs: &CorrelationScenario) -> Result<f64, TempCorrError> {
    let marginal = marginal_failure(cs);
    if marginal < 1e-14 {
        return Err(TempCorrError::DegenerateMarginal(marginal));
    }
    Ok((joint_failure(cs)? / marginal).clamp(0.0, 1.0))
}

/// One row of the correlation table.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CorrelationRow {
    pub theta_db: f64,
    pub marginal_failure: f64,
    pub conditional_failure: f64,
    pub gap: f64,
}

/// Tabulate marginal vs conditional failure over a θ grid (dB).
pub fn correlation_report(
    cs: &CorrelationScenario,
    theta_grid_db: &[f64],
) -> Result<Vec<CorrelationRow>, TempCorrError> {
    cs.validate()?;
    theta_grid_db
        .iter()
        .map(|&theta_db| {
            let mut point = cs.clone();
            point.scenario.sinr_threshold = db_to_linear(theta_db);
            let marginal = marginal_failure(&point);
            let conditional = conditional_failure(&point)?;
            Ok(CorrelationRow {
                theta_db,
                marginal_failure: marginal,
                conditional_failure: conditional,
                gap: conditional - marginal,
            })
        })
        .collect()
}
