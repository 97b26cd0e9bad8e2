//! Special functions and quadrature backing the closed-form expressions:
//! the Gauss hypergeometric family ψ(N, η, z), the Voronoi-cell neighbor
//! PMF, and an adaptive Simpson integrator for the Laplace-transform
//! integrals that the tests use as independent oracles.

use statrs::function::gamma::ln_gamma;
use thiserror::Error;

/// Shape constant of the approximate PDF of a planar Poisson-Voronoi cell
/// area. Hard-coded default; the `_with_shape` variants exist for
/// sensitivity studies.
pub const VORONOI_SHAPE: f64 = 3.575;

const SERIES_EPS: f64 = 1e-16;
const SERIES_MAX_TERMS: usize = 2_000_000;

#[derive(Debug, Error)]
pub enum SpecFunError {
    #[error("hypergeometric series did not converge after {terms} terms (args a={a}, b={b}, c={c}, w={w})")]
    SeriesNoConvergence { a: f64, b: f64, c: f64, w: f64, terms: usize },
    #[error("quadrature tolerance {tol} not met within {max_subdivisions} subdivisions")]
    ToleranceNotMet { tol: f64, max_subdivisions: u32 },
    #[error("quadrature config: {0}")]
    InvalidConfig(String),
}

/// ₂F₁(a, b; c; w) by direct power series; requires |w| < 1.
fn hyp2f1_series(a: f64, b: f64, c: f64, w: f64) -> Result<f64, SpecFunError> {
    debug_assert!(w.abs() < 1.0);
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    for n in 0..SERIES_MAX_TERMS {
        let nf = n as f64;
        let ratio = (a + nf) * (b + nf) / ((c + nf) * (1.0 + nf));
        term *= ratio * w;
        sum += term;
        // Once the term ratio settles below one, the tail is bounded by a
        // geometric series with that ratio.
        let r = (ratio * w).abs();
        if n > 4 && r < 1.0 {
            let tail = term.abs() * r / (1.0 - r);
            if tail + term.abs() <= SERIES_EPS * sum.abs() {
                return Ok(sum);
            }
        }
    }
    Err(SpecFunError::SeriesNoConvergence {
        a,
        b,
        c,
        w,
        terms: SERIES_MAX_TERMS,
    })
}

/// ₂F₁(a, b; c; −z) for z ≥ 0.
///
/// Direct series for z ≤ 1/2; otherwise the Pfaff transformation
/// ₂F₁(a,b;c;x) = (1−x)^{−b} ₂F₁(c−a, b; c; x/(x−1)), which maps the
/// argument into [0, 1) where the series converges for the parameter
/// families used here (c − a > 0).
pub(crate) fn hyp2f1_neg(a: f64, b: f64, c: f64, z: f64) -> Result<f64, SpecFunError> {
    debug_assert!(z >= 0.0, "argument must be non-negative, got {z}");
    if z == 0.0 {
        return Ok(1.0);
    }
    if z <= 0.5 {
        hyp2f1_series(a, b, c, -z)
    } else {
        let w = z / (1.0 + z);
        Ok((1.0 + z).powf(-b) * hyp2f1_series(c - a, b, c, w)?)
    }
}

/// ψ(N, η, z) = ₂F₁(1, N − 2/η, N + 1 − 2/η, −z), the hypergeometric
/// factor of the inter-cell interference Laplace transforms.
///
/// Lies in (0, 1] for z ≥ 0 and decreases strictly in z.
pub fn gauss_2f1_interference(shift: u32, eta: f64, z: f64) -> Result<f64, SpecFunError> {
    debug_assert!(shift >= 1, "shift must be a positive integer");
    debug_assert!(eta > 2.0, "pathloss exponent must exceed 2");
    let b = shift as f64 - 2.0 / eta;
    hyp2f1_neg(1.0, b, b + 1.0, z)
}

/// PMF of the number of same-code neighbors in a Poisson-Voronoi cell,
/// P{𝒩 = n} = Γ(n+c)/(Γ(n+1)Γ(c)) · 𝒰ⁿ(λc)^c/(𝒰+λc)^{n+c},
/// evaluated in log-space so cell populations in the hundreds do not
/// overflow.
pub fn neighbor_pmf(n: u32, device_density: f64, bs_density: f64) -> f64 {
    neighbor_pmf_with_shape(n, device_density, bs_density, VORONOI_SHAPE)
}

/// `neighbor_pmf` with a configurable Voronoi shape constant.
pub fn neighbor_pmf_with_shape(n: u32, device_density: f64, bs_density: f64, c: f64) -> f64 {
    debug_assert!(bs_density > 0.0);
    debug_assert!(device_density >= 0.0);
    if device_density == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let nf = n as f64;
    let lc = bs_density * c;
    let log_p = ln_gamma(nf + c) - ln_gamma(nf + 1.0) - ln_gamma(c)
        + nf * device_density.ln()
        + c * lc.ln()
        - (nf + c) * (device_density + lc).ln();
    log_p.exp()
}

/// Adaptive quadrature configuration.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    /// Target relative error.
    pub relative_tolerance: f64,
    /// Budget of interval subdivisions before giving up.
    pub max_subdivisions: u32,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature {
            relative_tolerance: 1e-10,
            max_subdivisions: 20_000,
        }
    }
}

impl Quadrature {
    pub fn validate(&self) -> Result<(), SpecFunError> {
        if !(self.relative_tolerance > 0.0 && self.relative_tolerance <= 1e-3) {
            return Err(SpecFunError::InvalidConfig(format!(
                "relative_tolerance {} outside (0, 1e-3]",
                self.relative_tolerance
            )));
        }
        if self.max_subdivisions < 16 {
            return Err(SpecFunError::InvalidConfig(format!(
                "max_subdivisions {} below 16",
                self.max_subdivisions
            )));
        }
        Ok(())
    }
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    floor: f64,
    budget: &mut i64,
    depth: u32,
) -> Result<f64, SpecFunError> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    // Accept on the Richardson estimate, or once the refinement is at the
    // rounding floor of f64 and cannot resolve further.
    if depth > 0 && (delta.abs() <= 15.0 * eps || delta.abs() <= floor) {
        return Ok(left + right + delta / 15.0);
    }
    *budget -= 2;
    if *budget <= 0 || depth >= 60 {
        return Err(SpecFunError::ToleranceNotMet {
            tol: eps,
            max_subdivisions: 0,
        });
    }
    let l = adaptive_step(f, a, m, fa, flm, fm, left, eps * 0.5, floor, budget, depth + 1)?;
    let r = adaptive_step(f, m, b, fm, frm, fb, right, eps * 0.5, floor, budget, depth + 1)?;
    Ok(l + r)
}

fn adaptive_simpson(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    quad: &Quadrature,
) -> Result<f64, SpecFunError> {
    // Magnitude scale from a coarse composite pass so that a misleading
    // 3-point first estimate cannot wreck the relative-error target.
    let panels = 16;
    let h = (b - a) / panels as f64;
    let mut scale = 0.0;
    let mut nodes = Vec::with_capacity(panels + 1);
    for i in 0..=panels {
        nodes.push(f(a + i as f64 * h));
    }
    for i in 0..panels {
        let lo = a + i as f64 * h;
        let mid = f(lo + 0.5 * h);
        scale += simpson(lo, lo + h, nodes[i], mid, nodes[i + 1]).abs();
    }
    let fa = nodes[0];
    let fb = nodes[panels];
    let fm = f(0.5 * (a + b));
    let whole = simpson(a, b, fa, fm, fb);
    let scale = scale.max(whole.abs()).max(1e-300);
    let eps = quad.relative_tolerance * scale;
    let floor = 0.5 * f64::EPSILON * scale;
    let mut budget = quad.max_subdivisions as i64;
    adaptive_step(f, a, b, fa, fm, fb, whole, eps, floor, &mut budget, 0).map_err(|e| match e {
        SpecFunError::ToleranceNotMet { tol, .. } => SpecFunError::ToleranceNotMet {
            tol,
            max_subdivisions: quad.max_subdivisions,
        },
        other => other,
    })
}

/// Integrate `f` over [lower, upper]; `upper` may be `f64::INFINITY`.
///
/// The infinite tail is mapped to [0, 1) by y = lower + (t/(1−t))², which
/// keeps polynomially decaying integrands (decay faster than y^{−5/2})
/// integrable after substitution.
pub fn integrate(
    f: impl Fn(f64) -> f64,
    lower: f64,
    upper: f64,
    quad: &Quadrature,
) -> Result<f64, SpecFunError> {
    quad.validate()?;
    if upper.is_finite() {
        if upper <= lower {
            return Ok(0.0);
        }
        adaptive_simpson(&f, lower, upper, quad)
    } else {
        let g = |t: f64| {
            if t >= 1.0 - 1e-14 {
                return 0.0;
            }
            let om = 1.0 - t;
            let u = t / om;
            let y = lower + u * u;
            f(y) * 2.0 * t / (om * om * om)
        };
        adaptive_simpson(&g, 0.0, 1.0, quad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // High-precision reference values computed with an arbitrary-precision
    // series evaluation of the defining hypergeometric sum.
    const PSI_1_4_01: f64 = 0.968534082340389249;
    const PSI_2_4_01: f64 = 0.943977529788322519;
    const PSI_1_4_1: f64 = 0.78539816339744831;
    const PSI_1_4_100: f64 = 0.147112767430373459;
    const PSI_1_32_73: f64 = 0.526893992604175639;
    const PSI_2_55_42: f64 = 0.0512874817915802465;
    const F21_1_05_25_M73: f64 = 0.562289794792359039;
    const F21_1_0375_2375_M55: f64 = 0.357077323271125765;

    fn psi(n: u32, eta: f64, z: f64) -> f64 {
        gauss_2f1_interference(n, eta, z).unwrap()
    }

    #[test]
    fn psi_at_zero_is_one() {
        assert_eq!(psi(1, 4.0, 0.0), 1.0);
        assert_eq!(psi(2, 3.1, 0.0), 1.0);
    }

    #[test]
    fn psi_reference_values() {
        assert!((psi(1, 4.0, 0.1) - PSI_1_4_01).abs() < 1e-14);
        assert!((psi(2, 4.0, 0.1) - PSI_2_4_01).abs() < 1e-14);
        assert!((psi(1, 4.0, 1.0) - PSI_1_4_1).abs() < 1e-14);
        assert!((psi(1, 4.0, 100.0) - PSI_1_4_100).abs() < 1e-13);
        assert!((psi(1, 3.2, 7.3) - PSI_1_32_73).abs() < 1e-14);
        assert!((psi(2, 5.5, 42.0) - PSI_2_55_42).abs() < 1e-14);
    }

    #[test]
    fn general_series_reference_values() {
        let v = hyp2f1_neg(1.0, 0.5, 2.5, 7.3).unwrap();
        assert!((v - F21_1_05_25_M73).abs() < 1e-14);
        let v = hyp2f1_neg(1.0, 0.375, 2.375, 55.0).unwrap();
        assert!((v - F21_1_0375_2375_M55).abs() < 1e-14);
    }

    #[test]
    fn psi_arctan_identity_eta4() {
        // (2θ/(η−2)) ψ(1,4,θ) = √θ arctan √θ
        for &theta in &[0.01, 0.1, 1.0, 10.0, 100.0] {
            let lhs = 2.0 * theta / 2.0 * psi(1, 4.0, theta);
            let rhs = theta.sqrt() * theta.sqrt().atan();
            assert!(
                (lhs - rhs).abs() < 1e-10,
                "identity failed at theta={theta}: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn psi_monotone_and_bounded() {
        for &eta in &[2.5, 3.0, 4.0, 6.0] {
            for shift in 1..=2u32 {
                let mut prev = 1.0 + 1e-15;
                let mut z = 0.0;
                while z <= 300.0 {
                    let v = psi(shift, eta, z);
                    assert!(v > 0.0 && v <= 1.0, "psi({shift},{eta},{z}) = {v} out of range");
                    assert!(v < prev, "psi not decreasing at z={z}");
                    prev = v;
                    z = if z == 0.0 { 0.01 } else { z * 2.3 };
                }
            }
        }
    }

    #[test]
    fn neighbor_pmf_empty_process() {
        assert_eq!(neighbor_pmf(0, 0.0, 10.0), 1.0);
        assert_eq!(neighbor_pmf(3, 0.0, 10.0), 0.0);
    }

    #[test]
    fn neighbor_pmf_reference_values() {
        assert!((neighbor_pmf(0, 640.0, 10.0) - 2.73197499822337716e-5).abs() < 1e-18);
        assert!((neighbor_pmf(5, 640.0, 10.0) - 7.87871667496331073e-4).abs() < 1e-16);
        assert!((neighbor_pmf(200, 640.0, 10.0) - 1.23722402570709251e-4).abs() < 1e-16);
    }

    #[test]
    fn neighbor_pmf_normalizes_and_has_mean_load() {
        // load 𝒰/λ = 64; truncate adaptively once the tail is negligible
        let (u, l) = (640.0, 10.0);
        let mut total = 0.0;
        let mut mean = 0.0;
        let mut n = 0u32;
        loop {
            let p = neighbor_pmf(n, u, l);
            total += p;
            mean += n as f64 * p;
            if n > 64 && p < 1e-16 {
                break;
            }
            n += 1;
            assert!(n < 100_000);
        }
        assert!((total - 1.0).abs() < 1e-10, "total {total}");
        assert!((mean - 64.0).abs() < 1e-8, "mean {mean}");
    }

    #[test]
    fn integrate_exponential_tail() {
        let quad = Quadrature::default();
        let v = integrate(|y: f64| (-y).exp(), 0.0, f64::INFINITY, &quad).unwrap();
        assert!((v - 1.0).abs() < 1e-9, "got {v}");
    }

    #[test]
    fn integrate_unit_interval() {
        let quad = Quadrature::default();
        let v = integrate(|_| 1.0, 0.0, 1.0, &quad).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn integrate_interference_tail_eta4() {
        // ∫_1^∞ y/(y⁴+1) dy = π/8 (the η=4, sρ=1 inter-cell integral)
        let quad = Quadrature::default();
        let v = integrate(|y: f64| y / (y.powi(4) + 1.0), 1.0, f64::INFINITY, &quad).unwrap();
        assert!((v - std::f64::consts::PI / 8.0).abs() < 1e-9, "got {v}");
    }

    #[test]
    fn integrate_rejects_bad_config() {
        let quad = Quadrature {
            relative_tolerance: 0.5,
            max_subdivisions: 100,
        };
        assert!(integrate(|_| 1.0, 0.0, 1.0, &quad).is_err());
        let quad = Quadrature {
            relative_tolerance: 1e-8,
            max_subdivisions: 4,
        };
        assert!(integrate(|_| 1.0, 0.0, 1.0, &quad).is_err());
    }

    #[test]
    fn integrate_reports_tolerance_failure() {
        // A needle the subdivision budget cannot resolve at 1e-10.
        let quad = Quadrature {
            relative_tolerance: 1e-10,
            max_subdivisions: 16,
        };
        let needle = |y: f64| 1.0 / (1e-12 + (y - 0.318309).powi(2));
        assert!(matches!(
            integrate(needle, 0.0, 1.0, &quad),
            Err(SpecFunError::ToleranceNotMet { .. })
        ));
    }
}
