//! Discrete-time matrix-analytic solver for the Geo/PH/1 model: PH service
//! construction per scheme, QBD level blocks, the rank-one explicit R
//! matrix, boundary and marginal distributions, the stability test, and the
//! stationary performance metrics.
//!
//! Dense linear algebra throughout; phase counts never exceed a couple of
//! dozen states.

use crate::scenario::SchemeConfig;
use nalgebra::{DMatrix, DVector, RowDVector};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QbdError {
    #[error("expected {expected} success probabilities for this scheme, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("success probability {value} outside [0, 1]")]
    InvalidProbability { value: f64 },
    #[error("arrival probability {value} outside [0, 1]")]
    InvalidArrival { value: f64 },
    #[error("linear system is singular: {0}")]
    Singular(&'static str),
    #[error("R matrix spectral radius {0} is not below one (unstable regime)")]
    UnstableRegime(f64),
    #[error("operation requires a stable solution")]
    NotStable,
    #[error("R fixed-point iteration did not converge after {0} iterations")]
    RIterationDiverged(usize),
    #[error("no phase provides positive service rate")]
    ZeroServiceRate,
    #[error("waiting-time series not resolved within {max_slots} slots (cumulative mass {cumulative})")]
    WaitingTruncation { max_slots: usize, cumulative: f64 },
}

/// PH-type service representation (β, S) with the absorption column
/// s = e − S·e. Phase 0 is always the initial transmit phase, so β = e₁.
#[derive(Debug, Clone, PartialEq)]
pub struct PhService {
    beta: RowDVector<f64>,
    transient: DMatrix<f64>,
    absorb: DVector<f64>,
}

impl PhService {
    /// Construct directly from a transient matrix; β is fixed to e₁.
    pub fn from_transient(transient: DMatrix<f64>) -> Result<Self, QbdError> {
        let n = transient.nrows();
        assert_eq!(n, transient.ncols(), "transient matrix must be square");
        for value in transient.iter() {
            if !(0.0..=1.0).contains(value) {
                return Err(QbdError::InvalidProbability { value: *value });
            }
        }
        let mut absorb = DVector::zeros(n);
        for i in 0..n {
            let row_sum: f64 = transient.row(i).iter().sum();
            if row_sum > 1.0 + 1e-12 {
                return Err(QbdError::InvalidProbability { value: row_sum });
            }
            absorb[i] = (1.0 - row_sum).max(0.0);
        }
        let mut beta = RowDVector::zeros(n);
        beta[0] = 1.0;
        Ok(PhService {
            beta,
            transient,
            absorb,
        })
    }

    pub fn dim(&self) -> usize {
        self.transient.nrows()
    }

    pub fn beta(&self) -> &RowDVector<f64> {
        &self.beta
    }

    pub fn transient(&self) -> &DMatrix<f64> {
        &self.transient
    }

    pub fn absorb(&self) -> &DVector<f64> {
        &self.absorb
    }

    /// P{T = t} for the absorption time T: β S^{t−1} s.
    pub fn absorption_pmf(&self, t: u32) -> f64 {
        assert!(t >= 1);
        let mut row = self.beta.clone();
        for _ in 1..t {
            row = &row * &self.transient;
        }
        (&row * &self.absorb)[(0, 0)]
    }
}

/// Build the PH service for a scheme from its per-phase success
/// probabilities.
///
/// - baseline: a single transient state with self-loop p̄;
/// - power-ramping: superdiagonal p̄₁..p̄_{M−1} and the restart corner
///   S[M,1] = p̄_M;
/// - backoff: transmit → N deterministic deferral slots → probabilistic
///   state; the return coin q is flipped when leaving the last deferral
///   slot (on the failure transition itself when N = 0), so N = 0, q = 1
///   collapses exactly to the baseline geometric service.
pub fn build_ph(scheme: &SchemeConfig, success_probs: &[f64]) -> Result<PhService, QbdError> {
    for &p in success_probs {
        if !(0.0..=1.0).contains(&p) {
            return Err(QbdError::InvalidProbability { value: p });
        }
    }
    let expected = scheme.transmit_phase_count();
    if success_probs.len() != expected {
        return Err(QbdError::DimensionMismatch {
            expected,
            got: success_probs.len(),
        });
    }
    let transient = match scheme {
        SchemeConfig::Baseline => DMatrix::from_element(1, 1, 1.0 - success_probs[0]),
        SchemeConfig::PowerRamping { thresholds } => {
            let m = thresholds.len();
            let mut s = DMatrix::zeros(m, m);
            for (i, &p) in success_probs.iter().enumerate() {
                let pbar = 1.0 - p;
                if i + 1 < m {
                    s[(i, i + 1)] = pbar;
                } else {
                    s[(m - 1, 0)] = pbar;
                }
            }
            s
        }
        SchemeConfig::Backoff { slots, prob } => {
            let nslots = *slots as usize;
            let q = *prob;
            let n = nslots + 2;
            let pbar = 1.0 - success_probs[0];
            let mut s = DMatrix::zeros(n, n);
            if nslots == 0 {
                s[(0, 0)] = pbar * q;
                s[(0, 1)] = pbar * (1.0 - q);
            } else {
                s[(0, 1)] = pbar;
                for i in 1..nslots {
                    s[(i, i + 1)] = 1.0;
                }
                s[(nslots, 0)] = q;
                s[(nslots, n - 1)] = 1.0 - q;
            }
            s[(n - 1, 0)] = q;
            s[(n - 1, n - 1)] = 1.0 - q;
            s
        }
    };
    PhService::from_transient(transient)
}

/// Per-phase success probabilities aligned with the PH phase indexing:
/// zero for phases in which the device does not transmit (backoff deferral
/// states).
pub fn phase_success_vector(scheme: &SchemeConfig, success_probs: &[f64]) -> Vec<f64> {
    match scheme {
        SchemeConfig::Baseline => success_probs.to_vec(),
        SchemeConfig::PowerRamping { .. } => success_probs.to_vec(),
        SchemeConfig::Backoff { slots, .. } => {
            let mut v = vec![0.0; *slots as usize + 2];
            v[0] = success_probs[0];
            v
        }
    }
}

fn solve_stationary_row(a: &DMatrix<f64>) -> Result<RowDVector<f64>, QbdError> {
    let n = a.nrows();
    if n == 1 {
        return Ok(RowDVector::from_element(1, 1.0));
    }
    // π(A − I) = 0 with πe = 1: transpose, replace one equation by the
    // normalization, and solve densely.
    for replace_row in [n - 1, 0] {
        let mut m = a.transpose() - DMatrix::identity(n, n);
        for j in 0..n {
            m[(replace_row, j)] = 1.0;
        }
        let mut rhs = DVector::zeros(n);
        rhs[replace_row] = 1.0;
        if let Some(sol) = m.lu().solve(&rhs) {
            let mut pi = RowDVector::zeros(n);
            for i in 0..n {
                pi[i] = sol[i].max(0.0);
            }
            let total: f64 = pi.iter().sum();
            if (total - 1.0).abs() < 1e-8 {
                pi /= total;
                return Ok(pi);
            }
        }
    }
    Err(QbdError::Singular("stationary phase system"))
}

/// Stationary phase vector π of A = sβ + S, the saturated service chain.
pub fn drift_vector(ph: &PhService) -> RowDVector<f64> {
    let a = ph.absorb() * ph.beta() + ph.transient();
    solve_stationary_row(&a).expect("saturated phase chain of a valid PH is solvable")
}

/// Marginal phase distribution of an unstable (always-backlogged) device:
/// the same linear system as the drift vector.
pub fn unstable_phases(ph: &PhService) -> RowDVector<f64> {
    drift_vector(ph)
}

/// Outcome of the drift stability test: the chain is stable iff the
/// departure drift strictly exceeds the arrival drift.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StabilityCheck {
    pub stable: bool,
    /// π A₂ e = ā · πs
    pub departure_drift: f64,
    /// π A₀ e = a · π S e
    pub arrival_drift: f64,
}

pub fn is_stable(ph: &PhService, arrival_prob: f64) -> Result<StabilityCheck, QbdError> {
    if !(0.0..=1.0).contains(&arrival_prob) {
        return Err(QbdError::InvalidArrival {
            value: arrival_prob,
        });
    }
    let pi = drift_vector(ph);
    let service_rate = (&pi * ph.absorb())[(0, 0)];
    let departure_drift = (1.0 - arrival_prob) * service_rate;
    let arrival_drift = arrival_prob * (1.0 - service_rate);
    Ok(StabilityCheck {
        stable: departure_drift > arrival_drift,
        departure_drift,
        arrival_drift,
    })
}

/// Level-transition blocks of the QBD chain.
#[derive(Debug, Clone)]
pub struct QbdBlocks {
    /// Idle self-loop, ā.
    pub b: f64,
    /// Idle → level 1, a·β.
    pub c: RowDVector<f64>,
    /// Level 1 → idle, ā·s.
    pub e: DVector<f64>,
    /// Up one level, a·S.
    pub a0: DMatrix<f64>,
    /// Same level, a·sβ + ā·S.
    pub a1: DMatrix<f64>,
    /// Down one level, ā·sβ.
    pub a2: DMatrix<f64>,
}

pub fn qbd_blocks(ph: &PhService, arrival_prob: f64) -> Result<QbdBlocks, QbdError> {
    if !(0.0..=1.0).contains(&arrival_prob) {
        return Err(QbdError::InvalidArrival {
            value: arrival_prob,
        });
    }
    let a = arrival_prob;
    let abar = 1.0 - a;
    let sb = ph.absorb() * ph.beta();
    Ok(QbdBlocks {
        b: abar,
        c: a * ph.beta(),
        e: abar * ph.absorb(),
        a0: a * ph.transient(),
        a1: a * &sb + abar * ph.transient(),
        a2: abar * sb,
    })
}

fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Explicit R matrix. Every down-transition re-enters the phase process
/// through β, so the first-passage matrix is G = e·β exactly and the
/// minimal solution of R = A₀ + R A₁ + R² A₂ collapses to
/// R = A₀ (I − A₁ − A₀ e β)^{−1}.
pub fn solve_r_matrix(blocks: &QbdBlocks) -> Result<DMatrix<f64>, QbdError> {
    let n = blocks.a0.nrows();
    let a = 1.0 - blocks.b;
    if a == 0.0 {
        return Ok(DMatrix::zeros(n, n));
    }
    let beta = &blocks.c / a;
    let ones = DVector::from_element(n, 1.0);
    let m = DMatrix::identity(n, n) - &blocks.a1 - &blocks.a0 * ones * beta;
    let inv = m
        .try_inverse()
        .ok_or(QbdError::Singular("rank-one R system"))?;
    let r = &blocks.a0 * inv;
    let sp = spectral_radius(&r);
    if !(sp < 1.0) {
        return Err(QbdError::UnstableRegime(sp));
    }
    Ok(r)
}

/// Minimal nonnegative solution of R = A₀ + R A₁ + R² A₂ by fixed-point
/// iteration from R = 0; the verification route for `solve_r_matrix`.
pub fn solve_r_iterative(
    blocks: &QbdBlocks,
    tolerance: f64,
    max_iterations: usize,
) -> Result<DMatrix<f64>, QbdError> {
    let n = blocks.a0.nrows();
    let mut r = DMatrix::zeros(n, n);
    for _ in 0..max_iterations {
        let next = &blocks.a0 + &r * &blocks.a1 + &r * &r * &blocks.a2;
        let delta = (&next - &r).abs().max();
        r = next;
        if delta < tolerance {
            return Ok(r);
        }
    }
    Err(QbdError::RIterationDiverged(max_iterations))
}

/// Boundary solve: x₁ (I − A₁ − R A₂) = x₀ C with
/// x₀ + x₁ (I − R)^{−1} e = 1.
pub fn solve_boundary(
    blocks: &QbdBlocks,
    r: &DMatrix<f64>,
) -> Result<(f64, RowDVector<f64>), QbdError> {
    let n = blocks.a0.nrows();
    let a = 1.0 - blocks.b;
    if a == 0.0 {
        return Ok((1.0, RowDVector::zeros(n)));
    }
    let m = DMatrix::identity(n, n) - &blocks.a1 - r * &blocks.a2;
    let y_t = m
        .transpose()
        .lu()
        .solve(&blocks.c.transpose())
        .ok_or(QbdError::Singular("boundary system"))?;
    let y = y_t.transpose();
    let ones = DVector::from_element(n, 1.0);
    let i_minus_r = DMatrix::identity(n, n) - r;
    let u = i_minus_r
        .lu()
        .solve(&ones)
        .ok_or(QbdError::Singular("geometric tail accumulation"))?;
    let x0 = 1.0 / (1.0 + (&y * &u)[(0, 0)]);
    if !(x0 > 0.0 && x0 <= 1.0) {
        return Err(QbdError::UnstableRegime(1.0));
    }
    Ok((x0, x0 * y))
}

/// Marginal phase distribution Π = x₁ (I − R)^{−1}.
pub fn marginal_phases(x1: &RowDVector<f64>, r: &DMatrix<f64>) -> RowDVector<f64> {
    let n = r.nrows();
    let i_minus_r = DMatrix::identity(n, n) - r;
    let sol = i_minus_r
        .transpose()
        .lu()
        .solve(&x1.transpose())
        .expect("I − R is invertible when the spectral radius is below one");
    sol.transpose()
}

/// Full stationary result of one QBD solve.
#[derive(Debug, Clone)]
pub struct QbdSolution {
    pub stable: bool,
    /// Idle probability; zero when unstable.
    pub x0: f64,
    /// Level-1 stationary vector (zero when unstable).
    pub x1: RowDVector<f64>,
    /// Geometric level operator (zero when unstable).
    pub r: DMatrix<f64>,
    /// Marginal phase distribution Π.
    pub phases: RowDVector<f64>,
    pub departure_drift: f64,
    pub arrival_drift: f64,
}

impl QbdSolution {
    /// Stationary mass of level v ≥ 1: x_v = x₁ R^{v−1}.
    pub fn level(&self, v: usize) -> RowDVector<f64> {
        assert!(v >= 1);
        let mut x = self.x1.clone();
        for _ in 1..v {
            x = &x * &self.r;
        }
        x
    }
}

/// Solve the QBD: stable chains get the full boundary/R solution, unstable
/// chains the marginal phase system with x₀ = 0.
pub fn solve(ph: &PhService, arrival_prob: f64) -> Result<QbdSolution, QbdError> {
    let check = is_stable(ph, arrival_prob)?;
    let n = ph.dim();
    if check.stable {
        let blocks = qbd_blocks(ph, arrival_prob)?;
        let r = solve_r_matrix(&blocks)?;
        let (x0, x1) = solve_boundary(&blocks, &r)?;
        let phases = marginal_phases(&x1, &r);
        Ok(QbdSolution {
            stable: true,
            x0,
            x1,
            r,
            phases,
            departure_drift: check.departure_drift,
            arrival_drift: check.arrival_drift,
        })
    } else {
        Ok(QbdSolution {
            stable: false,
            x0: 0.0,
            x1: RowDVector::zeros(n),
            r: DMatrix::zeros(n, n),
            phases: unstable_phases(ph),
            departure_drift: check.departure_drift,
            arrival_drift: check.arrival_drift,
        })
    }
}

/// Mean number of packets in the system, E[Q_L] = x₁ (I − R)^{−2} e.
pub fn mean_queue_length(sol: &QbdSolution) -> Result<f64, QbdError> {
    if !sol.stable {
        return Err(QbdError::NotStable);
    }
    let n = sol.r.nrows();
    let i_minus_r = DMatrix::identity(n, n) - &sol.r;
    let lu = i_minus_r.lu();
    let ones = DVector::from_element(n, 1.0);
    let u = lu
        .solve(&ones)
        .ok_or(QbdError::Singular("queue-length accumulation"))?;
    let t = lu
        .solve(&u)
        .ok_or(QbdError::Singular("queue-length accumulation"))?;
    Ok((&sol.x1 * t)[(0, 0)])
}

const LEVEL_TAIL: f64 = 1e-12;
const WAIT_TAIL: f64 = 1e-10;
const WAIT_WORK_LIMIT: usize = 50_000_000;

/// Mean queueing delay E[W_q] from the waiting-time distribution
/// P{W = j} = Σ_v x_v B_j^{(v)}, where B_j^{(v)} is the probability that
/// the v-th service completion lands exactly on slot j. The B columns
/// follow the two-term recursion B_j^{(k)} = S B_{j−1}^{(k)} + sβ
/// B_{j−1}^{(k−1)}; the series stops once the cumulative mass exceeds
/// 1 − 1e-10.
pub fn mean_waiting_time(sol: &QbdSolution, ph: &PhService) -> Result<f64, QbdError> {
    mean_waiting_time_with_limit(sol, ph, 1_000_000)
}

pub fn mean_waiting_time_with_limit(
    sol: &QbdSolution,
    ph: &PhService,
    max_slots: usize,
) -> Result<f64, QbdError> {
    if !sol.stable {
        return Err(QbdError::NotStable);
    }
    let n = ph.dim();
    let x1_mass: f64 = sol.x1.iter().sum();
    if x1_mass <= 0.0 {
        return Ok(0.0);
    }
    let i_minus_r = DMatrix::identity(n, n) - &sol.r;
    let ones = DVector::from_element(n, 1.0);
    let u = i_minus_r
        .lu()
        .solve(&ones)
        .ok_or(QbdError::Singular("waiting-time level tail"))?;

    // Stationary level vectors until their remaining tail mass is
    // negligible.
    let mut levels: Vec<RowDVector<f64>> = vec![sol.x1.clone()];
    loop {
        let last = levels.last().unwrap();
        let next = last * &sol.r;
        if (&next * &u)[(0, 0)] < LEVEL_TAIL {
            break;
        }
        levels.push(next);
        if levels.len() > 200_000 {
            return Err(QbdError::WaitingTruncation {
                max_slots,
                cumulative: f64::NAN,
            });
        }
    }
    let v_max = levels.len();

    let s_mat = ph.transient();
    let s_col = ph.absorb();
    let beta = ph.beta();

    // bcols[k-1] = B_j^{(k)} for the current slot j.
    let mut bcols: Vec<DVector<f64>> = vec![s_col.clone()];
    let mut cumulative = sol.x0;
    let mut mean = 0.0;
    let mut work = 0usize;
    let mut j = 1usize;
    loop {
        let kmax = bcols.len().min(v_max);
        let mut pw = 0.0;
        for k in 1..=kmax {
            pw += (&levels[k - 1] * &bcols[k - 1])[(0, 0)];
        }
        mean += j as f64 * pw;
        cumulative += pw;
        if 1.0 - cumulative < WAIT_TAIL {
            return Ok(mean);
        }
        work += kmax;
        if j >= max_slots || work >= WAIT_WORK_LIMIT {
            return Err(QbdError::WaitingTruncation {
                max_slots,
                cumulative,
            });
        }
        // Advance every column one slot; a new top column appears while
        // k ≤ v_max is still useful.
        let new_top = if bcols.len() < v_max {
            let top = bcols.last().unwrap();
            Some(s_col * (beta * top)[(0, 0)])
        } else {
            None
        };
        for k in (0..bcols.len()).rev() {
            let mut next = s_mat * &bcols[k];
            if k > 0 {
                next += s_col * (beta * &bcols[k - 1])[(0, 0)];
            }
            bcols[k] = next;
        }
        if let Some(top) = new_top {
            bcols.push(top);
        }
        j += 1;
    }
}

/// E[W_q] through the first-moment identity: conditioned on arriving at
/// level v in phase i, the wait is the remaining service of the packet in
/// progress plus v − 1 full services, so
/// E[W_q] = Π μ + (β μ)(E[Q_L] − Π e) with μ = (I − S)^{−1} e.
/// Algebraically identical to `mean_waiting_time` (which resolves the full
/// distribution); exact to rounding, with no series truncation.
pub fn mean_waiting_time_moment(
    sol: &QbdSolution,
    ph: &PhService,
) -> Result<f64, QbdError> {
    if !sol.stable {
        return Err(QbdError::NotStable);
    }
    let n = ph.dim();
    let i_minus_s = DMatrix::identity(n, n) - ph.transient();
    let ones = DVector::from_element(n, 1.0);
    let mu = i_minus_s
        .lu()
        .solve(&ones)
        .ok_or(QbdError::Singular("mean service time"))?;
    let mu_beta = (ph.beta() * &mu)[(0, 0)];
    let eq = mean_queue_length(sol)?;
    let busy: f64 = sol.phases.iter().sum();
    Ok((&sol.phases * &mu)[(0, 0)] + mu_beta * (eq - busy))
}

/// Brute-force reference: build the full level-truncated chain (cap L,
/// top level reflecting) and solve its stationary distribution directly.
/// Exists to validate the matrix-analytic solution path; O((Ln)³), desk
/// scale only.
pub fn truncated_chain_reference(
    ph: &PhService,
    arrival_prob: f64,
    levels: usize,
) -> Result<(f64, Vec<RowDVector<f64>>), QbdError> {
    assert!(levels >= 2);
    let blocks = qbd_blocks(ph, arrival_prob)?;
    let n = ph.dim();
    let size = 1 + levels * n;
    let mut p = DMatrix::zeros(size, size);
    p[(0, 0)] = blocks.b;
    for j in 0..n {
        p[(0, 1 + j)] = blocks.c[j];
    }
    for lvl in 1..=levels {
        let row0 = 1 + (lvl - 1) * n;
        for i in 0..n {
            if lvl == 1 {
                p[(row0 + i, 0)] = blocks.e[i];
            } else {
                let down = 1 + (lvl - 2) * n;
                for j in 0..n {
                    p[(row0 + i, down + j)] = blocks.a2[(i, j)];
                }
            }
            for j in 0..n {
                p[(row0 + i, row0 + j)] = blocks.a1[(i, j)];
                if lvl == levels {
                    // reflect the up-transitions at the cap
                    p[(row0 + i, row0 + j)] += blocks.a0[(i, j)];
                } else {
                    p[(row0 + i, row0 + n + j)] = blocks.a0[(i, j)];
                }
            }
        }
    }
    let mut m = p.transpose() - DMatrix::identity(size, size);
    for j in 0..size {
        m[(size - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(size);
    rhs[size - 1] = 1.0;
    let sol = m
        .lu()
        .solve(&rhs)
        .ok_or(QbdError::Singular("truncated chain"))?;
    let x0 = sol[0];
    let mut out = Vec::with_capacity(levels);
    for lvl in 1..=levels {
        let mut row = RowDVector::zeros(n);
        for j in 0..n {
            row[j] = sol[1 + (lvl - 1) * n + j];
        }
        out.push(row);
    }
    Ok((x0, out))
}

/// Mean service delay 𝒟 (busy slots per delivered packet) and the
/// conditional success probability P_success = Σ_m Π_m p_m / (1 − x₀).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ServiceDelay {
    pub mean_attempts: f64,
    pub success_prob: f64,
}

pub fn mean_service_delay(
    phases: &[f64],
    x0: f64,
    phase_success: &[f64],
) -> Result<ServiceDelay, QbdError> {
    assert_eq!(phases.len(), phase_success.len());
    let rate: f64 = phases
        .iter()
        .zip(phase_success)
        .map(|(pi, p)| pi * p)
        .sum();
    if rate <= 0.0 {
        return Err(QbdError::ZeroServiceRate);
    }
    Ok(ServiceDelay {
        mean_attempts: (1.0 - x0) / rate,
        success_prob: rate / (1.0 - x0),
    })
}
