//! Independent system-level simulator: BSs and devices drawn as Poisson
//! point processes over a square window, nearest-BS association with full
//! channel-inversion power control, per-slot protocol state machines,
//! fresh Rayleigh fading on every link every slot, and SINR-capture
//! reception against same-code interference.
//!
//! Devices everywhere in the window generate interference; statistics are
//! collected only for devices inside the measurement disk around the
//! origin, which keeps the measured SINRs free of window-edge bias.
//! Interference is summed over same-code transmitters within
//! `interference_range_km` of the receiving BS (plus, always, the
//! transmitter's own serving BS); with the default range the truncated
//! tail is far below the noise floor.
//!
//! Determinism: every realization runs on its own counter-derived RNG
//! stream and all draws happen in a fixed device order, so a seed pins the
//! full trajectory bit-for-bit regardless of thread count.

use crate::scenario::{NetworkScenario, SchemeConfig};
use crate::sgeom::ActivityProfile;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, Poisson};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("simulation config: {0}")]
    InvalidConfig(String),
    #[error("activity profile does not match scheme: {0}")]
    ProfileMismatch(String),
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SimConfig {
    /// Side length of the square deployment window, km.
    pub window_km: f64,
    /// Radius of the measurement disk around the origin, km.
    pub measure_radius_km: f64,
    pub warmup_slots: u32,
    pub measured_slots: u32,
    pub realizations: u32,
    pub seed: u64,
    /// Interference accounting radius around each receiving BS, km.
    pub interference_range_km: f64,
    /// Queue length cap; reaching it flags overflow and suppresses the
    /// queue statistics of the run.
    pub queue_cap: u32,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            window_km: 10.0,
            measure_radius_km: 1.0,
            warmup_slots: 500,
            measured_slots: 10_000,
            realizations: 20,
            seed: 1,
            interference_range_km: 3.0,
            queue_cap: 10_000,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.window_km > 0.0) {
            return Err(SimError::InvalidConfig("window_km must be positive".into()));
        }
        if !(self.measure_radius_km > 0.0 && self.measure_radius_km < self.window_km / 2.0) {
            return Err(SimError::InvalidConfig(
                "measure_radius_km must be positive and below window_km/2".into(),
            ));
        }
        if self.measured_slots < 1 || self.realizations < 1 {
            return Err(SimError::InvalidConfig(
                "measured_slots and realizations must be at least 1".into(),
            ));
        }
        if !(self.interference_range_km > 0.0) {
            return Err(SimError::InvalidConfig(
                "interference_range_km must be positive".into(),
            ));
        }
        if self.queue_cap < 1 {
            return Err(SimError::InvalidConfig("queue_cap must be at least 1".into()));
        }
        Ok(())
    }
}

/// Mean and across-realization standard error of one statistic.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

fn aggregate(values: &[f64]) -> Option<Estimate> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std_error = if values.len() > 1 {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        f64::INFINITY
    };
    Some(Estimate { mean, std_error })
}

/// Aggregated simulator output.
#[derive(Debug, Clone, Serialize)]
pub struct SimStats {
    /// Success probability over measured transmission attempts.
    pub success_prob: Option<Estimate>,
    /// Per transmit-phase success probability (one entry per ramping
    /// threshold; a single entry otherwise).
    pub per_phase_success: Vec<Option<Estimate>>,
    /// Mean packets in the buffer (including the one in service).
    pub mean_queue_length: Option<Estimate>,
    /// Mean queueing delay in the boundary convention of the analytical
    /// recursion: the arrival slot counts toward the wait, including a
    /// head departure happening in that same slot.
    pub mean_waiting_time: Option<Estimate>,
    /// Mean slots from arrival to departure.
    pub mean_sojourn: Option<Estimate>,
    /// Busy slots per delivered packet (the service-delay metric 𝒟).
    pub service_slots_per_packet: Option<Estimate>,
    /// Transmission attempts per delivered packet.
    pub attempts_per_packet: Option<Estimate>,
    /// Fraction of device-slots with an empty buffer (x₀).
    pub fraction_idle: Option<Estimate>,
    /// Mean slots from a failure to the next attempt (backoff gap).
    pub mean_backoff_gap: Option<Estimate>,
    pub queue_overflow: bool,
    pub rejected_realizations: u32,
    pub mean_measured_devices: f64,
}

/// Per-slot aggregate trace row (debugging aid, bounded length).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TraceRow {
    pub slot: u32,
    pub transmitters: u32,
    pub measured_attempts: u32,
    pub measured_successes: u32,
    pub measured_mean_queue: f64,
}

/// Interference/measurement accounting rule: every device inside the
/// window contributes interference, statistics come only from the interior
/// measurement disk.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EdgePolicy {
    pub window_km: f64,
    pub measure_radius_km: f64,
}

pub fn edge_policy(window_km: f64, measure_radius_km: f64) -> EdgePolicy {
    EdgePolicy {
        window_km,
        measure_radius_km,
    }
}

impl EdgePolicy {
    pub fn contributes_interference(&self, x: f64, y: f64) -> bool {
        let h = self.window_km / 2.0;
        x.abs() <= h && y.abs() <= h
    }

    pub fn is_measured(&self, x: f64, y: f64) -> bool {
        x * x + y * y <= self.measure_radius_km * self.measure_radius_km
    }
}

enum Mode<'a> {
    Dynamics,
    Frozen(&'a ActivityProfile),
}

struct Device {
    x: f64,
    y: f64,
    bs: u32,
    r_eta: f64,
    measured: bool,
    queue_len: u32,
    phase: u16,
    arrivals: VecDeque<u32>,
    untracked: u32,
    last_fail: i64,
    last_departure: i64,
}

const TRACK_CAP: usize = 64;

#[derive(Default, Clone)]
struct RealizationOut {
    attempts: u64,
    successes: u64,
    phase_attempts: Vec<u64>,
    phase_successes: Vec<u64>,
    queue_sum: f64,
    queue_obs: u64,
    idle_obs: u64,
    waiting_sum: f64,
    waiting_n: u64,
    sojourn_sum: f64,
    sojourn_n: u64,
    busy_slots: u64,
    departures: u64,
    gap_sum: f64,
    gap_n: u64,
    overflow: bool,
    measured_devices: u64,
    rejected: u32,
    trace: Vec<TraceRow>,
}

struct BsGrid {
    cell: f64,
    nx: i64,
    half: f64,
    lists: Vec<Vec<u32>>,
}

impl BsGrid {
    fn build(pos: &[(f64, f64)], window: f64) -> BsGrid {
        let nx = ((pos.len() as f64).sqrt().ceil() as i64).max(1);
        let cell = window / nx as f64;
        let mut lists = vec![Vec::new(); (nx * nx) as usize];
        let half = window / 2.0;
        for (i, &(x, y)) in pos.iter().enumerate() {
            let cx = (((x + half) / cell) as i64).clamp(0, nx - 1);
            let cy = (((y + half) / cell) as i64).clamp(0, nx - 1);
            lists[(cy * nx + cx) as usize].push(i as u32);
        }
        BsGrid {
            cell,
            nx,
            half,
            lists,
        }
    }

    fn nearest(&self, x: f64, y: f64, pos: &[(f64, f64)]) -> (u32, f64) {
        let cx = (((x + self.half) / self.cell) as i64).clamp(0, self.nx - 1);
        let cy = (((y + self.half) / self.cell) as i64).clamp(0, self.nx - 1);
        let mut best = (u32::MAX, f64::INFINITY);
        let mut ring = 0i64;
        loop {
            // cells at Chebyshev distance `ring` are at least (ring−1)·cell
            // away from any point of the center cell
            if best.0 != u32::MAX {
                let reach = (ring - 1).max(0) as f64 * self.cell;
                if reach * reach > best.1 {
                    return best;
                }
            }
            let mut any_cell = false;
            for dy in -ring..=ring {
                for dx in -ring..=ring {
                    if dx.abs() != ring && dy.abs() != ring {
                        continue;
                    }
                    let gx = cx + dx;
                    let gy = cy + dy;
                    if gx < 0 || gy < 0 || gx >= self.nx || gy >= self.nx {
                        continue;
                    }
                    any_cell = true;
                    for &b in &self.lists[(gy * self.nx + gx) as usize] {
                        let (bx, by) = pos[b as usize];
                        let d2 = (x - bx) * (x - bx) + (y - by) * (y - by);
                        if d2 < best.1 {
                            best = (b, d2);
                        }
                    }
                }
            }
            ring += 1;
            if !any_cell && ring > 2 * self.nx {
                return best;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn simulate_realization(
    s: &NetworkScenario,
    scheme: &SchemeConfig,
    mode: &Mode,
    sim: &SimConfig,
    stream: u64,
    trace_limit: u32,
) -> RealizationOut {
    let mut rng = ChaCha8Rng::seed_from_u64(sim.seed);
    rng.set_stream(stream);

    let window = sim.window_km;
    let area = window * window;
    let half = window / 2.0;
    let eta = s.pathloss_exponent;
    let eta_is_4 = (eta - 4.0).abs() < 1e-12;
    let half_eta = eta / 2.0;
    let nz = s.codes_per_bs as usize;
    let theta = s.sinr_threshold;
    let noise = s.noise_power;
    let policy = edge_policy(window, sim.measure_radius_km);

    let mut out = RealizationOut::default();
    let n_transmit_phases = scheme.transmit_phase_count();
    out.phase_attempts = vec![0; n_transmit_phases];
    out.phase_successes = vec![0; n_transmit_phases];

    // Geometry: redraw until at least one BS exists so power control is
    // always feasible.
    let mut bs_pos: Vec<(f64, f64)>;
    loop {
        let n_bs = Poisson::new(s.bs_density * area)
            .map(|d| d.sample(&mut rng) as usize)
            .unwrap_or(0);
        if n_bs >= 1 {
            bs_pos = Vec::with_capacity(n_bs);
            for _ in 0..n_bs {
                let x = rng.random::<f64>() * window - half;
                let y = rng.random::<f64>() * window - half;
                bs_pos.push((x, y));
            }
            break;
        }
        out.rejected += 1;
    }
    let grid = BsGrid::build(&bs_pos, window);

    let n_dev = if s.device_density > 0.0 {
        Poisson::new(s.device_density * area)
            .map(|d| d.sample(&mut rng) as usize)
            .unwrap_or(0)
    } else {
        0
    };
    let mut devices: Vec<Device> = Vec::with_capacity(n_dev);
    let mut measured_idx: Vec<u32> = Vec::new();
    for i in 0..n_dev {
        let x = rng.random::<f64>() * window - half;
        let y = rng.random::<f64>() * window - half;
        let (bs, d2) = grid.nearest(x, y, &bs_pos);
        let r_eta = d2.powf(half_eta);
        let measured = policy.is_measured(x, y);
        if measured {
            measured_idx.push(i as u32);
        }
        devices.push(Device {
            x,
            y,
            bs,
            r_eta,
            measured,
            queue_len: 0,
            phase: 0,
            arrivals: VecDeque::new(),
            untracked: 0,
            last_fail: -1,
            last_departure: -1,
        });
    }
    out.measured_devices = measured_idx.len() as u64;

    let (thresholds, backoff): (&[f64], Option<(u32, f64)>) = match scheme {
        SchemeConfig::Baseline => (std::slice::from_ref(&s.power_threshold), None),
        SchemeConfig::PowerRamping { thresholds } => (thresholds.as_slice(), None),
        SchemeConfig::Backoff { slots, prob } => {
            (std::slice::from_ref(&s.power_threshold), Some((*slots, *prob)))
        }
    };

    // Per-slot scratch structures, allocated once.
    let range = sim.interference_range_km;
    let range2 = range * range;
    let cells = ((window / range).ceil() as i64).max(1);
    let cell_size = window / cells as f64;
    let n_cells = (cells * cells) as usize;
    let mut code_grid: Vec<Vec<u32>> = vec![Vec::new(); nz * n_cells];
    let mut touched_cells: Vec<u32> = Vec::new();
    let mut rec_lookup: Vec<u32> = vec![u32::MAX; bs_pos.len() * nz];
    let mut touched_keys: Vec<u32> = Vec::new();
    struct Receiver {
        bs: u32,
        acc: f64,
    }
    let mut receivers: Vec<Receiver> = Vec::new();
    let mut transmitters: Vec<(u32, u16, u16)> = Vec::new(); // device, code, phase
    let mut own_w: Vec<f64> = Vec::new();

    let cell_of = |x: f64, y: f64| -> i64 {
        let cx = (((x + half) / cell_size) as i64).clamp(0, cells - 1);
        let cy = (((y + half) / cell_size) as i64).clamp(0, cells - 1);
        cy * cells + cx
    };

    let total_slots = sim.warmup_slots as u64 + sim.measured_slots as u64;
    let arrival = s.arrival_prob;

    for t in 0..total_slots {
        let measuring = t >= sim.warmup_slots as u64;
        let slot_stamp = t as u32;

        // -- transmit decisions ------------------------------------------
        transmitters.clear();
        for (i, dev) in devices.iter_mut().enumerate() {
            let phase = match mode {
                Mode::Dynamics => {
                    if dev.queue_len == 0 {
                        continue;
                    }
                    if measuring && dev.measured {
                        out.busy_slots += 1;
                    }
                    match scheme {
                        SchemeConfig::Backoff { .. } if dev.phase != 0 => continue,
                        _ => dev.phase,
                    }
                }
                Mode::Frozen(profile) => match profile {
                    ActivityProfile::Baseline { busy_prob } => {
                        if rng.random::<f64>() < *busy_prob {
                            0
                        } else {
                            continue;
                        }
                    }
                    ActivityProfile::Backoff { transmit_prob } => {
                        if rng.random::<f64>() < *transmit_prob {
                            0
                        } else {
                            continue;
                        }
                    }
                    ActivityProfile::Ramping { phase_probs } => {
                        let u = rng.random::<f64>();
                        let mut cum = 0.0;
                        let mut chosen = None;
                        for (k, p) in phase_probs.iter().enumerate() {
                            cum += p;
                            if u < cum {
                                chosen = Some(k as u16);
                                break;
                            }
                        }
                        match chosen {
                            Some(k) => k,
                            None => continue,
                        }
                    }
                },
            };
            if measuring && dev.measured && dev.last_fail >= 0 {
                out.gap_sum += (t as i64 - dev.last_fail) as f64;
                out.gap_n += 1;
                dev.last_fail = -1;
            }
            let code = rng.random_range(0..nz) as u16;
            transmitters.push((i as u32, code, phase));
        }

        // -- receiver registry and spatial index -------------------------
        for key in touched_keys.drain(..) {
            rec_lookup[key as usize] = u32::MAX;
        }
        for c in touched_cells.drain(..) {
            code_grid[c as usize].clear();
        }
        receivers.clear();
        for &(i, code, _) in &transmitters {
            let bs = devices[i as usize].bs;
            let key = bs as usize * nz + code as usize;
            if rec_lookup[key] == u32::MAX {
                rec_lookup[key] = receivers.len() as u32;
                touched_keys.push(key as u32);
                let (bx, by) = bs_pos[bs as usize];
                let gcell = code_of_cell(code as usize, cell_of(bx, by), n_cells);
                if code_grid[gcell].is_empty() {
                    touched_cells.push(gcell as u32);
                }
                code_grid[gcell].push(receivers.len() as u32);
                receivers.push(Receiver { bs, acc: 0.0 });
            }
        }

        // -- interference contributions -----------------------------------
        own_w.clear();
        for &(i, code, phase) in &transmitters {
            let dev = &devices[i as usize];
            let p_tx = thresholds[phase as usize] * dev.r_eta;
            let own_key = dev.bs as usize * nz + code as usize;
            let own_rec = rec_lookup[own_key];
            let mut own = -1.0f64;
            let dcx = (((dev.x + half) / cell_size) as i64).clamp(0, cells - 1);
            let dcy = (((dev.y + half) / cell_size) as i64).clamp(0, cells - 1);
            for gy in (dcy - 1).max(0)..=(dcy + 1).min(cells - 1) {
                for gx in (dcx - 1).max(0)..=(dcx + 1).min(cells - 1) {
                    let gcell = code_of_cell(code as usize, gy * cells + gx, n_cells);
                    for &rid in &code_grid[gcell] {
                        let rec = &mut receivers[rid as usize];
                        let (bx, by) = bs_pos[rec.bs as usize];
                        let d2 = (dev.x - bx) * (dev.x - bx) + (dev.y - by) * (dev.y - by);
                        let is_own = rid == own_rec;
                        if d2 <= range2 || is_own {
                            let gain: f64 = rng.sample(Exp1);
                            let loss = if eta_is_4 { d2 * d2 } else { d2.powf(half_eta) };
                            let w = p_tx * gain / loss;
                            rec.acc += w;
                            if is_own {
                                own = w;
                            }
                        }
                    }
                }
            }
            if own < 0.0 {
                // serving BS beyond the accounting range (practically
                // impossible at realistic densities, handled anyway)
                let rec = &mut receivers[own_rec as usize];
                let (bx, by) = bs_pos[rec.bs as usize];
                let d2 = (dev.x - bx) * (dev.x - bx) + (dev.y - by) * (dev.y - by);
                let gain: f64 = rng.sample(Exp1);
                let loss = if eta_is_4 { d2 * d2 } else { d2.powf(half_eta) };
                own = p_tx * gain / loss;
                rec.acc += own;
            }
            own_w.push(own);
        }

        // -- SINR, departures, protocol transitions -----------------------
        let mut trace_attempts = 0u32;
        let mut trace_successes = 0u32;
        for (idx, &(i, code, phase)) in transmitters.iter().enumerate() {
            let dev = &mut devices[i as usize];
            let own_key = dev.bs as usize * nz + code as usize;
            let rec = &receivers[rec_lookup[own_key] as usize];
            let interference = (rec.acc - own_w[idx]).max(0.0);
            let success = own_w[idx] > theta * (noise + interference);
            let count_stats = measuring && dev.measured;
            if count_stats {
                out.attempts += 1;
                out.phase_attempts[phase as usize] += 1;
                if success {
                    out.successes += 1;
                    out.phase_successes[phase as usize] += 1;
                }
            }
            if t < trace_limit as u64 && stream == 0 && dev.measured {
                trace_attempts += 1;
                if success {
                    trace_successes += 1;
                }
            }
            if matches!(mode, Mode::Frozen(_)) {
                continue;
            }
            if success {
                dev.queue_len -= 1;
                dev.last_departure = t as i64;
                if count_stats {
                    out.departures += 1;
                }
                if let Some(stamp) = dev.arrivals.pop_front() {
                    if count_stats {
                        out.sojourn_sum += (slot_stamp - stamp) as f64;
                        out.sojourn_n += 1;
                    }
                } else if dev.untracked > 0 {
                    dev.untracked -= 1;
                }
                dev.phase = 0;
                if dev.queue_len > 0 {
                    // The next head enters service at t+1. Waiting follows
                    // the boundary convention of the analytical recursion:
                    // the arrival slot counts, so W = t − arrival + 1.
                    if let Some(&stamp) = dev.arrivals.front() {
                        if count_stats {
                            out.waiting_sum += (slot_stamp - stamp) as f64 + 1.0;
                            out.waiting_n += 1;
                        }
                    }
                }
            } else {
                dev.last_fail = t as i64;
                match scheme {
                    SchemeConfig::Baseline => {}
                    SchemeConfig::PowerRamping { thresholds } => {
                        dev.phase = if dev.phase as usize + 1 == thresholds.len() {
                            0
                        } else {
                            dev.phase + 1
                        };
                    }
                    SchemeConfig::Backoff { slots, prob } => {
                        if *slots == 0 {
                            if *prob < 1.0 {
                                dev.phase = if rng.random::<f64>() < *prob { 0 } else { 1 };
                            }
                        } else {
                            dev.phase = 1;
                        }
                    }
                }
            }
        }

        // -- backoff deferral-state progression ---------------------------
        if let (Mode::Dynamics, Some((nslots, q))) = (mode, backoff) {
            for dev in devices.iter_mut() {
                if dev.queue_len == 0 || dev.phase == 0 {
                    continue;
                }
                let ph = dev.phase as u32;
                if nslots >= 1 && ph < nslots {
                    dev.phase += 1;
                } else {
                    // last deferral slot or the probabilistic state
                    let back_to_transmit = q >= 1.0 || rng.random::<f64>() < q;
                    dev.phase = if back_to_transmit {
                        0
                    } else {
                        (nslots + 1) as u16
                    };
                }
            }
        }

        // -- arrivals ------------------------------------------------------
        if matches!(mode, Mode::Dynamics) {
            for dev in devices.iter_mut() {
                if rng.random::<f64>() < arrival {
                    if dev.queue_len == 0 {
                        dev.phase = 0;
                        if measuring && dev.measured {
                            // W = 1 when a head departed in this very slot
                            // (the boundary level before service was 1),
                            // 0 when the device was idle all slot.
                            if dev.last_departure == t as i64 {
                                out.waiting_sum += 1.0;
                            }
                            out.waiting_n += 1;
                        }
                    }
                    if dev.queue_len < sim.queue_cap {
                        dev.queue_len += 1;
                        if dev.untracked == 0 && dev.arrivals.len() < TRACK_CAP {
                            dev.arrivals.push_back(slot_stamp);
                        } else {
                            dev.untracked += 1;
                        }
                    } else {
                        out.overflow = true;
                    }
                }
            }
        }

        // -- end-of-slot measured state -----------------------------------
        let mut trace_queue = 0.0;
        if (measuring || t < trace_limit as u64) && matches!(mode, Mode::Dynamics) {
            for &i in &measured_idx {
                let q = devices[i as usize].queue_len;
                if measuring {
                    out.queue_sum += q as f64;
                    out.queue_obs += 1;
                    if q == 0 {
                        out.idle_obs += 1;
                    }
                }
                trace_queue += q as f64;
            }
        }
        if t < trace_limit as u64 && stream == 0 {
            out.trace.push(TraceRow {
                slot: slot_stamp,
                transmitters: transmitters.len() as u32,
                measured_attempts: trace_attempts,
                measured_successes: trace_successes,
                measured_mean_queue: if measured_idx.is_empty() {
                    0.0
                } else {
                    trace_queue / measured_idx.len() as f64
                },
            });
        }
    }
    out
}

#[inline]
fn code_of_cell(code: usize, cell: i64, n_cells: usize) -> usize {
    code * n_cells + cell as usize
}

fn check_profile(scheme: &SchemeConfig, profile: &ActivityProfile) -> Result<(), SimError> {
    profile
        .validate()
        .map_err(|e| SimError::ProfileMismatch(e.to_string()))?;
    match (scheme, profile) {
        (SchemeConfig::Baseline, ActivityProfile::Baseline { .. }) => Ok(()),
        (SchemeConfig::Backoff { .. }, ActivityProfile::Backoff { .. }) => Ok(()),
        (SchemeConfig::PowerRamping { thresholds }, ActivityProfile::Ramping { phase_probs }) => {
            if thresholds.len() == phase_probs.len() {
                Ok(())
            } else {
                Err(SimError::ProfileMismatch(format!(
                    "{} thresholds vs {} phase probabilities",
                    thresholds.len(),
                    phase_probs.len()
                )))
            }
        }
        _ => Err(SimError::ProfileMismatch(
            "profile variant does not match scheme variant".into(),
        )),
    }
}

fn run_mode(
    s: &NetworkScenario,
    scheme: &SchemeConfig,
    mode: Mode,
    sim: &SimConfig,
    trace_limit: u32,
) -> Result<(SimStats, Vec<TraceRow>), SimError> {
    s.validate()
        .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    scheme
        .validate()
        .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    sim.validate()?;

    let runs: Vec<RealizationOut> = (0..sim.realizations as u64)
        .into_par_iter()
        .map(|r| simulate_realization(s, scheme, &mode, sim, r, trace_limit))
        .collect();

    let ratio = |num: u64, den: u64| -> Option<f64> {
        if den > 0 {
            Some(num as f64 / den as f64)
        } else {
            None
        }
    };
    let fratio = |num: f64, den: u64| -> Option<f64> {
        if den > 0 {
            Some(num / den as f64)
        } else {
            None
        }
    };

    let collect = |f: &dyn Fn(&RealizationOut) -> Option<f64>| -> Vec<f64> {
        runs.iter().filter_map(f).collect()
    };

    let n_phases = scheme.transmit_phase_count();
    let per_phase_success = (0..n_phases)
        .map(|m| {
            aggregate(&collect(&|r: &RealizationOut| {
                ratio(r.phase_successes[m], r.phase_attempts[m])
            }))
        })
        .collect();

    let overflow = runs.iter().any(|r| r.overflow);
    let dynamics = matches!(mode, Mode::Dynamics);
    let stats = SimStats {
        success_prob: aggregate(&collect(&|r| ratio(r.successes, r.attempts))),
        per_phase_success,
        mean_queue_length: if dynamics && !overflow {
            aggregate(&collect(&|r| fratio(r.queue_sum, r.queue_obs)))
        } else {
            None
        },
        mean_waiting_time: if dynamics && !overflow {
            aggregate(&collect(&|r| fratio(r.waiting_sum, r.waiting_n)))
        } else {
            None
        },
        mean_sojourn: if dynamics && !overflow {
            aggregate(&collect(&|r| fratio(r.sojourn_sum, r.sojourn_n)))
        } else {
            None
        },
        service_slots_per_packet: if dynamics {
            aggregate(&collect(&|r| fratio(r.busy_slots as f64, r.departures)))
        } else {
            None
        },
        attempts_per_packet: if dynamics {
            aggregate(&collect(&|r| fratio(r.attempts as f64, r.departures)))
        } else {
            None
        },
        fraction_idle: if dynamics {
            aggregate(&collect(&|r| fratio(r.idle_obs as f64, r.queue_obs)))
        } else {
            None
        },
        mean_backoff_gap: if dynamics {
            aggregate(&collect(&|r| fratio(r.gap_sum, r.gap_n)))
        } else {
            None
        },
        queue_overflow: overflow,
        rejected_realizations: runs.iter().map(|r| r.rejected).sum(),
        mean_measured_devices: runs.iter().map(|r| r.measured_devices as f64).sum::<f64>()
            / runs.len() as f64,
    };
    let trace = runs
        .first()
        .map(|r| r.trace.clone())
        .unwrap_or_default();
    Ok((stats, trace))
}

/// Full queue-dynamics simulation of one scheme.
pub fn run(s: &NetworkScenario, scheme: &SchemeConfig, sim: &SimConfig) -> Result<SimStats, SimError> {
    run_mode(s, scheme, Mode::Dynamics, sim, 0).map(|(stats, _)| stats)
}

/// `run` plus a bounded per-slot trace of realization 0.
pub fn run_traced(
    s: &NetworkScenario,
    scheme: &SchemeConfig,
    sim: &SimConfig,
    trace_slots: u32,
) -> Result<(SimStats, Vec<TraceRow>), SimError> {
    run_mode(s, scheme, Mode::Dynamics, sim, trace_slots)
}

/// Simulation with queue dynamics replaced by i.i.d. per-slot activity:
/// the direct oracle for the closed-form success probabilities.
pub fn run_frozen_activity(
    s: &NetworkScenario,
    scheme: &SchemeConfig,
    profile: &ActivityProfile,
    sim: &SimConfig,
) -> Result<SimStats, SimError> {
    check_profile(scheme, profile)?;
    run_mode(s, scheme, Mode::Frozen(profile), sim, 0).map(|(stats, _)| stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{db_to_linear, load_scenario};

    fn lean_scenario(alpha: f64, theta_db: f64, arrival: f64) -> NetworkScenario {
        // small code count and BS density keep the device count low at a
        // given alpha without changing any per-code statistics
        let mut s = load_scenario(
            "bs_density = 5\ndevice_density = 40\ncodes_per_bs = 2\n\
             pathloss_exponent = 4\npower_threshold = -90 dBm\nnoise = -90 dBm\n\
             sinr_threshold = -10 dB\narrival_prob = 0.1\n",
        )
        .unwrap()
        .scenario;
        s.device_density = alpha * s.bs_density * s.codes_per_bs as f64;
        s.sinr_threshold = db_to_linear(theta_db);
        s.arrival_prob = arrival;
        s
    }

    fn lean_sim(seed: u64) -> SimConfig {
        SimConfig {
            window_km: 6.0,
            measure_radius_km: 1.0,
            warmup_slots: 200,
            measured_slots: 800,
            realizations: 3,
            seed,
            interference_range_km: 2.0,
            queue_cap: 2_000,
        }
    }

    #[test]
    fn config_validation() {
        let mut sim = SimConfig::default();
        sim.measure_radius_km = 6.0;
        assert!(sim.validate().is_err());
        let mut sim = SimConfig::default();
        sim.measured_slots = 0;
        assert!(sim.validate().is_err());
    }

    #[test]
    fn edge_policy_geometry() {
        let policy = edge_policy(10.0, 1.0);
        assert!(policy.contributes_interference(4.9, -4.9));
        assert!(!policy.contributes_interference(5.1, 0.0));
        assert!(policy.is_measured(0.6, 0.6));
        assert!(!policy.is_measured(0.9, 0.9));
    }

    #[test]
    fn deterministic_given_seed() {
        let s = lean_scenario(2.0, -10.0, 0.1);
        let sim = lean_sim(42);
        let a = run(&s, &SchemeConfig::Baseline, &sim).unwrap();
        let b = run(&s, &SchemeConfig::Baseline, &sim).unwrap();
        assert_eq!(
            a.success_prob.unwrap().mean.to_bits(),
            b.success_prob.unwrap().mean.to_bits()
        );
        assert_eq!(
            a.mean_queue_length.unwrap().mean.to_bits(),
            b.mean_queue_length.unwrap().mean.to_bits()
        );
        let c = run(&s, &SchemeConfig::Baseline, &SimConfig { seed: 43, ..sim }).unwrap();
        assert_ne!(
            a.success_prob.unwrap().mean.to_bits(),
            c.success_prob.unwrap().mean.to_bits()
        );
    }

    #[test]
    fn zero_arrivals_mean_idle_network() {
        let s = lean_scenario(2.0, -10.0, 0.0);
        let sim = lean_sim(7);
        let stats = run(&s, &SchemeConfig::Baseline, &sim).unwrap();
        assert!(stats.success_prob.is_none());
        assert_eq!(stats.fraction_idle.unwrap().mean, 1.0);
        assert_eq!(stats.mean_queue_length.unwrap().mean, 0.0);
    }

    #[test]
    fn noise_only_matches_closed_form() {
        // interference off via zero activity in a frozen run
        let s = lean_scenario(2.0, -10.0, 0.1);
        let sim = SimConfig {
            measured_slots: 300,
            warmup_slots: 0,
            ..lean_sim(11)
        };
        let profile = ActivityProfile::Baseline { busy_prob: 1.0 };
        let mut quiet = s.clone();
        quiet.sinr_threshold = db_to_linear(-10.0);
        quiet.device_density = 1.0; // nearly interference-free
        let stats = run_frozen_activity(&quiet, &SchemeConfig::Baseline, &profile, &sim).unwrap();
        let p = stats.success_prob.unwrap();
        let expect = crate::sgeom::success_baseline(&quiet, 1.0);
        assert!(
            (p.mean - expect).abs() < 3.0 * p.std_error.max(0.01),
            "empirical {} vs analytic {expect}",
            p.mean
        );
    }

    #[test]
    fn scheme_reductions_are_bitwise() {
        let s = lean_scenario(2.0, -8.0, 0.15);
        let sim = lean_sim(99);
        let base = run(&s, &SchemeConfig::Baseline, &sim).unwrap();
        let back = run(&s, &SchemeConfig::Backoff { slots: 0, prob: 1.0 }, &sim).unwrap();
        let ramp = run(
            &s,
            &SchemeConfig::PowerRamping {
                thresholds: vec![s.power_threshold],
            },
            &sim,
        )
        .unwrap();
        for (x, y) in [(&base, &back), (&base, &ramp)] {
            assert_eq!(
                x.success_prob.unwrap().mean.to_bits(),
                y.success_prob.unwrap().mean.to_bits()
            );
            assert_eq!(
                x.mean_queue_length.unwrap().mean.to_bits(),
                y.mean_queue_length.unwrap().mean.to_bits()
            );
            assert_eq!(
                x.mean_waiting_time.unwrap().mean.to_bits(),
                y.mean_waiting_time.unwrap().mean.to_bits()
            );
            assert_eq!(
                x.fraction_idle.unwrap().mean.to_bits(),
                y.fraction_idle.unwrap().mean.to_bits()
            );
        }
    }

    #[test]
    fn littles_law_holds_at_stable_operation() {
        let s = lean_scenario(2.0, -12.0, 0.1);
        let sim = SimConfig {
            realizations: 4,
            measured_slots: 2_000,
            ..lean_sim(5)
        };
        let stats = run(&s, &SchemeConfig::Baseline, &sim).unwrap();
        let q = stats.mean_queue_length.unwrap();
        let sojourn = stats.mean_sojourn.unwrap();
        let lhs = q.mean;
        let rhs = s.arrival_prob * sojourn.mean;
        let tol = 3.0 * (q.std_error + s.arrival_prob * sojourn.std_error);
        assert!(
            (lhs - rhs).abs() <= tol.max(0.02),
            "Little's law violated: {lhs} vs {rhs} (tol {tol})"
        );
    }

    #[test]
    fn frozen_profile_mismatch_rejected() {
        let s = lean_scenario(2.0, -10.0, 0.1);
        let sim = lean_sim(3);
        let err = run_frozen_activity(
            &s,
            &SchemeConfig::Baseline,
            &ActivityProfile::Ramping {
                phase_probs: vec![0.5],
            },
            &sim,
        );
        assert!(matches!(err, Err(SimError::ProfileMismatch(_))));
    }

    #[test]
    fn trace_is_bounded_and_populated() {
        let s = lean_scenario(1.0, -10.0, 0.1);
        let sim = SimConfig {
            measured_slots: 50,
            warmup_slots: 10,
            realizations: 2,
            ..lean_sim(17)
        };
        let (_, trace) = run_traced(&s, &SchemeConfig::Baseline, &sim, 20).unwrap();
        assert_eq!(trace.len(), 20);
        assert_eq!(trace[0].slot, 0);
    }
}
