//! Batch front-end: scenario files in, CSV/JSON tables out.
//!
//! Every output embeds the tool version, a hash of the resolved scenario,
//! and the seed, so a result file pins the run that produced it. Reruns
//! with identical inputs produce byte-identical outputs.

mod report;
mod verify;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use iotq::backoff_opt::{self, BackoffSearchSpace};
use iotq::coupling::{self, FixedPointConfig, SchemeAnalysis};
use iotq::montecarlo::{self, SimConfig, SimStats, TraceRow};
use iotq::scenario::{db_to_linear, linear_to_db};
use iotq::sgeom::ActivityProfile;
use iotq::stability::{self, Axis};
use iotq::tempcorr::{self, CorrelationScenario};
use iotq::{load_scenario, NetworkScenario, SchemeConfig};
use report::{scenario_hash, sig12, CsvReport};
use serde::Serialize;
use std::fs;
use std::path::PathBuf;

const DEFAULT_SCENARIO: &str = "\
bs_density = 10            # BS per km^2
device_density = 2560      # devices per km^2
codes_per_bs = 64
pathloss_exponent = 4
power_threshold = -90 dBm
noise = -90 dBm
sinr_threshold = -10 dB
arrival_prob = 0.1
";

#[derive(Parser)]
#[command(
    name = "iotq",
    version,
    about = "Stability and performance of massive-uplink IoT cellular networks",
    after_help = "Without --scenario a built-in default is used (10 BS/km^2, 64 codes, \
eta=4, rho=sigma^2=-90 dBm, theta=-10 dB, a=0.1, alpha=4). The IOTQ_THREADS \
environment variable (or --threads) caps the worker pool."
)]
struct Cli {
    /// Scenario config file (flat key = value text)
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Override the SINR threshold, dB
    #[arg(long, global = true, allow_hyphen_values = true)]
    theta: Option<f64>,
    /// Override the spatial traffic intensity alpha (device/BS/code)
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Override the per-slot arrival probability
    #[arg(long, global = true)]
    arrival: Option<f64>,
    /// Scheme: baseline | power-ramping | backoff
    #[arg(long, global = true)]
    scheme: Option<String>,
    /// Backoff deferral slots N
    #[arg(long, global = true)]
    backoff_slots: Option<u32>,
    /// Backoff return probability q
    #[arg(long, global = true)]
    backoff_prob: Option<f64>,
    /// Ramping thresholds, comma-separated dBm values
    #[arg(long, global = true, allow_hyphen_values = true)]
    ramp_thresholds: Option<String>,
    /// Master RNG seed
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Output file (stdout when omitted)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the coupled interference/queueing fixed point (JSON)
    Analyze,
    /// Monte Carlo simulation with the analytic solution overlaid (JSON)
    Simulate {
        #[arg(long, default_value_t = 20)]
        realizations: u32,
        #[arg(long, default_value_t = 10_000)]
        slots: u32,
        #[arg(long, default_value_t = 500)]
        warmup: u32,
        /// Window side, km
        #[arg(long, default_value_t = 10.0)]
        window: f64,
        #[arg(long, default_value_t = 1.0)]
        measure_radius: f64,
        /// Interference accounting radius, km
        #[arg(long, default_value_t = 3.0)]
        interference_range: f64,
        /// Emit a per-slot aggregate trace of realization 0 (bounded)
        #[arg(long, default_value_t = 0)]
        trace_slots: u32,
        /// Replace queue dynamics with i.i.d. activity (comma list of
        /// per-phase probabilities; one value for baseline/backoff)
        #[arg(long)]
        frozen_activity: Option<String>,
    },
    /// Sweep a 2-D grid and emit the stability region and frontier (CSV)
    StabilityRegion {
        /// theta | arrival | alpha
        #[arg(long, default_value = "theta")]
        axis1: String,
        /// Grid start:stop:step for axis1 (defaults match the axis)
        #[arg(long, allow_hyphen_values = true)]
        grid1: Option<String>,
        #[arg(long, default_value = "arrival")]
        axis2: String,
        #[arg(long, allow_hyphen_values = true)]
        grid2: Option<String>,
        /// Also write the bisected frontier polyline to this file
        #[arg(long)]
        frontier_out: Option<PathBuf>,
    },
    /// Exhaustive search over backoff parameters (JSON + optional surface CSV)
    OptimizeBackoff {
        #[arg(long, default_value_t = 8)]
        max_slots: u32,
        #[arg(long, default_value_t = 0.01)]
        prob_step: f64,
        /// Write the full (N, q) objective surface to this CSV
        #[arg(long)]
        surface_out: Option<PathBuf>,
    },
    /// Two-slot temporal correlation of transmission failures (CSV)
    TemporalCorr {
        /// Per-slot interferer activity probability
        #[arg(long, default_value_t = 0.5)]
        activity: f64,
        /// theta grid start:stop:step in dB
        #[arg(long, default_value = "-20:0:1", allow_hyphen_values = true)]
        grid: String,
    },
    /// Run the analytical cross-check suite
    Verify,
}

#[derive(Serialize)]
struct Meta {
    tool: &'static str,
    version: &'static str,
    scenario_hash: String,
    seed: u64,
}

fn meta(s: &NetworkScenario, seed: u64) -> Meta {
    Meta {
        tool: "iotq",
        version: report::tool_version(),
        scenario_hash: scenario_hash(s),
        seed,
    }
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        bail!("grid `{spec}` must be start:stop:step");
    }
    let start: f64 = parts[0].trim().parse().context("grid start")?;
    let stop: f64 = parts[1].trim().parse().context("grid stop")?;
    let step: f64 = parts[2].trim().parse().context("grid step")?;
    if !(step > 0.0) || stop < start {
        bail!("grid `{spec}` must have positive step and stop >= start");
    }
    let count = ((stop - start) / step).round() as usize;
    Ok((0..=count).map(|i| start + i as f64 * step).collect())
}

fn parse_axis(name: &str) -> Result<Axis> {
    match name {
        "theta" => Ok(Axis::ThetaDb),
        "arrival" => Ok(Axis::Arrival),
        "alpha" => Ok(Axis::AlphaTilde),
        other => bail!("unknown axis `{other}` (expected theta, arrival, or alpha)"),
    }
}

fn default_grid(axis: Axis) -> Vec<f64> {
    match axis {
        Axis::ThetaDb => stability::default_theta_grid_db(),
        Axis::Arrival => stability::default_arrival_grid(),
        Axis::AlphaTilde => vec![1.0, 2.0, 4.0, 8.0],
    }
}

struct Resolved {
    scenario: NetworkScenario,
    scheme: SchemeConfig,
}

fn resolve(cli: &Cli) -> Result<Resolved> {
    let text = match &cli.scenario {
        Some(path) => fs::read_to_string(path)
            .with_context(|| format!("reading scenario file {}", path.display()))?,
        None => DEFAULT_SCENARIO.to_string(),
    };
    let loaded = load_scenario(&text)?;
    let mut scenario = loaded.scenario;
    if let Some(theta_db) = cli.theta {
        scenario.sinr_threshold = db_to_linear(theta_db);
    }
    if let Some(alpha) = cli.alpha {
        scenario.device_density = alpha * scenario.bs_density * scenario.codes_per_bs as f64;
    }
    if let Some(a) = cli.arrival {
        scenario.arrival_prob = a;
    }
    scenario.validate()?;

    let ramp = || -> Result<Vec<f64>> {
        match &cli.ramp_thresholds {
            Some(spec) => spec
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map(db_to_linear)
                        .with_context(|| format!("ramp threshold `{v}`"))
                })
                .collect(),
            None => match &loaded.scheme {
                Some(SchemeConfig::PowerRamping { thresholds }) => Ok(thresholds.clone()),
                // default grid: rho .. rho+20 dB in 4 dB steps
                _ => Ok((0..6)
                    .map(|i| scenario.power_threshold * db_to_linear(4.0 * i as f64))
                    .collect()),
            },
        }
    };
    let scheme = match cli.scheme.as_deref() {
        None => loaded.scheme.unwrap_or(SchemeConfig::Baseline),
        Some("baseline") => SchemeConfig::Baseline,
        Some("power-ramping") | Some("ramping") => SchemeConfig::PowerRamping {
            thresholds: ramp()?,
        },
        Some("backoff") => SchemeConfig::Backoff {
            slots: cli.backoff_slots.unwrap_or(0),
            prob: cli.backoff_prob.unwrap_or(1.0),
        },
        Some(other) => bail!("unknown scheme `{other}`"),
    };
    scheme.validate()?;
    Ok(Resolved { scenario, scheme })
}

fn write_output(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, content).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{content}"),
    }
    Ok(())
}

fn scheme_name(scheme: &SchemeConfig) -> &'static str {
    match scheme {
        SchemeConfig::Baseline => "baseline",
        SchemeConfig::PowerRamping { .. } => "power-ramping",
        SchemeConfig::Backoff { .. } => "backoff",
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let threads = cli
        .threads
        .or_else(|| {
            std::env::var("IOTQ_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(0);
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .ok();
    }
    let resolved = resolve(&cli)?;
    let cfg = FixedPointConfig::default();
    match &cli.command {
        Command::Analyze => {
            let analysis = coupling::solve_scheme(&resolved.scenario, &resolved.scheme, &cfg)?;
            #[derive(Serialize)]
            struct Out<'a> {
                meta: Meta,
                scenario: &'a NetworkScenario,
                analysis: &'a SchemeAnalysis,
            }
            let out = Out {
                meta: meta(&resolved.scenario, cli.seed),
                scenario: &resolved.scenario,
                analysis: &analysis,
            };
            let mut text = serde_json::to_string_pretty(&out)?;
            text.push('\n');
            write_output(&cli.out, &text)?;
        }
        Command::Simulate {
            realizations,
            slots,
            warmup,
            window,
            measure_radius,
            interference_range,
            trace_slots,
            frozen_activity,
        } => {
            let sim = SimConfig {
                window_km: *window,
                measure_radius_km: *measure_radius,
                warmup_slots: *warmup,
                measured_slots: *slots,
                realizations: *realizations,
                seed: cli.seed,
                interference_range_km: *interference_range,
                queue_cap: 10_000,
            };
            let (stats, trace, analysis) = match frozen_activity {
                Some(spec) => {
                    let probs: Vec<f64> = spec
                        .split(',')
                        .map(|v| v.trim().parse::<f64>().context("frozen activity value"))
                        .collect::<Result<_>>()?;
                    let profile = match &resolved.scheme {
                        SchemeConfig::PowerRamping { .. } => ActivityProfile::Ramping {
                            phase_probs: probs.clone(),
                        },
                        SchemeConfig::Backoff { .. } => ActivityProfile::Backoff {
                            transmit_prob: probs[0],
                        },
                        SchemeConfig::Baseline => ActivityProfile::Baseline {
                            busy_prob: probs[0],
                        },
                    };
                    let stats = montecarlo::run_frozen_activity(
                        &resolved.scenario,
                        &resolved.scheme,
                        &profile,
                        &sim,
                    )?;
                    (stats, Vec::new(), None)
                }
                None => {
                    let (stats, trace) =
                        montecarlo::run_traced(&resolved.scenario, &resolved.scheme, &sim, *trace_slots)?;
                    let analysis =
                        coupling::solve_scheme(&resolved.scenario, &resolved.scheme, &cfg)?;
                    (stats, trace, Some(analysis))
                }
            };
            #[derive(Serialize)]
            struct Out<'a> {
                meta: Meta,
                scenario: &'a NetworkScenario,
                scheme: &'a SchemeConfig,
                sim: &'a SimConfig,
                stats: &'a SimStats,
                analysis: Option<&'a SchemeAnalysis>,
                trace: &'a [TraceRow],
            }
            let out = Out {
                meta: meta(&resolved.scenario, cli.seed),
                scenario: &resolved.scenario,
                scheme: &resolved.scheme,
                sim: &sim,
                stats: &stats,
                analysis: analysis.as_ref(),
                trace: &trace,
            };
            let mut text = serde_json::to_string_pretty(&out)?;
            text.push('\n');
            write_output(&cli.out, &text)?;
        }
        Command::StabilityRegion {
            axis1,
            grid1,
            axis2,
            grid2,
            frontier_out,
        } => {
            let ax1 = parse_axis(axis1)?;
            let ax2 = parse_axis(axis2)?;
            if ax1 == ax2 {
                bail!("axis1 and axis2 must differ");
            }
            let g1 = match grid1 {
                Some(spec) => parse_grid(spec)?,
                None => default_grid(ax1),
            };
            let g2 = match grid2 {
                Some(spec) => parse_grid(spec)?,
                None => default_grid(ax2),
            };
            let result = stability::frontier_sweep(
                &resolved.scenario,
                &resolved.scheme,
                ax1,
                &g1,
                ax2,
                &g2,
                &cfg,
            );
            let fixed = match (ax1, ax2) {
                (Axis::ThetaDb, Axis::Arrival) | (Axis::Arrival, Axis::ThetaDb) => {
                    resolved.scenario.alpha_tilde()
                }
                (Axis::ThetaDb, Axis::AlphaTilde) | (Axis::AlphaTilde, Axis::ThetaDb) => {
                    resolved.scenario.arrival_prob
                }
                _ => linear_to_db(resolved.scenario.sinr_threshold),
            };
            let mut csv = CsvReport::new(
                &resolved.scenario,
                cli.seed,
                &[
                    "scheme",
                    "fixed_param",
                    "axis1",
                    "axis2",
                    "stable",
                    "p_or_pbar",
                    "x0",
                ],
            );
            for p in &result.points {
                csv.row(vec![
                    scheme_name(&resolved.scheme).into(),
                    fixed.into(),
                    p.axis1.into(),
                    p.axis2.into(),
                    p.stable.into(),
                    p.success_prob.into(),
                    p.idle_prob.into(),
                ]);
            }
            write_output(&cli.out, &csv.into_string())?;
            if let Some(path) = frontier_out {
                let mut csv = CsvReport::new(
                    &resolved.scenario,
                    cli.seed,
                    &["scheme", "fixed_param", "axis1", "axis2_boundary"],
                );
                for &(v1, boundary) in &result.frontier {
                    csv.row(vec![
                        scheme_name(&resolved.scheme).into(),
                        fixed.into(),
                        v1.into(),
                        boundary.into(),
                    ]);
                }
                fs::write(path, csv.into_string())?;
            }
        }
        Command::OptimizeBackoff {
            max_slots,
            prob_step,
            surface_out,
        } => {
            if !(*prob_step > 0.0 && *prob_step <= 1.0) {
                bail!("prob_step must lie in (0, 1]");
            }
            let count = (1.0 / prob_step).round() as usize;
            let space = BackoffSearchSpace {
                slot_values: (0..=*max_slots).collect(),
                prob_values: (1..=count).map(|i| i as f64 * prob_step).collect(),
            };
            let (optimum, cells) = backoff_opt::optimize(&resolved.scenario, &space, &cfg)?;
            eprintln!(
                "alpha={} theta={} dB  N={} q={} mean_backoff={} {}",
                sig12(resolved.scenario.alpha_tilde()),
                sig12(linear_to_db(resolved.scenario.sinr_threshold)),
                optimum.slots,
                sig12(optimum.prob),
                sig12(optimum.mean_backoff_slots),
                if optimum.stable { "Stable" } else { "Unstable" }
            );
            if let Some(path) = surface_out {
                let mut csv = CsvReport::new(
                    &resolved.scenario,
                    cli.seed,
                    &["slots", "prob", "stable", "waiting_time", "service_delay"],
                );
                for c in &cells {
                    csv.row(vec![
                        c.slots.into(),
                        c.prob.into(),
                        c.stable.into(),
                        c.waiting_time.unwrap_or(f64::NAN).into(),
                        c.service_delay.unwrap_or(f64::NAN).into(),
                    ]);
                }
                fs::write(path, csv.into_string())?;
            }
            #[derive(Serialize)]
            struct Out<'a> {
                meta: Meta,
                scenario: &'a NetworkScenario,
                optimum: &'a backoff_opt::BackoffOptimum,
            }
            let out = Out {
                meta: meta(&resolved.scenario, cli.seed),
                scenario: &resolved.scenario,
                optimum: &optimum,
            };
            let mut text = serde_json::to_string_pretty(&out)?;
            text.push('\n');
            write_output(&cli.out, &text)?;
        }
        Command::TemporalCorr { activity, grid } => {
            let cs = CorrelationScenario {
                scenario: resolved.scenario.clone(),
                activity_prob: *activity,
            };
            let theta_grid = parse_grid(grid)?;
            let rows = tempcorr::correlation_report(&cs, &theta_grid)?;
            let mut csv = CsvReport::new(
                &resolved.scenario,
                cli.seed,
                &["theta_db", "marginal_failure", "conditional_failure", "gap"],
            );
            for r in &rows {
                csv.row(vec![
                    r.theta_db.into(),
                    r.marginal_failure.into(),
                    r.conditional_failure.into(),
                    r.gap.into(),
                ]);
            }
            write_output(&cli.out, &csv.into_string())?;
        }
        Command::Verify => {
            let checks = verify::run_all(&resolved.scenario);
            let mut all_passed = true;
            let mut text = String::new();
            for c in &checks {
                all_passed &= c.passed;
                text.push_str(&format!(
                    "{} {} — {}\n",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                ));
            }
            write_output(&cli.out, &text)?;
            if !all_passed {
                std::process::exit(1);
            }
        }
    }
    Ok(())
}
