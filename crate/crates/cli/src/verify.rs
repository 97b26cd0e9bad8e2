//! Analytical cross-check suite behind `iotq verify`: every closed form is
//! pitted against an independent evaluation route (brute-force chain
//! solves, fixed-point iterations of defining equations, quadrature,
//! series summation). Prints one PASS/FAIL line per check.

use iotq::scenario::db_to_linear;
use iotq::specfun::Quadrature;
use iotq::{coupling, qbd, sgeom, stability, tempcorr, NetworkScenario, SchemeConfig};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check {
        name,
        passed,
        detail,
    }
}

fn with_alpha(s: &NetworkScenario, alpha: f64) -> NetworkScenario {
    let mut t = s.clone();
    t.device_density = alpha * s.bs_density * s.codes_per_bs as f64;
    t
}

fn geo_geo_closed_forms() -> Check {
    let mut worst = 0.0f64;
    for i in 1..=20 {
        let p = i as f64 / 21.0;
        for j in 1..=20 {
            let a = p * j as f64 / 21.0 * 0.95;
            let ph = qbd::build_ph(&SchemeConfig::Baseline, &[p]).unwrap();
            let sol = qbd::solve(&ph, a).unwrap();
            let x0 = (p - a) / p;
            let r = a * (1.0 - p) / ((1.0 - a) * p);
            let eq = a * (1.0 - a) * p * x0 / ((p - a) * (p - a));
            worst = worst
                .max((sol.x0 - x0).abs())
                .max((sol.r[(0, 0)] - r).abs())
                .max((qbd::mean_queue_length(&sol).unwrap() - eq).abs());
        }
    }
    check(
        "Geo/Geo/1 closed forms vs generic QBD (20x20 grid)",
        worst < 1e-12,
        format!("max deviation {worst:.3e}"),
    )
}

fn r_matrix_dual_route() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let mut tested = 0;
    while tested < 20 {
        let n = rng.random_range(1..=6usize);
        let mut s = iotq::nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            let mut row: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let total: f64 = row.iter().sum();
            let scale = rng.random::<f64>() * 0.9 / total;
            for v in &mut row {
                *v *= scale;
            }
            for (j, v) in row.iter().enumerate() {
                s[(i, j)] = *v;
            }
        }
        let ph = qbd::PhService::from_transient(s).unwrap();
        let drift = qbd::drift_vector(&ph);
        let service: f64 = drift
            .iter()
            .zip(ph.absorb().iter())
            .map(|(pi, s)| pi * s)
            .sum();
        let a = 0.5 * service;
        if !qbd::is_stable(&ph, a).unwrap().stable {
            continue;
        }
        tested += 1;
        let blocks = qbd::qbd_blocks(&ph, a).unwrap();
        let explicit = qbd::solve_r_matrix(&blocks).unwrap();
        let iterated = qbd::solve_r_iterative(&blocks, 1e-13, 200_000).unwrap();
        worst = worst.max((&explicit - &iterated).abs().max());
    }
    check(
        "explicit rank-one R vs fixed-point of R = A0 + R A1 + R^2 A2 (20 random PH)",
        worst < 1e-10,
        format!("max entry deviation {worst:.3e}"),
    )
}

fn truncated_chain_check() -> Check {
    let cases: Vec<(SchemeConfig, Vec<f64>, f64)> = vec![
        (SchemeConfig::Baseline, vec![0.6], 0.2),
        (
            SchemeConfig::PowerRamping {
                thresholds: vec![1e-9, 2.5e-9, 6.3e-9],
            },
            vec![0.35, 0.55, 0.8],
            0.15,
        ),
        (
            SchemeConfig::Backoff {
                slots: 2,
                prob: 0.91,
            },
            vec![0.7],
            0.1,
        ),
    ];
    let mut worst = 0.0f64;
    for (scheme, probs, a) in cases {
        let ph = qbd::build_ph(&scheme, &probs).unwrap();
        let sol = qbd::solve(&ph, a).unwrap();
        let (x0, levels) = qbd::truncated_chain_reference(&ph, a, 200).unwrap();
        worst = worst.max((x0 - sol.x0).abs());
        let mut phases = vec![0.0; ph.dim()];
        let mut eq = 0.0;
        for (v, row) in levels.iter().enumerate() {
            for j in 0..ph.dim() {
                phases[j] += row[j];
                eq += (v + 1) as f64 * row[j];
            }
        }
        for j in 0..ph.dim() {
            worst = worst.max((phases[j] - sol.phases[j]).abs());
        }
        worst = worst.max((eq - qbd::mean_queue_length(&sol).unwrap()).abs());
    }
    check(
        "MAM solution vs truncated-chain direct solve (3 schemes, cap 200)",
        worst < 1e-6,
        format!("max deviation {worst:.3e}"),
    )
}

fn hypergeometric_identity() -> Check {
    let mut worst = 0.0f64;
    for &theta in &[0.01, 0.1, 1.0, 10.0, 100.0] {
        let psi = iotq::specfun::gauss_2f1_interference(1, 4.0, theta).unwrap();
        let lhs = theta * psi; // (2θ/(η−2)) ψ at η=4
        let rhs = theta.sqrt() * theta.sqrt().atan();
        worst = worst.max((lhs - rhs).abs());
    }
    check(
        "hypergeometric factor vs arctan identity at eta=4",
        worst < 1e-10,
        format!("max deviation {worst:.3e}"),
    )
}

fn laplace_transform_dual_routes(s: &NetworkScenario) -> Check {
    let quad = Quadrature::default();
    let mut worst = 0.0f64;
    for theta_db in [-20.0, -10.0, 0.0] {
        let theta = db_to_linear(theta_db);
        for k in [0.3, 1.0] {
            let mut cs = tempcorr::CorrelationScenario {
                scenario: with_alpha(s, 4.0),
                activity_prob: k,
            };
            cs.scenario.sinr_threshold = theta;
            let closed = tempcorr::joint_failure(&cs).unwrap();
            let oracle = tempcorr::joint_failure_quadrature(&cs, &quad).unwrap();
            worst = worst.max((closed - oracle).abs());
        }
    }
    check(
        "two-slot joint failure: closed form vs quadrature/PMF oracle",
        worst < 1e-6,
        format!("max deviation {worst:.3e}"),
    )
}

fn phase_closed_forms() -> Check {
    let mut worst = 0.0f64;
    // ramping
    let probs = [0.4, 0.7, 0.2, 0.9];
    let scheme = SchemeConfig::PowerRamping {
        thresholds: vec![1e-9, 2e-9, 4e-9, 8e-9],
    };
    let pi = qbd::drift_vector(&qbd::build_ph(&scheme, &probs).unwrap());
    let mut denom = 1.0;
    let mut running = 1.0;
    for &p in probs.iter().take(probs.len() - 1) {
        running *= 1.0 - p;
        denom += running;
    }
    let mut expect = vec![1.0 / denom];
    for &p in probs.iter().take(probs.len() - 1) {
        expect.push(expect.last().unwrap() * (1.0 - p));
    }
    for (i, e) in expect.iter().enumerate() {
        worst = worst.max((pi[i] - e).abs());
    }
    // backoff
    let (n, q, p) = (3u32, 0.29, 0.45);
    let scheme = SchemeConfig::Backoff { slots: n, prob: q };
    let pi = qbd::drift_vector(&qbd::build_ph(&scheme, &[p]).unwrap());
    let pbar = 1.0 - p;
    let pi1 = 1.0 / (1.0 + (n as f64 - 1.0) * pbar + pbar / q);
    worst = worst.max((pi[0] - pi1).abs());
    for i in 1..=n as usize {
        worst = worst.max((pi[i] - pbar * pi1).abs());
    }
    worst = worst.max((pi[n as usize + 1] - pi1 * pbar * (1.0 / q - 1.0)).abs());
    check(
        "saturated phase distributions vs per-scheme closed forms",
        worst < 1e-12,
        format!("max deviation {worst:.3e}"),
    )
}

fn scheme_reduction(s: &NetworkScenario) -> Check {
    let cfg = coupling::FixedPointConfig::default();
    let mut worst = 0.0f64;
    for (alpha, theta_db, arrival) in [(1.0, -10.0, 0.1), (4.0, -6.0, 0.2), (8.0, -2.0, 0.1)] {
        let mut scen = with_alpha(s, alpha);
        scen.sinr_threshold = db_to_linear(theta_db);
        scen.arrival_prob = arrival;
        let base = coupling::solve_baseline(&scen, &cfg).unwrap();
        let back = coupling::solve_backoff(&scen, 0, 1.0, &cfg).unwrap();
        let ramp = coupling::solve_ramping(&scen, &[scen.power_threshold], &cfg).unwrap();
        for other in [&back, &ramp] {
            worst = worst
                .max((base.idle_prob - other.idle_prob).abs())
                .max((base.success_probs[0] - other.success_probs[0]).abs());
        }
    }
    check(
        "backoff(0,1) and ramping(M=1) reduce to baseline analytics",
        worst < 1e-12,
        format!("max deviation {worst:.3e}"),
    )
}

fn stability_sandwich(s: &NetworkScenario) -> Check {
    let cfg = coupling::FixedPointConfig::default();
    let mut violations = 0u32;
    let mut points = 0u32;
    for alpha in [1.0, 4.0] {
        for theta_db in [-16.0, -10.0, -4.0] {
            for arrival in [0.05, 0.2, 0.4] {
                let mut scen = with_alpha(s, alpha);
                scen.sinr_threshold = db_to_linear(theta_db);
                scen.arrival_prob = arrival;
                let verdict = stability::baseline_conditions(&scen, &cfg).unwrap();
                let solved = coupling::solve_baseline(&scen, &cfg).unwrap();
                points += 1;
                if verdict.sufficient_holds && !solved.stable {
                    violations += 1;
                }
                if !verdict.necessary_holds && solved.stable {
                    violations += 1;
                }
            }
        }
    }
    check(
        "iterative verdict sandwiched by closed-form conditions",
        violations == 0,
        format!("{violations} violations over {points} points"),
    )
}

fn success_dual_route(s: &NetworkScenario) -> Check {
    let quad = Quadrature::default();
    let mut worst = 0.0f64;
    for theta_db in [-15.0, -5.0, 0.0] {
        for act in [0.3, 1.0] {
            for alpha in [1.0, 8.0] {
                let mut scen = with_alpha(s, alpha);
                scen.sinr_threshold = db_to_linear(theta_db);
                let closed = sgeom::success_baseline(&scen, act);
                let oracle = sgeom::success_baseline_quadrature(&scen, act, &quad).unwrap();
                worst = worst.max((closed - oracle).abs());
            }
        }
    }
    check(
        "single-slot success: closed form vs quadrature/PMF assembly",
        worst < 1e-8,
        format!("max deviation {worst:.3e}"),
    )
}

pub fn run_all(s: &NetworkScenario) -> Vec<Check> {
    vec![
        geo_geo_closed_forms(),
        r_matrix_dual_route(),
        truncated_chain_check(),
        hypergeometric_identity(),
        phase_closed_forms(),
        laplace_transform_dual_routes(s),
        success_dual_route(s),
        scheme_reduction(s),
        stability_sandwich(s),
    ]
}
