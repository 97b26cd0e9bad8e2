use iotq::montecarlo::{self, SimConfig};
use iotq::SchemeConfig;
use std::time::Instant;

fn main() {
    let mut s = iotq::load_scenario(
        "bs_density = 5\ndevice_density = 40\ncodes_per_bs = 2\npathloss_exponent = 4\npower_threshold = -90 dBm\nnoise = -90 dBm\nsinr_threshold = -10 dB\narrival_prob = 0.1\n",
    ).unwrap().scenario;
    s.device_density = 4.0 * s.bs_density * s.codes_per_bs as f64;
    let sim = SimConfig {
        window_km: 10.0,
        measure_radius_km: 1.0,
        warmup_slots: 500,
        measured_slots: 10_000,
        realizations: 20,
        seed: 5,
        interference_range_km: 2.5,
        queue_cap: 10_000,
    };
    let t = Instant::now();
    let stats = montecarlo::run(&s, &SchemeConfig::Baseline, &sim).unwrap();
    let p = stats.success_prob.unwrap();
    println!("alpha=4 theta=-10: p = {} ± {}  ({:?})", p.mean, p.std_error, t.elapsed());
    let a = iotq::coupling::solve_baseline(&s, &iotq::coupling::FixedPointConfig::default()).unwrap();
    println!("analytic p = {}  gap = {}", a.success_probs[0], (a.success_probs[0] - p.mean).abs());
}
