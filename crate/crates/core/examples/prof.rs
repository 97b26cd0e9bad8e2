use iotq::coupling::{self, FixedPointConfig};
use iotq::scenario::db_to_linear;
use std::time::Instant;

fn main() {
    let mut s = iotq::load_scenario(
        "bs_density = 10\ndevice_density = 2560\ncodes_per_bs = 64\npathloss_exponent = 4\npower_threshold = -90 dBm\nnoise = -90 dBm\nsinr_threshold = -2 dB\narrival_prob = 0.1\n",
    ).unwrap().scenario;
    s.sinr_threshold = db_to_linear(-2.0);
    let cfg = FixedPointConfig::default();
    for (n, q) in [(0u32, 1.0), (2, 0.9), (3, 0.9), (8, 0.05), (4, 0.29)] {
        let t = Instant::now();
        let a = coupling::solve_backoff(&s, n, q, &cfg).unwrap();
        println!("N={n} q={q}: stable={} iters={} forced={} elapsed={:?}", a.stable, a.iterations_used, a.forced_unstable, t.elapsed());
    }
}
