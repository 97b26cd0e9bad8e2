//! Shared helpers for the integration and acceptance suites.

use iotq::scenario::db_to_linear;
use iotq::NetworkScenario;

/// Paper-style defaults: η = 4, ρ = σ² = −90 dBm, a = 0.1, θ = −10 dB,
/// with the BS density and code count chosen lean so that a given α̃
/// costs as few simulated devices as possible (per-code statistics are
/// unchanged by that trade).
pub fn lean_scenario(bs_density: f64, codes: u32, alpha: f64, theta_db: f64, arrival: f64) -> NetworkScenario {
    let mut s = iotq::load_scenario(&format!(
        "bs_density = {bs_density}\n\
         device_density = 1\n\
         codes_per_bs = {codes}\n\
         pathloss_exponent = 4\n\
         power_threshold = -90 dBm\n\
         noise = -90 dBm\n\
         sinr_threshold = -10 dB\n\
         arrival_prob = 0.1\n"
    ))
    .unwrap()
    .scenario;
    s.device_density = alpha * s.bs_density * s.codes_per_bs as f64;
    s.sinr_threshold = db_to_linear(theta_db);
    s.arrival_prob = arrival;
    s
}

/// §V-style defaults at full density (10 BS/km², 64 codes).
#[allow(dead_code)]
pub fn paper_scenario(alpha: f64, theta_db: f64, arrival: f64) -> NetworkScenario {
    lean_scenario(10.0, 64, alpha, theta_db, arrival)
}
