//! Stability and performance analysis of massive-uplink IoT cellular
//! networks.
//!
//! The library couples stochastic-geometry interference analysis with
//! discrete-time matrix-analytic queueing (Geo/PH/1 quasi-birth-death
//! chains) for three random-access schemes — persistent baseline,
//! power-ramping, and backoff — and cross-validates every analytical
//! quantity against an independent spatiotemporal Monte Carlo simulator.
//!
//! Module map:
//!
//! - [`scenario`]: network parameters, unit handling, config files
//! - [`specfun`]: hypergeometric factors, neighbor PMF, quadrature
//! - [`sgeom`]: closed-form transmission success probabilities
//! - [`qbd`]: PH service construction and the QBD solver with metrics
//! - [`coupling`]: the interference/queueing fixed-point iteration
//! - [`stability`]: closed-form stability conditions and frontier sweeps
//! - [`backoff_opt`]: exhaustive search over backoff parameters
//! - [`tempcorr`]: two-slot temporal interference correlation
//! - [`montecarlo`]: the system-level simulator used as ground truth

pub mod backoff_opt;
pub mod coupling;
pub mod montecarlo;
pub mod qbd;
pub mod scenario;
pub mod sgeom;
pub mod specfun;
pub mod stability;
pub mod tempcorr;

pub use scenario::{load_scenario, LoadedScenario, NetworkScenario, SchemeConfig};

// Re-exported so downstream verification code can build matrices against
// the same linear-algebra types.
pub use nalgebra;
