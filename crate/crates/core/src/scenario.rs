//! Network scenario parameters, validation, and config-file loading.
//!
//! All quantities are stored in linear units (mW for powers, linear ratio for
//! the SINR threshold). Decibel values appear only at I/O boundaries: the
//! config format requires an explicit unit suffix on every power and
//! threshold field so a raw number can never be silently misread.

use serde::Serialize;
use thiserror::Error;

/// Convert a dB (or dBm) value to linear scale (or mW).
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Convert a linear (or mW) value to dB (or dBm).
pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("config line {line}: cannot parse `{text}`")]
    Parse { line: usize, text: String },
    #[error("config line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("config is missing required key `{0}`")]
    MissingKey(&'static str),
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field,
        reason: reason.into(),
    }
}

/// Physical and MAC-layer parameters shared by every analysis and by the
/// simulator. Immutable after construction; safe to share across threads.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkScenario {
    /// Base-station density λ, BS per km².
    pub bs_density: f64,
    /// Device density 𝒰, devices per km².
    pub device_density: f64,
    /// Number of orthogonal pseudo codes per BS.
    pub codes_per_bs: u32,
    /// Path-loss exponent η (> 2).
    pub pathloss_exponent: f64,
    /// Power-control threshold ρ in mW (baseline/backoff schemes).
    pub power_threshold: f64,
    /// Noise power σ² in mW.
    pub noise_power: f64,
    /// SINR detection threshold θ, linear.
    pub sinr_threshold: f64,
    /// Packet arrival probability per slot.
    pub arrival_prob: f64,
}

impl NetworkScenario {
    /// Spatial traffic intensity α̃ = 𝒰 / (λ n_Z), devices per BS per code.
    pub fn alpha_tilde(&self) -> f64 {
        self.device_density / (self.bs_density * self.codes_per_bs as f64)
    }

    /// Average devices per BS, α = 𝒰 / λ.
    pub fn alpha(&self) -> f64 {
        self.device_density / self.bs_density
    }

    /// Noise exponent σ²θ/ρ for a given own power threshold.
    pub(crate) fn noise_exponent(&self, own_rho: f64) -> f64 {
        self.noise_power * self.sinr_threshold / own_rho
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.bs_density > 0.0) || !self.bs_density.is_finite() {
            return Err(invalid("bs_density", "must be positive"));
        }
        if !(self.device_density >= 0.0) || !self.device_density.is_finite() {
            return Err(invalid("device_density", "must be non-negative"));
        }
        if self.codes_per_bs < 1 {
            return Err(invalid("codes_per_bs", "must be at least 1"));
        }
        if !(self.pathloss_exponent > 2.0) {
            return Err(invalid("pathloss_exponent", "must exceed 2"));
        }
        if !(self.power_threshold > 0.0) {
            return Err(invalid("power_threshold", "must be positive"));
        }
        if !(self.noise_power > 0.0) {
            return Err(invalid("noise", "must be positive"));
        }
        if !(self.sinr_threshold > 0.0) {
            return Err(invalid("sinr_threshold", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.arrival_prob) {
            return Err(invalid("arrival_prob", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Transmission scheme selection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SchemeConfig {
    /// Persistent retransmission at the fixed threshold ρ.
    Baseline,
    /// Increasing power-control thresholds ρ₁ < … < ρ_M (mW), reset after
    /// success or after the M-th attempt.
    PowerRamping { thresholds: Vec<f64> },
    /// N deterministic deferral slots after a failure, then geometric
    /// deferral with per-slot return probability q.
    Backoff { slots: u32, prob: f64 },
}

impl SchemeConfig {
    /// Number of PH service phases for this scheme.
    pub fn phase_count(&self) -> usize {
        match self {
            SchemeConfig::Baseline => 1,
            SchemeConfig::PowerRamping { thresholds } => thresholds.len(),
            SchemeConfig::Backoff { slots, .. } => *slots as usize + 2,
        }
    }

    /// Number of phases in which the device actually transmits.
    pub fn transmit_phase_count(&self) -> usize {
        match self {
            SchemeConfig::PowerRamping { thresholds } => thresholds.len(),
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        match self {
            SchemeConfig::Baseline => Ok(()),
            SchemeConfig::PowerRamping { thresholds } => {
                if thresholds.is_empty() {
                    return Err(invalid("ramp_thresholds", "must not be empty"));
                }
                if thresholds.iter().any(|&r| !(r > 0.0)) {
                    return Err(invalid("ramp_thresholds", "all thresholds must be positive"));
                }
                if thresholds.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(invalid(
                        "ramp_thresholds",
                        "thresholds must be strictly increasing",
                    ));
                }
                Ok(())
            }
            SchemeConfig::Backoff { prob, .. } => {
                if !(*prob > 0.0 && *prob <= 1.0) {
                    return Err(invalid("backoff_prob", "must lie in (0, 1]"));
                }
                Ok(())
            }
        }
    }
}

/// Result of parsing a scenario file: the physical scenario plus the scheme
/// block, when the file carries one.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedScenario {
    pub scenario: NetworkScenario,
    pub scheme: Option<SchemeConfig>,
}

#[derive(Clone, Copy, PartialEq)]
enum Unit {
    None,
    Db,
    Dbm,
    Mw,
    Linear,
}

fn split_unit(raw: &str) -> (&str, Unit) {
    let raw = raw.trim();
    for (suffix, unit) in [
        ("dBm", Unit::Dbm),
        ("dbm", Unit::Dbm),
        ("dB", Unit::Db),
        ("db", Unit::Db),
        ("mW", Unit::Mw),
        ("mw", Unit::Mw),
        ("linear", Unit::Linear),
    ] {
        if let Some(stripped) = raw.strip_suffix(suffix) {
            return (stripped.trim_end(), unit);
        }
    }
    (raw, Unit::None)
}

fn parse_power(field: &'static str, raw: &str) -> Result<f64, ScenarioError> {
    let (num, unit) = split_unit(raw);
    let value: f64 = num
        .parse()
        .map_err(|_| invalid(field, format!("cannot parse number `{num}`")))?;
    match unit {
        Unit::Dbm => Ok(db_to_linear(value)),
        Unit::Mw => Ok(value),
        _ => Err(invalid(
            field,
            format!("power value `{raw}` needs an explicit dBm or mW suffix"),
        )),
    }
}

fn parse_ratio(field: &'static str, raw: &str) -> Result<f64, ScenarioError> {
    let (num, unit) = split_unit(raw);
    let value: f64 = num
        .parse()
        .map_err(|_| invalid(field, format!("cannot parse number `{num}`")))?;
    match unit {
        Unit::Db => Ok(db_to_linear(value)),
        Unit::Linear => Ok(value),
        _ => Err(invalid(
            field,
            format!("ratio value `{raw}` needs an explicit dB or linear suffix"),
        )),
    }
}

fn parse_plain(field: &'static str, raw: &str) -> Result<f64, ScenarioError> {
    let (num, unit) = split_unit(raw);
    if unit != Unit::None {
        return Err(invalid(field, format!("`{raw}` must be a bare number")));
    }
    num.parse()
        .map_err(|_| invalid(field, format!("cannot parse number `{num}`")))
}

/// Parse a flat key-value scenario document.
///
/// Lines are `key = value`, `#` starts a comment, blank lines are skipped.
/// Power fields require a `dBm`/`mW` suffix and the SINR threshold a
/// `dB`/`linear` suffix. Unknown keys are a hard error so a typo in a sweep
/// script cannot silently fall back to a default.
pub fn load_scenario(text: &str) -> Result<LoadedScenario, ScenarioError> {
    let mut bs_density = None;
    let mut device_density = None;
    let mut codes_per_bs = None;
    let mut pathloss = None;
    let mut power = None;
    let mut noise = None;
    let mut sinr = None;
    let mut arrival = None;
    let mut scheme_name: Option<String> = None;
    let mut ramp: Option<Vec<f64>> = None;
    let mut backoff_slots: Option<u32> = None;
    let mut backoff_prob: Option<f64> = None;

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let content = match line.find('#') {
            Some(pos) => &line[..pos],
            None => line,
        };
        let content = content.trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ScenarioError::Parse {
            line: line_no,
            text: content.to_string(),
        })?;
        let key = key.trim();
        let value = value.trim();
        if value.is_empty() {
            return Err(ScenarioError::Parse {
                line: line_no,
                text: content.to_string(),
            });
        }
        match key {
            "bs_density" => bs_density = Some(parse_plain("bs_density", value)?),
            "device_density" => device_density = Some(parse_plain("device_density", value)?),
            "codes_per_bs" => {
                let v = parse_plain("codes_per_bs", value)?;
                if v.fract() != 0.0 || v < 0.0 {
                    return Err(invalid("codes_per_bs", "must be a non-negative integer"));
                }
                codes_per_bs = Some(v as u32);
            }
            "pathloss_exponent" => pathloss = Some(parse_plain("pathloss_exponent", value)?),
            "power_threshold" => power = Some(parse_power("power_threshold", value)?),
            "noise" => noise = Some(parse_power("noise", value)?),
            "sinr_threshold" => sinr = Some(parse_ratio("sinr_threshold", value)?),
            "arrival_prob" => arrival = Some(parse_plain("arrival_prob", value)?),
            "scheme" => scheme_name = Some(value.to_string()),
            "ramp_thresholds" => {
                let mut list = Vec::new();
                for part in value.split(',') {
                    list.push(parse_power("ramp_thresholds", part)?);
                }
                ramp = Some(list);
            }
            "backoff_slots" => {
                let v = parse_plain("backoff_slots", value)?;
                if v.fract() != 0.0 || v < 0.0 {
                    return Err(invalid("backoff_slots", "must be a non-negative integer"));
                }
                backoff_slots = Some(v as u32);
            }
            "backoff_prob" => backoff_prob = Some(parse_plain("backoff_prob", value)?),
            other => {
                return Err(ScenarioError::UnknownKey {
                    line: line_no,
                    key: other.to_string(),
                })
            }
        }
    }

    let scenario = NetworkScenario {
        bs_density: bs_density.ok_or(ScenarioError::MissingKey("bs_density"))?,
        device_density: device_density.ok_or(ScenarioError::MissingKey("device_density"))?,
        codes_per_bs: codes_per_bs.ok_or(ScenarioError::MissingKey("codes_per_bs"))?,
        pathloss_exponent: pathloss.ok_or(ScenarioError::MissingKey("pathloss_exponent"))?,
        power_threshold: power.ok_or(ScenarioError::MissingKey("power_threshold"))?,
        noise_power: noise.ok_or(ScenarioError::MissingKey("noise"))?,
        sinr_threshold: sinr.ok_or(ScenarioError::MissingKey("sinr_threshold"))?,
        arrival_prob: arrival.ok_or(ScenarioError::MissingKey("arrival_prob"))?,
    };
    scenario.validate()?;

    let scheme = match scheme_name.as_deref() {
        None => None,
        Some("baseline") => Some(SchemeConfig::Baseline),
        Some("power-ramping") | Some("ramping") => Some(SchemeConfig::PowerRamping {
            thresholds: ramp.ok_or(ScenarioError::MissingKey("ramp_thresholds"))?,
        }),
        Some("backoff") => Some(SchemeConfig::Backoff {
            slots: backoff_slots.ok_or(ScenarioError::MissingKey("backoff_slots"))?,
            prob: backoff_prob.ok_or(ScenarioError::MissingKey("backoff_prob"))?,
        }),
        Some(other) => {
            return Err(invalid(
                "scheme",
                format!("unknown scheme `{other}` (expected baseline, power-ramping, or backoff)"),
            ))
        }
    };
    if let Some(s) = &scheme {
        s.validate()?;
    }

    Ok(LoadedScenario { scenario, scheme })
}
