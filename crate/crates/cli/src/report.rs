//! Report emission: CSV tables with a reproducibility header and
//! deterministic 12-significant-digit float formatting, plus the scenario
//! hash carried by every output.

use iotq::NetworkScenario;
use std::fmt::Write as _;

/// FNV-1a over the canonical scenario serialization; stable across runs
/// and platforms.
pub fn scenario_hash(s: &NetworkScenario) -> String {
    let canonical = format!(
        "{:.17e},{:.17e},{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
        s.bs_density,
        s.device_density,
        s.codes_per_bs,
        s.pathloss_exponent,
        s.power_threshold,
        s.noise_power,
        s.sinr_threshold,
        s.arrival_prob
    );
    let mut hash: u64 = 0xcbf29ce484222325;
    for byte in canonical.bytes() {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    format!("{hash:016x}")
}

pub fn tool_version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

/// A float at 12 significant digits.
pub fn sig12(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else if x.is_finite() {
        format!("{x:.11e}")
    } else {
        format!("{x}")
    }
}

/// CSV field from heterogeneous cell content.
pub enum Cell {
    Float(f64),
    Int(i64),
    Bool(bool),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}
impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}
impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}
impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(v as i64)
    }
}
impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}
impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// CSV document with a `#`-prefixed reproducibility header. Column order
/// is fixed by the caller and never reordered.
pub struct CsvReport {
    buffer: String,
    columns: usize,
}

impl CsvReport {
    pub fn new(scenario: &NetworkScenario, seed: u64, columns: &[&str]) -> CsvReport {
        let mut buffer = String::new();
        let _ = writeln!(
            buffer,
            "# iotq {} scenario={} seed={}",
            tool_version(),
            scenario_hash(scenario),
            seed
        );
        let _ = writeln!(buffer, "{}", columns.join(","));
        CsvReport {
            buffer,
            columns: columns.len(),
        }
    }

    pub fn row(&mut self, cells: Vec<Cell>) {
        assert_eq!(cells.len(), self.columns, "row width mismatch");
        let mut first = true;
        for cell in cells {
            if !first {
                self.buffer.push(',');
            }
            first = false;
            match cell {
                Cell::Float(v) => self.buffer.push_str(&sig12(v)),
                Cell::Int(v) => {
                    let _ = write!(self.buffer, "{v}");
                }
                Cell::Bool(v) => self.buffer.push_str(if v { "true" } else { "false" }),
                Cell::Text(v) => {
                    debug_assert!(!v.contains(','), "cell needs quoting: {v}");
                    self.buffer.push_str(&v);
                }
            }
        }
        self.buffer.push('\n');
    }

    pub fn into_string(self) -> String {
        self.buffer
    }
}

/// Parse a CSV document produced by `CsvReport`: skips `#` comments,
/// returns (header, rows).
#[cfg(test)]
pub fn parse_csv(text: &str) -> Option<(Vec<String>, Vec<Vec<String>>)> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.is_empty());
    let header: Vec<String> = lines.next()?.split(',').map(str::to_string).collect();
    let rows = lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    Some((header, rows))
}
