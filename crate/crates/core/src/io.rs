//! Text formatting shared by the CSV writers.

use crate::error::{Error, Result};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn parse_float(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| Error::Parse(format!("`{s}`: {e}")))
}

/// Space-separated vector, used for vector-valued CSV fields.
pub fn format_vector(xs: &[f64]) -> String {
    xs.iter().map(|&x| format_float(x)).collect::<Vec<_>>().join(" ")
}

pub fn parse_vector(s: &str) -> Result<Vec<f64>> {
    s.split_whitespace().map(parse_float).collect()
}
