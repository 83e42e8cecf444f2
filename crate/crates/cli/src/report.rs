//! Machine-readable outputs: CSV with full-precision decimal floats and
//! JSON mirrors carrying run metadata.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::RunConfig;

/// 17-significant-digit decimal rendering: round-trips every finite f64.
pub fn float_repr(v: f64) -> String {
    format!("{v:.16e}")
}

/// One row of the rates table.
#[derive(Debug, Clone, Serialize)]
pub struct RateRow {
    pub quantity: String,
    pub n: u32,
    pub a_or_alpha: f64,
    pub k: u32,
    pub norm_value: f64,
    pub fitted_rate: f64,
    pub expected_rate: f64,
    pub pass: bool,
}

pub fn write_rates_csv(path: &Path, rows: &[RateRow]) -> Result<()> {
    let mut out = String::from("quantity,n,a_or_alpha,k,norm_value,fitted_rate,expected_rate,pass\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.quantity,
            r.n,
            float_repr(r.a_or_alpha),
            r.k,
            float_repr(r.norm_value),
            float_repr(r.fitted_rate),
            float_repr(r.expected_rate),
            r.pass
        ));
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// Parses a rates CSV back (round-trip checks and downstream tooling).
pub fn read_rates_csv(path: &Path) -> Result<Vec<RateRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for line in text.lines().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        anyhow::ensure!(f.len() == 8, "bad rates row: {line}");
        rows.push(RateRow {
            quantity: f[0].to_string(),
            n: f[1].parse()?,
            a_or_alpha: f[2].parse()?,
            k: f[3].parse()?,
            norm_value: f[4].parse()?,
            fitted_rate: f[5].parse()?,
            expected_rate: f[6].parse()?,
            pass: f[7].parse()?,
        });
    }
    Ok(rows)
}

/// Shared metadata block for JSON reports.
pub fn metadata(cfg: &RunConfig) -> serde_json::Value {
    serde_json::json!({
        "config": cfg.render(),
        "mollifier": cfg.mollifier,
        "torus_factor": cfg.torus_factor,
        "tight_range": cfg.tight_range,
        "tolerances": {
            "range_relative": 1e-9,
            "positivity_relative": 1e-12,
            "poisson_mass": 1e-10,
            "rate_threshold_gamma": -0.35,
            "rate_threshold_symbol_gap": -0.9,
        },
    })
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}
