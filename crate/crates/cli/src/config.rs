//! Run configuration: flat `key = value` text, one key per line, `#`
//! comments. Unknown keys are rejected so typos can't silently fall back to
//! defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use frd_core::lattice::LatticeSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub d: usize,
    /// Block scale exponent: `L = 2^p`.
    pub p: u32,
    /// Decomposition truncation depth (scales `0..=n_max` are summed).
    pub n_max: u32,
    /// Proxy scale standing in for the continuum limit; must exceed the
    /// deepest compared scale.
    pub n_ref: u32,
    pub a_values: Vec<f64>,
    pub alpha: Option<f64>,
    /// Mollifier profile identifier; only the compactly supported radial
    /// bump is implemented.
    pub mollifier: String,
    pub torus_factor: u32,
    pub tight_range: bool,
    pub k_orders: Vec<u32>,
    /// Lévy quadrature: panel edges in the substituted variable and the
    /// Gauss–Legendre order per panel.
    pub quad_panels: Vec<f64>,
    pub quad_nodes: usize,
    pub cache_dir: PathBuf,
    pub seed: u64,
    /// Refuse runs whose estimated peak allocation exceeds this.
    pub memory_cap_gb: f64,
    /// Unit-lattice probe radius for the reconstruction identity.
    pub probe_radius: i64,
    /// Cache entries above this payload size are recomputed rather than
    /// stored (keeps cache directories small; the large proxy-scale tables
    /// are one-shot).
    pub cache_max_entry_mb: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            d: 3,
            p: 1,
            n_max: 3,
            n_ref: 4,
            a_values: vec![0.0, 1.0, 4.0, 16.0],
            alpha: Some(1.0),
            mollifier: "bump".to_string(),
            torus_factor: 16,
            tight_range: false,
            k_orders: vec![0, 2],
            quad_panels: vec![0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 30.0],
            quad_nodes: 4,
            cache_dir: PathBuf::from("frd-cache"),
            seed: 7,
            memory_cap_gb: 4.0,
            probe_radius: 4,
            cache_max_entry_mb: 64,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("config line {}: expected `key = value`, got `{raw}`", lineno + 1);
            };
            if map.insert(key.trim().to_string(), value.trim().to_string()).is_some() {
                bail!("config line {}: duplicate key `{}`", lineno + 1, key.trim());
            }
        }
        let mut cfg = RunConfig::default();
        for (key, value) in &map {
            match key.as_str() {
                "d" => cfg.d = value.parse().context("d")?,
                "p" => cfg.p = value.parse().context("p")?,
                "l" => {
                    let l: u64 = value.parse().context("l")?;
                    if !l.is_power_of_two() || l < 2 {
                        bail!("l = {l} must be a power of two >= 2");
                    }
                    cfg.p = l.trailing_zeros();
                }
                "n_max" => cfg.n_max = value.parse().context("n_max")?,
                "n_ref" => cfg.n_ref = value.parse().context("n_ref")?,
                "a_values" => cfg.a_values = parse_list(value).context("a_values")?,
                "alpha" => {
                    cfg.alpha =
                        if value == "none" { None } else { Some(value.parse().context("alpha")?) }
                }
                "mollifier" => cfg.mollifier = value.to_string(),
                "torus_factor" => cfg.torus_factor = value.parse().context("torus_factor")?,
                "tight_range" => cfg.tight_range = parse_bool(value).context("tight_range")?,
                "k_orders" => {
                    cfg.k_orders = value
                        .split(',')
                        .map(|s| s.trim().parse::<u32>())
                        .collect::<std::result::Result<_, _>>()
                        .context("k_orders")?
                }
                "quad_panels" => cfg.quad_panels = parse_list(value).context("quad_panels")?,
                "quad_nodes" => cfg.quad_nodes = value.parse().context("quad_nodes")?,
                "cache_dir" => cfg.cache_dir = PathBuf::from(value),
                "seed" => cfg.seed = value.parse().context("seed")?,
                "memory_cap_gb" => cfg.memory_cap_gb = value.parse().context("memory_cap_gb")?,
                "probe_radius" => cfg.probe_radius = value.parse().context("probe_radius")?,
                "cache_max_entry_mb" => {
                    cfg.cache_max_entry_mb = value.parse().context("cache_max_entry_mb")?
                }
                other => bail!("unknown config key `{other}`"),
            }
        }
        Ok(cfg)
    }

    /// Validates parameter ranges and materializes the lattice spec. The
    /// spec's deepest buildable scale covers the proxy.
    pub fn lattice_spec(&self, allow_low_dim: bool) -> Result<LatticeSpec> {
        if self.mollifier != "bump" {
            bail!("unknown mollifier profile `{}` (only `bump` is implemented)", self.mollifier);
        }
        if self.torus_factor < 13 {
            bail!("torus_factor {} < 13 aliases range-6L kernels", self.torus_factor);
        }
        if let Some(alpha) = self.alpha {
            if !(alpha > 0.0 && alpha < 2.0) {
                bail!("alpha = {alpha} outside (0, 2)");
            }
        }
        if self.a_values.is_empty() || self.a_values.iter().any(|&a| !(a >= 0.0)) {
            bail!("a_values must be nonempty and >= 0");
        }
        if self.n_ref <= self.n_max.min(self.n_ref.saturating_sub(1)) && self.n_ref <= self.n_max {
            // n_ref <= n_max is fine structurally; rates need n_ref > scales,
            // checked where rates are computed.
        }
        let deepest = self.n_max.max(self.n_ref);
        let spec = if allow_low_dim {
            LatticeSpec::with_dimension_override(self.d, self.p, deepest)?
        } else {
            LatticeSpec::new(self.d, self.p, deepest)?
        };
        let spec = spec.with_torus_factor(self.torus_factor)?;
        Ok(if self.tight_range { spec.with_tight_range() } else { spec })
    }

    /// Canonical text rendering (used to echo the effective config into
    /// reports; reparses to an identical config).
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        push("d", self.d.to_string());
        push("p", self.p.to_string());
        push("n_max", self.n_max.to_string());
        push("n_ref", self.n_ref.to_string());
        push("a_values", join_floats(&self.a_values));
        push("alpha", self.alpha.map(|a| format!("{a}")).unwrap_or_else(|| "none".into()));
        push("mollifier", self.mollifier.clone());
        push("torus_factor", self.torus_factor.to_string());
        push("tight_range", self.tight_range.to_string());
        push(
            "k_orders",
            self.k_orders.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(","),
        );
        push("quad_panels", join_floats(&self.quad_panels));
        push("quad_nodes", self.quad_nodes.to_string());
        push("cache_dir", self.cache_dir.display().to_string());
        push("seed", self.seed.to_string());
        push("memory_cap_gb", format!("{}", self.memory_cap_gb));
        push("probe_radius", self.probe_radius.to_string());
        push("cache_max_entry_mb", self.cache_max_entry_mb.to_string());
        out
    }
}

fn parse_list(value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(Into::into))
        .collect::<Result<Vec<f64>>>()
}

fn parse_bool(value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => bail!("expected boolean, got `{other}`"),
    }
}

fn join_floats(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_render() {
        let cfg = RunConfig::default();
        let echo = RunConfig::parse(&cfg.render()).unwrap();
        assert_eq!(cfg, echo);
    }

    #[test]
    fn parses_keys_and_comments() {
        let cfg = RunConfig::parse(
            "# acceptance run\n d = 3\n p = 1 # L = 2\n a_values = 0, 1, 4\n tight_range = true\n",
        )
        .unwrap();
        assert_eq!(cfg.d, 3);
        assert_eq!(cfg.a_values, vec![0.0, 1.0, 4.0]);
        assert!(cfg.tight_range);
    }

    #[test]
    fn rejects_unknown_keys_and_duplicates() {
        assert!(RunConfig::parse("dd = 3\n").is_err());
        assert!(RunConfig::parse("d = 3\nd = 4\n").is_err());
        assert!(RunConfig::parse("l = 3\n").is_err());
    }

    #[test]
    fn spec_validation() {
        let mut cfg = RunConfig::default();
        cfg.torus_factor = 8;
        assert!(cfg.lattice_spec(false).is_err());
        let mut cfg = RunConfig::default();
        cfg.alpha = Some(2.5);
        assert!(cfg.lattice_spec(false).is_err());
        let mut cfg = RunConfig::default();
        cfg.d = 2;
        assert!(cfg.lattice_spec(false).is_err());
        assert!(cfg.lattice_spec(true).is_ok());
    }
}
