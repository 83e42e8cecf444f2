//! Orchestration: cached Poisson tables, memory feasibility, and the
//! artifact layout shared by the subcommands.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use frd_core::averaging::mollifier_sources;
use frd_core::dirichlet::{poisson_kernel, PoissonKernelTable};
use frd_core::fluctuation::{FluctuationCovariance, PoissonProvider};
use frd_core::lattice::{make_cube, LatticeSpec};

use crate::cache::{self, EntryHeader, PayloadKind};
use crate::config::RunConfig;

/// Poisson provider backed by the on-disk cache. Entries above the
/// configured payload threshold are computed but not stored.
pub struct CachingProvider {
    dir: PathBuf,
    max_entry_bytes: u64,
    pub hits: u64,
    pub misses: u64,
}

impl CachingProvider {
    pub fn new(cfg: &RunConfig) -> Self {
        CachingProvider {
            dir: cfg.cache_dir.clone(),
            max_entry_bytes: cfg.cache_max_entry_mb * 1024 * 1024,
            hits: 0,
            misses: 0,
        }
    }

    fn header(spec: &LatticeSpec, n: u32, m: u32, a: f64, rows: u64, cols: u64) -> EntryHeader {
        EntryHeader {
            kind: PayloadKind::PoissonTable,
            d: spec.dimension() as u16,
            l: spec.block_scale() as u32,
            n: n as u16,
            m: m as u16,
            tight_range: spec.tight_range(),
            a,
            rows,
            cols,
        }
    }
}

impl PoissonProvider for CachingProvider {
    fn table(
        &mut self,
        spec: &LatticeSpec,
        n: u32,
        m: u32,
        a: f64,
    ) -> frd_core::Result<Arc<PoissonKernelTable>> {
        let cube = make_cube(spec, n, m)?;
        let sources = mollifier_sources(spec, n, m)?;
        let rows = sources.len() as u64;
        let cols = cube.boundary_count() as u64;
        let header = Self::header(spec, n, m, a, rows, cols);
        let path = cache::entry_path(&self.dir, &header);
        if let Some((h, payload)) = cache::read_validated(&path) {
            if h == header {
                let masses: Vec<Vec<f64>> =
                    payload.chunks_exact(cols as usize).map(|c| c.to_vec()).collect();
                if let Ok(table) =
                    PoissonKernelTable::from_parts(cube.clone(), a, sources.clone(), masses)
                {
                    self.hits += 1;
                    return Ok(Arc::new(table));
                }
            }
        }
        self.misses += 1;
        let table = poisson_kernel(&cube, a, &sources)?;
        let payload_bytes = rows * cols * 8;
        if payload_bytes <= self.max_entry_bytes {
            let flat: Vec<f64> =
                table.masses().iter().flat_map(|row| row.iter().copied()).collect();
            if let Ok(bytes) = cache::encode(&header, &flat) {
                // Failure to persist is not fatal; the table is valid.
                let _ = cache::write_atomic(&path, &bytes);
            }
        }
        Ok(Arc::new(table))
    }
}

/// Peak-allocation estimate for a pipeline touching scales up to `n_deep`:
/// a handful of sector arrays plus the largest Poisson table.
pub fn estimate_peak_bytes(spec: &LatticeSpec, n_deep: u32) -> u128 {
    let d = spec.dimension() as u32;
    let m_axis = spec.torus_factor() as u128 * (spec.block_scale() as u128).pow(n_deep + 1);
    let sector = (m_axis / 2 + 1).pow(d) * 8;
    // symbol accumulator + averaging scatter + kernel + Lévy accumulator
    let arrays = 4 * sector;
    // m = 0 table at the deepest scale: |ball(W/4)| sources × 2dK^{d-1}.
    let w = (spec.block_scale() as u128).pow(n_deep + 1);
    let r = w as f64 / 4.0;
    let ball = (0..spec.dimension()).fold(1.0f64, |acc, _| acc * (2.0 * r + 1.0));
    let ball = ball.min(1e18) as u128; // box bound on the source count
    let boundary = 2 * d as u128 * (w - 1).pow(d - 1);
    arrays + ball.min(1_000_000) * boundary * 8
}

/// Refuses configurations whose estimate exceeds the cap, with a report.
pub fn check_memory(cfg: &RunConfig, spec: &LatticeSpec, n_deep: u32) -> Result<()> {
    let est = estimate_peak_bytes(spec, n_deep);
    let cap = (cfg.memory_cap_gb * 1024.0 * 1024.0 * 1024.0) as u128;
    if est > cap {
        bail!(
            "estimated peak allocation {:.2} GiB exceeds memory_cap_gb = {} \
             (d = {}, L = {}, deepest scale {}, torus side {} sites): \
             reduce n_ref/n_max or raise the cap",
            est as f64 / (1u64 << 30) as f64,
            cfg.memory_cap_gb,
            spec.dimension(),
            spec.block_scale(),
            n_deep,
            spec.torus_factor() as u64 * spec.block_scale().pow(n_deep + 1),
        );
    }
    Ok(())
}

/// Artifact file naming inside an output directory.
pub fn artifact_path(out: &Path, kind: PayloadKind, a_index: usize, n: u32) -> PathBuf {
    let tag = match kind {
        PayloadKind::KernelSector => "kernel",
        PayloadKind::SymbolSector => "symbol",
        PayloadKind::PoissonTable => "poisson",
    };
    out.join(format!("gamma_a{a_index}_n{n}.{tag}.frd"))
}

/// Writes a covariance's kernel and symbol sectors as artifacts.
pub fn write_covariance(
    out: &Path,
    spec: &LatticeSpec,
    a_index: usize,
    a: f64,
    cov: &FluctuationCovariance,
) -> Result<()> {
    for (kind, vals) in [
        (PayloadKind::KernelSector, cov.kernel().sector().values()),
        (PayloadKind::SymbolSector, cov.symbol().sector().values()),
    ] {
        let header = EntryHeader {
            kind,
            d: spec.dimension() as u16,
            l: spec.block_scale() as u32,
            n: cov.n() as u16,
            m: 0,
            tight_range: spec.tight_range(),
            a,
            rows: vals.len() as u64,
            cols: 1,
        };
        let bytes = cache::encode(&header, vals)?;
        cache::write_atomic(&artifact_path(out, kind, a_index, cov.n()), &bytes)?;
    }
    Ok(())
}

/// Reads a sector artifact back.
pub fn read_sector_artifact(path: &Path) -> Result<(EntryHeader, Vec<f64>)> {
    cache::read_validated(path)
        .ok_or_else(|| anyhow!("artifact {} is missing or corrupted", path.display()))
}

/// Grid reconstruction for an artifact header.
pub fn grid_for(header: &EntryHeader) -> Result<frd_core::lattice::TorusGrid> {
    let p = (header.l as u64).trailing_zeros();
    let spec = LatticeSpec::with_dimension_override(header.d as usize, p, header.n as u32)
        .context("artifact header")?;
    Ok(spec.grid(header.n as u32)?)
}
