//! Binary artifact format: magic `FRD1`, a fixed header keying the entry,
//! an f64 little-endian payload, and a trailing 64-bit FNV-1a checksum.
//! Writes are atomic (temp file + rename); corrupted entries read as `None`
//! and are rebuilt, never used.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

pub const MAGIC: [u8; 4] = *b"FRD1";
pub const VERSION: u16 = 1;

/// What an entry's payload holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadKind {
    /// Poisson masses, row-major over (source, boundary site).
    PoissonTable = 1,
    /// Covariance kernel values on the reflection sector, row-major.
    KernelSector = 2,
    /// Covariance symbol values on the reflection sector, row-major.
    SymbolSector = 3,
}

impl PayloadKind {
    fn from_u8(v: u8) -> Option<Self> {
        match v {
            1 => Some(PayloadKind::PoissonTable),
            2 => Some(PayloadKind::KernelSector),
            3 => Some(PayloadKind::SymbolSector),
            _ => None,
        }
    }
}

/// Entry identity: lattice geometry, scale indices, and the resolvent
/// parameter (exact f64 bits).
#[derive(Debug, Clone, PartialEq)]
pub struct EntryHeader {
    pub kind: PayloadKind,
    pub d: u16,
    pub l: u32,
    pub n: u16,
    pub m: u16,
    pub tight_range: bool,
    pub a: f64,
    /// Payload shape: rows x cols (cols = 1 for flat sector payloads).
    pub rows: u64,
    pub cols: u64,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

pub fn encode(header: &EntryHeader, payload: &[f64]) -> Result<Vec<u8>> {
    if payload.len() as u64 != header.rows * header.cols {
        bail!("payload length {} does not match shape", payload.len());
    }
    let mut buf = Vec::with_capacity(48 + payload.len() * 8 + 8);
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(header.kind as u8);
    buf.push(header.tight_range as u8);
    buf.extend_from_slice(&header.d.to_le_bytes());
    buf.extend_from_slice(&header.l.to_le_bytes());
    buf.extend_from_slice(&header.n.to_le_bytes());
    buf.extend_from_slice(&header.m.to_le_bytes());
    buf.extend_from_slice(&header.a.to_le_bytes());
    buf.extend_from_slice(&header.rows.to_le_bytes());
    buf.extend_from_slice(&header.cols.to_le_bytes());
    let payload_start = buf.len();
    for v in payload {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let checksum = fnv1a(&buf[payload_start..]);
    buf.extend_from_slice(&checksum.to_le_bytes());
    Ok(buf)
}

pub fn decode(bytes: &[u8]) -> Option<(EntryHeader, Vec<f64>)> {
    const HEADER_LEN: usize = 4 + 2 + 1 + 1 + 2 + 4 + 2 + 2 + 8 + 8 + 8;
    if bytes.len() < HEADER_LEN + 8 || bytes[..4] != MAGIC {
        return None;
    }
    let mut off = 4usize;
    let mut take = |k: usize| {
        let s = &bytes[off..off + k];
        off += k;
        s
    };
    let version = u16::from_le_bytes(take(2).try_into().ok()?);
    if version != VERSION {
        return None;
    }
    let kind = PayloadKind::from_u8(take(1)[0])?;
    let tight_range = take(1)[0] != 0;
    let d = u16::from_le_bytes(take(2).try_into().ok()?);
    let l = u32::from_le_bytes(take(4).try_into().ok()?);
    let n = u16::from_le_bytes(take(2).try_into().ok()?);
    let m = u16::from_le_bytes(take(2).try_into().ok()?);
    let a = f64::from_le_bytes(take(8).try_into().ok()?);
    let rows = u64::from_le_bytes(take(8).try_into().ok()?);
    let cols = u64::from_le_bytes(take(8).try_into().ok()?);
    let count = rows.checked_mul(cols)? as usize;
    let payload_bytes = count.checked_mul(8)?;
    if bytes.len() != HEADER_LEN + payload_bytes + 8 {
        return None;
    }
    let payload_slice = &bytes[HEADER_LEN..HEADER_LEN + payload_bytes];
    let stored = u64::from_le_bytes(bytes[HEADER_LEN + payload_bytes..].try_into().ok()?);
    if fnv1a(payload_slice) != stored {
        return None;
    }
    let payload: Vec<f64> = payload_slice
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Some((EntryHeader { kind, d, l, n, m, tight_range, a, rows, cols }, payload))
}

/// Writes atomically: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating directory {}", dir.display()))?;
    let tmp = dir.join(format!(
        ".tmp-{}-{}",
        std::process::id(),
        path.file_name().and_then(|s| s.to_str()).unwrap_or("entry")
    ));
    {
        let mut f = std::fs::File::create(&tmp)
            .with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
        .with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// Reads and validates an entry; any corruption yields `None`.
pub fn read_validated(path: &Path) -> Option<(EntryHeader, Vec<f64>)> {
    let bytes = std::fs::read(path).ok()?;
    decode(&bytes)
}

/// Deterministic cache file name for an entry key. The parameter is keyed
/// by its exact bit pattern.
pub fn entry_path(dir: &Path, header: &EntryHeader) -> PathBuf {
    let kind = match header.kind {
        PayloadKind::PoissonTable => "poisson",
        PayloadKind::KernelSector => "kernel",
        PayloadKind::SymbolSector => "symbol",
    };
    dir.join(format!(
        "{kind}_d{}_L{}_n{}_m{}_g{}_a{:016x}.frd",
        header.d,
        header.l,
        header.n,
        header.m,
        header.tight_range as u8,
        header.a.to_bits()
    ))
}
