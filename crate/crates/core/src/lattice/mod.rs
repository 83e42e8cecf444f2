//! Lattice geometry: dyadic scale bookkeeping, periodic torus grids, cubes
//! with lattice boundaries, fields and forward differences.
//!
//! Coordinate conventions used throughout:
//!
//! * Sites of the spacing-`ε` torus are addressed in *lattice units*, signed
//!   integers `c ∈ [-M/2, M/2)` per axis; the physical coordinate is `c·ε`.
//! * Flat storage is row-major over unsigned indices `j ∈ [0, M)` with
//!   `c = j` for `j < M/2` and `c = j - M` otherwise (FFT ordering, no
//!   shifting required).
//! * Momenta are `p = 2πk/(Mε)` for signed `k ∈ [-M/2, M/2)`, a finite
//!   subset of the Brillouin zone `[-π/ε, π/ε]^d`.

pub mod even;
pub mod fft;

use crate::{Error, Result};

/// Dyadic scale bookkeeping: dimension `d`, block scale `L = 2^p`, deepest
/// scale index `n_max`, torus size, and the cube-geometry variant.
///
/// Scale `n` carries lattice spacing `ε_n = L^{-n}`; cube index `m` carries
/// edge `R_m = L^{-(m-1)}` (divided by 16 under `tight_range`).
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeSpec {
    d: usize,
    p: u32,
    n_max: u32,
    torus_factor: u32,
    tight_range: bool,
}

impl LatticeSpec {
    /// Standard constructor; requires `d >= 3` and `p >= 1`.
    pub fn new(d: usize, p: u32, n_max: u32) -> Result<Self> {
        if d < 3 {
            return Err(Error::DimensionTooLow(d));
        }
        Self::with_dimension_override(d, p, n_max)
    }

    /// Constructor allowing `d < 3`. The decomposition theory assumes
    /// `d >= 3`; lower dimensions are admitted for diagnostics and cheap
    /// geometry checks only.
    pub fn with_dimension_override(d: usize, p: u32, n_max: u32) -> Result<Self> {
        if d == 0 || d > 6 {
            return Err(Error::InvalidParameter(format!("dimension {d} out of range 1..=6")));
        }
        if p < 1 {
            return Err(Error::InvalidParameter("exponent p must be >= 1".into()));
        }
        if p as usize * (n_max as usize + 2) > 40 {
            return Err(Error::InvalidParameter(format!(
                "L^(n_max+2) = 2^{} overflows any practical grid",
                p * (n_max + 2)
            )));
        }
        Ok(LatticeSpec { d, p, n_max, torus_factor: 16, tight_range: false })
    }

    /// Overrides the torus side multiplier (side = factor · L). The default
    /// 16 makes periodization exact for kernels of range up to `8L`; 13 is
    /// the minimum that stays alias-free for the range-`6L` covariances.
    pub fn with_torus_factor(mut self, factor: u32) -> Result<Self> {
        if factor < 13 {
            return Err(Error::Configuration(format!(
                "torus_factor {factor} < 13 would alias range-6L kernels"
            )));
        }
        self.torus_factor = factor;
        Ok(self)
    }

    /// Enables the alternative cube geometry: `R_m` shrunk by 1/16 and the
    /// mollifier range by 1/16, which compresses the covariance range to
    /// below `L/2`. Only usable where `R_m/ε_n` stays an even integer.
    pub fn with_tight_range(mut self) -> Self {
        self.tight_range = true;
        self
    }

    pub fn dimension(&self) -> usize {
        self.d
    }

    /// Block scale `L = 2^p`.
    pub fn block_scale(&self) -> u64 {
        1u64 << self.p
    }

    pub fn exponent(&self) -> u32 {
        self.p
    }

    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    pub fn torus_factor(&self) -> u32 {
        self.torus_factor
    }

    pub fn tight_range(&self) -> bool {
        self.tight_range
    }

    /// Lattice spacing `ε_n = L^{-n}` (exact in binary floating point).
    pub fn eps(&self, n: u32) -> f64 {
        (self.block_scale() as f64).powi(-(n as i32))
    }

    /// Cube edge `R_m = L^{-(m-1)}`, or `L^{-(m-1)}/16` under `tight_range`.
    pub fn cube_edge(&self, m: u32) -> f64 {
        let base = (self.block_scale() as f64).powi(1 - m as i32);
        if self.tight_range {
            base / 16.0
        } else {
            base
        }
    }

    /// Mollifier range: `L/4`, or `L/64` under `tight_range`. Always equals
    /// `cube_edge(1) * L / 4`.
    pub fn mollifier_range(&self) -> f64 {
        let base = self.block_scale() as f64 / 4.0;
        if self.tight_range {
            base / 16.0
        } else {
            base
        }
    }

    /// Physical torus side, `torus_factor · L`.
    pub fn side(&self) -> f64 {
        (self.torus_factor as u64 * self.block_scale()) as f64
    }

    /// The scale-`n` torus grid: spacing `ε_n`, side `torus_factor · L`.
    pub fn grid(&self, n: u32) -> Result<TorusGrid> {
        if n > self.n_max {
            return Err(Error::InvalidScale { m: 0, n, n_max: self.n_max });
        }
        let m = self.torus_factor as u64 * self.block_scale().pow(n + 1);
        TorusGrid::new(self.d, m as usize, self.eps(n))
    }

    /// Like [`grid`](Self::grid) but without the `n <= n_max` bound, for
    /// proxy scales finer than the configured decomposition depth.
    pub fn grid_unchecked(&self, n: u32) -> Result<TorusGrid> {
        let m = self.torus_factor as u64 * self.block_scale().pow(n + 1);
        TorusGrid::new(self.d, m as usize, self.eps(n))
    }

    /// Sites per axis of the cube of index `m` on the scale-`n` lattice,
    /// `W = R_m/ε_n`. Errors unless this is an even integer >= 2.
    pub fn cube_sites_across(&self, n: u32, m: u32) -> Result<i64> {
        if m > n || n > self.n_max {
            return Err(Error::InvalidScale { m, n, n_max: self.n_max });
        }
        let pow = self.block_scale().pow(n - m + 1) as i64;
        let w = if self.tight_range {
            if pow % 16 != 0 {
                return Err(Error::EmptyCube { edge: self.cube_edge(m), eps: self.eps(n) });
            }
            pow / 16
        } else {
            pow
        };
        if w < 2 || w % 2 != 0 {
            return Err(Error::EmptyCube { edge: self.cube_edge(m), eps: self.eps(n) });
        }
        Ok(w)
    }
}

/// A periodic `d`-dimensional grid with `M` sites per axis and spacing `eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusGrid {
    d: usize,
    m: usize,
    eps: f64,
}

impl TorusGrid {
    pub fn new(d: usize, m: usize, eps: f64) -> Result<Self> {
        if m < 2 || m % 2 != 0 {
            return Err(Error::InvalidParameter(format!("sites per axis {m} must be even >= 2")));
        }
        if !(eps > 0.0) {
            return Err(Error::InvalidParameter("lattice spacing must be positive".into()));
        }
        let sites = (m as u128).pow(d as u32);
        if sites > usize::MAX as u128 / 16 {
            return Err(Error::Configuration(format!("grid of {m}^{d} sites is not addressable")));
        }
        Ok(TorusGrid { d, m, eps })
    }

    pub fn dimension(&self) -> usize {
        self.d
    }

    /// Sites per axis.
    pub fn sites_per_axis(&self) -> usize {
        self.m
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Physical side length `M · eps`.
    pub fn side(&self) -> f64 {
        self.m as f64 * self.eps
    }

    pub fn num_sites(&self) -> usize {
        self.m.pow(self.d as u32)
    }

    /// Lattice integration measure per site, `eps^d`.
    pub fn site_measure(&self) -> f64 {
        self.eps.powi(self.d as i32)
    }

    /// Signed lattice-unit coordinate of an unsigned axis index.
    #[inline]
    pub fn signed(&self, j: usize) -> i64 {
        if j < self.m / 2 {
            j as i64
        } else {
            j as i64 - self.m as i64
        }
    }

    /// Unsigned axis index of a signed lattice-unit coordinate (wrapped).
    #[inline]
    pub fn unsigned(&self, c: i64) -> usize {
        c.rem_euclid(self.m as i64) as usize
    }

    /// Flat row-major index from signed lattice-unit coordinates.
    pub fn flat_from_units(&self, units: &[i64]) -> usize {
        debug_assert_eq!(units.len(), self.d);
        let mut idx = 0usize;
        for &c in units {
            idx = idx * self.m + self.unsigned(c);
        }
        idx
    }

    /// Signed lattice-unit coordinates from a flat index.
    pub fn units_from_flat(&self, mut flat: usize, out: &mut [i64]) {
        for ax in (0..self.d).rev() {
            out[ax] = self.signed(flat % self.m);
            flat /= self.m;
        }
    }

    /// Momentum component for signed index `k`: `2πk/(Mε)`.
    #[inline]
    pub fn momentum(&self, k: i64) -> f64 {
        2.0 * std::f64::consts::PI * k as f64 / self.side()
    }

    /// Minimal-image Euclidean distance (physical) from the origin.
    pub fn torus_distance(&self, units: &[i64]) -> f64 {
        let half = self.m as i64 / 2;
        let mut s = 0.0;
        for &c in units {
            let mut w = c.rem_euclid(self.m as i64);
            if w > half {
                w -= self.m as i64;
            }
            let x = w as f64 * self.eps;
            s += x * x;
        }
        s.sqrt()
    }
}

/// Visits every multi-index in `[0, dims[0]) × ... × [0, dims[d-1])` in
/// row-major order.
pub fn for_each_index(dims: &[usize], mut f: impl FnMut(&[usize])) {
    let d = dims.len();
    if dims.iter().any(|&s| s == 0) {
        return;
    }
    let mut idx = vec![0usize; d];
    loop {
        f(&idx);
        let mut ax = d;
        loop {
            if ax == 0 {
                return;
            }
            ax -= 1;
            idx[ax] += 1;
            if idx[ax] < dims[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
}

/// An axis-aligned open cube `(-R/2, R/2)^d` on a lattice, together with its
/// one-layer lattice boundary.
///
/// `w = R/ε` is even, so the faces of the continuum cube pass through
/// lattice points: the interior is `{|c_i| <= w/2 - 1 ∀i}` and the boundary
/// consists of sites with exactly one `|c_i| = w/2` and the rest interior, so
/// every boundary site lies on a face of the continuum cube.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeRegion {
    d: usize,
    w: i64,
    eps: f64,
}

impl CubeRegion {
    pub fn new(d: usize, w: i64, eps: f64) -> Result<Self> {
        if w < 2 || w % 2 != 0 {
            return Err(Error::InvalidParameter(format!("cube width {w} must be even >= 2")));
        }
        Ok(CubeRegion { d, w, eps })
    }

    pub fn dimension(&self) -> usize {
        self.d
    }

    /// Sites per axis across the cube (`R/ε`).
    pub fn sites_across(&self) -> i64 {
        self.w
    }

    /// Physical edge length `R`.
    pub fn edge(&self) -> f64 {
        self.w as f64 * self.eps
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Largest interior coordinate per axis, `w/2 - 1`.
    pub fn interior_half(&self) -> i64 {
        self.w / 2 - 1
    }

    /// Interior sites per axis, `w - 1`.
    pub fn interior_across(&self) -> i64 {
        self.w - 1
    }

    pub fn interior_count(&self) -> usize {
        (self.interior_across() as usize).pow(self.d as u32)
    }

    pub fn is_interior(&self, units: &[i64]) -> bool {
        units.iter().all(|c| c.abs() <= self.interior_half())
    }

    pub fn is_boundary(&self, units: &[i64]) -> bool {
        // Exactly one face coordinate, all others strictly interior: such a
        // site has precisely one nearest neighbour inside the cube.
        let h = self.w / 2;
        let mut on_face = 0;
        for &c in units {
            if c.abs() == h {
                on_face += 1;
            } else if c.abs() > h {
                return false;
            }
        }
        on_face == 1
    }

    /// All interior sites in lexicographic order (signed lattice units).
    pub fn interior_sites(&self) -> Vec<Vec<i64>> {
        let k = self.interior_across() as usize;
        let h = self.interior_half();
        let mut out = Vec::with_capacity(self.interior_count());
        for_each_index(&vec![k; self.d], |idx| {
            out.push(idx.iter().map(|&i| i as i64 - h).collect());
        });
        out
    }

    /// All boundary sites, face by face, in a fixed deterministic order.
    pub fn boundary_sites(&self) -> Vec<Vec<i64>> {
        let h = self.w / 2;
        let k = self.interior_across() as usize;
        let mut out = Vec::new();
        for ax in 0..self.d {
            for sign in [-1i64, 1] {
                let tangential = vec![k; self.d - 1];
                for_each_index(&tangential, |idx| {
                    let mut site = Vec::with_capacity(self.d);
                    let mut t = 0;
                    for a in 0..self.d {
                        if a == ax {
                            site.push(sign * h);
                        } else {
                            site.push(idx[t] as i64 - self.interior_half());
                            t += 1;
                        }
                    }
                    out.push(site);
                });
            }
        }
        out
    }

    pub fn boundary_count(&self) -> usize {
        2 * self.d * (self.interior_across() as usize).pow(self.d as u32 - 1)
    }

    /// The unique interior nearest neighbour of a boundary site.
    pub fn interior_neighbour(&self, boundary: &[i64]) -> Vec<i64> {
        let h = self.w / 2;
        let mut v = boundary.to_vec();
        for c in v.iter_mut() {
            if *c == h {
                *c -= 1;
            } else if *c == -h {
                *c += 1;
            }
        }
        v
    }
}

/// Builds the cube `U_{ε_n}(R_m)` centered at the origin of the scale-`n`
/// lattice. Requires `0 <= m <= n <= n_max`.
pub fn make_cube(spec: &LatticeSpec, n: u32, m: u32) -> Result<CubeRegion> {
    let w = spec.cube_sites_across(n, m)?;
    CubeRegion::new(spec.dimension(), w, spec.eps(n))
}

/// A real-valued function on a torus grid.
#[derive(Debug, Clone)]
pub struct LatticeField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl LatticeField {
    pub fn zeros(grid: TorusGrid) -> Self {
        let n = grid.num_sites();
        LatticeField { grid, values: vec![0.0; n] }
    }

    pub fn from_values(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_sites() {
            return Err(Error::InvalidParameter(format!(
                "field has {} values, grid has {} sites",
                values.len(),
                grid.num_sites()
            )));
        }
        Ok(LatticeField { grid, values })
    }

    /// Builds a field from a function of the signed lattice-unit coordinates.
    pub fn from_fn(grid: TorusGrid, mut f: impl FnMut(&[i64]) -> f64) -> Self {
        let d = grid.dimension();
        let mut values = vec![0.0; grid.num_sites()];
        let mut units = vec![0i64; d];
        for (flat, v) in values.iter_mut().enumerate() {
            grid.units_from_flat(flat, &mut units);
            *v = f(&units);
        }
        LatticeField { grid, values }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, units: &[i64]) -> f64 {
        self.values[self.grid.flat_from_units(units)]
    }
}

/// Forward lattice derivative `(∂f)(x) = ε^{-1}(f(x + ε e_axis) - f(x))`,
/// applied `order` times, with periodic wraparound.
pub fn forward_diff(f: &LatticeField, axis: usize, order: u32) -> LatticeField {
    assert!(axis < f.grid.dimension(), "axis {axis} out of range");
    let grid = f.grid.clone();
    let m = grid.sites_per_axis();
    let d = grid.dimension();
    // Stride of one step along `axis` in the row-major layout.
    let stride = m.pow((d - 1 - axis) as u32);
    let block = stride * m; // span of a full axis period
    let inv_eps = 1.0 / grid.eps();
    let mut cur = f.values.clone();
    let mut next = vec![0.0; cur.len()];
    for _ in 0..order {
        for (i, out) in next.iter_mut().enumerate() {
            let base = i - (i % block);
            let fwd = base + (i - base + stride) % block;
            *out = inv_eps * (cur[fwd] - cur[i]);
        }
        std::mem::swap(&mut cur, &mut next);
    }
    LatticeField { grid, values: cur }
}
