//! Lattice and continuum Laplacian symbols and resolvent Green's functions.
//!
//! The lattice resolvent `G^a_ε = (-Δ_ε + a)^{-1}` has symbol
//! `Ĝ(p) = (a - Δ̂_ε(p))^{-1}` with `-Δ̂_ε(p) = 2ε^{-2} Σ_μ (1 - cos(ε p_μ))`;
//! the continuum counterpart is `(a + p²)^{-1}`. Besides the torus kernels
//! (periodized, exact at the momentum grid) this module evaluates the
//! *infinite*-lattice unit resolvent through its heat-kernel representation
//! `G^a(x) = ∫_0^∞ e^{-at} Π_i e^{-2t} I_{x_i}(2t) dt`, which serves as an
//! independent reference for the decomposition identity.

use crate::lattice::even::{EvenKernel, EvenSymbol, SectorArray};
use crate::lattice::{for_each_index, TorusGrid};
use crate::quad::{geometric_edges, pairwise_sum, Rule};
use crate::special::bessel_i_scaled;
use crate::{Error, Result};

/// Lower bound constant in `0 <= Ĝ^a_ε(p) <= (a + b p²)^{-1}`: the minimum
/// of `2(1 - cos t)/t²` over `t ∈ [-π, π]`, attained at the zone edge.
pub const B_LOWER: f64 = 4.0 / (std::f64::consts::PI * std::f64::consts::PI);

/// Resolvent parameter and the grid it acts on.
#[derive(Debug, Clone)]
pub struct ResolventParams {
    a: f64,
    grid: TorusGrid,
}

impl ResolventParams {
    pub fn new(a: f64, grid: TorusGrid) -> Result<Self> {
        if !(a >= 0.0) || !a.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "resolvent parameter a = {a} must be >= 0"
            )));
        }
        Ok(ResolventParams { a, grid })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }
}

/// Negative lattice Laplacian symbol `-Δ̂_ε(p) = 2ε^{-2} Σ_μ (1 - cos(ε p_μ))`.
pub fn laplacian_symbol(eps: f64, p: &[f64]) -> f64 {
    let mut s = 0.0;
    for &pi in p {
        s += 1.0 - (eps * pi).cos();
    }
    2.0 * s / (eps * eps)
}

/// Lattice resolvent symbol `Ĝ^a_ε(p) = (a - Δ̂_ε(p))^{-1}`.
///
/// The massless zero mode `(a, p) = (0, 0)` is excluded; downstream users
/// either carry `a > 0` or project it out explicitly.
pub fn green_symbol(a: f64, eps: f64, p: &[f64]) -> Result<f64> {
    let lap = laplacian_symbol(eps, p);
    if a == 0.0 && lap == 0.0 {
        return Err(Error::ZeroMode);
    }
    Ok(1.0 / (a + lap))
}

/// Continuum resolvent symbol `(a + p²)^{-1}`.
pub fn green_symbol_continuum(a: f64, p: &[f64]) -> Result<f64> {
    let p2: f64 = p.iter().map(|x| x * x).sum();
    if a == 0.0 && p2 == 0.0 {
        return Err(Error::ZeroMode);
    }
    Ok(1.0 / (a + p2))
}

/// How to treat the `p = 0` mode of the massless symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZeroMode {
    /// Error out if `a = 0`.
    Reject,
    /// Set `Ĝ(0) = 0` at `a = 0`: the resolvent of the Laplacian restricted
    /// to mean-zero functions on the torus.
    Project,
}

/// Symbol values on the sector momentum grid.
pub fn green_symbol_sector(params: &ResolventParams, zero_mode: ZeroMode) -> Result<EvenSymbol> {
    let grid = params.grid.clone();
    if params.a == 0.0 && zero_mode == ZeroMode::Reject {
        return Err(Error::ZeroMode);
    }
    let d = grid.dimension();
    let s = grid.sites_per_axis() / 2 + 1;
    let eps = grid.eps();
    let mut arr = SectorArray::zeros(grid.clone());
    let vals = arr.values_mut();
    let mut p = vec![0.0f64; d];
    let mut flat = 0usize;
    for_each_index(&vec![s; d], |idx| {
        for (ax, &k) in idx.iter().enumerate() {
            p[ax] = grid.momentum(k as i64);
        }
        let lap = laplacian_symbol(eps, &p);
        vals[flat] = if params.a == 0.0 && lap == 0.0 { 0.0 } else { 1.0 / (params.a + lap) };
        flat += 1;
    });
    Ok(EvenSymbol(arr))
}

/// Torus resolvent kernel via the inverse transform of the symbol.
/// For `a = 0` the zero mode must be projected; the result is then the
/// Green's function on mean-zero functions.
pub fn green_kernel_even(params: &ResolventParams, zero_mode: ZeroMode) -> Result<EvenKernel> {
    Ok(green_symbol_sector(params, zero_mode)?.to_kernel())
}

/// Full-grid version of [`green_kernel_even`] (small grids).
pub fn green_kernel(
    params: &ResolventParams,
    zero_mode: ZeroMode,
) -> Result<crate::lattice::fft::RealKernel> {
    green_kernel_even(params, zero_mode)?.to_real_kernel(None)
}

const HEAT_CUTOFF: f64 = 100.0;

/// Infinite-lattice unit resolvent `G^a(x)` on `Z^d`, evaluated by
/// quadrature of the heat-kernel representation. For `a = 0` (requires
/// `d >= 3`) the integral tail beyond the cutoff is summed analytically from
/// the uniform asymptotics of `e^{-2t} I_n(2t)`; for `a > 0` the cutoff is
/// pushed until `e^{-aT}` is negligible, which restricts `a >= 0.01`.
pub fn green_infinite(d: usize, a: f64, x: &[i64]) -> Result<f64> {
    if x.len() != d {
        return Err(Error::InvalidParameter("coordinate dimension mismatch".into()));
    }
    let table = green_infinite_table(d, a, x.iter().map(|c| c.abs()).max().unwrap_or(0))?;
    Ok(table(x))
}

/// Tabulates `G^a` over the ball `|x_i| <= rmax`, sharing Bessel evaluations
/// across points. Returns a lookup closure over signed coordinates.
pub fn green_infinite_table(d: usize, a: f64, rmax: i64) -> Result<impl Fn(&[i64]) -> f64> {
    if rmax < 0 {
        return Err(Error::InvalidParameter("rmax must be >= 0".into()));
    }
    if !(a >= 0.0) {
        return Err(Error::InvalidParameter("a must be >= 0".into()));
    }
    if a == 0.0 && d < 3 {
        return Err(Error::InvalidParameter("massless resolvent diverges for d < 3".into()));
    }
    if a > 0.0 && a < 0.01 {
        return Err(Error::InvalidParameter(
            "heat-kernel quadrature supports a = 0 or a >= 0.01".into(),
        ));
    }
    let cutoff = if a == 0.0 { HEAT_CUTOFF } else { HEAT_CUTOFF.max(45.0 / a) };
    let rule = Rule::composite(24, &geometric_edges(0.5, cutoff, 1.8));
    // bessel[j][n] = e^{-2 t_j} I_n(2 t_j)
    let bessel: Vec<Vec<f64>> = rule
        .points
        .iter()
        .map(|&(t, _)| (0..=rmax as u32).map(|n| bessel_i_scaled(n, 2.0 * t)).collect())
        .collect();
    let s = rmax as usize + 1;
    let mut table = vec![0.0f64; s.pow(d as u32)];
    let mut flat = 0usize;
    for_each_index(&vec![s; d], |idx| {
        let terms: Vec<f64> = rule
            .points
            .iter()
            .zip(&bessel)
            .map(|(&(t, w), row)| {
                let mut v = w * (-a * t).exp();
                for &n in idx {
                    v *= row[n];
                }
                v
            })
            .collect();
        let mut val = pairwise_sum(&terms);
        if a == 0.0 {
            let orders: Vec<u32> = idx.iter().map(|&n| n as u32).collect();
            val += asymptotic_tail(d, &orders, cutoff);
        }
        table[flat] = val;
        flat += 1;
    });
    Ok(move |x: &[i64]| {
        let mut flat = 0usize;
        for &c in x {
            let r = c.unsigned_abs() as usize;
            assert!(r < s, "coordinate {c} outside tabulated ball");
            flat = flat * s + r;
        }
        table[flat]
    })
}

/// Analytic tail `∫_T^∞ Π_i e^{-2t} I_{n_i}(2t) dt` from the large-argument
/// expansion `e^{-z}I_n(z) ≈ (2πz)^{-1/2} Σ_k (-1)^k a_k(n) (8z)^{-k}`,
/// truncated after `1/t³`; the neglected order is `O(T^{-d/2 - 7/2})`.
fn asymptotic_tail(d: usize, orders: &[u32], t0: f64) -> f64 {
    // Per-axis coefficients of t^{-k} in e^{-2t} I_n(2t) * sqrt(4πt).
    let coeffs = |n: u32| -> [f64; 4] {
        let mu = 4.0 * (n as f64) * (n as f64);
        [
            1.0,
            -(mu - 1.0) / 16.0,
            (mu - 1.0) * (mu - 9.0) / 512.0,
            -(mu - 1.0) * (mu - 9.0) * (mu - 25.0) / 24576.0,
        ]
    };
    // Product over axes, truncated at t^{-3}.
    let mut prod = [1.0, 0.0, 0.0, 0.0];
    for &n in orders {
        let c = coeffs(n);
        let mut next = [0.0; 4];
        for (i, &ai) in prod.iter().enumerate() {
            for (j, &bj) in c.iter().enumerate() {
                if i + j < 4 {
                    next[i + j] += ai * bj;
                }
            }
        }
        prod = next;
    }
    let pref = (4.0 * std::f64::consts::PI).powf(-(d as f64) / 2.0);
    let mut tail = 0.0;
    for (k, &ck) in prod.iter().enumerate() {
        // ∫_T^∞ t^{-d/2 - k} dt = T^{1 - d/2 - k} / (d/2 + k - 1)
        let expo = d as f64 / 2.0 + k as f64 - 1.0;
        tail += ck * t0.powf(-expo) / expo;
    }
    pref * tail
}
