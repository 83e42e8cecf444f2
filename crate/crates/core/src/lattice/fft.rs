//! Discrete Fourier transforms on torus grids, with lattice measure
//! conventions chosen so symbols converge to their continuum counterparts:
//!
//! * forward:  `F(p) = ε^d Σ_x f(x) e^{-ip·x}`
//! * inverse:  `f(x) = side^{-d} Σ_p F(p) e^{+ip·x}`
//!
//! so that `side^{-d} Σ_p` discretizes `∫ d^dp/(2π)^d` over the Brillouin
//! zone. This is the general complex-valued path; the reflection-symmetric
//! fast path lives in [`super::even`].

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::{Error, Result};

use super::TorusGrid;

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

pub(crate) fn plan_forward(len: usize) -> Arc<dyn Fft<f64>> {
    plan(len, true)
}

fn plan(len: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|cell| {
        let (planner, cache) = &mut *cell.borrow_mut();
        cache
            .entry((len, forward))
            .or_insert_with(|| {
                let dir = if forward { FftDirection::Forward } else { FftDirection::Inverse };
                planner.plan_fft(len, dir)
            })
            .clone()
    })
}

/// Unnormalized multi-dimensional FFT over a row-major hypercube of side `m`,
/// applied in place axis by axis.
pub(crate) fn fft_nd(data: &mut [Complex64], d: usize, m: usize, forward: bool) {
    let fft = plan(m, forward);
    let mut line = vec![Complex64::default(); m];
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let total = data.len();
    debug_assert_eq!(total, m.pow(d as u32));
    for ax in 0..d {
        let stride = m.pow((d - 1 - ax) as u32);
        let block = stride * m;
        let n_blocks = total / block;
        for b in 0..n_blocks {
            for off in 0..stride {
                let base = b * block + off;
                if stride == 1 {
                    fft.process_with_scratch(&mut data[base..base + m], &mut scratch);
                } else {
                    for (j, slot) in line.iter_mut().enumerate() {
                        *slot = data[base + j * stride];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for (j, slot) in line.iter().enumerate() {
                        data[base + j * stride] = *slot;
                    }
                }
            }
        }
    }
}

/// A real translation-invariant kernel on a torus grid, stored as a density
/// with respect to the lattice measure `ε^d × counting`.
#[derive(Debug, Clone)]
pub struct RealKernel {
    grid: TorusGrid,
    values: Vec<f64>,
    support_radius: Option<f64>,
}

impl RealKernel {
    pub fn new(grid: TorusGrid, values: Vec<f64>, support_radius: Option<f64>) -> Result<Self> {
        if values.len() != grid.num_sites() {
            return Err(Error::InvalidParameter(format!(
                "kernel has {} values, grid has {} sites",
                values.len(),
                grid.num_sites()
            )));
        }
        Ok(RealKernel { grid, values, support_radius })
    }

    pub fn from_fn(grid: TorusGrid, mut f: impl FnMut(&[i64]) -> f64) -> Self {
        let d = grid.dimension();
        let mut values = vec![0.0; grid.num_sites()];
        let mut units = vec![0i64; d];
        for (flat, v) in values.iter_mut().enumerate() {
            grid.units_from_flat(flat, &mut units);
            *v = f(&units);
        }
        RealKernel { grid, values, support_radius: None }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn support_radius(&self) -> Option<f64> {
        self.support_radius
    }

    pub fn get(&self, units: &[i64]) -> f64 {
        self.values[self.grid.flat_from_units(units)]
    }
}

/// Complex values on the momentum grid `{2πk/(Mε) : k ∈ [-M/2, M/2)^d}`.
#[derive(Debug, Clone)]
pub struct FourierSymbol {
    grid: TorusGrid,
    values: Vec<Complex64>,
}

impl FourierSymbol {
    pub fn new(grid: TorusGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.num_sites() {
            return Err(Error::InvalidParameter("symbol size does not match grid".into()));
        }
        Ok(FourierSymbol { grid, values })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Value at signed momentum index `k` (one index per axis).
    pub fn get(&self, k: &[i64]) -> Complex64 {
        self.values[self.grid.flat_from_units(k)]
    }
}

/// Forward transform of a kernel: `F(p) = ε^d Σ_x f(x) e^{-ip·x}`.
pub fn fourier_transform(kernel: &RealKernel) -> FourierSymbol {
    let grid = kernel.grid.clone();
    let mut data: Vec<Complex64> =
        kernel.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_nd(&mut data, grid.dimension(), grid.sites_per_axis(), true);
    let meas = grid.site_measure();
    for v in data.iter_mut() {
        *v *= meas;
    }
    FourierSymbol { grid, values: data }
}

/// Inverse transform: `f(x) = side^{-d} Σ_p F(p) e^{+ip·x}`. Returns the
/// real part together with the largest imaginary residue, which is rounding
/// noise for symbols of real kernels.
pub fn inverse_fourier(symbol: &FourierSymbol) -> (RealKernel, f64) {
    let grid = symbol.grid.clone();
    let mut data = symbol.values.clone();
    fft_nd(&mut data, grid.dimension(), grid.sites_per_axis(), false);
    let scale = grid.side().powi(-(grid.dimension() as i32));
    let mut max_im: f64 = 0.0;
    let values: Vec<f64> = data
        .iter()
        .map(|z| {
            max_im = max_im.max((z.im * scale).abs());
            z.re * scale
        })
        .collect();
    (RealKernel { grid, values, support_radius: None }, max_im)
}
