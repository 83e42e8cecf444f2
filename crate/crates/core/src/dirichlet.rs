//! The lattice Dirichlet problem on cubes and the Poisson kernel measure.
//!
//! For boundary data `f`, `h = P^a(x, f)` solves `(-Δ_ε + a)h = 0` at every
//! interior site with `h = f` on the one-layer lattice boundary. The cube
//! interior is a product set, so the restricted operator is separable and is
//! diagonalized exactly by the odd sine basis per axis:
//!
//! `v_q(i) = sin(πqi/w)`, eigenvalue `λ_q = 2ε^{-2}(1 - cos(πq/w))`,
//!
//! with `i = 1..w-1` indexing interior points along an axis. A solve is a
//! `d`-fold sine-matrix application and a diagonal division: an exact
//! direct factorization, symmetric positive definite for every `a >= 0`.
//!
//! The Poisson kernel masses come from the interior Green's function:
//! `P(x, u) = ε^{-2} G^D(x, v(u))` where `v(u)` is the unique interior
//! neighbour of the boundary site `u`. At `a = 0` the total mass of each row
//! is exactly 1 (probability measure); for `a > 0` it drops below 1.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;

use crate::lattice::CubeRegion;
use crate::{Error, Result};

static SOLVE_COUNT: AtomicU64 = AtomicU64::new(0);

/// Number of Dirichlet solves (boundary solves and Green's-row extractions)
/// performed by this process. Used to verify cache behaviour.
pub fn solve_count() -> u64 {
    SOLVE_COUNT.load(Ordering::Relaxed)
}

pub fn reset_solve_count() {
    SOLVE_COUNT.store(0, Ordering::Relaxed);
}

/// The factorized cube operator `(-Δ^D_ε + a)` restricted to interior sites.
#[derive(Debug, Clone)]
pub struct DirichletOperator {
    cube: CubeRegion,
    a: f64,
    /// Per-axis eigenvalues of the 1-D Dirichlet Laplacian, `q = 1..=K`.
    lambda: Vec<f64>,
    /// Symmetric sine matrix `S[q-1][i-1] = sin(πqi/w)`, `S² = (w/2) I`.
    sine: Vec<f64>,
    /// Boundary site -> position in `cube.boundary_sites()` order.
    boundary_index: HashMap<Vec<i64>, usize>,
}

impl DirichletOperator {
    pub fn new(cube: CubeRegion, a: f64) -> Result<Self> {
        if !(a >= 0.0) || !a.is_finite() {
            return Err(Error::InvalidParameter(format!("a = {a} must be >= 0")));
        }
        let w = cube.sites_across();
        let k = cube.interior_across() as usize;
        let eps = cube.eps();
        let mut lambda = Vec::with_capacity(k);
        for q in 1..=k {
            let th = std::f64::consts::PI * q as f64 / w as f64;
            lambda.push(2.0 * (1.0 - th.cos()) / (eps * eps));
        }
        let mut sine = vec![0.0; k * k];
        for q in 1..=k {
            for i in 1..=k {
                sine[(q - 1) * k + (i - 1)] =
                    (std::f64::consts::PI * q as f64 * i as f64 / w as f64).sin();
            }
        }
        let boundary_index =
            cube.boundary_sites().into_iter().enumerate().map(|(i, s)| (s, i)).collect();
        Ok(DirichletOperator { cube, a, lambda, sine, boundary_index })
    }

    pub fn cube(&self) -> &CubeRegion {
        &self.cube
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    fn k(&self) -> usize {
        self.cube.interior_across() as usize
    }

    /// Flat interior index of a strictly interior site (lattice units).
    pub fn interior_flat(&self, units: &[i64]) -> usize {
        let k = self.k();
        let h = self.cube.interior_half();
        let mut flat = 0usize;
        for &c in units {
            debug_assert!(c.abs() <= h);
            flat = flat * k + (c + h) as usize;
        }
        flat
    }

    /// Applies the sine matrix along every axis of a flat interior array.
    fn sine_all_axes(&self, data: &mut [f64]) {
        let k = self.k();
        let d = self.cube.dimension();
        let mut line = vec![0.0; k];
        let mut out = vec![0.0; k];
        for ax in 0..d {
            let stride = k.pow((d - 1 - ax) as u32);
            let block = stride * k;
            let n_blocks = data.len() / block;
            for b in 0..n_blocks {
                for off in 0..stride {
                    let base = b * block + off;
                    for (j, slot) in line.iter_mut().enumerate() {
                        *slot = data[base + j * stride];
                    }
                    for (q, slot) in out.iter_mut().enumerate() {
                        let row = &self.sine[q * k..(q + 1) * k];
                        *slot = row.iter().zip(&line).map(|(s, v)| s * v).sum();
                    }
                    for (j, &v) in out.iter().enumerate() {
                        data[base + j * stride] = v;
                    }
                }
            }
        }
    }

    /// Divides by the eigenvalue sum `Σ_ax λ_{q_ax} + a` in the sine basis.
    fn divide_eigen(&self, data: &mut [f64]) {
        let k = self.k();
        let d = self.cube.dimension();
        let mut idx = vec![0usize; d];
        for (flat, v) in data.iter_mut().enumerate() {
            let mut rest = flat;
            for ax in (0..d).rev() {
                idx[ax] = rest % k;
                rest /= k;
            }
            let denom: f64 = idx.iter().map(|&q| self.lambda[q]).sum::<f64>() + self.a;
            *v /= denom;
        }
    }

    /// Solves `(-Δ^D + a) h = b` for a flat interior right-hand side.
    fn solve_interior(&self, mut b: Vec<f64>) -> Vec<f64> {
        let k = self.k();
        let d = self.cube.dimension();
        self.sine_all_axes(&mut b);
        self.divide_eigen(&mut b);
        self.sine_all_axes(&mut b);
        let scale = (2.0 / (k as f64 + 1.0)).powi(d as i32);
        for v in b.iter_mut() {
            *v *= scale;
        }
        b
    }

    /// Interior row `G^D(x, ·)` of the cube Green's function for a source
    /// `x`, as a flat interior array.
    pub fn green_row(&self, source: &[i64]) -> Result<Vec<f64>> {
        if !self.cube.is_interior(source) {
            return Err(Error::SourceNotInterior(source.to_vec()));
        }
        SOLVE_COUNT.fetch_add(1, Ordering::Relaxed);
        let k = self.k();
        let d = self.cube.dimension();
        let h = self.cube.interior_half();
        // Ψ_q(x) is a tensor product of sine columns; no forward transform
        // is needed for a point source.
        let mut data = vec![1.0f64; k.pow(d as u32)];
        let mut idx = vec![0usize; d];
        for (flat, v) in data.iter_mut().enumerate() {
            let mut rest = flat;
            for ax in (0..d).rev() {
                idx[ax] = rest % k;
                rest /= k;
            }
            for ax in 0..d {
                let i = (source[ax] + h) as usize; // interior index minus 1
                *v *= self.sine[idx[ax] * k + i];
            }
        }
        self.divide_eigen(&mut data);
        self.sine_all_axes(&mut data);
        let scale = (2.0 / (k as f64 + 1.0)).powi(d as i32);
        for v in data.iter_mut() {
            *v *= scale;
        }
        Ok(data)
    }

    pub fn boundary_position(&self, site: &[i64]) -> Option<usize> {
        self.boundary_index.get(site).copied()
    }
}

/// Solves the Dirichlet problem for boundary data `f` given in
/// `cube.boundary_sites()` order; returns interior values as a flat array in
/// lexicographic interior order.
pub fn solve_dirichlet(op: &DirichletOperator, f: &[f64]) -> Result<Vec<f64>> {
    let cube = op.cube();
    if f.len() != cube.boundary_count() {
        return Err(Error::InvalidParameter(format!(
            "boundary data has {} values, boundary has {} sites",
            f.len(),
            cube.boundary_count()
        )));
    }
    SOLVE_COUNT.fetch_add(1, Ordering::Relaxed);
    let k = op.k();
    let d = cube.dimension();
    let eps2 = cube.eps() * cube.eps();
    let mut b = vec![0.0f64; k.pow(d as u32)];
    for (pos, site) in cube.boundary_sites().iter().enumerate() {
        let v = cube.interior_neighbour(site);
        b[op.interior_flat(&v)] += f[pos] / eps2;
    }
    Ok(op.solve_interior(b))
}

/// Map from interior source points to boundary exit masses.
#[derive(Debug, Clone)]
pub struct PoissonKernelTable {
    cube: CubeRegion,
    a: f64,
    sources: Vec<Vec<i64>>,
    boundary: Vec<Vec<i64>>,
    /// `masses[s][u] = P^a(sources[s], boundary[u])`, all >= 0.
    masses: Vec<Vec<f64>>,
    source_index: HashMap<Vec<i64>, usize>,
}

impl PoissonKernelTable {
    pub fn cube(&self) -> &CubeRegion {
        &self.cube
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn sources(&self) -> &[Vec<i64>] {
        &self.sources
    }

    pub fn boundary(&self) -> &[Vec<i64>] {
        &self.boundary
    }

    pub fn masses(&self) -> &[Vec<f64>] {
        &self.masses
    }

    pub fn source_position(&self, source: &[i64]) -> Option<usize> {
        self.source_index.get(source).copied()
    }

    pub fn row(&self, source: &[i64]) -> Result<&[f64]> {
        self.source_position(source)
            .map(|i| self.masses[i].as_slice())
            .ok_or_else(|| Error::MissingSource(source.to_vec()))
    }

    /// Total exit mass of a source: 1 at `a = 0`, strictly below 1 otherwise.
    pub fn total_mass(&self, source: &[i64]) -> Result<f64> {
        Ok(crate::quad::pairwise_sum(self.row(source)?))
    }

    /// Applies the measure to boundary data: `Σ_u P(x, u) f(u)`.
    pub fn apply(&self, source: &[i64], f: &[f64]) -> Result<f64> {
        let row = self.row(source)?;
        if f.len() != row.len() {
            return Err(Error::InvalidParameter("boundary data length mismatch".into()));
        }
        let terms: Vec<f64> = row.iter().zip(f).map(|(p, v)| p * v).collect();
        Ok(crate::quad::pairwise_sum(&terms))
    }

    /// Reconstructs a table from its parts (cache deserialization).
    pub fn from_parts(
        cube: CubeRegion,
        a: f64,
        sources: Vec<Vec<i64>>,
        masses: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let boundary = cube.boundary_sites();
        if masses.len() != sources.len() || masses.iter().any(|row| row.len() != boundary.len()) {
            return Err(Error::InvalidParameter("poisson table shape mismatch".into()));
        }
        let source_index = sources.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        Ok(PoissonKernelTable { cube, a, sources, boundary, masses, source_index })
    }
}

/// Builds the Poisson kernel table for the given interior sources: one
/// Green's-row solve per source, masses `P(x,u) = ε^{-2} G^D(x, v(u))`.
pub fn poisson_kernel(
    cube: &CubeRegion,
    a: f64,
    sources: &[Vec<i64>],
) -> Result<PoissonKernelTable> {
    let op = DirichletOperator::new(cube.clone(), a)?;
    for s in sources {
        if s.len() != cube.dimension() || !cube.is_interior(s) {
            return Err(Error::SourceNotInterior(s.clone()));
        }
    }
    let boundary = cube.boundary_sites();
    let eps2 = cube.eps() * cube.eps();
    let neighbour_flat: Vec<usize> =
        boundary.iter().map(|u| op.interior_flat(&cube.interior_neighbour(u))).collect();
    let masses: Vec<Vec<f64>> = sources
        .par_iter()
        .map(|s| {
            let row = op.green_row(s).expect("validated interior source");
            neighbour_flat.iter().map(|&v| row[v] / eps2).collect()
        })
        .collect();
    PoissonKernelTable::from_parts(cube.clone(), a, sources.to_vec(), masses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{make_cube, LatticeSpec};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};

    fn cube_2d(w: i64) -> CubeRegion {
        CubeRegion::new(2, w, 0.5).unwrap()
    }

    /// Dense reference: assemble (-Δ^D + a) on the interior and solve by
    /// Gaussian elimination with partial pivoting. Independent of the sine
    /// factorization.
    fn dense_solve(cube: &CubeRegion, a: f64, rhs: &[f64]) -> Vec<f64> {
        let interior = cube.interior_sites();
        let n = interior.len();
        let pos: HashMap<Vec<i64>, usize> =
            interior.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        let eps2 = cube.eps() * cube.eps();
        let d = cube.dimension();
        let mut mat = vec![0.0f64; n * n];
        for (i, site) in interior.iter().enumerate() {
            mat[i * n + i] = 2.0 * d as f64 / eps2 + a;
            for ax in 0..d {
                for step in [-1i64, 1] {
                    let mut nb = site.clone();
                    nb[ax] += step;
                    if let Some(&j) = pos.get(&nb) {
                        mat[i * n + j] -= 1.0 / eps2;
                    }
                }
            }
        }
        let mut b = rhs.to_vec();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&r1, &r2| {
                    mat[r1 * n + col].abs().partial_cmp(&mat[r2 * n + col].abs()).unwrap()
                })
                .unwrap();
            if piv != col {
                for c in 0..n {
                    mat.swap(col * n + c, piv * n + c);
                }
                b.swap(col, piv);
            }
            let diag = mat[col * n + col];
            for row in col + 1..n {
                let f = mat[row * n + col] / diag;
                if f != 0.0 {
                    for c in col..n {
                        mat[row * n + c] -= f * mat[col * n + c];
                    }
                    b[row] -= f * b[col];
                }
            }
        }
        for col in (0..n).rev() {
            let mut s = b[col];
            for c in col + 1..n {
                s -= mat[col * n + c] * b[c];
            }
            b[col] = s / mat[col * n + col];
        }
        b
    }

    #[test]
    fn sine_solver_matches_dense_elimination() {
        let cube = cube_2d(6);
        let op = DirichletOperator::new(cube.clone(), 0.7).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = cube.interior_count();
        let rhs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fast = op.solve_interior(rhs.clone());
        let slow = dense_solve(&cube, 0.7, &rhs);
        for (i, site) in cube.interior_sites().iter().enumerate() {
            assert_abs_diff_eq!(fast[op.interior_flat(site)], slow[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn constants_are_harmonic() {
        let cube = cube_2d(8);
        let op = DirichletOperator::new(cube.clone(), 0.0).unwrap();
        let f = vec![1.0; cube.boundary_count()];
        let h = solve_dirichlet(&op, &f).unwrap();
        for v in h {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-11);
        }
    }

    #[test]
    fn mass_defect_for_positive_a() {
        let cube = cube_2d(8);
        let op = DirichletOperator::new(cube.clone(), 1.5).unwrap();
        let f = vec![1.0; cube.boundary_count()];
        let h = solve_dirichlet(&op, &f).unwrap();
        for v in h {
            assert!(v > 0.0 && v < 1.0);
        }
    }

    #[test]
    fn linear_functions_are_lattice_harmonic() {
        let cube = cube_2d(8);
        let op = DirichletOperator::new(cube.clone(), 0.0).unwrap();
        let f: Vec<f64> =
            cube.boundary_sites().iter().map(|s| s[0] as f64 * cube.eps()).collect();
        let h = solve_dirichlet(&op, &f).unwrap();
        for site in cube.interior_sites() {
            let want = site[0] as f64 * cube.eps();
            assert_abs_diff_eq!(h[op.interior_flat(&site)], want, epsilon = 1e-10);
        }
    }

    #[test]
    fn maximum_principle_on_random_data() {
        let cube = cube_2d(10);
        let op = DirichletOperator::new(cube.clone(), 0.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let f: Vec<f64> =
            (0..cube.boundary_count()).map(|_| rng.random_range(-2.0..3.0)).collect();
        let lo = f.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for v in solve_dirichlet(&op, &f).unwrap() {
            assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }

    #[test]
    fn green_rows_reciprocal_and_nonnegative() {
        let cube = cube_2d(8);
        let op = DirichletOperator::new(cube.clone(), 0.3).unwrap();
        let x = vec![1i64, -2];
        let y = vec![-1i64, 0];
        let row_x = op.green_row(&x).unwrap();
        let row_y = op.green_row(&y).unwrap();
        let gxy = row_x[op.interior_flat(&y)];
        let gyx = row_y[op.interior_flat(&x)];
        assert_relative_eq!(gxy, gyx, epsilon = 1e-11);
        assert!(row_x.iter().all(|&v| v >= -1e-15));
    }

    #[test]
    fn poisson_mass_one_at_zero_a_and_decreasing_in_a() {
        let cube = cube_2d(8);
        let sources = vec![vec![0i64, 0], vec![1, 2], vec![-2, -1]];
        let t0 = poisson_kernel(&cube, 0.0, &sources).unwrap();
        for s in &sources {
            assert_abs_diff_eq!(t0.total_mass(s).unwrap(), 1.0, epsilon = 1e-10);
        }
        let mut prev: Vec<f64> = sources.iter().map(|s| t0.total_mass(s).unwrap()).collect();
        for a in [0.5, 2.0, 8.0] {
            let t = poisson_kernel(&cube, a, &sources).unwrap();
            for (i, s) in sources.iter().enumerate() {
                let m = t.total_mass(s).unwrap();
                assert!(m < prev[i] && m < 1.0 && m > 0.0);
                prev[i] = m;
            }
        }
    }

    #[test]
    fn poisson_masses_nonnegative_and_octant_symmetric() {
        let cube = cube_2d(10);
        let table = poisson_kernel(&cube, 0.7, &[vec![0, 0]]).unwrap();
        let row = table.row(&[0, 0]).unwrap();
        assert!(row.iter().all(|&p| p >= 0.0));
        // Hyperoctahedral symmetry of the centered source: masses agree on
        // every orbit of sign flips and coordinate swaps.
        let max = row.iter().cloned().fold(0.0f64, f64::max);
        for (i, u) in table.boundary().iter().enumerate() {
            let images = [
                vec![-u[0], u[1]],
                vec![u[0], -u[1]],
                vec![-u[0], -u[1]],
                vec![u[1], u[0]],
            ];
            for img in images {
                if let Some(j) = table.boundary().iter().position(|v| *v == img) {
                    assert_abs_diff_eq!(row[i], row[j], epsilon = 1e-10 * max);
                }
            }
        }
    }

    #[test]
    fn poisson_reproduces_dirichlet_solve_on_random_data() {
        // Σ_u P(x,u) f(u) must equal the direct solve at x.
        let cube = cube_2d(8);
        let a = 0.4;
        let sources = vec![vec![0i64, 0], vec![2, -1], vec![-1, 1]];
        let table = poisson_kernel(&cube, a, &sources).unwrap();
        let op = DirichletOperator::new(cube.clone(), a).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for _ in 0..3 {
            let f: Vec<f64> =
                (0..cube.boundary_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let h = solve_dirichlet(&op, &f).unwrap();
            for s in &sources {
                let via_table = table.apply(s, &f).unwrap();
                let direct = h[op.interior_flat(s)];
                assert_relative_eq!(via_table, direct, max_relative = 1e-11);
            }
        }
    }

    #[test]
    fn sources_must_be_interior() {
        let cube = cube_2d(6);
        assert!(matches!(
            poisson_kernel(&cube, 0.0, &[vec![3, 0]]),
            Err(Error::SourceNotInterior(_))
        ));
        let op = DirichletOperator::new(cube, 0.0).unwrap();
        assert!(op.green_row(&[0, 3]).is_err());
    }

    #[test]
    fn smallest_cube_single_interior_point() {
        // W = 2 (m = n case): one interior site, 2d boundary sites, and the
        // a=0 mass is still exactly 1.
        let spec = LatticeSpec::new(3, 1, 2).unwrap();
        let cube = make_cube(&spec, 2, 2).unwrap();
        assert_eq!(cube.interior_count(), 1);
        let table = poisson_kernel(&cube, 0.0, &[vec![0, 0, 0]]).unwrap();
        assert_eq!(table.boundary().len(), 6);
        assert_abs_diff_eq!(table.total_mass(&[0, 0, 0]).unwrap(), 1.0, epsilon = 1e-12);
        // By symmetry each face carries mass 1/6.
        for &m in table.row(&[0, 0, 0]).unwrap() {
            assert_abs_diff_eq!(m, 1.0 / 6.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn solve_counter_tracks_solves() {
        let cube = cube_2d(6);
        reset_solve_count();
        let _ = poisson_kernel(&cube, 0.0, &[vec![0, 0], vec![1, 1]]).unwrap();
        assert_eq!(solve_count(), 2);
    }
}
