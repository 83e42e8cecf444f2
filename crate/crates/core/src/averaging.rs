//! The mollifier family `g_m` and the averaging operators `A^a_{ε_n,m}(R_m)`.
//!
//! `(A f)(x) = ∫ dz c_{ε_{n-m}} g_m(z - x) P^a_{∂U(R_m)}(x - z, f(z + ·))`:
//! smear the Poisson-kernel average of `f` over cube boundaries with a smooth
//! bump of range `R_m/4`. The kernel `A(x, u)` is a translation invariant
//! family of (defective) probability measures; its Fourier symbol satisfies
//! `|Â(p)| <= 1` with `Â(0) = 1` exactly at `a = 0`.
//!
//! Masses are assembled over (mollifier site, boundary exit) pairs and
//! folded into the reflection-symmetric sector, so the symbol is one cosine
//! transform away.

use crate::dirichlet::PoissonKernelTable;
use crate::lattice::even::{EvenSymbol, SectorArray};
use crate::lattice::{make_cube, LatticeSpec, TorusGrid};
use crate::quad::Rule;
use crate::special::gamma_fn;
use crate::{Error, Result};

/// The radial bump profile `g(x) = C exp(-1/(1 - (|x|/ρ)²))` for `|x| < ρ`,
/// normalized to unit integral over `R^d`. The range is `ρ = L/4` (`L/64`
/// under the tight-range geometry).
#[derive(Debug, Clone)]
pub struct MollifierSpec {
    d: usize,
    l: u64,
    range: f64,
    norm: f64,
}

impl MollifierSpec {
    pub fn new(d: usize, l: u64, range: f64) -> Result<Self> {
        if !(range > 0.0) {
            return Err(Error::InvalidParameter("mollifier range must be positive".into()));
        }
        // ∫ g = C S_{d-1} ρ^d ∫_0^1 u^{d-1} e^{-1/(1-u²)} du = 1.
        let radial = Rule::legendre(96, 0.0, 1.0).integrate(|u| {
            let u2 = u * u;
            u.powi(d as i32 - 1) * (-1.0 / (1.0 - u2)).exp()
        });
        let sphere = 2.0 * std::f64::consts::PI.powf(d as f64 / 2.0) / gamma_fn(d as f64 / 2.0);
        let norm = 1.0 / (sphere * range.powi(d as i32) * radial);
        Ok(MollifierSpec { d, l, range, norm })
    }

    pub fn from_lattice(spec: &LatticeSpec) -> Result<Self> {
        Self::new(spec.dimension(), spec.block_scale(), spec.mollifier_range())
    }

    pub fn dimension(&self) -> usize {
        self.d
    }

    /// Base range `ρ` (the `m = 0` profile).
    pub fn range(&self) -> f64 {
        self.range
    }

    /// Range of `g_m`: `ρ L^{-m}`.
    pub fn range_m(&self, m: u32) -> f64 {
        self.range * (self.l as f64).powi(-(m as i32))
    }

    /// The normalization constant `C` fixed by the continuum integral.
    pub fn continuum_norm(&self) -> f64 {
        self.norm
    }

    /// `g(x)`.
    pub fn value(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let u2 = r2 / (self.range * self.range);
        if u2 >= 1.0 {
            0.0
        } else {
            self.norm * (-1.0 / (1.0 - u2)).exp()
        }
    }

    /// `g_m(x) = L^{md} g(L^m x)`: mass 1, range `ρ L^{-m}`.
    pub fn value_m(&self, m: u32, x: &[f64]) -> f64 {
        let lm = (self.l as f64).powi(m as i32);
        let scaled: Vec<f64> = x.iter().map(|v| v * lm).collect();
        lm.powi(self.d as i32) * self.value(&scaled)
    }
}

/// The positive constant `c_ε` with `c_ε · ε^d Σ_{x ∈ (εZ)^d} g(x) = 1`.
/// Converges to 1 as the lattice refines (the sum is a Riemann sum of a
/// smooth compactly supported function).
pub fn lattice_norm_constant(moll: &MollifierSpec, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter("spacing must be positive".into()));
    }
    let d = moll.d;
    let rmax = (moll.range / eps).ceil() as i64;
    let mut sum = 0.0;
    let mut x = vec![0.0f64; d];
    let dims = vec![(2 * rmax + 1) as usize; d];
    crate::lattice::for_each_index(&dims, |idx| {
        for (ax, &i) in idx.iter().enumerate() {
            x[ax] = (i as i64 - rmax) as f64 * eps;
        }
        sum += moll.value(&x);
    });
    if sum <= 0.0 {
        return Err(Error::DegenerateSupport);
    }
    Ok(1.0 / (eps.powi(d as i32) * sum))
}

/// The signed lattice-unit offsets `z` with `g_m(z ε_n) != 0`, i.e. the ball
/// `|z| < R_m/(4 ε_n)`, which is exactly the Poisson source set the averaging kernel of
/// index `m` at scale `n` needs (the set is symmetric, so it serves for
/// `-z` too). Deterministic lexicographic order.
pub fn mollifier_sources(spec: &LatticeSpec, n: u32, m: u32) -> Result<Vec<Vec<i64>>> {
    let w = spec.cube_sites_across(n, m)?;
    let r = w as f64 / 4.0;
    let r2 = r * r;
    let rmax = r.ceil() as i64;
    let mut out = Vec::new();
    let dims = vec![(2 * rmax + 1) as usize; spec.dimension()];
    crate::lattice::for_each_index(&dims, |idx| {
        let z: Vec<i64> = idx.iter().map(|&i| i as i64 - rmax).collect();
        let n2: i64 = z.iter().map(|c| c * c).sum();
        if (n2 as f64) < r2 {
            out.push(z);
        }
    });
    Ok(out)
}

/// The assembled averaging kernel `A^a_{ε_n,m}(R_m)` as a translation
/// invariant measure: sector masses, its real symbol, and summary moments.
#[derive(Debug, Clone)]
pub struct AveragingKernel {
    grid: TorusGrid,
    m: u32,
    a: f64,
    cube_edge: f64,
    /// Masses at canonical-sector offsets, sorted by flat sector index.
    entries: Vec<(usize, f64)>,
    symbol: EvenSymbol,
    /// Declared support bound `2 R_m` (actual is `R_m/4 + (R_m/2)√d`).
    support_radius: f64,
    /// Total mass `Â(0)`: exactly 1 at `a = 0`, below 1 otherwise.
    mass: f64,
    /// `Σ_u mass(u) |u|²_phys / d`, the `p → 0` curvature used to extend
    /// `(1 - |Â|²) Ĝ⁰` continuously to `p = 0`.
    second_moment: f64,
}

impl AveragingKernel {
    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    /// Cube edge `R_m` the kernel was built on.
    pub fn cube_edge(&self) -> f64 {
        self.cube_edge
    }

    pub fn symbol(&self) -> &EvenSymbol {
        &self.symbol
    }

    /// Consumes the kernel, handing out its symbol without a copy.
    pub fn into_symbol(self) -> EvenSymbol {
        self.symbol
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn second_moment(&self) -> f64 {
        self.second_moment
    }

    /// Kernel masses on the canonical sector (flat sector index, mass).
    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    /// Mass at a signed offset (folds into the sector).
    pub fn mass_at(&self, units: &[i64]) -> f64 {
        let m = self.grid.sites_per_axis() as i64;
        let s = self.grid.sites_per_axis() / 2 + 1;
        let mut flat = 0usize;
        for &c in units {
            let mut w = c.rem_euclid(m);
            if w > m / 2 {
                w = m - w;
            }
            flat = flat * s + w as usize;
        }
        match self.entries.binary_search_by_key(&flat, |e| e.0) {
            Ok(i) => self.entries[i].1,
            Err(_) => 0.0,
        }
    }

    /// Largest mass at physical distance >= `radius` from the origin.
    pub fn max_mass_beyond(&self, radius: f64) -> f64 {
        let d = self.grid.dimension();
        let s = self.grid.sites_per_axis() / 2 + 1;
        let eps = self.grid.eps();
        let mut max = 0.0f64;
        for &(flat, v) in &self.entries {
            let mut rest = flat;
            let mut dist2 = 0.0;
            for _ in 0..d {
                let c = (rest % s) as f64 * eps;
                dist2 += c * c;
                rest /= s;
            }
            if dist2 >= radius * radius {
                max = max.max(v.abs());
            }
        }
        max
    }
}

/// Builds `A^a_{ε_n,m}(R_m)` from a Poisson table covering the mollifier
/// sources. One pass over (mollifier site, boundary site) pairs.
pub fn averaging_kernel(
    spec: &LatticeSpec,
    n: u32,
    m: u32,
    a: f64,
    poisson: &PoissonKernelTable,
) -> Result<AveragingKernel> {
    let grid = spec.grid(n)?;
    let cube = make_cube(spec, n, m)?;
    if poisson.cube() != &cube || poisson.a() != a {
        return Err(Error::InvalidParameter(
            "poisson table does not match the requested cube or parameter".into(),
        ));
    }
    let moll = MollifierSpec::from_lattice(spec)?;
    let eps = spec.eps(n);
    let c_norm = lattice_norm_constant(&moll, spec.eps(n - m))?;
    let sources = mollifier_sources(spec, n, m)?;

    let d = spec.dimension();
    let s = grid.sites_per_axis() / 2 + 1;
    let mut sector = SectorArray::zeros(grid.clone());
    let mut mass_total = 0.0f64;
    let mut moment2 = 0.0f64;
    let meas = grid.site_measure();
    let boundary = poisson.boundary().to_vec();
    let mut x = vec![0.0f64; d];
    let mut u = vec![0i64; d];
    for z in &sources {
        for (ax, &c) in z.iter().enumerate() {
            x[ax] = c as f64 * eps;
        }
        let weight = c_norm * moll.value_m(m, &x) * meas;
        if weight == 0.0 {
            continue;
        }
        let neg: Vec<i64> = z.iter().map(|c| -c).collect();
        let row = poisson.row(&neg)?;
        let vals = sector.values_mut();
        for (b, &p) in boundary.iter().zip(row) {
            let mass = weight * p;
            let mut canonical = true;
            let mut dist2 = 0.0f64;
            for ax in 0..d {
                u[ax] = z[ax] + b[ax];
                if u[ax] < 0 {
                    canonical = false;
                }
                let xu = u[ax] as f64 * eps;
                dist2 += xu * xu;
            }
            mass_total += mass;
            moment2 += mass * dist2;
            if canonical {
                let mut flat = 0usize;
                for &c in u.iter() {
                    flat = flat * s + c as usize;
                }
                vals[flat] += mass;
            }
        }
    }
    moment2 /= d as f64;

    let mut entries: Vec<(usize, f64)> = sector
        .values()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(i, &v)| (i, v))
        .collect();
    entries.sort_unstable_by_key(|e| e.0);

    let mut arr = sector;
    arr.apply_transform();
    let symbol = EvenSymbol::from_sector(arr);

    let r_m = cube.edge();
    Ok(AveragingKernel {
        grid,
        m,
        a,
        cube_edge: r_m,
        entries,
        symbol,
        support_radius: 2.0 * r_m,
        mass: mass_total,
        second_moment: moment2,
    })
}

/// `|1 - Â(p)|` at a grid momentum together with the continuum small-`p`
/// bound `R_m |p| + a R_m²` it is compared against.
pub fn small_p_expansion_check(kernel: &AveragingKernel, k: &[i64]) -> (f64, f64) {
    let grid = kernel.grid();
    let p: Vec<f64> = k.iter().map(|&ki| grid.momentum(ki)).collect();
    let pnorm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
    let deviation = (1.0 - kernel.symbol().value_at(k)).abs();
    let r = kernel.cube_edge();
    (deviation, r * pnorm + kernel.a() * r * r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dirichlet::poisson_kernel;
    use crate::lattice::LatticeSpec;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};

    fn build(spec: &LatticeSpec, n: u32, m: u32, a: f64) -> AveragingKernel {
        let cube = make_cube(spec, n, m).unwrap();
        let sources = mollifier_sources(spec, n, m).unwrap();
        let table = poisson_kernel(&cube, a, &sources).unwrap();
        averaging_kernel(spec, n, m, a, &table).unwrap()
    }

    #[test]
    fn mollifier_vanishes_at_range() {
        let moll = MollifierSpec::new(3, 2, 0.5).unwrap();
        assert_eq!(moll.value(&[0.5, 0.0, 0.0]), 0.0);
        assert_eq!(moll.value(&[0.3, 0.3, 0.3]), 0.0);
        assert!(moll.value(&[0.2, 0.1, 0.0]) > 0.0);
    }

    #[test]
    fn mollifier_integrates_to_one() {
        // Independent check of the normalization with a Simpson rule.
        for d in [1usize, 2, 3] {
            let moll = MollifierSpec::new(d, 2, 0.5).unwrap();
            let n = 20001usize;
            let h = 1.0 / (n - 1) as f64;
            let mut s = 0.0;
            for i in 0..n {
                let u = i as f64 * h;
                let w = if i == 0 || i == n - 1 {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                let f = if u >= 1.0 {
                    0.0
                } else {
                    u.powi(d as i32 - 1) * (-1.0 / (1.0 - u * u)).exp()
                };
                s += w * f;
            }
            s *= h / 3.0;
            let sphere =
                2.0 * std::f64::consts::PI.powf(d as f64 / 2.0) / gamma_fn(d as f64 / 2.0);
            let integral = moll.continuum_norm() * sphere * 0.5f64.powi(d as i32) * s;
            assert_abs_diff_eq!(integral, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn mollifier_scaling_identity() {
        let moll = MollifierSpec::new(2, 4, 1.0).unwrap();
        let x = [0.011, -0.007];
        for m in 1..4u32 {
            let lm = 4.0f64.powi(m as i32);
            let expect = lm.powi(2) * moll.value(&[x[0] * lm, x[1] * lm]);
            assert_relative_eq!(moll.value_m(m, &x), expect, max_relative = 1e-14);
        }
    }

    #[test]
    fn lattice_norm_constant_converges_to_one() {
        let moll = MollifierSpec::new(2, 2, 0.5).unwrap();
        let mut prev_err = f64::INFINITY;
        for n in 1..=6u32 {
            let eps = 0.5f64.powi(n as i32);
            let c = lattice_norm_constant(&moll, eps).unwrap();
            let err = (c - 1.0).abs();
            assert!(err <= prev_err + 1e-12, "c_eps drift at n={n}: {err} vs {prev_err}");
            prev_err = err;
        }
        assert!(prev_err < 1e-4);
    }

    #[test]
    fn lattice_norm_constant_1d_riemann_oracle() {
        // d=1, L=4, eps=1/4: brute-force Riemann sum over the support.
        let moll = MollifierSpec::new(1, 4, 1.0).unwrap();
        let eps = 0.25;
        let mut s = 0.0;
        for k in -4i64..=4 {
            s += moll.value(&[k as f64 * eps]);
        }
        let expect = 1.0 / (eps * s);
        assert_relative_eq!(lattice_norm_constant(&moll, eps).unwrap(), expect, max_relative = 1e-14);
    }

    #[test]
    fn normalized_lattice_mass_is_exactly_one() {
        // c_{ε_{n-m}} ε_n^d Σ g_m = 1 by the substitution y = L^m x.
        let spec = LatticeSpec::with_dimension_override(2, 1, 3).unwrap();
        let moll = MollifierSpec::from_lattice(&spec).unwrap();
        for (n, m) in [(2u32, 1u32), (3, 1), (3, 2)] {
            let eps = spec.eps(n);
            let c = lattice_norm_constant(&moll, spec.eps(n - m)).unwrap();
            let sources = mollifier_sources(&spec, n, m).unwrap();
            let mut s = 0.0;
            for z in &sources {
                let x: Vec<f64> = z.iter().map(|&c| c as f64 * eps).collect();
                s += moll.value_m(m, &x);
            }
            assert_abs_diff_eq!(c * eps.powi(2) * s, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn kernel_mass_one_at_zero_a() {
        let spec = LatticeSpec::with_dimension_override(2, 1, 3).unwrap();
        let kernel = build(&spec, 2, 1, 0.0);
        assert_abs_diff_eq!(kernel.mass(), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(kernel.symbol().value_at(&[0, 0]), 1.0, epsilon = 1e-10);
        assert!(kernel.entries().iter().all(|&(_, v)| v >= 0.0));
    }

    #[test]
    fn kernel_mass_decreases_in_a() {
        let spec = LatticeSpec::with_dimension_override(2, 1, 3).unwrap();
        let mut prev = 1.0;
        for a in [1.0, 4.0, 16.0] {
            let kernel = build(&spec, 2, 1, a);
            assert!(kernel.mass() < prev && kernel.mass() > 0.0);
            prev = kernel.mass();
        }
    }

    #[test]
    fn symbol_bounded_by_one() {
        let spec = LatticeSpec::with_dimension_override(2, 1, 3).unwrap();
        for a in [0.0, 1.0, 10.0] {
            let kernel = build(&spec, 2, 0, a);
            let (lo, hi) = kernel.symbol().min_max();
            assert!(hi <= 1.0 + 1e-12, "sup symbol {hi}");
            assert!(lo >= -1.0 - 1e-12, "inf symbol {lo}");
        }
    }

    #[test]
    fn kernel_supported_within_declared_radius() {
        let spec = LatticeSpec::with_dimension_override(2, 1, 3).unwrap();
        let kernel = build(&spec, 2, 1, 0.5);
        assert_eq!(kernel.max_mass_beyond(kernel.support_radius()), 0.0);
        // And the support is genuinely two-sided: some mass beyond R_m/2.
        assert!(kernel.max_mass_beyond(kernel.cube_edge() / 2.0) > 0.0);
    }

    #[test]
    fn kernel_application_matches_direct_dirichlet_route() {
        // (A f)(0) via the assembled masses against the definition: mollify
        // Dirichlet solves with shifted boundary data.
        use crate::dirichlet::{solve_dirichlet, DirichletOperator};
        let spec = LatticeSpec::with_dimension_override(2, 1, 3).unwrap();
        let n = 2u32;
        let m = 1u32;
        let a = 0.7;
        let kernel = build(&spec, n, m, a);
        let grid = spec.grid(n).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let f = crate::lattice::LatticeField::from_fn(grid.clone(), |_| rng.random_range(-1.0..1.0));

        // Kernel route: Σ_u mass(u) f(u), summing over all signed offsets.
        let s = grid.sites_per_axis() / 2 + 1;
        let mut via_kernel = 0.0;
        for &(flat, mass) in kernel.entries() {
            let c0 = (flat / s) as i64;
            let c1 = (flat % s) as i64;
            let signs: &[(i64, i64)] = &[(1, 1), (1, -1), (-1, 1), (-1, -1)];
            let mut seen: Vec<(i64, i64)> = Vec::new();
            for &(s0, s1) in signs {
                let u = (c0 * s0, c1 * s1);
                if !seen.contains(&u) {
                    seen.push(u);
                    via_kernel += mass * f.get(&[u.0, u.1]);
                }
            }
        }

        // Direct route per the defining formula.
        let cube = make_cube(&spec, n, m).unwrap();
        let op = DirichletOperator::new(cube.clone(), a).unwrap();
        let moll = MollifierSpec::from_lattice(&spec).unwrap();
        let c_norm = lattice_norm_constant(&moll, spec.eps(n - m)).unwrap();
        let eps = spec.eps(n);
        let mut direct = 0.0;
        for z in mollifier_sources(&spec, n, m).unwrap() {
            let x: Vec<f64> = z.iter().map(|&c| c as f64 * eps).collect();
            let weight = c_norm * moll.value_m(m, &x) * grid.site_measure();
            if weight == 0.0 {
                continue;
            }
            let data: Vec<f64> = cube
                .boundary_sites()
                .iter()
                .map(|u| f.get(&[z[0] + u[0], z[1] + u[1]]))
                .collect();
            let h = solve_dirichlet(&op, &data).unwrap();
            let neg: Vec<i64> = z.iter().map(|c| -c).collect();
            direct += weight * h[op.interior_flat(&neg)];
        }
        assert_relative_eq!(via_kernel, direct, max_relative = 1e-10);
    }

    #[test]
    fn small_p_deviation_vanishes_at_origin() {
        let spec = LatticeSpec::with_dimension_override(2, 1, 3).unwrap();
        let kernel = build(&spec, 2, 1, 0.0);
        let (dev, bound) = small_p_expansion_check(&kernel, &[0, 0]);
        assert_abs_diff_eq!(dev, 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(bound, 0.0);
    }

    #[test]
    fn small_p_deviation_within_continuum_bound_plus_lattice_term() {
        let spec = LatticeSpec::with_dimension_override(2, 1, 3).unwrap();
        for a in [0.0, 0.5] {
            let kernel = build(&spec, 3, 1, a);
            let eps = kernel.grid().eps();
            for k in 1..=24i64 {
                let (dev, bound) = small_p_expansion_check(&kernel, &[k, 0]);
                assert!(
                    dev <= bound + 10.0 * eps,
                    "a={a} k={k}: |1-Â| = {dev} vs bound {bound} + O(ε)"
                );
            }
        }
    }

    #[test]
    fn symbol_products_commute_under_permutation() {
        // The multi-convolution Π_m A_m is order independent because the
        // symbols multiply pointwise.
        let spec = LatticeSpec::with_dimension_override(2, 1, 2).unwrap();
        let a1 = build(&spec, 2, 1, 0.5);
        let a2 = build(&spec, 2, 2, 0.5);
        for (x, y) in a1
            .symbol()
            .sector()
            .values()
            .iter()
            .zip(a2.symbol().sector().values())
        {
            let fwd = x * x * (y * y);
            let rev = y * y * (x * x);
            assert!((fwd - rev).abs() <= 1e-12 * fwd.abs().max(1e-300));
        }
    }

    #[test]
    fn missing_sources_are_reported() {
        let spec = LatticeSpec::with_dimension_override(2, 1, 3).unwrap();
        let cube = make_cube(&spec, 3, 1).unwrap();
        // The m=1 mollifier ball at n=3 has 9 sites; a table with only the
        // trivial source must be rejected.
        assert_eq!(mollifier_sources(&spec, 3, 1).unwrap().len(), 9);
        let table = poisson_kernel(&cube, 0.0, &[vec![0, 0]]).unwrap();
        assert!(matches!(
            averaging_kernel(&spec, 3, 1, 0.0, &table),
            Err(Error::MissingSource(_))
        ));
    }
}
