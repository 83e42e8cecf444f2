//! Property tests for the lattice substrate: transform unitarity, norm
//! axioms, cube geometry.

use frd_core::analysis::{c_norm, sobolev_norm, Patch};
use frd_core::lattice::fft::{fourier_transform, inverse_fourier, RealKernel};
use frd_core::lattice::{forward_diff, CubeRegion, LatticeField, TorusGrid};
use proptest::prelude::*;

fn grid_and_values(m: usize) -> impl Strategy<Value = (usize, Vec<f64>)> {
    let n = m * m;
    (Just(m), proptest::collection::vec(-1.0f64..1.0, n..=n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fourier_roundtrip_and_parseval((m, vals) in grid_and_values(8)) {
        let grid = TorusGrid::new(2, m, 0.5).unwrap();
        let kernel = RealKernel::new(grid.clone(), vals, None).unwrap();
        let symbol = fourier_transform(&kernel);
        let (back, max_im) = inverse_fourier(&symbol);
        let scale = kernel.values().iter().fold(1e-30f64, |a, v| a.max(v.abs()));
        for (x, y) in kernel.values().iter().zip(back.values()) {
            prop_assert!((x - y).abs() <= 1e-12 * scale);
        }
        prop_assert!(max_im <= 1e-12 * scale);
        let lhs: f64 = grid.site_measure() * kernel.values().iter().map(|v| v * v).sum::<f64>();
        let rhs: f64 = grid.side().powi(-2) * symbol.values().iter().map(|z| z.norm_sqr()).sum::<f64>();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.max(1e-30));
    }

    #[test]
    fn forward_diff_telescopes((m, vals) in grid_and_values(8)) {
        let grid = TorusGrid::new(2, m, 0.25).unwrap();
        let field = LatticeField::from_values(grid.clone(), vals).unwrap();
        for axis in 0..2 {
            let df = forward_diff(&field, axis, 1);
            for line in 0..m as i64 {
                let mut s = 0.0;
                for t in 0..m as i64 {
                    let j = if axis == 0 { [t - 4, line - 4] } else { [line - 4, t - 4] };
                    s += grid.eps() * df.get(&j);
                }
                prop_assert!(s.abs() < 1e-11);
            }
        }
    }

    #[test]
    fn norm_axioms(vals in proptest::collection::vec(-1.0f64..1.0, 81..=81),
                   scale in 0.1f64..4.0) {
        // Values fill the support box [-2, 2]² of a half-6 patch.
        let patch = build_patch(&vals);
        let full = sobolev_norm(&patch, 1, 2.5, false).unwrap().value;
        let top = sobolev_norm(&patch, 1, 2.5, true).unwrap().value;
        let sup = c_norm(&patch, 1, 2.5).unwrap().value;
        prop_assert!(full >= 0.0 && top >= 0.0 && sup >= 0.0);
        prop_assert!(top <= full + 1e-12);
        // Homogeneity
        let mut scaled_vals = vals.clone();
        for v in scaled_vals.iter_mut() { *v *= scale; }
        let scaled = build_patch(&scaled_vals);
        let full_s = sobolev_norm(&scaled, 1, 2.5, false).unwrap().value;
        prop_assert!((full_s - scale * full).abs() <= 1e-10 * (1.0 + full));
    }

    #[test]
    fn cube_partition(w in 1i64..6) {
        // Interior and boundary are disjoint; boundary sites all lie on the
        // continuum faces; every boundary site has exactly one interior
        // neighbour.
        let cube = CubeRegion::new(2, 2 * w, 0.5).unwrap();
        let interior = cube.interior_sites();
        let boundary = cube.boundary_sites();
        for s in &boundary {
            prop_assert!(!cube.is_interior(s));
            prop_assert!(cube.is_boundary(s));
            let v = cube.interior_neighbour(s);
            prop_assert!(cube.is_interior(&v));
            prop_assert_eq!(s.iter().filter(|c| c.abs() == w).count(), 1);
        }
        for s in &interior {
            prop_assert!(!cube.is_boundary(s));
        }
        prop_assert_eq!(interior.len(), ((2 * w - 1) * (2 * w - 1)) as usize);
        prop_assert_eq!(boundary.len(), (4 * (2 * w - 1)) as usize);
    }
}

/// Fills the inner 9×9 support of a half-6 patch from the random data.
fn build_patch(vals: &[f64]) -> Patch {
    let mut it = vals.iter().copied();
    Patch::from_fn(2, 6, 0.5, |j| {
        if j.iter().all(|&c| c.abs() <= 4) {
            it.next().unwrap_or(0.0)
        } else {
            0.0
        }
    })
}
