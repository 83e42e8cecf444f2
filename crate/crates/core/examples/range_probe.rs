//! Shell-by-shell profile of the base covariance to locate its true support.

use frd_core::fluctuation::{build_averaging, gamma_base, DirectProvider};
use frd_core::lattice::{for_each_index, LatticeSpec};

fn main() {
    let spec = LatticeSpec::new(3, 1, 3).unwrap();
    let l = spec.block_scale() as f64;
    for a in [0.0, 1.0] {
        for n in 0..=3u32 {
            let mut provider = DirectProvider;
            let a0 = build_averaging(&spec, n, 0, a, &mut provider).unwrap();
            let base = gamma_base(&spec, n, a, a0).unwrap();
            let kernel = base.kernel();
            let grid = kernel.grid().clone();
            let s = grid.sites_per_axis() / 2 + 1;
            let eps = grid.eps();
            let origin = kernel.value_at(&[0, 0, 0]).abs();
            // max |Γ| on spherical shells of width 0.25 phys
            let mut shells = vec![0.0f64; 40];
            let mut max_inf = vec![0.0f64; 40]; // by sup-norm shells
            let vals = kernel.sector().values();
            let mut flat = 0usize;
            for_each_index(&[s, s, s], |idx| {
                let x: Vec<f64> = idx.iter().map(|&i| i as f64 * eps).collect();
                let r2: f64 = x.iter().map(|v| v * v).sum();
                let r = r2.sqrt();
                let rinf = x.iter().cloned().fold(0.0f64, f64::max);
                let v = vals[flat].abs();
                let bin = ((r / 0.25) as usize).min(39);
                shells[bin] = shells[bin].max(v);
                let bin2 = ((rinf / 0.25) as usize).min(39);
                max_inf[bin2] = max_inf[bin2].max(v);
                flat += 1;
            });
            let fmt = |v: f64| if v == 0.0 { "0".to_string() } else { format!("{:.1e}", v / origin) };
            println!("a={a} n={n}: Γ(0)={origin:.4}");
            print!("  eucl:");
            for (i, &v) in shells.iter().enumerate().take(16) {
                print!(" [{:.2}]{}", (i as f64) * 0.25, fmt(v));
            }
            println!();
            print!("  inf :");
            for (i, &v) in max_inf.iter().enumerate().take(16) {
                print!(" [{:.2}]{}", (i as f64) * 0.25, fmt(v));
            }
            println!();
            let _ = l;
        }
    }
}
