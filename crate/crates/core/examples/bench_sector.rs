use frd_core::lattice::even::EvenKernel;
use frd_core::lattice::TorusGrid;
use std::time::Instant;

fn main() {
    for (d, m) in [(3usize, 256usize), (3, 512)] {
        let grid = TorusGrid::new(d, m, 1.0 / m as f64).unwrap();
        let mut k = EvenKernel::zeros(grid);
        let n = k.sector().values().len();
        for (i, v) in k.sector_mut().values_mut().iter_mut().enumerate() {
            *v = (i as f64 * 0.001).sin() / n as f64;
        }
        let t0 = Instant::now();
        let sym = k.symbol();
        let dt = t0.elapsed();
        println!("d={d} M={m} sector={n}: transform {:.2?} (checksum {:.3e})", dt, sym.sector().values()[1]);
    }
}
