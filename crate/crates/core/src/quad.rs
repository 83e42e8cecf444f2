//! Quadrature building blocks: Gauss–Legendre rules, composite panels, and a
//! spectrally convergent trapezoid rule for smooth periodic integrands.

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
///
/// Newton iteration on the Legendre polynomial `P_n`, starting from the
/// Chebyshev-like initial guess. Accurate to machine precision for the sizes
/// used here (`n <= 128`).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature order must be positive");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Recurrence for P_n(x) and P_{n-1}(x).
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// A fixed quadrature rule: a list of (node, weight) pairs on some interval.
#[derive(Debug, Clone)]
pub struct Rule {
    pub points: Vec<(f64, f64)>,
}

impl Rule {
    /// Gauss–Legendre rule mapped to `[a, b]`.
    pub fn legendre(n: usize, a: f64, b: f64) -> Self {
        let (x, w) = gauss_legendre(n);
        let c = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let points = x
            .iter()
            .zip(&w)
            .map(|(&xi, &wi)| (mid + c * xi, c * wi))
            .collect();
        Rule { points }
    }

    /// Composite Gauss–Legendre rule over consecutive panels
    /// `[edges[0], edges[1]], [edges[1], edges[2]], ...`.
    pub fn composite(nodes_per_panel: usize, edges: &[f64]) -> Self {
        assert!(edges.len() >= 2, "need at least one panel");
        let mut points = Vec::with_capacity(nodes_per_panel * (edges.len() - 1));
        for pair in edges.windows(2) {
            points.extend(Rule::legendre(nodes_per_panel, pair[0], pair[1]).points);
        }
        Rule { points }
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        pairwise_sum(&self.points.iter().map(|&(x, w)| w * f(x)).collect::<Vec<_>>())
    }
}

/// Geometric panel edges `lo * ratio^k` from `lo` to (at least) `hi`,
/// prefixed with 0. Suited to integrands decaying from the origin.
pub fn geometric_edges(lo: f64, hi: f64, ratio: f64) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && ratio > 1.0);
    let mut edges = vec![0.0, lo];
    let mut x = lo;
    while x < hi {
        x *= ratio;
        edges.push(x.min(hi));
    }
    edges
}

/// Trapezoid rule on `[0, pi]` with endpoint half-weights, doubling the node
/// count until two successive refinements agree to `tol` (relative to the
/// running scale). Spectrally accurate for integrands that extend to smooth
/// even periodic functions, which is the only way it is used here.
pub fn trapezoid_even_periodic(mut f: impl FnMut(f64) -> f64, tol: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let mut n = 32usize;
    let mut prev = f64::INFINITY;
    loop {
        let h = pi / n as f64;
        let mut s = 0.5 * (f(0.0) + f(pi));
        for k in 1..n {
            s += f(k as f64 * h);
        }
        let val = s * h;
        if (val - prev).abs() <= tol * (1.0 + val.abs()) || n >= 1 << 16 {
            return val;
        }
        prev = val;
        n *= 2;
    }
}

/// Sum with pairwise (tree) association: deterministic and with `O(log n)`
/// error growth, used wherever accumulation order must be reproducible.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}
