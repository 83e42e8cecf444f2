//! Lattice Sobolev and sup norms, restriction to comparison grids, and the
//! convergence-rate measurements for the rescaled covariances.
//!
//! Covariances at different scales are compared after restriction to a
//! common `ε_l` grid (the coarser lattice is a subset of the finer ones).
//! Norms are taken over the cube `Ω = U_{ε_l}(6L)`, which contains the
//! support of every composed covariance; derivatives are forward lattice
//! differences at spacing `ε_l`. The convergence statement under test is
//!
//! `‖Γ^a_n - Γ^a_∞‖_{L¹_k(Ω)} <= c L^{-n/2} e^{-c√a}`,
//!
//! with the continuum limit stood in for by the finest computed scale; rate
//! fits are unweighted least squares on `log_L` values against `n`.

use rand::Rng;

use crate::fluctuation::{build_covariance, FluctuationCovariance, PoissonProvider};
use crate::lattice::{for_each_index, LatticeSpec};
use crate::quad::pairwise_sum;
use crate::resolvent::{green_symbol, green_symbol_continuum, laplacian_symbol};
use crate::{Error, Result};

/// A function sampled on the signed box `[-half, half]^d` of an `ε`-grid.
/// Small enough to hold many of them; all norm arithmetic happens here.
#[derive(Debug, Clone)]
pub struct Patch {
    d: usize,
    half: i64,
    eps: f64,
    vals: Vec<f64>,
}

impl Patch {
    pub fn from_fn(d: usize, half: i64, eps: f64, mut f: impl FnMut(&[i64]) -> f64) -> Self {
        let side = (2 * half + 1) as usize;
        let mut vals = vec![0.0; side.pow(d as u32)];
        let mut j = vec![0i64; d];
        let mut flat = 0usize;
        for_each_index(&vec![side; d], |idx| {
            for (ax, &i) in idx.iter().enumerate() {
                j[ax] = i as i64 - half;
            }
            vals[flat] = f(&j);
            flat += 1;
        });
        Patch { d, half, eps, vals }
    }

    pub fn zeros(d: usize, half: i64, eps: f64) -> Self {
        Self::from_fn(d, half, eps, |_| 0.0)
    }

    pub fn dimension(&self) -> usize {
        self.d
    }

    pub fn half(&self) -> i64 {
        self.half
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    #[inline]
    fn flat(&self, j: &[i64]) -> usize {
        let side = (2 * self.half + 1) as usize;
        let mut flat = 0usize;
        for &c in j {
            debug_assert!(c.abs() <= self.half);
            flat = flat * side + (c + self.half) as usize;
        }
        flat
    }

    pub fn get(&self, j: &[i64]) -> f64 {
        self.vals[self.flat(j)]
    }

    pub fn values(&self) -> &[f64] {
        &self.vals
    }

    /// Pointwise difference; grids must agree.
    pub fn minus(&self, other: &Patch) -> Result<Patch> {
        if self.d != other.d || self.half != other.half || self.eps != other.eps {
            return Err(Error::InvalidParameter("patch grids differ".into()));
        }
        let mut out = self.clone();
        for (v, w) in out.vals.iter_mut().zip(&other.vals) {
            *v -= w;
        }
        Ok(out)
    }

    /// Forward lattice difference `D^α f(j)` (recursion over the first
    /// active axis), spacing `eps`. All touched sites must lie in the box.
    pub fn diff_at(&self, j: &[i64], alpha: &[u32]) -> f64 {
        match alpha.iter().position(|&a| a > 0) {
            None => self.get(j),
            Some(ax) => {
                let mut a2: Vec<u32> = alpha.to_vec();
                a2[ax] -= 1;
                let mut j2: Vec<i64> = j.to_vec();
                j2[ax] += 1;
                (self.diff_at(&j2, &a2) - self.diff_at(j, &a2)) / self.eps
            }
        }
    }
}

/// Restricts a covariance kernel to the `ε_l` comparison grid over the
/// signed box `[-half, half]^d` (in `ε_l` units). Requires `l <= n`.
pub fn restrict_covariance(
    cov: &FluctuationCovariance,
    spec: &LatticeSpec,
    l: u32,
    half: i64,
) -> Result<Patch> {
    let n = cov.n();
    if l > n {
        return Err(Error::InvalidParameter(format!(
            "comparison grid l = {l} must be at most the covariance scale n = {n}"
        )));
    }
    let stride = spec.block_scale().pow(n - l) as i64;
    let m = cov.grid().sites_per_axis() as i64;
    if half * stride > m / 2 {
        return Err(Error::InvalidParameter("restriction box exceeds the torus".into()));
    }
    let d = spec.dimension();
    Ok(Patch::from_fn(d, half, spec.eps(l), |j| {
        let units: Vec<i64> = j.iter().map(|&c| c * stride).collect();
        cov.value_at_units(&units)
    }))
}

/// Multi-indices `α ∈ N^d` with `|α| = k` (`exact`) or `|α| <= k`, in a
/// fixed lexicographic order.
pub fn multi_indices(d: usize, k: u32, exact: bool) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur = vec![0u32; d];
    fn rec(out: &mut Vec<Vec<u32>>, cur: &mut Vec<u32>, ax: usize, remaining: u32, exact: bool) {
        if ax + 1 == cur.len() {
            if exact {
                cur[ax] = remaining;
                out.push(cur.clone());
            } else {
                for v in 0..=remaining {
                    cur[ax] = v;
                    out.push(cur.clone());
                }
            }
            return;
        }
        for v in 0..=remaining {
            cur[ax] = v;
            rec(out, cur, ax + 1, remaining - v, exact);
        }
    }
    rec(&mut out, &mut cur, 0, k, exact);
    out
}

/// Which norm a report carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// `Σ_{|α| <= k} ‖D^α f‖_{L¹(Ω)}`
    L1k,
    /// Top order only, `Σ_{|α| = k} ‖D^α f‖_{L¹(Ω)}` (Poincaré-equivalent).
    L1kTop,
    /// `sup_{|α| <= j, x ∈ Ω} |D^α f(x)|`
    Cj,
}

#[derive(Debug, Clone)]
pub struct NormReport {
    pub kind: NormKind,
    pub order: u32,
    /// Half-width of the open cube Ω (physical units).
    pub domain_half: f64,
    pub value: f64,
}

fn domain_sites(patch: &Patch, domain_half: f64, margin: u32) -> Result<Vec<Vec<i64>>> {
    // Largest lattice index strictly inside the open cube.
    let mut max_j = (domain_half / patch.eps()).floor() as i64;
    while max_j > 0 && max_j as f64 * patch.eps() >= domain_half {
        max_j -= 1;
    }
    let max_j = max_j.min(patch.half());
    if max_j + margin as i64 > patch.half() {
        return Err(Error::InvalidParameter(format!(
            "patch (half {}) too small for domain half-width {} plus {} difference steps",
            patch.half(),
            domain_half,
            margin
        )));
    }
    let d = patch.dimension();
    let side = (2 * max_j + 1) as usize;
    let mut sites = Vec::new();
    let eps = patch.eps();
    for_each_index(&vec![side; d], |idx| {
        let j: Vec<i64> = idx.iter().map(|&i| i as i64 - max_j).collect();
        if j.iter().all(|&c| (c as f64 * eps).abs() < domain_half) {
            sites.push(j);
        }
    });
    Ok(sites)
}

fn check_supported(patch: &Patch, domain_half: f64) -> Result<()> {
    let d = patch.dimension();
    let side = (2 * patch.half() + 1) as usize;
    let eps = patch.eps();
    let mut inside_max = 0.0f64;
    let mut outside_max = 0.0f64;
    let mut flat = 0usize;
    for_each_index(&vec![side; d], |idx| {
        let inside = idx
            .iter()
            .all(|&i| ((i as i64 - patch.half()) as f64 * eps).abs() < domain_half);
        let v = patch.values()[flat].abs();
        if inside {
            inside_max = inside_max.max(v);
        } else {
            outside_max = outside_max.max(v);
        }
        flat += 1;
    });
    if outside_max > 1e-9 * inside_max.max(1e-300) {
        return Err(Error::InvalidParameter(format!(
            "function is not supported in the domain: |f| reaches {outside_max} outside vs {inside_max} inside"
        )));
    }
    Ok(())
}

/// `L¹_k` Sobolev norm over the open cube of half-width `domain_half`:
/// forward differences, measure `ε^d` per site. `equiv` selects the
/// top-order-only variant.
pub fn sobolev_norm(
    patch: &Patch,
    k: u32,
    domain_half: f64,
    equiv: bool,
) -> Result<NormReport> {
    check_supported(patch, domain_half)?;
    let sites = domain_sites(patch, domain_half, k)?;
    let alphas = multi_indices(patch.dimension(), k, equiv);
    let meas = patch.eps().powi(patch.dimension() as i32);
    let mut terms = Vec::with_capacity(sites.len() * alphas.len());
    for alpha in &alphas {
        for j in &sites {
            terms.push(patch.diff_at(j, alpha).abs() * meas);
        }
    }
    Ok(NormReport {
        kind: if equiv { NormKind::L1kTop } else { NormKind::L1k },
        order: k,
        domain_half,
        value: pairwise_sum(&terms),
    })
}

/// `C^j` norm: sup over the domain of all forward differences of order
/// up to `j`.
pub fn c_norm(patch: &Patch, j: u32, domain_half: f64) -> Result<NormReport> {
    let sites = domain_sites(patch, domain_half, j)?;
    let alphas = multi_indices(patch.dimension(), j, false);
    let mut sup = 0.0f64;
    for alpha in &alphas {
        for site in &sites {
            sup = sup.max(patch.diff_at(site, alpha).abs());
        }
    }
    Ok(NormReport { kind: NormKind::Cj, order: j, domain_half, value: sup })
}

/// Ratio `‖f‖_{C^j} / ‖f‖_{L¹_k}` (0 for the zero function); the Sobolev
/// embedding requires `k > d + j`.
pub fn embedding_check(patch: &Patch, j: u32, k: u32, domain_half: f64) -> Result<f64> {
    if k as usize <= patch.dimension() + j as usize {
        return Err(Error::InvalidParameter(format!(
            "embedding needs k > d + j (k = {k}, d = {}, j = {j})",
            patch.dimension()
        )));
    }
    let num = c_norm(patch, j, domain_half)?.value;
    let den = sobolev_norm(patch, k, domain_half, false)?.value;
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(num / den)
}

/// A fitted convergence rate over a family of scales.
#[derive(Debug, Clone)]
pub struct RateReport {
    pub quantity: String,
    pub scales: Vec<u32>,
    pub values: Vec<f64>,
    /// Least-squares slope of `log_L(value)` against `n`.
    pub fitted_rate: f64,
    pub expected_rate: f64,
    /// Pass iff `fitted_rate <= threshold`.
    pub threshold: f64,
    pub pass: bool,
    /// All values vanished (proxy compared to itself): fit skipped.
    pub degenerate: bool,
}

/// Unweighted least-squares fit of `log_L values` vs `n`; needs at least
/// three scales.
pub fn fit_rate(
    quantity: impl Into<String>,
    l: u64,
    scales: &[u32],
    values: &[f64],
    expected_rate: f64,
    threshold: f64,
) -> Result<RateReport> {
    if scales.len() < 3 || values.len() != scales.len() {
        return Err(Error::InvalidParameter("rate fit needs at least 3 scales".into()));
    }
    let quantity = quantity.into();
    if values.iter().any(|&v| v <= 0.0) {
        return Ok(RateReport {
            quantity,
            scales: scales.to_vec(),
            values: values.to_vec(),
            fitted_rate: f64::NEG_INFINITY,
            expected_rate,
            threshold,
            pass: true,
            degenerate: true,
        });
    }
    let logl = (l as f64).ln();
    let xs: Vec<f64> = scales.iter().map(|&n| n as f64).collect();
    let ys: Vec<f64> = values.iter().map(|&v| v.ln() / logl).collect();
    let xbar = xs.iter().sum::<f64>() / xs.len() as f64;
    let ybar = ys.iter().sum::<f64>() / ys.len() as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        num += (x - xbar) * (y - ybar);
        den += (x - xbar) * (x - xbar);
    }
    let slope = num / den;
    Ok(RateReport {
        quantity,
        scales: scales.to_vec(),
        values: values.to_vec(),
        fitted_rate: slope,
        expected_rate,
        threshold,
        pass: slope <= threshold,
        degenerate: false,
    })
}

/// Norm distances `‖Γ_n - proxy‖` per scale, in `L¹_k` or `C^j` (with the
/// supplied order), over the cube of half-width `domain_half`.
pub fn norm_distances(
    patches: &[Patch],
    proxy: &Patch,
    order: u32,
    domain_half: f64,
    kind: NormKind,
) -> Result<Vec<f64>> {
    patches
        .iter()
        .map(|p| {
            let diff = p.minus(proxy)?;
            let report = match kind {
                NormKind::L1k => sobolev_norm(&diff, order, domain_half, false)?,
                NormKind::L1kTop => sobolev_norm(&diff, order, domain_half, true)?,
                NormKind::Cj => c_norm(&diff, order, domain_half)?,
            };
            Ok(report.value)
        })
        .collect()
}

/// Builds the proxy for the continuum covariance: the scale-`n_ref`
/// covariance, which Theorem-rate arguments place within `O(L^{-n_ref/2})`
/// of the limit. `n_ref` must be strictly finer than every compared scale.
pub fn continuum_proxy(
    spec: &LatticeSpec,
    a: f64,
    n_ref: u32,
    finest_compared: u32,
    provider: &mut dyn PoissonProvider,
) -> Result<FluctuationCovariance> {
    if n_ref <= finest_compared {
        return Err(Error::InvalidParameter(format!(
            "proxy scale {n_ref} must exceed the finest compared scale {finest_compared}"
        )));
    }
    build_covariance(spec, n_ref, a, provider)
}

/// Momentum-space diagnostics of the resolvent symbol at one scale: the
/// Brillouin-zone sup of `|Ĝ_ε - Ĝ_c|` (decays like `ε_n`) and the sup of
/// the small-`p` ratio `|p² + Δ̂_ε(p)| / (ε² p⁴)`, bounded by `1/12` from
/// the alternating cosine series.
pub fn symbol_gap_scan(spec: &LatticeSpec, a: f64, n: u32) -> Result<(f64, f64)> {
    let grid = spec.grid(n)?;
    let d = spec.dimension();
    let s = grid.sites_per_axis() / 2 + 1;
    let eps = grid.eps();
    let mut sup_gap = 0.0f64;
    let mut sup_ratio = 0.0f64;
    let mut p = vec![0.0f64; d];
    for_each_index(&vec![s; d], |idx| {
        if idx.iter().all(|&k| k == 0) {
            return; // zero mode excluded for a = 0; gap is 0 for a > 0
        }
        for (ax, &k) in idx.iter().enumerate() {
            p[ax] = grid.momentum(k as i64);
        }
        let lat = green_symbol(a, eps, &p).expect("p != 0");
        let cont = green_symbol_continuum(a, &p).expect("p != 0");
        sup_gap = sup_gap.max((lat - cont).abs());
        let p2: f64 = p.iter().map(|v| v * v).sum();
        let lap = laplacian_symbol(eps, &p);
        sup_ratio = sup_ratio.max((p2 - lap).abs() / (eps * eps * p2 * p2));
    });
    Ok((sup_gap, sup_ratio))
}

/// Sup over the coarser grid's momenta of the gap between two averaging
/// symbols of the same cube index built at different scales (the finer one
/// standing in for the continuum operator).
pub fn averaging_symbol_gap(
    coarse: &crate::averaging::AveragingKernel,
    fine: &crate::averaging::AveragingKernel,
) -> Result<f64> {
    if coarse.m() != fine.m() {
        return Err(Error::InvalidParameter("averaging kernels have different cube index".into()));
    }
    if (coarse.grid().side() - fine.grid().side()).abs() > 1e-12 {
        return Err(Error::InvalidParameter(
            "averaging kernels live on different physical tori".into(),
        ));
    }
    let d = coarse.grid().dimension();
    let s = coarse.grid().sites_per_axis() / 2 + 1;
    let mut sup = 0.0f64;
    let mut k = vec![0i64; d];
    let cvals = coarse.symbol().sector().values();
    let mut flat = 0usize;
    for_each_index(&vec![s; d], |idx| {
        for (ax, &i) in idx.iter().enumerate() {
            k[ax] = i as i64;
        }
        let f = fine.symbol().value_at(&k);
        sup = sup.max((cvals[flat] - f).abs());
        flat += 1;
    });
    Ok(sup)
}

/// Default half-width of the comparison patch: the norm cube `U(6L)` plus
/// room for `k` forward differences.
pub fn comparison_half(spec: &LatticeSpec, l: u32, k_max: u32) -> i64 {
    let domain_half = 3.0 * spec.block_scale() as f64;
    (domain_half / spec.eps(l)).ceil() as i64 + k_max as i64 + 2
}

/// End-to-end rate measurement for the resolvent covariances: builds
/// `Γ^a_n` at the given scales and the proxy at `n_ref`, restricts all of
/// them to the `ε_l` grid with `l = min(scales)`, and fits the `L¹_k` decay
/// of the differences. Expected rate −1/2; `threshold` pins the pass line.
pub fn convergence_rate(
    spec: &LatticeSpec,
    a: f64,
    k: u32,
    scales: &[u32],
    n_ref: u32,
    threshold: f64,
    provider: &mut dyn PoissonProvider,
) -> Result<RateReport> {
    if scales.len() < 3 {
        return Err(Error::InvalidParameter("rate fit needs at least 3 scales".into()));
    }
    let finest = *scales.iter().max().unwrap();
    let l = *scales.iter().min().unwrap();
    let proxy_cov = continuum_proxy(spec, a, n_ref, finest, provider)?;
    let half = comparison_half(spec, l, k.max(1));
    let proxy = restrict_covariance(&proxy_cov, spec, l, half)?;
    drop(proxy_cov);
    let mut patches = Vec::new();
    for &n in scales {
        let cov = build_covariance(spec, n, a, provider)?;
        patches.push(restrict_covariance(&cov, spec, l, half)?);
    }
    let domain_half = 3.0 * spec.block_scale() as f64;
    let values = norm_distances(&patches, &proxy, k, domain_half, NormKind::L1k)?;
    fit_rate("gamma-vs-proxy", spec.block_scale(), scales, &values, -0.5, threshold)
}

/// [`convergence_rate`] for the Lévy covariances (no `e^{-c√a}` factor:
/// the resolvent parameter is integrated out). `sup_norm` switches to the
/// `C¹` distance of the sup-norm corollary.
pub fn levy_rate(
    spec: &LatticeSpec,
    params: &crate::levy::LevyParams,
    k: u32,
    scales: &[u32],
    n_ref: u32,
    threshold: f64,
    sup_norm: bool,
    provider: &mut dyn PoissonProvider,
) -> Result<RateReport> {
    if scales.len() < 3 {
        return Err(Error::InvalidParameter("rate fit needs at least 3 scales".into()));
    }
    let finest = *scales.iter().max().unwrap();
    if n_ref <= finest {
        return Err(Error::InvalidParameter("proxy scale must exceed the compared scales".into()));
    }
    let l = *scales.iter().min().unwrap();
    let half = comparison_half(spec, l, k.max(1));
    let proxy_cov = crate::levy::levy_gamma(spec, n_ref, params, provider)?;
    let proxy = restrict_covariance(&proxy_cov, spec, l, half)?;
    drop(proxy_cov);
    let mut patches = Vec::new();
    for &n in scales {
        let cov = crate::levy::levy_gamma(spec, n, params, provider)?;
        patches.push(restrict_covariance(&cov, spec, l, half)?);
    }
    let domain_half = 3.0 * spec.block_scale() as f64;
    let (name, values) = if sup_norm {
        ("levy-vs-proxy-sup", norm_distances(&patches, &proxy, 1, domain_half, NormKind::Cj)?)
    } else {
        ("levy-vs-proxy", norm_distances(&patches, &proxy, k, domain_half, NormKind::L1k)?)
    };
    fit_rate(name, spec.block_scale(), scales, &values, -0.5, threshold)
}

/// Resolvent-symbol diagnostics across scales: the fitted decay of
/// `sup_p |Ĝ_ε - Ĝ_c|` (expected −1, the measured rate is nearer −2) and
/// the largest small-momentum ratio `|p² + Δ̂_ε(p)|/(ε²p⁴)` seen.
pub fn symbol_gap_diag(
    spec: &LatticeSpec,
    a: f64,
    scales: &[u32],
    threshold: f64,
) -> Result<(RateReport, f64)> {
    let mut gaps = Vec::new();
    let mut ratio_max = 0.0f64;
    for &n in scales {
        let (gap, ratio) = symbol_gap_scan(spec, a, n)?;
        gaps.push(gap);
        ratio_max = ratio_max.max(ratio);
    }
    let fit = fit_rate("symbol-gap", spec.block_scale(), scales, &gaps, -1.0, threshold)?;
    Ok((fit, ratio_max))
}

/// Averaging-operator diagnostics: per-scale sup gaps between `Â_{ε_n,m}`
/// and the proxy-scale symbol of the same cube index, fitted against `n`
/// (expected −1), plus the gap constant `gap/ε_n` at the coarsest scale.
pub fn averaging_gap_diag(
    spec: &LatticeSpec,
    a: f64,
    m: u32,
    scales: &[u32],
    n_ref: u32,
    threshold: f64,
    provider: &mut dyn PoissonProvider,
) -> Result<(RateReport, f64)> {
    if scales.iter().any(|&n| n < m) {
        return Err(Error::InvalidParameter(format!(
            "cube index m = {m} exceeds one of the compared scales"
        )));
    }
    let fine = crate::fluctuation::build_averaging(spec, n_ref, m, a, provider)?;
    let mut gaps = Vec::new();
    for &n in scales {
        let coarse = crate::fluctuation::build_averaging(spec, n, m, a, provider)?;
        gaps.push(averaging_symbol_gap(&coarse, &fine)?);
    }
    let constant = gaps[0] / spec.eps(scales[0]);
    let fit = fit_rate("averaging-gap", spec.block_scale(), scales, &gaps, -1.0, threshold)?;
    Ok((fit, constant))
}

/// The elementary derivative-factor bound from the sup-norm corollary:
/// `|ε^{-1}(e^{iεp} - 1) - ip| <= ε p² / 2`, returned as (gap, bound).
pub fn derivative_factor_gap(eps: f64, p: f64) -> (f64, f64) {
    let re = ((eps * p).cos() - 1.0) / eps;
    let im = (eps * p).sin() / eps - p;
    ((re * re + im * im).sqrt(), eps * p * p / 2.0)
}

/// Sup-norm of the kernel against the momentum-space `L¹` majorant
/// `side^{-d} Σ_p |Γ̂(p)|`; the first never exceeds the second.
pub fn sup_vs_symbol_l1(cov: &FluctuationCovariance) -> (f64, f64) {
    let grid = cov.grid();
    let d = grid.dimension();
    let s = grid.sites_per_axis() / 2 + 1;
    let h = (s - 1) as i64;
    let vals = cov.symbol().sector().values();
    let mut terms = Vec::with_capacity(vals.len());
    let mut flat = 0usize;
    for_each_index(&vec![s; d], |idx| {
        // Multiplicity of a sector cell in the full momentum grid.
        let mut mult = 1.0f64;
        for &k in idx {
            if k as i64 != 0 && (k as i64) != h {
                mult *= 2.0;
            }
        }
        terms.push(mult * vals[flat].abs());
        flat += 1;
    });
    let l1 = pairwise_sum(&terms) * grid.side().powi(-(d as i32));
    (cov.sup_kernel(), l1)
}

/// Deterministic random test fields: uniform values in `[-1, 1]` strictly
/// inside `|j| <= support_half`, zero outside.
pub fn random_patch(
    d: usize,
    half: i64,
    support_half: i64,
    eps: f64,
    rng: &mut impl Rng,
) -> Patch {
    assert!(support_half <= half);
    Patch::from_fn(d, half, eps, |j| {
        if j.iter().all(|&c| c.abs() <= support_half) {
            rng.random_range(-1.0..1.0)
        } else {
            0.0
        }
    })
}
