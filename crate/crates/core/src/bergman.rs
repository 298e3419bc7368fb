//! Generalised Bergman kernels `P_{q,p}(x, x') = sum lambda_i^q psi_i(x) conj(psi_i(x'))`
//! over the lowest cluster, and the checks of their near-diagonal structure.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::linalg::{herm_eigen, op_norm, CMatrix};
use crate::model_kernel::ModelKernel;
use crate::torus::{SpectralWindow, TorusConfig};

type C = Complex64;

#[derive(Clone, Debug)]
pub struct BergmanKernel {
    pub cfg: TorusConfig,
    pub q: u32,
    /// `lambda_i^q` for the cluster eigenvalues.
    pub weights: Vec<f64>,
    /// Cluster eigenvectors, column-major, `h`-normalised.
    vectors: Vec<C>,
    pub gauge_origin: (usize, usize),
}

/// `P_{q,p}` from the cluster of `window`.
pub fn assemble_kernel(window: &SpectralWindow, q: u32) -> Result<BergmanKernel> {
    let k = window.cluster_size;
    if k == 0 {
        return Err(Error::Domain(format!("empty cluster at p = {}", window.cfg.p)));
    }
    let weights = window.cluster_values().iter().map(|l| l.powi(q as i32)).collect();
    Ok(BergmanKernel {
        cfg: window.cfg.clone(),
        q,
        weights,
        vectors: window.vectors[..k * window.dim()].to_vec(),
        gauge_origin: window.gauge_origin,
    })
}

impl BergmanKernel {
    pub fn p(&self) -> usize {
        self.cfg.p
    }

    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    fn psi(&self, i: usize) -> &[C] {
        let d = self.cfg.dim();
        &self.vectors[i * d..(i + 1) * d]
    }

    pub fn value(&self, s: usize, t: usize) -> C {
        (0..self.rank()).map(|i| self.psi(i)[s] * self.psi(i)[t].conj() * self.weights[i]).sum()
    }

    /// `P(s, .)` at every site.
    pub fn row(&self, s: usize) -> Vec<C> {
        let d = self.cfg.dim();
        let mut out = vec![C::new(0.0, 0.0); d];
        for i in 0..self.rank() {
            let a = self.psi(i)[s] * self.weights[i];
            for (o, v) in out.iter_mut().zip(self.psi(i)) {
                *o += a * v.conj();
            }
        }
        out
    }

    /// `P(x, x)` at every site (complex; the imaginary part is rounding).
    pub fn diagonal(&self) -> Vec<C> {
        (0..self.cfg.dim()).map(|s| self.value(s, s)).collect()
    }

    /// `h^2 sum_x P(x, x)`.
    pub fn trace(&self) -> C {
        self.diagonal().iter().sum::<C>() * self.cfg.h().powi(2)
    }

    /// `sum lambda_i^q`, the trace computed from the spectrum.
    pub fn spectral_trace(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Gram matrix `h^2 V^* V` of the cluster vectors.
    fn gram(&self) -> CMatrix {
        let k = self.rank();
        let h2 = self.cfg.h().powi(2);
        CMatrix::from_fn(k, k, |a, b| {
            self.psi(a).iter().zip(self.psi(b)).map(|(x, y)| x.conj() * y).sum::<C>() * h2
        })
    }

    /// Operator norm of `Q^2 - Q` for the matrix `Q = h^2 P(x, x')`.
    ///
    /// With `A = h V` and `Q = A W A^*`, `Q^2 - Q = A (W G W - W) A^*` where
    /// `G = A^* A`, whose norm equals that of `G^{1/2} (W G W - W) G^{1/2}`.
    pub fn projection_defect(&self) -> f64 {
        let g = self.gram();
        let w = CMatrix::from_diagonal(&DVector::from_iterator(self.rank(), self.weights.iter().map(|&x| C::new(x, 0.0))));
        let inner = &w * &g * &w - &w;
        let e = herm_eigen(&g);
        let root = CMatrix::from_diagonal(&DVector::from_iterator(
            self.rank(),
            e.values.iter().map(|&x| C::new(x.max(0.0).sqrt(), 0.0)),
        ));
        let half = &e.vectors * root * e.vectors.adjoint();
        op_norm(&(&half * inner * &half))
    }

    /// Base point for local studies: the centre of the gauge frame, which
    /// keeps the chart `|Z| <= 1/4` clear of the twist column.
    pub fn base_site(&self) -> usize {
        let (j0, k0) = self.gauge_origin;
        self.cfg.site(j0 + self.cfg.n / 2, k0 + self.cfg.n / 2)
    }

    /// Whether the chart of `radius` around `base` stays clear of the
    /// twist column, as the radial gauge requires.
    pub fn chart_is_clear(&self, base: usize, radius: f64) -> bool {
        let n = self.cfg.n;
        let local = (self.cfg.coords(base).0 + n - self.gauge_origin.0) % n;
        let reach = (radius * n as f64).ceil() as usize + 1;
        local >= reach && local + reach <= n - 1
    }

    /// Chart coordinates `Z = x - x0` (minimum image) of `site` around `base`.
    pub fn chart(&self, base: usize, site: usize) -> [f64; 2] {
        let n = self.cfg.n as i64;
        let h = self.cfg.h();
        let (bj, bk) = self.cfg.coords(base);
        let (j, k) = self.cfg.coords(site);
        let wrap = |d: i64| ((d + n / 2).rem_euclid(n) - n / 2) as f64 * h;
        [wrap(j as i64 - bj as i64), wrap(k as i64 - bk as i64)]
    }

    /// Gauge phase taking the Landau-gauge section at `site` to the radial
    /// gauge centred at `base`: `pi p (X Y + 2 x0 Y)`.
    pub fn radial_phase(&self, base: usize, site: usize) -> f64 {
        let z = self.chart(base, site);
        let n = self.cfg.n;
        let x0 = ((self.cfg.coords(base).0 + n - self.gauge_origin.0) % n) as f64 * self.cfg.h();
        PI * self.cfg.p as f64 * (z[0] * z[1] + 2.0 * x0 * z[1])
    }

    /// Kernel in the radial gauge at `base`, valid when both sites lie in
    /// the chart around a base away from the twist column.
    pub fn radial_value(&self, base: usize, s: usize, t: usize) -> C {
        let ph = self.radial_phase(base, s) - self.radial_phase(base, t);
        C::from_polar(1.0, ph) * self.value(s, t)
    }

    /// Sites with `|Z| <= radius` around `base`.
    pub fn chart_sites(&self, base: usize, radius: f64) -> Vec<usize> {
        (0..self.cfg.dim())
            .filter(|&s| {
                let z = self.chart(base, s);
                (z[0] * z[0] + z[1] * z[1]).sqrt() <= radius + 1e-12
            })
            .collect()
    }
}

/// Radius of the chart around the base point used for model comparisons.
pub const CHART_RADIUS: f64 = 0.25;

#[derive(Clone, Debug, Serialize)]
pub struct RescaledComparison {
    pub p: usize,
    pub radius: f64,
    pub sup_error: f64,
    pub pairs: usize,
    /// `p^{-1} P(0, 0)` in the chart, equal to the diagonal-fit input.
    pub diagonal: f64,
}

/// `sup |p^{-n} P_{0,p}(Z, Z') - P_model(sqrt(p) Z, sqrt(p) Z')|` over lattice
/// pairs in the chart `|Z|, |Z'| <= 1/4` with `sqrt(p) |Z - Z'| <= radius`.
///
/// Lattice samples are taken at the sites themselves, so nearest-site
/// sampling is exact and contributes no interpolation error.
pub fn rescaled_comparison(kernel: &BergmanKernel, mk: &ModelKernel, radius: f64) -> Result<RescaledComparison> {
    let p = kernel.p() as f64;
    if kernel.q != 0 {
        return Err(Error::Domain("rescaled comparison needs q = 0".into()));
    }
    if !(radius > 0.0) || radius / p.sqrt() > 2f64.sqrt() {
        return Err(Error::Domain(format!(
            "radius {radius} exceeds the torus at p = {} (need R / sqrt(p) <= sqrt 2)",
            kernel.p()
        )));
    }
    let base = kernel.base_site();
    let sites = kernel.chart_sites(base, CHART_RADIUS);
    let sp = p.sqrt();
    let mut sup = 0.0f64;
    let mut pairs = 0;
    for &s in &sites {
        let z = kernel.chart(base, s);
        let row = kernel.row(s);
        let phase_s = kernel.radial_phase(base, s);
        for &t in &sites {
            let zp = kernel.chart(base, t);
            let dist = ((z[0] - zp[0]).powi(2) + (z[1] - zp[1]).powi(2)).sqrt();
            if sp * dist > radius + 1e-12 {
                continue;
            }
            let v = C::from_polar(1.0, phase_s - kernel.radial_phase(base, t)) * row[t] / p;
            let m = mk.eval(&[sp * z[0], sp * z[1]], &[sp * zp[0], sp * zp[1]]);
            sup = sup.max((v - m).norm());
            pairs += 1;
        }
    }
    Ok(RescaledComparison { p: kernel.p(), radius, sup_error: sup, pairs, diagonal: kernel.value(base, base).re / p })
}

/// Least-squares fit of `a + b p^{-1/2} (+ c p^{-1})`.
#[derive(Clone, Debug, Serialize)]
pub struct ExpansionFit {
    pub p_list: Vec<usize>,
    pub values: Vec<f64>,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub residual: f64,
}

/// Fit `values` against `a + b p^{-1/2} + c p^{-1}` (three terms) or
/// `a + b p^{-1/2}` (two terms).
pub fn expansion_fit(p_list: &[usize], values: &[f64], terms: usize) -> Result<ExpansionFit> {
    if p_list.len() != values.len() {
        return Err(Error::DimensionMismatch { expected: p_list.len(), got: values.len() });
    }
    if !(2..=3).contains(&terms) {
        return Err(crate::error::invalid("fit uses two or three terms"));
    }
    let mut distinct = p_list.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Domain(format!("need at least 3 distinct p values, got {}", distinct.len())));
    }
    let rows = p_list.len();
    let design = DMatrix::from_fn(rows, terms, |i, j| (p_list[i] as f64).powf(-0.5 * j as f64));
    let y = DVector::from_column_slice(values);
    let svd = design.clone().svd(true, true);
    let coef = svd.solve(&y, 1e-14).map_err(|e| Error::Domain(e.to_string()))?;
    let residual = (&design * &coef - &y).norm();
    Ok(ExpansionFit {
        p_list: p_list.to_vec(),
        values: values.to_vec(),
        a: coef[0],
        b: coef[1],
        c: if terms == 3 { coef[2] } else { 0.0 },
        residual,
    })
}

/// `p^{-1} P_{q,p}(x0, x0)` at the base site.
pub fn scaled_diagonal(kernel: &BergmanKernel) -> f64 {
    let b = kernel.base_site();
    kernel.value(b, b).re / kernel.p() as f64
}

/// Fit of `p^{-1} P_{0,p}(x, x)` over the kernels (one per p).
pub fn diagonal_limit_check(kernels: &[BergmanKernel]) -> Result<ExpansionFit> {
    let p: Vec<usize> = kernels.iter().map(BergmanKernel::p).collect();
    let v: Vec<f64> = kernels.iter().map(scaled_diagonal).collect();
    expansion_fit(&p, &v, 3)
}

#[derive(Clone, Debug, Serialize)]
pub struct Q1Check {
    pub fit: ExpansionFit,
    /// `max |v| <= 2 min |v|` over the list.
    pub bounded: bool,
    /// Successive differences strictly decrease in magnitude.
    pub differences_decrease: bool,
}

/// Uniform boundedness of `p^{-1} P_{1,p}(x, x)`. The values are tiny and
/// of one sign, so the bound is checked on magnitudes.
pub fn q1_boundedness_check(kernels: &[BergmanKernel]) -> Result<Q1Check> {
    if kernels.iter().any(|k| k.q != 1) {
        return Err(Error::Domain("q1 check needs q = 1 kernels".into()));
    }
    let p: Vec<usize> = kernels.iter().map(BergmanKernel::p).collect();
    let v: Vec<f64> = kernels.iter().map(scaled_diagonal).collect();
    let fit = expansion_fit(&p, &v, 2)?;
    let mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    let max = mags.iter().copied().fold(0.0, f64::max);
    let min = mags.iter().copied().fold(f64::INFINITY, f64::min);
    let diffs: Vec<f64> = v.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let differences_decrease = diffs.windows(2).all(|w| w[1] < w[0]);
    Ok(Q1Check { fit, bounded: max <= 2.0 * min, differences_decrease })
}

/// Samples `(d, |p^{-1} P(x0, x0 + d e_x)|)` along the lattice x axis.
pub fn decay_samples(kernel: &BergmanKernel, max_d: f64) -> Vec<(f64, f64)> {
    let base = kernel.base_site();
    let row = kernel.row(base);
    let (bj, bk) = kernel.cfg.coords(base);
    let h = kernel.cfg.h();
    let p = kernel.p() as f64;
    (1..kernel.cfg.n)
        .map(|m| (m as f64 * h, row[kernel.cfg.site(bj + m, bk)].norm() / p))
        .take_while(|(d, _)| *d <= max_d + 1e-12)
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayFit {
    pub p: usize,
    pub d_range: (f64, f64),
    /// Decay constant in `exp(-c sqrt(mu0 p) d)`.
    pub c_hat: f64,
    /// Least-squares prefactor.
    pub prefactor: f64,
    /// Smallest prefactor for which the fitted exponential dominates every
    /// sample in the range.
    pub majorant_prefactor: f64,
    pub samples_used: usize,
}

impl DecayFit {
    pub fn bound(&self, mu0: f64, d: f64) -> f64 {
        self.majorant_prefactor * (-self.c_hat * (mu0 * self.p as f64).sqrt() * d).exp()
    }
}

/// Values below this are excluded from the decay fit.
pub const DECAY_FLOOR: f64 = 1e-13;

/// Fit `log |p^{-1} P(x0, x0 + d)| = log A - c sqrt(mu0 p) d` over `d_range`.
pub fn offdiagonal_decay_fit(kernel: &BergmanKernel, d_range: (f64, f64)) -> Result<DecayFit> {
    let p = kernel.p() as f64;
    let lo = 2.0 / (2.0 * PI * p).sqrt();
    let (a, b) = d_range;
    if !(a >= lo - 1e-12 && b <= 0.25 + 1e-12 && a < b) {
        return Err(Error::Domain(format!("decay range ({a}, {b}) outside ({lo}, 0.25)")));
    }
    let rate = (kernel.cfg.mu0 * p).sqrt();
    let pts: Vec<(f64, f64)> = decay_samples(kernel, b)
        .into_iter()
        .filter(|(d, v)| *d >= a - 1e-12 && *v >= DECAY_FLOOR)
        .collect();
    if pts.len() < 2 {
        return Err(Error::Domain("too few usable samples in the decay range".into()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|x| x.0).sum::<f64>() / n;
    let my = pts.iter().map(|x| x.1.ln()).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|x| (x.0 - mx) * (x.1.ln() - my)).sum();
    let sxx: f64 = pts.iter().map(|x| (x.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let c_hat = -slope / rate;
    let prefactor = (my - slope * mx).exp();
    let majorant_prefactor =
        pts.iter().map(|(d, v)| v * (c_hat * rate * d).exp()).fold(prefactor, f64::max);
    Ok(DecayFit { p: kernel.p(), d_range, c_hat, prefactor, majorant_prefactor, samples_used: pts.len() })
}

/// Largest spread of `|P(x, x + d)|` over base points, for each offset
/// `d` in `offsets` (in lattice steps).
pub fn translation_spread(kernel: &BergmanKernel, bases: &[usize], offsets: &[(usize, usize)]) -> f64 {
    let mut worst = 0.0f64;
    for &(dj, dk) in offsets {
        let vals: Vec<f64> = bases
            .iter()
            .map(|&s| {
                let (j, k) = kernel.cfg.coords(s);
                kernel.value(s, kernel.cfg.site(j + dj, k + dk)).norm()
            })
            .collect();
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        worst = worst.max(hi - lo);
    }
    worst
}

pub fn decay_csv(kernels: &[BergmanKernel], max_d: f64) -> String {
    let mut s = String::from("p,d,abs_p\n");
    for k in kernels {
        for (d, v) in decay_samples(k, max_d) {
            let _ = writeln!(s, "{},{},{}", k.p(), fmt_f64(d), fmt_f64(v));
        }
    }
    s
}

pub fn diagonal_csv(fit: &ExpansionFit) -> String {
    let mut s = String::from("p,diag\n");
    for (p, v) in fit.p_list.iter().zip(&fit.values) {
        let _ = writeln!(s, "{p},{}", fmt_f64(*v));
    }
    s
}
