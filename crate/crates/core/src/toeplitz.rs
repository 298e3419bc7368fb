//! Toeplitz operators `T_{f,p} = P f P` on the lattice torus for
//! trigonometric-polynomial symbols.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::Serialize;

use crate::bergman::CHART_RADIUS;
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::linalg::{herm_eigen, op_norm, CMatrix};
use crate::model_kernel::ModelKernel;
use crate::torus::SpectralWindow;

type C = Complex64;

/// `f(x, y) = sum a_k exp(2 pi i (k_x x + k_y y))`, stored with merged
/// frequencies and no zero amplitudes.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct SymbolFunction {
    terms: BTreeMap<(i32, i32), C>,
}

impl SymbolFunction {
    pub fn from_terms(terms: &[((i32, i32), C)]) -> Self {
        let mut f = Self::default();
        for &(k, a) in terms {
            f.add_term(k, a);
        }
        f
    }

    fn add_term(&mut self, k: (i32, i32), a: C) {
        let e = self.terms.entry(k).or_default();
        *e += a;
        if e.norm() == 0.0 {
            self.terms.remove(&k);
        }
    }

    pub fn constant(c: C) -> Self {
        Self::from_terms(&[((0, 0), c)])
    }

    /// `cos(2 pi (m x + l y))`.
    pub fn cos(m: i32, l: i32) -> Self {
        Self::from_terms(&[((m, l), C::new(0.5, 0.0)), ((-m, -l), C::new(0.5, 0.0))])
    }

    /// `sin(2 pi (m x + l y))`.
    pub fn sin(m: i32, l: i32) -> Self {
        Self::from_terms(&[((m, l), C::new(0.0, -0.5)), ((-m, -l), C::new(0.0, 0.5))])
    }

    pub fn terms(&self) -> impl Iterator<Item = (&(i32, i32), &C)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, x: f64, y: f64) -> C {
        self.terms
            .iter()
            .map(|(&(kx, ky), a)| a * C::from_polar(1.0, 2.0 * PI * (kx as f64 * x + ky as f64 * y)))
            .sum()
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (&k, &a) in &other.terms {
            out.add_term(k, a);
        }
        out
    }

    pub fn scale(&self, s: C) -> Self {
        let mut out = Self::default();
        for (&k, &a) in &self.terms {
            out.add_term(k, a * s);
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::default();
        for (&(a1, b1), &x) in &self.terms {
            for (&(a2, b2), &y) in &other.terms {
                out.add_term((a1 + a2, b1 + b2), x * y);
            }
        }
        out
    }

    pub fn conj(&self) -> Self {
        let mut out = Self::default();
        for (&(kx, ky), &a) in &self.terms {
            out.add_term((-kx, -ky), a.conj());
        }
        out
    }

    /// Real-valued symbols have `a_{-k} = conj(a_k)`.
    pub fn is_real(&self) -> bool {
        self.terms.iter().all(|(&(kx, ky), a)| {
            let b = self.terms.get(&(-kx, -ky)).copied().unwrap_or_default();
            (a - b.conj()).norm() <= 1e-15 * a.norm().max(1.0)
        })
    }

    /// `d^a/dx^a d^b/dy^b f`, exactly.
    pub fn derivative(&self, a: u32, b: u32) -> Self {
        let mut out = Self::default();
        for (&(kx, ky), &amp) in &self.terms {
            let fx = C::new(0.0, 2.0 * PI * kx as f64).powu(a);
            let fy = C::new(0.0, 2.0 * PI * ky as f64).powu(b);
            out.add_term((kx, ky), amp * fx * fy);
        }
        out
    }

    /// Poisson bracket on `(T^2, 2 pi dx ^ dy)`:
    /// `(1 / 2 pi) (f_x g_y - f_y g_x)`.
    pub fn poisson(&self, other: &Self) -> Self {
        let a = self.derivative(1, 0).mul(&other.derivative(0, 1));
        let b = self.derivative(0, 1).mul(&other.derivative(1, 0));
        a.add(&b.scale(C::new(-1.0, 0.0))).scale(C::new(1.0 / (2.0 * PI), 0.0))
    }

    /// Taylor coefficients `d^alpha f(x0) / alpha!` for `|alpha| <= order`.
    pub fn jet(&self, x0: (f64, f64), order: u32) -> BTreeMap<Vec<u32>, C> {
        let mut out = BTreeMap::new();
        for total in 0..=order {
            for a in 0..=total {
                let b = total - a;
                let fact = (1..=a).product::<u32>() as f64 * (1..=b).product::<u32>() as f64;
                out.insert(vec![a, b], self.derivative(a, b).eval(x0.0, x0.1) / fact);
            }
        }
        out
    }

    /// Values at every lattice site, x running fastest.
    pub fn on_grid(&self, n: usize) -> Vec<C> {
        let h = 1.0 / n as f64;
        (0..n * n).map(|s| self.eval((s % n) as f64 * h, (s / n) as f64 * h)).collect()
    }
}

/// `T_{f,p}` in the orthonormal cluster basis,
/// `T_ij = h^2 sum_x conj(psi_i(x)) f(x) psi_j(x)`.
#[derive(Clone, Debug)]
pub struct ToeplitzMatrix {
    pub p: usize,
    pub entries: CMatrix,
}

impl ToeplitzMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn op_norm(&self) -> f64 {
        op_norm(&self.entries)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let d = &self.entries - self.entries.adjoint();
        d.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        herm_eigen(&self.entries).values.first().copied().unwrap_or(0.0)
    }

    /// Rows of `[re, im]` pairs.
    pub fn to_json(&self) -> Vec<Vec<[f64; 2]>> {
        (0..self.dim()).map(|i| (0..self.dim()).map(|j| [self.entries[(i, j)].re, self.entries[(i, j)].im]).collect()).collect()
    }
}

pub fn build_toeplitz(f: &SymbolFunction, window: &SpectralWindow) -> Result<ToeplitzMatrix> {
    let k = window.cluster_size;
    if k == 0 {
        return Err(Error::Domain(format!("empty cluster at p = {}", window.cfg.p)));
    }
    let values = f.on_grid(window.cfg.n);
    let h2 = window.cfg.h().powi(2);
    let weighted: Vec<Vec<C>> = (0..k)
        .map(|j| window.vector(j).iter().zip(&values).map(|(v, f)| v * f).collect())
        .collect();
    let entries = CMatrix::from_fn(k, k, |i, j| {
        window.vector(i).iter().zip(&weighted[j]).map(|(a, b)| a.conj() * b).sum::<C>() * h2
    });
    Ok(ToeplitzMatrix { p: window.cfg.p, entries })
}

#[derive(Clone, Debug, Serialize)]
pub struct DefectRow {
    pub p: usize,
    pub value: f64,
}

/// `e1(p) = || T_f T_g - T_{fg} ||`.
pub fn product_defect(f: &SymbolFunction, g: &SymbolFunction, windows: &[SpectralWindow]) -> Result<Vec<DefectRow>> {
    let fg = f.mul(g);
    windows
        .iter()
        .map(|w| {
            let (tf, tg, tfg) = (build_toeplitz(f, w)?, build_toeplitz(g, w)?, build_toeplitz(&fg, w)?);
            let d = &tf.entries * &tg.entries - &tfg.entries;
            Ok(DefectRow { p: w.cfg.p, value: op_norm(&d) })
        })
        .collect()
}

/// `e2(p) = || p [T_f, T_g] - i T_{{f,g}} ||`.
pub fn commutator_poisson_check(
    f: &SymbolFunction,
    g: &SymbolFunction,
    windows: &[SpectralWindow],
) -> Result<Vec<DefectRow>> {
    let bracket = f.poisson(g);
    windows
        .iter()
        .map(|w| {
            let (tf, tg, tb) = (build_toeplitz(f, w)?, build_toeplitz(g, w)?, build_toeplitz(&bracket, w)?);
            let p = C::new(w.cfg.p as f64, 0.0);
            let comm = (&tf.entries * &tg.entries - &tg.entries * &tf.entries) * p;
            let d = comm - tb.entries * C::new(0.0, 1.0);
            Ok(DefectRow { p: w.cfg.p, value: op_norm(&d) })
        })
        .collect()
}

/// Kernel `T_{f,p}(x, x') = sum_ij psi_i(x) T_ij conj(psi_j(x'))`.
struct ToeplitzKernel<'a> {
    window: &'a SpectralWindow,
    t: ToeplitzMatrix,
}

impl ToeplitzKernel<'_> {
    fn row(&self, s: usize) -> Vec<C> {
        let w = self.window;
        let k = w.cluster_size;
        let coeff: Vec<C> = (0..k).map(|j| (0..k).map(|i| w.vector(i)[s] * self.t.entries[(i, j)]).sum()).collect();
        let mut out = vec![C::new(0.0, 0.0); w.dim()];
        for (j, c) in coeff.iter().enumerate() {
            for (o, v) in out.iter_mut().zip(w.vector(j)) {
                *o += c * v.conj();
            }
        }
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct KernelDecay {
    pub p: usize,
    pub epsilon: f64,
    /// `max |T(x, x')|` over sampled `x` and all `x'` at torus distance `> epsilon`.
    pub max_modulus: f64,
    /// Average over sampled `x` of `h^2 sum_{d(x, x') > epsilon} |T(x, x')|`.
    pub mass: f64,
    pub base_points: usize,
}

fn torus_distance(n: usize, a: (usize, usize), b: (usize, usize)) -> f64 {
    let d = |u: usize, v: usize| {
        let t = (u as i64 - v as i64).rem_euclid(n as i64) as usize;
        t.min(n - t) as f64 / n as f64
    };
    (d(a.0, b.0).powi(2) + d(a.1, b.1).powi(2)).sqrt()
}

/// Off-diagonal size of the Toeplitz kernel beyond distance `epsilon`.
/// Base points run over a sublattice of about `samples^2` sites.
pub fn toeplitz_kernel_decay(
    f: &SymbolFunction,
    window: &SpectralWindow,
    epsilon: f64,
    samples: usize,
) -> Result<KernelDecay> {
    let p = window.cfg.p as f64;
    let lo = 2.0 / (2.0 * PI * p).sqrt();
    if !(epsilon > lo && epsilon < 0.4) {
        return Err(Error::Domain(format!("epsilon {epsilon} outside ({lo}, 0.4)")));
    }
    let kern = ToeplitzKernel { window, t: build_toeplitz(f, window)? };
    let n = window.cfg.n;
    let stride = (n / samples.max(1)).max(1);
    let h2 = window.cfg.h().powi(2);
    let mut max_modulus = 0.0f64;
    let mut mass = 0.0;
    let mut count = 0;
    for k in (0..n).step_by(stride) {
        for j in (0..n).step_by(stride) {
            let s = window.cfg.site(j, k);
            let row = kern.row(s);
            let mut m = 0.0;
            for (t, v) in row.iter().enumerate() {
                if torus_distance(n, (j, k), window.cfg.coords(t)) > epsilon {
                    max_modulus = max_modulus.max(v.norm());
                    m += v.norm() * h2;
                }
            }
            mass += m;
            count += 1;
        }
    }
    Ok(KernelDecay { p: window.cfg.p, epsilon, max_modulus, mass: mass / count as f64, base_points: count })
}

/// Radius of the rescaled neighbourhood in the leading-symbol check.
pub const LEADING_RADIUS: f64 = 2.0;

#[derive(Clone, Debug, Serialize)]
pub struct LeadingSymbol {
    pub p: usize,
    pub f_at_base: [f64; 2],
    pub sup_error: f64,
    /// `sup |p^{-1} T(0, Z')|` over the same sites.
    pub sup_kernel: f64,
}

/// `sup |p^{-1} T_{f,p}(0, Z') - f(x0) P_model(0, sqrt(p) Z')|` over lattice
/// sites in the rescaled ball `sqrt(p) |Z'| <= 2` around the window's base
/// site `x0` (clipped to the chart `|Z'| <= 1/4`).
///
/// One argument stays at the base point: with both arguments free the
/// symbol varies by `O(1)` across the ball at moderate `p`, which hides the
/// expansion.
///
/// The window must be solved in a gauge whose frame centre is the base
/// point (see [`crate::torus::TorusConfig::centring_origin`]).
pub fn leading_symbol_check(f: &SymbolFunction, window: &SpectralWindow, mk: &ModelKernel) -> Result<LeadingSymbol> {
    let p = window.cfg.p as f64;
    let reach = (LEADING_RADIUS / p.sqrt()).min(CHART_RADIUS);
    if LEADING_RADIUS / p.sqrt() > 2f64.sqrt() {
        return Err(Error::Domain(format!("p = {} is too small for the rescaled ball", window.cfg.p)));
    }
    let bk = crate::bergman::assemble_kernel(window, 0)?;
    let base = bk.base_site();
    if !bk.chart_is_clear(base, reach) {
        return Err(Error::Domain("chart around the base crosses the gauge twist".into()));
    }
    let (bj, bkk) = window.cfg.coords(base);
    let h = window.cfg.h();
    let f0 = f.eval(bj as f64 * h, bkk as f64 * h);
    let kern = ToeplitzKernel { window, t: build_toeplitz(f, window)? };
    let sites = bk.chart_sites(base, reach);
    let sp = p.sqrt();
    let mut sup_error = 0.0f64;
    let mut sup_kernel = 0.0f64;
    let row = kern.row(base);
    for &t in &sites {
        let zp = bk.chart(base, t);
        let phase = bk.radial_phase(base, base) - bk.radial_phase(base, t);
        let v = row[t] * C::from_polar(1.0, phase) / p;
        let m = mk.eval(&[0.0, 0.0], &[sp * zp[0], sp * zp[1]]) * f0;
        sup_error = sup_error.max((v - m).norm());
        sup_kernel = sup_kernel.max(v.norm());
    }
    Ok(LeadingSymbol { p: window.cfg.p, f_at_base: [f0.re, f0.im], sup_error, sup_kernel })
}

/// CSV rows `p, e1, e2`.
pub fn defect_csv(e1: &[DefectRow], e2: &[DefectRow]) -> String {
    let mut s = String::from("p,e1,e2\n");
    for (a, b) in e1.iter().zip(e2) {
        let _ = writeln!(s, "{},{},{}", a.p, fmt_f64(a.value), fmt_f64(b.value));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symbol_algebra() {
        let f = SymbolFunction::cos(1, 0);
        let g = SymbolFunction::cos(0, 1);
        assert!(f.is_real() && g.is_real());
        let (x, y) = (0.13, 0.71);
        assert!((f.mul(&g).eval(x, y).re - (2.0 * PI * x).cos() * (2.0 * PI * y).cos()).abs() < 1e-14);
        // {cos 2 pi x, cos 2 pi y} = 2 pi sin 2 pi x sin 2 pi y
        let b = f.poisson(&g);
        let expect = 2.0 * PI * (2.0 * PI * x).sin() * (2.0 * PI * y).sin();
        assert!((b.eval(x, y) - C::new(expect, 0.0)).norm() < 1e-12);
        assert!(f.poisson(&f).is_zero());
        assert!(SymbolFunction::constant(C::new(2.0, 0.0)).poisson(&g).is_zero());
        let d = SymbolFunction::sin(1, 0).derivative(1, 0);
        assert!((d.eval(x, y).re - 2.0 * PI * (2.0 * PI * x).cos()).abs() < 1e-12);
    }

    #[test]
    fn jet_of_cosine() {
        let f = SymbolFunction::cos(1, 0);
        let j = f.jet((0.0, 0.0), 2);
        assert!((j[&vec![0, 0]] - C::new(1.0, 0.0)).norm() < 1e-14);
        assert!(j[&vec![1, 0]].norm() < 1e-14);
        assert!((j[&vec![2, 0]] - C::new(-2.0 * PI * PI, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn distances_wrap() {
        assert!((torus_distance(10, (0, 0), (9, 0)) - 0.1).abs() < 1e-15);
        assert!((torus_distance(10, (1, 1), (6, 6)) - 0.5f64.sqrt()).abs() < 1e-15);
    }
}
