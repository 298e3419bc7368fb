//! Operators with kernels `F(Z, Z') P(Z, Z')` for polynomial `F`, and their
//! composition `(F P) o (G P) = K[F, G] P`.
//!
//! With `E(Z, Z')` the exponent of `P`,
//! `E(Z, W) + E(W, Z') - E(Z, Z') = -W^T M W + l^T W + k` where `M = G/2`,
//! `G = g (Jcal^2)^{1/2}` is real positive-definite, `l` is linear and `k`
//! bilinear in `(Z, Z')`. Completing the square moves the integral to a
//! centred Gaussian in `V = W - W0`, whose moments are evaluated by
//! Isserlis' theorem.

use std::collections::{BTreeMap, HashMap};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{sqrt_det_continued, CMatrix};
use crate::model_kernel::ModelKernel;
use crate::poly::{Monomial, Parity, Poly};

type C = Complex64;

/// Coefficients below this modulus are dropped after every composition.
pub const PRUNE_THRESHOLD: f64 = 1e-13;

/// Highest total degree for which Gaussian moments are enumerated.
pub const MAX_MOMENT_DEGREE: u32 = 12;

/// A polynomial `F(Z, Z')` in `4n` variables, `Z` first.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyKernel {
    n: usize,
    poly: Poly,
}

impl PolyKernel {
    pub fn new(n: usize, poly: Poly) -> Result<Self> {
        if poly.nvars() != 4 * n {
            return Err(Error::DimensionMismatch { expected: 4 * n, got: poly.nvars() });
        }
        Ok(Self { n, poly })
    }

    pub fn zero(n: usize) -> Self {
        Self { n, poly: Poly::zero(4 * n) }
    }

    pub fn constant(n: usize, c: C) -> Self {
        Self { n, poly: Poly::constant(4 * n, c) }
    }

    pub fn one(n: usize) -> Self {
        Self::constant(n, C::new(1.0, 0.0))
    }

    /// The coordinate `Z_i` (0-based, `i < 2n`).
    pub fn z(n: usize, i: usize) -> Self {
        Self { n, poly: Poly::var(4 * n, i) }
    }

    /// The coordinate `Z'_i`.
    pub fn zp(n: usize, i: usize) -> Self {
        Self { n, poly: Poly::var(4 * n, 2 * n + i) }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn poly(&self) -> &Poly {
        &self.poly
    }

    pub fn degree(&self) -> u32 {
        self.poly.degree()
    }

    pub fn parity(&self) -> Parity {
        self.poly.parity()
    }

    pub fn eval(&self, z: &[f64], zp: &[f64]) -> C {
        let x: Vec<f64> = z.iter().chain(zp).copied().collect();
        self.poly.eval(&x)
    }

    fn same_n(&self, other: &Self) -> Result<()> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: other.n });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_n(other)?;
        Ok(Self { n: self.n, poly: self.poly.add(&other.poly)? })
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.same_n(other)?;
        Ok(Self { n: self.n, poly: self.poly.mul(&other.poly)? })
    }

    pub fn scale(&self, c: C) -> Self {
        Self { n: self.n, poly: self.poly.scale(c) }
    }

    /// `Z -> -Z` and/or `Z' -> -Z'`.
    pub fn reflect(&self, z: bool, zp: bool) -> Self {
        let d = 2 * self.n;
        let mask: Vec<bool> = (0..2 * d).map(|i| if i < d { z } else { zp }).collect();
        Self { n: self.n, poly: self.poly.negate_vars(&mask).expect("mask length") }
    }

    pub fn max_coeff_distance(&self, other: &Self) -> Result<f64> {
        self.same_n(other)?;
        self.poly.distance(&other.poly)
    }

    pub fn to_json(&self) -> Vec<PolyTerm> {
        let d = 2 * self.n;
        self.poly
            .terms()
            .map(|(m, c)| PolyTerm {
                alpha: m.0[..d].to_vec(),
                alpha_prime: m.0[d..].to_vec(),
                re: c.re,
                im: c.im,
            })
            .collect()
    }

    pub fn from_json(n: usize, terms: &[PolyTerm]) -> Result<Self> {
        let d = 2 * n;
        let mut poly = Poly::zero(2 * d);
        for t in terms {
            if t.alpha.len() != d || t.alpha_prime.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: t.alpha.len().max(t.alpha_prime.len()) });
            }
            let e: Vec<u32> = t.alpha.iter().chain(&t.alpha_prime).copied().collect();
            poly.add_term(Monomial(e), C::new(t.re, t.im));
        }
        Ok(Self { n, poly })
    }
}

/// One serialized monomial `c Z^alpha Z'^alpha_prime`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyTerm {
    pub alpha: Vec<u32>,
    pub alpha_prime: Vec<u32>,
    pub re: f64,
    pub im: f64,
}

/// `int Q(W) exp(-W^T S W + l^T W) dW` over `R^d` (plain bilinear products).
#[derive(Clone, Debug)]
pub struct GaussianMomentProblem {
    pub s: CMatrix,
    pub ell: Vec<C>,
    pub q: Poly,
}

/// Closed-form value of a Gaussian moment problem.
pub fn gaussian_moment(prob: &GaussianMomentProblem) -> Result<C> {
    let d = prob.s.nrows();
    if prob.s.ncols() != d {
        return Err(invalid("S must be square"));
    }
    if prob.ell.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: prob.ell.len() });
    }
    if prob.q.nvars() != d {
        return Err(Error::DimensionMismatch { expected: d, got: prob.q.nvars() });
    }
    let s = (&prob.s + prob.s.transpose()) * C::new(0.5, 0.0);
    let re = s.map(|z| z.re);
    if re.clone().symmetric_eigen().eigenvalues.min() <= 0.0 {
        return Err(Error::Domain("real part of S is not positive-definite".into()));
    }
    let inv = s.clone().try_inverse().ok_or_else(|| Error::Domain("S is singular".into()))?;
    let ell = nalgebra::DVector::from_vec(prob.ell.clone());
    let w0 = &inv * &ell * C::new(0.5, 0.0);
    let shift_exp = (ell.transpose() * &inv * &ell)[(0, 0)] * 0.25;
    let cov = &inv * C::new(0.5, 0.0);
    let shifted = prob.q.shift(w0.as_slice())?;
    let mut moments = Moments::new(cov);
    let mut mean = C::new(0.0, 0.0);
    for (m, c) in shifted.terms() {
        mean += c * moments.get(&m.0)?;
    }
    let norm = C::new(std::f64::consts::PI.powf(d as f64 / 2.0), 0.0) / sqrt_det_continued(&s);
    Ok(norm * shift_exp.exp() * mean)
}

/// `E[V^beta]` for a centred Gaussian with (possibly complex) covariance.
struct Moments {
    cov: CMatrix,
    cache: HashMap<Vec<u32>, C>,
}

impl Moments {
    fn new(cov: CMatrix) -> Self {
        Self { cov, cache: HashMap::new() }
    }

    fn get(&mut self, beta: &[u32]) -> Result<C> {
        let deg: u32 = beta.iter().sum();
        if deg > MAX_MOMENT_DEGREE {
            return Err(Error::Capability(format!(
                "Gaussian moment of degree {deg} exceeds the cap {MAX_MOMENT_DEGREE}"
            )));
        }
        Ok(self.rec(beta.to_vec()))
    }

    fn rec(&mut self, mut beta: Vec<u32>) -> C {
        let deg: u32 = beta.iter().sum();
        if deg == 0 {
            return C::new(1.0, 0.0);
        }
        if deg % 2 == 1 {
            return C::new(0.0, 0.0);
        }
        if let Some(v) = self.cache.get(&beta) {
            return *v;
        }
        let key = beta.clone();
        // E[V_i V^rest] = sum_j cov_ij d/dV_j E[V^rest]
        let i = beta.iter().position(|&b| b > 0).unwrap();
        beta[i] -= 1;
        let mut acc = C::new(0.0, 0.0);
        for j in 0..beta.len() {
            if beta[j] == 0 {
                continue;
            }
            let mult = beta[j] as f64;
            let mut rest = beta.clone();
            rest[j] -= 1;
            acc += self.cov[(i, j)] * mult * self.rec(rest);
        }
        self.cache.insert(key, acc);
        acc
    }
}

/// Precomputed data for composing kernels against one model kernel.
#[derive(Clone, Debug)]
pub struct Composer {
    n: usize,
    /// `W0 = a Z + b Z'`.
    a: CMatrix,
    b: CMatrix,
    cov: CMatrix,
    prefactor: C,
}

impl Composer {
    pub fn new(mk: &ModelKernel) -> Result<Self> {
        let d = mk.dim();
        let g = mk.quadratic_form().map(|x| C::new(x, 0.0));
        let h = mk.cross_form().clone();
        let m = &g * C::new(0.5, 0.0);
        let m_inv = m.clone().try_inverse().ok_or_else(|| Error::Domain("degenerate model kernel".into()))?;
        // l = 1/2 (G + H^T) Z + 1/2 (G + H) Z'
        let lz = (&g + h.transpose()) * C::new(0.5, 0.0);
        let lzp = (&g + &h) * C::new(0.5, 0.0);
        let a = &m_inv * &lz * C::new(0.5, 0.0);
        let b = &m_inv * &lzp * C::new(0.5, 0.0);
        // the completed square 1/4 l^T M^-1 l + k must vanish identically
        let quarter = C::new(0.25, 0.0);
        let zz = lz.transpose() * &m_inv * &lz * quarter;
        let pp = lzp.transpose() * &m_inv * &lzp * quarter;
        let zp = lz.transpose() * &m_inv * &lzp * quarter * C::new(2.0, 0.0) - (&g + &h) * C::new(0.5, 0.0);
        let sym = |x: &CMatrix| (x + x.transpose()) * C::new(0.5, 0.0);
        let defect = cmax(&sym(&zz)).max(cmax(&sym(&pp))).max(cmax(&zp));
        let scale = cmax(&g).max(cmax(&h)).max(1.0);
        if defect > 1e-10 * scale {
            return Err(Error::Domain(format!("model kernel does not reproduce (defect {defect:e})")));
        }
        let det_m: f64 = m.map(|z| z.re).determinant();
        let pi_d = std::f64::consts::PI.powf(d as f64 / 2.0);
        let prefactor = mk.prefactor() * mk.volume_density() * pi_d / det_m.sqrt();
        let cov = &m_inv * C::new(0.5, 0.0);
        Ok(Self { n: mk.n, a, b, cov, prefactor })
    }

    /// The constant `c sqrt(det g) pi^n / sqrt(det M)`; equals 1 exactly
    /// when `P` is idempotent.
    pub fn normalization(&self) -> C {
        self.prefactor
    }

    /// `K[F, G]` with `(F P) o (G P) = K[F, G] P`.
    pub fn compose(&self, f: &PolyKernel, g: &PolyKernel) -> Result<PolyKernel> {
        if f.n != self.n || g.n != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: if f.n != self.n { f.n } else { g.n } });
        }
        if f.poly.is_zero() || g.poly.is_zero() {
            return Ok(PolyKernel::zero(self.n));
        }
        let d = 2 * self.n;
        // variables of the lifted problem: Z (d), Z' (d), V (d)
        let nv = 3 * d;
        let w: Vec<Poly> = (0..d)
            .map(|i| {
                let mut p = Poly::var(nv, 2 * d + i);
                for j in 0..d {
                    p.add_term(Monomial::var(nv, j), self.a[(i, j)]);
                    p.add_term(Monomial::var(nv, d + j), self.b[(i, j)]);
                }
                p
            })
            .collect();
        let z: Vec<Poly> = (0..d).map(|i| Poly::var(nv, i)).collect();
        let zp: Vec<Poly> = (0..d).map(|i| Poly::var(nv, d + i)).collect();
        let f_images: Vec<Poly> = z.iter().chain(&w).cloned().collect();
        let g_images: Vec<Poly> = w.iter().chain(&zp).cloned().collect();
        let lifted = f.poly.substitute(&f_images)?.mul(&g.poly.substitute(&g_images)?)?;
        let mut moments = Moments::new(self.cov.clone());
        let mut acc: BTreeMap<Monomial, C> = BTreeMap::new();
        for (m, c) in lifted.terms() {
            let mom = moments.get(&m.0[2 * d..])?;
            if mom == C::new(0.0, 0.0) {
                continue;
            }
            *acc.entry(Monomial(m.0[..2 * d].to_vec())).or_default() += c * mom;
        }
        let mut out = Poly::zero(2 * d);
        for (m, c) in acc {
            out.add_term(m, c * self.prefactor);
        }
        Ok(PolyKernel { n: self.n, poly: out.prune(PRUNE_THRESHOLD) })
    }
}

fn cmax(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `K[F, G]` against the model kernel `mk`.
pub fn compose(f: &PolyKernel, g: &PolyKernel, mk: &ModelKernel) -> Result<PolyKernel> {
    Composer::new(mk)?.compose(f, g)
}

/// `Q_r(f) = sum_{r1 + r2 + |alpha| = r} K[F_{r1}, f_alpha Z^alpha F_{r2}]`,
/// with `f_jet[alpha]` the Taylor coefficient `d^alpha f(x0) / alpha!`.
pub fn toeplitz_symbol_q(
    f_jet: &BTreeMap<Vec<u32>, C>,
    f_list: &[PolyKernel],
    r: usize,
    mk: &ModelKernel,
) -> Result<PolyKernel> {
    let n = mk.n;
    let d = 2 * n;
    if f_list.len() <= r {
        return Err(invalid(format!("need F_0..F_{r}, got {} entries", f_list.len())));
    }
    let composer = Composer::new(mk)?;
    let mut out = PolyKernel::zero(n);
    for alpha in multi_indices(d, r as u32) {
        let order = alpha.iter().sum::<u32>() as usize;
        let coeff = *f_jet
            .get(&alpha)
            .ok_or_else(|| invalid(format!("missing jet entry {alpha:?}")))?;
        let mut exps = alpha.clone();
        exps.extend(std::iter::repeat(0).take(d));
        let z_alpha = PolyKernel { n, poly: Poly::monomial(exps, coeff) };
        for r1 in 0..=(r - order) {
            let r2 = r - order - r1;
            let right = z_alpha.mul(&f_list[r2])?;
            out = out.add(&composer.compose(&f_list[r1], &right)?)?;
        }
    }
    Ok(PolyKernel { n, poly: out.poly.prune(PRUNE_THRESHOLD) })
}

/// All exponent vectors of length `d` with total degree at most `max`.
pub fn multi_indices(d: usize, max: u32) -> Vec<Vec<u32>> {
    let mut out = vec![];
    let mut cur = vec![0u32; d];
    fn go(i: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if i == cur.len() {
            out.push(cur.clone());
            return;
        }
        for e in 0..=left {
            cur[i] = e;
            go(i + 1, left - e, cur, out);
        }
        cur[i] = 0;
    }
    go(0, max, &mut cur, &mut out);
    out.sort_by(|a, b| Monomial(a.clone()).cmp(&Monomial(b.clone())));
    out
}

/// A random kernel polynomial of degree at most `max_degree` with
/// coefficients uniform in the unit disc.
pub fn random_poly_kernel<R: rand::Rng>(n: usize, max_degree: u32, rng: &mut R) -> PolyKernel {
    let mut poly = Poly::zero(4 * n);
    for e in multi_indices(4 * n, max_degree) {
        let (r, t): (f64, f64) = (rng.random(), rng.random());
        let c = C::from_polar(r.sqrt(), 2.0 * std::f64::consts::PI * t);
        poly.add_term(Monomial(e), c);
    }
    PolyKernel { n, poly }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{MetricPair, PointGeometry};
    use rand::SeedableRng;

    fn c(x: f64) -> C {
        C::new(x, 0.0)
    }

    fn one_dim(s: f64, q: Poly) -> C {
        gaussian_moment(&GaussianMomentProblem {
            s: CMatrix::from_element(1, 1, c(s)),
            ell: vec![c(0.0)],
            q,
        })
        .unwrap()
    }

    #[test]
    fn one_dimensional_moments() {
        let sp = std::f64::consts::PI.sqrt();
        assert!((one_dim(1.0, Poly::constant(1, c(1.0))) - c(sp)).norm() < 1e-14);
        assert!((one_dim(1.0, Poly::monomial(vec![2], c(1.0))) - c(sp / 2.0)).norm() < 1e-14);
        assert!(one_dim(1.0, Poly::var(1, 0)).norm() < 1e-15);
        assert!((one_dim(1.0, Poly::monomial(vec![4], c(1.0))) - c(0.75 * sp)).norm() < 1e-14);
    }

    #[test]
    fn moment_with_linear_term() {
        // int exp(-w^2 + w) dw = sqrt(pi) e^{1/4}; with Q = w, times the mean 1/2
        let sp = std::f64::consts::PI.sqrt();
        let prob = |q| GaussianMomentProblem { s: CMatrix::from_element(1, 1, c(1.0)), ell: vec![c(1.0)], q };
        let v = gaussian_moment(&prob(Poly::constant(1, c(1.0)))).unwrap();
        assert!((v - c(sp * 0.25f64.exp())).norm() < 1e-13);
        let v = gaussian_moment(&prob(Poly::var(1, 0))).unwrap();
        assert!((v - c(0.5 * sp * 0.25f64.exp())).norm() < 1e-13);
    }

    #[test]
    fn moment_errors() {
        let bad = GaussianMomentProblem { s: CMatrix::from_element(1, 1, c(-1.0)), ell: vec![c(0.0)], q: Poly::constant(1, c(1.0)) };
        assert!(matches!(gaussian_moment(&bad), Err(Error::Domain(_))));
        let deep = GaussianMomentProblem {
            s: CMatrix::from_element(1, 1, c(1.0)),
            ell: vec![c(0.0)],
            q: Poly::monomial(vec![14], c(1.0)),
        };
        assert!(matches!(gaussian_moment(&deep), Err(Error::Capability(_))));
    }

    #[test]
    fn compose_one_one() {
        let mk = ModelKernel::standard(1);
        let k = compose(&PolyKernel::one(1), &PolyKernel::one(1), &mk).unwrap();
        assert_eq!(k.poly().len(), 1);
        assert!(k.max_coeff_distance(&PolyKernel::one(1)).unwrap() <= 1e-12);
        let zero = compose(&PolyKernel::z(1, 0), &PolyKernel::zero(1), &mk).unwrap();
        assert!(zero.poly().is_zero());
    }

    #[test]
    fn compose_one_one_on_scaled_and_4d() {
        let geo = PointGeometry::from_metric_pair(&MetricPair::standard(1, 3.0)).unwrap();
        let mk = ModelKernel::from_geometry(&geo);
        let k = compose(&PolyKernel::one(1), &PolyKernel::one(1), &mk).unwrap();
        assert!(k.max_coeff_distance(&PolyKernel::one(1)).unwrap() <= 1e-12);
        let mk = ModelKernel::standard(2);
        let k = compose(&PolyKernel::one(2), &PolyKernel::one(2), &mk).unwrap();
        assert!(k.max_coeff_distance(&PolyKernel::one(2)).unwrap() <= 1e-12);
    }

    #[test]
    fn coordinate_multiplication_commutes_with_projection() {
        // P Z'_j P: since P is the projector, K[1, Z_j] on the left reproduces
        // P's action on a linear function
        let mk = ModelKernel::standard(1);
        let k = compose(&PolyKernel::one(1), &PolyKernel::z(1, 0), &mk).unwrap();
        assert!(k.degree() <= 1);
        assert_eq!(k.parity(), Parity::Odd);
    }

    #[test]
    fn json_round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let f = random_poly_kernel(1, 2, &mut rng);
        let back = PolyKernel::from_json(1, &f.to_json()).unwrap();
        assert_eq!(back, f);
        let text = serde_json::to_string(&PolyKernel::z(1, 1).to_json()).unwrap();
        assert_eq!(text, r#"[{"alpha":[0,1],"alpha_prime":[0,0],"re":1.0,"im":0.0}]"#);
    }

    #[test]
    fn symbol_q_order_zero() {
        let mk = ModelKernel::standard(1);
        let mut jet = BTreeMap::new();
        jet.insert(vec![0, 0], C::new(0.7, -0.2));
        let q = toeplitz_symbol_q(&jet, &[PolyKernel::one(1)], 0, &mk).unwrap();
        assert!(q.max_coeff_distance(&PolyKernel::constant(1, C::new(0.7, -0.2))).unwrap() < 1e-12);
        assert!(toeplitz_symbol_q(&jet, &[PolyKernel::one(1)], 1, &mk).is_err());
    }

    #[test]
    fn multi_index_enumeration() {
        assert_eq!(multi_indices(2, 1), vec![vec![0, 0], vec![0, 1], vec![1, 0]]);
        assert_eq!(multi_indices(4, 3).len(), 35);
    }
}
