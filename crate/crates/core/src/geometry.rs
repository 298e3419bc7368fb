//! Pointwise symplectic and Riemannian linear algebra.
//!
//! All matrices are expressed in one fixed basis of `T_x X`. The metric `g`
//! and the symplectic form `omega` are given as Gram matrices in that basis,
//! `g_ij = g(e_i, e_j)` and `Omega_ij = omega(e_i, e_j)`. The skew-adjoint
//! operator `J0` is defined by `omega(u, v) = g(J0 u, v)`, which in matrices
//! reads `J0^T g = Omega`, i.e. `J0 = -g^{-1} Omega`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg;

/// Eigenvalues below this floor make a matrix square root ill-defined.
pub const EIGEN_FLOOR: f64 = 1e-14;

/// A metric and a symplectic form at one point.
#[derive(Clone, Debug)]
pub struct MetricPair {
    pub g: DMatrix<f64>,
    pub omega: DMatrix<f64>,
}

impl MetricPair {
    pub fn new(g: DMatrix<f64>, omega: DMatrix<f64>) -> Result<Self> {
        let d = g.nrows();
        if g.ncols() != d || omega.nrows() != d || omega.ncols() != d {
            return Err(invalid("g and omega must be square matrices of the same size"));
        }
        if d == 0 || d % 2 != 0 {
            return Err(invalid(format!("dimension must be even and positive, got {d}")));
        }
        let scale = g.amax().max(1.0);
        if (&g - g.transpose()).amax() > 1e-12 * scale {
            return Err(invalid("g is not symmetric"));
        }
        let ev = linalg::sym_eigen(&g);
        if ev.eigenvalues.iter().any(|&l| l <= EIGEN_FLOOR * scale) {
            return Err(invalid("g is not positive-definite"));
        }
        let oscale = omega.amax().max(1.0);
        if (&omega + omega.transpose()).amax() > 1e-12 * oscale {
            return Err(invalid("omega is not antisymmetric"));
        }
        if omega.determinant().abs() <= EIGEN_FLOOR {
            return Err(invalid("omega is degenerate"));
        }
        Ok(Self { g, omega })
    }

    /// The flat unit torus structure `g = I`, `omega = dx_1 ^ dy_1 + ...`,
    /// scaled by `metric_scale` in the metric.
    pub fn standard(n: usize, metric_scale: f64) -> Self {
        let d = 2 * n;
        let g = DMatrix::<f64>::identity(d, d) * metric_scale;
        let mut omega = DMatrix::<f64>::zeros(d, d);
        for k in 0..n {
            omega[(2 * k, 2 * k + 1)] = 1.0;
            omega[(2 * k + 1, 2 * k)] = -1.0;
        }
        Self { g, omega }
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }
}

/// Compute `J0` from `omega(u, v) = g(J0 u, v)`.
pub fn compute_j0(mp: &MetricPair) -> Result<DMatrix<f64>> {
    let ginv = mp
        .g
        .clone()
        .try_inverse()
        .ok_or_else(|| invalid("g is singular"))?;
    if mp.omega.determinant().abs() <= EIGEN_FLOOR {
        return Err(invalid("omega is degenerate"));
    }
    let j0 = -(ginv * &mp.omega);
    // g-skew-adjointness: g J0 must be antisymmetric
    let gj0 = &mp.g * &j0;
    if (&gj0 + gj0.transpose()).amax() > 1e-10 * gj0.amax().max(1.0) {
        return Err(invalid("J0 is not skew-adjoint with respect to g"));
    }
    Ok(j0)
}

/// Conjugate a g-self-adjoint or g-skew operator into a g-orthonormal frame:
/// returns `(g^{1/2}, g^{-1/2})`.
fn metric_roots(g: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let half = linalg::sym_pow(g, 0.5, EIGEN_FLOOR)?;
    let mhalf = linalg::sym_pow(g, -0.5, EIGEN_FLOOR)?;
    Ok((half, mhalf))
}

/// `J = J0 (-J0^2)^{-1/2}`. The root is taken through a symmetric
/// eigendecomposition in a g-orthonormal frame.
pub fn compute_j(j0: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (gh, gmh) = metric_roots(g)?;
    let a = &gh * j0 * &gmh;
    let m = -(&a * &a);
    let m = (&m + m.transpose()) * 0.5;
    let inv_root = linalg::sym_pow(&m, -0.5, EIGEN_FLOOR)
        .map_err(|_| invalid("-J0^2 is not positive-definite"))?;
    Ok(gmh * (a * inv_root) * gh)
}

/// `tau = -pi Tr[J0 J]`.
pub fn compute_tau(j0: &DMatrix<f64>, j: &DMatrix<f64>) -> Result<f64> {
    if j0.shape() != j.shape() {
        return Err(Error::DimensionMismatch { expected: j0.nrows(), got: j.nrows() });
    }
    Ok(-std::f64::consts::PI * (j0 * j).trace())
}

/// Returns `(det_C Jcal, (Jcal^2)^{1/2})` with `Jcal = -2 pi i J0`.
///
/// The determinant is taken over `T^{(1,0)}`, the `+i` eigenspace of `J`.
/// Both `J0` and `J` are diagonalised by the Hermitian matrix `i A`, where
/// `A = g^{1/2} J0 g^{-1/2}` is antisymmetric; `J` acts as `+i` exactly on
/// the eigenvectors of `i A` with negative eigenvalue.
pub fn compute_det_c_and_sqrt(
    j0: &DMatrix<f64>,
    g: &DMatrix<f64>,
) -> Result<(Complex64, DMatrix<f64>)> {
    let d = j0.nrows();
    let n = d / 2;
    let (gh, gmh) = metric_roots(g)?;
    let a = &gh * j0 * &gmh;
    let m = -(&a * &a);
    let m = (&m + m.transpose()) * 0.5;
    let root = linalg::sym_pow(&m, 0.5, EIGEN_FLOOR)
        .map_err(|_| invalid("-J0^2 is not positive-definite"))?;
    let sqrt_jcal2 = &gmh * root * &gh * (2.0 * std::f64::consts::PI);

    let ia = a.map(|x| Complex64::new(0.0, x));
    let eig = linalg::herm_eigen(&ia);
    let plus: Vec<usize> = (0..d).filter(|&k| eig.values[k] < 0.0).collect();
    if plus.len() != n {
        return Err(invalid("J0 does not split into T(1,0) + T(0,1) of equal dimension"));
    }
    let jcal_frame = a.map(|x| Complex64::new(0.0, -2.0 * std::f64::consts::PI * x));
    let v = DMatrix::<Complex64>::from_fn(d, n, |i, k| eig.vectors[(i, plus[k])]);
    let restricted = v.adjoint() * jcal_frame * &v;
    Ok((restricted.determinant(), sqrt_jcal2))
}

/// Every invariant of the almost-complex structure at one point.
#[derive(Clone, Debug)]
pub struct PointGeometry {
    pub n: usize,
    pub g: DMatrix<f64>,
    pub omega: DMatrix<f64>,
    pub j0: DMatrix<f64>,
    pub j: DMatrix<f64>,
    pub tau: f64,
    pub jcal: DMatrix<Complex64>,
    pub sqrt_jcal2: DMatrix<f64>,
    pub det_c: Complex64,
}

impl PointGeometry {
    pub fn from_metric_pair(mp: &MetricPair) -> Result<Self> {
        let j0 = compute_j0(mp)?;
        let j = compute_j(&j0, &mp.g)?;
        let tau = compute_tau(&j0, &j)?;
        let (det_c, sqrt_jcal2) = compute_det_c_and_sqrt(&j0, &mp.g)?;
        let jcal = j0.map(|x| Complex64::new(0.0, -2.0 * std::f64::consts::PI * x));
        Ok(Self {
            n: mp.dim() / 2,
            g: mp.g.clone(),
            omega: mp.omega.clone(),
            j0,
            j,
            tau,
            jcal,
            sqrt_jcal2,
            det_c,
        })
    }

    pub fn standard(n: usize) -> Self {
        Self::from_metric_pair(&MetricPair::standard(n, 1.0)).expect("standard structure is valid")
    }

    pub fn to_json(&self) -> GeometryJson {
        GeometryJson {
            n: self.n,
            g: linalg::rows(&self.g),
            omega: linalg::rows(&self.omega),
            j0: linalg::rows(&self.j0),
            j: linalg::rows(&self.j),
            tau: self.tau,
            sqrt_jcal2: linalg::rows(&self.sqrt_jcal2),
            det_c: [self.det_c.re, self.det_c.im],
        }
    }
}

/// Row-major JSON view of a [`PointGeometry`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeometryJson {
    pub n: usize,
    pub g: Vec<Vec<f64>>,
    pub omega: Vec<Vec<f64>>,
    pub j0: Vec<Vec<f64>>,
    pub j: Vec<Vec<f64>>,
    pub tau: f64,
    pub sqrt_jcal2: Vec<Vec<f64>>,
    pub det_c: [f64; 2],
}

/// One sample for [`compute_mu0`]: the real 2-form `iR^L` at a point
/// (as the matrix `u^T R v`) together with `g` and `J` there.
#[derive(Clone, Debug)]
pub struct CurvatureSample {
    pub irl: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub j: DMatrix<f64>,
}

/// Minimum of `iR^L(u, J u) / |u|_g^2` over the samples and a grid of unit
/// directions. In dimension 2 the grid is 720 angles over a half turn; in
/// higher dimension every coordinate 2-plane is swept with 180 angles.
///
/// This is exact for constant curvature and a lower-bound estimate
/// otherwise.
pub fn compute_mu0(samples: &[CurvatureSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(invalid("no curvature samples"));
    }
    let mut best = f64::INFINITY;
    for s in samples {
        let d = s.g.nrows();
        if s.irl.shape() != (d, d) || s.j.shape() != (d, d) {
            return Err(Error::DimensionMismatch { expected: d, got: s.irl.nrows() });
        }
        let rj = &s.irl * &s.j;
        let quotient = |u: &nalgebra::DVector<f64>| {
            let num = u.dot(&(&rj * u));
            let den = u.dot(&(&s.g * u));
            num / den
        };
        let steps = if d == 2 { 720 } else { 180 };
        for a in 0..d {
            for b in (a + 1)..d {
                for k in 0..steps {
                    let th = std::f64::consts::PI * k as f64 / steps as f64;
                    let mut u = nalgebra::DVector::<f64>::zeros(d);
                    u[a] = th.cos();
                    u[b] = th.sin();
                    best = best.min(quotient(&u));
                }
            }
        }
    }
    if best <= 0.0 {
        return Err(Error::NotPositive(best));
    }
    Ok(best)
}

/// Constant prequantum curvature `iR^L = 2 pi omega` sampled at one point.
pub fn prequantum_curvature(geom: &PointGeometry, scale: f64) -> CurvatureSample {
    CurvatureSample {
        irl: &geom.omega * (2.0 * std::f64::consts::PI * scale),
        g: geom.g.clone(),
        j: geom.j.clone(),
    }
}
