//! The model Bergman kernel on `R^{2n}` and the model operator it projects onto.
//!
//! The pairing `<u, v>` in the exponent of the kernel is the real-bilinear
//! extension of `g` to complex vectors, `<u, v> = u^T g v`, and kernels act
//! with respect to the Riemannian volume `sqrt(det g) dZ`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::PI;

use crate::eigensolver::{lowest_eigenpairs, CsrMatrix, SolverOptions};
use crate::error::{invalid, Error, Result};
use crate::geometry::PointGeometry;

type C = Complex64;

/// The Gaussian projection kernel
/// `P(Z, Z') = det_C(Jcal)/(2 pi)^n exp(-1/4 <(Jcal^2)^{1/2}(Z - Z'), Z - Z'> + 1/2 <Jcal Z, Z'>)`.
#[derive(Clone, Debug)]
pub struct ModelKernel {
    pub n: usize,
    pub g: DMatrix<f64>,
    pub omega: DMatrix<f64>,
    pub jcal: DMatrix<C>,
    pub sqrt_jcal2: DMatrix<f64>,
    pub det_c: C,
    pub tau0: f64,
    /// `g (Jcal^2)^{1/2}`, symmetric.
    quad: DMatrix<f64>,
    /// `Jcal^T g`, so that `<Jcal Z, Z'> = Z^T cross Z'`.
    cross: DMatrix<C>,
    prefactor: C,
    volume: f64,
}

impl ModelKernel {
    pub fn from_geometry(geo: &PointGeometry) -> Self {
        let quad = &geo.g * &geo.sqrt_jcal2;
        let quad = (&quad + quad.transpose()) * 0.5;
        let gc = geo.g.map(|x| C::new(x, 0.0));
        let cross = geo.jcal.transpose() * gc;
        let prefactor = geo.det_c / (2.0 * PI).powi(geo.n as i32);
        Self {
            n: geo.n,
            g: geo.g.clone(),
            omega: geo.omega.clone(),
            jcal: geo.jcal.clone(),
            sqrt_jcal2: geo.sqrt_jcal2.clone(),
            det_c: geo.det_c,
            tau0: geo.tau,
            quad,
            cross,
            prefactor,
            volume: geo.g.determinant().sqrt(),
        }
    }

    pub fn standard(n: usize) -> Self {
        Self::from_geometry(&PointGeometry::standard(n))
    }

    pub fn dim(&self) -> usize {
        2 * self.n
    }

    /// `det_C(Jcal) / (2 pi)^n`, the value on the diagonal.
    pub fn prefactor(&self) -> C {
        self.prefactor
    }

    /// Density of the Riemannian volume in the coordinates, `sqrt(det g)`.
    pub fn volume_density(&self) -> f64 {
        self.volume
    }

    /// Symmetric matrix of the real quadratic form `<(Jcal^2)^{1/2} u, u>`.
    pub fn quadratic_form(&self) -> &DMatrix<f64> {
        &self.quad
    }

    /// Matrix `H` with `<Jcal Z, Z'> = Z^T H Z'`.
    pub fn cross_form(&self) -> &DMatrix<C> {
        &self.cross
    }

    /// Exponent of the kernel (without the prefactor).
    pub fn exponent(&self, z: &[f64], zp: &[f64]) -> C {
        let d = self.dim();
        let mut q = 0.0;
        let mut x = C::new(0.0, 0.0);
        for i in 0..d {
            let di = z[i] - zp[i];
            for j in 0..d {
                q += di * self.quad[(i, j)] * (z[j] - zp[j]);
                x += self.cross[(i, j)] * (z[i] * zp[j]);
            }
        }
        C::new(-0.25 * q, 0.0) + 0.5 * x
    }

    pub fn eval(&self, z: &[f64], zp: &[f64]) -> C {
        self.prefactor * self.exponent(z, zp).exp()
    }

    /// Smallest eigenvalue of the quadratic form; sets the Gaussian width.
    fn min_quad_eigen(&self) -> f64 {
        self.quad.clone().symmetric_eigen().eigenvalues.min()
    }

    /// Tail bound of `int |P(Z, W) P(W, Z')| dW` outside the box `[-r, r]^{2n}`,
    /// optionally weighted by a polynomial of degree `degree`.
    pub fn tail_bound(&self, z: &[f64], zp: &[f64], radius: f64, degree: usize) -> f64 {
        let d = self.dim();
        // |W - Z|^2 + |W - Z'|^2 >= 2 |W - m|^2 with m the midpoint
        let a = 0.5 * self.min_quad_eigen();
        let centre = (0..d).map(|i| 0.5 * (z[i] + zp[i]).abs()).fold(0.0, f64::max);
        let rho = radius - centre;
        if rho <= 0.0 {
            return f64::INFINITY;
        }
        let c2 = self.prefactor.norm_sqr();
        let one_side = erfc_upper(rho * a.sqrt()) * (PI / a).sqrt();
        let rest = (PI / a).powf((d as f64 - 1.0) / 2.0);
        let poly = (1.0 + radius + centre).powi(degree as i32);
        c2 * self.volume * (d as f64) * one_side * rest * poly
    }
}

/// Upper bound for `erfc(x)`, `x > 0`.
fn erfc_upper(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    ((-x * x).exp() / (x * PI.sqrt())).min(1.0)
}

/// Tensor-product trapezoid box `[-radius, radius]^{2n}` with node spacing `spacing`.
#[derive(Clone, Copy, Debug)]
pub struct QuadratureBox {
    pub radius: f64,
    pub spacing: f64,
}

impl QuadratureBox {
    pub fn new(radius: f64, spacing: f64) -> Result<Self> {
        if !(radius > 0.0 && spacing > 0.0 && spacing < radius) {
            return Err(invalid("quadrature box needs 0 < spacing < radius"));
        }
        Ok(Self { radius, spacing })
    }

    fn nodes(&self) -> (Vec<f64>, Vec<f64>) {
        let m = (2.0 * self.radius / self.spacing).round() as usize;
        let h = 2.0 * self.radius / m as f64;
        let pts = (0..=m).map(|k| -self.radius + k as f64 * h).collect();
        let w = (0..=m).map(|k| if k == 0 || k == m { 0.5 * h } else { h }).collect();
        (pts, w)
    }
}

/// Result of a quadrature with its Gaussian tail estimate.
#[derive(Clone, Copy, Debug)]
pub struct QuadratureValue {
    pub value: C,
    pub tail_bound: f64,
    /// False when the tail beyond the box exceeds `1e-10`.
    pub adequate: bool,
}

/// Threshold above which the quadrature box is reported as too small.
pub const TAIL_WARNING: f64 = 1e-10;

/// `int f(W) dv(W)` over the box with the tensor trapezoid rule.
pub fn integrate_box<F: FnMut(&[f64]) -> C>(dim: usize, bx: &QuadratureBox, volume: f64, mut f: F) -> C {
    let (pts, w) = bx.nodes();
    let m = pts.len();
    let mut idx = vec![0usize; dim];
    let mut point = vec![pts[0]; dim];
    let mut total = C::new(0.0, 0.0);
    loop {
        let weight: f64 = idx.iter().map(|&k| w[k]).product();
        total += f(&point) * weight;
        let mut axis = 0;
        loop {
            if axis == dim {
                return total * volume;
            }
            idx[axis] += 1;
            if idx[axis] < m {
                point[axis] = pts[idx[axis]];
                break;
            }
            idx[axis] = 0;
            point[axis] = pts[0];
            axis += 1;
        }
    }
}

/// Kernel of the composition of two operators with kernels `a(Z, W)` and
/// `b(W, Z')`, evaluated at `(z, zp)` by quadrature over `W`.
pub fn compose_by_quadrature<A, B>(
    mk: &ModelKernel,
    a: A,
    b: B,
    z: &[f64],
    zp: &[f64],
    bx: &QuadratureBox,
    poly_degree: usize,
) -> QuadratureValue
where
    A: Fn(&[f64], &[f64]) -> C,
    B: Fn(&[f64], &[f64]) -> C,
{
    let value = integrate_box(mk.dim(), bx, mk.volume_density(), |w| a(z, w) * b(w, zp));
    let tail_bound = mk.tail_bound(z, zp, bx.radius, poly_degree);
    QuadratureValue { value, tail_bound, adequate: tail_bound <= TAIL_WARNING }
}

/// `|int P(Z, W) P(W, Z') dv(W) - P(Z, Z')|` by quadrature.
#[derive(Clone, Copy, Debug)]
pub struct ReproducingReport {
    pub residual: f64,
    pub tail_bound: f64,
    pub adequate: bool,
}

pub fn reproducing_residual(
    mk: &ModelKernel,
    z: &[f64],
    zp: &[f64],
    bx: &QuadratureBox,
) -> Result<ReproducingReport> {
    check_point(mk, z)?;
    check_point(mk, zp)?;
    let q = compose_by_quadrature(mk, |x, y| mk.eval(x, y), |x, y| mk.eval(x, y), z, zp, bx, 0);
    Ok(ReproducingReport {
        residual: (q.value - mk.eval(z, zp)).norm(),
        tail_bound: q.tail_bound,
        adequate: q.adequate,
    })
}

fn check_point(mk: &ModelKernel, z: &[f64]) -> Result<()> {
    if z.len() != mk.dim() {
        return Err(Error::DimensionMismatch { expected: mk.dim(), got: z.len() });
    }
    if z.iter().any(|x| !x.is_finite()) {
        return Err(invalid("non-finite coordinate"));
    }
    Ok(())
}

/// Finite-difference discretisation of
/// `L0 = -sum_j (d_j + 1/2 R^L(Z, e_j))^2 - tau(x0)` on `[-R, R]^{2n}`,
/// with prequantum curvature `R^L = -2 pi i omega`.
///
/// The connection coefficient along `e_j` does not depend on `Z_j`, so the
/// link phase `exp(h A_j(Z))` is the exact parallel transport and the
/// stencil is Hermitian by construction.
#[derive(Clone, Debug)]
pub struct ModelOperatorStencil {
    pub n: usize,
    pub spacing: f64,
    pub radius: f64,
    pub tau0: f64,
    /// `A_j(Z) = i sum_k Z_k conn[(k, j)]`.
    conn: DMatrix<f64>,
}

impl ModelOperatorStencil {
    pub fn new(mk: &ModelKernel, spacing: f64, radius: f64) -> Result<Self> {
        let d = mk.dim();
        if (mk.g.clone() - DMatrix::<f64>::identity(d, d)).amax() > 1e-12 {
            return Err(invalid("the stencil is assembled in orthonormal coordinates (g = I)"));
        }
        if !(spacing > 0.0 && radius > 4.0 * spacing) {
            return Err(invalid("stencil needs radius > 4 * spacing > 0"));
        }
        // 1/2 R^L(Z, e_j) = -pi i omega(Z, e_j) = -pi i sum_k Z_k Omega_kj
        let conn = &mk.omega * (-PI);
        Ok(Self { n: mk.n, spacing, radius, tau0: mk.tau0, conn })
    }

    fn dim(&self) -> usize {
        2 * self.n
    }

    fn connection(&self, z: &[f64], j: usize) -> f64 {
        (0..self.dim()).map(|k| z[k] * self.conn[(k, j)]).sum()
    }

    /// Apply the discrete operator to `f` at the point `z`.
    pub fn apply_at<F: Fn(&[f64]) -> C>(&self, f: F, z: &[f64]) -> C {
        let h = self.spacing;
        let centre = f(z);
        let mut acc = C::new(0.0, 0.0);
        let mut y = z.to_vec();
        for j in 0..self.dim() {
            let a = self.connection(z, j);
            let link = C::from_polar(1.0, h * a);
            y[j] = z[j] + h;
            let fwd = f(&y);
            y[j] = z[j] - h;
            let bwd = f(&y);
            y[j] = z[j];
            acc += (link * fwd - 2.0 * centre + link.conj() * bwd) / (h * h);
        }
        -acc - self.tau0 * centre
    }

    fn node_count(&self) -> usize {
        (2.0 * self.radius / self.spacing).round() as usize
    }

    fn node(&self, k: usize) -> f64 {
        -self.radius + k as f64 * (2.0 * self.radius / self.node_count() as f64)
    }

    /// Dirichlet-truncated matrix on the interior nodes (n = 1 only).
    pub fn dirichlet_matrix(&self) -> Result<(CsrMatrix, Vec<[f64; 2]>)> {
        if self.n != 1 {
            return Err(Error::Capability("Dirichlet matrix assembled for n = 1 only".into()));
        }
        let m = self.node_count();
        let side = m - 1;
        let h = 2.0 * self.radius / m as f64;
        let index = |i: usize, j: usize| (i - 1) * side + (j - 1);
        let mut coords = vec![[0.0; 2]; side * side];
        let mut trip = Vec::with_capacity(5 * side * side);
        for i in 1..m {
            for j in 1..m {
                let z = [self.node(i), self.node(j)];
                let r = index(i, j);
                coords[r] = z;
                trip.push((r, r, C::new(4.0 / (h * h) - self.tau0, 0.0)));
                for axis in 0..2 {
                    let a = self.connection(&z, axis);
                    let link = C::from_polar(1.0, h * a);
                    let (ni, nj) = if axis == 0 { (i + 1, j) } else { (i, j + 1) };
                    if ni < m && nj < m {
                        let c = index(ni, nj);
                        trip.push((r, c, -link / (h * h)));
                        trip.push((c, r, -link.conj() / (h * h)));
                    }
                }
            }
        }
        Ok((CsrMatrix::from_triplets(side * side, trip), coords))
    }
}

/// Maximum of `|L0 P(., zp)|` over interior nodes of the stencil box.
///
/// For `n = 1` every node at least one spacing from the boundary is used;
/// in higher dimension the nodes are strided to keep about `1e5` points.
pub fn l0_annihilation_residual(
    mk: &ModelKernel,
    stencil: &ModelOperatorStencil,
    zp: &[f64],
) -> Result<f64> {
    check_point(mk, zp)?;
    let margin = 4.0 * stencil.spacing;
    if zp.iter().any(|&x| x.abs() > stencil.radius - margin) {
        return Err(Error::Domain(format!(
            "Z' must lie at least {margin} inside the stencil box"
        )));
    }
    let d = stencil.dim();
    let m = stencil.node_count();
    let interior = m - 1;
    let stride = {
        let mut s = 1usize;
        while ((interior / s) as f64).powi(d as i32) > 1.2e5 {
            s += 1;
        }
        s
    };
    let picks: Vec<usize> = (1..m).step_by(stride).collect();
    let mut idx = vec![0usize; d];
    let mut worst = 0.0f64;
    let mut z = vec![0.0; d];
    loop {
        for a in 0..d {
            z[a] = stencil.node(picks[idx[a]]);
        }
        let r = stencil.apply_at(|w| mk.eval(w, zp), &z).norm();
        worst = worst.max(r);
        let mut axis = 0;
        loop {
            if axis == d {
                return Ok(worst);
            }
            idx[axis] += 1;
            if idx[axis] < picks.len() {
                break;
            }
            idx[axis] = 0;
            axis += 1;
        }
    }
}

/// Low spectrum of the Dirichlet-truncated model operator.
#[derive(Clone, Debug)]
pub struct ModelGap {
    /// Smallest eigenvalue (the kernel of `L0`, up to discretisation).
    pub lambda0: f64,
    /// Lowest bulk level above the kernel.
    pub lambda1: f64,
    /// Multiplicity of the level found at `lambda1`.
    pub lambda1_multiplicity: usize,
    pub computed: usize,
}

/// The two lowest levels of the truncated model operator.
///
/// A Dirichlet box carries edge states whose energies fill the gap between
/// the bulk levels, so the second eigenvalue in sorted order is not the
/// bulk gap. The bulk levels are infinitely degenerate in the plane and
/// show up as tight eigenvalue clusters; `lambda1` is the bottom of the
/// first cluster of at least three eigenvalues (relative width `1e-3`)
/// above `mu0 / 2`.
pub fn model_gap_estimate(stencil: &ModelOperatorStencil, mu0: f64) -> Result<ModelGap> {
    let (mat, _coords) = stencil.dirichlet_matrix()?;
    let area = (2.0 * stencil.radius).powi(2);
    // states per unit area in one level: B / 2 pi with B = mu0
    let per_level = (mu0 / (2.0 * PI) * area).ceil() as usize;
    let perimeter = 8.0 * stencil.radius;
    let mut count = 2 * per_level + perimeter.ceil() as usize + 16;
    let cut = 2.4 * mu0;
    for _attempt in 0..4 {
        count = count.min(mat.dim_checked());
        let opts = SolverOptions { guard: 16, ..Default::default() };
        let pairs = lowest_eigenpairs(&mat, count, &opts)?;
        if let Some(gap) = find_bulk_level(&pairs.values, mu0) {
            return Ok(ModelGap {
                lambda0: pairs.values[0],
                lambda1: gap.0,
                lambda1_multiplicity: gap.1,
                computed: pairs.count(),
            });
        }
        if pairs.values.last().copied().unwrap_or(0.0) > cut || count == mat.dim_checked() {
            break;
        }
        count = count * 3 / 2;
    }
    Err(Error::Domain("no bulk level found above the kernel".into()))
}

fn find_bulk_level(values: &[f64], mu0: f64) -> Option<(f64, usize)> {
    let start = values.iter().position(|&v| v > 0.5 * mu0)?;
    for i in start..values.len() {
        let width = 1e-3 * values[i].abs().max(1.0);
        let mult = values[i..].iter().take_while(|&&v| v - values[i] <= width).count();
        if mult >= 3 {
            return Some((values[i], mult));
        }
    }
    None
}

trait DimChecked {
    fn dim_checked(&self) -> usize;
}

impl DimChecked for CsrMatrix {
    fn dim_checked(&self) -> usize {
        use crate::eigensolver::HermitianOperator;
        self.dim()
    }
}

/// CSV rows `Z_1..Z_2n, Z'_1..Z'_2n, re, im` for a list of point pairs.
pub fn kernel_samples_csv(mk: &ModelKernel, pairs: &[(Vec<f64>, Vec<f64>)]) -> String {
    let d = mk.dim();
    let mut out = String::new();
    let mut header: Vec<String> = (1..=d).map(|i| format!("Z{i}")).collect();
    header.extend((1..=d).map(|i| format!("Zp{i}")));
    header.push("re".into());
    header.push("im".into());
    out.push_str(&header.join(","));
    out.push('\n');
    for (z, zp) in pairs {
        let v = mk.eval(z, zp);
        let mut row: Vec<String> = z.iter().chain(zp.iter()).map(|x| crate::io::fmt_f64(*x)).collect();
        row.push(crate::io::fmt_f64(v.re));
        row.push(crate::io::fmt_f64(v.im));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Vector view helper used by tests and callers working with nalgebra.
pub fn as_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_values() {
        let mk = ModelKernel::standard(1);
        assert!((mk.eval(&[0.0, 0.0], &[0.0, 0.0]) - C::new(1.0, 0.0)).norm() < 1e-14);
        for d in [0.3, 1.0, 2.2] {
            let v = mk.eval(&[d, 0.0], &[0.0, 0.0]);
            assert!((v.norm() - (-PI * d * d / 2.0).exp()).abs() < 1e-14);
        }
        let z = [0.4, -1.3];
        assert!((mk.eval(&z, &z).norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn hermitian_parity_and_shift() {
        let mk = ModelKernel::standard(1);
        let pts = [[0.3, 0.1], [-1.2, 0.7], [0.5, -0.9]];
        for a in &pts {
            for b in &pts {
                let ab = mk.eval(a, b);
                let ba = mk.eval(b, a);
                assert!((ab - ba.conj()).norm() < 1e-14);
                let na = [-a[0], -a[1]];
                let nb = [-b[0], -b[1]];
                assert!((mk.eval(&na, &nb) - ab).norm() < 1e-14);
                let v = [0.25, -0.6];
                let sa = [a[0] + v[0], a[1] + v[1]];
                let sb = [b[0] + v[0], b[1] + v[1]];
                assert!((mk.eval(&sa, &sb).norm() - ab.norm()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reproducing_property() {
        let mk = ModelKernel::standard(1);
        let bx = QuadratureBox::new(5.0, 0.05).unwrap();
        let r = reproducing_residual(&mk, &[0.0, 0.0], &[0.0, 0.0], &bx).unwrap();
        assert!(r.residual <= 1e-6 && r.adequate);
        let r = reproducing_residual(&mk, &[1.0, 0.0], &[0.0, 1.0], &bx).unwrap();
        assert!(r.residual <= 1e-6 && r.adequate);
        let small = QuadratureBox::new(0.5, 0.05).unwrap();
        let r = reproducing_residual(&mk, &[0.0, 0.0], &[0.0, 0.0], &small).unwrap();
        assert!(!r.adequate && r.tail_bound > TAIL_WARNING);
    }

    #[test]
    fn scaled_metric_kernel_reproduces() {
        use crate::geometry::MetricPair;
        let mp = MetricPair::standard(1, 2.0);
        let geo = PointGeometry::from_metric_pair(&mp).unwrap();
        let mk = ModelKernel::from_geometry(&geo);
        assert!((mk.eval(&[0.0, 0.0], &[0.0, 0.0]).re - 0.5).abs() < 1e-14);
        let bx = QuadratureBox::new(5.0, 0.05).unwrap();
        let r = reproducing_residual(&mk, &[0.2, -0.1], &[0.0, 0.4], &bx).unwrap();
        assert!(r.residual < 1e-8);
    }

    #[test]
    fn annihilation_converges_at_second_order() {
        let mk = ModelKernel::standard(1);
        let mut res = vec![];
        for h in [0.08, 0.04, 0.02] {
            let st = ModelOperatorStencil::new(&mk, h, 4.0).unwrap();
            res.push(l0_annihilation_residual(&mk, &st, &[0.0, 0.0]).unwrap());
        }
        assert!(res[2] <= 1e-2);
        let order = (res[1] / res[2]).log2();
        assert!(order >= 1.9, "observed order {order}");
        assert!((res[1] / res[0]).log2() <= -1.9);
        // off-centre column also lies in the kernel
        let st = ModelOperatorStencil::new(&mk, 0.02, 4.0).unwrap();
        assert!(l0_annihilation_residual(&mk, &st, &[0.7, -0.4]).unwrap() <= 2e-2);
    }

    #[test]
    fn constant_is_not_annihilated() {
        let mk = ModelKernel::standard(1);
        let st = ModelOperatorStencil::new(&mk, 0.02, 4.0).unwrap();
        let r = st.apply_at(|_| C::new(1.0, 0.0), &[0.0, 0.0]);
        assert!((r.norm() - 2.0 * PI).abs() < 1e-9);
    }

    #[test]
    fn margin_violation() {
        let mk = ModelKernel::standard(1);
        let st = ModelOperatorStencil::new(&mk, 0.05, 2.0).unwrap();
        assert!(l0_annihilation_residual(&mk, &st, &[1.9, 0.0]).is_err());
    }

    #[test]
    fn dirichlet_stencil_is_hermitian() {
        let mk = ModelKernel::standard(1);
        let st = ModelOperatorStencil::new(&mk, 0.25, 2.0).unwrap();
        let (m, coords) = st.dirichlet_matrix().unwrap();
        assert_eq!(coords.len(), 15 * 15);
        assert!(m.hermiticity_defect() < 1e-12);
    }

    #[test]
    fn bulk_level_detection() {
        let v = [0.0, 0.0, 0.0, 3.5, 7.0, 12.5, 12.5005, 12.501, 20.0];
        let (l, m) = find_bulk_level(&v, 2.0 * PI).unwrap();
        assert_eq!(l, 12.5);
        assert_eq!(m, 3);
        assert!(find_bulk_level(&[0.0, 4.0, 9.0], 2.0 * PI).is_none());
    }
}
