//! The renormalised Bochner Laplacian `Delta_p = Delta^{L^p} - p tau` on the
//! flat unit torus with the degree-`p` prequantum bundle, discretised by a
//! five-point Peierls stencil in Landau gauge.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::Serialize;

use crate::eigensolver::{lowest_eigenpairs, CsrMatrix, HermitianOperator, SolverOptions};
use crate::error::{Error, Result};
use crate::geometry::{compute_mu0, prequantum_curvature, MetricPair, PointGeometry};
use crate::io::fmt_f64;

type C = Complex64;

/// Largest admissible flux per plaquette.
pub const MAX_PLAQUETTE_FLUX: f64 = PI / 10.0;

/// Smallest grid satisfying both resolution guards.
pub fn auto_grid(p: usize) -> usize {
    let magnetic = 8 * (2.0 * PI * p as f64).sqrt().ceil() as usize;
    let flux = (2.0 * PI * p as f64 / MAX_PLAQUETTE_FLUX).sqrt().ceil() as usize;
    magnetic.max(flux).max(8)
}

#[derive(Clone, Debug, Serialize)]
pub struct TorusConfig {
    pub p: usize,
    /// Grid points per side; spacing `h = 1/N`.
    pub n: usize,
    /// Isotropic metric `g = metric_scale * I`.
    pub metric_scale: f64,
    pub tau: f64,
    pub mu0: f64,
}

impl TorusConfig {
    /// Standard structure with an explicit grid; validated.
    pub fn new(p: usize, n: usize) -> Result<Self> {
        Self::with_metric_scale(p, n, 1.0)
    }

    /// Standard structure on the automatic grid.
    pub fn auto(p: usize) -> Result<Self> {
        Self::new(p, auto_grid(p))
    }

    pub fn with_metric_scale(p: usize, n: usize, metric_scale: f64) -> Result<Self> {
        if !(metric_scale > 0.0 && metric_scale.is_finite()) {
            return Err(Error::NotPositive(metric_scale));
        }
        let geo = PointGeometry::from_metric_pair(&MetricPair::standard(1, metric_scale))?;
        let mu0 = compute_mu0(&[prequantum_curvature(&geo, 1.0)])?;
        let cfg = Self { p, n, metric_scale, tau: geo.tau, mu0 };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The metric pair realised by the lattice bundle.
    ///
    /// The hop `-U(x)/h^2` sits at `H[x, x + e]`, so the discrete connection
    /// is `d + i A` with `A = (0, 2 pi p x)` and curvature `+2 pi i p dx^dy`.
    /// Under `(i / 2 pi) R^L = omega` this is the prequantum bundle of
    /// `omega = -dx ^ dy`, which fixes the orientation of the model kernel.
    pub fn lattice_metric_pair(&self) -> MetricPair {
        let mut mp = MetricPair::standard(1, self.metric_scale);
        mp.omega = -mp.omega;
        mp
    }

    /// Model kernel at any point of the lattice torus (the structure is flat).
    pub fn model_kernel(&self) -> Result<crate::model_kernel::ModelKernel> {
        let geo = PointGeometry::from_metric_pair(&self.lattice_metric_pair())?;
        Ok(crate::model_kernel::ModelKernel::from_geometry(&geo))
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn dim(&self) -> usize {
        self.n * self.n
    }

    pub fn plaquette_flux(&self) -> f64 {
        2.0 * PI * self.p as f64 / (self.n * self.n) as f64
    }

    pub fn validate(&self) -> Result<()> {
        self.check_flux()?;
        let need = 8 * (2.0 * PI * self.p as f64).sqrt().ceil() as usize;
        if self.n < need {
            return Err(Error::Config {
                msg: format!(
                    "N = {} gives fewer than 8 points per magnetic length at p = {}",
                    self.n, self.p
                ),
                suggested_n: Some(auto_grid(self.p)),
            });
        }
        Ok(())
    }

    fn check_flux(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::Config { msg: "grid needs N >= 3".into(), suggested_n: Some(auto_grid(self.p)) });
        }
        if self.plaquette_flux() > MAX_PLAQUETTE_FLUX {
            return Err(Error::Config {
                msg: format!("flux per plaquette {} exceeds pi/10", self.plaquette_flux()),
                suggested_n: Some(auto_grid(self.p)),
            });
        }
        Ok(())
    }

    /// Site index of `(j, k)`, `x = j h`, `y = k h`; x runs fastest.
    pub fn site(&self, j: usize, k: usize) -> usize {
        (j % self.n) + self.n * (k % self.n)
    }

    pub fn coords(&self, site: usize) -> (usize, usize) {
        (site % self.n, site / self.n)
    }

    /// Gauge origin that puts `site` at the centre of the gauge frame.
    pub fn centring_origin(&self, site: usize) -> (usize, usize) {
        let (j, k) = self.coords(site);
        let n = self.n;
        ((j + n - n / 2) % n, (k + n - n / 2) % n)
    }

    /// Shortest lattice translation that is a magnetic symmetry: shifting
    /// by `m` sites needs a single-valued gauge factor, i.e. `N | m p`.
    pub fn translation_period(&self) -> usize {
        let (mut a, mut b) = (self.n, self.p);
        while b != 0 {
            (a, b) = (b, a % b);
        }
        self.n / a
    }
}

/// Sparse Hermitian matrix of `Delta_p` together with its hop phases.
#[derive(Clone, Debug)]
pub struct MagneticLaplacian {
    pub cfg: TorusConfig,
    pub matrix: CsrMatrix,
    /// `U_x(j, k)` by site.
    pub ux: Vec<C>,
    /// `U_y(j, k)` by site.
    pub uy: Vec<C>,
    /// Site `(j0, k0)` where the Landau gauge starts; the twist column is `j0 - 1`.
    pub gauge_origin: (usize, usize),
}

impl HermitianOperator for MagneticLaplacian {
    fn dim(&self) -> usize {
        self.matrix.dim()
    }
    fn apply(&self, x: &[C], y: &mut [C]) {
        self.matrix.apply(x, y)
    }
    fn upper_bound(&self) -> f64 {
        self.matrix.upper_bound()
    }
}

/// Assemble `Delta_p` with the gauge origin at the grid origin.
pub fn build_hamiltonian(cfg: &TorusConfig) -> Result<MagneticLaplacian> {
    cfg.validate()?;
    Ok(assemble(cfg, (0, 0)))
}

/// Same Landau gauge with its origin moved to site `(j0, k0)`.
pub fn build_hamiltonian_shifted(cfg: &TorusConfig, origin: (usize, usize)) -> Result<MagneticLaplacian> {
    cfg.validate()?;
    Ok(assemble(cfg, origin))
}

/// Assemble without the magnetic-length guard (the flux guard still
/// applies). Meant for construction checks on coarse grids.
pub fn build_hamiltonian_coarse(cfg: &TorusConfig) -> Result<MagneticLaplacian> {
    cfg.check_flux()?;
    Ok(assemble(cfg, (0, 0)))
}

fn assemble(cfg: &TorusConfig, origin: (usize, usize)) -> MagneticLaplacian {
    let n = cfg.n;
    let nf = n as f64;
    let p = cfg.p as f64;
    let inv = nf * nf / cfg.metric_scale;
    let mut ux = vec![C::new(1.0, 0.0); n * n];
    let mut uy = vec![C::new(1.0, 0.0); n * n];
    let mut trip = Vec::with_capacity(5 * n * n);
    for k in 0..n {
        for j in 0..n {
            let jj = (j + n - origin.0 % n) % n;
            let kk = (k + n - origin.1 % n) % n;
            let s = cfg.site(j, k);
            let phase_x = if jj == n - 1 { -2.0 * PI * p * kk as f64 / nf } else { 0.0 };
            let phase_y = 2.0 * PI * p * jj as f64 / (nf * nf);
            ux[s] = C::from_polar(1.0, phase_x);
            uy[s] = C::from_polar(1.0, phase_y);
            trip.push((s, s, C::new(4.0 * inv - p * cfg.tau, 0.0)));
            for (t, u) in [(cfg.site(j + 1, k), ux[s]), (cfg.site(j, k + 1), uy[s])] {
                trip.push((s, t, -u * inv));
                trip.push((t, s, -u.conj() * inv));
            }
        }
    }
    MagneticLaplacian {
        cfg: cfg.clone(),
        matrix: CsrMatrix::from_triplets(n * n, trip),
        ux,
        uy,
        gauge_origin: (origin.0 % n, origin.1 % n),
    }
}

impl MagneticLaplacian {
    /// Holonomy `U_x(j,k) U_y(j+1,k) conj(U_x(j,k+1)) conj(U_y(j,k))` of
    /// every plaquette.
    pub fn plaquette_holonomies(&self) -> Vec<C> {
        let c = &self.cfg;
        let mut out = Vec::with_capacity(c.dim());
        for k in 0..c.n {
            for j in 0..c.n {
                let s = c.site(j, k);
                out.push(
                    self.ux[s] * self.uy[c.site(j + 1, k)] * self.ux[c.site(j, k + 1)].conj() * self.uy[s].conj(),
                );
            }
        }
        out
    }

    /// Largest deviation of a plaquette holonomy from `exp(2 pi i p / N^2)`.
    pub fn holonomy_defect(&self) -> f64 {
        let target = C::from_polar(1.0, self.cfg.plaquette_flux());
        self.plaquette_holonomies().iter().map(|u| (u - target).norm()).fold(0.0, f64::max)
    }

    /// Conjugate by the diagonal unitary `exp(i theta)`.
    pub fn gauge_transform(&self, theta: &[f64]) -> Result<MagneticLaplacian> {
        if theta.len() != self.cfg.dim() {
            return Err(Error::DimensionMismatch { expected: self.cfg.dim(), got: theta.len() });
        }
        let trip = self
            .matrix
            .triplets()
            .map(|(r, c, v)| (r, c, v * C::from_polar(1.0, theta[r] - theta[c])))
            .collect();
        let cfg = &self.cfg;
        let ux = (0..cfg.dim())
            .map(|s| {
                let (j, k) = cfg.coords(s);
                self.ux[s] * C::from_polar(1.0, theta[cfg.site(j + 1, k)] - theta[s])
            })
            .collect();
        let uy = (0..cfg.dim())
            .map(|s| {
                let (j, k) = cfg.coords(s);
                self.uy[s] * C::from_polar(1.0, theta[cfg.site(j, k + 1)] - theta[s])
            })
            .collect();
        Ok(MagneticLaplacian {
            cfg: self.cfg.clone(),
            matrix: CsrMatrix::from_triplets(cfg.dim(), trip),
            ux,
            uy,
            gauge_origin: self.gauge_origin,
        })
    }

    /// Sparse text dump, one `row col re im` line per stored entry.
    pub fn coordinate_dump(&self) -> String {
        let mut s = String::new();
        for (r, c, v) in self.matrix.triplets() {
            let _ = writeln!(s, "{r} {c} {} {}", fmt_f64(v.re), fmt_f64(v.im));
        }
        s
    }
}

/// Low spectrum with eigenvectors normalised by `sum |psi|^2 h^2 = 1`.
#[derive(Clone, Debug)]
pub struct SpectralWindow {
    pub cfg: TorusConfig,
    pub eigenvalues: Vec<f64>,
    /// Column-major, `dim` x `count`.
    pub vectors: Vec<C>,
    /// Number of eigenvalues in the lowest cluster.
    pub cluster_size: usize,
    /// Half-width `C` of the fallback window `[-C, C]`.
    pub window: f64,
    pub max_residual: f64,
    pub gauge_origin: (usize, usize),
}

impl SpectralWindow {
    pub fn dim(&self) -> usize {
        self.cfg.dim()
    }

    pub fn count(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn vector(&self, k: usize) -> &[C] {
        let d = self.dim();
        &self.vectors[k * d..(k + 1) * d]
    }

    pub fn cluster_values(&self) -> &[f64] {
        &self.eigenvalues[..self.cluster_size]
    }

    /// First eigenvalue above the cluster, if computed.
    pub fn first_excited(&self) -> Option<f64> {
        self.eigenvalues.get(self.cluster_size).copied()
    }

    pub fn cluster_max_abs(&self) -> f64 {
        self.cluster_values().iter().map(|x| x.abs()).fold(0.0, f64::max)
    }

    /// Largest entry of `G - I` for the `h^2`-weighted Gram matrix `G`.
    pub fn orthonormality_defect(&self) -> f64 {
        let h2 = self.cfg.h().powi(2);
        let mut worst = 0.0f64;
        for a in 0..self.count() {
            for b in a..self.count() {
                let g: C = self.vector(a).iter().zip(self.vector(b)).map(|(x, y)| x.conj() * y).sum::<C>() * h2;
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((g - target).norm());
            }
        }
        worst
    }
}

/// The `count` lowest eigenpairs of `h` and the split into the lowest cluster.
pub fn solve_low_spectrum(h: &MagneticLaplacian, count: usize) -> Result<SpectralWindow> {
    solve_low_spectrum_with(h, count, &SolverOptions::default())
}

pub fn solve_low_spectrum_with(h: &MagneticLaplacian, count: usize, opts: &SolverOptions) -> Result<SpectralWindow> {
    let pairs = lowest_eigenpairs(h, count, opts)?;
    let scale = 1.0 / h.cfg.h();
    let vectors = pairs.vectors.iter().map(|v| v * scale).collect();
    let cfg = h.cfg.clone();
    let window = 0.25 * 2.0 * cfg.p as f64 * cfg.mu0;
    let cluster_size = detect_cluster(&pairs.values, cfg.p as f64 * cfg.mu0, window);
    Ok(SpectralWindow {
        cfg,
        eigenvalues: pairs.values,
        vectors,
        cluster_size,
        window,
        max_residual: pairs.residuals.iter().copied().fold(0.0, f64::max),
        gauge_origin: h.gauge_origin,
    })
}

/// Split after the largest gap among eigenvalues below `limit`, measured
/// relative to the first Landau gap `2 limit`. Without a clear gap (less
/// than a tenth of the Landau gap), fall back to counting eigenvalues in
/// `[-window, window]`.
fn detect_cluster(values: &[f64], limit: f64, window: f64) -> usize {
    let mut best = (0.0, 0usize);
    for i in 0..values.len().saturating_sub(1) {
        if values[i] >= limit {
            break;
        }
        let gap = values[i + 1] - values[i];
        if gap > best.0 {
            best = (gap, i + 1);
        }
    }
    let landau = 2.0 * limit;
    if landau > 0.0 && best.0 >= 0.1 * landau {
        best.1
    } else {
        values.iter().filter(|v| v.abs() <= window).count()
    }
}

/// One row of the gap table.
#[derive(Clone, Debug, Serialize)]
pub struct GapRow {
    pub p: usize,
    pub n: usize,
    pub cluster_size: usize,
    pub cluster_max_abs: f64,
    pub first_excited: f64,
    /// `first_excited / (2 p mu0)`.
    pub excited_ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GapReport {
    pub rows: Vec<GapRow>,
    /// The uniform bound `C_L` observed over the list.
    pub observed_bound: f64,
    /// `excited(2p) / excited(p)` for every pair present in the list.
    pub doubling_ratios: Vec<(usize, f64)>,
}

pub fn gap_report(windows: &[SpectralWindow]) -> Result<GapReport> {
    let mut rows = vec![];
    for w in windows {
        let excited = w
            .first_excited()
            .ok_or_else(|| Error::Domain(format!("no eigenvalue above the cluster at p = {}", w.cfg.p)))?;
        rows.push(GapRow {
            p: w.cfg.p,
            n: w.cfg.n,
            cluster_size: w.cluster_size,
            cluster_max_abs: w.cluster_max_abs(),
            first_excited: excited,
            excited_ratio: excited / (2.0 * w.cfg.p as f64 * w.cfg.mu0),
        });
    }
    let observed_bound = rows.iter().map(|r| r.cluster_max_abs).fold(0.0, f64::max);
    let mut doubling_ratios = vec![];
    for r in &rows {
        if let Some(r2) = rows.iter().find(|x| x.p == 2 * r.p) {
            doubling_ratios.push((r.p, r2.first_excited / r.first_excited));
        }
    }
    Ok(GapReport { rows, observed_bound, doubling_ratios })
}

/// CSV rows `p, index, eigenvalue`.
pub fn spectrum_csv(windows: &[SpectralWindow]) -> String {
    let mut s = String::from("p,index,eigenvalue\n");
    for w in windows {
        for (i, v) in w.eigenvalues.iter().enumerate() {
            let _ = writeln!(s, "{},{},{}", w.cfg.p, i, fmt_f64(*v));
        }
    }
    s
}
