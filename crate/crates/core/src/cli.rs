//! Config-driven batch runs.
//!
//! A run reads one JSON document, executes the selected suites, writes
//! plot-ready tables into the output directory and assembles
//! `summary.json`, one entry per check. Nothing time-dependent is written,
//! so two runs with the same config and seed produce identical bytes.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bergman::{self, BergmanKernel};
use crate::error::{Error, Result};
use crate::geometry::{MetricPair, PointGeometry};
use crate::io::{write_atomic, write_json};
use crate::kernel_calculus::{random_poly_kernel, Composer, PolyKernel, PolyTerm};
use crate::model_kernel::{self, ModelKernel, ModelOperatorStencil, QuadratureBox};
use crate::poly::Parity;
use crate::toeplitz::{self, SymbolFunction};
use crate::torus::{self, auto_grid, SpectralWindow, TorusConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    ModelKernel,
    Compose,
    Spectrum,
    Bergman,
    Toeplitz,
    Expansion,
    All,
}

impl Command {
    /// Parse a kebab-case command name such as `model-kernel`.
    pub fn from_name(name: &str) -> Option<Self> {
        serde_json::from_value(serde_json::Value::String(name.to_string())).ok()
    }

    fn runs(self, suite: Command) -> bool {
        self == Command::All || self == suite
    }
}

/// `"auto"` or `{"explicit": {"4": 48, ...}}`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridPolicy {
    #[default]
    Auto,
    Explicit(BTreeMap<usize, usize>),
}

/// Override of one check's acceptance interval; absent sides keep the
/// default.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Threshold {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
}

impl Threshold {
    fn admits(&self, x: f64) -> bool {
        x.is_finite() && self.lo.is_none_or(|lo| x >= lo) && self.hi.is_none_or(|hi| x <= hi)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Suite to run; the command-line argument takes precedence.
    #[serde(default)]
    pub command: Option<Command>,
    #[serde(default = "default_p_list")]
    pub p_list: Vec<usize>,
    #[serde(default)]
    pub grid: GridPolicy,
    /// Per-check overrides keyed by check name (without the `[...]` suffix).
    #[serde(default)]
    pub tolerances: BTreeMap<String, Threshold>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_metric_scale")]
    pub metric_scale: f64,
}

fn default_p_list() -> Vec<usize> {
    vec![4, 8, 12, 16]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("bergkit-out")
}

fn default_metric_scale() -> f64 {
    1.0
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| config_error(format!("config does not parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p_list.is_empty() {
            return Err(config_error("p_list is empty"));
        }
        let mut seen = self.p_list.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.p_list.len() {
            return Err(config_error("p_list has repeated entries"));
        }
        if let Some(&p) = self.p_list.iter().find(|&&p| p < 2) {
            return Err(config_error(format!("p = {p} is below 2")));
        }
        if let GridPolicy::Explicit(map) = &self.grid {
            for &p in &self.p_list {
                if !map.contains_key(&p) {
                    return Err(config_error(format!("explicit grid has no entry for p = {p}")));
                }
            }
        }
        for &p in &self.p_list {
            self.torus(p)?;
        }
        for key in self.tolerances.keys() {
            if !CHECKS.iter().any(|c| c.name == key) {
                return Err(config_error(format!("unknown check in tolerances: {key}")));
            }
        }
        Ok(())
    }

    /// Torus config at `p` under the grid policy; values of `p` outside the
    /// list (such as the `4p` partner of the decay-scaling check) use the
    /// automatic grid.
    pub fn torus(&self, p: usize) -> Result<TorusConfig> {
        let n = match &self.grid {
            GridPolicy::Explicit(map) => map.get(&p).copied().unwrap_or_else(|| auto_grid(p)),
            GridPolicy::Auto => auto_grid(p),
        };
        TorusConfig::with_metric_scale(p, n, self.metric_scale)
    }

    fn threshold(&self, name: &str) -> Threshold {
        let spec = CHECKS.iter().find(|c| c.name == name).expect("registered check");
        let base = Threshold { lo: spec.lo, hi: spec.hi };
        match self.tolerances.get(name) {
            Some(o) => Threshold { lo: o.lo.or(base.lo), hi: o.hi.or(base.hi) },
            None => base,
        }
    }
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config { msg: msg.into(), suggested_n: None }
}

struct CheckSpec {
    name: &'static str,
    anchor: &'static str,
    lo: Option<f64>,
    hi: Option<f64>,
}

const fn check(name: &'static str, anchor: &'static str, lo: Option<f64>, hi: Option<f64>) -> CheckSpec {
    CheckSpec { name, anchor, lo, hi }
}

/// Every check a run can emit, with its default interval.
const CHECKS: &[CheckSpec] = &[
    check("model.reproducing", "model kernel reproduces itself: int P(Z,W) P(W,Z') dv(W) = P(Z,Z')", None, Some(1e-6)),
    check("model.l0_residual", "model kernel lies in the kernel of the model operator L0", None, Some(1e-2)),
    check("model.l0_order", "second-order convergence of the L0 stencil", Some(1.9), None),
    check("model.gap_lambda0", "spectrum of L0 contains 0", Some(-0.2), Some(0.2)),
    check("model.gap_lambda1", "first nonzero level of L0 is the Landau level 2 mu0", Some(0.9 * 4.0 * PI), Some(1.1 * 4.0 * PI)),
    check("compose.identity", "K[1,1] = 1: the model kernel is a projector", None, Some(1e-12)),
    check("compose.oracle", "K[F,G] P equals the composition of F P and G P", None, Some(1e-6)),
    check("compose.invariants", "deg K[F,G] <= deg F + deg G, parity of K[F,G] is the product parity", None, Some(0.0)),
    check("spectrum.index", "dimension of the low-lying cluster equals p", Some(0.0), Some(0.0)),
    check("spectrum.cluster_bound", "low cluster stays in [-C_L, C_L] uniformly in p", None, Some(1.0)),
    check("spectrum.excited_ratio", "rest of the spectrum lies above 2 p mu0 - C_L", Some(0.9), Some(1.02)),
    check("spectrum.doubling", "spectral gap grows linearly in p", Some(1.9), Some(2.1)),
    check("bergman.trace", "trace of P_{0,p} equals dim H_p", None, Some(1e-8)),
    check("bergman.trace_q1", "trace of Delta_p P equals the cluster eigenvalue sum", None, Some(1e-8)),
    check("bergman.projection", "P_{0,p} is the orthogonal projector onto H_p", None, Some(1e-8)),
    check("bergman.positivity", "P_{0,p}(x,x) >= 0", Some(0.0), None),
    check("bergman.translation", "|P_{0,p}(x,x+d)| depends only on d", None, Some(1e-6)),
    check("bergman.translation_sublattice", "|P_{0,p}(x,x+d)| is invariant under magnetic translations", None, Some(1e-6)),
    check("bergman.rescaled_sup", "p^{-1} P_{0,p} near the diagonal is the model kernel", None, Some(0.3)),
    check("bergman.rescaled_shrink", "near-diagonal error is O(p^{-1/2})", Some(0.55), Some(0.85)),
    check("bergman.decay_rate", "off-diagonal decay exp(-c sqrt(mu0 p) |Z - Z'|) with c > 0", Some(0.0), None),
    check("bergman.decay_majorant", "fitted exponential majorizes the kernel", None, Some(1.0 + 1e-12)),
    check("bergman.decay_scaling", "decay constant is independent of p", None, Some(0.3)),
    check("expansion.diagonal_a", "leading diagonal coefficient P(0,0) = 1", Some(0.95), Some(1.05)),
    check("expansion.diagonal_parity", "odd coefficient vanishes on the diagonal", None, Some(0.05)),
    check("expansion.q1_growth", "F_{1,r} = 0 for r < 2: p^{-1} P_{1,p}(x,x) bounded", None, Some(2.0)),
    check("expansion.q1_differences", "q = 1 diagonal expansion converges", None, Some(1.0)),
    check("toeplitz.hermitian", "T_{f,p} is self-adjoint for real f", None, Some(1e-12)),
    check("toeplitz.norm_bound", "||T_{f,p}|| <= sup |f|", None, Some(1.0 + 1e-12)),
    check("toeplitz.product", "T_f T_g = T_{fg} + O(1/p)", None, Some(0.7)),
    check("toeplitz.poisson", "p [T_f, T_g] = i T_{{f,g}} + O(1/p)", None, Some(0.8)),
    check("toeplitz.poisson_self", "[T_f, T_f] = 0 and {f,f} = 0", None, Some(0.0)),
    check("toeplitz.kernel_decay", "Toeplitz kernel is negligible at fixed distance", Some(5.0), None),
    check("toeplitz.leading_symbol", "leading Toeplitz symbol is f(x0) P", Some(0.4), Some(0.8)),
];

/// Names of every check a run can emit.
pub fn check_names() -> Vec<&'static str> {
    CHECKS.iter().map(|c| c.name).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckEntry {
    pub name: String,
    pub anchor: &'static str,
    pub status: Status,
    pub measured: f64,
    pub threshold: Threshold,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub command: Command,
    pub seed: u64,
    pub p_list: Vec<usize>,
    pub passed: usize,
    pub failed: usize,
    pub checks: Vec<CheckEntry>,
}

impl Summary {
    /// Pretty JSON, as written to `summary.json`.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckEntry> {
        self.checks.iter().filter(|c| c.status == Status::Fail)
    }
}

/// Spectral windows shared between suites, keyed by `(p, N)`.
pub struct WindowCache {
    windows: BTreeMap<(usize, usize), Rc<SpectralWindow>>,
}

impl Default for WindowCache {
    fn default() -> Self {
        Self::new()
    }
}

impl WindowCache {
    pub fn new() -> Self {
        Self { windows: BTreeMap::new() }
    }

    /// Lowest `p + 5` eigenpairs at `cfg`.
    pub fn get(&mut self, cfg: &TorusConfig) -> Result<Rc<SpectralWindow>> {
        if let Some(w) = self.windows.get(&(cfg.p, cfg.n)) {
            return Ok(w.clone());
        }
        let h = torus::build_hamiltonian(cfg)?;
        let w = Rc::new(torus::solve_low_spectrum(&h, cfg.p + 5)?);
        self.windows.insert((cfg.p, cfg.n), w.clone());
        Ok(w)
    }
}

struct Recorder<'a> {
    cfg: &'a RunConfig,
    checks: Vec<CheckEntry>,
}

impl Recorder<'_> {
    fn record(&mut self, name: &'static str, tag: Option<String>, measured: f64) {
        let spec = CHECKS.iter().find(|c| c.name == name).expect("registered check");
        let threshold = self.cfg.threshold(name);
        let status = if threshold.admits(measured) { Status::Pass } else { Status::Fail };
        let name = match tag {
            Some(t) => format!("{name}[{t}]"),
            None => name.to_string(),
        };
        self.checks.push(CheckEntry { name, anchor: spec.anchor, status, measured, threshold });
    }
}

fn tag_p(p: usize) -> Option<String> {
    Some(format!("p={p}"))
}

fn tag_pair(a: usize, b: usize) -> Option<String> {
    Some(format!("{a}->{b}"))
}

/// Pairs `(p, factor p)` present in `list`.
fn scaled_pairs(list: &[usize], factor: usize) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> =
        list.iter().filter(|&&p| list.contains(&(factor * p))).map(|&p| (p, factor * p)).collect();
    out.sort_unstable();
    out
}

/// Result of [`run`]: the summary plus the files written.
pub struct RunOutcome {
    pub summary: Summary,
    pub artifacts: Vec<PathBuf>,
}

/// Execute `command` (or the config's command) and write every artifact.
pub fn run(cfg: &RunConfig, command: Option<Command>) -> Result<RunOutcome> {
    cfg.validate()?;
    let command = command.or(cfg.command).ok_or_else(|| config_error("no command given"))?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out)?;
    let mut files = Files { dir: out.clone(), written: vec![] };
    let mut rec = Recorder { cfg, checks: vec![] };
    let mut cache = WindowCache::new();
    let mut p_list = cfg.p_list.clone();
    p_list.sort_unstable();

    if command.runs(Command::ModelKernel) {
        model_suite(cfg, &mut rec, &mut files)?;
    }
    if command.runs(Command::Compose) {
        compose_suite(cfg, &mut rec, &mut files)?;
    }
    if command.runs(Command::Spectrum) {
        spectrum_suite(cfg, &p_list, &mut cache, &mut rec, &mut files)?;
    }
    if command.runs(Command::Bergman) {
        bergman_suite(cfg, &p_list, &mut cache, &mut rec, &mut files)?;
    }
    if command.runs(Command::Expansion) {
        expansion_suite(cfg, &p_list, &mut cache, &mut rec, &mut files)?;
    }
    if command.runs(Command::Toeplitz) {
        toeplitz_suite(cfg, &p_list, &mut cache, &mut rec, &mut files)?;
    }

    let failed = rec.checks.iter().filter(|c| c.status == Status::Fail).count();
    let summary = Summary {
        command,
        seed: cfg.seed,
        p_list: cfg.p_list.clone(),
        passed: rec.checks.len() - failed,
        failed,
        checks: rec.checks,
    };
    files.text("summary.json", &summary.to_json()?)?;
    Ok(RunOutcome { summary, artifacts: files.written })
}

struct Files {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Files {
    fn text(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        write_atomic(&path, contents)?;
        self.written.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.dir.join(name);
        write_json(&path, value)?;
        self.written.push(path);
        Ok(())
    }
}

#[derive(Serialize)]
struct ModelReport {
    geometry: crate::geometry::GeometryJson,
    reproducing: Vec<f64>,
    l0_residuals: Vec<(f64, f64)>,
    l0_order: f64,
    gap: Option<(f64, f64)>,
}

fn model_suite(cfg: &RunConfig, rec: &mut Recorder, files: &mut Files) -> Result<()> {
    let geo = PointGeometry::from_metric_pair(&MetricPair::standard(1, cfg.metric_scale))?;
    let mk = ModelKernel::from_geometry(&geo);
    let bx = QuadratureBox::new(5.0, 0.05)?;
    let mut reproducing = vec![];
    for (z, zp) in [([0.0, 0.0], [0.0, 0.0]), ([1.0, 0.0], [0.0, 1.0])] {
        reproducing.push(model_kernel::reproducing_residual(&mk, &z, &zp, &bx)?.residual);
    }
    rec.record("model.reproducing", None, reproducing.iter().copied().fold(0.0, f64::max));

    // The stencil is built for the flat unit metric only.
    let mut l0_residuals = vec![];
    let mut l0_order = f64::NAN;
    let mut gap = None;
    if cfg.metric_scale == 1.0 {
        for h in [0.08, 0.04, 0.02] {
            let st = ModelOperatorStencil::new(&mk, h, 4.0)?;
            l0_residuals.push((h, model_kernel::l0_annihilation_residual(&mk, &st, &[0.0, 0.0])?));
        }
        let (r0, r2) = (l0_residuals[0].1, l0_residuals[2].1);
        l0_order = (r0 / r2).log2() / 2.0;
        rec.record("model.l0_residual", None, r2);
        rec.record("model.l0_order", None, l0_order);
        let st = ModelOperatorStencil::new(&mk, 0.1, 3.0)?;
        let g = model_kernel::model_gap_estimate(&st, 2.0 * PI)?;
        rec.record("model.gap_lambda0", None, g.lambda0);
        rec.record("model.gap_lambda1", None, g.lambda1);
        gap = Some((g.lambda0, g.lambda1));
    }

    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..=20)
        .map(|i| {
            let t = -2.0 + 0.2 * i as f64;
            (vec![t, 0.0], vec![0.0, 0.0])
        })
        .collect();
    files.text("model_kernel_samples.csv", &model_kernel::kernel_samples_csv(&mk, &pairs))?;
    files.json("model_kernel.json", &ModelReport { geometry: geo.to_json(), reproducing, l0_residuals, l0_order, gap })
}

/// Evaluation points for the quadrature oracle.
const ORACLE_POINTS: [([f64; 2], [f64; 2]); 3] =
    [([0.0, 0.0], [0.0, 0.0]), ([0.4, -0.3], [0.1, 0.5]), ([-0.6, 0.2], [0.3, 0.3])];

/// Largest deviation of `K[F, G] P` from the quadrature composition over a
/// few point pairs, relative to the largest composed value.
pub fn compose_oracle_error(mk: &ModelKernel, f: &PolyKernel, g: &PolyKernel, k: &PolyKernel) -> Result<f64> {
    let bx = QuadratureBox::new(7.0, 0.1)?;
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for (z, zp) in ORACLE_POINTS {
        let q = model_kernel::compose_by_quadrature(
            mk,
            |a, b| f.eval(a, b) * mk.eval(a, b),
            |a, b| g.eval(a, b) * mk.eval(a, b),
            &z,
            &zp,
            &bx,
            (f.degree() + g.degree()) as usize,
        );
        if !q.adequate {
            return Err(Error::Domain(format!("quadrature tail bound {:.3e} too large", q.tail_bound)));
        }
        let sym = k.eval(&z, &zp) * mk.eval(&z, &zp);
        worst = worst.max((sym - q.value).norm());
        scale = scale.max(q.value.norm());
    }
    Ok(worst / scale.max(f64::MIN_POSITIVE))
}

/// Number of random pairs in the compose suite.
pub const ORACLE_PAIRS: usize = 20;

#[derive(Serialize)]
struct ComposedPair {
    f: Vec<PolyTerm>,
    g: Vec<PolyTerm>,
    k: Vec<PolyTerm>,
    relative_error: f64,
    degree_ok: bool,
    parity: Parity,
}

fn parity_product(a: Parity, b: Parity) -> Option<Parity> {
    match (a, b) {
        (Parity::Zero, _) | (_, Parity::Zero) => Some(Parity::Zero),
        (Parity::Mixed, _) | (_, Parity::Mixed) => None,
        (x, y) if x == y => Some(Parity::Even),
        _ => Some(Parity::Odd),
    }
}

fn compose_suite(cfg: &RunConfig, rec: &mut Recorder, files: &mut Files) -> Result<()> {
    let geo = PointGeometry::from_metric_pair(&MetricPair::standard(1, cfg.metric_scale))?;
    let mk = ModelKernel::from_geometry(&geo);
    let composer = Composer::new(&mk)?;
    let one = PolyKernel::one(1);
    let id = composer.compose(&one, &one)?;
    rec.record("compose.identity", None, id.max_coeff_distance(&one)?);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pairs = vec![];
    let mut worst = 0.0f64;
    let mut violations = 0usize;
    for _ in 0..ORACLE_PAIRS {
        let (df, dg) = (rng.random_range(0..=3u32), rng.random_range(0..=3u32));
        let f = random_poly_kernel(1, df, &mut rng);
        let g = random_poly_kernel(1, dg, &mut rng);
        let k = composer.compose(&f, &g)?;
        let err = compose_oracle_error(&mk, &f, &g, &k)?;
        worst = worst.max(err);
        let degree_ok = k.degree() <= f.degree() + g.degree();
        // Parity is only constrained when both factors have one.
        let parity_ok = match parity_product(f.parity(), g.parity()) {
            Some(Parity::Zero) => k.parity() == Parity::Zero,
            Some(par) => k.parity() == par || k.parity() == Parity::Zero,
            None => true,
        };
        violations += usize::from(!degree_ok) + usize::from(!parity_ok);
        pairs.push(ComposedPair { f: f.to_json(), g: g.to_json(), k: k.to_json(), relative_error: err, degree_ok, parity: k.parity() });
    }
    // Homogeneous inputs exercise the parity rule on every seed.
    for (df, dg) in [(1u32, 1u32), (1, 2), (2, 2), (3, 1)] {
        let f = homogeneous(random_poly_kernel(1, df, &mut rng), df);
        let g = homogeneous(random_poly_kernel(1, dg, &mut rng), dg);
        let k = composer.compose(&f, &g)?;
        let expect = if (df + dg) % 2 == 0 { Parity::Even } else { Parity::Odd };
        violations += usize::from(k.parity() != expect && k.parity() != Parity::Zero);
    }
    rec.record("compose.oracle", None, worst);
    rec.record("compose.invariants", None, violations as f64);
    files.json("compose_pairs.json", &pairs)
}

/// Keep only the terms of total degree `d`.
fn homogeneous(k: PolyKernel, d: u32) -> PolyKernel {
    let mut poly = crate::poly::Poly::zero(k.poly().nvars());
    for (m, c) in k.poly().terms() {
        if m.degree() == d {
            poly.add_term(m.clone(), *c);
        }
    }
    PolyKernel::new(k.n(), poly).expect("same variable count")
}

fn windows_for(cfg: &RunConfig, p_list: &[usize], cache: &mut WindowCache) -> Result<Vec<Rc<SpectralWindow>>> {
    p_list.iter().map(|&p| cache.get(&cfg.torus(p)?)).collect()
}

fn owned(ws: &[Rc<SpectralWindow>]) -> Vec<SpectralWindow> {
    ws.iter().map(|w| (**w).clone()).collect()
}

fn spectrum_suite(
    cfg: &RunConfig,
    p_list: &[usize],
    cache: &mut WindowCache,
    rec: &mut Recorder,
    files: &mut Files,
) -> Result<()> {
    let ws = owned(&windows_for(cfg, p_list, cache)?);
    let report = torus::gap_report(&ws)?;
    for row in &report.rows {
        rec.record("spectrum.index", tag_p(row.p), row.cluster_size as f64 - row.p as f64);
    }
    rec.record("spectrum.cluster_bound", None, report.observed_bound);
    for row in &report.rows {
        rec.record("spectrum.excited_ratio", tag_p(row.p), row.excited_ratio);
    }
    for &(p, r) in &report.doubling_ratios {
        rec.record("spectrum.doubling", tag_pair(p, 2 * p), r);
    }
    files.text("spectra.csv", &torus::spectrum_csv(&ws))?;
    files.json("gap_report.json", &report)
}

#[derive(Serialize)]
struct BergmanRow {
    p: usize,
    n: usize,
    trace: f64,
    trace_q1_kernel: f64,
    trace_q1_spectral: f64,
    projection_defect: f64,
    min_diagonal: f64,
    translation_spread: f64,
    orbit_spread: f64,
}

#[derive(Serialize)]
struct BergmanReport {
    rows: Vec<BergmanRow>,
    rescaled: Vec<bergman::RescaledComparison>,
    decay: Vec<bergman::DecayFit>,
}

/// Radius of the rescaled near-diagonal comparison.
pub const RESCALED_RADIUS: f64 = 3.0;

/// Random base points for the translation check.
pub fn random_sites(cfg: &TorusConfig, count: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.random_range(0..cfg.dim())).collect()
}

/// Random base points in one orbit of the lattice magnetic translations.
pub fn random_orbit_sites(cfg: &TorusConfig, count: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per = cfg.translation_period();
    let cells = cfg.n / per;
    (0..count).map(|_| cfg.site(per * rng.random_range(0..cells) + 1, per * rng.random_range(0..cells) + 2)).collect()
}

fn translation_offsets() -> Vec<(usize, usize)> {
    (1..=4).flat_map(|m| [(m, 0), (0, m), (m, m)]).collect()
}

/// Admissible decay-fit range at `p`: from two magnetic lengths to `1/4`.
pub fn decay_range(p: usize) -> Option<(f64, f64)> {
    let lo = 2.0 / (2.0 * PI * p as f64).sqrt();
    (lo < bergman::CHART_RADIUS).then_some((lo, bergman::CHART_RADIUS))
}

/// `max sample / bound(d)` over the fitted range.
pub fn majorant_ratio(kernel: &BergmanKernel, fit: &bergman::DecayFit) -> f64 {
    bergman::decay_samples(kernel, fit.d_range.1)
        .into_iter()
        .filter(|(d, v)| *d >= fit.d_range.0 - 1e-12 && *v >= bergman::DECAY_FLOOR)
        .map(|(d, v)| v / fit.bound(kernel.cfg.mu0, d))
        .fold(0.0, f64::max)
}

fn bergman_suite(
    cfg: &RunConfig,
    p_list: &[usize],
    cache: &mut WindowCache,
    rec: &mut Recorder,
    files: &mut Files,
) -> Result<()> {
    let ws = windows_for(cfg, p_list, cache)?;
    let mut rows = vec![];
    let mut kernels = vec![];
    for w in &ws {
        let k0 = bergman::assemble_kernel(w, 0)?;
        let k1 = bergman::assemble_kernel(w, 1)?;
        let p = w.cfg.p;
        let trace = k0.trace().re;
        let (t1k, t1s) = (k1.trace().re, k1.spectral_trace());
        let min_diagonal = k0.diagonal().iter().map(|c| c.re).fold(f64::INFINITY, f64::min);
        let projection_defect = k0.projection_defect();
        rec.record("bergman.trace", tag_p(p), (trace - k0.rank() as f64).abs());
        rec.record("bergman.trace_q1", tag_p(p), (t1k - t1s).abs());
        rec.record("bergman.projection", tag_p(p), projection_defect);
        rec.record("bergman.positivity", tag_p(p), min_diagonal);
        let translation_spread =
            bergman::translation_spread(&k0, &random_sites(&w.cfg, 10, cfg.seed ^ p as u64), &translation_offsets());
        let orbit_spread =
            bergman::translation_spread(&k0, &random_orbit_sites(&w.cfg, 10, cfg.seed ^ p as u64), &translation_offsets());
        rec.record("bergman.translation", tag_p(p), translation_spread);
        rec.record("bergman.translation_sublattice", tag_p(p), orbit_spread);
        rows.push(BergmanRow {
            p,
            n: w.cfg.n,
            trace,
            trace_q1_kernel: t1k,
            trace_q1_spectral: t1s,
            projection_defect,
            min_diagonal,
            translation_spread,
            orbit_spread,
        });
        kernels.push(k0);
    }

    let mut rescaled = vec![];
    for k in &kernels {
        let p = k.p();
        if RESCALED_RADIUS / (p as f64).sqrt() > 2f64.sqrt() {
            continue;
        }
        let r = bergman::rescaled_comparison(k, &k.cfg.model_kernel()?, RESCALED_RADIUS)?;
        if p >= 8 {
            rec.record("bergman.rescaled_sup", tag_p(p), r.sup_error);
        }
        rescaled.push(r);
    }
    for (a, b) in scaled_pairs(p_list, 2) {
        let ea = rescaled.iter().find(|r| r.p == a);
        let eb = rescaled.iter().find(|r| r.p == b);
        if let (Some(ea), Some(eb)) = (ea, eb) {
            if a >= 8 {
                rec.record("bergman.rescaled_shrink", tag_pair(a, b), eb.sup_error / ea.sup_error);
            }
        }
    }

    let mut decay = vec![];
    for k in &kernels {
        if let Some(range) = decay_range(k.p()) {
            let fit = bergman::offdiagonal_decay_fit(k, range)?;
            rec.record("bergman.decay_rate", tag_p(k.p()), fit.c_hat);
            rec.record("bergman.decay_majorant", tag_p(k.p()), majorant_ratio(k, &fit));
            decay.push(fit);
        }
    }
    // Scaling partner of the largest p with an admissible range: at 4p the
    // range is halved, which keeps sqrt(p) d fixed.
    if let Some(base) = decay.last().cloned() {
        let p4 = 4 * base.p;
        let w = cache.get(&cfg.torus(p4)?)?;
        let k = bergman::assemble_kernel(&w, 0)?;
        let fit = bergman::offdiagonal_decay_fit(&k, (base.d_range.0 / 2.0, base.d_range.1 / 2.0))?;
        rec.record("bergman.decay_scaling", tag_pair(base.p, p4), (fit.c_hat - base.c_hat).abs() / base.c_hat);
        decay.push(fit);
    }

    files.text("decay.csv", &bergman::decay_csv(&kernels, bergman::CHART_RADIUS))?;
    files.json("bergman_report.json", &BergmanReport { rows, rescaled, decay })
}

/// Grid factor for the `q = 1` diagonal: the values are a second-order
/// lattice effect at the auto grid, so a finer grid `N >= 12 p` is used.
pub const Q1_GRID_FACTOR: usize = 12;

#[derive(Serialize)]
struct ExpansionReport {
    diagonal: bergman::ExpansionFit,
    q1: bergman::Q1Check,
    q1_grid: Vec<(usize, usize)>,
}

fn expansion_suite(
    cfg: &RunConfig,
    p_list: &[usize],
    cache: &mut WindowCache,
    rec: &mut Recorder,
    files: &mut Files,
) -> Result<()> {
    if p_list.len() < 3 {
        return Err(config_error("expansion fits need at least three values of p"));
    }
    let ws = windows_for(cfg, p_list, cache)?;
    let k0: Vec<BergmanKernel> = ws.iter().map(|w| bergman::assemble_kernel(w, 0)).collect::<Result<_>>()?;
    let diagonal = bergman::diagonal_limit_check(&k0)?;
    rec.record("expansion.diagonal_a", None, diagonal.a);
    rec.record("expansion.diagonal_parity", None, diagonal.b.abs() / diagonal.a.abs());

    let mut k1 = vec![];
    let mut q1_grid = vec![];
    for &p in p_list {
        let base = cfg.torus(p)?;
        let n = base.n.max(Q1_GRID_FACTOR * p);
        let tc = TorusConfig::with_metric_scale(p, n, cfg.metric_scale)?;
        let w = cache.get(&tc)?;
        k1.push(bergman::assemble_kernel(&w, 1)?);
        q1_grid.push((p, n));
    }
    let q1 = bergman::q1_boundedness_check(&k1)?;
    let mags: Vec<f64> = q1.fit.values.iter().map(|v| v.abs()).collect();
    let growth = mags.iter().copied().fold(0.0, f64::max) / mags.iter().copied().fold(f64::INFINITY, f64::min);
    rec.record("expansion.q1_growth", None, growth);
    let diffs: Vec<f64> = q1.fit.values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let worst = diffs.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
    rec.record("expansion.q1_differences", None, worst);

    files.text("diagonal_fit.csv", &bergman::diagonal_csv(&diagonal))?;
    files.json("expansion_fits.json", &ExpansionReport { diagonal, q1, q1_grid })
}

/// Symbols used by the Toeplitz suite.
pub fn toeplitz_symbols() -> (SymbolFunction, SymbolFunction) {
    (SymbolFunction::cos(1, 0), SymbolFunction::cos(0, 1))
}

/// Distance beyond which the Toeplitz kernel mass is measured.
pub const KERNEL_EPSILON: f64 = 0.3;

/// Base points per side for the Toeplitz kernel mass.
pub const KERNEL_SAMPLES: usize = 12;

#[derive(Serialize)]
struct ToeplitzReport {
    e1: Vec<toeplitz::DefectRow>,
    e2: Vec<toeplitz::DefectRow>,
    e2_self: Vec<toeplitz::DefectRow>,
    kernel_decay: Vec<toeplitz::KernelDecay>,
    leading: Vec<toeplitz::LeadingSymbol>,
}

fn toeplitz_suite(
    cfg: &RunConfig,
    p_list: &[usize],
    cache: &mut WindowCache,
    rec: &mut Recorder,
    files: &mut Files,
) -> Result<()> {
    let ws = owned(&windows_for(cfg, p_list, cache)?);
    let (f, g) = toeplitz_symbols();
    for w in &ws {
        let t = toeplitz::build_toeplitz(&f, w)?;
        rec.record("toeplitz.hermitian", tag_p(w.cfg.p), t.hermiticity_defect());
        rec.record("toeplitz.norm_bound", tag_p(w.cfg.p), t.op_norm());
        if w.cfg.p <= 8 {
            files.json(&format!("toeplitz_p{}.json", w.cfg.p), &t.to_json())?;
        }
    }
    let e1 = toeplitz::product_defect(&f, &g, &ws)?;
    let e2 = toeplitz::commutator_poisson_check(&f, &g, &ws)?;
    let e2_self = toeplitz::commutator_poisson_check(&f, &f, &ws)?;
    let value = |rows: &[toeplitz::DefectRow], p: usize| rows.iter().find(|r| r.p == p).map(|r| r.value);
    for (a, b) in scaled_pairs(p_list, 2) {
        rec.record("toeplitz.product", tag_pair(a, b), value(&e1, b).unwrap() / value(&e1, a).unwrap());
        rec.record("toeplitz.poisson", tag_pair(a, b), value(&e2, b).unwrap() / value(&e2, a).unwrap());
    }
    rec.record("toeplitz.poisson_self", None, e2_self.iter().map(|r| r.value).fold(0.0, f64::max));

    let mut kernel_decay = vec![];
    for w in &ws {
        let lo = 2.0 / (2.0 * PI * w.cfg.p as f64).sqrt();
        if KERNEL_EPSILON > lo {
            kernel_decay.push(toeplitz::toeplitz_kernel_decay(&f, w, KERNEL_EPSILON, KERNEL_SAMPLES)?);
        }
    }
    for (a, b) in scaled_pairs(p_list, 2) {
        let ma = kernel_decay.iter().find(|d| d.p == a);
        let mb = kernel_decay.iter().find(|d| d.p == b);
        if let (Some(ma), Some(mb)) = (ma, mb) {
            rec.record("toeplitz.kernel_decay", tag_pair(a, b), ma.mass / mb.mass);
        }
    }

    let mut leading = vec![];
    for w in &ws {
        if toeplitz::LEADING_RADIUS / (w.cfg.p as f64).sqrt() <= 2f64.sqrt() {
            leading.push(toeplitz::leading_symbol_check(&f, w, &w.cfg.model_kernel()?)?);
        }
    }
    for (a, b) in scaled_pairs(p_list, 4) {
        let la = leading.iter().find(|l| l.p == a);
        let lb = leading.iter().find(|l| l.p == b);
        if let (Some(la), Some(lb)) = (la, lb) {
            rec.record("toeplitz.leading_symbol", tag_pair(a, b), lb.sup_error / la.sup_error);
        }
    }

    files.text("toeplitz_defects.csv", &toeplitz::defect_csv(&e1, &e2))?;
    files.json("toeplitz_report.json", &ToeplitzReport { e1, e2, e2_self, kernel_decay, leading })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_overrides() {
        let cfg = RunConfig::from_json(r#"{"p_list": [4, 8], "tolerances": {"spectrum.doubling": {"lo": 1.8}}}"#).unwrap();
        assert_eq!(cfg.grid, GridPolicy::Auto);
        assert_eq!(cfg.threshold("spectrum.doubling"), Threshold { lo: Some(1.8), hi: Some(2.1) });
        assert_eq!(cfg.torus(4).unwrap().n, 48);
    }

    #[test]
    fn config_rejections() {
        assert!(RunConfig::from_json("{ not json").is_err());
        assert!(RunConfig::from_json(r#"{"p_list": []}"#).is_err());
        assert!(RunConfig::from_json(r#"{"p_list": [4, 4]}"#).is_err());
        assert!(RunConfig::from_json(r#"{"p_list": [4], "grid": {"explicit": {"4": 10}}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"p_list": [4], "grid": {"explicit": {"8": 64}}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"tolerances": {"no.such": {"hi": 1}}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"colour": "red"}"#).is_err());
        let ok = RunConfig::from_json(r#"{"command": "spectrum", "p_list": [4], "grid": {"explicit": {"4": 56}}}"#).unwrap();
        assert_eq!(ok.torus(4).unwrap().n, 56);
        assert_eq!(ok.command, Some(Command::Spectrum));
        assert_eq!(Command::from_name("model-kernel"), Some(Command::ModelKernel));
        assert_eq!(Command::from_name("everything"), None);
    }

    #[test]
    fn threshold_sides() {
        let t = Threshold { lo: Some(0.0), hi: Some(1.0) };
        assert!(t.admits(0.0) && t.admits(1.0) && !t.admits(1.5) && !t.admits(f64::NAN));
        assert!(Threshold::default().admits(-7.0));
    }

    #[test]
    fn pairs_and_parity() {
        assert_eq!(scaled_pairs(&[4, 8, 12, 16], 2), vec![(4, 8), (8, 16)]);
        assert_eq!(scaled_pairs(&[4, 8, 12, 16], 4), vec![(4, 16)]);
        assert_eq!(parity_product(Parity::Odd, Parity::Odd), Some(Parity::Even));
        assert_eq!(parity_product(Parity::Odd, Parity::Even), Some(Parity::Odd));
        assert_eq!(parity_product(Parity::Mixed, Parity::Even), None);
    }
}
