//! C ABI for bergkit.
//!
//! Objects cross the boundary as opaque handles. Each handle comes from a
//! constructor that writes it through an out-pointer and is released by the
//! matching `_free` function; freeing `NULL` is a no-op. Fallible calls
//! return a [`BergkitStatus`]. After a failure, [`bergkit_last_error`]
//! returns the message for the calling thread.
//!
//! Panics never unwind into C: they are caught and reported as
//! `BERGKIT_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use bergkit::bergman::{self, BergmanKernel};
use bergkit::cli::{self, Command, RunConfig};
use bergkit::geometry::{MetricPair, PointGeometry};
use bergkit::model_kernel::ModelKernel;
use bergkit::toeplitz::{self, SymbolFunction, ToeplitzMatrix};
use bergkit::torus::{self, SpectralWindow, TorusConfig};
use bergkit::Error;
use nalgebra::DMatrix;
use num_complex::Complex64;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BergkitStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Config = 3,
    NoConvergence = 4,
    Domain = 5,
    Io = 6,
    /// A run finished but at least one check failed.
    ChecksFailed = 7,
    Panic = 8,
}

/// Model kernel of one tangent space.
pub struct BergkitModelKernel(ModelKernel);

/// Low spectrum of the lattice Laplacian on the torus.
pub struct BergkitSpectrum(SpectralWindow);

/// Generalised Bergman kernel assembled from a spectrum.
pub struct BergkitBergman(BergmanKernel);

/// Toeplitz matrix in the cluster eigenbasis.
pub struct BergkitToeplitz(ToeplitzMatrix);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: BergkitStatus, msg: impl Into<String>) -> BergkitStatus {
    set_error(msg.into());
    status
}

fn from_error(e: Error) -> BergkitStatus {
    let status = match &e {
        Error::InvalidInput(_) | Error::DimensionMismatch { .. } | Error::NotPositive(_) | Error::Json(_) => {
            BergkitStatus::InvalidInput
        }
        Error::Config { .. } => BergkitStatus::Config,
        Error::NoConvergence { .. } => BergkitStatus::NoConvergence,
        Error::Domain(_) | Error::Capability(_) => BergkitStatus::Domain,
        Error::Io(_) => BergkitStatus::Io,
    };
    fail(status, e.to_string())
}

/// Run `f`, turning panics into `BERGKIT_STATUS_PANIC`.
fn guard<F: FnOnce() -> Result<(), BergkitStatus>>(f: F) -> BergkitStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BergkitStatus::Ok,
        Ok(Err(s)) => s,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(BergkitStatus::Panic, msg)
        }
    }
}

fn nonnull<T>(p: *const T, what: &str) -> Result<(), BergkitStatus> {
    if p.is_null() {
        Err(fail(BergkitStatus::NullPointer, format!("{what} is NULL")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` must be NULL or point to `len` readable values.
unsafe fn read_slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], BergkitStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    nonnull(p, what)?;
    Ok(slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be NULL or a valid NUL-terminated string.
unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, BergkitStatus> {
    nonnull(p, what)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(BergkitStatus::InvalidInput, format!("{what} is not UTF-8")))
}

/// # Safety
/// `out` must be NULL or valid for a write.
unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), BergkitStatus> {
    nonnull(out, "out")?;
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn lift<T>(r: bergkit::Result<T>) -> Result<T, BergkitStatus> {
    r.map_err(from_error)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bergkit_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or NULL. The caller owns
/// the string and releases it with [`bergkit_string_free`].
#[no_mangle]
pub extern "C" fn bergkit_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null_mut(), |c| c.clone().into_raw()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn bergkit_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Model kernel of the flat structure `g = I`, `omega = sum dx_k ^ dy_k`
/// in real dimension `2 n`.
///
/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn bergkit_model_kernel_standard(n: usize, out: *mut *mut BergkitModelKernel) -> BergkitStatus {
    guard(|| {
        if n == 0 {
            return Err(fail(BergkitStatus::InvalidInput, "n must be positive"));
        }
        put(out, BergkitModelKernel(ModelKernel::standard(n)))
    })
}

/// Model kernel of the metric `g` and symplectic form `omega`, both
/// row-major `2n x 2n`.
///
/// # Safety
/// `g` and `omega` must point to `4 n^2` doubles each; `out` must be
/// valid for a write.
#[no_mangle]
pub unsafe extern "C" fn bergkit_model_kernel_new(
    n: usize,
    g: *const f64,
    omega: *const f64,
    out: *mut *mut BergkitModelKernel,
) -> BergkitStatus {
    guard(|| {
        let d = 2 * n;
        let g = read_slice(g, d * d, "g")?;
        let omega = read_slice(omega, d * d, "omega")?;
        let mp = lift(MetricPair::new(DMatrix::from_row_slice(d, d, g), DMatrix::from_row_slice(d, d, omega)))?;
        let geo = lift(PointGeometry::from_metric_pair(&mp))?;
        put(out, BergkitModelKernel(ModelKernel::from_geometry(&geo)))
    })
}

/// # Safety
/// `mk` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bergkit_model_kernel_dim(mk: *const BergkitModelKernel) -> usize {
    mk.as_ref().map_or(0, |m| m.0.dim())
}

/// `P(Z, Z')` for points of length `len = 2n`.
///
/// # Safety
/// `mk` must be a live handle, `z` and `zp` must point to `len` doubles,
/// `re` and `im` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bergkit_model_kernel_eval(
    mk: *const BergkitModelKernel,
    z: *const f64,
    zp: *const f64,
    len: usize,
    re: *mut f64,
    im: *mut f64,
) -> BergkitStatus {
    guard(|| {
        nonnull(mk, "mk")?;
        nonnull(re, "re")?;
        nonnull(im, "im")?;
        let mk = &(*mk).0;
        if len != mk.dim() {
            return Err(fail(BergkitStatus::InvalidInput, format!("points must have length {}", mk.dim())));
        }
        let v = mk.eval(read_slice(z, len, "z")?, read_slice(zp, len, "zp")?);
        *re = v.re;
        *im = v.im;
        Ok(())
    })
}

/// # Safety
/// `mk` must be NULL or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn bergkit_model_kernel_free(mk: *mut BergkitModelKernel) {
    if !mk.is_null() {
        drop(Box::from_raw(mk));
    }
}

/// Lowest `count` eigenpairs of the renormalised Laplacian at tensor power
/// `p` on an `n x n` grid. `n = 0` picks the automatic grid and
/// `count = 0` means `p + 5`.
///
/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn bergkit_spectrum_solve(p: usize, n: usize, count: usize, out: *mut *mut BergkitSpectrum) -> BergkitStatus {
    guard(|| {
        let cfg = lift(if n == 0 { TorusConfig::auto(p) } else { TorusConfig::new(p, n) })?;
        let h = lift(torus::build_hamiltonian(&cfg))?;
        let count = if count == 0 { p + 5 } else { count };
        put(out, BergkitSpectrum(lift(torus::solve_low_spectrum(&h, count))?))
    })
}

/// # Safety
/// `sp` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bergkit_spectrum_count(sp: *const BergkitSpectrum) -> usize {
    sp.as_ref().map_or(0, |s| s.0.count())
}

/// Size of the lowest eigenvalue cluster.
///
/// # Safety
/// `sp` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bergkit_spectrum_cluster_size(sp: *const BergkitSpectrum) -> usize {
    sp.as_ref().map_or(0, |s| s.0.cluster_size)
}

/// Copy the computed eigenvalues, ascending, into `buf` (`len` slots).
///
/// # Safety
/// `sp` must be a live handle and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bergkit_spectrum_eigenvalues(sp: *const BergkitSpectrum, buf: *mut f64, len: usize) -> BergkitStatus {
    guard(|| {
        nonnull(sp, "sp")?;
        let values = &(*sp).0.eigenvalues;
        if len < values.len() {
            return Err(fail(BergkitStatus::InvalidInput, format!("buffer needs {} slots", values.len())));
        }
        nonnull(buf, "buf")?;
        slice::from_raw_parts_mut(buf, values.len()).copy_from_slice(values);
        Ok(())
    })
}

/// # Safety
/// `sp` must be NULL or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn bergkit_spectrum_free(sp: *mut BergkitSpectrum) {
    if !sp.is_null() {
        drop(Box::from_raw(sp));
    }
}

/// `P_{q,p}` from the cluster of `sp`. The spectrum handle may be freed
/// afterwards.
///
/// # Safety
/// `sp` must be a live handle and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn bergkit_bergman_new(sp: *const BergkitSpectrum, q: u32, out: *mut *mut BergkitBergman) -> BergkitStatus {
    guard(|| {
        nonnull(sp, "sp")?;
        put(out, BergkitBergman(lift(bergman::assemble_kernel(&(*sp).0, q))?))
    })
}

/// Kernel value between lattice sites `s` and `t` (site `j + N k`).
///
/// # Safety
/// `bk` must be a live handle, `re` and `im` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bergkit_bergman_value(bk: *const BergkitBergman, s: usize, t: usize, re: *mut f64, im: *mut f64) -> BergkitStatus {
    guard(|| {
        nonnull(bk, "bk")?;
        nonnull(re, "re")?;
        nonnull(im, "im")?;
        let k = &(*bk).0;
        let dim = k.cfg.dim();
        if s >= dim || t >= dim {
            return Err(fail(BergkitStatus::InvalidInput, format!("site index out of range 0..{dim}")));
        }
        let v = k.value(s, t);
        *re = v.re;
        *im = v.im;
        Ok(())
    })
}

/// `h^2 sum_x P(x, x)`; NaN for a NULL handle.
///
/// # Safety
/// `bk` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bergkit_bergman_trace(bk: *const BergkitBergman) -> f64 {
    bk.as_ref().map_or(f64::NAN, |k| k.0.trace().re)
}

/// Operator norm of `Q^2 - Q` for `Q = h^2 P`; NaN for a NULL handle.
///
/// # Safety
/// `bk` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bergkit_bergman_projection_defect(bk: *const BergkitBergman) -> f64 {
    bk.as_ref().map_or(f64::NAN, |k| k.0.projection_defect())
}

/// # Safety
/// `bk` must be NULL or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn bergkit_bergman_free(bk: *mut BergkitBergman) {
    if !bk.is_null() {
        drop(Box::from_raw(bk));
    }
}

/// Toeplitz matrix of the trigonometric symbol
/// `f(x, y) = sum_t amps[t] exp(2 pi i (m_t x + l_t y))`, with
/// `freqs = [m_0, l_0, m_1, l_1, ...]` and `amps = [re_0, im_0, ...]`.
///
/// # Safety
/// `sp` must be a live handle, `freqs` and `amps` must point to
/// `2 * nterms` values each, `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn bergkit_toeplitz_new(
    sp: *const BergkitSpectrum,
    freqs: *const i32,
    amps: *const f64,
    nterms: usize,
    out: *mut *mut BergkitToeplitz,
) -> BergkitStatus {
    guard(|| {
        nonnull(sp, "sp")?;
        let freqs = read_slice(freqs, 2 * nterms, "freqs")?;
        let amps = read_slice(amps, 2 * nterms, "amps")?;
        let terms: Vec<((i32, i32), Complex64)> = freqs
            .chunks_exact(2)
            .zip(amps.chunks_exact(2))
            .map(|(f, a)| ((f[0], f[1]), Complex64::new(a[0], a[1])))
            .collect();
        let f = SymbolFunction::from_terms(&terms);
        put(out, BergkitToeplitz(lift(toeplitz::build_toeplitz(&f, &(*sp).0))?))
    })
}

/// # Safety
/// `t` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bergkit_toeplitz_dim(t: *const BergkitToeplitz) -> usize {
    t.as_ref().map_or(0, |t| t.0.dim())
}

/// Copy the entries row-major as interleaved `(re, im)` pairs; `len` must
/// be at least `2 dim^2`.
///
/// # Safety
/// `t` must be a live handle and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bergkit_toeplitz_entries(t: *const BergkitToeplitz, buf: *mut f64, len: usize) -> BergkitStatus {
    guard(|| {
        nonnull(t, "t")?;
        let m = &(*t).0.entries;
        let d = m.nrows();
        if len < 2 * d * d {
            return Err(fail(BergkitStatus::InvalidInput, format!("buffer needs {} slots", 2 * d * d)));
        }
        nonnull(buf, "buf")?;
        let out = slice::from_raw_parts_mut(buf, 2 * d * d);
        for i in 0..d {
            for j in 0..d {
                let v = m[(i, j)];
                out[2 * (i * d + j)] = v.re;
                out[2 * (i * d + j) + 1] = v.im;
            }
        }
        Ok(())
    })
}

/// Operator norm; NaN for a NULL handle.
///
/// # Safety
/// `t` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bergkit_toeplitz_op_norm(t: *const BergkitToeplitz) -> f64 {
    t.as_ref().map_or(f64::NAN, |t| t.0.op_norm())
}

/// # Safety
/// `t` must be NULL or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn bergkit_toeplitz_free(t: *mut BergkitToeplitz) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Run a batch config given as JSON text. `command` is one of the CLI
/// command names, or NULL to use the config's own. On `OK` and
/// `CHECKS_FAILED` the summary JSON is written to `summary_out` (owned by
/// the caller, see [`bergkit_string_free`]).
///
/// # Safety
/// `config_json` must be a NUL-terminated string, `command` NULL or one,
/// `summary_out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn bergkit_run(
    config_json: *const c_char,
    command: *const c_char,
    summary_out: *mut *mut c_char,
) -> BergkitStatus {
    guard(|| {
        nonnull(summary_out, "summary_out")?;
        *summary_out = ptr::null_mut();
        let cfg = lift(RunConfig::from_json(read_str(config_json, "config_json")?))?;
        let command = if command.is_null() {
            None
        } else {
            let name = read_str(command, "command")?;
            Some(Command::from_name(name).ok_or_else(|| fail(BergkitStatus::InvalidInput, format!("unknown command {name}")))?)
        };
        let outcome = lift(cli::run(&cfg, command))?;
        let text = lift(outcome.summary.to_json())?;
        *summary_out = CString::new(text).expect("JSON has no NUL").into_raw();
        if outcome.summary.all_passed() {
            Ok(())
        } else {
            Err(fail(BergkitStatus::ChecksFailed, format!("{} checks failed", outcome.summary.failed)))
        }
    })
}
