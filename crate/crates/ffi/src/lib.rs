//! C ABI over `multiscale_mle`.
//!
//! Every function returns an [`MsmleStatus`]; on failure the message is
//! available from [`msmle_last_error`] on the same thread. Handles are opaque
//! and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use multiscale_mle::homogenize::{asymptotic_limits, solve_cell_problem, SignChoice};
use multiscale_mle::likelihood::{mle_linear, mle_scan, LikelihoodKind};
use multiscale_mle::models::{CatalogEntry, CosineSeries, ModelFamily};
use multiscale_mle::simulator::{
    simulate_multiscale, stationary_initial_state, subsample, Path, SimSettings,
};
use multiscale_mle::Error;

/// Status codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsmleStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Invalid parameter, unknown family or unsupported request.
    InvalidArgument = 2,
    /// Simulation blow-up, degenerate quadrature or similar.
    Numerical = 3,
    /// Caller-provided buffer is too small.
    BufferTooSmall = 4,
    /// Internal panic caught at the boundary.
    Panic = 99,
}

/// Catalog families.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsmleFamily {
    AvgOuModulated = 0,
    LangevinHighFriction = 1,
    MultiscalePotential1D = 2,
}

impl From<MsmleFamily> for ModelFamily {
    fn from(f: MsmleFamily) -> Self {
        match f {
            MsmleFamily::AvgOuModulated => ModelFamily::AvgOuModulated,
            MsmleFamily::LangevinHighFriction => ModelFamily::LangevinHighFriction,
            MsmleFamily::MultiscalePotential1D => ModelFamily::MultiscalePotential1D,
        }
    }
}

/// A catalog model: fast/slow system plus its coarse model.
pub struct MsmleModel {
    entry: CatalogEntry,
}

/// A simulated slow trajectory.
pub struct MsmlePath {
    path: Path,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> MsmleStatus {
    match err.exit_code() {
        2 => MsmleStatus::InvalidArgument,
        _ => MsmleStatus::Numerical,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), MsmleStatus>) -> MsmleStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MsmleStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            MsmleStatus::Panic
        }
    }
}

fn fail(err: Error) -> MsmleStatus {
    set_error(&err.to_string());
    status_of(&err)
}

fn null(name: &str) -> MsmleStatus {
    set_error(&format!("`{name}` is null"));
    MsmleStatus::NullPointer
}

unsafe fn coeffs<'a>(p: *const f64, n: usize) -> Result<&'a [f64], MsmleStatus> {
    if n == 0 {
        Ok(&[])
    } else if p.is_null() {
        Err(null("p_coeffs"))
    } else {
        Ok(slice::from_raw_parts(p, n))
    }
}

unsafe fn write<T>(out: *mut T, value: T, name: &str) -> Result<(), MsmleStatus> {
    if out.is_null() {
        return Err(null(name));
    }
    out.write(value);
    Ok(())
}

unsafe fn model_ref<'a>(m: *const MsmleModel) -> Result<&'a MsmleModel, MsmleStatus> {
    m.as_ref().ok_or_else(|| null("model"))
}

unsafe fn path_ref<'a>(p: *const MsmlePath) -> Result<&'a MsmlePath, MsmleStatus> {
    p.as_ref().ok_or_else(|| null("path"))
}

/// Message of the last failure on this thread. Valid until the next failing
/// call on the same thread; never null.
#[no_mangle]
pub extern "C" fn msmle_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn msmle_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a catalog model. `p_coeffs` (`a_1..a_n` of `Σ a_k cos(2πky)`) is
/// only read for `MultiscalePotential1D`. `beta` is the inverse temperature.
///
/// # Safety
/// `p_coeffs` must point to `n_coeffs` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn msmle_model_new(
    family: MsmleFamily,
    theta0: f64,
    epsilon: f64,
    beta: f64,
    p_coeffs: *const f64,
    n_coeffs: usize,
    out: *mut *mut MsmleModel,
) -> MsmleStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let family: ModelFamily = family.into();
        let p = match family {
            ModelFamily::MultiscalePotential1D => {
                Some(CosineSeries::new(coeffs(p_coeffs, n_coeffs)?.to_vec()))
            }
            _ => None,
        };
        let entry = CatalogEntry::build(family, theta0, epsilon, beta, p).map_err(fail)?;
        out.write(Box::into_raw(Box::new(MsmleModel { entry })));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`msmle_model_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn msmle_model_free(model: *mut MsmleModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Homogenized coefficient `K` (1 for the averaging and Langevin entries)
/// and the coarse diffusion constant.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn msmle_model_coefficients(
    model: *const MsmleModel,
    out_k: *mut f64,
    out_diffusion: *mut f64,
) -> MsmleStatus {
    guard(|| {
        let m = model_ref(model)?;
        write(out_k, m.entry.homogenized_k, "out_k")?;
        write(out_diffusion, m.entry.coarse_diffusion(), "out_diffusion")
    })
}

/// Periodic cell problem for `p(y) = Σ a_k cos(2πky)`.
///
/// # Safety
/// `p_coeffs` must point to `n_coeffs` doubles; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn msmle_cell_problem(
    p_coeffs: *const f64,
    n_coeffs: usize,
    beta: f64,
    n_nodes: usize,
    out_k: *mut f64,
    out_z_p: *mut f64,
    out_z_hat_p: *mut f64,
) -> MsmleStatus {
    guard(|| {
        let p = CosineSeries::new(coeffs(p_coeffs, n_coeffs)?.to_vec());
        let cell = solve_cell_problem(&p, beta, n_nodes).map_err(fail)?;
        write(out_k, cell.k, "out_k")?;
        write(out_z_p, cell.z_p, "out_z_p")?;
        write(out_z_hat_p, cell.z_hat_p, "out_z_hat_p")
    })
}

/// Simulates a stationary trajectory of length `t_final` at
/// `dt = ε²/r` (homogenization) or `ε/r` (averaging).
///
/// # Safety
/// `model` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn msmle_simulate(
    model: *const MsmleModel,
    t_final: f64,
    resolution_factor: u32,
    seed: u64,
    out: *mut *mut MsmlePath,
) -> MsmleStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let ms = &m.entry.multiscale;
        let (x0, y0) = stationary_initial_state(ms, &m.entry.coarse, seed).map_err(fail)?;
        let path = simulate_multiscale(ms, SimSettings::new(t_final, resolution_factor), x0, y0, seed)
            .map_err(fail)?;
        out.write(Box::into_raw(Box::new(MsmlePath { path })));
        Ok(())
    })
}

/// # Safety
/// `path` must come from [`msmle_simulate`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn msmle_path_free(path: *mut MsmlePath) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}

/// Number of stored points and the integrator step.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn msmle_path_info(
    path: *const MsmlePath,
    out_len: *mut usize,
    out_dt: *mut f64,
) -> MsmleStatus {
    guard(|| {
        let p = path_ref(path)?;
        write(out_len, p.path.len(), "out_len")?;
        write(out_dt, p.path.dt, "out_dt")
    })
}

/// Copies the slow variable into `buf` (capacity `len`).
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn msmle_path_copy_slow(
    path: *const MsmlePath,
    buf: *mut f64,
    len: usize,
) -> MsmleStatus {
    guard(|| {
        let p = path_ref(path)?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let n = p.path.len();
        if len < n {
            set_error(&format!("buffer holds {len} values, path has {n}"));
            return Err(MsmleStatus::BufferTooSmall);
        }
        ptr::copy_nonoverlapping(p.path.slow.as_ptr(), buf, n);
        Ok(())
    })
}

/// Closed-form drift estimate. `delta <= 0` uses every point; otherwise the
/// path is subsampled at `delta` first. `out_degenerate` may be null.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn msmle_mle_linear(
    model: *const MsmleModel,
    path: *const MsmlePath,
    delta: f64,
    out_theta: *mut f64,
    out_degenerate: *mut bool,
) -> MsmleStatus {
    guard(|| {
        let m = model_ref(model)?;
        let p = path_ref(path)?;
        let est = if delta > 0.0 {
            let s = subsample(&p.path, delta).map_err(fail)?;
            mle_linear(&s, &m.entry.coarse)
        } else {
            mle_linear(&p.path, &m.entry.coarse)
        }
        .map_err(fail)?;
        write(out_theta, est.theta_hat, "out_theta")?;
        if !out_degenerate.is_null() {
            out_degenerate.write(est.degenerate);
        }
        Ok(())
    })
}

/// Maximizer of the modified likelihood on data subsampled at `delta`
/// (`delta <= 0`: every point).
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn msmle_mle_modified(
    model: *const MsmleModel,
    path: *const MsmlePath,
    delta: f64,
    out_theta: *mut f64,
) -> MsmleStatus {
    guard(|| {
        let m = model_ref(model)?;
        let p = path_ref(path)?;
        let step = if delta > 0.0 { delta } else { p.path.dt };
        let s = subsample(&p.path, step).map_err(fail)?;
        let est = mle_scan(&s, &m.entry.coarse, LikelihoodKind::Modified).map_err(fail)?;
        write(out_theta, est.theta_hat, "out_theta")
    })
}

/// Closed-form bias term at `theta`: `out_magnitude` is unsigned,
/// `out_formula_value` carries the closed form's own sign (0 for averaging).
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn msmle_e_infinity(
    model: *const MsmleModel,
    theta: f64,
    out_magnitude: *mut f64,
    out_formula_value: *mut f64,
) -> MsmleStatus {
    guard(|| {
        let m = model_ref(model)?;
        let lim = asymptotic_limits(&m.entry, m.entry.theta0, SignChoice::Formula).map_err(fail)?;
        write(out_magnitude, lim.e_infinity_magnitude(theta).map_err(fail)?, "out_magnitude")?;
        write(out_formula_value, lim.e_infinity(theta).map_err(fail)?, "out_formula_value")
    })
}
