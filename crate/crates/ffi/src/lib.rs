//! C ABI over `cusp-core`.
//!
//! Models and paths cross the boundary as opaque handles that the caller
//! releases with the matching `*_free` function. Every fallible function
//! returns a [`CuspStatus`]; on failure a message is available from
//! [`cusp_last_error_message`] on the same thread. Panics never unwind into
//! the caller.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cusp_core::estimators::{bayes, mde, mle, Prior};
use cusp_core::likelihood::{limit_constants, log_likelihood_ratio};
use cusp_core::model::{simulate_sde, simulate_wiener, solve_limit_ode, validate_model};
use cusp_core::path::{Path, PathKind};
use cusp_core::stats::ks_distance;
use cusp_core::{CuspError, CuspModel, HFunction, NoiseStream};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CuspStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidModel = 3,
    Domain = 4,
    Shape = 5,
    Numerical = 6,
    Config = 7,
    Io = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// Shape of the regular speed `h`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CuspHKind {
    /// `h(x) = p0`.
    Constant = 0,
    /// `h(x) = p0 + p1 / (1 + x²)`.
    Logistic = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CuspEstimator {
    Mle = 0,
    /// Posterior mean under the uniform prior on Θ.
    Bayes = 1,
    Mde = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CuspLimitConstants {
    pub gamma_sq: f64,
    pub gamma: f64,
    pub hurst: f64,
    pub cusp_integral: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CuspEstimate {
    pub theta_hat: f64,
    pub levels: usize,
    pub evaluations: usize,
    /// Non-zero when several grid nodes attained the optimum.
    pub multiplicity: i32,
}

/// Opaque model handle.
pub struct CuspModelHandle(CuspModel);

/// Opaque path handle.
pub struct CuspPathHandle(Path);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &CuspError) -> CuspStatus {
    match e {
        CuspError::InvalidModel(_) | CuspError::InvalidFunction { .. } => CuspStatus::InvalidModel,
        CuspError::Domain(_) => CuspStatus::Domain,
        CuspError::Shape(_) => CuspStatus::Shape,
        CuspError::Consistency(_)
        | CuspError::Conditioning { .. }
        | CuspError::Divergent(_)
        | CuspError::GridTooSmall { .. }
        | CuspError::FailureBudget { .. } => CuspStatus::Numerical,
        CuspError::Config(_) => CuspStatus::Config,
        CuspError::Io(_) => CuspStatus::Io,
    }
}

struct Fail(CuspStatus, String);

impl From<CuspError> for Fail {
    fn from(e: CuspError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(CuspStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(CuspStatus::InvalidArgument, msg.into())
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> CuspStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CuspStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            CuspStatus::Panic
        }
    }
}

unsafe fn model_ref<'a>(m: *const CuspModelHandle) -> Result<&'a CuspModel, Fail> {
    m.as_ref().map(|h| &h.0).ok_or_else(|| null("model"))
}

unsafe fn path_ref<'a>(p: *const CuspPathHandle) -> Result<&'a Path, Fail> {
    p.as_ref().map(|h| &h.0).ok_or_else(|| null("path"))
}

unsafe fn write_out<T>(out: *mut T, v: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(v);
    Ok(())
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cusp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cusp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a model; `p0` and `p1` parametrize `h` as documented on
/// [`CuspHKind`].
#[no_mangle]
pub unsafe extern "C" fn cusp_model_new(
    a: f64,
    kappa: f64,
    h_kind: CuspHKind,
    p0: f64,
    p1: f64,
    x0: f64,
    horizon: f64,
    theta_lo: f64,
    theta_hi: f64,
    out: *mut *mut CuspModelHandle,
) -> CuspStatus {
    guard(|| {
        let h = match h_kind {
            CuspHKind::Constant => HFunction::Constant { c: p0 },
            CuspHKind::Logistic => HFunction::Logistic { c: p0, d: p1 },
        };
        let m = CuspModel::new(a, kappa, h, x0, horizon, theta_lo, theta_hi)?;
        write_out(out, Box::into_raw(Box::new(CuspModelHandle(m))))
    })
}

/// The baseline model: `κ = 1/4`, `a = 1`, `h ≡ 1`, `x₀ = 0`, `T = 3`,
/// `Θ = (0.5, 1.5)`.
#[no_mangle]
pub unsafe extern "C" fn cusp_model_reference(out: *mut *mut CuspModelHandle) -> CuspStatus {
    guard(|| write_out(out, Box::into_raw(Box::new(CuspModelHandle(CuspModel::reference())))))
}

/// Creates a model from its JSON form, e.g.
/// `{"a":1,"kappa":0.25,"h":{"name":"constant","params":{"c":1}},"x0":0,"T":3,"theta_lo":0.5,"theta_hi":1.5}`.
#[no_mangle]
pub unsafe extern "C" fn cusp_model_from_json(json: *const c_char, out: *mut *mut CuspModelHandle) -> CuspStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json).to_str().map_err(|e| invalid(e.to_string()))?;
        let m: CuspModel = serde_json::from_str(text).map_err(|e| Fail(CuspStatus::Config, e.to_string()))?;
        m.check()?;
        write_out(out, Box::into_raw(Box::new(CuspModelHandle(m))))
    })
}

#[no_mangle]
pub unsafe extern "C" fn cusp_model_free(model: *mut CuspModelHandle) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// `S(θ, x)`.
#[no_mangle]
pub unsafe extern "C" fn cusp_model_drift(
    model: *const CuspModelHandle,
    theta: f64,
    x: f64,
    out: *mut f64,
) -> CuspStatus {
    guard(|| write_out(out, model_ref(model)?.drift(theta, x)))
}

/// `H = κ + 1/2`.
#[no_mangle]
pub unsafe extern "C" fn cusp_model_hurst(model: *const CuspModelHandle, out: *mut f64) -> CuspStatus {
    guard(|| write_out(out, model_ref(model)?.hurst()))
}

/// Checks the model conditions with `h ≥ b` and `|h'| ≤ h1`; writes the
/// number of violated clauses. Their descriptions are available through
/// [`cusp_last_error_message`] when the count is non-zero.
#[no_mangle]
pub unsafe extern "C" fn cusp_model_validate(
    model: *const CuspModelHandle,
    b: f64,
    h1: f64,
    violations: *mut usize,
) -> CuspStatus {
    guard(|| {
        let r = validate_model(model_ref(model)?, b, h1)?;
        if !r.is_ok() {
            set_error(r.summary());
        }
        write_out(violations, r.violations.len())
    })
}

/// `Γ²`, `γ`, `H` and the cusp integral at `θ₀`.
#[no_mangle]
pub unsafe extern "C" fn cusp_limit_constants(
    model: *const CuspModelHandle,
    theta0: f64,
    out: *mut CuspLimitConstants,
) -> CuspStatus {
    guard(|| {
        let c = limit_constants(model_ref(model)?, theta0)?;
        write_out(
            out,
            CuspLimitConstants {
                gamma_sq: c.gamma_sq,
                gamma: c.gamma,
                hurst: c.hurst,
                cusp_integral: c.cusp_integral,
            },
        )
    })
}

/// RK4 solution of the noiseless equation on `n_steps` uniform steps.
#[no_mangle]
pub unsafe extern "C" fn cusp_solve_limit_ode(
    model: *const CuspModelHandle,
    theta: f64,
    n_steps: usize,
    out: *mut *mut CuspPathHandle,
) -> CuspStatus {
    guard(|| {
        let p = solve_limit_ode(model_ref(model)?, theta, n_steps)?;
        write_out(out, Box::into_raw(Box::new(CuspPathHandle(p))))
    })
}

/// Euler–Maruyama observation path with noise from stream
/// `(master_seed, replicate_index)`.
#[no_mangle]
pub unsafe extern "C" fn cusp_simulate_path(
    model: *const CuspModelHandle,
    theta: f64,
    eps: f64,
    n_steps: usize,
    master_seed: u64,
    replicate_index: u64,
    out: *mut *mut CuspPathHandle,
) -> CuspStatus {
    guard(|| {
        let m = model_ref(model)?;
        if n_steps == 0 {
            return Err(invalid("n_steps must be positive"));
        }
        let w = simulate_wiener(NoiseStream::new(master_seed, replicate_index), n_steps, m.horizon);
        let x = simulate_sde(m, theta, eps, &w)?;
        write_out(out, Box::into_raw(Box::new(CuspPathHandle(x))))
    })
}

/// Wraps externally observed data as a path (`len ≥ 2`, `times[0] = 0`,
/// strictly increasing times).
#[no_mangle]
pub unsafe extern "C" fn cusp_path_from_values(
    times: *const f64,
    values: *const f64,
    len: usize,
    out: *mut *mut CuspPathHandle,
) -> CuspStatus {
    guard(|| {
        let t = slice(times, len, "times")?.to_vec();
        let v = slice(values, len, "values")?.to_vec();
        let p = Path::new(t, v, PathKind::Observation)?;
        write_out(out, Box::into_raw(Box::new(CuspPathHandle(p))))
    })
}

#[no_mangle]
pub unsafe extern "C" fn cusp_path_free(path: *mut CuspPathHandle) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}

/// Number of nodes (steps + 1).
#[no_mangle]
pub unsafe extern "C" fn cusp_path_len(path: *const CuspPathHandle, out: *mut usize) -> CuspStatus {
    guard(|| write_out(out, path_ref(path)?.values.len()))
}

unsafe fn copy_into(src: &[f64], buf: *mut f64, capacity: usize) -> Result<(), Fail> {
    if capacity < src.len() {
        return Err(Fail(
            CuspStatus::BufferTooSmall,
            format!("buffer holds {capacity} values, {} needed", src.len()),
        ));
    }
    if buf.is_null() {
        return Err(null("buffer"));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

#[no_mangle]
pub unsafe extern "C" fn cusp_path_values(path: *const CuspPathHandle, buf: *mut f64, capacity: usize) -> CuspStatus {
    guard(|| copy_into(&path_ref(path)?.values, buf, capacity))
}

#[no_mangle]
pub unsafe extern "C" fn cusp_path_times(path: *const CuspPathHandle, buf: *mut f64, capacity: usize) -> CuspStatus {
    guard(|| copy_into(&path_ref(path)?.times, buf, capacity))
}

/// `ln L(θ_num) − ln L(θ_den)` on an observed path.
#[no_mangle]
pub unsafe extern "C" fn cusp_log_likelihood_ratio(
    model: *const CuspModelHandle,
    path: *const CuspPathHandle,
    theta_num: f64,
    theta_den: f64,
    eps: f64,
    out: *mut f64,
) -> CuspStatus {
    guard(|| {
        let v = log_likelihood_ratio(path_ref(path)?, model_ref(model)?, theta_num, theta_den, eps)?;
        write_out(out, v)
    })
}

/// Runs one estimator on an observed path at noise level `eps`.
#[no_mangle]
pub unsafe extern "C" fn cusp_estimate(
    model: *const CuspModelHandle,
    path: *const CuspPathHandle,
    eps: f64,
    estimator: CuspEstimator,
    out: *mut CuspEstimate,
) -> CuspStatus {
    guard(|| {
        let m = model_ref(model)?;
        let p = path_ref(path)?;
        let r = match estimator {
            CuspEstimator::Mle => mle(p, m, eps)?,
            CuspEstimator::Bayes => bayes(p, m, eps, &Prior::uniform(m.theta_lo, m.theta_hi))?,
            CuspEstimator::Mde => mde(p, m, eps)?,
        };
        write_out(
            out,
            CuspEstimate {
                theta_hat: r.theta_hat,
                levels: r.diagnostics.levels,
                evaluations: r.diagnostics.evaluations,
                multiplicity: r.diagnostics.multiplicity as i32,
            },
        )
    })
}

/// Two-sample Kolmogorov–Smirnov distance.
#[no_mangle]
pub unsafe extern "C" fn cusp_ks_distance(
    a: *const f64,
    na: usize,
    b: *const f64,
    nb: usize,
    out: *mut f64,
) -> CuspStatus {
    guard(|| {
        if na == 0 || nb == 0 {
            return Err(invalid("samples must be non-empty"));
        }
        let d = ks_distance(slice(a, na, "a")?, slice(b, nb, "b")?);
        write_out(out, d)
    })
}
