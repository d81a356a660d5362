//! C interface to the `longtail` library.
//!
//! Datasets and fits are opaque handles created and destroyed through this
//! interface. Every fallible call returns an [`LtStatus`]; on failure the
//! message is available from [`lt_last_error`] until the next failing call
//! on the same thread. Strings returned to the caller are released with
//! [`lt_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use longtail::likelihood::{bootstrap_lrt, fit_mle, FitResult};
use longtail::models::gp_endpoint;
use longtail::nonparam::{turnbull_em, EmOptions};
use longtail::{Error, Family, LifetimeRecord, ModelSpec, Params};

/// Result codes. The nonzero error codes match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LtStatus {
    Ok = 0,
    NullPointer = 1,
    InputError = 2,
    NumericError = 3,
    InternalError = 4,
    Panic = 5,
}

/// A set of lifetime records.
pub struct LtDataset {
    records: Vec<LifetimeRecord>,
}

/// A maximum likelihood fit.
pub struct LtFit {
    fit: FitResult,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> LtStatus {
    match e.exit_code() {
        2 => LtStatus::InputError,
        3 => LtStatus::NumericError,
        _ => LtStatus::InternalError,
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard<F: FnOnce() -> Result<(), Error>>(f: F) -> LtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LtStatus::Ok,
        Ok(Err(e)) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("panic inside longtail");
            LtStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, Error> {
    if p.is_null() {
        return Err(Error::input("null string"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Error::input("string is not UTF-8"))
}

fn export(s: String) -> *mut c_char {
    CString::new(s).map(CString::into_raw).unwrap_or(ptr::null_mut())
}

macro_rules! non_null {
    ($($p:expr),+) => {
        if $($p.is_null())||+ {
            set_error("null pointer argument");
            return LtStatus::NullPointer;
        }
    };
}

/// Message of the last failure on this thread; empty if none. The pointer
/// stays valid until the next failing call on the thread.
#[no_mangle]
pub extern "C" fn lt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn lt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Creates an empty dataset.
#[no_mangle]
pub extern "C" fn lt_dataset_new() -> *mut LtDataset {
    Box::into_raw(Box::new(LtDataset { records: Vec::new() }))
}

/// Parses a JSON array of records into a new dataset.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lt_dataset_from_json(json: *const c_char, out: *mut *mut LtDataset) -> LtStatus {
    non_null!(json, out);
    guard(|| {
        let records: Vec<LifetimeRecord> = serde_json::from_str(text(json)?)?;
        for r in &records {
            r.validate()?;
        }
        *out = Box::into_raw(Box::new(LtDataset { records }));
        Ok(())
    })
}

/// # Safety
/// `ds` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn lt_dataset_free(ds: *mut LtDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Number of records.
///
/// # Safety
/// `ds` must be a live dataset or null.
#[no_mangle]
pub unsafe extern "C" fn lt_dataset_len(ds: *const LtDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.records.len())
}

unsafe fn push(ds: *mut LtDataset, r: LifetimeRecord, origin_age: f64) -> LtStatus {
    non_null!(ds);
    guard(|| {
        let r = r.with_origin(origin_age);
        r.validate()?;
        (*ds).records.push(r);
        Ok(())
    })
}

/// Adds a death at excess time `t` observable only within `[a, b]`.
///
/// # Safety
/// `ds` must be a live dataset.
#[no_mangle]
pub unsafe extern "C" fn lt_dataset_push_truncated(ds: *mut LtDataset, t: f64, a: f64, b: f64, origin_age: f64) -> LtStatus {
    push(ds, LifetimeRecord::interval_truncated(t, a, b), origin_age)
}

/// Adds a record left-truncated at `a` and censored at `c`; `t > c` gives a
/// censored record.
///
/// # Safety
/// `ds` must be a live dataset.
#[no_mangle]
pub unsafe extern "C" fn lt_dataset_push_left_truncated(
    ds: *mut LtDataset,
    t: f64,
    a: f64,
    c: f64,
    origin_age: f64,
) -> LtStatus {
    push(ds, LifetimeRecord::left_truncated(t, a, c), origin_age)
}

/// Fits `family` (e.g. `"exponential"`, `"gen_pareto"`) to the exceedances
/// of `threshold`.
///
/// # Safety
/// `ds` must be a live dataset, `family` a NUL-terminated string and `out`
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lt_fit(ds: *const LtDataset, family: *const c_char, threshold: f64, out: *mut *mut LtFit) -> LtStatus {
    non_null!(ds, family, out);
    guard(|| {
        let family: Family = text(family)?.parse()?;
        let fit = fit_mle(&ModelSpec::new(family, threshold), &(*ds).records)?;
        *out = Box::into_raw(Box::new(LtFit { fit }));
        Ok(())
    })
}

/// # Safety
/// `fit` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn lt_fit_free(fit: *mut LtFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Estimate and standard error of parameter `name`; the standard error is
/// NaN when unavailable.
///
/// # Safety
/// Pointers must be valid; `name` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn lt_fit_estimate(fit: *const LtFit, name: *const c_char, value: *mut f64, std_error: *mut f64) -> LtStatus {
    non_null!(fit, name, value, std_error);
    guard(|| {
        let f = &(*fit).fit;
        let n = text(name)?;
        *value = f.estimate(n).ok_or_else(|| Error::input(format!("no parameter '{n}'")))?;
        *std_error = f.std_error(n).unwrap_or(f64::NAN);
        Ok(())
    })
}

/// Maximized log-likelihood, or NaN for a null handle.
///
/// # Safety
/// `fit` must be a live fit or null.
#[no_mangle]
pub unsafe extern "C" fn lt_fit_loglik(fit: *const LtFit) -> f64 {
    fit.as_ref().map_or(f64::NAN, |f| f.fit.loglik)
}

/// 1 if the optimizer converged, 0 otherwise.
///
/// # Safety
/// `fit` must be a live fit or null.
#[no_mangle]
pub unsafe extern "C" fn lt_fit_converged(fit: *const LtFit) -> i32 {
    fit.as_ref().map_or(0, |f| f.fit.converged as i32)
}

/// The fit as JSON; free with [`lt_string_free`].
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lt_fit_to_json(fit: *const LtFit, out: *mut *mut c_char) -> LtStatus {
    non_null!(fit, out);
    guard(|| {
        *out = export(serde_json::to_string(&(*fit).fit)?);
        Ok(())
    })
}

/// Upper endpoint `u - sigma/xi`; infinite for `xi >= 0`.
#[no_mangle]
pub extern "C" fn lt_gp_endpoint(u: f64, sigma: f64, xi: f64) -> f64 {
    gp_endpoint(u, sigma, xi)
}

/// Survivor function at `t` of a parameter set given as JSON, e.g.
/// `{"family": "exponential", "sigma": 1.38}`.
///
/// # Safety
/// `params_json` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn lt_survivor(params_json: *const c_char, t: f64, out: *mut f64) -> LtStatus {
    non_null!(params_json, out);
    guard(|| {
        let p: Params = serde_json::from_str(text(params_json)?)?;
        p.validate()?;
        *out = p.survivor(t);
        Ok(())
    })
}

/// Turnbull's nonparametric estimate as JSON; free with
/// [`lt_string_free`].
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lt_turnbull(ds: *const LtDataset, out: *mut *mut c_char) -> LtStatus {
    non_null!(ds, out);
    guard(|| {
        let est = turnbull_em(&(*ds).records, None, &EmOptions::default())?;
        *out = export(serde_json::to_string(&est)?);
        Ok(())
    })
}

/// Parametric-bootstrap likelihood ratio test of `null` within `alt`.
///
/// # Safety
/// Pointers must be valid; family names NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn lt_bootstrap_lrt(
    ds: *const LtDataset,
    null: *const c_char,
    alt: *const c_char,
    threshold: f64,
    replicates: usize,
    seed: u64,
    statistic: *mut f64,
    p_asymptotic: *mut f64,
    p_bootstrap: *mut f64,
) -> LtStatus {
    non_null!(ds, null, alt, statistic, p_asymptotic, p_bootstrap);
    guard(|| {
        let s0 = ModelSpec::new(text(null)?.parse()?, threshold);
        let s1 = ModelSpec::new(text(alt)?.parse()?, threshold);
        let t = bootstrap_lrt(&s0, &s1, &(*ds).records, replicates, seed)?;
        *statistic = t.statistic;
        *p_asymptotic = t.p_asymptotic;
        *p_bootstrap = t.p_bootstrap.unwrap_or(f64::NAN);
        Ok(())
    })
}
