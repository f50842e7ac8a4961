//! C ABI for the two-stage bias-correction engine.
//!
//! The surface mirrors the library's `correct` entry point: hand in a
//! row-major data matrix and a study/score choice, get back naive and
//! bias-corrected focal estimates with optional standard errors. Handles
//! are opaque; every call that can fail reports a status code and leaves a
//! message retrievable through [`tsbc_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use tsbc::dga::{Dataset, DatasetKind};
use tsbc::harness::{correct_dataset, CorrectOptions, CorrectOutcome};
use tsbc::nalgebra::DMatrix;
use tsbc::study::{ScoreChoice, Study};

/// Success.
pub const TSBC_OK: i32 = 0;
/// Invalid argument (bad study index, score choice, or option value).
pub const TSBC_ERR_USAGE: i32 = 1;
/// Numerical failure during estimation.
pub const TSBC_ERR_NUMERIC: i32 = 2;
/// A required pointer argument was null.
pub const TSBC_ERR_NULL: i32 = 3;
/// A panic was caught at the boundary.
pub const TSBC_ERR_PANIC: i32 = 4;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_last_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap());
}

/// Message for the most recent error on this thread. Borrowed pointer,
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tsbc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version string (static storage).
#[no_mangle]
pub extern "C" fn tsbc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Opaque tuning handle for [`tsbc_correct`].
pub struct TsbcOptions {
    inner: CorrectOptions,
}

/// Fresh options with the library defaults (1000 recursion iterations,
/// a = 3, b = 0.6, 1000 covariance replications, standard errors on).
#[no_mangle]
pub extern "C" fn tsbc_options_new() -> *mut TsbcOptions {
    Box::into_raw(Box::new(TsbcOptions { inner: CorrectOptions::new(ScoreChoice::BB) }))
}

/// Free an options handle. Null is ignored.
///
/// # Safety
/// `opts` must be a pointer returned by [`tsbc_options_new`] that has not
/// been freed already.
#[no_mangle]
pub unsafe extern "C" fn tsbc_options_free(opts: *mut TsbcOptions) {
    if !opts.is_null() {
        drop(Box::from_raw(opts));
    }
}

/// # Safety
/// `opts` must be a live pointer from [`tsbc_options_new`].
#[no_mangle]
pub unsafe extern "C" fn tsbc_options_set_seed(opts: *mut TsbcOptions, seed: u64) -> i32 {
    let Some(o) = opts.as_mut() else {
        set_last_error("null options handle");
        return TSBC_ERR_NULL;
    };
    o.inner.seed = seed;
    TSBC_OK
}

/// Tune the bias-correction recursion: iteration budget, learning-rate
/// constants, and datasets averaged per iteration.
///
/// # Safety
/// `opts` must be a live pointer from [`tsbc_options_new`].
#[no_mangle]
pub unsafe extern "C" fn tsbc_options_set_rm(
    opts: *mut TsbcOptions,
    iterations: usize,
    a: f64,
    b: f64,
    draws_per_iteration: usize,
) -> i32 {
    let Some(o) = opts.as_mut() else {
        set_last_error("null options handle");
        return TSBC_ERR_NULL;
    };
    if iterations < 2 || !(a > 0.0) || !(b > 0.5 && b <= 1.0) || draws_per_iteration < 1 {
        set_last_error("invalid recursion tuning (need iterations >= 2, a > 0, b in (0.5, 1], draws >= 1)");
        return TSBC_ERR_USAGE;
    }
    o.inner.rm_iterations = iterations;
    o.inner.rm_a = a;
    o.inner.rm_b = b;
    o.inner.rm_mc_per_iter = draws_per_iteration;
    TSBC_OK
}

/// Tune the covariance stage: Monte Carlo replications, perturbation
/// constant (0 = study default), and perturbation block count (0 = default).
///
/// # Safety
/// `opts` must be a live pointer from [`tsbc_options_new`].
#[no_mangle]
pub unsafe extern "C" fn tsbc_options_set_acm(
    opts: *mut TsbcOptions,
    replications: usize,
    delta: f64,
    blocks: usize,
) -> i32 {
    let Some(o) = opts.as_mut() else {
        set_last_error("null options handle");
        return TSBC_ERR_NULL;
    };
    if replications < 2 || delta < 0.0 {
        set_last_error("invalid covariance tuning (need replications >= 2, delta >= 0)");
        return TSBC_ERR_USAGE;
    }
    o.inner.acm_replications = replications;
    o.inner.acm_delta = delta;
    o.inner.acm_blocks = blocks;
    TSBC_OK
}

/// # Safety
/// `opts` must be a live pointer from [`tsbc_options_new`].
#[no_mangle]
pub unsafe extern "C" fn tsbc_options_set_compute_se(opts: *mut TsbcOptions, compute_se: bool) -> i32 {
    let Some(o) = opts.as_mut() else {
        set_last_error("null options handle");
        return TSBC_ERR_NULL;
    };
    o.inner.compute_se = compute_se;
    TSBC_OK
}

/// Opaque result handle: naive and bias-corrected focal estimates plus
/// optional standard errors.
pub struct TsbcFit {
    outcome: CorrectOutcome,
    names: Vec<CString>,
}

/// Bias-correct a dataset.
///
/// `data` points at `n_rows * n_cols` doubles in row-major order; `study`
/// is 1, 2, or 3 and fixes the expected column count (10, 15, or 40);
/// `scores` is one of "MM", "BB", "RR", "BR", "EAP" as valid for the study.
/// `opts` may be null for defaults. On failure returns null, sets `*status`
/// (when non-null), and records a message for [`tsbc_last_error`].
///
/// # Safety
/// `data` must point at `n_rows * n_cols` readable doubles; `scores` must
/// be a NUL-terminated string; `opts`, when non-null, must be a live
/// pointer from [`tsbc_options_new`]; `status`, when non-null, must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn tsbc_correct(
    study: i32,
    scores: *const c_char,
    data: *const f64,
    n_rows: usize,
    n_cols: usize,
    opts: *const TsbcOptions,
    status: *mut i32,
) -> *mut TsbcFit {
    let report = |code: i32, status: *mut i32| {
        if !status.is_null() {
            unsafe { *status = code };
        }
    };
    if data.is_null() || scores.is_null() {
        set_last_error("null data or scores pointer");
        report(TSBC_ERR_NULL, status);
        return std::ptr::null_mut();
    }
    if n_rows == 0 || n_cols == 0 {
        set_last_error("empty data matrix");
        report(TSBC_ERR_USAGE, status);
        return std::ptr::null_mut();
    }
    let scores_str = match CStr::from_ptr(scores).to_str() {
        Ok(s) => s.to_string(),
        Err(_) => {
            set_last_error("scores is not valid UTF-8");
            report(TSBC_ERR_USAGE, status);
            return std::ptr::null_mut();
        }
    };
    let slice = std::slice::from_raw_parts(data, n_rows * n_cols);
    let values = DMatrix::from_fn(n_rows, n_cols, |i, j| slice[i * n_cols + j]);

    let options = if opts.is_null() {
        CorrectOptions::new(ScoreChoice::BB)
    } else {
        (*opts).inner.clone()
    };

    let result = catch_unwind(AssertUnwindSafe(|| -> Result<TsbcFit, (i32, String)> {
        let study = Study::from_index(study as u32).map_err(|e| (TSBC_ERR_USAGE, e.to_string()))?;
        if n_cols != study.p() {
            return Err((
                TSBC_ERR_USAGE,
                format!("study {} expects {} columns, got {n_cols}", study.index(), study.p()),
            ));
        }
        let mut options = options;
        options.scores = scores_str;
        let binary = values.iter().all(|&v| v == 0.0 || v == 1.0);
        let y = Dataset {
            values,
            kind: if binary { DatasetKind::Binary } else { DatasetKind::Continuous },
            label: "ffi",
        };
        let outcome = correct_dataset(&y, study, &options).map_err(|e| {
            let code = match e {
                tsbc::Error::Usage(_) => TSBC_ERR_USAGE,
                _ => TSBC_ERR_NUMERIC,
            };
            (code, e.to_string())
        })?;
        let names = outcome
            .focal_names
            .iter()
            .map(|n| CString::new(n.as_str()).unwrap())
            .collect();
        Ok(TsbcFit { outcome, names })
    }));

    match result {
        Ok(Ok(fit)) => {
            report(TSBC_OK, status);
            Box::into_raw(Box::new(fit))
        }
        Ok(Err((code, msg))) => {
            set_last_error(&msg);
            report(code, status);
            std::ptr::null_mut()
        }
        Err(_) => {
            set_last_error("internal panic");
            report(TSBC_ERR_PANIC, status);
            std::ptr::null_mut()
        }
    }
}

/// Number of focal parameters in a fit.
///
/// # Safety
/// `fit` must be a live pointer from [`tsbc_correct`].
#[no_mangle]
pub unsafe extern "C" fn tsbc_fit_focal_len(fit: *const TsbcFit) -> usize {
    fit.as_ref().map_or(0, |f| f.outcome.focal_names.len())
}

/// Name of focal parameter `i`, or null when out of range. Borrowed
/// pointer, valid while the fit handle lives.
///
/// # Safety
/// `fit` must be a live pointer from [`tsbc_correct`].
#[no_mangle]
pub unsafe extern "C" fn tsbc_fit_param_name(fit: *const TsbcFit, i: usize) -> *const c_char {
    match fit.as_ref().and_then(|f| f.names.get(i)) {
        Some(name) => name.as_ptr(),
        None => std::ptr::null(),
    }
}

/// Bias-corrected estimate of focal parameter `i` (NaN when out of range).
///
/// # Safety
/// `fit` must be a live pointer from [`tsbc_correct`].
#[no_mangle]
pub unsafe extern "C" fn tsbc_fit_estimate(fit: *const TsbcFit, i: usize) -> f64 {
    fit.as_ref().and_then(|f| f.outcome.phi_bc.get(i)).copied().unwrap_or(f64::NAN)
}

/// Naive (uncorrected) estimate of focal parameter `i`.
///
/// # Safety
/// `fit` must be a live pointer from [`tsbc_correct`].
#[no_mangle]
pub unsafe extern "C" fn tsbc_fit_naive_estimate(fit: *const TsbcFit, i: usize) -> f64 {
    fit.as_ref().and_then(|f| f.outcome.phi_naive.get(i)).copied().unwrap_or(f64::NAN)
}

/// Standard error of the bias-corrected estimate `i`; NaN when standard
/// errors were not computed or `i` is out of range.
///
/// # Safety
/// `fit` must be a live pointer from [`tsbc_correct`].
#[no_mangle]
pub unsafe extern "C" fn tsbc_fit_se(fit: *const TsbcFit, i: usize) -> f64 {
    fit.as_ref()
        .and_then(|f| f.outcome.ses.as_ref())
        .and_then(|s| s.get(i))
        .copied()
        .unwrap_or(f64::NAN)
}

/// Free a fit handle. Null is ignored.
///
/// # Safety
/// `fit` must be a pointer returned by [`tsbc_correct`] that has not been
/// freed already.
#[no_mangle]
pub unsafe extern "C" fn tsbc_fit_free(fit: *mut TsbcFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tsbc::dga::{self, draw_components};
    use tsbc::study::truth;

    fn study1_row_major(n: usize, seed: u64) -> Vec<f64> {
        let layout = dga::layout_study1();
        let u = draw_components(n, &layout, seed, 1);
        let y = dga::dga_study1(&u, &truth(Study::One).values).unwrap();
        let mut flat = Vec::with_capacity(n * 10);
        for i in 0..n {
            for j in 0..10 {
                flat.push(y.values[(i, j)]);
            }
        }
        flat
    }

    #[test]
    fn correct_round_trip_through_the_c_surface() {
        let n = 150;
        let flat = study1_row_major(n, 99);
        unsafe {
            let opts = tsbc_options_new();
            assert_eq!(tsbc_options_set_rm(opts, 60, 1.0, 0.6, 1), TSBC_OK);
            assert_eq!(tsbc_options_set_acm(opts, 40, 0.0, 0), TSBC_OK);
            assert_eq!(tsbc_options_set_compute_se(opts, true), TSBC_OK);
            assert_eq!(tsbc_options_set_seed(opts, 5), TSBC_OK);
            let scores = CString::new("BB").unwrap();
            let mut status = -1;
            let fit = tsbc_correct(1, scores.as_ptr(), flat.as_ptr(), n, 10, opts, &mut status);
            assert_eq!(status, TSBC_OK, "{:?}", CStr::from_ptr(tsbc_last_error()));
            assert!(!fit.is_null());
            assert_eq!(tsbc_fit_focal_len(fit), 2);
            let name0 = CStr::from_ptr(tsbc_fit_param_name(fit, 0)).to_str().unwrap();
            assert_eq!(name0, "beta");
            let naive = tsbc_fit_naive_estimate(fit, 0);
            let bc = tsbc_fit_estimate(fit, 0);
            assert!(naive.is_finite() && bc.is_finite());
            // correction moves the attenuated slope upward
            assert!(bc > naive);
            assert!(tsbc_fit_se(fit, 0).is_finite());
            assert!(tsbc_fit_se(fit, 99).is_nan());
            tsbc_fit_free(fit);
            tsbc_options_free(opts);
        }
    }

    #[test]
    fn null_and_usage_errors_are_reported() {
        unsafe {
            let mut status = -1;
            let scores = CString::new("BB").unwrap();
            let fit = tsbc_correct(1, scores.as_ptr(), std::ptr::null(), 10, 10, std::ptr::null(), &mut status);
            assert!(fit.is_null());
            assert_eq!(status, TSBC_ERR_NULL);

            let flat = study1_row_major(60, 3);
            let fit = tsbc_correct(9, scores.as_ptr(), flat.as_ptr(), 60, 10, std::ptr::null(), &mut status);
            assert!(fit.is_null());
            assert_eq!(status, TSBC_ERR_USAGE);
            let msg = CStr::from_ptr(tsbc_last_error()).to_str().unwrap();
            assert!(msg.contains("study"), "{msg}");

            // wrong column count
            let fit = tsbc_correct(2, scores.as_ptr(), flat.as_ptr(), 60, 10, std::ptr::null(), &mut status);
            assert!(fit.is_null());
            assert_eq!(status, TSBC_ERR_USAGE);
        }
    }

    #[test]
    fn options_validation() {
        unsafe {
            let opts = tsbc_options_new();
            assert_eq!(tsbc_options_set_rm(opts, 1, 3.0, 0.6, 1), TSBC_ERR_USAGE);
            assert_eq!(tsbc_options_set_rm(opts, 100, 3.0, 1.5, 1), TSBC_ERR_USAGE);
            assert_eq!(tsbc_options_set_acm(opts, 1, 0.0, 0), TSBC_ERR_USAGE);
            assert_eq!(tsbc_options_set_seed(std::ptr::null_mut(), 1), TSBC_ERR_NULL);
            tsbc_options_free(opts);
        }
    }

    #[test]
    fn version_is_non_empty() {
        unsafe {
            let v = CStr::from_ptr(tsbc_version()).to_str().unwrap();
            assert!(!v.is_empty());
        }
    }
}
