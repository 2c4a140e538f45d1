//! C interface to `finrank-krr`.
//!
//! Objects are opaque heap handles created by `fk_*_new`-style functions
//! and released with the matching `fk_*_free`. Every fallible call returns
//! an [`FkStatus`]; on failure, [`fk_last_error`] gives a message for the
//! calling thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use finrank_krr::bounds::{self, BoundOptions};
use finrank_krr::kernel::SpectralKernel;
use finrank_krr::regressor::{self, FittedKRR};
use finrank_krr::target::{Dataset, TargetSpec};
use finrank_krr::{exact_error, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    IllPosed = 4,
    Singular = 5,
    Capability = 6,
    Divergent = 7,
    Numerical = 8,
    Misuse = 9,
    Config = 10,
    Io = 11,
    Panic = 12,
}

pub struct FkKernel(Arc<SpectralKernel>);
pub struct FkTarget(TargetSpec);
pub struct FkDataset(Dataset);
pub struct FkFit(FittedKRR);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FkErrorReport {
    pub bias: f64,
    pub variance: f64,
    pub test_error: f64,
    pub finite_rank_error: f64,
    pub fitting_error: f64,
    pub delta_norm: f64,
    pub error_vector_norm: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FkBounds {
    pub bias_lower: f64,
    pub bias_upper: f64,
    pub variance_lower: f64,
    pub variance_upper: f64,
    pub test_lower: f64,
    pub test_upper: f64,
    pub confidence: f64,
    /// Baseline upper bound with τ = 2/N; NaN when it does not apply.
    pub baseline_test_upper: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("NUL bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> FkStatus {
    match e {
        Error::Domain { .. } => FkStatus::Domain,
        Error::Capability(_) => FkStatus::Capability,
        Error::InvalidArgument(_) => FkStatus::InvalidArgument,
        Error::IllPosed(_) => FkStatus::IllPosed,
        Error::Singular(_) => FkStatus::Singular,
        Error::Misuse(_) => FkStatus::Misuse,
        Error::Divergent(_) => FkStatus::Divergent,
        Error::Numerical(_) => FkStatus::Numerical,
        Error::Config(_) | Error::Json(_) => FkStatus::Config,
        Error::Io { .. } => FkStatus::Io,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FkStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            FkStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            FkStatus::Panic
        }
    }
}

unsafe fn get<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> Result<(), Failure> {
    if len < src.len() {
        return Err(Failure::Lib(Error::InvalidArgument(format!(
            "buffer holds {len} values, {} needed",
            src.len()
        ))));
    }
    if src.is_empty() {
        return Ok(());
    }
    if buf.is_null() {
        return Err(Failure::Null("buffer"));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn fk_kernel_tntk(rank: usize, out: *mut *mut FkKernel) -> FkStatus {
    guard(|| put(out, FkKernel(Arc::new(SpectralKernel::tntk(rank)?))))
}

/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn fk_kernel_legendre(rank: usize, out: *mut *mut FkKernel) -> FkStatus {
    guard(|| put(out, FkKernel(Arc::new(SpectralKernel::legendre(rank)?))))
}

/// Rank of the kernel, or 0 for a null handle.
///
/// # Safety
/// `kernel` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fk_kernel_rank(kernel: *const FkKernel) -> usize {
    kernel.as_ref().map_or(0, |k| k.0.rank())
}

/// Copy the eigenvalues into `buf`, which must hold at least the rank.
///
/// # Safety
/// `kernel` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn fk_kernel_eigenvalues(kernel: *const FkKernel, buf: *mut f64, len: usize) -> FkStatus {
    guard(|| copy_out(get(kernel, "kernel")?.0.eigenvalues(), buf, len))
}

/// # Safety
/// `kernel` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fk_kernel_free(kernel: *mut FkKernel) {
    if !kernel.is_null() {
        drop(Box::from_raw(kernel));
    }
}

/// Target with coefficients `gamma[0..len]` on the kernel basis and
/// complement coefficient `gamma_plus`.
///
/// # Safety
/// `kernel` must be a live handle, `gamma` valid for `len` reads.
#[no_mangle]
pub unsafe extern "C" fn fk_target_new(
    kernel: *const FkKernel,
    gamma: *const f64,
    len: usize,
    gamma_plus: f64,
    out: *mut *mut FkTarget,
) -> FkStatus {
    guard(|| {
        let k = get(kernel, "kernel")?;
        let g = slice(gamma, len, "gamma")?.to_vec();
        put(out, FkTarget(TargetSpec::new(k.0.clone(), g, gamma_plus)?))
    })
}

/// `cos θ` on a circle kernel.
///
/// # Safety
/// `kernel` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fk_target_cosine(kernel: *const FkKernel, out: *mut *mut FkTarget) -> FkStatus {
    guard(|| put(out, FkTarget(TargetSpec::tntk_cosine(get(kernel, "kernel")?.0.clone())?)))
}

/// `x²` on a Legendre kernel.
///
/// # Safety
/// `kernel` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fk_target_x_squared(kernel: *const FkKernel, out: *mut *mut FkTarget) -> FkStatus {
    guard(|| put(out, FkTarget(TargetSpec::legendre_x_squared(get(kernel, "kernel")?.0.clone())?)))
}

/// # Safety
/// `target` must be a live handle and `value` writable.
#[no_mangle]
pub unsafe extern "C" fn fk_target_eval(target: *const FkTarget, x: f64, value: *mut f64) -> FkStatus {
    guard(|| {
        let v = get(target, "target")?.0.eval(x)?;
        *value.as_mut().ok_or(Failure::Null("value"))? = v;
        Ok(())
    })
}

/// # Safety
/// `target` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fk_target_free(target: *mut FkTarget) {
    if !target.is_null() {
        drop(Box::from_raw(target));
    }
}

/// Draw `n` inputs and noisy labels from `target`.
///
/// # Safety
/// `target` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fk_dataset_sample(
    target: *const FkTarget,
    n: usize,
    noise_var: f64,
    seed: u64,
    out: *mut *mut FkDataset,
) -> FkStatus {
    guard(|| put(out, FkDataset(get(target, "target")?.0.sample_dataset(n, noise_var, seed)?)))
}

/// Dataset from caller-supplied arrays of length `n`.
///
/// # Safety
/// `inputs` and `labels` must be valid for `n` reads.
#[no_mangle]
pub unsafe extern "C" fn fk_dataset_new(
    inputs: *const f64,
    labels: *const f64,
    n: usize,
    noise_var: f64,
    out: *mut *mut FkDataset,
) -> FkStatus {
    guard(|| {
        let x = slice(inputs, n, "inputs")?.to_vec();
        let y = slice(labels, n, "labels")?.to_vec();
        put(out, FkDataset(Dataset::new(x, y, noise_var, 0)?))
    })
}

/// Number of samples, or 0 for a null handle.
///
/// # Safety
/// `data` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fk_dataset_len(data: *const FkDataset) -> usize {
    data.as_ref().map_or(0, |d| d.0.len())
}

/// # Safety
/// `data` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn fk_dataset_inputs(data: *const FkDataset, buf: *mut f64, len: usize) -> FkStatus {
    guard(|| copy_out(&get(data, "data")?.0.inputs, buf, len))
}

/// # Safety
/// `data` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn fk_dataset_labels(data: *const FkDataset, buf: *mut f64, len: usize) -> FkStatus {
    guard(|| copy_out(&get(data, "data")?.0.labels, buf, len))
}

/// # Safety
/// `data` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fk_dataset_free(data: *mut FkDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Fit kernel ridge regression with ridge `lambda`.
///
/// # Safety
/// `kernel` and `data` must be live handles.
#[no_mangle]
pub unsafe extern "C" fn fk_fit(
    kernel: *const FkKernel,
    data: *const FkDataset,
    lambda: f64,
    out: *mut *mut FkFit,
) -> FkStatus {
    guard(|| {
        let k = get(kernel, "kernel")?;
        let d = get(data, "data")?;
        put(out, FkFit(regressor::fit(&k.0, &d.0, lambda)?))
    })
}

/// # Safety
/// `fit` must be a live handle and `value` writable.
#[no_mangle]
pub unsafe extern "C" fn fk_fit_predict(fit: *const FkFit, x: f64, value: *mut f64) -> FkStatus {
    guard(|| {
        let v = get(fit, "fit")?.0.predict(x)?;
        *value.as_mut().ok_or(Failure::Null("value"))? = v;
        Ok(())
    })
}

/// # Safety
/// `fit` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fk_fit_free(fit: *mut FkFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Exact bias/variance decomposition for the inputs of `data`.
///
/// # Safety
/// `target` and `data` must be live handles, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fk_exact_error(
    target: *const FkTarget,
    data: *const FkDataset,
    lambda: f64,
    noise_var: f64,
    out: *mut FkErrorReport,
) -> FkStatus {
    guard(|| {
        let t = &get(target, "target")?.0;
        let d = &get(data, "data")?.0;
        let state = exact_error::fluctuation_state(t.kernel(), &d.inputs, lambda)?;
        let r = exact_error::error_report(&state, t, noise_var);
        *out.as_mut().ok_or(Failure::Null("out"))? = FkErrorReport {
            bias: r.bias,
            variance: r.variance,
            test_error: r.test_error,
            finite_rank_error: r.finite_rank_error,
            fitting_error: r.fitting_error,
            delta_norm: r.delta_norm,
            error_vector_norm: r.error_vector_norm,
        };
        Ok(())
    })
}

/// Upper and lower bounds on bias, variance and test error. Negative lower
/// bounds are reported as 0.
///
/// # Safety
/// `target` must be a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fk_bounds(
    target: *const FkTarget,
    n: usize,
    lambda: f64,
    noise_var: f64,
    include_residue: bool,
    out: *mut FkBounds,
) -> FkStatus {
    guard(|| {
        let t = &get(target, "target")?.0;
        let opts = BoundOptions { include_residue, ..BoundOptions::default() };
        let r = bounds::bounds_report(t, n, lambda, noise_var, opts)?;
        *out.as_mut().ok_or(Failure::Null("out"))? = FkBounds {
            bias_lower: r.bias_lower,
            bias_upper: r.bias_upper,
            variance_lower: r.variance_lower,
            variance_upper: r.variance_upper,
            test_lower: r.test_lower,
            test_upper: r.test_upper,
            confidence: r.confidence,
            baseline_test_upper: r.bach.map_or(f64::NAN, |b| b.test_upper),
        };
        Ok(())
    })
}
