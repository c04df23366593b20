//! C ABI for fmlab.
//!
//! Handles are opaque and owned by the caller: every `*_parse` or
//! constructor success must be paired with the matching `*_free`. Every
//! fallible function returns an [`FmStatus`]; on failure a message is
//! available from [`fm_last_error_message`] on the same thread until the
//! next failing call. Grid data is node-major: entry `j·e_dim + i` is
//! component `i` at node `j`.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use fmlab::conditions::{check_gap, ParabolicCoefficients};
use fmlab::kernels::Kernel;
use fmlab::linalg::CVector;
use fmlab::multiplier::{ENorm, Grid, GridFunction};
use fmlab::rbound::{estimate_r_bound, OperatorFamily};
use fmlab::sectorial::SectorialOperator;
use fmlab::solver::solve_parabolic;
use fmlab::Error;
use num_complex::Complex64;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ParseError = 3,
    DimensionMismatch = 4,
    SingularResolvent = 5,
    OutsideSector = 6,
    /// A gap or coefficient condition does not hold.
    HypothesisFailed = 7,
    TooLarge = 8,
    Io = 9,
    /// A Rust panic was caught at the boundary.
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FmComplex {
    pub re: f64,
    pub im: f64,
}

impl From<FmComplex> for Complex64 {
    fn from(z: FmComplex) -> Self {
        Complex64::new(z.re, z.im)
    }
}

impl From<Complex64> for FmComplex {
    fn from(z: Complex64) -> Self {
        FmComplex { re: z.re, im: z.im }
    }
}

/// Norms of the parabolic solve; `ratio_c` is NaN when `f = 0`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FmParabolicReport {
    pub residual: f64,
    pub norm_u_prime: f64,
    pub norm_conv_u_prime: f64,
    pub norm_au: f64,
    pub norm_conv_au: f64,
    pub norm_f: f64,
    pub ratio_c: f64,
}

/// Opaque convolution kernel.
pub struct FmKernel(Kernel);

/// Opaque sectorial operator on `C^n`.
pub struct FmOperator(Arc<SectorialOperator>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> FmStatus {
    match e {
        Error::InvalidArgument(_) | Error::ZeroFrequency | Error::NotCausal { .. } => FmStatus::InvalidArgument,
        Error::Parse { .. } => FmStatus::ParseError,
        Error::DimensionMismatch { .. } => FmStatus::DimensionMismatch,
        Error::SingularResolvent { .. } => FmStatus::SingularResolvent,
        Error::OutsideSector { .. } => FmStatus::OutsideSector,
        Error::GapViolated { .. } | Error::ConditionFailed(_) => FmStatus::HypothesisFailed,
        Error::Symbol { source, .. } => status_of(source),
        Error::TooLarge { .. } => FmStatus::TooLarge,
        Error::Io(_) => FmStatus::Io,
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

/// Runs `body`, converting errors and panics into a status.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> FmStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => FmStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            FmStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            let status = status_of(&e);
            set_error(e.to_string());
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal error: {msg}"));
            FmStatus::Panic
        }
    }
}

unsafe fn nonnull<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn c_str<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::Lib(Error::InvalidArgument(format!("{what} is not UTF-8"))))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or NULL. Valid until the
/// next failing call on this thread.
#[no_mangle]
pub extern "C" fn fm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Parses the kernel grammar `zero`, `exp(m=..)`, `gauss(s=..)`, `sum(..)`.
///
/// # Safety
/// `input` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fm_kernel_parse(input: *const c_char, dim: usize, out: *mut *mut FmKernel) -> FmStatus {
    guard(|| {
        let out = out.as_mut().ok_or(Failure::Null("out"))?;
        let k = Kernel::parse(c_str(input, "input")?, dim)?;
        *out = Box::into_raw(Box::new(FmKernel(k)));
        Ok(())
    })
}

/// `k̂(ξ)` for `ξ ∈ R^dim`; `dim` must equal the kernel's dimension.
///
/// # Safety
/// `kernel` must come from [`fm_kernel_parse`]; `xi` must hold `dim` values.
#[no_mangle]
pub unsafe extern "C" fn fm_kernel_transform(
    kernel: *const FmKernel,
    xi: *const f64,
    dim: usize,
    out: *mut FmComplex,
) -> FmStatus {
    guard(|| {
        let k = &nonnull(kernel, "kernel")?.0;
        let out = out.as_mut().ok_or(Failure::Null("out"))?;
        if dim != k.dim() {
            return Err(Error::DimensionMismatch { expected: k.dim(), got: dim }.into());
        }
        *out = k.transform(slice(xi, dim, "xi")?).into();
        Ok(())
    })
}

/// # Safety
/// `kernel` must be NULL or come from [`fm_kernel_parse`], and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fm_kernel_free(kernel: *mut FmKernel) {
    if !kernel.is_null() {
        drop(Box::from_raw(kernel));
    }
}

/// Parses `laplacian(n=, length=, c=)`, `diag(..)`, `scalar(z)`, `identity(n=)`.
///
/// # Safety
/// `input` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fm_operator_parse(input: *const c_char, out: *mut *mut FmOperator) -> FmStatus {
    guard(|| {
        let out = out.as_mut().ok_or(Failure::Null("out"))?;
        let op = SectorialOperator::parse(c_str(input, "input")?)?;
        *out = Box::into_raw(Box::new(FmOperator(Arc::new(op))));
        Ok(())
    })
}

/// Dirichlet Laplacian on `(0, length)` with `n` interior points, plus `shift`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fm_operator_laplacian(
    n: usize,
    length: f64,
    shift: f64,
    out: *mut *mut FmOperator,
) -> FmStatus {
    guard(|| {
        let out = out.as_mut().ok_or(Failure::Null("out"))?;
        let op = SectorialOperator::dirichlet_laplacian(n, length, shift)?;
        *out = Box::into_raw(Box::new(FmOperator(Arc::new(op))));
        Ok(())
    })
}

/// # Safety
/// `op` must come from an operator constructor; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fm_operator_dim(op: *const FmOperator, out: *mut usize) -> FmStatus {
    guard(|| {
        let op = &nonnull(op, "op")?.0;
        *out.as_mut().ok_or(Failure::Null("out"))? = op.dim();
        Ok(())
    })
}

/// `out = (A + λ)^{-1} b` for `λ` in the operator's sector; `n` must equal its dimension.
///
/// # Safety
/// `b` and `out` must hold `n` values each.
#[no_mangle]
pub unsafe extern "C" fn fm_operator_resolvent_apply(
    op: *const FmOperator,
    lambda: FmComplex,
    b: *const FmComplex,
    out: *mut FmComplex,
    n: usize,
) -> FmStatus {
    guard(|| {
        let op = &nonnull(op, "op")?.0;
        if n != op.dim() {
            return Err(Error::DimensionMismatch { expected: op.dim(), got: n }.into());
        }
        let b = CVector::from_iterator(n, slice(b, n, "b")?.iter().map(|&z| Complex64::from(z)));
        let x = op.resolvent_apply(lambda.into(), &b)?;
        for (o, z) in slice_mut(out, n, "out")?.iter_mut().zip(x.iter()) {
            *o = (*z).into();
        }
        Ok(())
    })
}

/// # Safety
/// `op` must be NULL or come from an operator constructor, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fm_operator_free(op: *mut FmOperator) {
    if !op.is_null() {
        drop(Box::from_raw(op));
    }
}

/// Sets `*passes` to 1 when `1/q − 1/p <= 2/d`, else 0.
///
/// # Safety
/// `passes` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fm_check_gap(q: f64, p: f64, d: usize, passes: *mut c_int) -> FmStatus {
    guard(|| {
        let passes = passes.as_mut().ok_or(Failure::Null("passes"))?;
        *passes = c_int::from(check_gap(q, p, d)?);
        Ok(())
    })
}

/// Solves `a0 u' + a1∗u' + b0 Au + b1∗Au = f` on `[−L, L)` with `n_t`
/// points. `f` and `u_out` hold `n_t · dim(A)` values; norms are `L_p`.
/// Returns `HypothesisFailed` when the coefficient condition fails.
///
/// # Safety
/// Handles must be valid; `f` and `u_out` must hold `n_t · dim(A)` values.
#[no_mangle]
pub unsafe extern "C" fn fm_solve_parabolic(
    a0: FmComplex,
    a1: *const FmKernel,
    b0: FmComplex,
    b1: *const FmKernel,
    op: *const FmOperator,
    f: *const FmComplex,
    n_t: usize,
    half_length: f64,
    p: f64,
    u_out: *mut FmComplex,
    report: *mut FmParabolicReport,
) -> FmStatus {
    guard(|| {
        let a1 = nonnull(a1, "a1")?.0.clone();
        let b1 = nonnull(b1, "b1")?.0.clone();
        let op = &nonnull(op, "op")?.0;
        let report = report.as_mut().ok_or(Failure::Null("report"))?;
        let coeffs = ParabolicCoefficients::new(a0.into(), a1, b0.into(), b1)?;
        let grid = Grid::new(1, n_t, half_length)?;
        let len = n_t * op.dim();
        let values = slice(f, len, "f")?.iter().map(|&z| Complex64::from(z)).collect();
        let f = GridFunction::from_values(grid, op.dim(), values)?;
        let (s, r) = solve_parabolic(&coeffs, op, &f, p, &ENorm::Euclidean)?;
        for (o, z) in slice_mut(u_out, len, "u_out")?.iter_mut().zip(s.u.values()) {
            *o = (*z).into();
        }
        *report = FmParabolicReport {
            residual: s.residual,
            norm_u_prime: r.norm_u_prime,
            norm_conv_u_prime: r.norm_conv_u_prime,
            norm_au: r.norm_au,
            norm_conv_au: r.norm_conv_au,
            norm_f: r.norm_f,
            ratio_c: r.ratio_c.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}

/// Monte-Carlo R-bound of `{z_k I}` on `C^n` for the given scalars.
///
/// # Safety
/// `values` must hold `count` entries and `estimate` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fm_rbound_scalars(
    values: *const FmComplex,
    count: usize,
    n: usize,
    p: f64,
    trials: usize,
    draw_size: usize,
    seed: u64,
    estimate: *mut f64,
) -> FmStatus {
    guard(|| {
        let estimate = estimate.as_mut().ok_or(Failure::Null("estimate"))?;
        let zs: Vec<Complex64> = slice(values, count, "values")?.iter().map(|&z| z.into()).collect();
        let family = OperatorFamily::scalars(&zs, n)?;
        *estimate = estimate_r_bound(&family, p, trials, draw_size, seed)?.value;
        Ok(())
    })
}
