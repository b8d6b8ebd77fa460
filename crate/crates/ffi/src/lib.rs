//! C interface over the spline fits: flat arrays in, opaque model handles
//! out. Every entry point returns a status code; the per-thread message from
//! `tp_last_error` carries the detail. Handles stay valid until the
//! matching free call and models are immutable, so one model may be shared
//! across threads while distinct fits run concurrently.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tpsmooth::basis::MultiIndex;
use tpsmooth::estimator::{fit, EdgeCase, Problem};
use tpsmooth::variance::{partition_s_n, replicate_s_n, ReplicatedDataset};
use tpsmooth::{Dataset, DomainBox, Error, SplineModel, SplineSetup};

/// Outcome of a call. Numeric values match the CLI's exit codes for the same
/// failure classes, with 1 and 6 reserved for conditions only the C boundary
/// can produce.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum TpStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// Rejected input: bad sizes, duplicate points, unparsable document.
    InvalidInput = 2,
    /// The solve or search failed: singular system, unattainable budget,
    /// non-unisolvent design.
    NumericFailure = 3,
    /// Derivative order outside what the smoothness order supports.
    UnsupportedDerivative = 4,
    /// Model document written by an incompatible version.
    UnsupportedVersion = 5,
    /// A panic was caught at the boundary; state is unchanged.
    InternalError = 6,
}

/// Which budget regime a fit landed in. `Interior` means the constraint was
/// met by the bisection search rather than by a closed-form endpoint.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum TpRegime {
    Interior = 0,
    Interpolant = 1,
    Polynomial = 2,
}

/// Fit diagnostics mirrored from the Rust side. `lambda_star` is 0 for an
/// interpolant and +inf for a pure polynomial fit.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct TpFitInfo {
    pub achieved_j: f64,
    pub achieved_en: f64,
    pub lambda_star: f64,
    /// Penalized solves spent bracketing and bisecting; 0 for direct fits.
    pub iterations: u64,
    pub regime: TpRegime,
    /// True when the unregularized system needed a diagonal fallback.
    pub ridge_fallback: bool,
}

/// Opaque fitted model. Created by the `tp_fit_*` family or
/// `tp_model_from_document`, released with `tp_model_free`.
pub struct TpModel {
    inner: SplineModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let owned = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = owned);
}

fn status_of(err: &Error) -> TpStatus {
    match err {
        Error::UnsupportedDerivative { .. } => TpStatus::UnsupportedDerivative,
        Error::VersionMismatch { .. } => TpStatus::UnsupportedVersion,
        Error::SingularSystem { .. }
        | Error::RootFindFailed { .. }
        | Error::AnchorSelectionFailed { .. }
        | Error::NotUnisolvent { .. } => TpStatus::NumericFailure,
        _ => TpStatus::InvalidInput,
    }
}

fn fail(err: &Error) -> TpStatus {
    set_error(&err.to_string());
    status_of(err)
}

fn fail_null(what: &str) -> TpStatus {
    set_error(&format!("{what} must not be null"));
    TpStatus::NullArgument
}

/// Runs a fallible body behind a panic guard so unwinding never crosses into
/// the caller.
fn guarded(body: impl FnOnce() -> TpStatus) -> TpStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic caught at the C boundary");
            TpStatus::InternalError
        }
    }
}

/// Copies the most recent error message on this thread into `buf` (always
/// NUL-terminated when `cap` > 0, truncating if needed) and returns the full
/// message length in bytes, excluding the terminator. Call with a null `buf`
/// or zero `cap` to query the length alone.
#[no_mangle]
pub unsafe extern "C" fn tp_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string; never freed.
#[no_mangle]
pub extern "C" fn tp_version() -> *const c_char {
    const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

unsafe fn slice_arg<'a>(ptr_: *const f64, len: usize) -> Option<&'a [f64]> {
    if ptr_.is_null() && len > 0 {
        None
    } else if len == 0 {
        Some(&[])
    } else {
        Some(std::slice::from_raw_parts(ptr_, len))
    }
}

/// Builds a dataset plus setup from flat arrays: `points` is row-major
/// `n * dim`, the domain arrays give per-axis bounds.
unsafe fn assemble_inputs(
    dim: usize,
    n: usize,
    points: *const f64,
    y: *const f64,
    m: usize,
    domain_lo: *const f64,
    domain_hi: *const f64,
) -> Result<(Dataset, SplineSetup), TpStatus> {
    let flat = slice_arg(points, n.checked_mul(dim).ok_or_else(|| {
        set_error("point count times dimension overflows");
        TpStatus::InvalidInput
    })?)
    .ok_or_else(|| fail_null("points"))?;
    let y = slice_arg(y, n).ok_or_else(|| fail_null("y"))?;
    let lo = slice_arg(domain_lo, dim).ok_or_else(|| fail_null("domain_lo"))?;
    let hi = slice_arg(domain_hi, dim).ok_or_else(|| fail_null("domain_hi"))?;

    let pts: Vec<Vec<f64>> = flat.chunks_exact(dim).map(<[f64]>::to_vec).collect();
    let data = Dataset::new(pts, y.to_vec()).map_err(|e| fail(&e))?;
    let domain = DomainBox::new(lo.to_vec(), hi.to_vec()).map_err(|e| fail(&e))?;
    let setup = SplineSetup::new(m, domain).map_err(|e| fail(&e))?;
    Ok((data, setup))
}

unsafe fn run_fit(
    dim: usize,
    n: usize,
    points: *const f64,
    y: *const f64,
    m: usize,
    domain_lo: *const f64,
    domain_hi: *const f64,
    problem: Problem,
    out_model: *mut *mut TpModel,
    out_info: *mut TpFitInfo,
) -> TpStatus {
    if out_model.is_null() {
        return fail_null("out_model");
    }
    let (data, setup) = match assemble_inputs(dim, n, points, y, m, domain_lo, domain_hi) {
        Ok(v) => v,
        Err(status) => return status,
    };
    match fit(&data, &problem, &setup) {
        Ok(result) => {
            if !out_info.is_null() {
                *out_info = TpFitInfo {
                    achieved_j: result.achieved_j,
                    achieved_en: result.achieved_en,
                    lambda_star: result.lambda_star,
                    iterations: result.iterations as u64,
                    regime: match result.edge_case {
                        None => TpRegime::Interior,
                        Some(EdgeCase::InterpolantRegime) => TpRegime::Interpolant,
                        Some(EdgeCase::PolynomialRegime) => TpRegime::Polynomial,
                    },
                    ridge_fallback: result.ridge_fallback,
                };
            }
            *out_model = Box::into_raw(Box::new(TpModel { inner: result.model }));
            TpStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Fits with a fixed smoothing weight `lambda` (>= 0; zero interpolates).
/// On success writes a handle to `out_model` and, when `out_info` is
/// non-null, the fit diagnostics.
#[no_mangle]
pub unsafe extern "C" fn tp_fit_fixed_weight(
    dim: usize,
    n: usize,
    points: *const f64,
    y: *const f64,
    m: usize,
    domain_lo: *const f64,
    domain_hi: *const f64,
    lambda: f64,
    out_model: *mut *mut TpModel,
    out_info: *mut TpFitInfo,
) -> TpStatus {
    guarded(|| {
        run_fit(
            dim,
            n,
            points,
            y,
            m,
            domain_lo,
            domain_hi,
            Problem::FixedWeight { lambda },
            out_model,
            out_info,
        )
    })
}

/// Minimizes mean squared residual subject to roughness <= `u_n`.
#[no_mangle]
pub unsafe extern "C" fn tp_fit_roughness_budget(
    dim: usize,
    n: usize,
    points: *const f64,
    y: *const f64,
    m: usize,
    domain_lo: *const f64,
    domain_hi: *const f64,
    u_n: f64,
    out_model: *mut *mut TpModel,
    out_info: *mut TpFitInfo,
) -> TpStatus {
    guarded(|| {
        run_fit(
            dim,
            n,
            points,
            y,
            m,
            domain_lo,
            domain_hi,
            Problem::RoughnessBudget { u_n },
            out_model,
            out_info,
        )
    })
}

/// Minimizes roughness subject to mean squared residual <= `s_n`.
#[no_mangle]
pub unsafe extern "C" fn tp_fit_residual_budget(
    dim: usize,
    n: usize,
    points: *const f64,
    y: *const f64,
    m: usize,
    domain_lo: *const f64,
    domain_hi: *const f64,
    s_n: f64,
    out_model: *mut *mut TpModel,
    out_info: *mut TpFitInfo,
) -> TpStatus {
    guarded(|| {
        run_fit(
            dim,
            n,
            points,
            y,
            m,
            domain_lo,
            domain_hi,
            Problem::ResidualBudget { s_n },
            out_model,
            out_info,
        )
    })
}

/// Evaluates the model at `x` (length `x_len`, which must equal the model's
/// dimension).
#[no_mangle]
pub unsafe extern "C" fn tp_model_eval(
    model: *const TpModel,
    x: *const f64,
    x_len: usize,
    out: *mut f64,
) -> TpStatus {
    guarded(|| {
        let Some(model) = model.as_ref() else { return fail_null("model") };
        if out.is_null() {
            return fail_null("out");
        }
        let Some(x) = slice_arg(x, x_len) else { return fail_null("x") };
        match model.inner.eval(x) {
            Ok(v) => {
                *out = v;
                TpStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Evaluates a partial derivative: `alpha` gives the order per axis and must
/// have the model's dimension.
#[no_mangle]
pub unsafe extern "C" fn tp_model_eval_deriv(
    model: *const TpModel,
    x: *const f64,
    x_len: usize,
    alpha: *const u32,
    alpha_len: usize,
    out: *mut f64,
) -> TpStatus {
    guarded(|| {
        let Some(model) = model.as_ref() else { return fail_null("model") };
        if out.is_null() {
            return fail_null("out");
        }
        let Some(x) = slice_arg(x, x_len) else { return fail_null("x") };
        if alpha.is_null() && alpha_len > 0 {
            return fail_null("alpha");
        }
        let orders = std::slice::from_raw_parts(alpha, alpha_len);
        let alpha = MultiIndex::new(orders.to_vec());
        match model.inner.eval_deriv(x, &alpha) {
            Ok(v) => {
                *out = v;
                TpStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Input dimension of the model; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn tp_model_dim(model: *const TpModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.dim())
}

/// Smoothness order of the model; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn tp_model_order(model: *const TpModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.m())
}

/// Smoothing weight the model was fitted with: 0 for an interpolant, +inf
/// for a pure polynomial fit, NaN for a null handle.
#[no_mangle]
pub unsafe extern "C" fn tp_model_lambda(model: *const TpModel) -> f64 {
    model.as_ref().map_or(f64::NAN, |m| m.inner.lambda())
}

/// Serializes the model to a NUL-terminated document the caller must release
/// with `tp_string_free`.
#[no_mangle]
pub unsafe extern "C" fn tp_model_to_document(
    model: *const TpModel,
    out: *mut *mut c_char,
) -> TpStatus {
    guarded(|| {
        let Some(model) = model.as_ref() else { return fail_null("model") };
        if out.is_null() {
            return fail_null("out");
        }
        match CString::new(model.inner.to_document()) {
            Ok(doc) => {
                *out = doc.into_raw();
                TpStatus::Ok
            }
            Err(_) => {
                set_error("document unexpectedly contains a NUL byte");
                TpStatus::InternalError
            }
        }
    })
}

/// Parses a document produced by `tp_model_to_document`. The text must be
/// NUL-terminated UTF-8.
#[no_mangle]
pub unsafe extern "C" fn tp_model_from_document(
    doc: *const c_char,
    out_model: *mut *mut TpModel,
) -> TpStatus {
    guarded(|| {
        if doc.is_null() {
            return fail_null("doc");
        }
        if out_model.is_null() {
            return fail_null("out_model");
        }
        let text = match CStr::from_ptr(doc).to_str() {
            Ok(t) => t,
            Err(_) => {
                set_error("document is not valid UTF-8");
                return TpStatus::InvalidInput;
            }
        };
        match SplineModel::from_document(text) {
            Ok(inner) => {
                *out_model = Box::into_raw(Box::new(TpModel { inner }));
                TpStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Estimates the residual budget from replicated observations: `reps` is
/// row-major `n * r` with the replicates of each point contiguous. Writes
/// the budget to `out_s_n` and, when `out_means` is non-null, the per-point
/// replicate means (length `n`).
#[no_mangle]
pub unsafe extern "C" fn tp_replicate_budget(
    dim: usize,
    n: usize,
    r: usize,
    points: *const f64,
    reps: *const f64,
    out_s_n: *mut f64,
    out_means: *mut f64,
) -> TpStatus {
    guarded(|| {
        if out_s_n.is_null() {
            return fail_null("out_s_n");
        }
        let Some(flat) = slice_arg(points, n.saturating_mul(dim)) else {
            return fail_null("points");
        };
        let Some(obs) = slice_arg(reps, n.saturating_mul(r)) else {
            return fail_null("reps");
        };
        let pts: Vec<Vec<f64>> = flat.chunks_exact(dim).map(<[f64]>::to_vec).collect();
        let rows: Vec<Vec<f64>> = obs.chunks_exact(r).map(<[f64]>::to_vec).collect();
        let data = match ReplicatedDataset::new(pts, rows) {
            Ok(d) => d,
            Err(e) => return fail(&e),
        };
        match replicate_s_n(&data) {
            Ok(est) => {
                *out_s_n = est.s_n;
                if !out_means.is_null() {
                    for (i, v) in est.collapsed.y().iter().enumerate() {
                        *out_means.add(i) = *v;
                    }
                }
                TpStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Estimates the residual budget without replicates by averaging sample
/// variances over a grid of `cells_per_axis` cells per axis. Optionally
/// reports how many cells held at least two points.
#[no_mangle]
pub unsafe extern "C" fn tp_partition_budget(
    dim: usize,
    n: usize,
    points: *const f64,
    y: *const f64,
    domain_lo: *const f64,
    domain_hi: *const f64,
    cells_per_axis: usize,
    out_s_n: *mut f64,
    out_cells_used: *mut usize,
) -> TpStatus {
    guarded(|| {
        if out_s_n.is_null() {
            return fail_null("out_s_n");
        }
        let Some(flat) = slice_arg(points, n.saturating_mul(dim)) else {
            return fail_null("points");
        };
        let Some(y) = slice_arg(y, n) else { return fail_null("y") };
        let Some(lo) = slice_arg(domain_lo, dim) else { return fail_null("domain_lo") };
        let Some(hi) = slice_arg(domain_hi, dim) else { return fail_null("domain_hi") };
        let pts: Vec<Vec<f64>> = flat.chunks_exact(dim).map(<[f64]>::to_vec).collect();
        let data = match Dataset::new(pts, y.to_vec()) {
            Ok(d) => d,
            Err(e) => return fail(&e),
        };
        let domain = match DomainBox::new(lo.to_vec(), hi.to_vec()) {
            Ok(d) => d,
            Err(e) => return fail(&e),
        };
        match partition_s_n(&data, &domain, cells_per_axis) {
            Ok(est) => {
                *out_s_n = est.s_n;
                if !out_cells_used.is_null() {
                    *out_cells_used = est.cells_used;
                }
                TpStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Releases a model handle. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn tp_model_free(model: *mut TpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Releases a string returned by this library. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn tp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
