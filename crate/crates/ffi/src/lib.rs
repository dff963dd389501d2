//! C interface to `ergolab`.
//!
//! Every fallible function returns an [`ErgolabStatus`]. On failure the
//! message is kept per thread and can be fetched with
//! [`ergolab_last_error_message`]. Models and histograms are opaque handles
//! owned by the caller and released with their `_free` function.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ergolab::dos::{self, SpectralHistogram};
use ergolab::dynamics::{self, Angle};
use ergolab::error::Error;
use ergolab::lyapunov;
use ergolab::operator::{Distribution, OperatorSpec};
use ergolab::quad::QuadOptions;
use ergolab::{bounds, resonance, thouless};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErgolabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Numerical = 4,
    Panic = 5,
}

/// Opaque operator model.
pub struct ErgolabModel(OperatorSpec);

/// Opaque spectral histogram.
pub struct ErgolabHistogram(SpectralHistogram);

/// Output of an adaptive quadrature.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct ErgolabQuadResult {
    pub value: f64,
    pub err_est: f64,
    pub converged: bool,
    pub divergent: bool,
    pub subdivisions: usize,
}

/// Output of the large-deviation bound.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct ErgolabBoundReport {
    pub log_raw_bound: f64,
    pub raw_bound: f64,
    pub clamped_bound: f64,
    pub vacuous: bool,
}

/// Resonance classification of a coupling.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct ErgolabLambdaClass {
    pub lambda_bar: f64,
    pub distance: f64,
    pub resonant: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(ErgolabStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Domain(_) => ErgolabStatus::Domain,
            Error::Config(_) => ErgolabStatus::InvalidArgument,
            Error::Numerical(_) => ErgolabStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(ErgolabStatus::NullPointer, format!("{what} is null"))
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ErgolabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            ErgolabStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            ErgolabStatus::Panic
        }
    }
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_mut<'a, T>(p: *mut T, n: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

fn angle(x: f64) -> Result<Angle, Failure> {
    Ok(dynamics::reduce_angle(x)?)
}

/// Length in bytes of the last error message on this thread, including the
/// terminating NUL; 0 when the last call succeeded.
#[no_mangle]
pub extern "C" fn ergolab_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(0, |c| c.as_bytes_with_nul().len()))
}

/// Copies the last error message into `buf`, truncating to `len - 1` bytes.
/// Returns the number of bytes written without the NUL, or -1 if `buf` is
/// null or `len` is 0.
///
/// # Safety
/// `buf` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ergolab_last_error_message(buf: *mut c_char, len: usize) -> isize {
    if buf.is_null() || len == 0 {
        return -1;
    }
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_ref().map_or(&[][..], |c| c.as_bytes());
        let n = bytes.len().min(len - 1);
        ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
        *buf.add(n) = 0;
        n as isize
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ergolab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Reduces `x` to `[-π, π)`.
///
/// # Safety
/// `result` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ergolab_reduce_angle(x: f64, result: *mut f64) -> ErgolabStatus {
    guard(|| {
        *out(result, "result")? = angle(x)?.value();
        Ok(())
    })
}

fn new_model(
    spec: impl FnOnce() -> ergolab::error::Result<OperatorSpec>,
    model: *mut *mut ErgolabModel,
) -> ErgolabStatus {
    guard(|| {
        let slot = unsafe { out(model, "model")? };
        *slot = Box::into_raw(Box::new(ErgolabModel(spec()?)));
        Ok(())
    })
}

/// Standard-map potential `V(n) = −cos x_n` along an orbit.
///
/// # Safety
/// `model` must be a valid pointer; the handle written there is released with
/// [`ergolab_model_free`].
#[no_mangle]
pub unsafe extern "C" fn ergolab_model_stdmap(lambda: f64, model: *mut *mut ErgolabModel) -> ErgolabStatus {
    new_model(|| OperatorSpec::stdmap(lambda), model)
}

/// Constant potential.
///
/// # Safety
/// See [`ergolab_model_stdmap`].
#[no_mangle]
pub unsafe extern "C" fn ergolab_model_constant(
    value: f64,
    lambda: f64,
    model: *mut *mut ErgolabModel,
) -> ErgolabStatus {
    new_model(|| OperatorSpec::constant(value, lambda), model)
}

/// Periodic potential repeating `values[0..n]`.
///
/// # Safety
/// `values` must point to `n` doubles; see also [`ergolab_model_stdmap`].
#[no_mangle]
pub unsafe extern "C" fn ergolab_model_periodic(
    values: *const f64,
    n: usize,
    lambda: f64,
    model: *mut *mut ErgolabModel,
) -> ErgolabStatus {
    let values = match slice(values, n, "values") {
        Ok(v) => v.to_vec(),
        Err(f) => return guard(|| Err(f)),
    };
    new_model(|| OperatorSpec::periodic(values, lambda), model)
}

/// i.i.d. potential uniform on `[lo, hi]`.
///
/// # Safety
/// See [`ergolab_model_stdmap`].
#[no_mangle]
pub unsafe extern "C" fn ergolab_model_iid_uniform(
    lo: f64,
    hi: f64,
    lambda: f64,
    model: *mut *mut ErgolabModel,
) -> ErgolabStatus {
    new_model(|| OperatorSpec::iid(Distribution::uniform(lo, hi)?, lambda), model)
}

/// Skew-shift potential on the `dim`-torus with rotation `rotation_alpha`.
///
/// # Safety
/// See [`ergolab_model_stdmap`].
#[no_mangle]
pub unsafe extern "C" fn ergolab_model_skewshift(
    dim: usize,
    rotation_alpha: f64,
    lambda: f64,
    model: *mut *mut ErgolabModel,
) -> ErgolabStatus {
    new_model(|| OperatorSpec::skewshift(dim, rotation_alpha, lambda), model)
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from an `ergolab_model_*` constructor and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn ergolab_model_free(model: *mut ErgolabModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Lyapunov exponent at each of `energies[0..n]`, averaged over `ensemble`
/// orbits of `steps` steps. `stderr_out` may be null.
///
/// # Safety
/// `energies` and `gamma_out` (and `stderr_out` when non-null) must point to
/// `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn ergolab_lyapunov(
    model: *const ErgolabModel,
    energies: *const f64,
    n: usize,
    steps: u64,
    ensemble: u64,
    seed: u64,
    gamma_out: *mut f64,
    stderr_out: *mut f64,
) -> ErgolabStatus {
    guard(|| {
        let spec = &model.as_ref().ok_or_else(|| null("model"))?.0;
        let energies = slice(energies, n, "energies")?;
        let gamma = slice_mut(gamma_out, n, "gamma_out")?;
        let mut se = if stderr_out.is_null() { None } else { Some(slice_mut(stderr_out, n, "stderr_out")?) };
        for (i, &e) in energies.iter().enumerate() {
            let est = lyapunov::lyapunov_avg(spec, e, steps, ensemble, seed)?;
            gamma[i] = est.gamma;
            if let Some(se) = se.as_mut() {
                se[i] = est.stderr;
            }
        }
        Ok(())
    })
}

/// Integrated density of states histogram from `ensemble` windows of `size`
/// sites over `bins` equal bins of `[lo, hi]`.
///
/// # Safety
/// `model` and `hist` must be valid pointers; the handle written to `hist` is
/// released with [`ergolab_histogram_free`].
#[no_mangle]
pub unsafe extern "C" fn ergolab_dos_histogram(
    model: *const ErgolabModel,
    size: usize,
    ensemble: u64,
    lo: f64,
    hi: f64,
    bins: usize,
    seed: u64,
    hist: *mut *mut ErgolabHistogram,
) -> ErgolabStatus {
    guard(|| {
        let spec = &model.as_ref().ok_or_else(|| null("model"))?.0;
        let slot = out(hist, "hist")?;
        if bins == 0 || !(lo < hi) {
            return Err(Failure(ErgolabStatus::InvalidArgument, format!("bad grid [{lo}, {hi}] with {bins} bins")));
        }
        let edges: Vec<f64> = (0..=bins).map(|k| lo + (hi - lo) * k as f64 / bins as f64).collect();
        let h = dos::dos_histogram(spec, size, ensemble, &edges, seed)?;
        *slot = Box::into_raw(Box::new(ErgolabHistogram(h)));
        Ok(())
    })
}

/// Number of bins.
///
/// # Safety
/// `hist` must be a valid handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn ergolab_histogram_bins(hist: *const ErgolabHistogram) -> usize {
    hist.as_ref().map_or(0, |h| h.0.mass().len())
}

/// Copies bin edges (`bins + 1` values) and masses (`bins` values). Either
/// output may be null.
///
/// # Safety
/// Non-null outputs must have room for the stated counts.
#[no_mangle]
pub unsafe extern "C" fn ergolab_histogram_data(
    hist: *const ErgolabHistogram,
    edges_out: *mut f64,
    mass_out: *mut f64,
) -> ErgolabStatus {
    guard(|| {
        let h = &hist.as_ref().ok_or_else(|| null("hist"))?.0;
        if !edges_out.is_null() {
            slice_mut(edges_out, h.edges().len(), "edges_out")?.copy_from_slice(h.edges());
        }
        if !mass_out.is_null() {
            slice_mut(mass_out, h.mass().len(), "mass_out")?.copy_from_slice(h.mass());
        }
        Ok(())
    })
}

/// Logarithmic potential `∫ ln|E − E'| dN(E')`.
///
/// # Safety
/// `hist` and `result` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ergolab_log_potential(
    hist: *const ErgolabHistogram,
    e: f64,
    result: *mut f64,
) -> ErgolabStatus {
    guard(|| {
        let h = &hist.as_ref().ok_or_else(|| null("hist"))?.0;
        *out(result, "result")? = thouless::log_potential(h, e);
        Ok(())
    })
}

/// Lyapunov exponent from the Thouless formula.
///
/// # Safety
/// `hist` and `result` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ergolab_thouless_gamma(
    hist: *const ErgolabHistogram,
    e: f64,
    lambda: f64,
    result: *mut f64,
) -> ErgolabStatus {
    guard(|| {
        let h = &hist.as_ref().ok_or_else(|| null("hist"))?.0;
        *out(result, "result")? = thouless::thouless_gamma(h, e, lambda)?;
        Ok(())
    })
}

/// Releases a histogram. Null is ignored.
///
/// # Safety
/// `hist` must come from [`ergolab_dos_histogram`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ergolab_histogram_free(hist: *mut ErgolabHistogram) {
    if !hist.is_null() {
        drop(Box::from_raw(hist));
    }
}

/// Large-deviation bound on the measure of energies with small exponent.
///
/// # Safety
/// `report` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ergolab_prop31_bound(
    ln_lambda: f64,
    t: f64,
    xi: f64,
    delta: f64,
    g: f64,
    report: *mut ErgolabBoundReport,
) -> ErgolabStatus {
    guard(|| {
        let slot = out(report, "report")?;
        let r = bounds::prop31_bound(bounds::Prop31Inputs { ln_lambda, t, xi, delta, g })?;
        *slot = ErgolabBoundReport {
            log_raw_bound: r.log_raw_bound,
            raw_bound: r.raw_bound,
            clamped_bound: r.clamped_bound,
            vacuous: r.vacuous,
        };
        Ok(())
    })
}

/// Resonance integral `K(λ, b, E, α)` with absolute tolerance `tol` (0 selects
/// the default). A divergent integral is reported through
/// `result->divergent` with status `Ok`.
///
/// # Safety
/// `result` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ergolab_k_integral(
    lambda: f64,
    b: f64,
    e: f64,
    alpha: f64,
    tol: f64,
    result: *mut ErgolabQuadResult,
) -> ErgolabStatus {
    guard(|| {
        let slot = out(result, "result")?;
        let mut opts = QuadOptions::default();
        if tol != 0.0 {
            opts.tol = tol;
        }
        let q = resonance::k_integral(lambda, angle(b)?, e, alpha, &opts)?;
        *slot = ErgolabQuadResult {
            value: q.value,
            err_est: q.err_est,
            converged: q.converged,
            divergent: q.divergent,
            subdivisions: q.subdivisions,
        };
        Ok(())
    })
}

/// Classifies `lambda` as resonant when `min_o |λ − o| < λ^-delta_exp` modulo
/// 2π, over `offsets[0..n]` (`n = 0` selects `{0, π}`).
///
/// # Safety
/// `offsets` must point to `n` doubles and `result` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ergolab_classify_lambda(
    lambda: f64,
    delta_exp: f64,
    offsets: *const f64,
    n: usize,
    result: *mut ErgolabLambdaClass,
) -> ErgolabStatus {
    guard(|| {
        let slot = out(result, "result")?;
        let offsets = if n == 0 {
            resonance::default_offsets()
        } else {
            slice(offsets, n, "offsets")?.iter().map(|&o| angle(o)).collect::<Result<Vec<_>, _>>()?
        };
        let c = resonance::classify_lambda(lambda, delta_exp, &offsets)?;
        *slot = ErgolabLambdaClass { lambda_bar: c.lambda_bar.value(), distance: c.distance, resonant: c.resonant };
        Ok(())
    })
}
