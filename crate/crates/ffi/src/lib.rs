//! C interface to `cyclic_wavemap`.
//!
//! Every function returns a `CwmStatus`; on failure the message is kept in a
//! thread-local slot readable through `cwm_last_error_message`. Objects are
//! opaque handles owned by the caller and released with the matching
//! `*_free` function. Panics never cross the boundary.

use cyclic_wavemap::blowup::{certify_blowup, BlowupCertificate, PlanSearch};
use cyclic_wavemap::coeffs::{hill_potential, PeriodicCoefficient};
use cyclic_wavemap::floquet::{monodromy, scan_instability, InstabilityInterval};
use cyclic_wavemap::transform::{build_transform, Holds, ScalarFn, SideVerdict, TransformPair};
use cyclic_wavemap::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CwmStatus {
    Ok = 0,
    NullPointer = 1,
    Validation = 2,
    Numerical = 3,
    NotApplicable = 4,
    Panic = 5,
}

/// Nonlinearity families accepted by `cwm_transform_new`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CwmFamily {
    /// `param` is α.
    Example1 = 0,
    /// `param` is ℓ.
    Example2 = 1,
    Example3U = 2,
    Example3V = 3,
    /// `param` is α, `m` the exponent.
    Example4 = 4,
    /// `param` is the tail exponent p.
    PowerTail = 5,
    Zero = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CwmVerdict {
    Divergent = 0,
    Convergent = 1,
    Inconclusive = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CwmHolds {
    Yes = 0,
    No = 1,
    Undecided = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CwmMonodromy {
    pub b11: f64,
    pub b12: f64,
    pub b21: f64,
    pub b22: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CwmInterval {
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub max_abs_trace: f64,
    pub witness_lambda: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CwmNocVerdict {
    pub forward: CwmVerdict,
    pub backward: CwmVerdict,
    pub holds: CwmHolds,
    pub p_hat_fwd: f64,
    pub p_hat_bwd: f64,
}

pub struct CwmCoefficient(PeriodicCoefficient);

pub struct CwmTransform(TransformPair);

pub struct CwmIntervals(Vec<InstabilityInterval>);

pub struct CwmCertificate(BlowupCertificate);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CwmStatus {
    if e.is_validation() {
        CwmStatus::Validation
    } else if matches!(e, Error::NotApplicable(_)) {
        CwmStatus::NotApplicable
    } else {
        CwmStatus::Numerical
    }
}

struct Fail(CwmStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(CwmStatus::NullPointer, format!("{what} is null"))
}

fn guard(body: impl FnOnce() -> Result<(), Fail>) -> CwmStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => CwmStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            CwmStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(value);
    Ok(())
}

unsafe fn write_handle<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(Box::into_raw(Box::new(value)));
    Ok(())
}

unsafe fn free_handle<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn cwm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// `b(t) = √(1 + ε sin 2πt)`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cwm_coefficient_sqrt_sin(epsilon: f64, out: *mut *mut CwmCoefficient) -> CwmStatus {
    guard(|| write_handle(out, CwmCoefficient(PeriodicCoefficient::sqrt_sin(epsilon)?)))
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cwm_coefficient_constant(c: f64, out: *mut *mut CwmCoefficient) -> CwmStatus {
    guard(|| write_handle(out, CwmCoefficient(PeriodicCoefficient::constant(c)?)))
}

/// Coefficient from `len` equispaced samples over one period.
///
/// # Safety
/// `samples` must point to `len` doubles; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cwm_coefficient_tabulated(
    samples: *const f64,
    len: usize,
    out: *mut *mut CwmCoefficient,
) -> CwmStatus {
    guard(|| {
        if samples.is_null() {
            return Err(null("samples"));
        }
        let data = std::slice::from_raw_parts(samples, len).to_vec();
        write_handle(out, CwmCoefficient(PeriodicCoefficient::tabulated(data)?))
    })
}

/// # Safety
/// `b` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cwm_coefficient_free(b: *mut CwmCoefficient) {
    free_handle(b)
}

/// # Safety
/// `b` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cwm_coefficient_eval(b: *const CwmCoefficient, t: f64, out: *mut f64) -> CwmStatus {
    guard(|| write_out(out, deref(b, "coefficient")?.0.eval(t)))
}

/// Monodromy matrix of the Hill equation at `lambda`.
///
/// # Safety
/// `b` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cwm_monodromy(
    b: *const CwmCoefficient,
    n: u32,
    lambda: f64,
    tol: f64,
    out: *mut CwmMonodromy,
) -> CwmStatus {
    guard(|| {
        let pot = hill_potential(&deref(b, "coefficient")?.0, n)?;
        let m = monodromy(&pot, lambda, tol)?;
        write_out(
            out,
            CwmMonodromy {
                b11: m.b11,
                b12: m.b12,
                b21: m.b21,
                b22: m.b22,
            },
        )
    })
}

/// Instability intervals of the trace on `[lambda_min, lambda_max]`.
///
/// # Safety
/// `b` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cwm_scan_instability(
    b: *const CwmCoefficient,
    n: u32,
    lambda_min: f64,
    lambda_max: f64,
    grid_points: usize,
    tol: f64,
    out: *mut *mut CwmIntervals,
) -> CwmStatus {
    guard(|| {
        let pot = hill_potential(&deref(b, "coefficient")?.0, n)?;
        let found = scan_instability(&pot, (lambda_min, lambda_max), grid_points, tol)?;
        write_handle(out, CwmIntervals(found))
    })
}

/// # Safety
/// `iv` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cwm_intervals_len(iv: *const CwmIntervals) -> usize {
    iv.as_ref().map_or(0, |v| v.0.len())
}

/// # Safety
/// `iv` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cwm_intervals_get(iv: *const CwmIntervals, index: usize, out: *mut CwmInterval) -> CwmStatus {
    guard(|| {
        let list = &deref(iv, "intervals")?.0;
        let i = list.get(index).ok_or_else(|| {
            Fail(CwmStatus::Validation, format!("index {index} out of range (len {})", list.len()))
        })?;
        write_out(
            out,
            CwmInterval {
                lambda_lo: i.lambda_lo,
                lambda_hi: i.lambda_hi,
                max_abs_trace: i.max_abs_trace,
                witness_lambda: i.witness_lambda,
            },
        )
    })
}

/// # Safety
/// `iv` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cwm_intervals_free(iv: *mut CwmIntervals) {
    free_handle(iv)
}

fn family(kind: CwmFamily, param: f64, m: u32) -> Result<ScalarFn, Fail> {
    Ok(match kind {
        CwmFamily::Example1 => ScalarFn::example1(param),
        CwmFamily::Example2 => ScalarFn::example2(param),
        CwmFamily::Example3U => ScalarFn::example3_u(param),
        CwmFamily::Example3V => ScalarFn::example3_v(param),
        CwmFamily::Example4 => {
            if m == 0 {
                return Err(Fail(CwmStatus::Validation, "example4 needs m >= 1".into()));
            }
            ScalarFn::example4(m as usize, param)
        }
        CwmFamily::PowerTail => ScalarFn::power_tail(param),
        CwmFamily::Zero => ScalarFn::zero(),
    })
}

/// Builds `F = exp ∫f`, `G = ∫F` and its inverse for a named family.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cwm_transform_new(
    kind: CwmFamily,
    param: f64,
    m: u32,
    tol: f64,
    out: *mut *mut CwmTransform,
) -> CwmStatus {
    guard(|| write_handle(out, CwmTransform(build_transform(family(kind, param, m)?, tol)?)))
}

/// # Safety
/// `tp` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cwm_transform_free(tp: *mut CwmTransform) {
    free_handle(tp)
}

/// # Safety
/// `tp` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cwm_transform_g(tp: *const CwmTransform, u: f64, out: *mut f64) -> CwmStatus {
    guard(|| write_out(out, deref(tp, "transform")?.0.g(u)?))
}

/// # Safety
/// `tp` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cwm_transform_h(tp: *const CwmTransform, v: f64, out: *mut f64) -> CwmStatus {
    guard(|| write_out(out, deref(tp, "transform")?.0.h(v)?))
}

/// Two-sided divergence test of `∫F` out to `s_max`.
///
/// # Safety
/// `tp` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cwm_noc(tp: *const CwmTransform, s_max: f64, margin: f64, out: *mut CwmNocVerdict) -> CwmStatus {
    guard(|| {
        let v = deref(tp, "transform")?.0.noc(s_max, margin)?;
        let side = |s: SideVerdict| match s {
            SideVerdict::Divergent => CwmVerdict::Divergent,
            SideVerdict::Convergent => CwmVerdict::Convergent,
            SideVerdict::Inconclusive => CwmVerdict::Inconclusive,
        };
        let holds = match v.holds {
            Holds::Yes => CwmHolds::Yes,
            Holds::No => CwmHolds::No,
            Holds::Inconclusive => CwmHolds::Undecided,
        };
        write_out(
            out,
            CwmNocVerdict {
                forward: side(v.forward),
                backward: side(v.backward),
                holds,
                p_hat_fwd: v.p_hat_fwd,
                p_hat_bwd: v.p_hat_bwd,
            },
        )
    })
}

/// Searches for blow-up data of Sobolev size at most `delta`, trying the
/// witness of every interval in `iv`.
///
/// # Safety
/// `tp`, `b` and `iv` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cwm_certify_blowup(
    tp: *const CwmTransform,
    b: *const CwmCoefficient,
    iv: *const CwmIntervals,
    n: u32,
    delta: f64,
    out: *mut *mut CwmCertificate,
) -> CwmStatus {
    guard(|| {
        let lambdas = deref(iv, "intervals")?.0.iter().map(|i| i.witness_lambda).collect();
        let cert = certify_blowup(&PlanSearch::new(n, lambdas), &deref(tp, "transform")?.0, &deref(b, "coefficient")?.0, n, delta)?;
        write_handle(out, CwmCertificate(cert))
    })
}

/// Crossing time of the certificate; fails with `NotApplicable` when the
/// trajectory never reaches the endpoint.
///
/// # Safety
/// `cert` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cwm_certificate_t_star(cert: *const CwmCertificate, out: *mut f64) -> CwmStatus {
    guard(|| {
        let t = deref(cert, "certificate")?
            .0
            .t_star
            .ok_or_else(|| Fail(CwmStatus::NotApplicable, "no crossing time".into()))?;
        write_out(out, t)
    })
}

/// Certificate as a JSON string; release it with `cwm_string_free`.
///
/// # Safety
/// `cert` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cwm_certificate_json(cert: *const CwmCertificate, out: *mut *mut c_char) -> CwmStatus {
    guard(|| {
        let text = serde_json::to_string(&deref(cert, "certificate")?.0.to_json()).expect("json");
        write_out(out, CString::new(text).expect("no nul in json").into_raw())
    })
}

/// # Safety
/// `cert` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cwm_certificate_free(cert: *mut CwmCertificate) {
    free_handle(cert)
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cwm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
