//! C ABI over the teleoperation certification and simulation toolkit.
//!
//! Scenarios, certificates and traces are opaque handles created and
//! released through paired constructor/destructor calls. Every fallible
//! function returns a [`TeleopStatus`]; on failure a thread-local message is
//! retrievable via [`teleop_last_error_message`]. Structured results
//! (certificate reports, trace metadata, analysis reports) cross the
//! boundary as JSON strings released with [`teleop_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use teleop_core::analysis::analyze;
use teleop_core::certification::Certificate;
use teleop_core::error::Error;
use teleop_core::simulator::{run, Scenario, SimulationTrace};

/// Result of a C API call.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum TeleopStatus {
    /// Success.
    Ok = 0,
    /// A required pointer argument was null or otherwise unusable.
    NullArgument = 1,
    /// The scenario file or text could not be parsed or validated.
    ParseError = 2,
    /// The simulation left the configured blow-up bound.
    Divergence = 3,
    /// A numerical operation failed.
    NumericalError = 4,
    /// Filesystem failure.
    IoError = 5,
    /// Internal panic caught at the boundary.
    InternalError = 6,
}

/// Opaque simulation scenario.
pub struct TeleopScenario {
    inner: Scenario,
}

/// Opaque gain certificate.
pub struct TeleopCertificate {
    inner: Certificate,
}

/// Opaque simulation trace.
pub struct TeleopTrace {
    inner: SimulationTrace,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> TeleopStatus {
    match err {
        Error::Dimension(_) | Error::Input(_) => TeleopStatus::ParseError,
        Error::Config { .. } => TeleopStatus::ParseError,
        Error::Divergence { .. } => TeleopStatus::Divergence,
        Error::Numerical(_) => TeleopStatus::NumericalError,
        Error::Io { .. } => TeleopStatus::IoError,
    }
}

fn fail(err: Error) -> TeleopStatus {
    let status = status_of(&err);
    set_last_error(err.to_string());
    status
}

fn guarded<F: FnOnce() -> TeleopStatus>(f: F) -> TeleopStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_last_error("internal panic".into());
            TeleopStatus::InternalError
        }
    }
}

unsafe fn read_path<'a>(path: *const c_char) -> Result<&'a str, TeleopStatus> {
    if path.is_null() {
        set_last_error("null path".into());
        return Err(TeleopStatus::NullArgument);
    }
    CStr::from_ptr(path).to_str().map_err(|_| {
        set_last_error("path is not valid UTF-8".into());
        TeleopStatus::ParseError
    })
}

fn emit_string(s: String, out: *mut *mut c_char) -> TeleopStatus {
    match CString::new(s) {
        Ok(c) => {
            unsafe { *out = c.into_raw() };
            TeleopStatus::Ok
        }
        Err(_) => {
            set_last_error("interior NUL in output".into());
            TeleopStatus::InternalError
        }
    }
}

/// Last error message of this thread, or null when no error has occurred.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn teleop_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Load a scenario from a TOML file.
///
/// # Safety
/// `path` must point to a NUL-terminated string and `out` to a writable
/// pointer slot. On success `*out` owns the scenario and must be released
/// with [`teleop_scenario_free`].
#[no_mangle]
pub unsafe extern "C" fn teleop_scenario_load(
    path: *const c_char,
    out: *mut *mut TeleopScenario,
) -> TeleopStatus {
    if out.is_null() {
        return TeleopStatus::NullArgument;
    }
    let path = match read_path(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    guarded(|| match Scenario::load(Path::new(path)) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(TeleopScenario { inner }));
            TeleopStatus::Ok
        }
        Err(e) => fail(e),
    })
}

/// Parse a scenario from TOML text.
///
/// # Safety
/// `text` must point to a NUL-terminated string and `out` to a writable
/// pointer slot; see [`teleop_scenario_load`].
#[no_mangle]
pub unsafe extern "C" fn teleop_scenario_parse(
    text: *const c_char,
    out: *mut *mut TeleopScenario,
) -> TeleopStatus {
    if out.is_null() {
        return TeleopStatus::NullArgument;
    }
    let text = match read_path(text) {
        Ok(t) => t,
        Err(s) => return s,
    };
    guarded(|| match Scenario::from_toml_str(text, "<memory>") {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(TeleopScenario { inner }));
            TeleopStatus::Ok
        }
        Err(e) => fail(e),
    })
}

/// Override the seeds of randomized delay profiles.
///
/// # Safety
/// `sc` must be a live handle from a scenario constructor.
#[no_mangle]
pub unsafe extern "C" fn teleop_scenario_reseed(
    sc: *mut TeleopScenario,
    seed: u64,
) -> TeleopStatus {
    match sc.as_mut() {
        Some(sc) => {
            sc.inner.reseed(seed);
            TeleopStatus::Ok
        }
        None => TeleopStatus::NullArgument,
    }
}

/// Release a scenario handle. Null is ignored.
///
/// # Safety
/// `sc` must have come from a scenario constructor and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn teleop_scenario_free(sc: *mut TeleopScenario) {
    if !sc.is_null() {
        drop(Box::from_raw(sc));
    }
}

/// Certify the scenario's gains against the mode-appropriate stability
/// conditions. A completed certification returns `Ok` even when the verdict
/// is fail; query [`teleop_certificate_passed`].
///
/// # Safety
/// `sc` must be a live scenario handle and `out` a writable pointer slot.
/// On success `*out` must be released with [`teleop_certificate_free`].
#[no_mangle]
pub unsafe extern "C" fn teleop_certify(
    sc: *const TeleopScenario,
    out: *mut *mut TeleopCertificate,
) -> TeleopStatus {
    let Some(sc) = sc.as_ref() else {
        return TeleopStatus::NullArgument;
    };
    if out.is_null() {
        return TeleopStatus::NullArgument;
    }
    guarded(|| match sc.inner.certify() {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(TeleopCertificate { inner }));
            TeleopStatus::Ok
        }
        Err(e) => fail(e),
    })
}

/// Whether every certified inequality holds with nonnegative margin.
///
/// # Safety
/// `cert` must be a live certificate handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn teleop_certificate_passed(
    cert: *const TeleopCertificate,
    out: *mut bool,
) -> TeleopStatus {
    match (cert.as_ref(), out.as_mut()) {
        (Some(c), Some(o)) => {
            *o = c.inner.passed;
            TeleopStatus::Ok
        }
        _ => TeleopStatus::NullArgument,
    }
}

/// Certified exponential decay rate.
///
/// # Safety
/// `cert` must be a live certificate handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn teleop_certificate_kappa(
    cert: *const TeleopCertificate,
    out: *mut f64,
) -> TeleopStatus {
    match (cert.as_ref(), out.as_mut()) {
        (Some(c), Some(o)) => {
            *o = c.inner.derived.kappa;
            TeleopStatus::Ok
        }
        _ => TeleopStatus::NullArgument,
    }
}

/// Attractive-set radius squared for the certified input bound.
///
/// # Safety
/// `cert` must be a live certificate handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn teleop_certificate_attractive_radius_sq(
    cert: *const TeleopCertificate,
    out: *mut f64,
) -> TeleopStatus {
    match (cert.as_ref(), out.as_mut()) {
        (Some(c), Some(o)) => {
            *o = c.inner.derived.s_a_radius_sq;
            TeleopStatus::Ok
        }
        _ => TeleopStatus::NullArgument,
    }
}

/// Full certificate (verdict, named inequalities with margins, derived
/// constants) as a JSON string.
///
/// # Safety
/// `cert` must be a live certificate handle; `out` receives a string to be
/// released with [`teleop_string_free`].
#[no_mangle]
pub unsafe extern "C" fn teleop_certificate_report_json(
    cert: *const TeleopCertificate,
    out: *mut *mut c_char,
) -> TeleopStatus {
    let Some(c) = cert.as_ref() else {
        return TeleopStatus::NullArgument;
    };
    if out.is_null() {
        return TeleopStatus::NullArgument;
    }
    match serde_json::to_string_pretty(&c.inner) {
        Ok(s) => emit_string(s, out),
        Err(e) => {
            set_last_error(e.to_string());
            TeleopStatus::InternalError
        }
    }
}

/// Release a certificate handle. Null is ignored.
///
/// # Safety
/// `cert` must have come from [`teleop_certify`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn teleop_certificate_free(cert: *mut TeleopCertificate) {
    if !cert.is_null() {
        drop(Box::from_raw(cert));
    }
}

/// Integrate the scenario. Returns `Divergence` when the state leaves the
/// blow-up bound; the certificate (pass or fail) is embedded in the trace
/// metadata.
///
/// # Safety
/// `sc` and `cert` must be live handles and `out` a writable pointer slot.
/// On success `*out` must be released with [`teleop_trace_free`].
#[no_mangle]
pub unsafe extern "C" fn teleop_run(
    sc: *const TeleopScenario,
    cert: *const TeleopCertificate,
    out: *mut *mut TeleopTrace,
) -> TeleopStatus {
    let (Some(sc), Some(cert)) = (sc.as_ref(), cert.as_ref()) else {
        return TeleopStatus::NullArgument;
    };
    if out.is_null() {
        return TeleopStatus::NullArgument;
    }
    guarded(|| match run(&sc.inner, &cert.inner) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(TeleopTrace { inner }));
            TeleopStatus::Ok
        }
        Err(e) => fail(e),
    })
}

/// Number of sampled instants in the trace.
///
/// # Safety
/// `trace` must be a live trace handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn teleop_trace_steps(
    trace: *const TeleopTrace,
    out: *mut usize,
) -> TeleopStatus {
    match (trace.as_ref(), out.as_mut()) {
        (Some(t), Some(o)) => {
            *o = t.inner.steps.len();
            TeleopStatus::Ok
        }
        _ => TeleopStatus::NullArgument,
    }
}

/// Master-slave position error norm at the final sample.
///
/// # Safety
/// `trace` must be a live trace handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn teleop_trace_final_error(
    trace: *const TeleopTrace,
    out: *mut f64,
) -> TeleopStatus {
    match (trace.as_ref(), out.as_mut()) {
        (Some(t), Some(o)) => {
            *o = t.inner.final_step().err_norm;
            TeleopStatus::Ok
        }
        _ => TeleopStatus::NullArgument,
    }
}

/// Write the trace as CSV (fixed documented column order, 17 significant
/// digits).
///
/// # Safety
/// `trace` must be a live trace handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn teleop_trace_write_csv(
    trace: *const TeleopTrace,
    path: *const c_char,
) -> TeleopStatus {
    let Some(t) = trace.as_ref() else {
        return TeleopStatus::NullArgument;
    };
    let path = match read_path(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    guarded(|| {
        let file = match std::fs::File::create(path) {
            Ok(f) => f,
            Err(e) => {
                set_last_error(format!("cannot create {path}: {e}"));
                return TeleopStatus::IoError;
            }
        };
        match t.inner.write_csv(std::io::BufWriter::new(file)) {
            Ok(()) => TeleopStatus::Ok,
            Err(e) => {
                set_last_error(e.to_string());
                TeleopStatus::IoError
            }
        }
    })
}

/// Trace metadata (mode, step, seeds, initial Lyapunov value, embedded
/// certificate) as a JSON string.
///
/// # Safety
/// `trace` must be a live trace handle; `out` receives a string to be
/// released with [`teleop_string_free`].
#[no_mangle]
pub unsafe extern "C" fn teleop_trace_metadata_json(
    trace: *const TeleopTrace,
    out: *mut *mut c_char,
) -> TeleopStatus {
    let Some(t) = trace.as_ref() else {
        return TeleopStatus::NullArgument;
    };
    if out.is_null() {
        return TeleopStatus::NullArgument;
    }
    match serde_json::to_string_pretty(&t.inner.meta) {
        Ok(s) => emit_string(s, out),
        Err(e) => {
            set_last_error(e.to_string());
            TeleopStatus::InternalError
        }
    }
}

/// Run every trajectory check (decay bound, set membership, ISS estimate,
/// norm sandwich) at relative slack `eps_num` and return the report as JSON.
///
/// # Safety
/// `trace` and `cert` must be live handles; `out` receives a string to be
/// released with [`teleop_string_free`].
#[no_mangle]
pub unsafe extern "C" fn teleop_analyze_json(
    trace: *const TeleopTrace,
    cert: *const TeleopCertificate,
    eps_num: f64,
    out: *mut *mut c_char,
) -> TeleopStatus {
    let (Some(t), Some(c)) = (trace.as_ref(), cert.as_ref()) else {
        return TeleopStatus::NullArgument;
    };
    if out.is_null() {
        return TeleopStatus::NullArgument;
    }
    guarded(|| match analyze(&t.inner, &c.inner, eps_num) {
        Ok(report) => match serde_json::to_string_pretty(&report) {
            Ok(s) => emit_string(s, out),
            Err(e) => {
                set_last_error(e.to_string());
                TeleopStatus::InternalError
            }
        },
        Err(e) => fail(e),
    })
}

/// Release a trace handle. Null is ignored.
///
/// # Safety
/// `trace` must have come from [`teleop_run`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn teleop_trace_free(trace: *mut TeleopTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must have been returned by one of the `_json` functions and not be
/// freed twice.
#[no_mangle]
pub unsafe extern "C" fn teleop_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
