//! C ABI for the cookie-walk library.
//!
//! Laws, walks and oracle instances cross the boundary as JSON strings in
//! the same layout as the config files. Objects are opaque handles owned by
//! the caller and released with the matching `*_free`. Every fallible call
//! returns a [`CwStatus`]; on failure, [`cw_last_error`] describes the error
//! on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use cookie_walk::walk::replica;
use cookie_walk::{delta, solve_exit, validate_assumptions, EnvironmentLaw, Error, LawSpec, OracleInstance};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    InvalidArgument = 4,
    StateBudgetExceeded = 5,
    SingularSystem = 6,
    Panic = 7,
}

/// An environment law.
pub struct CwLaw {
    law: Arc<EnvironmentLaw>,
}

/// One walk replica together with its realized environment.
pub struct CwWalk {
    state: cookie_walk::WalkState,
    env: cookie_walk::RealizedEnvironment,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CwExitAnalysis {
    pub p_up: f64,
    pub expected_exit_position: f64,
    pub expected_consumed_drift: f64,
    pub expected_exit_time: f64,
    pub optional_stopping_residual: f64,
    pub solve_residual: f64,
    pub transient_states: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CwLedger {
    pub steps: u64,
    pub position: i64,
    /// Drift consumed in total.
    pub consumed_drift: f64,
    /// Drift consumed at sites `>= 0`.
    pub consumed_drift_right: f64,
    /// `X_n - D_n`.
    pub martingale: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("no interior nul"));
}

fn status_of(err: &Error) -> CwStatus {
    match err {
        Error::StateBudgetExceeded { .. } => CwStatus::StateBudgetExceeded,
        Error::SingularSystem(_) => CwStatus::SingularSystem,
        Error::Json(_) => CwStatus::ParseError,
        _ => CwStatus::InvalidArgument,
    }
}

/// Runs `body`, turning errors and panics into a status plus message.
fn guard(body: impl FnOnce() -> Result<(), (CwStatus, String)>) -> CwStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => CwStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CwStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (CwStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (CwStatus, String) {
    (CwStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `s` must be null or point to a nul-terminated string.
unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, (CwStatus, String)> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|e| (CwStatus::InvalidUtf8, format!("{what}: {e}")))
}

/// Message for the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cw_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses a law from its JSON form and stores a new handle in `*out`.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cw_law_from_json(json: *const c_char, out: *mut *mut CwLaw) -> CwStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = read_str(json, "json")?;
        let spec: LawSpec = serde_json::from_str(text).map_err(|e| (CwStatus::ParseError, e.to_string()))?;
        let law = EnvironmentLaw::from_spec(spec).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(CwLaw { law: Arc::new(law) }));
        Ok(())
    })
}

/// # Safety
/// `law` must be null or a handle from [`cw_law_from_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cw_law_free(law: *mut CwLaw) {
    if !law.is_null() {
        drop(Box::from_raw(law));
    }
}

/// Expected total cookie drift per site.
///
/// # Safety
/// `law` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cw_law_delta(law: *const CwLaw, out: *mut f64) -> CwStatus {
    guard(|| {
        let law = law.as_ref().ok_or_else(|| null("law"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = delta(&law.law);
        Ok(())
    })
}

/// Runs the assumption checks. `*all_passed` receives 1 or 0; when
/// `report` is non-null it receives a newly allocated text report to be
/// released with [`cw_string_free`].
///
/// # Safety
/// `law` must be a live handle, `all_passed` a valid pointer and `report`
/// null or a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cw_law_validate(law: *const CwLaw, all_passed: *mut i32, report: *mut *mut c_char) -> CwStatus {
    guard(|| {
        let law = law.as_ref().ok_or_else(|| null("law"))?;
        let all_passed = all_passed.as_mut().ok_or_else(|| null("all_passed"))?;
        let r = validate_assumptions(&law.law);
        *all_passed = r.all_passed() as i32;
        if let Some(report) = report.as_mut() {
            *report = CString::new(r.to_string().replace('\0', " "))
                .expect("no interior nul")
                .into_raw();
        }
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cw_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Solves an oracle instance given as JSON
/// (`{"interval": [x, z], "start": y, "background": ..., "stacks": ...}`).
///
/// # Safety
/// `json` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cw_oracle_solve_json(json: *const c_char, out: *mut CwExitAnalysis) -> CwStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let text = read_str(json, "json")?;
        let instance: OracleInstance =
            serde_json::from_str(text).map_err(|e| (CwStatus::ParseError, e.to_string()))?;
        let a = solve_exit(&instance).map_err(lib_err)?;
        *out = CwExitAnalysis {
            p_up: a.p_up,
            expected_exit_position: a.expected_exit_position,
            expected_consumed_drift: a.expected_consumed_drift,
            expected_exit_time: a.expected_exit_time,
            optional_stopping_residual: a.optional_stopping_residual,
            solve_residual: a.solve_residual,
            transient_states: a.transient_states,
        };
        Ok(())
    })
}

/// Starts replica `replica_index` of `law` at `start`. The walk keeps its own
/// reference to the law, which may be freed afterwards.
///
/// # Safety
/// `law` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cw_walk_new(law: *const CwLaw, start: i64, replica_index: u64, out: *mut *mut CwWalk) -> CwStatus {
    guard(|| {
        let law = law.as_ref().ok_or_else(|| null("law"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let (state, env) = replica(&law.law, start, replica_index);
        *out = Box::into_raw(Box::new(CwWalk { state, env }));
        Ok(())
    })
}

/// Advances the walk by `steps` steps.
///
/// # Safety
/// `walk` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cw_walk_step(walk: *mut CwWalk, steps: u64) -> CwStatus {
    guard(|| {
        let w = walk.as_mut().ok_or_else(|| null("walk"))?;
        for _ in 0..steps {
            w.state.step(&mut w.env);
        }
        Ok(())
    })
}

/// # Safety
/// `walk` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cw_walk_position(walk: *const CwWalk, out: *mut i64) -> CwStatus {
    guard(|| {
        let w = walk.as_ref().ok_or_else(|| null("walk"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = w.state.position();
        Ok(())
    })
}

/// # Safety
/// `walk` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cw_walk_ledger(walk: *const CwWalk, out: *mut CwLedger) -> CwStatus {
    guard(|| {
        let w = walk.as_ref().ok_or_else(|| null("walk"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let ledger = w.state.ledger();
        *out = CwLedger {
            steps: w.state.steps(),
            position: w.state.position(),
            consumed_drift: ledger.total(),
            consumed_drift_right: ledger.total_right(),
            martingale: ledger.martingale(),
        };
        Ok(())
    })
}

/// # Safety
/// `walk` must be null or a handle from [`cw_walk_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cw_walk_free(walk: *mut CwWalk) {
    if !walk.is_null() {
        drop(Box::from_raw(walk));
    }
}
