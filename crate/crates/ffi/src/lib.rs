//! C interface to the HMPC controller.
//!
//! Every function returns an [`HmpcStatus`]; on failure the message is kept
//! per thread and can be read with [`hmpc_last_error`]. Panics never cross
//! the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use hmpc::config::{Overrides, ScenarioFile};
use hmpc::controller::{Controller, HmpcController as Inner};
use hmpc::harmonic::{Frequency, HarmonicParams};
use hmpc::hmpc::{HmpcConfig, ReferenceParams};
use hmpc::model::{make_ball_and_plate, LtiModel, Vector};
use hmpc::reference::ReferenceSignal;
use hmpc::sim::ControllerSpec;
use hmpc::socp::SolveStatus;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HmpcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Solver = 4,
    Numerical = 5,
    Panic = 6,
}

/// Solver outcome of one step.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HmpcSolveStatus {
    Solved = 0,
    MaxIterations = 1,
    InfeasibleSuspected = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HmpcStepInfo {
    pub objective: f64,
    pub iterations: usize,
    pub solve_time_us: f64,
    pub status: HmpcSolveStatus,
    /// Nonzero when the input comes from the shifted previous solution.
    pub fallback: i32,
}

/// Opaque controller handle.
pub struct HmpcHandle {
    model: LtiModel,
    w: Frequency,
    controller: Inner,
    reference: Option<ReferenceSignal>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).expect("interior nul removed"));
}

fn status_of(e: &hmpc::Error) -> HmpcStatus {
    match e {
        hmpc::Error::Config { .. } => HmpcStatus::Config,
        hmpc::Error::Dimension { .. } | hmpc::Error::InvalidArgument(_) | hmpc::Error::InfeasibleHint { .. } => HmpcStatus::InvalidArgument,
        hmpc::Error::Solver(_) | hmpc::Error::NonConvergence { .. } => HmpcStatus::Solver,
        _ => HmpcStatus::Numerical,
    }
}

fn guard(body: impl FnOnce() -> Result<(), (HmpcStatus, String)>) -> HmpcStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => HmpcStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            HmpcStatus::Panic
        }
    }
}

fn lib_err(e: hmpc::Error) -> (HmpcStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(name: &str) -> (HmpcStatus, String) {
    (HmpcStatus::NullPointer, format!("{name} is null"))
}

unsafe fn slice<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], (HmpcStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn new_handle(model: LtiModel, cons: hmpc::model::OutputConstraint, cfg: &HmpcConfig, reference: Option<ReferenceSignal>) -> Result<HmpcHandle, (HmpcStatus, String)> {
    Ok(HmpcHandle {
        controller: Inner::new(&model, &cons, cfg).map_err(lib_err)?,
        w: cfg.w,
        model,
        reference,
    })
}

unsafe fn emit(out: *mut *mut HmpcHandle, h: HmpcHandle) {
    *out = Box::into_raw(Box::new(h));
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hmpc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty if none. Valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hmpc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Controller for the plate with the default tuning. A reference must be
/// set before the first step.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn hmpc_controller_new_ball_and_plate(out: *mut *mut HmpcHandle) -> HmpcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let (model, cons) = make_ball_and_plate();
        emit(out, new_handle(model, cons, &HmpcConfig::ball_and_plate(), None)?);
        Ok(())
    })
}

/// Controller `label` of a scenario file, with the file's reference.
///
/// # Safety
/// `toml` and `label` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hmpc_controller_from_toml(toml: *const c_char, label: *const c_char, out: *mut *mut HmpcHandle) -> HmpcStatus {
    guard(|| {
        if toml.is_null() {
            return Err(null("toml"));
        }
        if label.is_null() {
            return Err(null("label"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(toml).to_str().map_err(|_| (HmpcStatus::InvalidArgument, "toml is not UTF-8".into()))?;
        let label = CStr::from_ptr(label).to_str().map_err(|_| (HmpcStatus::InvalidArgument, "label is not UTF-8".into()))?;
        let file = ScenarioFile::from_toml(text).map_err(lib_err)?;
        let scenarios = file.resolve(&Overrides::default()).map_err(lib_err)?;
        let s = scenarios
            .into_iter()
            .find(|s| s.label == label)
            .ok_or_else(|| (HmpcStatus::InvalidArgument, format!("no controller labelled `{label}`")))?;
        let ControllerSpec::Hmpc(cfg) = s.scenario.controller.clone() else {
            return Err((HmpcStatus::InvalidArgument, format!("controller `{label}` is not an HMPC controller")));
        };
        let sc = s.scenario;
        emit(out, new_handle(sc.model, sc.constraints, &cfg, Some(sc.reference))?);
        Ok(())
    })
}

/// Frees a handle; null is ignored.
///
/// # Safety
/// `handle` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hmpc_controller_free(handle: *mut HmpcHandle) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// State and input dimensions.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hmpc_controller_dims(handle: *const HmpcHandle, nx: *mut usize, nu: *mut usize) -> HmpcStatus {
    guard(|| {
        let h = handle.as_ref().ok_or_else(|| null("handle"))?;
        if nx.is_null() || nu.is_null() {
            return Err(null("nx or nu"));
        }
        *nx = h.model.nx();
        *nu = h.model.nu();
        Ok(())
    })
}

/// Sets a harmonic reference at the controller frequency from its centre,
/// sine and cosine parameters (`nx` entries each for the state, `nu` for
/// the input). Clears the warm start.
///
/// # Safety
/// Each array must hold the stated number of entries.
#[no_mangle]
pub unsafe extern "C" fn hmpc_controller_set_reference(
    handle: *mut HmpcHandle,
    x_center: *const f64,
    x_sine: *const f64,
    x_cosine: *const f64,
    nx: usize,
    u_center: *const f64,
    u_sine: *const f64,
    u_cosine: *const f64,
    nu: usize,
) -> HmpcStatus {
    guard(|| {
        let h = handle.as_mut().ok_or_else(|| null("handle"))?;
        if nx != h.model.nx() || nu != h.model.nu() {
            return Err((
                HmpcStatus::InvalidArgument,
                format!("expected nx = {}, nu = {}, got {nx}, {nu}", h.model.nx(), h.model.nu()),
            ));
        }
        let v = |p, n, name| slice(p, n, name).map(|s| Vector::from_column_slice(s));
        let x = HarmonicParams::new(v(x_center, nx, "x_center")?, v(x_sine, nx, "x_sine")?, v(x_cosine, nx, "x_cosine")?).map_err(lib_err)?;
        let u = HarmonicParams::new(v(u_center, nu, "u_center")?, v(u_sine, nu, "u_sine")?, v(u_cosine, nu, "u_cosine")?).map_err(lib_err)?;
        h.reference = Some(ReferenceSignal::Harmonic {
            params: ReferenceParams::new(x, u),
            w: h.w,
        });
        h.controller.reset();
        Ok(())
    })
}

/// Computes the input for state `x` at time `t`.
///
/// # Safety
/// `x` must hold `nx` entries, `u` must have room for `nu`, and `info` may
/// be null.
#[no_mangle]
pub unsafe extern "C" fn hmpc_controller_step(
    handle: *mut HmpcHandle,
    t: i64,
    x: *const f64,
    nx: usize,
    u: *mut f64,
    nu: usize,
    info: *mut HmpcStepInfo,
) -> HmpcStatus {
    guard(|| {
        let h = handle.as_mut().ok_or_else(|| null("handle"))?;
        if nx != h.model.nx() || nu != h.model.nu() {
            return Err((
                HmpcStatus::InvalidArgument,
                format!("expected nx = {}, nu = {}, got {nx}, {nu}", h.model.nx(), h.model.nu()),
            ));
        }
        if u.is_null() {
            return Err(null("u"));
        }
        let x = Vector::from_column_slice(slice(x, nx, "x")?);
        if x.iter().any(|v| !v.is_finite()) {
            return Err((HmpcStatus::InvalidArgument, "state has non-finite entries".into()));
        }
        let reference = h.reference.as_ref().ok_or((HmpcStatus::InvalidArgument, "no reference set".to_string()))?;
        let step = h.controller.step(t, &x, reference).map_err(lib_err)?;
        std::slice::from_raw_parts_mut(u, nu).copy_from_slice(step.input.as_slice());
        if !info.is_null() {
            *info = HmpcStepInfo {
                objective: step.objective,
                iterations: step.iterations,
                solve_time_us: step.solve_time.as_secs_f64() * 1e6,
                status: match step.status {
                    SolveStatus::Solved => HmpcSolveStatus::Solved,
                    SolveStatus::MaxIterations => HmpcSolveStatus::MaxIterations,
                    SolveStatus::InfeasibleSuspected => HmpcSolveStatus::InfeasibleSuspected,
                },
                fallback: i32::from(step.fallback),
            };
        }
        Ok(())
    })
}

/// Forgets the warm start.
///
/// # Safety
/// `handle` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hmpc_controller_reset(handle: *mut HmpcHandle) -> HmpcStatus {
    guard(|| {
        handle.as_mut().ok_or_else(|| null("handle"))?.controller.reset();
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    #[test]
    fn null_out_is_reported() {
        let s = unsafe { hmpc_controller_new_ball_and_plate(ptr::null_mut()) };
        assert_eq!(s, HmpcStatus::NullPointer);
        let msg = unsafe { CStr::from_ptr(hmpc_last_error()) };
        assert!(msg.to_str().unwrap().contains("out"));
    }

    #[test]
    fn version_matches_manifest() {
        let v = unsafe { CStr::from_ptr(hmpc_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}
