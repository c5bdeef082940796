//! C ABI for the voltgame toolkit.
//!
//! Networks live behind an opaque [`VgNetwork`] handle created from network
//! JSON and released with [`vg_network_free`]. Every fallible call returns a
//! status code; on failure [`vg_last_error_message`] describes the error on
//! the calling thread. Matrices are written row-major into caller buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::DVector;
use voltgame::acflow::{closed_loop_ac, SweepOptions};
use voltgame::controls::{ControlSpec, DroopParams, LocalControl};
use voltgame::dynamics::{actuator_model, condition_report, run, Law, RunOptions, Verdict};
use voltgame::equilibrium::posa_report;
use voltgame::io::{Case, NetworkFile};
use voltgame::sensitivity::{build_sensitivity, x_inverse_analytic};
use voltgame::Error;

pub const VG_OK: i32 = 0;
pub const VG_ERR_NULL: i32 = 1;
pub const VG_ERR_UTF8: i32 = 2;
pub const VG_ERR_PARSE: i32 = 3;
pub const VG_ERR_TOPOLOGY: i32 = 4;
pub const VG_ERR_DIMENSION: i32 = 5;
pub const VG_ERR_NUMERIC: i32 = 6;
pub const VG_ERR_CONTROL: i32 = 7;
pub const VG_ERR_PANIC: i32 = 8;

pub const VG_LAW_TAKING: i32 = 0;
pub const VG_LAW_ANTICIPATING: i32 = 1;

pub const VG_VERDICT_CONVERGED: i32 = 0;
pub const VG_VERDICT_MAX_ITER: i32 = 1;
pub const VG_VERDICT_DIVERGED: i32 = 2;

/// Opaque network handle.
pub struct VgNetwork {
    case: Case,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct VgPosaReport {
    /// Number of actuator buses.
    pub n: usize,
    pub posa_max: f64,
    pub upper: f64,
    pub refined_upper: f64,
    pub lower: f64,
    pub lower_clamped: f64,
    pub gap_bound: f64,
    pub lambda_min_x: f64,
    pub d: f64,
    pub y: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct VgConditionReport {
    pub sigma_taking: f64,
    pub sigma_anticipating: f64,
    pub sufficient_lhs: f64,
    pub taking_contracts: bool,
    pub anticipating_contracts: bool,
    pub sufficient_holds: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct VgSimResult {
    /// One of the `VG_VERDICT_*` codes.
    pub verdict: i32,
    /// Steps taken.
    pub iterations: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(i32, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Topology(_) => VG_ERR_TOPOLOGY,
            Error::Parse { .. } | Error::Io(_) => VG_ERR_PARSE,
            Error::DimensionMismatch { .. } | Error::IndexOutOfRange { .. } => VG_ERR_DIMENSION,
            Error::SingularSystem(_)
            | Error::NoConvergence { .. }
            | Error::VoltageCollapse { .. }
            | Error::Invariant(_) => VG_ERR_NUMERIC,
            _ => VG_ERR_CONTROL,
        };
        Failure(code, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(VG_ERR_NULL, format!("{what} is null"))
}

/// Runs `f`, mapping errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            VG_OK
        }
        Ok(Err(Failure(code, msg))) => {
            set_error(&msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            VG_ERR_PANIC
        }
    }
}

unsafe fn handle<'a>(net: *const VgNetwork) -> Result<&'a VgNetwork, Failure> {
    net.as_ref().ok_or_else(|| null("network"))
}

unsafe fn slice_in<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a>(p: *mut f64, len: usize, need: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    if len < need {
        return Err(Failure(
            VG_ERR_DIMENSION,
            format!("{what} holds {len} values, need {need}"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// Message for the last failed call on this thread; empty after success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn vg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses network JSON. On success `*out` owns a new handle.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vg_network_from_json(json: *const c_char, out: *mut *mut VgNetwork) -> i32 {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| Failure(VG_ERR_UTF8, e.to_string()))?;
        let case = NetworkFile::from_json(text)?.into_case()?;
        *out = Box::into_raw(Box::new(VgNetwork { case }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `net` must come from `vg_network_from_json` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vg_network_free(net: *mut VgNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Number of non-root buses.
///
/// # Safety
/// `net` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vg_network_node_count(net: *const VgNetwork, out: *mut usize) -> i32 {
    guard(|| {
        let net = handle(net)?;
        *out.as_mut().ok_or_else(|| null("out"))? = net.case.network.n();
        Ok(())
    })
}

/// Number of actuator buses.
///
/// # Safety
/// `net` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vg_network_actuator_count(net: *const VgNetwork, out: *mut usize) -> i32 {
    guard(|| {
        let net = handle(net)?;
        *out.as_mut().ok_or_else(|| null("out"))? = net.case.network.actuator_indices().len();
        Ok(())
    })
}

/// Writes the n×n reactance sensitivity matrix `X` row-major into `buf`.
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn vg_reactance_matrix(net: *const VgNetwork, buf: *mut f64, len: usize) -> i32 {
    guard(|| {
        let net = &handle(net)?.case.network;
        let n = net.n();
        let out = slice_out(buf, len, n * n, "buf")?;
        let x = build_sensitivity(net).x;
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = x[(i, j)];
            }
        }
        Ok(())
    })
}

/// Writes `X⁻¹` row-major into `buf`, built from the tree structure.
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn vg_reactance_inverse(net: *const VgNetwork, buf: *mut f64, len: usize) -> i32 {
    guard(|| {
        let net = &handle(net)?.case.network;
        let n = net.n();
        let out = slice_out(buf, len, n * n, "buf")?;
        let m = x_inverse_analytic(net);
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = m[(i, j)];
            }
        }
        Ok(())
    })
}

/// PoSA report over the actuator buses with quadratic cost coefficients
/// `y` (one per actuator). Pass `y = NULL` to use `1/alpha` from the
/// network's control block, which must then have zero deadbands.
///
/// # Safety
/// `y` must be null or hold `len` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vg_posa_report(
    net: *const VgNetwork,
    y: *const f64,
    len: usize,
    out: *mut VgPosaReport,
) -> i32 {
    guard(|| {
        let case = &handle(net)?.case;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let costs = if y.is_null() {
            case.controls
                .as_ref()
                .and_then(|c| c.quadratic_costs())
                .ok_or_else(|| Failure(VG_ERR_CONTROL, "network has no quadratic costs".into()))?
        } else {
            slice_in(y, len, "y")?.to_vec()
        };
        let idx = case.network.actuator_indices();
        let r = posa_report(&build_sensitivity(&case.network).restrict(&idx), &costs)?;
        *out = VgPosaReport {
            n: r.n,
            posa_max: r.posa_max,
            upper: r.upper,
            refined_upper: r.refined_upper,
            lower: r.lower,
            lower_clamped: r.lower_clamped,
            gap_bound: r.gap_bound,
            lambda_min_x: r.lambda_min_x,
            d: r.d,
            y: r.y,
        };
        Ok(())
    })
}

/// Contraction conditions for droop slopes `alphas`, one per actuator.
///
/// # Safety
/// `alphas` must hold `len` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vg_condition_report(
    net: *const VgNetwork,
    alphas: *const f64,
    len: usize,
    out: *mut VgConditionReport,
) -> i32 {
    guard(|| {
        let net = &handle(net)?.case.network;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let alphas = slice_in(alphas, len, "alphas")?;
        let idx = net.actuator_indices();
        let r = condition_report(&build_sensitivity(net).restrict(&idx), alphas)?;
        *out = VgConditionReport {
            sigma_taking: r.sigma_taking,
            sigma_anticipating: r.sigma_anticipating,
            sufficient_lhs: r.sufficient_lhs,
            taking_contracts: r.taking_contracts,
            anticipating_contracts: r.anticipating_contracts,
            sufficient_holds: r.sufficient_holds,
        };
        Ok(())
    })
}

/// Runs the closed loop from `q = 0` and writes the final reactive powers
/// into `q_out` (one per actuator). With `alpha > 0` every actuator uses a
/// droop law `(alpha, delta)` boxed by its bus limits; otherwise the
/// network's control block is used. `ac` observes voltages from the
/// branch-flow solution instead of the linear model.
///
/// # Safety
/// `q_out` must hold `len` doubles; `out` must be valid.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn vg_simulate(
    net: *const VgNetwork,
    law: i32,
    alpha: f64,
    delta: f64,
    ac: bool,
    max_iter: usize,
    tol: f64,
    q_out: *mut f64,
    len: usize,
    out: *mut VgSimResult,
) -> i32 {
    guard(|| {
        let case = &handle(net)?.case;
        let net = &case.network;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let law = match law {
            VG_LAW_TAKING => Law::Taking,
            VG_LAW_ANTICIPATING => Law::Anticipating,
            other => return Err(Failure(VG_ERR_CONTROL, format!("unknown law {other}"))),
        };
        let idx = net.actuator_indices();
        let q_out = slice_out(q_out, len, idx.len(), "q_out")?;
        let ctrl = if alpha > 0.0 {
            ControlSpec::new(
                idx.iter()
                    .map(|&k| {
                        let b = net.bus(k + 1);
                        LocalControl::from(DroopParams::new(alpha, delta).with_box(b.q_min, b.q_max))
                    })
                    .collect(),
            )?
        } else {
            case.controls
                .clone()
                .ok_or_else(|| Failure(VG_ERR_CONTROL, "network has no control block".into()))?
        };
        let opts = RunOptions {
            tol,
            max_iter,
            record_every: 0,
            ..RunOptions::default()
        };
        let q0 = DVector::zeros(idx.len());
        let trace = if ac {
            closed_loop_ac(net, &ctrl, law, &q0, &opts, SweepOptions::default())?
        } else {
            let model = actuator_model(net, ctrl)?;
            run(&model.stepper(law), &q0, &opts)?
        };
        q_out[..idx.len()].copy_from_slice(trace.final_q().as_slice());
        *out = match trace.verdict {
            Verdict::Converged { iterations } => VgSimResult {
                verdict: VG_VERDICT_CONVERGED,
                iterations,
            },
            Verdict::MaxIter => VgSimResult {
                verdict: VG_VERDICT_MAX_ITER,
                iterations: max_iter,
            },
            Verdict::Diverged { iteration } => VgSimResult {
                verdict: VG_VERDICT_DIVERGED,
                iterations: iteration,
            },
        };
        Ok(())
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
