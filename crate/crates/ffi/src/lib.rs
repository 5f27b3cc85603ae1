//! C ABI over `radau_guidance`.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`rg_solve_*`
//! and released with the matching `*_free`. Every function returns an
//! [`RgStatus`]; on failure `rg_last_error_message` describes the error of
//! the calling thread. Output arrays are caller-allocated with an explicit
//! length, and a short buffer yields `RG_STATUS_BUFFER_TOO_SMALL`.

use std::cell::RefCell;
use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::DVector;
use radau_guidance::config::CampaignConfig;
use radau_guidance::guidance::{run_mission, solve_reference, Method, MissionSetup};
use radau_guidance::lgr::lgr_basis;
use radau_guidance::monte_carlo::{sample_alpha, MonteCarloConfig};
use radau_guidance::trajectory::Trajectory;
use radau_guidance::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NumericalFailure = 3,
    BufferTooSmall = 4,
    Panic = 5,
}

pub const RG_METHOD_OC: u32 = 0;
pub const RG_METHOD_DOC: u32 = 1;
pub const RG_METHOD_OG: u32 = 2;
pub const RG_METHOD_DOG: u32 = 3;

/// Example problem with its mesh, solver and guidance settings.
pub struct RgProblem {
    setup: MissionSetup,
}

/// A solved trajectory.
pub struct RgTrajectory {
    traj: Trajectory,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

struct Failure(RgStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = if e.is_numerical() {
            RgStatus::NumericalFailure
        } else {
            RgStatus::InvalidArgument
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(RgStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            RgStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            RgStatus::Panic
        }
    }
}

/// Copies `src` into the caller buffer `(dst, len)`.
unsafe fn write_out(src: &[f64], dst: *mut f64, len: usize, what: &str) -> Result<(), Failure> {
    if dst.is_null() {
        return Err(null(what));
    }
    if len < src.len() {
        return Err(Failure(
            RgStatus::BufferTooSmall,
            format!("{what} needs {} entries, got {len}", src.len()),
        ));
    }
    std::ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    Ok(())
}

unsafe fn set<T>(dst: *mut T, v: T, what: &str) -> Result<(), Failure> {
    if dst.is_null() {
        return Err(null(what));
    }
    dst.write(v);
    Ok(())
}

fn method_of(code: u32) -> Result<Method, Failure> {
    match code {
        RG_METHOD_OC => Ok(Method::Oc),
        RG_METHOD_DOC => Ok(Method::Doc),
        RG_METHOD_OG => Ok(Method::Og),
        RG_METHOD_DOG => Ok(Method::Dog),
        _ => Err(Failure(
            RgStatus::InvalidArgument,
            format!("unknown method code {code}"),
        )),
    }
}

/// Radau basis for `n` collocation points: `nodes[n]`, `weights[n]` and the
/// `n x (n + 1)` differentiation matrix in row-major order.
///
/// # Safety
/// Each pointer must be valid for writes of its stated length.
#[no_mangle]
pub unsafe extern "C" fn rg_lgr_basis(
    n: usize,
    nodes: *mut f64,
    nodes_len: usize,
    weights: *mut f64,
    weights_len: usize,
    diff: *mut f64,
    diff_len: usize,
) -> RgStatus {
    guard(|| {
        let b = lgr_basis(n)?;
        let d = b.diff_matrix.transpose();
        write_out(&b.nodes, nodes, nodes_len, "nodes")?;
        write_out(&b.weights, weights, weights_len, "weights")?;
        write_out(d.as_slice(), diff, diff_len, "differentiation matrix")
    })
}

/// Creates the built-in scalar example with nominal `alpha`, weights
/// `(beta, q)` and a graded mesh of `intervals` intervals of `order` points.
/// Guidance and solver settings take their defaults.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn rg_problem_new_example(
    alpha: f64,
    beta: f64,
    q: f64,
    intervals: usize,
    order: usize,
    grading: f64,
    out: *mut *mut RgProblem,
) -> RgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let defaults = CampaignConfig::default();
        let cfg = CampaignConfig {
            alpha,
            mesh_intervals: intervals,
            mesh_order: order,
            mesh_grading: grading,
            mc: MonteCarloConfig {
                beta,
                q,
                ..defaults.mc.clone()
            },
            ..defaults
        };
        cfg.validate()?;
        let setup = cfg.mission_setup()?;
        out.write(Box::into_raw(Box::new(RgProblem { setup })));
        Ok(())
    })
}

/// # Safety
/// `problem` must come from `rg_problem_new_example` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rg_problem_free(problem: *mut RgProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Solves the reference problem, with the sensitivity penalty when
/// `desensitized` is true.
///
/// # Safety
/// `problem` must be a live handle; `out` valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn rg_solve_reference(
    problem: *const RgProblem,
    desensitized: bool,
    out: *mut *mut RgTrajectory,
) -> RgStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let r = solve_reference(&p.setup, desensitized)?;
        out.write(Box::into_raw(Box::new(RgTrajectory {
            traj: r.outcome.trajectory,
        })));
        Ok(())
    })
}

/// # Safety
/// `traj` must come from `rg_solve_reference` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rg_trajectory_free(traj: *mut RgTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// # Safety
/// `traj` must be a live handle; the outputs valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rg_trajectory_dims(
    traj: *const RgTrajectory,
    n_states: *mut usize,
    n_controls: *mut usize,
) -> RgStatus {
    guard(|| {
        let t = &traj.as_ref().ok_or_else(|| null("traj"))?.traj;
        set(n_states, t.n_base_states(), "n_states")?;
        set(n_controls, t.n_controls(), "n_controls")
    })
}

/// # Safety
/// `traj` must be a live handle; the outputs valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rg_trajectory_time_span(
    traj: *const RgTrajectory,
    t0: *mut f64,
    tf: *mut f64,
) -> RgStatus {
    guard(|| {
        let (a, b) = traj.as_ref().ok_or_else(|| null("traj"))?.traj.time_span();
        set(t0, a, "t0")?;
        set(tf, b, "tf")
    })
}

/// Objective value of the solved problem (penalty included).
///
/// # Safety
/// `traj` must be a live handle; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn rg_trajectory_objective(
    traj: *const RgTrajectory,
    out: *mut f64,
) -> RgStatus {
    guard(|| {
        let t = &traj.as_ref().ok_or_else(|| null("traj"))?.traj;
        set(out, t.objective, "out")
    })
}

/// Interpolated state at time `t`.
///
/// # Safety
/// `traj` must be a live handle; `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn rg_trajectory_state_at(
    traj: *const RgTrajectory,
    t: f64,
    out: *mut f64,
    len: usize,
) -> RgStatus {
    guard(|| {
        let x = traj
            .as_ref()
            .ok_or_else(|| null("traj"))?
            .traj
            .state_at(t)?;
        write_out(x.as_slice(), out, len, "state")
    })
}

/// Interpolated control at time `t`.
///
/// # Safety
/// `traj` must be a live handle; `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn rg_trajectory_control_at(
    traj: *const RgTrajectory,
    t: f64,
    out: *mut f64,
    len: usize,
) -> RgStatus {
    guard(|| {
        let u = traj
            .as_ref()
            .ok_or_else(|| null("traj"))?
            .traj
            .control_at(t)?;
        write_out(u.as_slice(), out, len, "control")
    })
}

/// Flies one mission (`RG_METHOD_*`) on the plant with parameter
/// `alpha_tilde`. Writes the first component of the terminal deviation,
/// the final state and the re-solve iteration total.
///
/// # Safety
/// `problem` must be a live handle; the outputs valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rg_run_mission(
    problem: *const RgProblem,
    method: u32,
    alpha_tilde: f64,
    epsilon: *mut f64,
    final_state: *mut f64,
    final_state_len: usize,
    iterations: *mut usize,
) -> RgStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        let method = method_of(method)?;
        if !alpha_tilde.is_finite() {
            return Err(Failure(
                RgStatus::InvalidArgument,
                "alpha_tilde is not finite".into(),
            ));
        }
        let reference = solve_reference(&p.setup, method.is_desensitized())?;
        let r = run_mission(
            &p.setup,
            method,
            &DVector::from_element(1, alpha_tilde),
            &reference,
        )?;
        set(epsilon, r.epsilon[0], "epsilon")?;
        write_out(
            r.final_state.as_slice(),
            final_state,
            final_state_len,
            "final_state",
        )?;
        set(iterations, r.iterations, "iterations")
    })
}

/// `runs` draws from `N(alpha, sigma^2)`, identical to a campaign's draws
/// for the same seed.
///
/// # Safety
/// `out` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn rg_sample_alpha(
    seed: u64,
    runs: usize,
    alpha: f64,
    sigma: f64,
    out: *mut f64,
    len: usize,
) -> RgStatus {
    guard(|| {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Failure(
                RgStatus::InvalidArgument,
                format!("sigma must be non-negative, got {sigma}"),
            ));
        }
        let draws = sample_alpha(seed, runs, alpha, sigma)?;
        write_out(&draws, out, len, "out")
    })
}

/// Copies the calling thread's last error message, NUL-terminated, into
/// `buf`. `needed` (optional) receives the size including the terminator.
///
/// # Safety
/// `buf` must be valid for `len` writes; `needed` null or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn rg_last_error_message(
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> RgStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    let bytes = msg.as_bytes();
    if !needed.is_null() {
        needed.write(bytes.len() + 1);
    }
    if buf.is_null() {
        return RgStatus::NullPointer;
    }
    if len < bytes.len() + 1 {
        return RgStatus::BufferTooSmall;
    }
    std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, bytes.len());
    buf.add(bytes.len()).write(0);
    RgStatus::Ok
}
