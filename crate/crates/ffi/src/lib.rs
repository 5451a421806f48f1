//! C interface to the rigid-body oracle and to learned inverse-dynamics
//! ensembles.
//!
//! Objects are opaque handles created by `*_load` functions and released with
//! the matching `*_free`. Every fallible call returns a [`DlStatus`]; on
//! failure the message is kept per thread and can be copied out with
//! [`dl_last_error_message`]. Vectors are `double` arrays of length `n`
//! (the handle's DoF); matrices are row-major `n × n`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use dynlearn::inv2fwd::{predict_acceleration, Inv2FwdOptions, InverseDynamicsEnsemble, InverseModel};
use dynlearn::rbd::{self, resolve_robot, JointVector, RobotModel};
use dynlearn::Error;

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Unsupported = 4,
    NumericalFailure = 5,
    Io = 6,
    Panic = 7,
}

/// A rigid-body model (built-in name or robot file).
pub struct DlRobot(RobotModel);

/// One inverse-dynamics GP per joint, loaded from a model directory.
pub struct DlEnsemble(InverseDynamicsEnsemble);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> DlStatus {
    match e {
        Error::Dimension { .. } => DlStatus::DimensionMismatch,
        Error::Unsupported(_) => DlStatus::Unsupported,
        Error::IllConditioned { .. } | Error::OptimizationFailed { .. } | Error::EstimationFailed { .. } => {
            DlStatus::NumericalFailure
        }
        Error::Io(_) => DlStatus::Io,
        _ => DlStatus::InvalidArgument,
    }
}

/// Run `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (DlStatus, String)>) -> DlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DlStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            DlStatus::Panic
        }
    }
}

fn lib(e: Error) -> (DlStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (DlStatus, String) {
    (DlStatus::NullPointer, format!("{what} is null"))
}

unsafe fn string_arg(p: *const c_char, what: &str) -> Result<String, (DlStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| (DlStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn vector_arg(p: *const f64, n: usize, what: &str) -> Result<JointVector, (DlStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(JointVector::from_column_slice(std::slice::from_raw_parts(p, n)))
}

unsafe fn output<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], (DlStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn check_n(expected: usize, n: usize) -> Result<(), (DlStatus, String)> {
    if expected != n {
        return Err((
            DlStatus::DimensionMismatch,
            format!("handle has {expected} joints, call passed n = {n}"),
        ));
    }
    Ok(())
}

/// Copy the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes, excluding
/// the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn dl_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let take = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), take);
            *buf.add(take) = 0;
        }
        msg.len()
    })
}

/// Load a robot by built-in name or file path (optionally suffixed `@k`).
///
/// # Safety
/// `reference` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dl_robot_load(reference: *const c_char, out: *mut *mut DlRobot) -> DlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let name = string_arg(reference, "reference")?;
        let robot = resolve_robot(&name).map_err(lib)?;
        *out = Box::into_raw(Box::new(DlRobot(robot)));
        Ok(())
    })
}

/// # Safety
/// `robot` must be null or a handle from [`dl_robot_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dl_robot_free(robot: *mut DlRobot) {
    if !robot.is_null() {
        drop(Box::from_raw(robot));
    }
}

/// Number of joints, or 0 for a null handle.
///
/// # Safety
/// `robot` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dl_robot_dof(robot: *const DlRobot) -> usize {
    robot.as_ref().map_or(0, |r| r.0.dof())
}

/// `τ = ID(q, q̇, q̈)`
///
/// # Safety
/// Vector arguments must point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn dl_inverse_dynamics(
    robot: *const DlRobot,
    q: *const f64,
    qd: *const f64,
    qdd: *const f64,
    n: usize,
    tau_out: *mut f64,
) -> DlStatus {
    guard(|| {
        let r = &robot.as_ref().ok_or_else(|| null("robot"))?.0;
        check_n(r.dof(), n)?;
        let tau = rbd::inverse_dynamics(
            r,
            &vector_arg(q, n, "q")?,
            &vector_arg(qd, n, "qd")?,
            &vector_arg(qdd, n, "qdd")?,
        )
        .map_err(lib)?;
        output(tau_out, n, "tau_out")?.copy_from_slice(tau.as_slice());
        Ok(())
    })
}

/// `q̈ = FD(q, q̇, τ)`
///
/// # Safety
/// Vector arguments must point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn dl_forward_dynamics(
    robot: *const DlRobot,
    q: *const f64,
    qd: *const f64,
    tau: *const f64,
    n: usize,
    qdd_out: *mut f64,
) -> DlStatus {
    guard(|| {
        let r = &robot.as_ref().ok_or_else(|| null("robot"))?.0;
        check_n(r.dof(), n)?;
        let qdd = rbd::forward_dynamics(
            r,
            &vector_arg(q, n, "q")?,
            &vector_arg(qd, n, "qd")?,
            &vector_arg(tau, n, "tau")?,
        )
        .map_err(lib)?;
        output(qdd_out, n, "qdd_out")?.copy_from_slice(qdd.as_slice());
        Ok(())
    })
}

/// Joint-space inertia matrix, row-major into `b_out` (`n × n`).
///
/// # Safety
/// `q` must point to `n` doubles and `b_out` to `n·n` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dl_mass_matrix(robot: *const DlRobot, q: *const f64, n: usize, b_out: *mut f64) -> DlStatus {
    guard(|| {
        let r = &robot.as_ref().ok_or_else(|| null("robot"))?.0;
        check_n(r.dof(), n)?;
        let b = rbd::mass_matrix(r, &vector_arg(q, n, "q")?).map_err(lib)?;
        let out = output(b_out, n * n, "b_out")?;
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = b[(i, j)];
            }
        }
        Ok(())
    })
}

/// Load an ensemble saved by `dynlearn fit` (`joint_<i>.json` files).
///
/// # Safety
/// `dir` must be a NUL-terminated path; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dl_ensemble_load(dir: *const c_char, out: *mut *mut DlEnsemble) -> DlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let dir = string_arg(dir, "dir")?;
        let ens = InverseDynamicsEnsemble::load(Path::new(&dir)).map_err(lib)?;
        *out = Box::into_raw(Box::new(DlEnsemble(ens)));
        Ok(())
    })
}

/// # Safety
/// `ens` must be null or a handle from [`dl_ensemble_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dl_ensemble_free(ens: *mut DlEnsemble) {
    if !ens.is_null() {
        drop(Box::from_raw(ens));
    }
}

/// # Safety
/// `ens` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dl_ensemble_dof(ens: *const DlEnsemble) -> usize {
    ens.as_ref().map_or(0, |e| e.0.dof())
}

/// Learned torques `f̂(q, q̇, q̈)`.
///
/// # Safety
/// Vector arguments must point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn dl_ensemble_predict_torques(
    ens: *const DlEnsemble,
    q: *const f64,
    qd: *const f64,
    qdd: *const f64,
    n: usize,
    tau_out: *mut f64,
) -> DlStatus {
    guard(|| {
        let e = &ens.as_ref().ok_or_else(|| null("ensemble"))?.0;
        check_n(e.dof(), n)?;
        let x = dynlearn::kernels::InputLayout::join(
            vector_arg(q, n, "q")?.as_slice(),
            vector_arg(qd, n, "qd")?.as_slice(),
            vector_arg(qdd, n, "qdd")?.as_slice(),
        );
        let tau = e.predict_torques(&[x]).map_err(lib)?.remove(0);
        output(tau_out, n, "tau_out")?.copy_from_slice(tau.as_slice());
        Ok(())
    })
}

/// Forward dynamics from the learned inverse model: `q̈ = B̂⁻¹(τ − n̂)`.
/// `probe` is the acceleration probe magnitude (use 1.0); `symmetrize`
/// nonzero symmetrizes `B̂` before inversion.
///
/// # Safety
/// Vector arguments must point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn dl_ensemble_predict_acceleration(
    ens: *const DlEnsemble,
    q: *const f64,
    qd: *const f64,
    tau: *const f64,
    n: usize,
    probe: f64,
    symmetrize: i32,
    qdd_out: *mut f64,
) -> DlStatus {
    guard(|| {
        let e = &ens.as_ref().ok_or_else(|| null("ensemble"))?.0;
        check_n(e.dof(), n)?;
        let options = Inv2FwdOptions {
            probe,
            symmetrize: symmetrize != 0,
            ..Default::default()
        };
        let (acc, _) = predict_acceleration(
            e,
            &vector_arg(q, n, "q")?,
            &vector_arg(qd, n, "qd")?,
            &vector_arg(tau, n, "tau")?,
            &options,
        )
        .map_err(lib)?;
        output(qdd_out, n, "qdd_out")?.copy_from_slice(acc.as_slice());
        Ok(())
    })
}
