//! C ABI over `qsync-core`.
//!
//! Every function returns a [`QsyncStatus`]; results come back through out
//! pointers. On failure a message is stored per thread and can be fetched
//! with [`qsync_last_error_message`]. Simulations are opaque handles created
//! by one of the `qsync_simulation_from_*` constructors and released with
//! [`qsync_simulation_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use qsync_core::dynamics::{EnsembleState, Solver};
use qsync_core::{experiments, io, observables, reduced, GridSpec, QsyncError, C64};

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QsyncStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Solver = 4,
    Checkpoint = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// A complex number as two doubles.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QsyncComplex {
    pub re: f64,
    pub im: f64,
}

impl From<C64> for QsyncComplex {
    fn from(z: C64) -> Self {
        QsyncComplex { re: z.re, im: z.im }
    }
}

impl From<QsyncComplex> for C64 {
    fn from(z: QsyncComplex) -> Self {
        C64::new(z.re, z.im)
    }
}

/// Scalar observables of the current state.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QsyncSummary {
    pub time: f64,
    pub zeta_norm: f64,
    pub min_corr: f64,
    pub theta_spread: f64,
    pub diameter: f64,
}

/// Opaque simulation handle.
pub struct QsyncSimulation {
    solver: Solver,
    state: EnsembleState,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let mut bytes = msg.into().into_bytes();
    bytes.retain(|b| *b != 0);
    let c = CString::new(bytes).expect("interior nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &QsyncError) -> QsyncStatus {
    match e {
        QsyncError::Config { .. } | QsyncError::UnknownScenario(_) | QsyncError::Parse { .. } => QsyncStatus::Config,
        QsyncError::Checkpoint(_) => QsyncStatus::Checkpoint,
        QsyncError::Domain(_)
        | QsyncError::NoFixedPoint(_)
        | QsyncError::ExcludedInitialCondition
        | QsyncError::LengthMismatch { .. }
        | QsyncError::InvalidGrid(_) => QsyncStatus::InvalidArgument,
        _ => QsyncStatus::Solver,
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard<F: FnOnce() -> Result<(), (QsyncStatus, String)>>(f: F) -> QsyncStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QsyncStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            QsyncStatus::Panic
        }
    }
}

fn core(e: QsyncError) -> (QsyncStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (QsyncStatus, String) {
    (QsyncStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (QsyncStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (QsyncStatus::InvalidArgument, format!("`{what}` is not UTF-8")))
}

unsafe fn sim_ref<'a>(p: *const QsyncSimulation) -> Result<&'a QsyncSimulation, (QsyncStatus, String)> {
    p.as_ref().ok_or_else(|| null("sim"))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (QsyncStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

fn make(state: EnsembleState, params: &qsync_core::ModelParams) -> Result<Box<QsyncSimulation>, (QsyncStatus, String)> {
    let solver = Solver::new(*state.grid(), params).map_err(core)?;
    Ok(Box::new(QsyncSimulation { solver, state }))
}

/// Most recent error message on this thread, or null. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn qsync_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn qsync_status_string(status: QsyncStatus) -> *const c_char {
    let s: &'static CStr = match status {
        QsyncStatus::Ok => c"ok",
        QsyncStatus::NullPointer => c"null pointer argument",
        QsyncStatus::InvalidArgument => c"invalid argument",
        QsyncStatus::Config => c"configuration error",
        QsyncStatus::Solver => c"solver error",
        QsyncStatus::Checkpoint => c"checkpoint error",
        QsyncStatus::BufferTooSmall => c"buffer too small",
        QsyncStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// Number of catalog scenarios.
#[no_mangle]
pub extern "C" fn qsync_scenario_count() -> usize {
    experiments::CATALOG.len()
}

/// Name of catalog scenario `index` as a static nul-terminated string, or
/// null when out of range.
#[no_mangle]
pub extern "C" fn qsync_scenario_name(index: usize) -> *const c_char {
    static NAMES: std::sync::OnceLock<Vec<CString>> = std::sync::OnceLock::new();
    let names = NAMES.get_or_init(|| {
        experiments::CATALOG
            .iter()
            .map(|s| CString::new(s.name).expect("plain ascii"))
            .collect()
    });
    names.get(index).map_or(ptr::null(), |c| c.as_ptr())
}

/// Creates a simulation from a catalog scenario on the default 1D grid.
///
/// # Safety
/// `name` must be a valid nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qsync_simulation_from_scenario(
    name: *const c_char,
    seed: u64,
    out: *mut *mut QsyncSimulation,
) -> QsyncStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let name = str_arg(name, "name")?;
        let sc = experiments::build(name, seed, GridSpec::default_1d()).map_err(core)?;
        *out = Box::into_raw(make(sc.initial, &sc.params)?);
        Ok(())
    })
}

/// Creates a simulation from a JSON run configuration.
///
/// # Safety
/// `json` must be a valid nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qsync_simulation_from_config(json: *const c_char, out: *mut *mut QsyncSimulation) -> QsyncStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let cfg = io::parse_config(str_arg(json, "json")?).map_err(core)?;
        let (state, params) = cfg.build().map_err(core)?;
        *out = Box::into_raw(make(state, &params)?);
        Ok(())
    })
}

/// Releases a simulation. Null is ignored.
///
/// # Safety
/// `sim` must be null or a handle from this library that was not freed yet.
#[no_mangle]
pub unsafe extern "C" fn qsync_simulation_free(sim: *mut QsyncSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Advances by `steps` time steps. On failure the state is left unchanged.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qsync_simulation_step(sim: *mut QsyncSimulation, steps: usize) -> QsyncStatus {
    guard(|| {
        let sim = sim.as_mut().ok_or_else(|| null("sim"))?;
        let mut s = sim.state.clone();
        for _ in 0..steps {
            s = sim.solver.step(&s).map_err(core)?;
        }
        sim.state = s;
        Ok(())
    })
}

/// Number of oscillators.
///
/// # Safety
/// `sim` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qsync_simulation_oscillators(sim: *const QsyncSimulation, out: *mut usize) -> QsyncStatus {
    guard(|| {
        *out_ref(out, "out")? = sim_ref(sim)?.state.n();
        Ok(())
    })
}

/// Scalar observables of the current state.
///
/// # Safety
/// `sim` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qsync_simulation_summary(sim: *const QsyncSimulation, out: *mut QsyncSummary) -> QsyncStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let f = observables::frame(&sim_ref(sim)?.state).map_err(core)?;
        *out = QsyncSummary {
            time: f.time,
            zeta_norm: f.zeta_norm,
            min_corr: f.min_corr,
            theta_spread: f.theta_spread,
            diameter: f.diameter,
        };
        Ok(())
    })
}

unsafe fn copy_out(values: &[f64], out: *mut f64, len: usize) -> Result<(), (QsyncStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    if len < values.len() {
        return Err((
            QsyncStatus::BufferTooSmall,
            format!("need {} entries, buffer holds {len}", values.len()),
        ));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

/// Writes the L2 norms `|psi_j|` into `out[0..n]`.
///
/// # Safety
/// `sim` must be a live handle and `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn qsync_simulation_masses(sim: *const QsyncSimulation, out: *mut f64, len: usize) -> QsyncStatus {
    guard(|| copy_out(&sim_ref(sim)?.state.masses(), out, len))
}

/// Writes the consensus weights `theta_j` into `out[0..n]`.
///
/// # Safety
/// `sim` must be a live handle and `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn qsync_simulation_thetas(sim: *const QsyncSimulation, out: *mut f64, len: usize) -> QsyncStatus {
    guard(|| copy_out(sim_ref(sim)?.state.theta.values(), out, len))
}

/// Serializes the state. `written` always receives the required size; when
/// `buf` is null or `cap` is too small nothing is copied and
/// `BufferTooSmall` is returned.
///
/// # Safety
/// `sim` must be a live handle, `written` a valid pointer and `buf` null or
/// valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn qsync_simulation_checkpoint(
    sim: *const QsyncSimulation,
    buf: *mut u8,
    cap: usize,
    written: *mut usize,
) -> QsyncStatus {
    guard(|| {
        let written = out_ref(written, "written")?;
        let bytes = io::checkpoint(&sim_ref(sim)?.state);
        *written = bytes.len();
        if buf.is_null() || cap < bytes.len() {
            return Err((
                QsyncStatus::BufferTooSmall,
                format!("checkpoint needs {} bytes", bytes.len()),
            ));
        }
        ptr::copy_nonoverlapping(bytes.as_ptr(), buf, bytes.len());
        Ok(())
    })
}

/// Replaces the state with a checkpoint. The grid and oscillator count must
/// match; on failure the state is left unchanged.
///
/// # Safety
/// `sim` must be a live handle and `bytes` valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn qsync_simulation_restore(sim: *mut QsyncSimulation, bytes: *const u8, len: usize) -> QsyncStatus {
    guard(|| {
        let sim = sim.as_mut().ok_or_else(|| null("sim"))?;
        if bytes.is_null() {
            return Err(null("bytes"));
        }
        let state = io::restore(std::slice::from_raw_parts(bytes, len)).map_err(core)?;
        if state.grid() != sim.state.grid() || state.n() != sim.state.n() {
            return Err((
                QsyncStatus::Checkpoint,
                "checkpoint grid or oscillator count differs from the simulation".into(),
            ));
        }
        sim.state = state;
        Ok(())
    })
}

/// Reduced-model parameter `Lambda = 4 Omega l1 l2 / (k (l1^2 + l2^2))`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qsync_lambda_param(omega: f64, k: f64, lambda1: f64, lambda2: f64, out: *mut f64) -> QsyncStatus {
    guard(|| {
        *out_ref(out, "out")? = reduced::lambda_param(omega, k, lambda1, lambda2).map_err(core)?;
        Ok(())
    })
}

/// Stable and unstable fixed points of the reduced correlation equation.
///
/// # Safety
/// `stable` and `unstable` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn qsync_fixed_points(
    lambda_cap: f64,
    stable: *mut QsyncComplex,
    unstable: *mut QsyncComplex,
) -> QsyncStatus {
    guard(|| {
        let stable = out_ref(stable, "stable")?;
        let unstable = out_ref(unstable, "unstable")?;
        let (z1, z2) = reduced::fixed_points(lambda_cap).map_err(core)?;
        *stable = z1.into();
        *unstable = z2.into();
        Ok(())
    })
}

/// Closed-form solution of the symmetric reduced system at time `t`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qsync_y_exact(
    t: f64,
    y0: QsyncComplex,
    omega: f64,
    lambda_cap: f64,
    out: *mut QsyncComplex,
) -> QsyncStatus {
    guard(|| {
        *out_ref(out, "out")? = reduced::y_exact(t, y0.into(), omega, lambda_cap).map_err(core)?.into();
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_strings_are_static() {
        let s = unsafe { CStr::from_ptr(qsync_status_string(QsyncStatus::BufferTooSmall)) };
        assert_eq!(s.to_str().unwrap(), "buffer too small");
    }

    #[test]
    fn errors_are_per_thread() {
        let st = unsafe { qsync_lambda_param(1.0, -1.0, 1.0, 1.0, &mut 0.0) };
        assert_eq!(st, QsyncStatus::InvalidArgument);
        assert!(!qsync_last_error_message().is_null());
        let other = std::thread::spawn(|| qsync_last_error_message().is_null()).join().unwrap();
        assert!(other);
    }
}
