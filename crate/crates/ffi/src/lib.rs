//! C ABI over `pnp-core`.
//!
//! A simulation is an opaque `PnpSimulation*` created by
//! [`pnp_simulation_new`] and released with [`pnp_simulation_free`]. Every
//! fallible call returns a [`PnpStatus`]; on failure the message is available
//! from [`pnp_last_error_message`] on the same thread.
//!
//! Field buffers are row-major with x slowest and hold `N^dim` doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pnp_core::diagnostics::StepReport;
use pnp_core::scheme::{Scheme, SchemeParams, Sources, State};
use pnp_core::{CellField, Grid, PnpError};

/// Opaque simulation handle.
pub struct PnpSimulation {
    scheme: Scheme,
    state: State,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PnpStatus {
    Ok = 0,
    NullPointer = 1,
    /// Bad grid, parameter, buffer length or configuration.
    InvalidArgument = 2,
    /// Linear or nonlinear iteration failed to converge.
    SolverFailure = 3,
    /// Positivity or charge-neutrality violated.
    InvariantViolation = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PnpField {
    N = 0,
    P = 1,
    Phi = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PnpParams {
    pub dt: f64,
    pub diffusivity: f64,
    pub omega_r: f64,
    pub picard_tol: f64,
    pub picard_max: u64,
    pub linear_tol: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PnpStepReport {
    pub time: f64,
    pub energy: f64,
    pub mass_n: f64,
    pub mass_p: f64,
    pub c_min: f64,
    pub dissipation: f64,
    pub picard_iters: u64,
    pub residual: f64,
}

impl From<StepReport> for PnpStepReport {
    fn from(r: StepReport) -> Self {
        Self {
            time: r.time,
            energy: r.energy,
            mass_n: r.mass_n,
            mass_p: r.mass_p,
            c_min: r.c_min,
            dissipation: r.dissipation,
            picard_iters: r.picard_iters as u64,
            residual: r.residual,
        }
    }
}

impl From<PnpParams> for SchemeParams {
    fn from(p: PnpParams) -> Self {
        SchemeParams {
            dt: p.dt,
            diffusivity: p.diffusivity,
            omega_r: p.omega_r,
            picard_tol: p.picard_tol,
            picard_max: p.picard_max as usize,
            linear_tol: p.linear_tol,
            ..SchemeParams::default()
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &PnpError) -> PnpStatus {
    match e.exit_code() {
        3 => PnpStatus::SolverFailure,
        4 => PnpStatus::InvariantViolation,
        _ => PnpStatus::InvalidArgument,
    }
}

type Outcome = Result<(), (PnpStatus, String)>;

fn fail(e: PnpError) -> (PnpStatus, String) {
    (status_of(&e), e.to_string())
}

fn guard(f: impl FnOnce() -> Outcome) -> PnpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            PnpStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            PnpStatus::Panic
        }
    }
}

unsafe fn handle<'a>(sim: *mut PnpSimulation) -> Result<&'a mut PnpSimulation, (PnpStatus, String)> {
    sim.as_mut()
        .ok_or((PnpStatus::NullPointer, "simulation handle is null".into()))
}

unsafe fn field_from(grid: Grid, data: *const f64, len: usize, what: &str) -> Result<CellField, (PnpStatus, String)> {
    if data.is_null() {
        return Err((PnpStatus::NullPointer, format!("{what} buffer is null")));
    }
    if len != grid.len() {
        return Err((
            PnpStatus::InvalidArgument,
            format!("{what} buffer has {len} values, grid has {}", grid.len()),
        ));
    }
    let values = std::slice::from_raw_parts(data, len).to_vec();
    CellField::from_values(grid, values).map_err(fail)
}

/// Library defaults: `dt = 1e-3`, `D = 1`, `omega_r = 0.2`,
/// `picard_tol = 1e-10`, `picard_max = 500`, `linear_tol = 1e-12`.
#[no_mangle]
pub extern "C" fn pnp_default_params() -> PnpParams {
    let d = SchemeParams::default();
    PnpParams {
        dt: d.dt,
        diffusivity: d.diffusivity,
        omega_r: d.omega_r,
        picard_tol: d.picard_tol,
        picard_max: d.picard_max as u64,
        linear_tol: d.linear_tol,
    }
}

/// Creates a simulation on `(-half_width, half_width)^dim` with `cells`
/// cells per axis and `n = p = 1`. `params` may be null for defaults.
///
/// # Safety
/// `params` must be null or valid; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pnp_simulation_new(
    dim: u32,
    cells: u64,
    half_width: f64,
    params: *const PnpParams,
    out: *mut *mut PnpSimulation,
) -> PnpStatus {
    guard(|| {
        if out.is_null() {
            return Err((PnpStatus::NullPointer, "output pointer is null".into()));
        }
        *out = ptr::null_mut();
        let params = params.as_ref().copied().unwrap_or_else(|| pnp_default_params());
        let grid = Grid::new(dim as usize, cells as usize, half_width).map_err(fail)?;
        let scheme = Scheme::new(grid, params.into()).map_err(fail)?;
        let one = CellField::constant(grid, 1.0);
        let state = scheme.initial_state(one.clone(), one, 0.0).map_err(fail)?;
        *out = Box::into_raw(Box::new(PnpSimulation { scheme, state }));
        Ok(())
    })
}

/// # Safety
/// `sim` must be null or a handle from [`pnp_simulation_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pnp_simulation_free(sim: *mut PnpSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Number of cells, `N^dim`; 0 for a null handle.
///
/// # Safety
/// `sim` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pnp_simulation_len(sim: *const PnpSimulation) -> usize {
    sim.as_ref().map_or(0, |s| s.scheme.grid().len())
}

/// Current simulation time; NaN for a null handle.
///
/// # Safety
/// `sim` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pnp_simulation_time(sim: *const PnpSimulation) -> f64 {
    sim.as_ref().map_or(f64::NAN, |s| s.state.time)
}

/// Replaces both concentrations (strictly positive) and recomputes the
/// potential. The time is left unchanged.
///
/// # Safety
/// `n` and `p` must each point to `len` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn pnp_simulation_set_concentrations(
    sim: *mut PnpSimulation,
    n: *const f64,
    p: *const f64,
    len: usize,
) -> PnpStatus {
    guard(|| {
        let sim = handle(sim)?;
        let grid = *sim.scheme.grid();
        let n = field_from(grid, n, len, "n")?;
        let p = field_from(grid, p, len, "p")?;
        sim.state = sim.scheme.initial_state(n, p, sim.state.time).map_err(fail)?;
        Ok(())
    })
}

/// Sets the fixed background charge; a null `rho` removes it. The net
/// charge `p - n + rho` must have zero mean.
///
/// # Safety
/// `rho` must be null or point to `len` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn pnp_simulation_set_fixed_charge(
    sim: *mut PnpSimulation,
    rho: *const f64,
    len: usize,
) -> PnpStatus {
    guard(|| {
        let sim = handle(sim)?;
        let grid = *sim.scheme.grid();
        let sources = if rho.is_null() {
            Sources::default()
        } else {
            Sources::fixed_charge(field_from(grid, rho, len, "rho")?)
        };
        let scheme = sim.scheme.clone().with_sources(sources).map_err(fail)?;
        let state = scheme
            .initial_state(sim.state.n.clone(), sim.state.p.clone(), sim.state.time)
            .map_err(fail)?;
        sim.scheme = scheme;
        sim.state = state;
        Ok(())
    })
}

/// Advances `steps` time steps. `report` (may be null) receives the
/// diagnostics of the last step taken. On failure the state is that of the
/// last successful step.
///
/// # Safety
/// `report` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pnp_simulation_step(
    sim: *mut PnpSimulation,
    steps: u64,
    report: *mut PnpStepReport,
) -> PnpStatus {
    guard(|| {
        let sim = handle(sim)?;
        let mut last = sim.scheme.report(&sim.state).map_err(fail)?;
        for _ in 0..steps {
            let (next, r) = sim.scheme.step(&sim.state).map_err(fail)?;
            sim.state = next;
            last = r;
        }
        if let Some(out) = report.as_mut() {
            *out = last.into();
        }
        Ok(())
    })
}

/// Copies a field into `out`, which must hold exactly `len = N^dim` doubles.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pnp_simulation_get_field(
    sim: *const PnpSimulation,
    which: PnpField,
    out: *mut f64,
    len: usize,
) -> PnpStatus {
    guard(|| {
        let sim = handle(sim as *mut PnpSimulation)?;
        if out.is_null() {
            return Err((PnpStatus::NullPointer, "output buffer is null".into()));
        }
        let field = match which {
            PnpField::N => &sim.state.n,
            PnpField::P => &sim.state.p,
            PnpField::Phi => &sim.state.phi,
        };
        if len != field.values().len() {
            return Err((
                PnpStatus::InvalidArgument,
                format!("buffer has {len} slots, field has {}", field.values().len()),
            ));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(field.values());
        Ok(())
    })
}

/// Discrete free energy of the current state.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pnp_simulation_energy(sim: *const PnpSimulation, out: *mut f64) -> PnpStatus {
    guard(|| {
        let sim = handle(sim as *mut PnpSimulation)?;
        let out = out
            .as_mut()
            .ok_or((PnpStatus::NullPointer, "output pointer is null".into()))?;
        *out = sim.scheme.energy(&sim.state).map_err(fail)?;
        Ok(())
    })
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn pnp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}
