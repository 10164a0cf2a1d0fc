//! Manufactured-solution accuracy study.
//!
//! Exact fields on a 2D periodic square:
//!
//! ```text
//! n = e^{-t} sin(2πx) cos(2πy) + 2
//! p = e^{-t} cos(2πx) sin(2πy) + 2
//! φ = e^{-t} sin(2πx) sin(2πy)
//! ```
//!
//! with forcing chosen so that they satisfy
//! `∂_t n = ∇·(∇n - n∇φ) + f_n`, `∂_t p = ∇·(∇p + p∇φ) + f_p`,
//! `-Δφ = p - n + ρ^f` (unit diffusivity ratio).

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{PnpError, Result};
use crate::grid::{self, CellField, Grid};
use crate::scheme::{FixedCharge, Scheme, SchemeParams, Sources, State};

const K: f64 = 2.0 * PI;

/// Closed-form exact solution and forcing, evaluated pointwise.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ManufacturedCase;

impl ManufacturedCase {
    pub fn n(&self, t: f64, x: f64, y: f64) -> f64 {
        (-t).exp() * (K * x).sin() * (K * y).cos() + 2.0
    }

    pub fn p(&self, t: f64, x: f64, y: f64) -> f64 {
        (-t).exp() * (K * x).cos() * (K * y).sin() + 2.0
    }

    pub fn phi(&self, t: f64, x: f64, y: f64) -> f64 {
        (-t).exp() * (K * x).sin() * (K * y).sin()
    }

    /// `f_n = ∂_t n - Δn + ∇n·∇φ + n Δφ`.
    pub fn f_n(&self, t: f64, x: f64, y: f64) -> f64 {
        let e = (-t).exp();
        let u = e * (K * x).sin() * (K * y).cos();
        let grad_dot = e * e * K * K * (K * y).sin() * (K * y).cos() * (2.0 * K * x).cos();
        -u + 2.0 * K * K * u + grad_dot - 2.0 * K * K * self.n(t, x, y) * self.phi(t, x, y)
    }

    /// `f_p = ∂_t p - Δp - ∇p·∇φ - p Δφ`.
    pub fn f_p(&self, t: f64, x: f64, y: f64) -> f64 {
        let e = (-t).exp();
        let v = e * (K * x).cos() * (K * y).sin();
        let grad_dot = e * e * K * K * (K * x).sin() * (K * x).cos() * (2.0 * K * y).cos();
        -v + 2.0 * K * K * v - grad_dot + 2.0 * K * K * self.p(t, x, y) * self.phi(t, x, y)
    }

    /// `ρ^f = -Δφ - (p - n)`.
    pub fn rho_f(&self, t: f64, x: f64, y: f64) -> f64 {
        2.0 * K * K * self.phi(t, x, y) - (self.p(t, x, y) - self.n(t, x, y))
    }
}

fn check_grid(grid: &Grid) -> Result<()> {
    if grid.dim() != 2 {
        return Err(PnpError::WrongDimension {
            expected: 2,
            found: grid.dim(),
        });
    }
    let period_count = 2.0 * grid.half_width();
    if (period_count - period_count.round()).abs() > 1e-12 || period_count.round() < 1.0 {
        return Err(PnpError::InvalidParameter {
            name: "L".into(),
            reason: format!(
                "the manufactured solution has unit period; 2L = {period_count} is not a whole number"
            ),
        });
    }
    Ok(())
}

fn sample(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> CellField {
    CellField::from_fn(*grid, |x| f(x[0], x[1]))
}

/// Exact fields at the cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactFields {
    pub n: CellField,
    pub p: CellField,
    pub phi: CellField,
}

pub fn exact_state(t: f64, grid: &Grid) -> Result<ExactFields> {
    check_grid(grid)?;
    let c = ManufacturedCase;
    Ok(ExactFields {
        n: sample(grid, |x, y| c.n(t, x, y)),
        p: sample(grid, |x, y| c.p(t, x, y)),
        phi: sample(grid, |x, y| c.phi(t, x, y)),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceFields {
    pub f_n: CellField,
    pub f_p: CellField,
    pub rho_f: CellField,
}

pub fn source_terms(t: f64, grid: &Grid) -> Result<SourceFields> {
    check_grid(grid)?;
    let c = ManufacturedCase;
    Ok(SourceFields {
        f_n: sample(grid, |x, y| c.f_n(t, x, y)),
        f_p: sample(grid, |x, y| c.f_p(t, x, y)),
        rho_f: sample(grid, |x, y| c.rho_f(t, x, y)),
    })
}

/// Scheme sources wired to the manufactured forcing.
pub fn sources() -> Sources {
    let c = ManufacturedCase;
    Sources {
        f_n: Some(Arc::new(move |t, g: &Grid| sample(g, |x, y| c.f_n(t, x, y)))),
        f_p: Some(Arc::new(move |t, g: &Grid| sample(g, |x, y| c.f_p(t, x, y)))),
        fixed_charge: Some(FixedCharge::Dynamic(Arc::new(move |t, g: &Grid| {
            sample(g, |x, y| c.rho_f(t, x, y))
        }))),
    }
}

/// `ℓ∞` errors of a single run at its final time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmsErrors {
    pub h: f64,
    pub dt: f64,
    pub steps: usize,
    pub err_n: f64,
    pub err_p: f64,
    pub err_phi: f64,
}

/// Maximum pointwise deviation from the exact fields; potentials are
/// compared after removing their means.
pub fn errors_against_exact(state: &State) -> Result<(f64, f64, f64)> {
    let exact = exact_state(state.time, state.grid())?;
    let mut phi = state.phi.clone();
    phi.remove_mean();
    let mut phi_exact = exact.phi;
    phi_exact.remove_mean();
    Ok((
        grid::norm_inf(&(&state.n - &exact.n)),
        grid::norm_inf(&(&state.p - &exact.p)),
        grid::norm_inf(&(&phi - &phi_exact)),
    ))
}

/// Builds the scheme and initial state of the manufactured problem.
pub fn setup(grid: Grid, params: SchemeParams) -> Result<(Scheme, State)> {
    let scheme = Scheme::new(grid, params)?.with_sources(sources())?;
    let exact = exact_state(0.0, &grid)?;
    let state = scheme.initial_state(exact.n, exact.p, 0.0)?;
    Ok((scheme, state))
}

/// Number of steps and the step size that land exactly on `t_final`
/// with a step as close as possible to `dt`.
pub fn step_plan(t_final: f64, dt: f64) -> (usize, f64) {
    let steps = ((t_final / dt).round() as usize).max(1);
    (steps, t_final / steps as f64)
}

/// Runs the manufactured problem to `t_final` with step `dt`.
pub fn run_single(grid: Grid, mut params: SchemeParams, t_final: f64) -> Result<MmsErrors> {
    let (steps, dt) = step_plan(t_final, params.dt);
    params.dt = dt;
    let (scheme, mut state) = setup(grid, params)?;
    for _ in 0..steps {
        state = scheme.step(&state)?.0;
    }
    let (err_n, err_p, err_phi) = errors_against_exact(&state)?;
    Ok(MmsErrors {
        h: grid.h(),
        dt,
        steps,
        err_n,
        err_p,
        err_phi,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub h: f64,
    pub err_n: f64,
    pub err_p: f64,
    pub err_phi: f64,
    pub order_n: Option<f64>,
    pub order_p: Option<f64>,
    pub order_phi: Option<f64>,
}

/// Observed order between two resolutions.
pub fn observed_order(err_coarse: f64, err_fine: f64, h_coarse: f64, h_fine: f64) -> f64 {
    (err_coarse / err_fine).ln() / (h_coarse / h_fine).ln()
}

/// Attaches orders to a list of single-run results (coarsest first).
pub fn rows_from_errors(errors: &[MmsErrors]) -> Vec<ConvergenceRow> {
    errors
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let prev = i.checked_sub(1).map(|j| errors[j]);
            let order = |f: fn(&MmsErrors) -> f64| prev.map(|p| observed_order(f(&p), f(e), p.h, e.h));
            ConvergenceRow {
                h: e.h,
                err_n: e.err_n,
                err_p: e.err_p,
                err_phi: e.err_phi,
                order_n: order(|e| e.err_n),
                order_p: order(|e| e.err_p),
                order_phi: order(|e| e.err_phi),
            }
        })
        .collect()
}

/// Refinement study with `Δt = h²` for every resolution in `cells`.
pub fn convergence_study(
    cells: &[usize],
    half_width: f64,
    t_final: f64,
    params: SchemeParams,
) -> Result<Vec<ConvergenceRow>> {
    let errors = cells
        .iter()
        .map(|&n| {
            let grid = Grid::new(2, n, half_width)?;
            let p = SchemeParams {
                dt: grid.h() * grid.h(),
                ..params
            };
            run_single(grid, p, t_final)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows_from_errors(&errors))
}

pub const TABLE_CSV_HEADER: &str = "h,err_p,order_p,err_n,order_n,err_phi,order_phi";

pub fn table_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = String::from(TABLE_CSV_HEADER);
    out.push('\n');
    let o = |x: Option<f64>| x.map(crate::diagnostics::fmt17).unwrap_or_default();
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            crate::diagnostics::fmt17(r.h),
            crate::diagnostics::fmt17(r.err_p),
            o(r.order_p),
            crate::diagnostics::fmt17(r.err_n),
            o(r.order_n),
            crate::diagnostics::fmt17(r.err_phi),
            o(r.order_phi),
        );
    }
    out
}

/// Aligned plain-text table: `h | error in p | order | error in n | order | error in ψ | order`.
pub fn table_text(rows: &[ConvergenceRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>8}  {:>12}  {:>5}  {:>12}  {:>5}  {:>12}  {:>5}",
        "h", "err p", "order", "err n", "order", "err psi", "order"
    );
    let o = |x: Option<f64>| x.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into());
    for r in rows {
        let _ = writeln!(
            out,
            "{:>8}  {:>12.3E}  {:>5}  {:>12.3E}  {:>5}  {:>12.3E}  {:>5}",
            format!("{}", (r.h * 1e12).round() / 1e12),
            r.err_p,
            o(r.order_p),
            r.err_n,
            o(r.order_n),
            r.err_phi,
            o(r.order_phi)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_values() {
        let c = ManufacturedCase;
        assert_eq!(c.n(0.0, 0.0, 0.3), 2.0);
        assert!((c.n(0.0, 0.125, 0.125) - 2.5).abs() < 1e-15);
        assert!((c.n(50.0, 0.3, 0.1) - 2.0).abs() < 1e-20 + 1e-15);
        assert!(c.phi(50.0, 0.3, 0.1).abs() < 1e-20);
    }

    #[test]
    fn requires_2d_periodic_grid() {
        let g3 = Grid::new(3, 4, 1.0).unwrap();
        assert!(matches!(exact_state(0.0, &g3), Err(PnpError::WrongDimension { .. })));
        assert!(matches!(source_terms(0.0, &g3), Err(PnpError::WrongDimension { .. })));
        let odd = Grid::new(2, 4, 0.7).unwrap();
        assert!(exact_state(0.0, &odd).is_err());
        assert!(exact_state(0.0, &Grid::new(2, 4, 0.5).unwrap()).is_ok());
    }

    #[test]
    fn net_charge_has_zero_mean() {
        for &l in &[0.5, 1.0] {
            let g = Grid::new(2, 20, l).unwrap();
            for &t in &[0.0, 0.05, 0.1, 1.0] {
                let e = exact_state(t, &g).unwrap();
                let s = source_terms(t, &g).unwrap();
                let q = crate::diagnostics::net_charge(&e.n, &e.p, Some(&s.rho_f));
                assert!(q.mean().abs() < 1e-13, "t={t}: {}", q.mean());
            }
        }
    }

    #[test]
    fn step_plan_lands_on_final_time() {
        let (steps, dt) = step_plan(0.1, 0.05f64.powi(2));
        assert_eq!(steps, 40);
        assert!((steps as f64 * dt - 0.1).abs() < 1e-15);
    }

    #[test]
    fn orders_from_errors() {
        let e = |h: f64, k: f64| MmsErrors { h, dt: h * h, steps: 1, err_n: k * h * h, err_p: k * h * h, err_phi: k * h };
        let rows = rows_from_errors(&[e(0.1, 3.0), e(0.05, 3.0)]);
        assert!(rows[0].order_n.is_none());
        assert!((rows[1].order_n.unwrap() - 2.0).abs() < 1e-12);
        assert!((rows[1].order_phi.unwrap() - 1.0).abs() < 1e-12);
        let csv = table_csv(&rows);
        assert!(csv.starts_with(TABLE_CSV_HEADER));
        assert_eq!(csv.lines().nth(1).unwrap().split(',').nth(2), Some(""));
    }
}
