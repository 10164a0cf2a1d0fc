//! One step of the semi-implicit scheme
//!
//! ```text
//! (n' - n) / Δt = ∇_h · (M̆_n ∇_h μ_n'),   μ_n' = ln n' - φ'
//! (p' - p) / Δt = ∇_h · (M̆_p ∇_h μ_p'),   μ_p' = ln p' + φ'
//! -Δ_h φ' = p' - n' (+ ρ^f)
//! ```
//!
//! with face mobilities `M̆_n = A(n)`, `M̆_p = D · A(p)` frozen at the old
//! level. The nonlinear system is solved by a relaxed linearized iteration:
//! each stage solves two SPD systems for `w = n*/n^k` and `w = p*/p^k`,
//! refreshes the potential, and blends the result with the previous iterate.

use std::sync::Arc;

use crate::diagnostics::{self, ensure_positive, net_charge, StepReport};
use crate::elliptic::{spd_solve, EllipticSystem, LinearSolverOptions, PoissonSolver};
use crate::error::{PnpError, Result};
use crate::grid::{self, CellField, FaceField, Grid};

/// Concentrations, potential and time.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub n: CellField,
    pub p: CellField,
    pub phi: CellField,
    pub time: f64,
}

impl State {
    /// Builds a state from positive concentrations, solving for the potential.
    pub fn new(
        n: CellField,
        p: CellField,
        fixed_charge: Option<&CellField>,
        solver: &PoissonSolver,
        time: f64,
    ) -> Result<Self> {
        if n.grid() != p.grid() || n.grid() != solver.grid() {
            return Err(PnpError::GridMismatch);
        }
        ensure_positive(&n)?;
        ensure_positive(&p)?;
        let phi = solver.solve(&net_charge(&n, &p, fixed_charge))?;
        Ok(Self { n, p, phi, time })
    }

    pub fn grid(&self) -> &Grid {
        self.n.grid()
    }

    /// Exchanges the species and negates the potential.
    pub fn swapped(&self) -> Self {
        Self {
            n: self.p.clone(),
            p: self.n.clone(),
            phi: self.phi.map(|v| -v),
            time: self.time,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeParams {
    pub dt: f64,
    /// Diffusivity ratio `D = D_p / D_n`.
    pub diffusivity: f64,
    /// Relaxation weight on the previous iterate, in `(0, 1)`.
    pub omega_r: f64,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub linear_tol: f64,
    pub linear_max_iters: usize,
    pub jacobi: bool,
}

impl Default for SchemeParams {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            diffusivity: 1.0,
            omega_r: 0.2,
            picard_tol: 1e-10,
            picard_max: 500,
            linear_tol: 1e-12,
            linear_max_iters: 10_000,
            jacobi: false,
        }
    }
}

impl SchemeParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &str, reason: String| {
            Err(PnpError::InvalidParameter {
                name: name.into(),
                reason,
            })
        };
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt", format!("must be positive, got {}", self.dt));
        }
        if !(self.diffusivity > 0.0 && self.diffusivity.is_finite()) {
            return bad("D", format!("must be positive, got {}", self.diffusivity));
        }
        if !(self.omega_r > 0.0 && self.omega_r < 1.0) {
            return bad("omega_r", format!("must lie in (0, 1), got {}", self.omega_r));
        }
        if !(self.picard_tol > 0.0) {
            return bad("picard_tol", format!("must be positive, got {}", self.picard_tol));
        }
        if self.picard_max == 0 {
            return bad("picard_max", "must be at least 1".into());
        }
        if !(self.linear_tol > 0.0) {
            return bad("linear_tol", format!("must be positive, got {}", self.linear_tol));
        }
        Ok(())
    }

    fn linear_options(&self) -> LinearSolverOptions {
        LinearSolverOptions {
            tolerance: self.linear_tol,
            max_iters: self.linear_max_iters,
            jacobi: self.jacobi,
        }
    }
}

/// Time-dependent cell-field generator, evaluated as `f(t, grid)`.
pub type Forcing = Arc<dyn Fn(f64, &Grid) -> CellField + Send + Sync>;

/// Background fixed charge `ρ^f`, either frozen or time-dependent.
#[derive(Clone)]
pub enum FixedCharge {
    Static(CellField),
    Dynamic(Forcing),
}

impl FixedCharge {
    pub fn at(&self, t: f64, grid: &Grid) -> CellField {
        match self {
            FixedCharge::Static(rho) => rho.clone(),
            FixedCharge::Dynamic(f) => f(t, grid),
        }
    }
}

/// Forcing terms for the two species and the fixed background charge.
#[derive(Clone, Default)]
pub struct Sources {
    pub f_n: Option<Forcing>,
    pub f_p: Option<Forcing>,
    pub fixed_charge: Option<FixedCharge>,
}

impl std::fmt::Debug for Sources {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Sources")
            .field("f_n", &self.f_n.is_some())
            .field("f_p", &self.f_p.is_some())
            .field("fixed_charge", &self.fixed_charge.is_some())
            .finish()
    }
}

impl Sources {
    pub fn fixed_charge(rho: CellField) -> Self {
        Self {
            fixed_charge: Some(FixedCharge::Static(rho)),
            ..Default::default()
        }
    }
}

/// Face mobility: `scale` times the arithmetic mean of the two adjacent cells.
pub fn face_mobility(c: &CellField, scale: f64) -> Result<FaceField> {
    ensure_positive(c)?;
    let mut m = grid::face_average(c);
    if scale != 1.0 {
        for axis in 0..c.grid().dim() {
            m.component_mut(axis).iter_mut().for_each(|v| *v *= scale);
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChemicalPotentials {
    pub mu_n: CellField,
    pub mu_p: CellField,
    pub phi: CellField,
}

/// `μ_n = ln n - φ`, `μ_p = ln p + φ` with `-Δ_h φ = p - n (+ ρ^f)`.
pub fn chemical_potentials(
    n: &CellField,
    p: &CellField,
    fixed_charge: Option<&CellField>,
    solver: &PoissonSolver,
) -> Result<ChemicalPotentials> {
    ensure_positive(n)?;
    ensure_positive(p)?;
    let phi = solver.solve(&net_charge(n, p, fixed_charge))?;
    Ok(potentials_with(n, p, phi))
}

fn potentials_with(n: &CellField, p: &CellField, phi: CellField) -> ChemicalPotentials {
    ChemicalPotentials {
        mu_n: n.zip_map(&phi, |c, f| c.ln() - f),
        mu_p: p.zip_map(&phi, |c, f| c.ln() + f),
        phi,
    }
}

/// One inner iterate, as seen by a trace hook.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardTrace {
    pub iteration: usize,
    /// `‖n^{k+1} - n^k‖_2 + ‖p^{k+1} - p^k‖_2`.
    pub increment: f64,
    pub linear_iters_n: usize,
    pub linear_iters_p: usize,
    pub omega_r: f64,
}

/// The time integrator: grid, parameters, Poisson solver and sources.
#[derive(Debug, Clone)]
pub struct Scheme {
    grid: Grid,
    params: SchemeParams,
    poisson: PoissonSolver,
    sources: Sources,
}

struct Frozen {
    rho: Option<CellField>,
    mob_n: FaceField,
    mob_p: FaceField,
    f_n: Option<CellField>,
    f_p: Option<CellField>,
}

impl Scheme {
    pub fn new(grid: Grid, params: SchemeParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            grid,
            params,
            poisson: PoissonSolver::new(grid),
            sources: Sources::default(),
        })
    }

    pub fn with_sources(mut self, sources: Sources) -> Result<Self> {
        if let Some(FixedCharge::Static(rho)) = &sources.fixed_charge {
            if *rho.grid() != self.grid {
                return Err(PnpError::GridMismatch);
            }
        }
        self.sources = sources;
        Ok(self)
    }

    pub fn with_poisson_solver(mut self, solver: PoissonSolver) -> Result<Self> {
        if *solver.grid() != self.grid {
            return Err(PnpError::GridMismatch);
        }
        self.poisson = solver;
        Ok(self)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    pub fn poisson(&self) -> &PoissonSolver {
        &self.poisson
    }

    pub fn sources(&self) -> &Sources {
        &self.sources
    }

    /// `ρ^f` at time `t`, if any.
    pub fn fixed_charge_at(&self, t: f64) -> Option<CellField> {
        self.sources.fixed_charge.as_ref().map(|r| r.at(t, &self.grid))
    }

    /// Builds a consistent state (potential included) from concentrations.
    pub fn initial_state(&self, n: CellField, p: CellField, time: f64) -> Result<State> {
        State::new(n, p, self.fixed_charge_at(time).as_ref(), &self.poisson, time)
    }

    /// Diagnostics of a state on its own (no dissipation, no iterations).
    pub fn report(&self, s: &State) -> Result<StepReport> {
        let obs = diagnostics::observables(&s.n, &s.p);
        Ok(StepReport {
            time: s.time,
            energy: self.energy(s)?,
            mass_n: obs.mass_n,
            mass_p: obs.mass_p,
            c_min: obs.c_min,
            dissipation: 0.0,
            picard_iters: 0,
            residual: 0.0,
        })
    }

    pub fn energy(&self, s: &State) -> Result<f64> {
        diagnostics::discrete_energy(&self.poisson, &s.n, &s.p, self.fixed_charge_at(s.time).as_ref())
    }

    pub fn step(&self, s: &State) -> Result<(State, StepReport)> {
        self.step_traced(s, &mut |_| {})
    }

    /// Advances one step, calling `hook` after every inner iterate.
    ///
    /// If an iterate leaves the positive cone the step is retried once with
    /// heavier relaxation `(1 + ω_r) / 2`.
    pub fn step_traced(
        &self,
        s: &State,
        hook: &mut dyn FnMut(&PicardTrace),
    ) -> Result<(State, StepReport)> {
        if *s.grid() != self.grid {
            return Err(PnpError::GridMismatch);
        }
        ensure_positive(&s.n)?;
        ensure_positive(&s.p)?;
        let frozen = self.freeze(s)?;
        let omega = self.params.omega_r;
        let (n, p, iterations, residual) = match self.iterate(s, &frozen, omega, hook) {
            Err(PnpError::PositivityLoss { .. }) => {
                self.iterate(s, &frozen, 0.5 * (1.0 + omega), hook)?
            }
            other => other?,
        };

        let pot = chemical_potentials(&n, &p, frozen.rho.as_ref(), &self.poisson)?;
        let dissipation = diagnostics::dissipation_rate(
            self.params.dt,
            &frozen.mob_n,
            &pot.mu_n,
            &frozen.mob_p,
            &pot.mu_p,
        )?;
        let next = State {
            n,
            p,
            phi: pot.phi,
            time: s.time + self.params.dt,
        };
        let obs = diagnostics::observables(&next.n, &next.p);
        let report = StepReport {
            time: next.time,
            energy: self.energy(&next)?,
            mass_n: obs.mass_n,
            mass_p: obs.mass_p,
            c_min: obs.c_min,
            dissipation,
            picard_iters: iterations,
            residual,
        };
        Ok((next, report))
    }

    fn freeze(&self, s: &State) -> Result<Frozen> {
        let t = s.time + self.params.dt;
        Ok(Frozen {
            rho: self.fixed_charge_at(t),
            mob_n: face_mobility(&s.n, 1.0)?,
            mob_p: face_mobility(&s.p, self.params.diffusivity)?,
            f_n: self.sources.f_n.as_ref().map(|f| f(t, &self.grid)),
            f_p: self.sources.f_p.as_ref().map(|f| f(t, &self.grid)),
        })
    }

    /// Relative residual of the fully discrete system at `(n, p)`:
    /// `(‖R_n‖_2 + ‖R_p‖_2) / (1 + ‖n‖_2 + ‖p‖_2)` with
    /// `R_n = n - n^m - Δt ∇_h·(M̆_n ∇_h μ_n) - Δt f_n` and likewise for `p`.
    pub fn scheme_residual(&self, old: &State, n: &CellField, p: &CellField) -> Result<f64> {
        let frozen = self.freeze(old)?;
        self.residual_with(old, &frozen, n, p)
    }

    fn residual_with(&self, old: &State, fz: &Frozen, n: &CellField, p: &CellField) -> Result<f64> {
        let pot = chemical_potentials(n, p, fz.rho.as_ref(), &self.poisson)?;
        let dt = self.params.dt;
        let species = [
            (n, &old.n, &fz.mob_n, &pot.mu_n, fz.f_n.as_ref()),
            (p, &old.p, &fz.mob_p, &pot.mu_p, fz.f_p.as_ref()),
        ];
        let mut total = 0.0;
        for (c, c_old, mob, mu, f) in species {
            let mut r = c - c_old;
            r.add_scaled(-dt, &grid::variable_coeff_div(mob, mu)?);
            if let Some(f) = f {
                r.add_scaled(-dt, f);
            }
            total += grid::norm_l2(&r);
        }
        Ok(total / (1.0 + grid::norm_l2(n) + grid::norm_l2(p)))
    }

    /// Relaxed linearized iteration; returns `(n, p, iterations, residual)`.
    fn iterate(
        &self,
        s: &State,
        fz: &Frozen,
        omega: f64,
        hook: &mut dyn FnMut(&PicardTrace),
    ) -> Result<(CellField, CellField, usize, f64)> {
        let dt = self.params.dt;
        let tol = self.params.picard_tol;
        let opts = self.params.linear_options();
        let rho = fz.rho.as_ref();

        let target = |c: &CellField, f: Option<&CellField>| c.mean() + f.map_or(0.0, |f| dt * f.mean());
        let target_n = target(&s.n, fz.f_n.as_ref());
        let target_p = target(&s.p, fz.f_p.as_ref());

        let mut n_k = s.n.clone();
        let mut p_k = s.p.clone();
        let mut phi_k = s.phi.clone();
        let mut w_n = CellField::constant(self.grid, 1.0);
        let mut w_p = CellField::constant(self.grid, 1.0);
        let mut sys_n = EllipticSystem::new(fz.mob_n.clone(), n_k.clone(), dt)?;
        let mut sys_p = EllipticSystem::new(fz.mob_p.clone(), p_k.clone(), dt)?;
        let (mut increment, mut residual) = (f64::INFINITY, f64::INFINITY);

        for iteration in 1..=self.params.picard_max {
            sys_n.set_mass_weight(n_k.clone())?;
            sys_p.set_mass_weight(p_k.clone())?;

            let chem_n = n_k.zip_map(&phi_k, |c, f| c.ln() - f);
            let chem_p = p_k.zip_map(&phi_k, |c, f| c.ln() + f);
            let rhs_n = linear_rhs(&s.n, &fz.mob_n, &chem_n, fz.f_n.as_ref(), dt)?;
            let rhs_p = linear_rhs(&s.p, &fz.mob_p, &chem_p, fz.f_p.as_ref(), dt)?;

            let (wn, stats_n) = spd_solve(&sys_n, &rhs_n, &opts, Some(&w_n))?;
            let (wp, stats_p) = spd_solve(&sys_p, &rhs_p, &opts, Some(&w_p))?;
            w_n = wn;
            w_p = wp;

            let n_star = starred(&n_k, &w_n, target_n);
            let p_star = starred(&p_k, &w_p, target_p);
            let phi_star = self.poisson.solve(&net_charge(&n_star, &p_star, rho))?;

            let blend = |old: &CellField, new: &CellField| old.zip_map(new, |a, b| omega * a + (1.0 - omega) * b);
            let n_next = blend(&n_k, &n_star);
            let p_next = blend(&p_k, &p_star);
            for c in [&n_next, &p_next] {
                if let Some((cell, value)) = c.first_non_positive() {
                    return Err(PnpError::PositivityLoss { cell, value });
                }
            }
            phi_k = blend(&phi_k, &phi_star);

            increment = grid::norm_l2(&(&n_next - &n_k)) + grid::norm_l2(&(&p_next - &p_k));
            let scale = 1.0 + grid::norm_l2(&n_k) + grid::norm_l2(&p_k);
            n_k = n_next;
            p_k = p_next;
            hook(&PicardTrace {
                iteration,
                increment,
                linear_iters_n: stats_n.iterations,
                linear_iters_p: stats_p.iterations,
                omega_r: omega,
            });

            if increment <= tol * scale {
                residual = self.residual_with(s, fz, &n_k, &p_k)?;
                if residual <= tol {
                    return Ok((n_k, p_k, iteration, residual));
                }
            }
        }
        Err(PnpError::PicardNoConvergence {
            iterations: self.params.picard_max,
            increment,
            residual,
        })
    }
}

/// `c^m + Δt ∇_h·(M̆ ∇_h chem) + Δt f`.
fn linear_rhs(
    c_old: &CellField,
    mobility: &FaceField,
    chem: &CellField,
    forcing: Option<&CellField>,
    dt: f64,
) -> Result<CellField> {
    let mut rhs = c_old.clone();
    rhs.add_scaled(dt, &grid::variable_coeff_div(mobility, chem)?);
    if let Some(f) = forcing {
        rhs.add_scaled(dt, f);
    }
    Ok(rhs)
}

/// `c^k · w`, shifted by a constant so its mean is exactly `target`
/// (removes the linear solver's residual from the conserved mean).
fn starred(c_k: &CellField, w: &CellField, target: f64) -> CellField {
    let mut star = c_k.zip_map(w, |c, w| c * w);
    let shift = target - star.mean();
    star.values_mut().iter_mut().for_each(|v| *v += shift);
    star
}
