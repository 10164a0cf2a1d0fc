//! Elliptic solvers: the mean-zero periodic Poisson inverse `(-Δ_h)^{-1}`,
//! the discrete `H^{-1}` norm, and the shifted variable-coefficient SPD
//! systems of the inner iteration.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{PnpError, Result};
use crate::grid::{self, CellField, FaceField, Grid};

/// Relative size of a right-hand-side mean, measured against `‖f‖_2`,
/// above which the Poisson problem is considered unsolvable.
pub const MEAN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoissonMethod {
    /// Exact diagonalization of the periodic stencil in the discrete Fourier basis.
    Spectral,
    ConjugateGradient,
}

/// Iteration statistics of a Krylov solve.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final relative residual `‖b - A x‖ / ‖b‖`.
    pub residual: f64,
}

/// Solves `-Δ_h ψ = f` on the mean-zero subspace.
#[derive(Clone)]
pub struct PoissonSolver {
    grid: Grid,
    method: PoissonMethod,
    tolerance: f64,
    max_iters: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    // eigenvalues of -Δ_h, zero mode included (= 0)
    eigenvalues: Vec<f64>,
}

impl std::fmt::Debug for PoissonSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PoissonSolver")
            .field("grid", &self.grid)
            .field("method", &self.method)
            .field("tolerance", &self.tolerance)
            .field("max_iters", &self.max_iters)
            .finish()
    }
}

/// Eigenvalue of `-Δ_h` for the 1D wavenumber `k` on `n` cells of width `h`.
pub fn stencil_eigenvalue_1d(k: usize, n: usize, h: f64) -> f64 {
    let s = (std::f64::consts::PI * k as f64 / n as f64).sin();
    4.0 * s * s / (h * h)
}

impl PoissonSolver {
    pub fn new(grid: Grid) -> Self {
        Self::with_method(grid, PoissonMethod::Spectral)
    }

    pub fn with_method(grid: Grid, method: PoissonMethod) -> Self {
        let mut planner = FftPlanner::new();
        let n = grid.n();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let one_d: Vec<f64> = (0..n).map(|k| stencil_eigenvalue_1d(k, n, grid.h())).collect();
        let eigenvalues = (0..grid.len())
            .map(|l| {
                let mi = grid.multi_index(l);
                (0..grid.dim()).map(|a| one_d[mi[a]]).sum()
            })
            .collect();
        Self {
            grid,
            method,
            tolerance: 1e-12,
            max_iters: 20 * grid.len().max(100),
            forward,
            inverse,
            eigenvalues,
        }
    }

    /// Tolerance and iteration cap for the conjugate-gradient method.
    pub fn with_iteration_controls(mut self, tolerance: f64, max_iters: usize) -> Self {
        self.tolerance = tolerance;
        self.max_iters = max_iters;
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn method(&self) -> PoissonMethod {
        self.method
    }

    /// Returns the mean-zero `ψ` with `-Δ_h ψ = f`.
    pub fn solve(&self, f: &CellField) -> Result<CellField> {
        self.solve_with_stats(f).map(|(psi, _)| psi)
    }

    pub fn solve_with_stats(&self, f: &CellField) -> Result<(CellField, SolveStats)> {
        if *f.grid() != self.grid {
            return Err(PnpError::GridMismatch);
        }
        let mut rhs = f.clone();
        check_mean_zero(&rhs)?;
        rhs.remove_mean();
        match self.method {
            PoissonMethod::Spectral => Ok((self.solve_spectral(&rhs), SolveStats::default())),
            PoissonMethod::ConjugateGradient => {
                let mut x = vec![0.0; self.grid.len()];
                let g = self.grid;
                let stats = conjugate_gradient(
                    |v, out| {
                        grid::flux_divergence_into(None, v, &g, out);
                        out.iter_mut().for_each(|o| *o = -*o);
                    },
                    None,
                    rhs.values(),
                    &mut x,
                    self.tolerance,
                    self.max_iters,
                )?;
                let mut psi = CellField::from_values(g, x)?;
                psi.remove_mean();
                Ok((psi, stats))
            }
        }
    }

    fn solve_spectral(&self, f: &CellField) -> CellField {
        let mut buf: Vec<Complex<f64>> = f.values().iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.transform(&mut buf, &self.forward);
        for (c, &lambda) in buf.iter_mut().zip(&self.eigenvalues) {
            *c = if lambda > 0.0 { *c / lambda } else { Complex::new(0.0, 0.0) };
        }
        self.transform(&mut buf, &self.inverse);
        let scale = 1.0 / self.grid.len() as f64;
        let values = buf.iter().map(|c| c.re * scale).collect();
        CellField::from_values(self.grid, values).expect("finite spectral solution")
    }

    fn transform(&self, buf: &mut [Complex<f64>], fft: &Arc<dyn Fft<f64>>) {
        let g = self.grid;
        let n = g.n();
        let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        let mut line = vec![Complex::new(0.0, 0.0); n];
        for axis in 0..g.dim() {
            let s = g.stride(axis);
            if s == 1 {
                fft.process_with_scratch(buf, &mut scratch);
                continue;
            }
            for outer in (0..g.len()).step_by(s * n) {
                for inner in 0..s {
                    for (c, slot) in line.iter_mut().enumerate() {
                        *slot = buf[outer + c * s + inner];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for (c, v) in line.iter().enumerate() {
                        buf[outer + c * s + inner] = *v;
                    }
                }
            }
        }
    }
}

fn check_mean_zero(f: &CellField) -> Result<()> {
    let mean = f.mean();
    let norm = grid::norm_l2(f);
    if mean.abs() > MEAN_TOLERANCE * norm {
        return Err(PnpError::NonZeroMean { mean, norm });
    }
    Ok(())
}

/// Discrete `H^{-1}` norm `‖f‖_{-1,h} = √⟨f, (-Δ_h)^{-1} f⟩`.
pub fn h_inv_norm(solver: &PoissonSolver, f: &CellField) -> Result<f64> {
    let psi = solver.solve(f)?;
    let s = grid::inner_product(f, &psi)?;
    Ok(s.max(0.0).sqrt())
}

/// The operator `w ↦ mass_weight · w - shift · ∇_h · (mobility ∇_h w)`.
#[derive(Debug, Clone)]
pub struct EllipticSystem {
    mobility: FaceField,
    mass_weight: CellField,
    shift: f64,
}

impl EllipticSystem {
    pub fn new(mobility: FaceField, mass_weight: CellField, shift: f64) -> Result<Self> {
        if mobility.grid() != mass_weight.grid() {
            return Err(PnpError::GridMismatch);
        }
        if let Some((index, value)) = mobility
            .components()
            .iter()
            .flatten()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0))
        {
            return Err(PnpError::NonPositiveCoefficient { index, value: *value });
        }
        if let Some((index, value)) = mass_weight.first_non_positive() {
            return Err(PnpError::NonPositiveCoefficient { index, value });
        }
        if !(shift >= 0.0 && shift.is_finite()) {
            return Err(PnpError::InvalidParameter {
                name: "shift".into(),
                reason: format!("must be finite and non-negative, got {shift}"),
            });
        }
        Ok(Self {
            mobility,
            mass_weight,
            shift,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.mass_weight.grid()
    }

    pub fn mobility(&self) -> &FaceField {
        &self.mobility
    }

    pub fn mass_weight(&self) -> &CellField {
        &self.mass_weight
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// Replaces the diagonal term, keeping mobility and shift.
    pub fn set_mass_weight(&mut self, mass_weight: CellField) -> Result<()> {
        if mass_weight.grid() != self.mass_weight.grid() {
            return Err(PnpError::GridMismatch);
        }
        if let Some((index, value)) = mass_weight.first_non_positive() {
            return Err(PnpError::NonPositiveCoefficient { index, value });
        }
        self.mass_weight = mass_weight;
        Ok(())
    }

    pub fn apply_into(&self, w: &[f64], out: &mut [f64]) {
        grid::flux_divergence_into(Some(&self.mobility), w, self.grid(), out);
        for ((o, &m), &x) in out.iter_mut().zip(self.mass_weight.values()).zip(w) {
            *o = m * x - self.shift * *o;
        }
    }

    pub fn apply(&self, w: &CellField) -> CellField {
        let mut out = vec![0.0; w.values().len()];
        self.apply_into(w.values(), &mut out);
        CellField::from_values(*self.grid(), out).expect("finite operator output")
    }

    /// Diagonal of the assembled operator.
    pub fn diagonal(&self) -> Vec<f64> {
        let g = self.grid();
        let h2 = g.h() * g.h();
        let mut diag: Vec<f64> = self.mass_weight.values().to_vec();
        for axis in 0..g.dim() {
            let m = self.mobility.component(axis);
            let s = g.stride(axis);
            for (l, d) in diag.iter_mut().enumerate() {
                let c = g.multi_index(l)[axis];
                let west = if c == 0 { l + (g.n() - 1) * s } else { l - s };
                *d += self.shift * (m[l] + m[west]) / h2;
            }
        }
        diag
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSolverOptions {
    pub tolerance: f64,
    pub max_iters: usize,
    pub jacobi: bool,
}

impl Default for LinearSolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iters: 10_000,
            jacobi: false,
        }
    }
}

/// Solves the SPD system `sys · w = rhs` by conjugate gradients, starting
/// from `initial` when given.
pub fn spd_solve(
    sys: &EllipticSystem,
    rhs: &CellField,
    options: &LinearSolverOptions,
    initial: Option<&CellField>,
) -> Result<(CellField, SolveStats)> {
    if rhs.grid() != sys.grid() {
        return Err(PnpError::GridMismatch);
    }
    let mut x = match initial {
        Some(w) => w.values().to_vec(),
        None => vec![0.0; rhs.values().len()],
    };
    let inv_diag: Option<Vec<f64>> = options
        .jacobi
        .then(|| sys.diagonal().iter().map(|d| 1.0 / d).collect());
    let stats = conjugate_gradient(
        |v, out| sys.apply_into(v, out),
        inv_diag.as_deref(),
        rhs.values(),
        &mut x,
        options.tolerance,
        options.max_iters,
    )?;
    Ok((CellField::from_values(*sys.grid(), x)?, stats))
}

/// (Preconditioned) conjugate gradients on `A x = b` for symmetric positive
/// definite `A`, with `x` holding the initial guess on entry.
pub(crate) fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    inv_diag: Option<&[f64]>,
    b: &[f64],
    x: &mut [f64],
    tolerance: f64,
    max_iters: usize,
) -> Result<SolveStats> {
    let n = b.len();
    let dot = grid::dot_unchecked;
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats::default());
    }

    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let precondition = |r: &[f64], z: &mut [f64]| match inv_diag {
        Some(d) => z.iter_mut().zip(r).zip(d).for_each(|((z, r), d)| *z = r * d),
        None => z.copy_from_slice(r),
    };
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut residual = dot(&r, &r).sqrt() / b_norm;

    for iteration in 0..max_iters {
        if residual <= tolerance {
            return Ok(SolveStats { iterations: iteration, residual });
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(PnpError::NoConvergence { iterations: iteration, residual });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr = dot(&r, &r);
        let rz_next = match inv_diag {
            Some(_) => {
                precondition(&r, &mut z);
                dot(&r, &z)
            }
            None => {
                z.copy_from_slice(&r);
                rr
            }
        };
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        residual = rr.sqrt() / b_norm;
    }
    if residual <= tolerance {
        return Ok(SolveStats { iterations: max_iters, residual });
    }
    Err(PnpError::NoConvergence { iterations: max_iters, residual })
}
