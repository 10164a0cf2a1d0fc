//! Shared helpers for integration tests: seeded random fields and dense
//! matrix oracles assembled directly from the stencil definitions.
#![allow(dead_code)]

use std::ops::AddAssign;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pnp_core::grid;
use pnp_core::mms::{self, ManufacturedCase};
use pnp_core::scheme::{face_mobility, SchemeParams, State};
use pnp_core::{CellField, FaceField, Grid};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_cell(grid: Grid, rng: &mut impl Rng, lo: f64, hi: f64) -> CellField {
    let v = (0..grid.len()).map(|_| rng.gen_range(lo..hi)).collect();
    CellField::from_values(grid, v).unwrap()
}

pub fn random_face(grid: Grid, rng: &mut impl Rng, lo: f64, hi: f64) -> FaceField {
    let comps = (0..grid.dim())
        .map(|_| (0..grid.len()).map(|_| rng.gen_range(lo..hi)).collect())
        .collect();
    FaceField::from_components(grid, comps).unwrap()
}

/// Random concentrations with equal means, as electroneutrality requires.
pub fn neutral_pair(g: Grid, r: &mut impl Rng, lo: f64, hi: f64) -> (CellField, CellField) {
    let n = random_cell(g, r, lo, hi);
    let p = random_cell(g, r, lo, hi);
    let scale = n.mean() / p.mean();
    (n, p.map(|v| v * scale))
}

pub fn mean_zero(mut f: CellField) -> CellField {
    f.remove_mean();
    f
}

pub fn to_vec(f: &CellField) -> DVector<f64> {
    DVector::from_column_slice(f.values())
}

pub fn from_vec(grid: Grid, v: &DVector<f64>) -> CellField {
    CellField::from_values(grid, v.iter().copied().collect()).unwrap()
}

/// Dense `∇_h·(D ∇_h ·)` assembled cell by cell from the face coefficients.
pub fn dense_flux_operator(grid: Grid, coeff: Option<&FaceField>) -> DMatrix<f64> {
    let len = grid.len();
    let h2 = grid.h() * grid.h();
    let mut a = DMatrix::zeros(len, len);
    for l in 0..len {
        let mi = grid.multi_index(l);
        for axis in 0..grid.dim() {
            let mut e = [0i64; 3];
            let mut w = [0i64; 3];
            for k in 0..grid.dim() {
                e[k] = mi[k] as i64;
                w[k] = mi[k] as i64;
            }
            e[axis] += 1;
            w[axis] -= 1;
            let e = grid.index(&e[..grid.dim()]);
            let w = grid.index(&w[..grid.dim()]);
            let (de, dw) = match coeff {
                Some(c) => (c.component(axis)[l], c.component(axis)[w]),
                None => (1.0, 1.0),
            };
            a[(l, e)] += de / h2;
            a[(l, l)] -= (de + dw) / h2;
            a[(l, w)] += dw / h2;
        }
    }
    a
}

/// Dense `(-Δ_h)⁻¹` on mean-zero fields, via `(-Δ_h + 𝟙𝟙ᵀ/len)⁻¹`.
pub fn dense_poisson_inverse(grid: Grid) -> DMatrix<f64> {
    let len = grid.len();
    let mut a = -dense_flux_operator(grid, None);
    a.add_scalar_mut(1.0 / len as f64);
    let inv = a.try_inverse().expect("regularized Laplacian is invertible");
    // Project so that outputs are mean-zero exactly as the operator's range.
    let proj = DMatrix::identity(len, len) - DMatrix::from_element(len, len, 1.0 / len as f64);
    &proj * inv * &proj
}

/// Energy `h^d Σ (n ln n + p ln p) + ½ ⟨q, (-Δ_h)⁻¹ q⟩`, `q = p - n + ρ`.
pub fn dense_energy(grid: Grid, n: &CellField, p: &CellField, rho: Option<&CellField>) -> f64 {
    let vol = grid.cell_volume();
    let entropy: f64 = n.values().iter().chain(p.values()).map(|c| c * c.ln()).sum::<f64>() * vol;
    let mut q = to_vec(p) - to_vec(n);
    if let Some(r) = rho {
        q += to_vec(r);
    }
    let g = dense_poisson_inverse(grid);
    entropy + 0.5 * vol * q.dot(&(g * &q))
}

/// Solves the fully coupled implicit step by damped Newton on dense
/// matrices, independently of the relaxed fixed-point solver.
pub fn newton_step(
    old: &State,
    params: &SchemeParams,
    rho: Option<&CellField>,
    tol: f64,
) -> (CellField, CellField) {
    let grid = *old.grid();
    let len = grid.len();
    let dt = params.dt;
    let ln = dense_flux_operator(grid, Some(&face_mobility(&old.n, 1.0).unwrap()));
    let lp = dense_flux_operator(grid, Some(&face_mobility(&old.p, params.diffusivity).unwrap()));
    let g = dense_poisson_inverse(grid);
    let rho = rho.map(to_vec).unwrap_or_else(|| DVector::zeros(len));
    let (n0, p0) = (to_vec(&old.n), to_vec(&old.p));

    let residual = |n: &DVector<f64>, p: &DVector<f64>| -> DVector<f64> {
        let phi = &g * (p - n + &rho);
        let mu_n = n.map(f64::ln) - &phi;
        let mu_p = p.map(f64::ln) + &phi;
        let rn = n - &n0 - dt * (&ln * mu_n);
        let rp = p - &p0 - dt * (&lp * mu_p);
        let mut r = DVector::zeros(2 * len);
        r.rows_mut(0, len).copy_from(&rn);
        r.rows_mut(len, len).copy_from(&rp);
        r
    };

    let (mut n, mut p) = (n0.clone(), p0.clone());
    let mut r = residual(&n, &p);
    for _ in 0..100 {
        if r.amax() <= tol {
            break;
        }
        let inv_n = DMatrix::from_diagonal(&n.map(|v| 1.0 / v));
        let inv_p = DMatrix::from_diagonal(&p.map(|v| 1.0 / v));
        let mut jac = DMatrix::identity(2 * len, 2 * len);
        let dt_ln = dt * &ln;
        let dt_lp = dt * &lp;
        jac.view_mut((0, 0), (len, len)).add_assign(-(&dt_ln * (&inv_n + &g)));
        jac.view_mut((0, len), (len, len)).add_assign(&dt_ln * &g);
        jac.view_mut((len, 0), (len, len)).add_assign(&dt_lp * &g);
        jac.view_mut((len, len), (len, len)).add_assign(-(&dt_lp * (&inv_p + &g)));
        let delta = jac.lu().solve(&(-&r)).expect("nonsingular Jacobian");
        let mut step = 1.0;
        loop {
            let nn = &n + step * delta.rows(0, len);
            let pp = &p + step * delta.rows(len, len);
            if nn.min() > 0.0 && pp.min() > 0.0 {
                let rr = residual(&nn, &pp);
                if rr.norm() < r.norm() || step < 1e-8 {
                    n = nn;
                    p = pp;
                    r = rr;
                    break;
                }
            }
            step *= 0.5;
        }
    }
    assert!(r.amax() <= tol, "Newton oracle did not converge: {}", r.amax());
    (from_vec(grid, &n), from_vec(grid, &p))
}

/// Sixth-order central first and second derivatives of a scalar function.
pub fn d1(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    let c = [3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0];
    (1..=3)
        .map(|k| c[k - 1] * (f(x + k as f64 * h) - f(x - k as f64 * h)))
        .sum::<f64>()
        / h
}

pub fn d2(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    let c = [3.0 / 2.0, -3.0 / 20.0, 1.0 / 90.0];
    let s: f64 = (1..=3)
        .map(|k| c[k - 1] * (f(x + k as f64 * h) + f(x - k as f64 * h)))
        .sum();
    (s - 49.0 / 18.0 * f(x)) / (h * h)
}

pub const FD_STEP: f64 = 5e-3;

/// Residuals of the three equations at `(t, x, y)` with derivatives taken
/// numerically from the closed-form fields.
pub fn mms_residuals(t: f64, x: f64, y: f64) -> [f64; 3] {
    let c = ManufacturedCase;
    let h = FD_STEP;
    let grad = |f: &dyn Fn(f64, f64) -> f64| [d1(|s| f(s, y), x, h), d1(|s| f(x, s), y, h)];
    let lap = |f: &dyn Fn(f64, f64) -> f64| d2(|s| f(s, y), x, h) + d2(|s| f(x, s), y, h);

    let n = |x: f64, y: f64| c.n(t, x, y);
    let p = |x: f64, y: f64| c.p(t, x, y);
    let phi = |x: f64, y: f64| c.phi(t, x, y);
    let (gn, gp, gphi) = (grad(&n), grad(&p), grad(&phi));
    let lphi = lap(&phi);
    let dot = |a: [f64; 2], b: [f64; 2]| a[0] * b[0] + a[1] * b[1];

    // ∇·(∇n - n∇φ) = Δn - ∇n·∇φ - nΔφ, and likewise with the sign of φ flipped for p.
    let flux_n = lap(&n) - dot(gn, gphi) - c.n(t, x, y) * lphi;
    let flux_p = lap(&p) + dot(gp, gphi) + c.p(t, x, y) * lphi;
    let dn_dt = d1(|s| c.n(s, x, y), t, h);
    let dp_dt = d1(|s| c.p(s, x, y), t, h);
    [
        dn_dt - flux_n - c.f_n(t, x, y),
        dp_dt - flux_p - c.f_p(t, x, y),
        -lphi - (c.p(t, x, y) - c.n(t, x, y)) - c.rho_f(t, x, y),
    ]
}

/// Observed order in Δt from three runs of the manufactured problem at
/// `Δt = 0.01, 0.005, 0.0025` on a fixed `n × n` grid.
pub fn temporal_order(n: usize) -> f64 {
    let g = Grid::new(2, n, 1.0).unwrap();
    let run = |dt: f64| {
        let (scheme, mut s) = mms::setup(g, SchemeParams { dt, ..Default::default() }).unwrap();
        let (steps, _) = mms::step_plan(0.1, dt);
        for _ in 0..steps {
            s = scheme.step(&s).unwrap().0;
        }
        s
    };
    let (a, b, c) = (run(0.01), run(0.005), run(0.0025));
    (grid::norm_inf(&(&a.n - &b.n)) / grid::norm_inf(&(&b.n - &c.n))).log2()
}
