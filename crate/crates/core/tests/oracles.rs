mod common;

use common::*;
use pnp_core::diagnostics::discrete_energy;
use pnp_core::elliptic::{h_inv_norm, spd_solve, stencil_eigenvalue_1d, EllipticSystem, LinearSolverOptions, PoissonSolver};
use pnp_core::grid::{self, CellField, Grid};
use pnp_core::scheme::{Scheme, SchemeParams, Sources, State};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn spd_solve_matches_dense(seed in any::<u64>(), dim in 2usize..=3, shift in 1e-3f64..10.0, jacobi in any::<bool>()) {
        let g = Grid::new(dim, 4, 1.0).unwrap();
        let mut r = rng(seed);
        let mob = random_face(g, &mut r, 0.1, 2.0);
        let mass = random_cell(g, &mut r, 0.1, 2.0);
        let rhs = random_cell(g, &mut r, -1.0, 1.0);
        let sys = EllipticSystem::new(mob.clone(), mass.clone(), shift).unwrap();
        let opts = LinearSolverOptions { tolerance: 1e-13, jacobi, ..Default::default() };
        let (w, _) = spd_solve(&sys, &rhs, &opts, None).unwrap();
        let a = nalgebra::DMatrix::from_diagonal(&to_vec(&mass)) - shift * dense_flux_operator(g, Some(&mob));
        let want = a.lu().solve(&to_vec(&rhs)).unwrap();
        prop_assert!((to_vec(&w) - &want).amax() <= 1e-8 * want.amax().max(1.0));
    }

    #[test]
    fn poisson_matches_dense(seed in any::<u64>(), dim in 2usize..=3, l in 0.5f64..3.0) {
        let g = Grid::new(dim, 4, l).unwrap();
        let mut r = rng(seed);
        let f = mean_zero(random_cell(g, &mut r, -1.0, 1.0));
        let psi = PoissonSolver::new(g).solve(&f).unwrap();
        let want = dense_poisson_inverse(g) * to_vec(&f);
        prop_assert!((to_vec(&psi) - &want).amax() <= 1e-10 * want.amax());
    }

    #[test]
    fn energy_matches_dense(seed in any::<u64>(), dim in 2usize..=3, with_rho in any::<bool>()) {
        let g = Grid::new(dim, 4, 1.0).unwrap();
        let mut r = rng(seed);
        let (n, p) = neutral_pair(g, &mut r, 0.05, 3.0);
        let rho = with_rho.then(|| mean_zero(random_cell(g, &mut r, -1.0, 1.0)));
        let e = discrete_energy(&PoissonSolver::new(g), &n, &p, rho.as_ref()).unwrap();
        let want = dense_energy(g, &n, &p, rho.as_ref());
        prop_assert!((e - want).abs() <= 1e-10 * want.abs().max(1.0));
    }
}

fn step_case(seed: u64, dt: f64, diffusivity: f64, with_rho: bool) {
    let g = Grid::new(2, 4, 1.0).unwrap();
    let mut r = rng(seed);
    let (n, p) = neutral_pair(g, &mut r, 0.2, 2.0);
    let rho = with_rho.then(|| mean_zero(random_cell(g, &mut r, -0.5, 0.5)));
    let params = SchemeParams { dt, diffusivity, ..Default::default() };
    let sources = rho.clone().map(Sources::fixed_charge).unwrap_or_default();
    let scheme = Scheme::new(g, params).unwrap().with_sources(sources).unwrap();
    let s0 = scheme.initial_state(n, p, 0.0).unwrap();
    let (s1, _) = scheme.step(&s0).unwrap();
    let (n_ref, p_ref) = newton_step(&s0, &params, rho.as_ref(), 1e-14);
    let err = grid::norm_inf(&(&s1.n - &n_ref)).max(grid::norm_inf(&(&s1.p - &p_ref)));
    assert!(err <= 1e-8, "seed {seed} dt {dt} D {diffusivity}: {err:e}");
}

#[test]
fn scheme_step_matches_newton() {
    let mut seed = 0;
    for dt in [1e-3, 1e-2, 1e-1] {
        for diffusivity in [1.0, 2.5] {
            for with_rho in [false, true] {
                step_case(seed, dt, diffusivity, with_rho);
                seed += 1;
            }
        }
    }
}

#[test]
fn relaxation_weight_does_not_change_the_answer() {
    let g = Grid::new(2, 8, 1.0).unwrap();
    let mut r = rng(11);
    let (n, p) = neutral_pair(g, &mut r, 0.3, 1.5);
    let run = |omega_r: f64| {
        let params = SchemeParams { dt: 0.01, omega_r, ..Default::default() };
        let scheme = Scheme::new(g, params).unwrap();
        let s0 = scheme.initial_state(n.clone(), p.clone(), 0.0).unwrap();
        scheme.step(&s0).unwrap().0
    };
    let (a, b) = (run(0.5), run(0.1));
    assert!(grid::norm_inf(&(&a.n - &b.n)) <= 1e-8);
    assert!(grid::norm_inf(&(&a.p - &b.p)) <= 1e-8);
}

#[test]
fn species_swap_symmetry_with_unit_diffusivity() {
    let g = Grid::new(2, 8, 1.0).unwrap();
    let mut r = rng(5);
    let (n, p) = neutral_pair(g, &mut r, 0.3, 1.5);
    let scheme = Scheme::new(g, SchemeParams { dt: 0.02, ..Default::default() }).unwrap();
    let s = scheme.initial_state(n, p, 0.0).unwrap();
    let (a, ra) = scheme.step(&s).unwrap();
    let (b, rb) = scheme.step(&s.swapped()).unwrap();
    let b = b.swapped();
    assert!(grid::norm_inf(&(&a.n - &b.n)) <= 1e-9);
    assert!(grid::norm_inf(&(&a.p - &b.p)) <= 1e-9);
    assert!(grid::norm_inf(&(&a.phi - &b.phi)) <= 1e-9);
    assert!((ra.energy - rb.energy).abs() <= 1e-12 * ra.energy.abs());
}

#[test]
fn energy_is_convex_along_segments() {
    let mut r = rng(3);
    for dim in [2, 3] {
        let g = Grid::new(dim, 4, 1.0).unwrap();
        let solver = PoissonSolver::new(g);
        for _ in 0..50 {
            let (n0, p0) = neutral_pair(g, &mut r, 0.05, 2.0);
            let (n1, p1) = neutral_pair(g, &mut r, 0.05, 2.0);
            let scale = n0.mean() / n1.mean();
            let (n1, p1) = (n1.map(|v| v * scale), p1.map(|v| v * scale));
            let mid = |a: &CellField, b: &CellField| a.zip_map(b, |x, y| 0.5 * (x + y));
            let e = |n: &CellField, p: &CellField| discrete_energy(&solver, n, p, None).unwrap();
            let em = e(&mid(&n0, &n1), &mid(&p0, &p1));
            assert!(em <= 0.5 * (e(&n0, &p0) + e(&n1, &p1)) + 1e-12);
        }
    }
}

#[test]
fn h_inverse_norm_is_bounded_by_smallest_eigenvalue() {
    let mut r = rng(9);
    for n in [8, 16, 32] {
        let g = Grid::new(2, n, 1.0).unwrap();
        let solver = PoissonSolver::new(g);
        let lam_min = stencil_eigenvalue_1d(1, n, g.h());
        for _ in 0..10 {
            let f = mean_zero(random_cell(g, &mut r, -1.0, 1.0));
            let hn = h_inv_norm(&solver, &f).unwrap();
            assert!(hn <= grid::norm_l2(&f) / lam_min.sqrt() * (1.0 + 1e-12));
            assert!(hn > 0.0);
        }
    }
}

#[test]
fn positivity_survives_large_steps() {
    let g = Grid::new(2, 8, 1.0).unwrap();
    let mut r = rng(21);
    let (n, p) = neutral_pair(g, &mut r, 1e-3, 2.0);
    for dt in [1e-2, 1e-1] {
        let scheme = Scheme::new(g, SchemeParams { dt, ..Default::default() }).unwrap();
        let mut s: State = scheme.initial_state(n.clone(), p.clone(), 0.0).unwrap();
        let mut e = scheme.energy(&s).unwrap();
        for _ in 0..5 {
            let (next, rep) = scheme.step(&s).unwrap();
            assert!(rep.c_min > 0.0);
            assert!(rep.energy + rep.dissipation <= e + 1e-10 * e.abs());
            e = rep.energy;
            s = next;
        }
    }
}
