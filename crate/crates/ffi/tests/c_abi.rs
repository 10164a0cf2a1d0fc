use std::ffi::CStr;
use std::path::Path;
use std::process::Command;
use std::ptr;

use pnp_ffi::*;

fn new_sim(cells: u64, dt: f64) -> *mut PnpSimulation {
    let params = PnpParams { dt, ..pnp_default_params() };
    let mut sim = ptr::null_mut();
    let status = unsafe { pnp_simulation_new(2, cells, 1.0, &params, &mut sim) };
    assert_eq!(status, PnpStatus::Ok);
    assert!(!sim.is_null());
    sim
}

fn last_error() -> String {
    let p = pnp_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn bumps(len: usize, a: f64) -> Vec<f64> {
    (0..len).map(|i| 1.0 + a * ((i as f64) * 0.37).sin()).collect()
}

#[test]
fn step_round_trip() {
    let sim = new_sim(16, 0.01);
    let len = unsafe { pnp_simulation_len(sim) };
    assert_eq!(len, 256);
    let n = bumps(len, 0.3);
    let p: Vec<f64> = n.iter().rev().copied().collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mn, mp) = (mean(&n), mean(&p));
    let raw = bumps(len, 0.5);
    let rho: Vec<f64> = raw.iter().map(|v| v - mean(&raw)).collect();
    unsafe {
        assert_eq!(pnp_simulation_set_fixed_charge(sim, rho.as_ptr(), len), PnpStatus::Ok);
        assert_eq!(pnp_simulation_set_concentrations(sim, n.as_ptr(), p.as_ptr(), len), PnpStatus::Ok);
        let mut e0 = 0.0;
        assert_eq!(pnp_simulation_energy(sim, &mut e0), PnpStatus::Ok);

        let mut report = PnpStepReport::default();
        assert_eq!(pnp_simulation_step(sim, 3, &mut report), PnpStatus::Ok);
        assert!((report.time - 0.03).abs() < 1e-15);
        assert!((pnp_simulation_time(sim) - report.time).abs() == 0.0);
        assert!(report.energy <= e0);
        assert!(report.dissipation >= 0.0);
        assert!(report.picard_iters >= 1);
        assert!((report.mass_n - 4.0 * mn).abs() < 1e-12 * 4.0 * mn);
        assert!((report.mass_p - 4.0 * mp).abs() < 1e-12 * 4.0 * mp);

        let mut out = vec![0.0; len];
        assert_eq!(pnp_simulation_get_field(sim, PnpField::N, out.as_mut_ptr(), len), PnpStatus::Ok);
        assert!(out.iter().all(|&v| v > 0.0));
        assert!((mean(&out) - mn).abs() < 1e-13);
        assert_eq!(pnp_simulation_get_field(sim, PnpField::Phi, out.as_mut_ptr(), len), PnpStatus::Ok);
        assert!(mean(&out).abs() < 1e-13);

        let mut e1 = 0.0;
        assert_eq!(pnp_simulation_energy(sim, &mut e1), PnpStatus::Ok);
        assert_eq!(e1, report.energy);
        pnp_simulation_free(sim);
    }
}

#[test]
fn defaults_match_core() {
    let p = pnp_default_params();
    assert_eq!(p.omega_r, 0.2);
    assert_eq!(p.picard_tol, 1e-10);
    assert_eq!(p.diffusivity, 1.0);
    assert_eq!(p.picard_max, 500);
}

#[test]
fn error_paths() {
    unsafe {
        let mut sim = ptr::null_mut();
        assert_eq!(pnp_simulation_new(4, 8, 1.0, ptr::null(), &mut sim), PnpStatus::InvalidArgument);
        assert!(sim.is_null());
        assert!(last_error().contains("dim"));
        let bad = PnpParams { omega_r: 1.5, ..pnp_default_params() };
        assert_eq!(pnp_simulation_new(2, 8, 1.0, &bad, &mut sim), PnpStatus::InvalidArgument);
        assert_eq!(pnp_simulation_new(2, 8, 1.0, ptr::null(), ptr::null_mut()), PnpStatus::NullPointer);

        assert_eq!(pnp_simulation_step(ptr::null_mut(), 1, ptr::null_mut()), PnpStatus::NullPointer);
        assert_eq!(pnp_simulation_len(ptr::null()), 0);
        assert!(pnp_simulation_time(ptr::null()).is_nan());
        pnp_simulation_free(ptr::null_mut());

        let sim = new_sim(8, 0.01);
        let mut buf = vec![0.0; 10];
        assert_eq!(
            pnp_simulation_get_field(sim, PnpField::P, buf.as_mut_ptr(), buf.len()),
            PnpStatus::InvalidArgument
        );
        assert!(last_error().contains("64"));

        let mut n = vec![1.0; 64];
        let p = vec![1.0; 64];
        n[5] = -1.0;
        assert_eq!(
            pnp_simulation_set_concentrations(sim, n.as_ptr(), p.as_ptr(), 64),
            PnpStatus::InvariantViolation
        );
        assert_eq!(
            pnp_simulation_set_concentrations(sim, ptr::null(), p.as_ptr(), 64),
            PnpStatus::NullPointer
        );

        let rho = vec![0.5; 64];
        assert_eq!(pnp_simulation_set_fixed_charge(sim, rho.as_ptr(), 64), PnpStatus::InvariantViolation);
        assert_eq!(pnp_simulation_set_fixed_charge(sim, ptr::null(), 0), PnpStatus::Ok);
        assert!(pnp_last_error_message().is_null());

        let mut report = PnpStepReport::default();
        assert_eq!(pnp_simulation_step(sim, 1, &mut report), PnpStatus::Ok);
        assert_eq!(report.picard_iters, 1);
        pnp_simulation_free(sim);
    }
}

#[test]
fn header_declares_the_api() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/pnp.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "pnp_default_params",
        "pnp_simulation_new",
        "pnp_simulation_free",
        "pnp_simulation_len",
        "pnp_simulation_time",
        "pnp_simulation_set_concentrations",
        "pnp_simulation_set_fixed_charge",
        "pnp_simulation_step",
        "pnp_simulation_get_field",
        "pnp_simulation_energy",
        "pnp_last_error_message",
        "typedef struct PnpSimulation PnpSimulation",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }

    // Compile-check the header when a C compiler is around.
    let Ok(out) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c"])
        .arg(&header)
        .output()
    else {
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
