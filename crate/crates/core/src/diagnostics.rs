//! Discrete energy, dissipation, mass and minimum-concentration observables,
//! plus the CSV time-series writer.

use std::io::Write;

use crate::elliptic::{h_inv_norm, PoissonSolver};
use crate::error::{PnpError, Result};
use crate::grid::{self, CellField, FaceField};

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub time: f64,
    pub energy: f64,
    pub mass_n: f64,
    pub mass_p: f64,
    pub c_min: f64,
    pub dissipation: f64,
    pub picard_iters: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observables {
    pub mass_n: f64,
    pub mass_p: f64,
    pub c_min: f64,
}

/// Total masses `mean · |Ω|` and the minimum concentration over both species.
pub fn observables(n: &CellField, p: &CellField) -> Observables {
    let vol = n.grid().volume();
    Observables {
        mass_n: n.mean() * vol,
        mass_p: p.mean() * vol,
        c_min: n.min().min(p.min()),
    }
}

pub(crate) fn ensure_positive(c: &CellField) -> Result<()> {
    match c.first_non_positive() {
        Some((index, value)) => Err(PnpError::NonPositiveConcentration { index, value }),
        None => Ok(()),
    }
}

/// Net charge `p - n (+ ρ^f)` that drives the potential.
pub fn net_charge(n: &CellField, p: &CellField, fixed_charge: Option<&CellField>) -> CellField {
    let mut q = p - n;
    if let Some(rho) = fixed_charge {
        q.add_scaled(1.0, rho);
    }
    q
}

/// `E_h(n, p) = ⟨n ln n + p ln p, 1⟩ + ½ ‖n - p‖²_{-1,h}`.
///
/// With a fixed charge the electrostatic term uses the full charge
/// `p - n + ρ^f`, which keeps `E_h` the Lyapunov functional of the scheme.
pub fn discrete_energy(
    solver: &PoissonSolver,
    n: &CellField,
    p: &CellField,
    fixed_charge: Option<&CellField>,
) -> Result<f64> {
    ensure_positive(n)?;
    ensure_positive(p)?;
    let entropy: f64 = n
        .values()
        .iter()
        .chain(p.values())
        .map(|&c| c * c.ln())
        .sum::<f64>()
        * n.grid().cell_volume();
    let q = net_charge(n, p, fixed_charge);
    let hinv = h_inv_norm(solver, &q)?;
    Ok(entropy + 0.5 * hinv * hinv)
}

/// `Δt ( [M̆_n ∇_h μ_n, ∇_h μ_n] + [M̆_p ∇_h μ_p, ∇_h μ_p] )`.
pub fn dissipation_rate(
    dt: f64,
    mobility_n: &FaceField,
    mu_n: &CellField,
    mobility_p: &FaceField,
    mu_p: &CellField,
) -> Result<f64> {
    let gn = grid::gradient(mu_n);
    let gp = grid::gradient(mu_p);
    let a = grid::face_inner_product(&mobility_n.product(&gn), &gn)?;
    let b = grid::face_inner_product(&mobility_p.product(&gp), &gp)?;
    Ok(dt * (a + b))
}

pub const CSV_HEADER: &str = "time,energy,mass_n,mass_p,c_min,dissipation,picard_iters,residual";

/// Formats a float with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes step reports as CSV rows.
pub struct TimeSeriesWriter<W: Write> {
    out: W,
}

impl<W: Write> TimeSeriesWriter<W> {
    pub fn new(mut out: W) -> Result<Self> {
        writeln!(out, "{CSV_HEADER}")?;
        Ok(Self { out })
    }

    pub fn write(&mut self, r: &StepReport) -> Result<()> {
        writeln!(
            self.out,
            "{},{},{},{},{},{},{},{}",
            fmt17(r.time),
            fmt17(r.energy),
            fmt17(r.mass_n),
            fmt17(r.mass_p),
            fmt17(r.c_min),
            fmt17(r.dissipation),
            r.picard_iters,
            fmt17(r.residual)
        )?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Parses a time-series CSV back into reports.
pub fn read_time_series(text: &str) -> Result<Vec<StepReport>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(CSV_HEADER) {
        return Err(PnpError::Format("missing time-series header".into()));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 8 {
                return Err(PnpError::Format(format!("expected 8 columns: {line}")));
            }
            let f = |i: usize| -> Result<f64> {
                cols[i]
                    .trim()
                    .parse()
                    .map_err(|_| PnpError::Format(format!("bad number `{}`", cols[i])))
            };
            Ok(StepReport {
                time: f(0)?,
                energy: f(1)?,
                mass_n: f(2)?,
                mass_p: f(3)?,
                c_min: f(4)?,
                dissipation: f(5)?,
                picard_iters: cols[6]
                    .trim()
                    .parse()
                    .map_err(|_| PnpError::Format(format!("bad count `{}`", cols[6])))?,
                residual: f(7)?,
            })
        })
        .collect()
}
