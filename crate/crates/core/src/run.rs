//! Executes a [`RunConfig`]: simulations with time series and snapshots,
//! manufactured-solution studies, and the operator self-check.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::{self, FixedChargeSpec, InitialSpec, Mode, RunConfig};
use crate::diagnostics::{fmt17, StepReport, TimeSeriesWriter};
use crate::elliptic::{stencil_eigenvalue_1d, PoissonMethod, PoissonSolver};
use crate::error::{PnpError, Result};
use crate::grid::{self, CellField, Grid};
use crate::mms::{self, ConvergenceRow, MmsErrors};
use crate::scheme::{Scheme, Sources, State};
use crate::snapshot;

pub const TIME_SERIES_FILE: &str = "timeseries.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const CONVERGENCE_CSV: &str = "convergence.csv";
pub const CONVERGENCE_TXT: &str = "convergence.txt";
pub const SINGLE_CSV: &str = "mms_single.csv";

/// A failed run: the error plus where in the time loop it happened.
#[derive(Debug)]
pub struct RunFailure {
    pub error: PnpError,
    pub step: Option<usize>,
    pub time: Option<f64>,
}

impl From<PnpError> for RunFailure {
    fn from(error: PnpError) -> Self {
        Self {
            error,
            step: None,
            time: None,
        }
    }
}

impl From<std::io::Error> for RunFailure {
    fn from(e: std::io::Error) -> Self {
        PnpError::from(e).into()
    }
}

impl RunFailure {
    pub fn exit_code(&self) -> i32 {
        self.error.exit_code()
    }

    /// One-line `key=value` description for scripts.
    pub fn machine_line(&self) -> String {
        let mut line = format!("error kind={} exit={}", self.error.kind(), self.exit_code());
        if let Some(s) = self.step {
            line.push_str(&format!(" step={s}"));
        }
        if let Some(t) = self.time {
            line.push_str(&format!(" time={}", fmt17(t)));
        }
        line.push_str(&format!(" message={:?}", self.error.to_string()));
        line
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Simulation {
        steps: usize,
        last: StepReport,
        files: Vec<PathBuf>,
    },
    Single(MmsErrors),
    Convergence(Vec<ConvergenceRow>),
}

/// Runs the configured experiment, writing outputs to `out` (or the
/// configured output directory).
pub fn run(cfg: &RunConfig, out: Option<&Path>) -> std::result::Result<RunOutcome, RunFailure> {
    let dir = out.unwrap_or(&cfg.io.output_dir);
    std::fs::create_dir_all(dir)?;
    match cfg.mode {
        Mode::Simulate => simulate(cfg, dir),
        Mode::MmsSingle => {
            let grid = cfg.grid(0)?;
            let e = mms::run_single(grid, cfg.scheme_params(&grid), cfg.time.t_final)?;
            let mut f = BufWriter::new(File::create(dir.join(SINGLE_CSV))?);
            writeln!(f, "h,dt,steps,err_n,err_p,err_phi")?;
            writeln!(
                f,
                "{},{},{},{},{},{}",
                fmt17(e.h),
                fmt17(e.dt),
                e.steps,
                fmt17(e.err_n),
                fmt17(e.err_p),
                fmt17(e.err_phi)
            )?;
            f.flush()?;
            Ok(RunOutcome::Single(e))
        }
        Mode::MmsConvergence => {
            let rows = convergence(cfg)?;
            std::fs::write(dir.join(CONVERGENCE_CSV), mms::table_csv(&rows))?;
            std::fs::write(dir.join(CONVERGENCE_TXT), mms::table_text(&rows))?;
            Ok(RunOutcome::Convergence(rows))
        }
    }
}

/// The manufactured-solution refinement study described by `cfg`.
pub fn convergence(cfg: &RunConfig) -> Result<Vec<ConvergenceRow>> {
    let errors = (0..cfg.grid.cells.len())
        .map(|i| {
            let grid = cfg.grid(i)?;
            mms::run_single(grid, cfg.scheme_params(&grid), cfg.time.t_final)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(mms::rows_from_errors(&errors))
}

fn read_snapshot(path: &Path, grid: &Grid) -> Result<CellField> {
    let snap = snapshot::read_field(BufReader::new(File::open(path)?))?;
    if snap.field.grid() != grid {
        return Err(PnpError::Validation {
            key: path.display().to_string(),
            reason: "field grid does not match the configured grid".into(),
        });
    }
    Ok(snap.field)
}

/// Builds the scheme and initial state of a simulation.
pub fn build(cfg: &RunConfig) -> Result<(Scheme, State)> {
    let grid = cfg.grid(0)?;
    let params = cfg.scheme_params(&grid);
    if cfg.initial == InitialSpec::Manufactured {
        return mms::setup(grid, params);
    }
    let rho = match &cfg.physics.rho_f {
        FixedChargeSpec::None => None,
        FixedChargeSpec::FourGaussians => {
            if grid.dim() != 2 {
                return Err(PnpError::Validation {
                    key: "physics.rho_f".into(),
                    reason: "four-gaussians is two-dimensional".into(),
                });
            }
            Some(config::four_gaussians(grid))
        }
        FixedChargeSpec::Gaussians(list) => Some(config::gaussian_sum(grid, list)),
        FixedChargeSpec::File(path) => Some(read_snapshot(path, &grid)?),
    };
    let sources = rho.map(Sources::fixed_charge).unwrap_or_default();
    let scheme = Scheme::new(grid, params)?.with_sources(sources)?;
    let (n, p) = match &cfg.initial {
        InitialSpec::Constant { n, p } => (CellField::constant(grid, *n), CellField::constant(grid, *p)),
        InitialSpec::Files { n, p } => (read_snapshot(n, &grid)?, read_snapshot(p, &grid)?),
        InitialSpec::Manufactured => unreachable!(),
    };
    let state = scheme.initial_state(n, p, 0.0)?;
    Ok((scheme, state))
}

struct Outputs {
    dir: PathBuf,
    series: TimeSeriesWriter<BufWriter<File>>,
    manifest: BufWriter<File>,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn create(dir: &Path) -> Result<Self> {
        let series = TimeSeriesWriter::new(BufWriter::new(File::create(dir.join(TIME_SERIES_FILE))?))?;
        let mut manifest = BufWriter::new(File::create(dir.join(MANIFEST_FILE))?);
        writeln!(manifest, "# file kind time")?;
        writeln!(manifest, "{TIME_SERIES_FILE} timeseries -")?;
        Ok(Self {
            dir: dir.to_path_buf(),
            series,
            manifest,
            files: vec![dir.join(TIME_SERIES_FILE), dir.join(MANIFEST_FILE)],
        })
    }

    fn snapshot(&mut self, step: usize, s: &State) -> Result<()> {
        for (name, field) in [("n", &s.n), ("p", &s.p), ("phi", &s.phi)] {
            let file = format!("{name}_{step:06}.txt");
            let path = self.dir.join(&file);
            snapshot::write_field(BufWriter::new(File::create(&path)?), name, s.time, field)?;
            writeln!(self.manifest, "{file} {name} {}", fmt17(s.time))?;
            self.files.push(path);
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        self.series.flush()?;
        self.manifest.flush()?;
        Ok(())
    }
}

fn simulate(cfg: &RunConfig, dir: &Path) -> std::result::Result<RunOutcome, RunFailure> {
    let grid = cfg.grid(0)?;
    let (steps, dt) = if cfg.time.t_final == 0.0 {
        (0, cfg.time.dt.value(&grid))
    } else {
        mms::step_plan(cfg.time.t_final, cfg.time.dt.value(&grid))
    };
    let mut planned = cfg.clone();
    planned.time.dt = config::TimeStep::Fixed(dt);
    let (scheme, mut state) = build(&planned)?;
    let initial = scheme.report(&state)?;
    let mut out = Outputs::create(dir)?;
    out.series.write(&initial)?;
    out.snapshot(0, &state)?;
    let mut last = initial;
    for k in 1..=steps {
        match scheme.step(&state) {
            Ok((next, report)) => {
                state = next;
                last = report;
            }
            Err(error) => {
                out.flush()?;
                return Err(RunFailure {
                    error,
                    step: Some(k),
                    time: Some(state.time),
                });
            }
        }
        if k % cfg.io.report_stride == 0 || k == steps {
            out.series.write(&last)?;
        }
        let stride = cfg.io.snapshot_stride;
        if (stride > 0 && k % stride == 0) || k == steps {
            out.snapshot(k, &state)?;
        }
    }
    out.flush()?;
    Ok(RunOutcome::Simulation {
        steps,
        last,
        files: out.files,
    })
}

/// One self-check outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn smooth_field(grid: Grid, seed: usize) -> CellField {
    let s = seed as f64;
    CellField::from_fn(grid, |x| {
        let k = std::f64::consts::PI / grid.half_width();
        (k * x[0] + 0.3 * s).sin() * (1.0 + 0.2 * s)
            + (2.0 * k * x[1] - 0.7 * s).cos()
            + 0.5 * (k * (x[0] + x[2]) + s).sin()
            + 0.1 * s
    })
}

/// Operator and solver identities on a handful of deterministic fields.
pub fn self_check() -> Vec<Check> {
    let mut checks = Vec::new();
    let mut push = |name: &str, err: f64, tol: f64| {
        checks.push(Check {
            name: name.into(),
            passed: err <= tol,
            detail: format!("error {err:.3e} (tolerance {tol:.0e})"),
        });
    };
    for (dim, n) in [(2, 8), (2, 16), (3, 8)] {
        let g = Grid::new(dim, n, 1.0).expect("fixed grid");
        let u = smooth_field(g, 1);
        let v = smooth_field(g, 2);
        let gv = grid::gradient(&v);
        let lhs = grid::inner_product(&u, &grid::divergence(&gv)).unwrap_or(f64::NAN);
        let rhs = -grid::face_inner_product(&grid::gradient(&u), &gv).unwrap_or(f64::NAN);
        push(
            &format!("summation by parts (dim {dim}, N {n})"),
            (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0),
            1e-12,
        );

        let mut f = grid::laplacian(&u);
        f.remove_mean();
        let errs: Vec<f64> = [PoissonMethod::Spectral, PoissonMethod::ConjugateGradient]
            .into_iter()
            .map(|m| {
                let solver = PoissonSolver::with_method(g, m);
                match solver.solve(&f) {
                    Ok(psi) => {
                        let r = &grid::laplacian(&psi) + &f;
                        grid::norm_inf(&r) / grid::norm_inf(&f)
                    }
                    Err(_) => f64::INFINITY,
                }
            })
            .collect();
        push(&format!("spectral Poisson residual (dim {dim}, N {n})"), errs[0], 1e-12);
        push(&format!("CG Poisson residual (dim {dim}, N {n})"), errs[1], 1e-9);
    }

    let g = Grid::new(2, 8, 1.0).expect("fixed grid");
    let mut impulse = CellField::zeros(g);
    impulse.values_mut()[g.index(&[3, 5])] = 1.0;
    let lap = grid::laplacian(&impulse);
    let h2 = g.h() * g.h();
    let stencil_err = (0..g.len())
        .map(|l| {
            let mi = g.multi_index(l);
            let (di, dj) = (mi[0] as i64 - 3, mi[1] as i64 - 5);
            let want = match (di, dj) {
                (0, 0) => -4.0 / h2,
                (0, 1) | (0, -1) | (1, 0) | (-1, 0) => 1.0 / h2,
                _ => 0.0,
            };
            (lap.values()[l] - want).abs() * h2
        })
        .fold(0.0, f64::max);
    push("Laplacian impulse stencil", stencil_err, 1e-14);

    let mode = CellField::from_fn(g, |x| (std::f64::consts::PI * x[0]).cos());
    let lam = stencil_eigenvalue_1d(1, g.n(), g.h());
    let eig_err = grid::norm_inf(&(&grid::laplacian(&mode) + &mode.map(|v| lam * v)));
    push("Laplacian Fourier eigenvalue", eig_err, 1e-12);

    checks
}
