//! Run configuration: a flat `section.key = value` text format.
//!
//! ```text
//! # screening experiment with a coarser grid
//! mode = simulate
//! initial.case = screening
//! grid.N = 64
//! time.dt = 2e-3
//! io.snapshot_stride = 50
//! ```
//!
//! Blank lines and `#` comments are ignored. Every key may appear at most
//! once; unknown keys are rejected. Recognised keys:
//!
//! | key | value |
//! |-----|-------|
//! | `mode` | `simulate`, `mms-convergence`, `mms-single` |
//! | `grid.dim` | `2` or `3` |
//! | `grid.N` | integer, or `[a, b, ...]` for `mms-convergence` |
//! | `grid.L` | half-width of the domain |
//! | `physics.D` | diffusivity ratio |
//! | `physics.rho_f` | `none`, `four-gaussians`, `file:<path>`, `gaussians:[a, x, y, w; ...]` |
//! | `time.dt` | step, or `h^2` |
//! | `time.T_final` | final time |
//! | `scheme.omega_r`, `scheme.picard_tol`, `scheme.picard_max`, `scheme.linear_tol` | |
//! | `io.output_dir`, `io.snapshot_stride`, `io.report_stride` | |
//! | `initial.case` | `screening` or `mms` |
//! | `initial.n`, `initial.p` | constant initial concentrations |
//! | `initial.n_file`, `initial.p_file` | `pnp-field` files |
//!
//! A Gaussian entry `a, c_1, ..., c_dim, w` contributes
//! `a exp(-|x - c|² / w²)`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{PnpError, Result};
use crate::grid::{CellField, Grid};
use crate::scheme::SchemeParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Simulate,
    MmsConvergence,
    MmsSingle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub amplitude: f64,
    pub center: Vec<f64>,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FixedChargeSpec {
    None,
    /// `e^{-100|x-(-½,-½)|²} - e^{-100|x-(-½,½)|²} - e^{-100|x-(½,-½)|²} + e^{-100|x-(½,½)|²}`.
    FourGaussians,
    Gaussians(Vec<Gaussian>),
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeStep {
    Fixed(f64),
    /// `Δt = h²`.
    HSquared,
}

impl TimeStep {
    pub fn value(&self, grid: &Grid) -> f64 {
        match *self {
            TimeStep::Fixed(dt) => dt,
            TimeStep::HSquared => grid.h() * grid.h(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    Constant { n: f64, p: f64 },
    Files { n: PathBuf, p: PathBuf },
    Manufactured,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub dim: usize,
    /// One entry except for convergence studies.
    pub cells: Vec<usize>,
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicsSpec {
    pub diffusivity: f64,
    pub rho_f: FixedChargeSpec,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSpec {
    pub dt: TimeStep,
    pub t_final: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeSpec {
    pub omega_r: f64,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub linear_tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IoSpec {
    pub output_dir: PathBuf,
    /// Steps between snapshots; `0` writes only the initial and final fields.
    pub snapshot_stride: usize,
    pub report_stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub grid: GridSpec,
    pub physics: PhysicsSpec,
    pub time: TimeSpec,
    pub scheme: SchemeSpec,
    pub io: IoSpec,
    pub initial: InitialSpec,
}

const KEYS: &[&str] = &[
    "mode",
    "grid.dim",
    "grid.N",
    "grid.L",
    "physics.D",
    "physics.rho_f",
    "time.dt",
    "time.T_final",
    "scheme.omega_r",
    "scheme.picard_tol",
    "scheme.picard_max",
    "scheme.linear_tol",
    "io.output_dir",
    "io.snapshot_stride",
    "io.report_stride",
    "initial.case",
    "initial.n",
    "initial.p",
    "initial.n_file",
    "initial.p_file",
];

struct Entry {
    line: usize,
    value: String,
}

fn invalid(key: &str, reason: impl Into<String>) -> PnpError {
    PnpError::Validation {
        key: key.into(),
        reason: reason.into(),
    }
}

fn lex(text: &str) -> Result<BTreeMap<String, Entry>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| PnpError::Parse {
            line,
            message: format!("expected `key = value`, got `{body}`"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(PnpError::Parse {
                line,
                message: "empty key or value".into(),
            });
        }
        if key.matches('.').count() > 1 || key.contains(char::is_whitespace) {
            return Err(PnpError::Parse {
                line,
                message: format!("malformed key `{key}`"),
            });
        }
        if !KEYS.contains(&key) {
            return Err(PnpError::Parse {
                line,
                message: format!("unknown key `{key}`"),
            });
        }
        let entry = Entry {
            line,
            value: value.to_string(),
        };
        if let Some(prev) = map.insert(key.to_string(), entry) {
            return Err(PnpError::Parse {
                line,
                message: format!("`{key}` already set on line {}", prev.line),
            });
        }
    }
    Ok(map)
}

struct Values(BTreeMap<String, Entry>);

impl Values {
    fn raw(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(|e| e.value.as_str())
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<T>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(e) => e.value.parse().map(Some).map_err(|_| PnpError::Parse {
                line: e.line,
                message: format!("`{key}` expects {what}, got `{}`", e.value),
            }),
        }
    }

    fn real(&self, key: &str) -> Result<Option<f64>> {
        self.parsed::<f64>(key, "a number")
    }

    fn count(&self, key: &str) -> Result<Option<usize>> {
        self.parsed::<usize>(key, "a non-negative integer")
    }

    fn parse_error(&self, key: &str, message: String) -> PnpError {
        PnpError::Parse {
            line: self.0.get(key).map_or(0, |e| e.line),
            message,
        }
    }
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Option<Vec<T>> {
    let inner = s.strip_prefix('[')?.strip_suffix(']')?;
    inner.split(',').map(|t| t.trim().parse().ok()).collect()
}

fn parse_gaussians(body: &str) -> Option<Vec<Vec<f64>>> {
    let inner = body.trim().strip_prefix('[')?.strip_suffix(']')?;
    inner
        .split(';')
        .map(|entry| entry.split(',').map(|t| t.trim().parse().ok()).collect())
        .collect()
}

/// Parses and validates a configuration, filling in defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_with_mode(text, Mode::Simulate)
}

/// Like [`parse_config`], with `default` used when the text has no `mode` key.
pub fn parse_config_with_mode(text: &str, default: Mode) -> Result<RunConfig> {
    let v = Values(lex(text)?);

    let mode = match v.raw("mode") {
        None => default,
        Some("simulate") => Mode::Simulate,
        Some("mms-convergence") => Mode::MmsConvergence,
        Some("mms-single") => Mode::MmsSingle,
        Some(other) => return Err(v.parse_error("mode", format!("unknown mode `{other}`"))),
    };
    let case = v.raw("initial.case");
    let screening = match case {
        None => false,
        Some("screening") => true,
        Some("mms") => false,
        Some(other) => return Err(v.parse_error("initial.case", format!("unknown case `{other}`"))),
    };
    let mms = mode != Mode::Simulate || case == Some("mms");

    let dim = v.count("grid.dim")?.unwrap_or(2);
    let cells = match v.raw("grid.N") {
        None if screening => vec![128],
        None => return Err(invalid("grid.N", "required")),
        Some(s) if s.starts_with('[') => parse_list(s)
            .ok_or_else(|| v.parse_error("grid.N", format!("malformed list `{s}`")))?,
        Some(_) => vec![v.count("grid.N")?.unwrap_or_default()],
    };
    let half_width = v.real("grid.L")?.unwrap_or(1.0);

    let diffusivity = v.real("physics.D")?.unwrap_or(1.0);
    let rho_f = match v.raw("physics.rho_f") {
        None if screening => FixedChargeSpec::FourGaussians,
        None | Some("none") => FixedChargeSpec::None,
        Some("four-gaussians") => FixedChargeSpec::FourGaussians,
        Some(s) if s.starts_with("file:") => {
            FixedChargeSpec::File(PathBuf::from(s["file:".len()..].trim()))
        }
        Some(s) if s.starts_with("gaussians:") => {
            let rows = parse_gaussians(&s["gaussians:".len()..])
                .ok_or_else(|| v.parse_error("physics.rho_f", format!("malformed gaussian list `{s}`")))?;
            let mut list = Vec::with_capacity(rows.len());
            for row in rows {
                if row.len() != dim + 2 {
                    return Err(invalid(
                        "physics.rho_f",
                        format!("each gaussian needs {} numbers (amplitude, center, width)", dim + 2),
                    ));
                }
                list.push(Gaussian {
                    amplitude: row[0],
                    center: row[1..=dim].to_vec(),
                    width: row[dim + 1],
                });
            }
            FixedChargeSpec::Gaussians(list)
        }
        Some(other) => {
            return Err(v.parse_error("physics.rho_f", format!("unknown fixed charge `{other}`")))
        }
    };

    let dt = match v.raw("time.dt") {
        Some("h^2") => TimeStep::HSquared,
        Some(_) => TimeStep::Fixed(v.real("time.dt")?.unwrap_or_default()),
        None if screening => TimeStep::Fixed(1e-3),
        None if mms => TimeStep::HSquared,
        None => return Err(invalid("time.dt", "required")),
    };
    let t_final = v
        .real("time.T_final")?
        .unwrap_or(if screening { 5.0 } else { 0.1 });

    let defaults = SchemeParams::default();
    let scheme = SchemeSpec {
        omega_r: v.real("scheme.omega_r")?.unwrap_or(defaults.omega_r),
        picard_tol: v.real("scheme.picard_tol")?.unwrap_or(defaults.picard_tol),
        picard_max: v.count("scheme.picard_max")?.unwrap_or(defaults.picard_max),
        linear_tol: v.real("scheme.linear_tol")?.unwrap_or(defaults.linear_tol),
    };

    let io = IoSpec {
        output_dir: PathBuf::from(v.raw("io.output_dir").unwrap_or("pnp-out")),
        snapshot_stride: v.count("io.snapshot_stride")?.unwrap_or(0),
        report_stride: v.count("io.report_stride")?.unwrap_or(1),
    };

    let has_const = v.raw("initial.n").is_some() || v.raw("initial.p").is_some();
    let has_files = v.raw("initial.n_file").is_some() || v.raw("initial.p_file").is_some();
    if has_const && has_files {
        return Err(invalid("initial", "give constants or files, not both"));
    }
    let initial = if case == Some("mms") || (mms && !has_const && !has_files) {
        if has_const || has_files {
            return Err(invalid("initial", "the manufactured case fixes its own initial data"));
        }
        InitialSpec::Manufactured
    } else if has_files {
        match (v.raw("initial.n_file"), v.raw("initial.p_file")) {
            (Some(n), Some(p)) => InitialSpec::Files {
                n: n.into(),
                p: p.into(),
            },
            _ => return Err(invalid("initial", "both initial.n_file and initial.p_file are required")),
        }
    } else {
        let c = if screening { 0.1 } else { 1.0 };
        InitialSpec::Constant {
            n: v.real("initial.n")?.unwrap_or(c),
            p: v.real("initial.p")?.unwrap_or(c),
        }
    };

    let cfg = RunConfig {
        mode,
        grid: GridSpec {
            dim,
            cells,
            half_width,
        },
        physics: PhysicsSpec { diffusivity, rho_f },
        time: TimeSpec { dt, t_final },
        scheme,
        io,
        initial,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Reads a config file; relative input paths are taken relative to its directory.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    load_config_with_mode(path, Mode::Simulate)
}

pub fn load_config_with_mode(path: &Path, default: Mode) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    let mut cfg = parse_config_with_mode(&text, default)?;
    let base = path.parent().unwrap_or(Path::new(""));
    let rebase = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    };
    if let FixedChargeSpec::File(p) = &mut cfg.physics.rho_f {
        rebase(p);
    }
    if let InitialSpec::Files { n, p } = &mut cfg.initial {
        rebase(n);
        rebase(p);
    }
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if g.dim != 2 && g.dim != 3 {
            return Err(invalid("grid.dim", format!("must be 2 or 3, got {}", g.dim)));
        }
        if g.cells.is_empty() || g.cells.iter().any(|&n| n < 2) {
            return Err(invalid("grid.N", "every resolution must be at least 2"));
        }
        if g.cells.len() > 1 && self.mode != Mode::MmsConvergence {
            return Err(invalid("grid.N", "a list of resolutions needs mode = mms-convergence"));
        }
        if !(g.half_width > 0.0 && g.half_width.is_finite()) {
            return Err(invalid("grid.L", format!("must be positive, got {}", g.half_width)));
        }
        if let TimeStep::Fixed(dt) = self.time.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(invalid("time.dt", format!("must be positive, got {dt}")));
            }
        }
        if !(self.time.t_final >= 0.0 && self.time.t_final.is_finite()) {
            return Err(invalid("time.T_final", format!("must be non-negative, got {}", self.time.t_final)));
        }
        if self.io.report_stride == 0 {
            return Err(invalid("io.report_stride", "must be at least 1"));
        }
        let params = self.scheme_params(&self.grid(0)?);
        params.validate().map_err(|e| match e {
            PnpError::InvalidParameter { name, reason } => {
                let key = match name.as_str() {
                    "D" => "physics.D".to_string(),
                    "dt" => "time.dt".to_string(),
                    other => format!("scheme.{other}"),
                };
                invalid(&key, reason)
            }
            other => other,
        })?;
        match &self.initial {
            InitialSpec::Constant { n, p } => {
                for (key, c) in [("initial.n", n), ("initial.p", p)] {
                    if !(*c > 0.0 && c.is_finite()) {
                        return Err(invalid(key, format!("must be positive, got {c}")));
                    }
                }
            }
            InitialSpec::Manufactured => {
                if g.dim != 2 {
                    return Err(invalid("grid.dim", "the manufactured case is two-dimensional"));
                }
                let period = 2.0 * g.half_width;
                if (period - period.round()).abs() > 1e-12 || period.round() < 1.0 {
                    return Err(invalid("grid.L", "the manufactured case needs 2L to be a whole number"));
                }
                if self.physics.diffusivity != 1.0 {
                    return Err(invalid("physics.D", "the manufactured case uses D = 1"));
                }
                if self.physics.rho_f != FixedChargeSpec::None {
                    return Err(invalid("physics.rho_f", "the manufactured case supplies its own fixed charge"));
                }
            }
            InitialSpec::Files { .. } => {}
        }
        if self.mode != Mode::Simulate && self.initial != InitialSpec::Manufactured {
            return Err(invalid("mode", "mms modes run the manufactured case"));
        }
        if let FixedChargeSpec::Gaussians(list) = &self.physics.rho_f {
            if list.iter().any(|gs| !(gs.width > 0.0) || gs.center.len() != g.dim) {
                return Err(invalid("physics.rho_f", "gaussian widths must be positive"));
            }
        }
        Ok(())
    }

    /// Grid of the `i`-th resolution.
    pub fn grid(&self, i: usize) -> Result<Grid> {
        Grid::new(self.grid.dim, self.grid.cells[i], self.grid.half_width)
    }

    pub fn scheme_params(&self, grid: &Grid) -> SchemeParams {
        SchemeParams {
            dt: self.time.dt.value(grid),
            diffusivity: self.physics.diffusivity,
            omega_r: self.scheme.omega_r,
            picard_tol: self.scheme.picard_tol,
            picard_max: self.scheme.picard_max,
            linear_tol: self.scheme.linear_tol,
            ..SchemeParams::default()
        }
    }
}

/// The four-Gaussian background charge of the screening experiment.
pub fn four_gaussians(grid: Grid) -> CellField {
    let g = |x: f64, y: f64| (-100.0 * (x * x + y * y)).exp();
    CellField::from_fn(grid, |c| {
        let (x, y) = (c[0], c[1]);
        g(x + 0.5, y + 0.5) - g(x + 0.5, y - 0.5) - g(x - 0.5, y + 0.5) + g(x - 0.5, y - 0.5)
    })
}

pub fn gaussian_sum(grid: Grid, list: &[Gaussian]) -> CellField {
    CellField::from_fn(grid, |c| {
        list.iter()
            .map(|gs| {
                let r2: f64 = gs.center.iter().zip(c).map(|(a, b)| (b - a) * (b - a)).sum();
                gs.amplitude * (-r2 / (gs.width * gs.width)).exp()
            })
            .sum()
    })
}
