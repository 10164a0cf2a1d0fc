//! Periodic uniform staggered grid with cell- and face-centered fields.
//!
//! The domain is `(-L, L)^dim` split into `N` cells per axis with spacing
//! `h = 2L / N`. Cell `i` along an axis sits at `-L + (i + 1/2) h`; the face
//! `i + 1/2` sits at `-L + (i + 1) h` and is stored at index `i` of the
//! per-axis face array. All index arithmetic wraps modulo `N`.
//!
//! Storage is row-major with axis 0 (x) slowest, so the linear index of
//! `(i, j, k)` is `(i * N + j) * N + k`.

use crate::error::{PnpError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    cells: usize,
    length: f64,
    h: f64,
}

impl Grid {
    /// Builds a grid on `(-half_width, half_width)^dim` with `cells` cells per axis.
    pub fn new(dim: usize, cells: usize, half_width: f64) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(PnpError::InvalidGrid(format!("dim must be 2 or 3, got {dim}")));
        }
        if cells < 2 {
            return Err(PnpError::InvalidGrid(format!("N must be at least 2, got {cells}")));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(PnpError::InvalidGrid(format!(
                "L must be positive and finite, got {half_width}"
            )));
        }
        Ok(Self {
            dim,
            cells,
            length: half_width,
            h: 2.0 * half_width / cells as f64,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cells per axis.
    pub fn n(&self) -> usize {
        self.cells
    }

    /// Half-width `L` of the domain.
    pub fn half_width(&self) -> f64 {
        self.length
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Total number of cells, `N^dim`.
    pub fn len(&self) -> usize {
        self.cells.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `h^dim`, the volume of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    /// `|Ω| = (2L)^dim`.
    pub fn volume(&self) -> f64 {
        (2.0 * self.length).powi(self.dim as i32)
    }

    /// Linear stride of one step along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.cells.pow((self.dim - 1 - axis) as u32)
    }

    /// Linear index of a multi-index; each component is wrapped periodically.
    pub fn index(&self, idx: &[i64]) -> usize {
        debug_assert_eq!(idx.len(), self.dim);
        let n = self.cells as i64;
        idx.iter()
            .fold(0usize, |acc, &c| acc * self.cells + c.rem_euclid(n) as usize)
    }

    /// Multi-index of a linear index.
    pub fn multi_index(&self, mut linear: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        for axis in (0..self.dim).rev() {
            out[axis] = linear % self.cells;
            linear /= self.cells;
        }
        out
    }

    /// Coordinate of cell center `i` along any axis.
    pub fn cell_center(&self, i: usize) -> f64 {
        -self.length + (i as f64 + 0.5) * self.h
    }

    /// Coordinate of face `i + 1/2` along any axis.
    pub fn face_center(&self, i: usize) -> f64 {
        -self.length + (i as f64 + 1.0) * self.h
    }

    /// Physical coordinates of the cell with linear index `linear`.
    pub fn cell_coords(&self, linear: usize) -> [f64; 3] {
        let mi = self.multi_index(linear);
        let mut x = [0.0; 3];
        for axis in 0..self.dim {
            x[axis] = self.cell_center(mi[axis]);
        }
        x
    }

    fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(PnpError::GridMismatch)
        }
    }

    /// Visits every `(cell, east neighbour)` pair along `axis` with periodic wrap.
    #[inline]
    fn for_each_pair(&self, axis: usize, mut f: impl FnMut(usize, usize)) {
        let s = self.stride(axis);
        let n = self.cells;
        let block = s * n;
        for outer in (0..self.len()).step_by(block) {
            for c in 0..n {
                let here = outer + c * s;
                let next = outer + if c + 1 == n { 0 } else { (c + 1) * s };
                for inner in 0..s {
                    f(here + inner, next + inner);
                }
            }
        }
    }
}

/// Scalar values at the cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    grid: Grid,
    values: Vec<f64>,
}

impl CellField {
    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(PnpError::InvalidParameter {
                name: "values".into(),
                reason: format!("expected {} values, got {}", grid.len(), values.len()),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(PnpError::InvalidParameter {
                name: "values".into(),
                reason: format!("non-finite value at cell {pos}"),
            });
        }
        Ok(Self { grid, values })
    }

    /// Samples `f(x)` at every cell center.
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3]) -> f64) -> Self {
        let values = (0..grid.len()).map(|l| f(grid.cell_coords(l))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, idx: &[i64]) -> f64 {
        self.values[self.grid.index(idx)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &CellField, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Grid average `h^dim / |Ω| Σ ν`.
    pub fn mean(&self) -> f64 {
        compensated_sum(&self.values) / self.values.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Position and value of the first non-positive entry, if any.
    pub fn first_non_positive(&self) -> Option<(usize, f64)> {
        self.values
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0))
            .map(|(i, &v)| (i, v))
    }

    /// Subtracts the grid average.
    pub fn remove_mean(&mut self) {
        let m = self.mean();
        self.values.iter_mut().for_each(|v| *v -= m);
    }

    /// Cyclic shift by `offset[a]` cells along each axis: `out[i] = self[i - offset]`.
    pub fn shifted(&self, offset: &[i64]) -> Self {
        let g = self.grid;
        let mut out = vec![0.0; g.len()];
        for (l, slot) in out.iter_mut().enumerate() {
            let mi = g.multi_index(l);
            let src: Vec<i64> = (0..g.dim).map(|a| mi[a] as i64 - offset[a]).collect();
            *slot = self.values[g.index(&src)];
        }
        Self { grid: g, values: out }
    }

    pub fn add_scaled(&mut self, alpha: f64, other: &CellField) {
        debug_assert_eq!(self.grid, other.grid);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
    }
}

impl std::ops::Sub for &CellField {
    type Output = CellField;
    fn sub(self, rhs: &CellField) -> CellField {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl std::ops::Add for &CellField {
    type Output = CellField;
    fn add(self, rhs: &CellField) -> CellField {
        self.zip_map(rhs, |a, b| a + b)
    }
}

/// Vector field with one component per axis, component `a` stored on the
/// faces normal to axis `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField {
    grid: Grid,
    comps: Vec<Vec<f64>>,
}

impl FaceField {
    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self {
            grid,
            comps: vec![vec![value; grid.len()]; grid.dim],
        }
    }

    pub fn from_components(grid: Grid, comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.len() != grid.dim || comps.iter().any(|c| c.len() != grid.len()) {
            return Err(PnpError::InvalidParameter {
                name: "components".into(),
                reason: format!("expected {} arrays of {} values", grid.dim, grid.len()),
            });
        }
        if comps.iter().flatten().any(|v| !v.is_finite()) {
            return Err(PnpError::InvalidParameter {
                name: "components".into(),
                reason: "non-finite face value".into(),
            });
        }
        Ok(Self { grid, comps })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn component(&self, axis: usize) -> &[f64] {
        &self.comps[axis]
    }

    pub fn component_mut(&mut self, axis: usize) -> &mut [f64] {
        &mut self.comps[axis]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.comps
    }

    /// Pointwise product, face by face.
    pub fn product(&self, other: &FaceField) -> FaceField {
        debug_assert_eq!(self.grid, other.grid);
        let comps = self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).collect())
            .collect();
        FaceField {
            grid: self.grid,
            comps,
        }
    }

    pub fn min(&self) -> f64 {
        self.comps
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    fn first_non_positive(&self) -> Option<(usize, f64)> {
        self.comps.iter().enumerate().find_map(|(axis, c)| {
            c.iter()
                .enumerate()
                .find(|(_, v)| !(**v > 0.0))
                .map(|(i, &v)| (axis * self.grid.len() + i, v))
        })
    }
}

/// Discrete gradient `∇_h ν`: forward differences onto the faces.
pub fn gradient(v: &CellField) -> FaceField {
    let g = v.grid;
    let inv_h = 1.0 / g.h;
    let mut comps = vec![vec![0.0; g.len()]; g.dim];
    for (axis, comp) in comps.iter_mut().enumerate() {
        g.for_each_pair(axis, |i, e| comp[i] = (v.values[e] - v.values[i]) * inv_h);
    }
    FaceField { grid: g, comps }
}

/// Discrete divergence `∇_h · f`: backward differences onto the cells.
pub fn divergence(f: &FaceField) -> CellField {
    let g = f.grid;
    let inv_h = 1.0 / g.h;
    let mut out = vec![0.0; g.len()];
    for (axis, comp) in f.comps.iter().enumerate() {
        g.for_each_pair(axis, |i, e| out[e] += (comp[e] - comp[i]) * inv_h);
    }
    CellField { grid: g, values: out }
}

/// `out = ∇_h · (coeff ∇_h v)`, or the plain Laplacian when `coeff` is `None`.
///
/// Performs the same floating-point operations, in the same order, as
/// `divergence(&coeff.product(&gradient(v)))`.
pub(crate) fn flux_divergence_into(coeff: Option<&FaceField>, v: &[f64], grid: &Grid, out: &mut [f64]) {
    let inv_h = 1.0 / grid.h;
    let n = grid.cells;
    out.iter_mut().for_each(|o| *o = 0.0);
    for axis in 0..grid.dim {
        let s = grid.stride(axis);
        let d = coeff.map(|c| c.comps[axis].as_slice());
        if s == 1 {
            for r in (0..grid.len()).step_by(n) {
                flux_point(out, v, d, r, r + 1, r + n - 1, inv_h);
                if n > 2 {
                    flux_run(out, v, d, r + 1, r + 2, r, n - 2, inv_h);
                }
                flux_point(out, v, d, r + n - 1, r, r + n - 2, inv_h);
            }
        } else {
            let block = s * n;
            for outer in (0..grid.len()).step_by(block) {
                for c in 0..n {
                    let here = outer + c * s;
                    let west = outer + (if c == 0 { n - 1 } else { c - 1 }) * s;
                    let east = outer + (if c + 1 == n { 0 } else { c + 1 }) * s;
                    flux_run(out, v, d, here, east, west, s, inv_h);
                }
            }
        }
    }
}

#[inline(always)]
fn flux_point(out: &mut [f64], v: &[f64], d: Option<&[f64]>, i: usize, e: usize, w: usize, inv_h: f64) {
    let (east, west) = match d {
        Some(d) => (d[i] * ((v[e] - v[i]) * inv_h), d[w] * ((v[i] - v[w]) * inv_h)),
        None => ((v[e] - v[i]) * inv_h, (v[i] - v[w]) * inv_h),
    };
    out[i] += (east - west) * inv_h;
}

/// `flux_point` over `len` consecutive cells starting at `here`, whose east
/// and west neighbours start at `east` and `west`.
#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn flux_run(
    out: &mut [f64],
    v: &[f64],
    d: Option<&[f64]>,
    here: usize,
    east: usize,
    west: usize,
    len: usize,
    inv_h: f64,
) {
    let o = &mut out[here..here + len];
    let vi = &v[here..here + len];
    let ve = &v[east..east + len];
    let vw = &v[west..west + len];
    match d {
        Some(d) => {
            let di = &d[here..here + len];
            let dw = &d[west..west + len];
            for k in 0..len {
                let flux_e = di[k] * ((ve[k] - vi[k]) * inv_h);
                let flux_w = dw[k] * ((vi[k] - vw[k]) * inv_h);
                o[k] += (flux_e - flux_w) * inv_h;
            }
        }
        None => {
            for k in 0..len {
                o[k] += ((ve[k] - vi[k]) * inv_h - (vi[k] - vw[k]) * inv_h) * inv_h;
            }
        }
    }
}

/// Discrete Laplacian `Δ_h ν = ∇_h · ∇_h ν` (5-point in 2D, 7-point in 3D).
pub fn laplacian(v: &CellField) -> CellField {
    let mut out = vec![0.0; v.grid.len()];
    flux_divergence_into(None, &v.values, &v.grid, &mut out);
    CellField {
        grid: v.grid,
        values: out,
    }
}

/// `∇_h · (𝒟 ∇_h ν)` for a strictly positive face coefficient `𝒟`.
pub fn variable_coeff_div(coeff: &FaceField, v: &CellField) -> Result<CellField> {
    coeff.grid.check_same(&v.grid)?;
    if let Some((index, value)) = coeff.first_non_positive() {
        return Err(PnpError::NonPositiveCoefficient { index, value });
    }
    let mut out = vec![0.0; v.grid.len()];
    flux_divergence_into(Some(coeff), &v.values, &v.grid, &mut out);
    Ok(CellField {
        grid: v.grid,
        values: out,
    })
}

/// Arithmetic average of the two adjacent cells on every face.
pub fn face_average(v: &CellField) -> FaceField {
    let g = v.grid;
    let mut comps = vec![vec![0.0; g.len()]; g.dim];
    for (axis, comp) in comps.iter_mut().enumerate() {
        g.for_each_pair(axis, |i, e| comp[i] = 0.5 * (v.values[e] + v.values[i]));
    }
    FaceField { grid: g, comps }
}

/// Cell inner product `⟨ν, ξ⟩ = h^dim Σ ν ξ`.
pub fn inner_product(a: &CellField, b: &CellField) -> Result<f64> {
    a.grid.check_same(&b.grid)?;
    Ok(dot_unchecked(&a.values, &b.values) * a.grid.cell_volume())
}

/// Face inner product `[f, g] = Σ_axes ⟨a_axis(f g), 1⟩`.
///
/// The cell average of a periodic face quantity has the same sum as the face
/// quantity itself, so this is `h^dim Σ_axes Σ_faces f g`.
pub fn face_inner_product(a: &FaceField, b: &FaceField) -> Result<f64> {
    a.grid.check_same(&b.grid)?;
    let s: f64 = a
        .comps
        .iter()
        .zip(&b.comps)
        .map(|(x, y)| dot_unchecked(x, y))
        .sum();
    Ok(s * a.grid.cell_volume())
}

pub(crate) fn dot_unchecked(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum(v: &[f64]) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for &x in v {
        let t = sum + x;
        comp += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
        sum = t;
    }
    sum + comp
}

/// `‖ν‖_2`.
pub fn norm_l2(v: &CellField) -> f64 {
    (dot_unchecked(&v.values, &v.values) * v.grid.cell_volume()).sqrt()
}

/// `‖ν‖_p = (⟨|ν|^p, 1⟩)^{1/p}` for `p ≥ 1`.
pub fn norm_lp(v: &CellField, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(PnpError::InvalidParameter {
            name: "p".into(),
            reason: format!("norm exponent must be >= 1, got {p}"),
        });
    }
    if p.is_infinite() {
        return Ok(norm_inf(v));
    }
    let s: f64 = v.values.iter().map(|x| x.abs().powf(p)).sum();
    Ok((s * v.grid.cell_volume()).powf(1.0 / p))
}

pub fn norm_inf(v: &CellField) -> f64 {
    v.values.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `‖∇_h ν‖_2`.
pub fn gradient_norm_l2(v: &CellField) -> f64 {
    let g = gradient(v);
    face_inner_product(&g, &g).expect("same grid").sqrt()
}

/// `‖ν‖_{H^1_h}^2 = ‖ν‖_2^2 + ‖∇_h ν‖_2^2`.
pub fn norm_h1(v: &CellField) -> f64 {
    (norm_l2(v).powi(2) + gradient_norm_l2(v).powi(2)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub l2: f64,
    pub linf: f64,
    pub h1: f64,
}

pub fn norms(v: &CellField) -> Norms {
    Norms {
        l2: norm_l2(v),
        linf: norm_inf(v),
        h1: norm_h1(v),
    }
}
