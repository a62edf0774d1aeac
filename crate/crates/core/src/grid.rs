//! Uniform cell-centered grids on intervals and rectangles, fields on them,
//! and the finite-volume operators with zero-flux boundaries.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An interval `[0, L]` or a rectangle `[0, Lx] x [0, Ly]` split into equal cells.
///
/// One-dimensional grids carry a dummy second axis of one cell and unit
/// length so that index arithmetic is shared.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dimension: usize,
    lengths: [f64; 2],
    cells: [usize; 2],
}

impl Grid {
    pub fn line(length: f64, n: usize) -> Result<Self> {
        Self::new(&[length], &[n])
    }

    pub fn rect(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        Self::new(&[lx, ly], &[nx, ny])
    }

    /// Builds a grid from per-axis extents and cell counts (1 or 2 axes).
    pub fn new(lengths: &[f64], cells: &[usize]) -> Result<Self> {
        let dimension = lengths.len();
        if !(dimension == 1 || dimension == 2) || cells.len() != dimension {
            return Err(Error::InvalidGrid(format!(
                "need 1 or 2 axes with matching cell counts, got {} extents and {} counts",
                lengths.len(),
                cells.len()
            )));
        }
        for (&l, &n) in lengths.iter().zip(cells) {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidGrid(format!("extent must be positive, got {l}")));
            }
            if n < 2 {
                return Err(Error::InvalidGrid(format!(
                    "need at least 2 cells per axis, got {n}"
                )));
            }
        }
        let mut grid = Grid { dimension, lengths: [1.0; 2], cells: [1; 2] };
        grid.lengths[..dimension].copy_from_slice(lengths);
        grid.cells[..dimension].copy_from_slice(cells);
        Ok(grid)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths[..self.dimension]
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells[..self.dimension]
    }

    pub fn nx(&self) -> usize {
        self.cells[0]
    }

    /// 1 for one-dimensional grids.
    pub fn ny(&self) -> usize {
        self.cells[1]
    }

    pub fn len(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.cells[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.lengths()
            .iter()
            .zip(self.cells())
            .map(|(&l, &n)| l / n as f64)
            .product()
    }

    /// `|Omega|`
    pub fn measure(&self) -> f64 {
        self.lengths().iter().product()
    }

    /// Length of the diagonal.
    pub fn diameter(&self) -> f64 {
        self.lengths().iter().map(|l| l * l).sum::<f64>().sqrt()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.cells[0] * j
    }

    /// Cell center coordinates (the second entry is ignored in 1D).
    pub fn center(&self, k: usize) -> [f64; 2] {
        let i = k % self.cells[0];
        let j = k / self.cells[0];
        [
            (i as f64 + 0.5) * self.spacing(0),
            (j as f64 + 0.5) * self.spacing(1),
        ]
    }
}

/// Cell-centered values on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::FieldSizeMismatch { expected: grid.len(), found: values.len() });
        }
        Ok(Field { grid, values })
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Field { grid, values: vec![value; grid.len()] }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f(x, y)` at cell centers (`y` is the dummy 0.5 in 1D).
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|k| {
                let [x, y] = grid.center(k);
                f(x, y)
            })
            .collect();
        Field { grid, values }
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

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { grid: self.grid, values: self.values.iter().map(|&x| f(x)).collect() }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        debug_assert_eq!(self.grid, other.grid);
        Field {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// True when every value equals the first one bitwise.
    pub fn is_uniform(&self) -> bool {
        let first = self.values[0];
        self.values.iter().all(|&x| x.to_bits() == first.to_bits())
    }

    /// Writes one row per cell: `x,value` in 1D, `x,y,value` in 2D.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        if self.grid.dimension == 1 {
            writeln!(out, "x,value")?;
        } else {
            writeln!(out, "x,y,value")?;
        }
        for (k, &value) in self.values.iter().enumerate() {
            let [x, y] = self.grid.center(k);
            if self.grid.dimension == 1 {
                writeln!(out, "{},{}", fmt_f64(x), fmt_f64(value))?;
            } else {
                writeln!(out, "{},{},{}", fmt_f64(x), fmt_f64(y), fmt_f64(value))?;
            }
        }
        Ok(())
    }

    /// Reads the format of [`Field::write_csv`]; the last column of each row
    /// is taken as the value, rows in cell order.
    pub fn read_csv<R: BufRead>(grid: Grid, input: R) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.len());
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (lineno == 0 && line.starts_with('x')) {
                continue;
            }
            let last = line.rsplit(',').next().unwrap_or("").trim();
            let value: f64 = last.parse().map_err(|_| {
                Error::InvalidInitialData(format!("line {}: cannot parse `{last}`", lineno + 1))
            })?;
            values.push(value);
        }
        Field::new(grid, values)
    }
}

/// Shortest round-trip decimal, switching to exponent form for very large
/// or very small magnitudes.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Midpoint-rule integral `sum f_i * cell volume`.
pub fn integrate(f: &Field) -> f64 {
    f.values.iter().sum::<f64>() * f.grid.cell_volume()
}

/// Values on cell faces. `x` has `(nx+1)*ny` entries indexed `i + (nx+1)*j`
/// (face `i` sits left of cell `i`); `y` has `nx*(ny+1)` entries indexed
/// `i + nx*j` (face `j` sits below cell row `j`) and is empty in 1D.
/// Boundary faces are always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField {
    pub grid: Grid,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl FaceField {
    pub fn zeros(grid: Grid) -> Self {
        let (nx, ny) = (grid.nx(), grid.ny());
        FaceField {
            grid,
            x: vec![0.0; (nx + 1) * ny],
            y: if grid.dimension() == 2 { vec![0.0; nx * (ny + 1)] } else { Vec::new() },
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.x.iter_mut().chain(self.y.iter_mut()).for_each(|v| *v *= factor);
    }

    /// Largest `|value|` on x faces and on y faces.
    pub fn max_abs(&self) -> [f64; 2] {
        let m = |v: &[f64]| v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        [m(&self.x), m(&self.y)]
    }
}

/// Two-point differences across interior faces; zero on the boundary.
pub fn face_gradient(f: &Field) -> FaceField {
    let grid = f.grid;
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut g = FaceField::zeros(grid);
    let hx = grid.spacing(0);
    for j in 0..ny {
        for i in 1..nx {
            g.x[i + (nx + 1) * j] = (f.values[grid.index(i, j)] - f.values[grid.index(i - 1, j)]) / hx;
        }
    }
    if grid.dimension() == 2 {
        let hy = grid.spacing(1);
        for j in 1..ny {
            for i in 0..nx {
                g.y[i + nx * j] = (f.values[grid.index(i, j)] - f.values[grid.index(i, j - 1)]) / hy;
            }
        }
    }
    g
}

/// Divergence of a face flux, `(F_right - F_left)/h` summed over axes.
fn divergence(flux: &FaceField) -> Field {
    let grid = flux.grid;
    let (nx, ny) = (grid.nx(), grid.ny());
    let hx = grid.spacing(0);
    let mut out = vec![0.0; grid.len()];
    for j in 0..ny {
        for i in 0..nx {
            let row = (nx + 1) * j;
            out[grid.index(i, j)] = (flux.x[i + 1 + row] - flux.x[i + row]) / hx;
        }
    }
    if grid.dimension() == 2 {
        let hy = grid.spacing(1);
        for j in 0..ny {
            for i in 0..nx {
                out[grid.index(i, j)] += (flux.y[i + nx * (j + 1)] - flux.y[i + nx * j]) / hy;
            }
        }
    }
    Field { grid, values: out }
}

/// Discrete Laplacian with ghost-cell reflection, written as the divergence
/// of face gradients so that its integral telescopes to zero.
pub fn laplacian_neumann(f: &Field) -> Field {
    divergence(&face_gradient(f))
}

/// Upwind flux `velocity * density_upwind` on every face.
pub fn upwind_flux(density: &Field, velocity: &FaceField) -> FaceField {
    let grid = density.grid;
    let (nx, ny) = (grid.nx(), grid.ny());
    let rho = &density.values;
    let mut flux = FaceField::zeros(grid);
    for j in 0..ny {
        for i in 1..nx {
            let k = i + (nx + 1) * j;
            let vel = velocity.x[k];
            let up = if vel >= 0.0 { rho[grid.index(i - 1, j)] } else { rho[grid.index(i, j)] };
            flux.x[k] = vel * up;
        }
    }
    if grid.dimension() == 2 {
        for j in 1..ny {
            for i in 0..nx {
                let k = i + nx * j;
                let vel = velocity.y[k];
                let up = if vel >= 0.0 { rho[grid.index(i, j - 1)] } else { rho[grid.index(i, j)] };
                flux.y[k] = vel * up;
            }
        }
    }
    flux
}

/// First-order upwind tendency `-div(density * velocity)`.
pub fn upwind_advect(density: &Field, velocity: &FaceField) -> Field {
    let mut tendency = divergence(&upwind_flux(density, velocity));
    tendency.values.iter_mut().for_each(|x| *x = -*x);
    tendency
}
