//! Solves `(shift I - diffusivity Δ_h) x = rhs` with zero-flux boundaries.
//!
//! The same operator serves the signal equation (`shift = mu`) and the
//! implicit diffusion substep (`shift = 1`, `diffusivity = dt`).

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::params::ModelParams;

/// Relative residual at which the 2D conjugate-gradient solve stops.
pub const CG_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct ScreenedLaplacian {
    grid: Grid,
    shift: f64,
    diffusivity: f64,
    /// Thomas forward-sweep coefficients `(c'_i, 1/denominator_i)` in 1D.
    thomas: Vec<(f64, f64)>,
}

impl ScreenedLaplacian {
    pub fn new(grid: Grid, shift: f64, diffusivity: f64) -> Result<Self> {
        if !(shift.is_finite() && shift > 0.0) {
            return Err(Error::InvalidParameter {
                name: "shift",
                requirement: "finite and strictly positive",
                value: shift,
            });
        }
        if !(diffusivity.is_finite() && diffusivity >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "diffusivity",
                requirement: "finite and non-negative",
                value: diffusivity,
            });
        }
        let mut op = ScreenedLaplacian { grid, shift, diffusivity, thomas: Vec::new() };
        if grid.dimension() == 1 {
            op.factor_tridiagonal();
        }
        Ok(op)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn axis_coupling(&self, axis: usize) -> f64 {
        let h = self.grid.spacing(axis);
        self.diffusivity / (h * h)
    }

    fn factor_tridiagonal(&mut self) {
        let n = self.grid.nx();
        let k = self.axis_coupling(0);
        let off = -k;
        let mut coeffs = Vec::with_capacity(n);
        let mut c_prev = 0.0;
        for i in 0..n {
            let neighbours = if i == 0 || i == n - 1 { 1.0 } else { 2.0 };
            let diag = self.shift + neighbours * k;
            let denom = diag - if i == 0 { 0.0 } else { off * c_prev };
            let c = if i + 1 < n { off / denom } else { 0.0 };
            coeffs.push((c, 1.0 / denom));
            c_prev = c;
        }
        self.thomas = coeffs;
    }

    /// `y = (shift I - diffusivity Δ_h) x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let (nx, ny) = (g.nx(), g.ny());
        let kx = self.axis_coupling(0);
        let ky = if g.dimension() == 2 { self.axis_coupling(1) } else { 0.0 };
        let mut y = vec![0.0; x.len()];
        for j in 0..ny {
            for i in 0..nx {
                let c = g.index(i, j);
                let mut acc = self.shift * x[c];
                if i > 0 {
                    acc += kx * (x[c] - x[c - 1]);
                }
                if i + 1 < nx {
                    acc += kx * (x[c] - x[c + 1]);
                }
                if j > 0 {
                    acc += ky * (x[c] - x[c - nx]);
                }
                if j + 1 < ny {
                    acc += ky * (x[c] - x[c + nx]);
                }
                y[c] = acc;
            }
        }
        y
    }

    fn diagonal(&self, i: usize, j: usize) -> f64 {
        let g = &self.grid;
        let kx = self.axis_coupling(0);
        let ky = if g.dimension() == 2 { self.axis_coupling(1) } else { 0.0 };
        let nbx = (i > 0) as u8 + (i + 1 < g.nx()) as u8;
        let nby = (j > 0) as u8 + (j + 1 < g.ny()) as u8;
        self.shift + kx * nbx as f64 + ky * nby as f64
    }

    pub fn solve(&self, rhs: &Field) -> Result<Field> {
        if rhs.grid() != &self.grid {
            return Err(Error::FieldSizeMismatch { expected: self.grid.len(), found: rhs.values().len() });
        }
        // Constants are exact solutions; returning them directly keeps
        // homogeneous states bitwise homogeneous.
        if rhs.is_uniform() {
            let value = rhs.values()[0] / self.shift;
            return Ok(Field::constant(self.grid, value));
        }
        let mut x = if self.grid.dimension() == 1 {
            self.solve_tridiagonal(rhs.values())
        } else {
            self.solve_cg(rhs.values())?
        };
        self.restore_total(rhs.values(), &mut x);
        Field::new(self.grid, x)
    }

    /// Column sums of the operator are all `shift`, so the exact solution
    /// has `sum x = sum rhs / shift`. Round-off in the solve (of order the
    /// condition number times epsilon) breaks this; for a non-negative
    /// right-hand side the solution is non-negative and a single scalar
    /// rescaling restores the total without changing any sign.
    fn restore_total(&self, rhs: &[f64], x: &mut [f64]) {
        if rhs.iter().any(|b| *b < 0.0) {
            return;
        }
        let target = rhs.iter().sum::<f64>() / self.shift;
        let total: f64 = x.iter().sum();
        if total > 0.0 && target > 0.0 {
            let scale = target / total;
            for xi in x.iter_mut() {
                *xi *= scale;
            }
        }
    }

    fn solve_tridiagonal(&self, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let off = -self.axis_coupling(0);
        let mut d = vec![0.0; n];
        for i in 0..n {
            let prev = if i == 0 { 0.0 } else { off * d[i - 1] };
            d[i] = (rhs[i] - prev) * self.thomas[i].1;
        }
        for i in (0..n - 1).rev() {
            d[i] -= self.thomas[i].0 * d[i + 1];
        }
        d
    }

    /// Jacobi-preconditioned conjugate gradients with a fixed reduction order.
    fn solve_cg(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let g = &self.grid;
        let n = rhs.len();
        let inv_diag: Vec<f64> = (0..n)
            .map(|k| 1.0 / self.diagonal(k % g.nx(), k / g.nx()))
            .collect();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let rhs_norm = dot(rhs, rhs).sqrt();
        let mut x: Vec<f64> = rhs.iter().map(|b| b / self.shift).collect();
        if rhs_norm == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let ax = self.apply(&x);
        let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let max_iter = 10 * n + 100;
        let mut residual = dot(&r, &r).sqrt() / rhs_norm;
        for _ in 0..max_iter {
            if residual <= CG_REL_TOL {
                return Ok(x);
            }
            let ap = self.apply(&p);
            let alpha = rz / dot(&p, &ap);
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            residual = dot(&r, &r).sqrt() / rhs_norm;
            for k in 0..n {
                z[k] = r[k] * inv_diag[k];
            }
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
        }
        if residual <= CG_REL_TOL {
            return Ok(x);
        }
        Err(Error::SolveFailure { iterations: max_iter, residual })
    }
}

/// Signal concentration from the densities: `(mu I - Δ_h) w = nu u + lambda v`.
pub fn solve_helmholtz(u: &Field, v: &Field, params: &ModelParams) -> Result<Field> {
    let op = ScreenedLaplacian::new(*u.grid(), params.mu, 1.0)?;
    solve_helmholtz_with(&op, u, v, params)
}

/// As [`solve_helmholtz`] with a prebuilt operator (`shift = mu`, `diffusivity = 1`).
pub fn solve_helmholtz_with(
    op: &ScreenedLaplacian,
    u: &Field,
    v: &Field,
    params: &ModelParams,
) -> Result<Field> {
    if u.grid() != op.grid() || v.grid() != op.grid() {
        return Err(Error::FieldSizeMismatch { expected: op.grid().len(), found: v.values().len() });
    }
    let source = u.zip_map(v, |a, b| params.nu * a + params.lambda * b);
    let w = op.solve(&source)?;
    let min_w = w.min();
    if !(min_w > 0.0) {
        return Err(Error::NonPositiveW { min_w });
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::integrate;
    use std::f64::consts::PI;

    fn params() -> ModelParams {
        ModelParams {
            chi1: 0.05,
            chi2: 0.05,
            a1: 3.0,
            a2: 2.0,
            b1: 2.0,
            b2: 3.0,
            c1: 1.0,
            c2: 1.0,
            mu: 1.5,
            nu: 0.7,
            lambda: 1.3,
        }
    }

    #[test]
    fn constant_source() {
        let g = Grid::line(1.0, 16).unwrap();
        let p = params();
        let w = solve_helmholtz(&Field::constant(g, 2.0), &Field::constant(g, 1.0), &p).unwrap();
        let expected = (p.nu * 2.0 + p.lambda) / p.mu;
        assert!(w.values().iter().all(|&x| x == expected));
    }

    #[test]
    fn eigenmode_division_1d_and_2d() {
        let p = params();
        let g = Grid::line(2.0, 32).unwrap();
        let h = g.spacing(0);
        let k = 3.0;
        let u = Field::from_fn(g, |x, _| 1.0 + 0.5 * (k * PI * x / 2.0).cos());
        let v = Field::zeros(g);
        let w = solve_helmholtz(&u, &v, &p).unwrap();
        let lam = (2.0 / (h * h)) * (1.0 - (k * PI * h / 2.0).cos());
        for (idx, wi) in w.values().iter().enumerate() {
            let x = g.center(idx)[0];
            let expected = p.nu / p.mu + p.nu * 0.5 * (k * PI * x / 2.0).cos() / (p.mu + lam);
            assert!((wi - expected).abs() < 1e-12);
        }

        let g = Grid::rect(1.0, 2.0, 12, 10).unwrap();
        let u = Field::from_fn(g, |x, y| 2.0 + (PI * x).cos() * (PI * y / 2.0).cos());
        let w = solve_helmholtz(&u, &Field::zeros(g), &p).unwrap();
        let (hx, hy) = (g.spacing(0), g.spacing(1));
        let lam = (2.0 / (hx * hx)) * (1.0 - (PI * hx).cos())
            + (2.0 / (hy * hy)) * (1.0 - (PI * hy / 2.0).cos());
        for (idx, wi) in w.values().iter().enumerate() {
            let [x, y] = g.center(idx);
            let expected =
                p.nu * 2.0 / p.mu + p.nu * (PI * x).cos() * (PI * y / 2.0).cos() / (p.mu + lam);
            assert!((wi - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn mass_identity_2d() {
        let p = params();
        let g = Grid::rect(1.0, 1.0, 16, 16).unwrap();
        let u = Field::from_fn(g, |x, y| (1.0 + x * x * y).exp());
        let v = Field::from_fn(g, |x, y| 1.0 + (5.0 * x + y).sin().abs());
        let w = solve_helmholtz(&u, &v, &p).unwrap();
        let lhs = p.mu * integrate(&w);
        let rhs = p.nu * integrate(&u) + p.lambda * integrate(&v);
        assert!((lhs - rhs).abs() <= 1e-9 * rhs);
    }
}
