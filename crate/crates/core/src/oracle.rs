//! Reference computations that share no code path with the production
//! solver: the spatially homogeneous ODE by classical RK4, a dense
//! Gaussian-elimination solve of the signal equation, and closed forms of
//! the heat-kernel constant.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::params::{signal_level, ModelParams};
use crate::solver::{cfl_dt, initial_state, InitialCondition, State, StepperConfig, Stepper};

/// Largest grid the dense oracle accepts.
pub const DENSE_MAX_CELLS: usize = 64;

/// Euler-Mascheroni constant.
const EULER_GAMMA: f64 = 0.577_215_664_901_532_860_606_512_090_082_4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdeSeries {
    pub t: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
}

impl OdeSeries {
    pub fn last(&self) -> (f64, f64, f64) {
        let n = self.t.len() - 1;
        (self.u[n], self.v[n], self.w[n])
    }
}

fn lv_rhs(p: &ModelParams, u: f64, v: f64) -> (f64, f64) {
    (u * (p.a1 - p.b1 * u - p.c1 * v), v * (p.a2 - p.b2 * v - p.c2 * u))
}

fn rk4_step(p: &ModelParams, u: f64, v: f64, h: f64) -> (f64, f64) {
    let (k1u, k1v) = lv_rhs(p, u, v);
    let (k2u, k2v) = lv_rhs(p, u + 0.5 * h * k1u, v + 0.5 * h * k1v);
    let (k3u, k3v) = lv_rhs(p, u + 0.5 * h * k2u, v + 0.5 * h * k2v);
    let (k4u, k4v) = lv_rhs(p, u + h * k3u, v + h * k3v);
    (
        u + h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u),
        v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
    )
}

/// Advances the kinetics over `span` in equal RK4 substeps no longer than `h_max`.
pub fn rk4_advance(p: &ModelParams, u: f64, v: f64, span: f64, h_max: f64) -> (f64, f64) {
    if span <= 0.0 {
        return (u, v);
    }
    let n = (span / h_max).ceil().max(1.0) as usize;
    let h = span / n as f64;
    let (mut u, mut v) = (u, v);
    for _ in 0..n {
        (u, v) = rk4_step(p, u, v, h);
    }
    (u, v)
}

/// The kinetics `u' = u(a1 - b1 u - c1 v)`, `v' = v(a2 - b2 v - c2 u)` with
/// `w = (nu u + lambda v)/mu`, integrated by RK4 with step `dt_fine`.
pub fn ode_reduction(params: &ModelParams, u0: f64, v0: f64, t_end: f64, dt_fine: f64) -> Result<OdeSeries> {
    params.validate_for_simulation()?;
    if !(u0 >= 0.0 && v0 >= 0.0) {
        return Err(Error::InvalidInitialData(format!("need u0, v0 >= 0, got ({u0}, {v0})")));
    }
    let limit = 1e-3 / params.a1.max(params.a2);
    if !(dt_fine > 0.0 && dt_fine <= limit * (1.0 + 1e-12)) {
        return Err(Error::InvalidParameter {
            name: "dt_fine",
            requirement: "in (0, 1e-3 / a_max]",
            value: dt_fine,
        });
    }
    let steps = (t_end / dt_fine).ceil().max(0.0) as usize;
    let mut series = OdeSeries {
        t: Vec::with_capacity(steps + 1),
        u: Vec::with_capacity(steps + 1),
        v: Vec::with_capacity(steps + 1),
        w: Vec::with_capacity(steps + 1),
    };
    let (mut u, mut v, mut t) = (u0, v0, 0.0);
    let push = |t: f64, u: f64, v: f64, s: &mut OdeSeries| {
        s.t.push(t);
        s.u.push(u);
        s.v.push(v);
        s.w.push(signal_level(params, u, v));
    };
    push(t, u, v, &mut series);
    for k in 0..steps {
        let t_next = if k + 1 == steps { t_end } else { (k + 1) as f64 * dt_fine };
        (u, v) = rk4_step(params, u, v, t_next - t);
        t = t_next;
        push(t, u, v, &mut series);
    }
    Ok(series)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HomogeneousComparison {
    /// `max_t |u_pde - u_ode| + |v_pde - v_ode|`
    pub max_deviation: f64,
    pub steps: u64,
    pub final_pde: (f64, f64),
    pub final_ode: (f64, f64),
}

/// Runs the PDE stepper from constant data and follows it with the RK4
/// kinetics between the same output times.
pub fn compare_homogeneous(params: &ModelParams, grid: &Grid, config: &StepperConfig) -> Result<HomogeneousComparison> {
    if !matches!(config.initial, InitialCondition::Constant { .. }) {
        return Err(Error::InvalidInitialData("homogeneous comparison needs constant initial data".into()));
    }
    config.validate()?;
    let w_floor = config.w_floor.unwrap_or(crate::solver::ABSOLUTE_W_FLOOR);
    let stepper = Stepper::new(*params, *grid, w_floor, config.debug_clip)?;
    let mut state: State = initial_state(&stepper, params, grid, config)?;
    let h_max = 1e-3 / params.a1.max(params.a2);
    let (mut u, mut v) = (state.u.values()[0], state.v.values()[0]);
    let mut max_deviation: f64 = 0.0;
    while state.t < config.t_end && state.step < config.max_steps {
        let dt = cfl_dt(&state, params, config).min(config.t_end - state.t);
        let next = stepper.step(&state, dt)?;
        (u, v) = rk4_advance(params, u, v, next.t - state.t, h_max);
        state = next;
        let worst_u = state.u.values().iter().fold(0.0f64, |m, x| m.max((x - u).abs()));
        let worst_v = state.v.values().iter().fold(0.0f64, |m, x| m.max((x - v).abs()));
        max_deviation = max_deviation.max(worst_u + worst_v);
    }
    Ok(HomogeneousComparison {
        max_deviation,
        steps: state.step,
        final_pde: (state.u.values()[0], state.v.values()[0]),
        final_ode: (u, v),
    })
}

/// Assembles `mu I - Δ_h` as a dense matrix, cell by cell, and solves
/// against `nu u + lambda v` by Gaussian elimination with partial pivoting.
pub fn dense_elliptic_oracle(u: &Field, v: &Field, params: &ModelParams) -> Result<Field> {
    let grid = *u.grid();
    let n = grid.len();
    if n > DENSE_MAX_CELLS {
        return Err(Error::InvalidGrid(format!("dense oracle takes at most {DENSE_MAX_CELLS} cells, got {n}")));
    }
    let (nx, ny) = (grid.nx(), grid.ny());
    let hx2 = grid.spacing(0).powi(2);
    let hy2 = grid.spacing(1).powi(2);
    let mut a = vec![vec![0.0; n + 1]; n];
    for j in 0..ny {
        for i in 0..nx {
            let row = i + nx * j;
            a[row][row] = params.mu;
            let mut couple = |col: usize, weight: f64| {
                a[row][row] += weight;
                a[row][col] -= weight;
            };
            if i > 0 {
                couple(row - 1, 1.0 / hx2);
            }
            if i + 1 < nx {
                couple(row + 1, 1.0 / hx2);
            }
            if grid.dimension() == 2 {
                if j > 0 {
                    couple(row - nx, 1.0 / hy2);
                }
                if j + 1 < ny {
                    couple(row + nx, 1.0 / hy2);
                }
            }
            a[row][n] = params.nu * u.values()[row] + params.lambda * v.values()[row];
        }
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .expect("non-empty range");
        if a[pivot][col].abs() < 1e-300 {
            return Err(Error::SingularMatrix { pivot: col });
        }
        a.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor != 0.0 {
                for k in col..=n {
                    a[row][k] -= factor * a[col][k];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = a[row][n];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Field::new(grid, x)
}

/// Modified Bessel function `K0(x)` for `x > 0`: the ascending series for
/// `x <= 2`, otherwise the trapezoidal rule on `int_0^inf exp(-x cosh s) ds`,
/// which converges geometrically for this analytic integrand.
pub fn bessel_k0(x: f64) -> f64 {
    assert!(x > 0.0, "K0 needs a positive argument");
    if x <= 2.0 {
        let q = x * x / 4.0;
        let mut term = 1.0;
        let mut i0 = 1.0;
        let mut harmonic = 0.0;
        let mut tail = 0.0;
        for k in 1..40 {
            let kf = k as f64;
            term *= q / (kf * kf);
            harmonic += 1.0 / kf;
            i0 += term;
            tail += term * harmonic;
        }
        -((x / 2.0).ln() + EULER_GAMMA) * i0 + tail
    } else {
        let h = 0.02;
        let mut sum = 0.5 * (-x).exp();
        let mut k = 1;
        loop {
            let s = k as f64 * h;
            let term = (-x * s.cosh()).exp();
            sum += term;
            if term < 1e-18 * sum {
                break;
            }
            k += 1;
        }
        sum * h
    }
}

/// Closed forms of the heat-kernel constant: `exp(-d)/2` in one dimension
/// and `K0(d)/(2 pi)` in two.
pub fn delta0_closed_form(dimension: usize, diameter: f64) -> Option<f64> {
    match dimension {
        1 if diameter >= 0.0 => Some((-diameter).exp() / 2.0),
        2 if diameter > 0.0 => Some(bessel_k0(diameter) / (2.0 * PI)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k0_reference_values() {
        // values from Abramowitz and Stegun, table 9.8
        assert!((bessel_k0(0.5) - 0.924_419_071_227_665_9).abs() < 1e-14);
        assert!((bessel_k0(1.0) - 0.421_024_438_240_708_3).abs() < 1e-14);
        assert!((bessel_k0(2.0) - 0.113_893_872_749_533_4).abs() < 1e-14);
        assert!((bessel_k0(2.0 + 1e-12) - 0.113_893_872_749_533_4).abs() < 1e-12);
        assert!((bessel_k0(5.0) - 3.691_098_334_042_594e-3).abs() < 1e-15);
    }

    #[test]
    fn logistic_closed_form() {
        let p = ModelParams {
            chi1: 0.0,
            chi2: 0.0,
            a1: 1.0,
            a2: 1.0,
            b1: 1.0,
            b2: 1.0,
            c1: 0.0,
            c2: 0.0,
            mu: 1.0,
            nu: 1.0,
            lambda: 1.0,
        };
        let s = ode_reduction(&p, 0.5, 0.0, std::f64::consts::LN_2, 1e-3).unwrap();
        let (u, v, _) = s.last();
        assert!((u - 2.0 / 3.0).abs() < 1e-13);
        assert_eq!(v, 0.0);
        assert!(ode_reduction(&p, 0.5, 0.0, 1.0, 1e-2).is_err());
    }

    #[test]
    fn dense_matches_constant_source() {
        let g = Grid::rect(1.0, 1.0, 4, 4).unwrap();
        let p = ModelParams {
            chi1: 0.0,
            chi2: 0.0,
            a1: 1.0,
            a2: 1.0,
            b1: 1.0,
            b2: 1.0,
            c1: 0.0,
            c2: 0.0,
            mu: 2.0,
            nu: 1.0,
            lambda: 3.0,
        };
        let w = dense_elliptic_oracle(&Field::constant(g, 1.0), &Field::constant(g, 1.0), &p).unwrap();
        assert!(w.values().iter().all(|x| (x - 2.0).abs() < 1e-14));
        assert!(dense_elliptic_oracle(
            &Field::zeros(Grid::line(1.0, 65).unwrap()),
            &Field::zeros(Grid::line(1.0, 65).unwrap()),
            &p
        )
        .is_err());
    }
}
