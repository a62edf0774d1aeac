//! Explicit constants of the persistence and stabilization estimates.
//!
//! Everything here is a closed-form function of the model parameters and of
//! the domain's measure and diameter, except the heat-kernel constant
//! `delta0`, which is evaluated by adaptive quadrature.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::params::{
    check_weak_competition, compute_equilibrium, weak_competition_error, Equilibrium, ModelParams,
};
use crate::quadrature::integrate_adaptive;

/// Relative accuracy requested from the `delta0` quadrature.
pub const DELTA0_REL_TOL: f64 = 1e-13;

/// Discriminants below this fraction of `S^2` are treated as a double root.
const DOUBLE_ROOT_REL: f64 = 1e-14;

/// Energy weights `(xi1, xi2)`: the species with the larger interspecific
/// rate gets weight `c_min / c_max`, the other weight 1, so that
/// `xi1 * c1 == xi2 * c2 == c_min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Xi {
    pub xi1: f64,
    pub xi2: f64,
}

impl Xi {
    pub fn new(c1: f64, c2: f64) -> Self {
        if c2 == 0.0 && c1 == 0.0 {
            return Xi { xi1: 1.0, xi2: 1.0 };
        }
        if c2 >= c1 {
            Xi { xi1: 1.0, xi2: c1 / c2 }
        } else {
            Xi { xi1: c2 / c1, xi2: 1.0 }
        }
    }

    /// The common value of `xi1*c1` and `xi2*c2`, taken from the ratio
    /// definition rather than from rounded products: it is `min(c1, c2)`.
    pub fn weighted_competition(c1: f64, c2: f64) -> f64 {
        c1.min(c2)
    }
}

/// `h(chi1, chi2) = max{chi1, chi2, (chi1 - chi2)^2 / 4}`.
pub fn h_function(chi1: f64, chi2: f64) -> f64 {
    let d = chi1 - chi2;
    chi1.max(chi2).max(d * d / 4.0)
}

/// Hölder exponent `p`: 1 when `(chi1-chi2)^2 <= 4 chi2` or `<= 4 chi1`,
/// otherwise `4 chi2 / (chi1 - chi2)^2`.
pub fn p_exponent(chi1: f64, chi2: f64) -> f64 {
    let d2 = (chi1 - chi2) * (chi1 - chi2);
    if d2 <= 4.0 * chi2 || d2 <= 4.0 * chi1 {
        1.0
    } else {
        4.0 * chi2 / d2
    }
}

/// `beta = chi + 2 - 2 sqrt(chi + 1)`, the root of `(chi - beta)^2 = 4 beta`.
pub fn beta_equal_chi(chi: f64) -> f64 {
    chi + 2.0 - 2.0 * (chi + 1.0).sqrt()
}

/// `(sqrt(chi + 1) - 1)^2`. Algebraically equal to [`beta_equal_chi`], but
/// evaluated without the cancellation that form suffers for small `chi`.
pub fn equal_chi_penalty(chi: f64) -> f64 {
    let s = (chi + 1.0).sqrt() - 1.0;
    s * s
}

/// `m0 = (b_max + c_max) * max{1, a1/b1 + a2/b2}`.
pub fn m0(params: &ModelParams) -> f64 {
    let b_max = params.b1.max(params.b2);
    let c_max = params.c1.max(params.c2);
    (b_max + c_max) * (params.a1 / params.b1 + params.a2 / params.b2).max(1.0)
}

/// `m*(mu, nu, lambda)`.
pub fn m_star(mu: f64, nu: f64, lambda: f64) -> f64 {
    let k = (-mu + nu / 2.0 + lambda / 2.0).max(1.0);
    let by_nu = k * 2.0 * nu * nu / (mu * mu) + nu / 2.0;
    let by_lambda = k * 2.0 * lambda * lambda / (mu * mu) + lambda / 2.0;
    by_nu.max(by_lambda)
}

/// `m(mu, nu, lambda) = m* / min{nu, lambda}`.
pub fn m_ratio(mu: f64, nu: f64, lambda: f64) -> f64 {
    m_star(mu, nu, lambda) / nu.min(lambda)
}

/// Heat-kernel constant
/// `delta0 = int_0^inf (4 pi t)^{-n/2} exp(-t - d^2 / (4t)) dt`.
///
/// The integral is split at `t = 1`; `[0, 1]` is mapped by `t = s^2`
/// (removing the `t^{-1/2}` singularity in one dimension) and `[1, inf)`
/// by `t = 1/s`.
pub fn compute_delta0(dimension: usize, diameter: f64) -> Result<f64> {
    if !(dimension == 1 || dimension == 2) {
        return Err(Error::InvalidParameter {
            name: "dimension",
            requirement: "1 or 2",
            value: dimension as f64,
        });
    }
    if !(diameter.is_finite() && diameter >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "diameter",
            requirement: "finite and non-negative",
            value: diameter,
        });
    }
    if dimension == 2 && diameter == 0.0 {
        return Err(Error::DivergentIntegral { dimension });
    }
    let quarter_d2 = diameter * diameter / 4.0;
    let half_n = dimension as f64 / 2.0;
    let norm = (4.0 * PI).powf(-half_n);

    let near = move |s: f64| -> f64 {
        if s <= 0.0 {
            return if dimension == 1 && quarter_d2 == 0.0 { 2.0 * norm } else { 0.0 };
        }
        let t = s * s;
        let decay = (-t - quarter_d2 / t).exp();
        // (4 pi t)^{-n/2} * 2 s
        match dimension {
            1 => 2.0 * norm * decay,
            _ => 2.0 * norm * decay / s,
        }
    };
    let far = move |s: f64| -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        let t = 1.0 / s;
        let decay = (-t - quarter_d2 * s).exp();
        norm * s.powf(half_n) * decay / (s * s)
    };

    let (inner, _) = integrate_adaptive(near, 0.0, 1.0, DELTA0_REL_TOL, 1e-300);
    let (outer, _) = integrate_adaptive(far, 0.0, 1.0, DELTA0_REL_TOL, 1e-300);
    Ok(inner + outer)
}

/// The symmetric matrix `B(xi1, xi2, eta)` whose positive definiteness
/// drives the energy estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BMatrix {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
}

impl BMatrix {
    pub fn trace(&self) -> f64 {
        self.a11 + self.a22
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a12
    }

    /// Trace and determinant both strictly positive.
    pub fn is_positive_definite(&self) -> bool {
        self.trace() > 0.0 && self.det() > 0.0
    }
}

pub fn b_matrix(params: &ModelParams, xi1: f64, xi2: f64, eta: f64) -> BMatrix {
    BMatrix {
        a11: xi1 * params.b1 - eta,
        a12: 0.5 * (xi1 * params.c1 + xi2 * params.c2),
        a22: xi2 * params.b2 - eta,
    }
}

/// `g(eta) = eta^2 - (xi1 b1 + xi2 b2) eta + xi1 xi2 (b1 b2 - c1 c2)`.
pub fn g_quadratic(params: &ModelParams, xi1: f64, xi2: f64, eta: f64) -> f64 {
    let s = xi1 * params.b1 + xi2 * params.b2;
    let p = xi1 * xi2 * (params.b1 * params.b2 - params.c1 * params.c2);
    eta * eta - s * eta + p
}

/// Smallest positive root of `g`, if `g` has one.
pub fn eta_tilde(params: &ModelParams, xi1: f64, xi2: f64) -> Option<f64> {
    let s = xi1 * params.b1 + xi2 * params.b2;
    let p = xi1 * xi2 * (params.b1 * params.b2 - params.c1 * params.c2);
    if p <= 0.0 {
        // a root at or below zero: no positive interval where g > 0
        return None;
    }
    let disc = s * s - 4.0 * p;
    if disc.abs() <= DOUBLE_ROOT_REL * s * s {
        return Some(0.5 * s);
    }
    if disc < 0.0 {
        return None;
    }
    // smaller root (s - sqrt(D)) / 2 written without cancellation
    Some(2.0 * p / (s + disc.sqrt()))
}

/// Quantities that only exist when the competition is weak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoexistenceConstants {
    pub equilibrium: Equilibrium,
    pub eta_tilde: Option<f64>,
    pub eta0: f64,
    /// `m / (delta0 |Omega| w* eta0)`
    pub m_tilde_1: f64,
    /// `max{1, m_tilde_1}`
    pub m1: f64,
    /// `m_tilde_1^p`, the form that appears inside the energy estimate.
    pub m1_exponentiated: f64,
}

/// All constants of the hypothesis checks for one parameter set and domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedConstants {
    pub dimension: usize,
    pub measure: f64,
    pub diameter: f64,
    pub a_min: f64,
    pub a_max: f64,
    pub b_min: f64,
    pub b_max: f64,
    pub c_min: f64,
    pub c_max: f64,
    pub m0: f64,
    pub m_star: f64,
    pub m: f64,
    pub delta0: f64,
    pub xi1: f64,
    pub xi2: f64,
    pub h: f64,
    pub p: f64,
    pub m_tilde_0: f64,
    pub beta_equal_chi: Option<f64>,
    pub coexistence: Option<CoexistenceConstants>,
}

impl DerivedConstants {
    /// Evaluates every constant that the parameters admit. The coexistence
    /// block is `None` when the competition is not weak.
    pub fn evaluate(params: &ModelParams, grid: &Grid) -> Result<Self> {
        params.validate_for_simulation()?;
        let dimension = grid.dimension();
        let measure = grid.measure();
        let diameter = grid.diameter();
        let delta0 = compute_delta0(dimension, diameter)?;
        let xi = Xi::new(params.c1, params.c2);
        let p = p_exponent(params.chi1, params.chi2);

        let coexistence = if check_weak_competition(params).holds {
            let equilibrium = compute_equilibrium(params)?;
            let eta_tilde = eta_tilde(params, xi.xi1, xi.xi2);
            let mut eta0 = (xi.xi1 * params.b1).min(xi.xi2 * params.b2);
            if let Some(root) = eta_tilde {
                eta0 = eta0.min(root);
            }
            let m_tilde_1 = m_ratio(params.mu, params.nu, params.lambda)
                / (delta0 * measure * equilibrium.w_star * eta0);
            Some(CoexistenceConstants {
                equilibrium,
                eta_tilde,
                eta0,
                m_tilde_1,
                m1: m_tilde_1.max(1.0),
                m1_exponentiated: m_tilde_1.powf(p),
            })
        } else {
            None
        };

        Ok(DerivedConstants {
            dimension,
            measure,
            diameter,
            a_min: params.a1.min(params.a2),
            a_max: params.a1.max(params.a2),
            b_min: params.b1.min(params.b2),
            b_max: params.b1.max(params.b2),
            c_min: params.c1.min(params.c2),
            c_max: params.c1.max(params.c2),
            m0: m0(params),
            m_star: m_star(params.mu, params.nu, params.lambda),
            m: m_ratio(params.mu, params.nu, params.lambda),
            delta0,
            xi1: xi.xi1,
            xi2: xi.xi2,
            h: h_function(params.chi1, params.chi2),
            p,
            m_tilde_0: params.b1.max(params.b2) + params.c1.max(params.c2),
            beta_equal_chi: (params.chi1 == params.chi2).then(|| beta_equal_chi(params.chi1)),
            coexistence,
        })
    }

    /// Coexistence block, or the weak-competition error.
    pub fn coexistence(&self, params: &ModelParams) -> Result<&CoexistenceConstants> {
        self.coexistence
            .as_ref()
            .ok_or_else(|| weak_competition_error(params))
    }
}

/// Strict entry point: all parameters positive and weak competition required.
pub fn compute_constants(params: &ModelParams, grid: &Grid) -> Result<DerivedConstants> {
    params.validate()?;
    compute_equilibrium(params)?;
    DerivedConstants::evaluate(params, grid)
}
