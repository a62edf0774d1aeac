//! Model parameters, the weak-competition test and the coexistence equilibrium.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The eleven rate constants of the chemotaxis-competition system.
///
/// `chi1`, `chi2` scale the singular sensitivities `chi_i / w`; `a_i` are
/// intrinsic growth rates, `b_i` intraspecific and `c_i` interspecific
/// competition; the signal degrades at rate `mu` and is produced at rates
/// `nu` (by u) and `lambda` (by v).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub chi1: f64,
    pub chi2: f64,
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub c1: f64,
    pub c2: f64,
    pub mu: f64,
    pub nu: f64,
    pub lambda: f64,
}

impl ModelParams {
    fn named(&self) -> [(&'static str, f64); 11] {
        [
            ("chi1", self.chi1),
            ("chi2", self.chi2),
            ("a1", self.a1),
            ("a2", self.a2),
            ("b1", self.b1),
            ("b2", self.b2),
            ("c1", self.c1),
            ("c2", self.c2),
            ("mu", self.mu),
            ("nu", self.nu),
            ("lambda", self.lambda),
        ]
    }

    /// All eleven parameters finite and strictly positive, as the theory assumes.
    pub fn validate(&self) -> Result<()> {
        for (name, value) in self.named() {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    requirement: "finite and strictly positive",
                    value,
                });
            }
        }
        Ok(())
    }

    /// Looser check used by the solver and the ODE oracle: the sensitivities
    /// and the interspecific rates may vanish (decoupled or chemotaxis-free
    /// runs), everything else must stay positive.
    pub fn validate_for_simulation(&self) -> Result<()> {
        for (name, value) in self.named() {
            let may_vanish = matches!(name, "chi1" | "chi2" | "c1" | "c2");
            let ok = value.is_finite() && if may_vanish { value >= 0.0 } else { value > 0.0 };
            if !ok {
                return Err(Error::InvalidParameter {
                    name,
                    requirement: if may_vanish {
                        "finite and non-negative"
                    } else {
                        "finite and strictly positive"
                    },
                    value,
                });
            }
        }
        Ok(())
    }

    pub fn a_min(&self) -> f64 {
        self.a1.min(self.a2)
    }

    pub fn a_max(&self) -> f64 {
        self.a1.max(self.a2)
    }

    /// Parameters with the roles of the two species exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            chi1: self.chi2,
            chi2: self.chi1,
            a1: self.a2,
            a2: self.a1,
            b1: self.b2,
            b2: self.b1,
            c1: self.c2,
            c2: self.c1,
            mu: self.mu,
            nu: self.lambda,
            lambda: self.nu,
        }
    }
}

/// Result of the weak-competition test with the slack of both inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeakCompetition {
    pub holds: bool,
    /// `a1*b2/a2 - c1`
    pub margin1: f64,
    /// `a2*b1/a1 - c2`
    pub margin2: f64,
}

/// Checks `c1 < a1 b2 / a2` and `c2 < a2 b1 / a1` (both strict).
pub fn check_weak_competition(params: &ModelParams) -> WeakCompetition {
    let bound1 = params.a1 * params.b2 / params.a2;
    let bound2 = params.a2 * params.b1 / params.a1;
    WeakCompetition {
        holds: params.c1 < bound1 && params.c2 < bound2,
        margin1: bound1 - params.c1,
        margin2: bound2 - params.c2,
    }
}

pub(crate) fn weak_competition_error(params: &ModelParams) -> Error {
    Error::WeakCompetitionViolated {
        c1: params.c1,
        bound1: params.a1 * params.b2 / params.a2,
        c2: params.c2,
        bound2: params.a2 * params.b1 / params.a1,
    }
}

/// The positive constant steady state `(u*, v*, w*)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub u_star: f64,
    pub v_star: f64,
    pub w_star: f64,
}

/// Closed-form coexistence equilibrium; requires weak competition.
pub fn compute_equilibrium(params: &ModelParams) -> Result<Equilibrium> {
    if !check_weak_competition(params).holds {
        return Err(weak_competition_error(params));
    }
    let det = params.b1 * params.b2 - params.c1 * params.c2;
    let u_star = (params.a1 * params.b2 - params.c1 * params.a2) / det;
    let v_star = (params.b1 * params.a2 - params.a1 * params.c2) / det;
    Ok(Equilibrium {
        u_star,
        v_star,
        w_star: signal_level(params, u_star, v_star),
    })
}

/// `(nu u + lambda v) / mu`: the constant signal produced by constant densities.
pub fn signal_level(params: &ModelParams, u: f64, v: f64) -> f64 {
    params.nu / params.mu * u + params.lambda / params.mu * v
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample() -> ModelParams {
        ModelParams {
            chi1: 0.05,
            chi2: 0.05,
            a1: 3.0,
            a2: 2.0,
            b1: 2.0,
            b2: 3.0,
            c1: 1.0,
            c2: 1.0,
            mu: 1.0,
            nu: 1.0,
            lambda: 1.0,
        }
    }

    #[test]
    fn weak_competition_margins() {
        let w = check_weak_competition(&sample());
        assert!(w.holds);
        assert_eq!(w.margin1, 3.5);
        assert!((w.margin2 - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn weak_competition_boundary_is_strict() {
        let mut p = sample();
        p.c1 = p.a1 * p.b2 / p.a2;
        assert!(!check_weak_competition(&p).holds);
        assert!(matches!(
            compute_equilibrium(&p),
            Err(Error::WeakCompetitionViolated { .. })
        ));
    }

    #[test]
    fn vanishing_competition_is_weak() {
        let mut p = sample();
        p.c1 = 1e-300;
        p.c2 = 1e-300;
        assert!(check_weak_competition(&p).holds);
    }

    #[test]
    fn decoupled_logistic_limit() {
        let p = ModelParams {
            a1: 1.0,
            a2: 1.0,
            b1: 1.0,
            b2: 1.0,
            c1: 1e-12,
            c2: 1e-12,
            nu: 2.0,
            lambda: 3.0,
            mu: 4.0,
            ..sample()
        };
        let eq = compute_equilibrium(&p).unwrap();
        assert!((eq.u_star - 1.0).abs() < 1e-11);
        assert!((eq.v_star - 1.0).abs() < 1e-11);
        assert!((eq.w_star - 5.0 / 4.0).abs() < 1e-11);
    }

    #[test]
    fn symmetric_parameters_give_symmetric_equilibrium() {
        let p = ModelParams {
            a1: 2.0,
            a2: 2.0,
            b1: 1.5,
            b2: 1.5,
            c1: 0.5,
            c2: 0.5,
            ..sample()
        };
        let eq = compute_equilibrium(&p).unwrap();
        assert!((eq.u_star - 1.0).abs() < 1e-15);
        assert_eq!(eq.u_star, eq.v_star);
    }

    #[test]
    fn strict_validation_rejects_zero_sensitivity() {
        let p = ModelParams { chi1: 0.0, ..sample() };
        assert!(p.validate().is_err());
        assert!(p.validate_for_simulation().is_ok());
        let q = ModelParams { mu: 0.0, ..sample() };
        assert!(q.validate_for_simulation().is_err());
    }
}
