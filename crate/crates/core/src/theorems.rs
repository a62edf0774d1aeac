//! Hypothesis checks for the persistence and stabilization results, with
//! the predicted asymptotic lower bounds.

use serde::Serialize;

use crate::constants::{equal_chi_penalty, DerivedConstants};
use crate::error::Result;
use crate::grid::Grid;
use crate::params::{check_weak_competition, ModelParams};

/// One strict inequality `lhs > rhs`. `rhs` and `margin` are `None` when the
/// condition does not apply to the parameters (unequal sensitivities for
/// the equal-sensitivity branch, or strong competition for stabilization).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Condition {
    pub holds: bool,
    pub applicable: bool,
    pub lhs: f64,
    pub rhs: Option<f64>,
    pub margin: Option<f64>,
}

impl Condition {
    fn strict(lhs: f64, rhs: f64) -> Self {
        Condition { holds: lhs > rhs, applicable: true, lhs, rhs: Some(rhs), margin: Some(lhs - rhs) }
    }

    fn not_applicable(lhs: f64) -> Self {
        Condition { holds: false, applicable: false, lhs, rhs: None, margin: None }
    }
}

/// Lower bounds on `liminf int(u+v)` and `liminf inf w`. `None` when the
/// corresponding condition fails (the formula then has no meaning).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PredictedBounds {
    /// General branch with the factor `2 mu h`.
    pub mass: Option<f64>,
    pub w: Option<f64>,
    /// General branch with the factor `2 h`, as printed in the statement of
    /// the bound.
    pub mass_as_printed: Option<f64>,
    pub w_as_printed: Option<f64>,
    /// Equal-sensitivity branch.
    pub mass_equal_chi: Option<f64>,
    pub w_equal_chi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    /// `lhs = max(c1 / (a1 b2/a2), c2 / (a2 b1/a1))`, `rhs = 1`.
    pub weak_competition: Condition,
    pub weak_competition_margins: [f64; 2],
    /// `a_min > 2 mu h(chi1, chi2)`
    pub persistence_general: Condition,
    /// `a_min > 2 mu (sqrt(chi+1) - 1)^2`, only when `chi1 == chi2`.
    pub persistence_equal_chi: Condition,
    /// `a_min > 2 mu h + m0 m1 ((chi1^2 u* + chi2^2 v*)/4)^p`
    pub stabilization_general: Condition,
    /// `a_min > 2 mu (sqrt(chi+1) - 1)^2 + m~0 m~1 (chi1^2 u* + chi2^2 v*)/4`
    pub stabilization_equal_chi: Condition,
    pub bounds: PredictedBounds,
    pub constants: DerivedConstants,
}

impl ConditionReport {
    /// Whether the strongest applicable stabilization condition holds.
    pub fn stabilization_holds(&self) -> bool {
        self.stabilization_general.holds || self.stabilization_equal_chi.holds
    }

    pub fn persistence_holds(&self) -> bool {
        self.persistence_general.holds || self.persistence_equal_chi.holds
    }

    /// The w lower bound of the strongest branch that holds.
    pub fn best_w_bound(&self) -> Option<f64> {
        self.bounds.w_equal_chi.or(self.bounds.w)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn check_theorems(params: &ModelParams, grid: &Grid) -> Result<ConditionReport> {
    let k = DerivedConstants::evaluate(params, grid)?;
    let a_min = k.a_min;
    let mu = params.mu;
    let weak = check_weak_competition(params);
    let ratio = (params.c1 / (params.a1 * params.b2 / params.a2))
        .max(params.c2 / (params.a2 * params.b1 / params.a1));
    let weak_competition = Condition {
        holds: weak.holds,
        applicable: true,
        lhs: ratio,
        rhs: Some(1.0),
        margin: Some(1.0 - ratio),
    };

    let persistence_general = Condition::strict(a_min, 2.0 * mu * k.h);
    let equal_chi = params.chi1 == params.chi2;
    let penalty = equal_chi_penalty(params.chi1);
    let persistence_equal_chi = if equal_chi {
        Condition::strict(a_min, 2.0 * mu * penalty)
    } else {
        Condition::not_applicable(a_min)
    };

    let (stabilization_general, stabilization_equal_chi) = match &k.coexistence {
        Some(co) => {
            let eq = co.equilibrium;
            let q = (params.chi1 * params.chi1 * eq.u_star + params.chi2 * params.chi2 * eq.v_star) / 4.0;
            let general = Condition::strict(a_min, 2.0 * mu * k.h + k.m0 * co.m1 * q.powf(k.p));
            let equal = if equal_chi {
                Condition::strict(a_min, 2.0 * mu * penalty + k.m_tilde_0 * co.m_tilde_1 * q)
            } else {
                Condition::not_applicable(a_min)
            };
            (general, equal)
        }
        None => (Condition::not_applicable(a_min), Condition::not_applicable(a_min)),
    };

    let lower = k.delta0 * params.nu.min(params.lambda);
    let general_mass = |factor: f64| {
        let gap = a_min - factor;
        (gap > 0.0).then(|| k.measure * (gap / k.m0).powf(1.0 / k.p))
    };
    let mass = general_mass(2.0 * mu * k.h);
    let mass_as_printed = general_mass(2.0 * k.h);
    let mass_equal_chi = (persistence_equal_chi.holds)
        .then(|| k.measure * (a_min - 2.0 * mu * penalty) / (k.b_max + k.c_max));
    let bounds = PredictedBounds {
        mass,
        w: mass.map(|m| lower * m),
        mass_as_printed,
        w_as_printed: mass_as_printed.map(|m| lower * m),
        mass_equal_chi,
        w_equal_chi: mass_equal_chi.map(|m| lower * m),
    };

    Ok(ConditionReport {
        weak_competition,
        weak_competition_margins: [weak.margin1, weak.margin2],
        persistence_general,
        persistence_equal_chi,
        stabilization_general,
        stabilization_equal_chi,
        bounds,
        constants: k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stable_set() -> ModelParams {
        ModelParams {
            chi1: 0.05,
            chi2: 0.05,
            a1: 10.0,
            a2: 10.0,
            b1: 1.0,
            b2: 1.0,
            c1: 0.1,
            c2: 0.1,
            mu: 1.0,
            nu: 1.0,
            lambda: 1.0,
        }
    }

    #[test]
    fn equal_chi_sample_satisfies_everything() {
        let grid = Grid::line(1.0, 64).unwrap();
        let r = check_theorems(&stable_set(), &grid).unwrap();
        assert!(r.weak_competition.holds);
        assert!(r.persistence_general.holds && r.persistence_equal_chi.holds);
        assert!(r.stabilization_general.holds && r.stabilization_equal_chi.holds);
        let co = r.constants.coexistence.unwrap();
        assert!((r.constants.delta0 - (-1.0f64).exp() / 2.0).abs() < 1e-12);
        assert!((co.eta0 - 0.9).abs() < 1e-12);
        assert_eq!(co.m1, 1.0);
        // m~1 = 2.5 / (delta0 * 1 * (200/11) * 0.9)
        let expected = 2.5 / ((-1.0f64).exp() / 2.0 * 200.0 / 11.0 * 0.9);
        assert!((co.m_tilde_1 - expected).abs() < 1e-10);
        let json = r.to_json();
        assert!(json.contains("\"stabilization_equal_chi\""));
        assert!(json.contains("\"delta0\""));
    }

    #[test]
    fn boundary_is_strict() {
        // chi = 1 gives h = 1, so a_min = 2 mu h exactly at a = 2
        let p = ModelParams { chi1: 1.0, chi2: 1.0, a1: 2.0, a2: 2.0, ..stable_set() };
        let r = check_theorems(&p, &Grid::line(1.0, 8).unwrap()).unwrap();
        assert!(!r.persistence_general.holds);
        assert_eq!(r.persistence_general.margin, Some(0.0));
        assert!(r.bounds.mass.is_none());
    }

    #[test]
    fn strong_competition_disables_stabilization_only() {
        let p = ModelParams { c1: 20.0, ..stable_set() };
        let r = check_theorems(&p, &Grid::line(1.0, 8).unwrap()).unwrap();
        assert!(!r.weak_competition.holds);
        assert!(r.persistence_general.holds);
        assert!(!r.stabilization_general.applicable);
        assert!(r.stabilization_general.rhs.is_none());
    }
}
