//! Simulator and verification harness for a two-species chemotaxis system
//! with singular sensitivity `chi_i / w` and Lotka-Volterra competition:
//!
//! ```text
//! u_t = Δu - chi1 ∇·(u/w ∇w) + u (a1 - b1 u - c1 v)
//! v_t = Δv - chi2 ∇·(v/w ∇w) + v (a2 - b2 v - c2 u)
//! 0   = Δw - mu w + nu u + lambda v
//! ```
//!
//! with zero-flux boundaries on an interval or a rectangle.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod constants;
pub mod diagnostics;
pub mod elliptic;
pub mod error;
pub mod grid;
pub mod oracle;
pub mod params;
pub mod quadrature;
pub mod solver;
pub mod theorems;

pub use constants::{compute_constants, compute_delta0, DerivedConstants};
pub use error::{Error, Result};
pub use grid::{integrate, Field, Grid};
pub use params::{check_weak_competition, compute_equilibrium, Equilibrium, ModelParams};
pub use solver::{run, run_from, Classification, InitialCondition, State, StepperConfig, Trajectory};
pub use theorems::{check_theorems, ConditionReport};
