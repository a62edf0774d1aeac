//! Operator-split time stepping for the two densities with the signal
//! re-solved after every step.
//!
//! One step of size `dt` applies, to each species in turn,
//! upwind chemotactic transport in the old signal, implicit diffusion
//! `(I - dt Δ_h)^{-1}`, and the Patankar-type reaction quotient
//! `u (1 + dt a1) / (1 + dt (b1 u + c1 v))`, and then solves for the new `w`.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, DiagnosticsContext, DiagnosticsRecord, InequalityTracker};
use crate::elliptic::{solve_helmholtz_with, ScreenedLaplacian};
use crate::error::{Error, Result};
use crate::grid::{face_gradient, integrate, upwind_advect, FaceField, Field, Grid};
use crate::params::{compute_equilibrium, signal_level, Equilibrium, ModelParams};
use crate::theorems::check_theorems;

/// Floor used when no predicted w bound is available.
pub const ABSOLUTE_W_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub step: u64,
    pub u: Field,
    pub v: Field,
    pub w: Field,
}

impl State {
    pub fn grid(&self) -> &Grid {
        self.u.grid()
    }

    /// `||u - u*||_inf + ||v - v*||_inf`
    pub fn distance_inf(&self, reference: &Equilibrium) -> f64 {
        let d = |f: &Field, c: f64| f.values().iter().fold(0.0f64, |m, &x| m.max((x - c).abs()));
        d(&self.u, reference.u_star) + d(&self.v, reference.v_star)
    }
}

/// Which species an initial-data generator populates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Species {
    #[default]
    Both,
    UOnly,
    VOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    Constant {
        u: f64,
        v: f64,
    },
    /// Reference equilibrium times `1 + amplitude * U(-1, 1)`, cell by cell.
    PerturbedEquilibrium {
        amplitude: f64,
        #[serde(default)]
        species: Species,
    },
    /// Independent uniform draws in `[low, high]`.
    RandomPositive {
        low: f64,
        high: f64,
        #[serde(default)]
        species: Species,
    },
    /// Two field CSV files in the format of `Field::write_csv`.
    FromFile {
        u: PathBuf,
        v: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepperConfig {
    pub dt_max: f64,
    pub cfl_safety: f64,
    /// `None` selects [`default_w_floor`].
    pub w_floor: Option<f64>,
    pub t_end: f64,
    /// Record diagnostics every this many steps (the final state is always recorded).
    pub output_stride: u64,
    /// Keep a full state every this many steps; 0 disables.
    pub snapshot_stride: u64,
    pub tol_converge: f64,
    /// `None` selects `1e6 * max(a1/b1, a2/b2)`.
    pub blowup_cap: Option<f64>,
    pub stop_on_converge: bool,
    pub max_steps: u64,
    /// Replaces the reaction by clipped explicit Euler. Fault injection for
    /// the verification suite only.
    pub debug_clip: bool,
    pub initial: InitialCondition,
    pub seed: u64,
}

impl Default for StepperConfig {
    fn default() -> Self {
        StepperConfig {
            dt_max: 1e-2,
            cfl_safety: 0.4,
            w_floor: None,
            t_end: 10.0,
            output_stride: 1,
            snapshot_stride: 0,
            tol_converge: 1e-6,
            blowup_cap: None,
            stop_on_converge: true,
            max_steps: 50_000_000,
            debug_clip: false,
            initial: InitialCondition::PerturbedEquilibrium { amplitude: 0.2, species: Species::Both },
            seed: 0,
        }
    }
}

impl StepperConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, value: f64| {
            if value.is_finite() && value > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter { name, requirement: "finite and strictly positive", value })
            }
        };
        positive("dt_max", self.dt_max)?;
        positive("t_end", self.t_end)?;
        positive("tol_converge", self.tol_converge)?;
        if !(self.cfl_safety > 0.0 && self.cfl_safety < 1.0) {
            return Err(Error::InvalidParameter {
                name: "cfl_safety",
                requirement: "in (0, 1)",
                value: self.cfl_safety,
            });
        }
        if let Some(floor) = self.w_floor {
            positive("w_floor", floor)?;
        }
        if let Some(cap) = self.blowup_cap {
            positive("blowup_cap", cap)?;
        }
        if self.output_stride == 0 {
            return Err(Error::InvalidParameter { name: "output_stride", requirement: "at least 1", value: 0.0 });
        }
        Ok(())
    }
}

/// Which system the initial data select.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemMode {
    TwoSpecies,
    /// `v0 = 0`: `v` stays zero and `u` solves the single-species system.
    UOnly,
    /// `u0 = 0`
    VOnly,
}

/// Constant steady state the run is measured against.
pub fn reference_state(params: &ModelParams, mode: SystemMode) -> Option<Equilibrium> {
    match mode {
        SystemMode::TwoSpecies => compute_equilibrium(params).ok(),
        SystemMode::UOnly => {
            let u = params.a1 / params.b1;
            Some(Equilibrium { u_star: u, v_star: 0.0, w_star: signal_level(params, u, 0.0) })
        }
        SystemMode::VOnly => {
            let v = params.a2 / params.b2;
            Some(Equilibrium { u_star: 0.0, v_star: v, w_star: signal_level(params, 0.0, v) })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Converged,
    RunningOutOfTime,
    WFloorHit,
    BlowUpSuspected,
}

impl Classification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::Converged => "converged",
            Classification::RunningOutOfTime => "running_out_of_time",
            Classification::WFloorHit => "w_floor_hit",
            Classification::BlowUpSuspected => "blow_up_suspected",
        }
    }
}

/// `1e-3` times the predicted w lower bound when a persistence condition
/// holds, [`ABSOLUTE_W_FLOOR`] otherwise.
pub fn default_w_floor(params: &ModelParams, grid: &Grid) -> f64 {
    check_theorems(params, grid)
        .ok()
        .and_then(|r| r.best_w_bound())
        .map(|b| 1e-3 * b)
        .filter(|b| *b > 0.0)
        .unwrap_or(ABSOLUTE_W_FLOOR)
}

pub fn default_blowup_cap(params: &ModelParams) -> f64 {
    1e6 * (params.a1 / params.b1).max(params.a2 / params.b2)
}

/// `grad w / mean(w)` on faces, the chemotactic velocity per unit sensitivity.
pub fn signal_drift(w: &Field) -> FaceField {
    let mut drift = face_gradient(w);
    let grid = *w.grid();
    let (nx, ny) = (grid.nx(), grid.ny());
    let wv = w.values();
    for j in 0..ny {
        for i in 1..nx {
            let k = i + (nx + 1) * j;
            drift.x[k] /= 0.5 * (wv[grid.index(i - 1, j)] + wv[grid.index(i, j)]);
        }
    }
    if grid.dimension() == 2 {
        for j in 1..ny {
            for i in 0..nx {
                let k = i + nx * j;
                drift.y[k] /= 0.5 * (wv[grid.index(i, j - 1)] + wv[grid.index(i, j)]);
            }
        }
    }
    drift
}

/// Face velocity `chi grad w / mean(w)`; refuses signals below `w_floor`.
pub fn chemotactic_velocity(w: &Field, chi: f64, w_floor: f64, t: f64) -> Result<FaceField> {
    let min_w = w.min();
    if !(min_w >= w_floor) {
        return Err(Error::WFloorViolation { min_w, floor: w_floor, t });
    }
    let mut velocity = signal_drift(w);
    velocity.scale(chi);
    Ok(velocity)
}

/// Step size bounded by `dt_max`, by `cfl_safety / sum_d(max|vel_d| / h_d)`
/// over both species, and by `cfl_safety / max(a1, a2)`.
///
/// Upwind transport keeps densities non-negative for `cfl_safety <= 0.5`.
pub fn cfl_dt(state: &State, params: &ModelParams, config: &StepperConfig) -> f64 {
    let drift = signal_drift(&state.w);
    cfl_dt_from_drift(&drift, state.grid(), params, config)
}

fn cfl_dt_from_drift(drift: &FaceField, grid: &Grid, params: &ModelParams, config: &StepperConfig) -> f64 {
    let chi = params.chi1.abs().max(params.chi2.abs());
    let [mx, my] = drift.max_abs();
    let mut rate = chi * mx / grid.spacing(0);
    if grid.dimension() == 2 {
        rate += chi * my / grid.spacing(1);
    }
    let mut dt = config.dt_max;
    if rate > 0.0 {
        dt = dt.min(config.cfl_safety / rate);
    }
    dt.min(config.cfl_safety / params.a1.max(params.a2))
}

#[inline]
fn patankar(x: f64, other: f64, a: f64, b: f64, c: f64, dt: f64) -> f64 {
    x * (1.0 + dt * a) / (1.0 + dt * (b * x + c * other))
}

#[inline]
fn clipped_euler(x: f64, other: f64, a: f64, b: f64, c: f64, dt: f64) -> f64 {
    (x + dt * x * (a - b * x - c * other)).max(0.0)
}

/// Stateless stepping machinery for one parameter set and grid.
#[derive(Debug, Clone)]
pub struct Stepper {
    params: ModelParams,
    grid: Grid,
    w_floor: f64,
    debug_clip: bool,
    helmholtz: ScreenedLaplacian,
}

impl Stepper {
    pub fn new(params: ModelParams, grid: Grid, w_floor: f64, debug_clip: bool) -> Result<Self> {
        params.validate_for_simulation()?;
        if !(w_floor.is_finite() && w_floor > 0.0) {
            return Err(Error::InvalidParameter {
                name: "w_floor",
                requirement: "finite and strictly positive",
                value: w_floor,
            });
        }
        let helmholtz = ScreenedLaplacian::new(grid, params.mu, 1.0)?;
        Ok(Stepper { params, grid, w_floor, debug_clip, helmholtz })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn w_floor(&self) -> f64 {
        self.w_floor
    }

    /// Signal for given densities.
    pub fn solve_signal(&self, u: &Field, v: &Field) -> Result<Field> {
        solve_helmholtz_with(&self.helmholtz, u, v, &self.params)
    }

    pub fn state_from(&self, t: f64, step: u64, u: Field, v: Field) -> Result<State> {
        let w = self.solve_signal(&u, &v)?;
        Ok(State { t, step, u, v, w })
    }

    fn transport(&self, density: &Field, drift: &FaceField, chi: f64, dt: f64) -> Field {
        if chi == 0.0 {
            return density.clone();
        }
        let mut velocity = drift.clone();
        velocity.scale(chi);
        let tendency = upwind_advect(density, &velocity);
        density.zip_map(&tendency, |x, dx| x + dt * dx)
    }

    /// One full step of size `dt`.
    pub fn step(&self, state: &State, dt: f64) -> Result<State> {
        let p = &self.params;
        let min_w = state.w.min();
        if !(min_w >= self.w_floor) {
            return Err(Error::WFloorViolation { min_w, floor: self.w_floor, t: state.t });
        }
        let drift = signal_drift(&state.w);

        let u1 = self.transport(&state.u, &drift, p.chi1, dt);
        let v1 = self.transport(&state.v, &drift, p.chi2, dt);

        let heat = ScreenedLaplacian::new(self.grid, 1.0, dt)?;
        let u2 = heat.solve(&u1)?;
        let v2 = heat.solve(&v1)?;

        let react = if self.debug_clip { clipped_euler } else { patankar };
        let u3 = u2.zip_map(&v2, |u, v| react(u, v, p.a1, p.b1, p.c1, dt));
        let v3 = v2.zip_map(&u2, |v, u| react(v, u, p.a2, p.b2, p.c2, dt));

        let t = state.t + dt;
        for (species, f) in [('u', &u3), ('v', &v3)] {
            let min = f.min();
            if !(min >= 0.0) {
                return Err(Error::NegativeDensity { species, min, t });
            }
        }
        let w = self.solve_signal(&u3, &v3)?;
        Ok(State { t, step: state.step + 1, u: u3, v: v3, w })
    }
}

/// Output of [`run`].
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<DiagnosticsRecord>,
    pub snapshots: Vec<State>,
    pub final_state: State,
    pub classification: Classification,
    pub mode: SystemMode,
    pub reference: Option<Equilibrium>,
    pub context: DiagnosticsContext,
    pub w_floor: f64,
    pub blowup_cap: f64,
    /// Set when the run ended on a w-floor violation.
    pub w_floor_event: Option<Error>,
}

/// Generates `(u0, v0)` from the initial-condition spec.
pub fn initial_fields(params: &ModelParams, grid: &Grid, config: &StepperConfig) -> Result<(Field, Field)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = grid.len();
    let select = |species: Species, u: Vec<f64>, v: Vec<f64>| match species {
        Species::Both => (u, v),
        Species::UOnly => (u, vec![0.0; n]),
        Species::VOnly => (vec![0.0; n], v),
    };
    let (u, v) = match &config.initial {
        InitialCondition::Constant { u, v } => (vec![*u; n], vec![*v; n]),
        InitialCondition::PerturbedEquilibrium { amplitude, species } => {
            let mode = match species {
                Species::Both => SystemMode::TwoSpecies,
                Species::UOnly => SystemMode::UOnly,
                Species::VOnly => SystemMode::VOnly,
            };
            let eq = match reference_state(params, mode) {
                Some(eq) => eq,
                None => compute_equilibrium(params)?,
            };
            let mut draw = |c: f64| -> Vec<f64> {
                (0..n).map(|_| c * (1.0 + amplitude * rng.gen_range(-1.0..=1.0))).collect()
            };
            let u = draw(eq.u_star);
            let v = draw(eq.v_star);
            select(*species, u, v)
        }
        InitialCondition::RandomPositive { low, high, species } => {
            if !(*low > 0.0 && high >= low) {
                return Err(Error::InvalidInitialData(format!(
                    "random range must satisfy 0 < low <= high, got [{low}, {high}]"
                )));
            }
            let mut draw = || -> Vec<f64> { (0..n).map(|_| rng.gen_range(*low..=*high)).collect() };
            let u = draw();
            let v = draw();
            select(*species, u, v)
        }
        InitialCondition::FromFile { u, v } => {
            let read = |path: &PathBuf| -> Result<Field> {
                let file = std::fs::File::open(path)
                    .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
                Field::read_csv(*grid, std::io::BufReader::new(file))
            };
            (read(u)?.into_values(), read(v)?.into_values())
        }
    };
    Ok((Field::new(*grid, u)?, Field::new(*grid, v)?))
}

/// Checks non-negativity and positive total mass, and reports which system
/// the data select.
pub fn classify_initial(u: &Field, v: &Field) -> Result<SystemMode> {
    for (name, f) in [("u0", u), ("v0", v)] {
        if let Some(bad) = f.values().iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::InvalidInitialData(format!("{name} has a negative or non-finite value {bad}")));
        }
    }
    let (mu, mv) = (integrate(u), integrate(v));
    match (mu > 0.0, mv > 0.0) {
        (true, true) => Ok(SystemMode::TwoSpecies),
        (true, false) => Ok(SystemMode::UOnly),
        (false, true) => Ok(SystemMode::VOnly),
        (false, false) => Err(Error::InvalidInitialData("both initial masses vanish".into())),
    }
}

pub fn initial_state(stepper: &Stepper, params: &ModelParams, grid: &Grid, config: &StepperConfig) -> Result<State> {
    let (u, v) = initial_fields(params, grid, config)?;
    classify_initial(&u, &v)?;
    stepper.state_from(0.0, 0, u, v)
}

fn build_stepper(params: &ModelParams, grid: &Grid, config: &StepperConfig) -> Result<Stepper> {
    config.validate()?;
    let w_floor = config.w_floor.unwrap_or_else(|| default_w_floor(params, grid));
    Stepper::new(*params, *grid, w_floor, config.debug_clip)
}

pub fn run(params: &ModelParams, grid: &Grid, config: &StepperConfig) -> Result<Trajectory> {
    let stepper = build_stepper(params, grid, config)?;
    let start = initial_state(&stepper, params, grid, config)?;
    run_with(&stepper, config, start)
}

/// Continues from a given state, e.g. one read from a checkpoint.
pub fn run_from(params: &ModelParams, grid: &Grid, config: &StepperConfig, start: State) -> Result<Trajectory> {
    let stepper = build_stepper(params, grid, config)?;
    run_with(&stepper, config, start)
}

fn run_with(stepper: &Stepper, config: &StepperConfig, start: State) -> Result<Trajectory> {
    let params = *stepper.params();
    let grid = *start.grid();
    let mode = classify_initial(&start.u, &start.v)?;
    let reference = reference_state(&params, mode);
    let context = DiagnosticsContext::new(&params, &grid, reference)?;
    let blowup_cap = config.blowup_cap.unwrap_or_else(|| default_blowup_cap(&params));
    let mut tracker = InequalityTracker::new(&context);
    let mut records = Vec::new();
    let mut snapshots = Vec::new();
    let mut push = |state: &State, records: &mut Vec<DiagnosticsRecord>| {
        let mut rec = diagnostics::record(state, &context);
        tracker.observe(&mut rec);
        records.push(rec);
    };

    let start_step = start.step;
    let mut state = start;
    if state.step.is_multiple_of(config.output_stride) {
        push(&state, &mut records);
    }
    let mut classification = None;
    let mut w_floor_event = None;
    let mut last_recorded = state.step;
    let converged = |s: &State| reference.is_some_and(|r| s.distance_inf(&r) < config.tol_converge);

    while state.t < config.t_end && state.step - start_step < config.max_steps {
        let dt = cfl_dt(&state, &params, config).min(config.t_end - state.t);
        let next = match stepper.step(&state, dt) {
            Ok(next) => next,
            Err(e @ Error::WFloorViolation { .. }) => {
                classification = Some(Classification::WFloorHit);
                w_floor_event = Some(e);
                break;
            }
            Err(e) => return Err(e),
        };
        state = next;
        if state.step.is_multiple_of(config.output_stride) {
            push(&state, &mut records);
            last_recorded = state.step;
        }
        if config.snapshot_stride > 0 && state.step.is_multiple_of(config.snapshot_stride) {
            snapshots.push(state.clone());
        }
        let peak = state.u.zip_map(&state.v, |a, b| a + b).max();
        if !(peak <= blowup_cap) {
            classification = Some(Classification::BlowUpSuspected);
            break;
        }
        if config.stop_on_converge && converged(&state) {
            classification = Some(Classification::Converged);
            break;
        }
    }
    if last_recorded != state.step || records.is_empty() {
        push(&state, &mut records);
    }
    let classification = classification.unwrap_or(if converged(&state) {
        Classification::Converged
    } else {
        Classification::RunningOutOfTime
    });
    Ok(Trajectory {
        records,
        snapshots,
        final_state: state,
        classification,
        mode,
        reference,
        context,
        w_floor: stepper.w_floor(),
        blowup_cap,
        w_floor_event,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

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
            mu: 1.0,
            nu: 1.0,
            lambda: 1.0,
        }
    }

    #[test]
    fn two_cell_velocity() {
        let g = Grid::line(2.0, 2).unwrap();
        let w = Field::new(g, vec![1.0, 2.0]).unwrap();
        let vel = chemotactic_velocity(&w, 1.0, 1e-10, 0.0).unwrap();
        assert_eq!(vel.x, vec![0.0, 2.0 / 3.0, 0.0]);
        assert!(matches!(
            chemotactic_velocity(&w, 1.0, 1.5, 0.0),
            Err(Error::WFloorViolation { .. })
        ));
    }

    #[test]
    fn cfl_formula() {
        let g = Grid::line(1.0, 100).unwrap();
        let p = ModelParams { chi1: 1.0, chi2: 0.5, a1: 1e-3, a2: 1e-3, ..params() };
        let w = Field::from_fn(g, |x, _| (2.0 * x).exp());
        let u = Field::constant(g, 1.0);
        let state = State { t: 0.0, step: 0, u: u.clone(), v: u, w };
        let cfg = StepperConfig { dt_max: 1.0, cfl_safety: 0.5, ..Default::default() };
        let dt = cfl_dt(&state, &p, &cfg);
        let vmax = signal_drift(&state.w).max_abs()[0];
        assert!((vmax - 2.0).abs() < 1e-3);
        assert!((dt - 0.5 * 0.01 / vmax).abs() < 1e-15);
        let doubled = ModelParams { chi1: 2.0, ..p };
        assert!((cfl_dt(&state, &doubled, &cfg) - dt / 2.0).abs() < 1e-15);
    }

    #[test]
    fn logistic_fixed_point_and_rate() {
        let p = ModelParams { chi1: 0.0, chi2: 0.0, a1: 1.0, b1: 1.0, c1: 0.0, c2: 0.0, ..params() };
        let g = Grid::line(1.0, 4).unwrap();
        let cfg = StepperConfig {
            dt_max: 1e-3,
            t_end: std::f64::consts::LN_2,
            initial: InitialCondition::Constant { u: 0.5, v: 0.5 },
            stop_on_converge: false,
            ..Default::default()
        };
        let traj = run(&p, &g, &cfg).unwrap();
        let u = traj.final_state.u.values()[0];
        assert!((u - 2.0 / 3.0).abs() < 1e-3, "u = {u}");
        let mut prev = 0.0;
        for r in &traj.records {
            assert!(r.mass_u >= prev);
            prev = r.mass_u;
        }
    }

    #[test]
    fn equilibrium_start_converges_immediately() {
        let p = params();
        let g = Grid::line(1.0, 16).unwrap();
        let eq = compute_equilibrium(&p).unwrap();
        let cfg = StepperConfig {
            initial: InitialCondition::Constant { u: eq.u_star, v: eq.v_star },
            ..Default::default()
        };
        let traj = run(&p, &g, &cfg).unwrap();
        assert_eq!(traj.classification, Classification::Converged);
        assert_eq!(traj.final_state.step, 1);
    }

    #[test]
    fn clipped_reaction_loses_positivity_under_stiff_steps() {
        let p = params();
        let g = Grid::line(1.0, 4).unwrap();
        let stepper = Stepper::new(p, g, 1e-10, false).unwrap();
        let s = stepper
            .state_from(0.0, 0, Field::constant(g, 1e3), Field::constant(g, 1e3))
            .unwrap();
        let next = stepper.step(&s, 0.1).unwrap();
        assert!(next.u.min() > 0.0 && next.v.min() > 0.0);
        let faulty = Stepper::new(p, g, 1e-10, true).unwrap();
        match faulty.step(&s, 0.1) {
            Ok(next) => assert!(next.u.min() <= 0.0),
            Err(e) => assert!(matches!(e, Error::NonPositiveW { .. })),
        }
    }
}
