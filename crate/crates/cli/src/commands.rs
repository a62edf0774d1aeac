//! The five subcommands. Each returns its result as data; writing to stdout
//! and choosing the exit code is left to [`crate::execute`].

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chemostab::checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
use chemostab::diagnostics::{
    asymptotic_bounds_check, verify_inequalities, write_series_csv, DiagnosticsRecord, VerifyOptions,
};
use chemostab::oracle::{bessel_k0, compare_homogeneous, dense_elliptic_oracle, DENSE_MAX_CELLS};
use chemostab::solver::{SystemMode, Trajectory, ABSOLUTE_W_FLOOR};
use chemostab::{
    check_theorems, compute_delta0, compute_equilibrium, integrate, run, run_from, ConditionReport, Field, Grid,
    InitialCondition, ModelParams, State, StepperConfig,
};
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::svg::{line_chart, Series};
use crate::{CliError, Requirement};

/// Header comment lines carried by every artifact.
fn provenance(cfg: &RunConfig) -> Vec<String> {
    vec![format!("config_hash = {}", cfg.hash()), format!("seed = {}", cfg.seed())]
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------- check

pub struct CheckOutcome {
    pub report: ConditionReport,
    pub satisfied: bool,
    pub json: String,
}

pub fn requirement_holds(report: &ConditionReport, require: Requirement) -> bool {
    match require {
        Requirement::WeakCompetition => report.weak_competition.holds,
        Requirement::Persistence => report.persistence_holds(),
        Requirement::PersistenceGeneral => report.persistence_general.holds,
        Requirement::PersistenceEqualChi => report.persistence_equal_chi.holds,
        Requirement::Stabilization => report.stabilization_holds(),
        Requirement::StabilizationGeneral => report.stabilization_general.holds,
        Requirement::StabilizationEqualChi => report.stabilization_equal_chi.holds,
    }
}

pub fn cmd_check(cfg: &RunConfig, require: Requirement) -> Result<CheckOutcome, CliError> {
    let grid = cfg.grid()?;
    let report = check_theorems(&cfg.params, &grid)?;
    let satisfied = requirement_holds(&report, require);
    let value = json!({
        "config_hash": cfg.hash(),
        "seed": cfg.seed(),
        "require": require.as_str(),
        "satisfied": satisfied,
        "report": report,
    });
    let json = serde_json::to_string_pretty(&value).expect("report serializes");
    Ok(CheckOutcome { report, satisfied, json })
}

// ------------------------------------------------------------- simulate

pub struct SimulateOutcome {
    pub classification: String,
    pub t_final: f64,
    pub steps: u64,
    /// `||u - u*||_inf + ||v - v*||_inf` at the final time.
    pub final_distance: f64,
    pub summary: serde_json::Value,
    pub files: Vec<PathBuf>,
}

fn mode_note(mode: SystemMode) -> &'static str {
    match mode {
        SystemMode::TwoSpecies => "two-species system",
        SystemMode::UOnly => "v0 = 0: single-species system for u, v stays identically zero",
        SystemMode::VOnly => "u0 = 0: single-species system for v, u stays identically zero",
    }
}

/// The summary JSON of a finished run. Keys are documented in
/// `docs/summary.md`.
pub fn summary_json(cfg: &RunConfig, traj: &Trajectory, resumed_from: Option<u64>) -> serde_json::Value {
    let last = traj.records.last().expect("a run records its final state");
    let grid = *traj.final_state.grid();
    let conditions = check_theorems(&cfg.params, &grid).ok();
    let (inequalities, inequalities_error) =
        match verify_inequalities(&traj.records, &traj.context, VerifyOptions::default()) {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        };
    let converged = traj.classification == chemostab::Classification::Converged;
    let bounds = match (&conditions, traj.mode) {
        (Some(c), SystemMode::TwoSpecies) => Some(asymptotic_bounds_check(&traj.records, c, converged)),
        _ => None,
    };
    json!({
        "config_hash": cfg.hash(),
        "seed": cfg.seed(),
        "classification": traj.classification.as_str(),
        "mode": traj.mode,
        "mode_note": mode_note(traj.mode),
        "reference": traj.reference,
        "t_final": traj.final_state.t,
        "steps": traj.final_state.step,
        "records": traj.records.len(),
        "resumed_from_step": resumed_from,
        "final_distance": {
            "linf_u": last.linf_u,
            "linf_v": last.linf_v,
            "linf_sum": last.distance_inf(),
            "linf_w": last.linf_w,
            "l2_u": last.l2_u,
            "l2_v": last.l2_v,
            "l2_w": last.l2_w,
        },
        "final_energy": last.energy,
        "min_w_final": last.min_w,
        "epsilon_hat": inequalities.as_ref().and_then(|r| r.energy.epsilon_hat),
        "w_floor": traj.w_floor,
        "w_floor_event": traj.w_floor_event.as_ref().map(|e| e.to_string()),
        "blowup_cap": traj.blowup_cap,
        "conditions": conditions.as_ref().map(|c| json!({
            "weak_competition": c.weak_competition.holds,
            "persistence_general": c.persistence_general.holds,
            "persistence_equal_chi": c.persistence_equal_chi.holds,
            "stabilization_general": c.stabilization_general.holds,
            "stabilization_equal_chi": c.stabilization_equal_chi.holds,
        })),
        "inequalities": inequalities,
        "inequalities_error": inequalities_error,
        "asymptotic_bounds": bounds,
    })
}

fn checkpoint_bytes(cfg: &RunConfig, state: &State) -> Vec<u8> {
    let meta = [("config_hash".to_string(), cfg.hash()), ("seed".to_string(), cfg.seed().to_string())];
    let ck = Checkpoint { params: cfg.params, state: state.clone(), meta: meta.into_iter().collect() };
    let mut buf = Vec::new();
    write_checkpoint(&ck, &mut buf).expect("writing to memory");
    buf
}

pub fn series_bytes(cfg: &RunConfig, records: &[DiagnosticsRecord], resumed_from: Option<u64>) -> Vec<u8> {
    let mut comments = provenance(cfg);
    if let Some(step) = resumed_from {
        comments.push(format!("resumed_from_step = {step}"));
    }
    let mut buf = Vec::new();
    write_series_csv(records, &comments, &mut buf).expect("writing to memory");
    buf
}

/// Runs the configured simulation, or continues one from `resume`, and
/// writes the artifacts selected in `output`.
pub fn cmd_simulate(cfg: &RunConfig, resume: Option<&Path>) -> Result<SimulateOutcome, CliError> {
    let grid = cfg.grid()?;
    let (traj, resumed_from) = match resume {
        None => (run(&cfg.params, &grid, &cfg.stepper)?, None),
        Some(path) => {
            let file = fs::File::open(path)
                .map_err(|e| CliError::Input(format!("cannot open checkpoint {}: {e}", path.display())))?;
            let ck = read_checkpoint(BufReader::new(file))?;
            if ck.params != cfg.params {
                return Err(CliError::Input("checkpoint parameters differ from the configuration".into()));
            }
            if ck.state.grid() != &grid {
                return Err(CliError::Input("checkpoint grid differs from the configuration".into()));
            }
            if ck.meta.get("config_hash").is_some_and(|h| *h != cfg.hash()) {
                eprintln!("warning: checkpoint was written under a different configuration");
            }
            let step = ck.state.step;
            (run_from(&cfg.params, &grid, &cfg.stepper, ck.state)?, Some(step))
        }
    };

    let out = &cfg.output;
    fs::create_dir_all(&out.dir)?;
    let mut files = Vec::new();
    if out.series {
        let path = out.dir.join("series.csv");
        write_file(&path, &series_bytes(cfg, &traj.records, resumed_from))?;
        files.push(path);
    }
    if out.snapshots && !traj.snapshots.is_empty() {
        let dir = out.dir.join("snapshots");
        fs::create_dir_all(&dir)?;
        for s in &traj.snapshots {
            let path = dir.join(format!("step_{:09}.ckpt", s.step));
            write_file(&path, &checkpoint_bytes(cfg, s))?;
            files.push(path);
        }
    }
    if out.checkpoint {
        let path = out.dir.join("final.ckpt");
        write_file(&path, &checkpoint_bytes(cfg, &traj.final_state))?;
        files.push(path);
    }
    let summary = summary_json(cfg, &traj, resumed_from);
    if out.summary {
        let path = out.dir.join("summary.json");
        let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
        write_file(&path, text.as_bytes())?;
        files.push(path);
    }
    if out.plots {
        let series = SeriesTable::from_records(&traj.records, provenance(cfg));
        files.extend(write_plots(&series, &out.dir)?);
    }
    let last = traj.records.last().expect("final record");
    Ok(SimulateOutcome {
        classification: traj.classification.as_str().to_string(),
        t_final: traj.final_state.t,
        steps: traj.final_state.step,
        final_distance: last.distance_inf(),
        summary,
        files,
    })
}

// ----------------------------------------------------------------- plot

/// Columns of a series CSV plus its comment lines.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesTable {
    pub comments: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl SeriesTable {
    fn from_records(records: &[DiagnosticsRecord], comments: Vec<String>) -> Self {
        let mut buf = Vec::new();
        write_series_csv(records, &comments, &mut buf).expect("writing to memory");
        read_series_csv(buf.as_slice()).expect("own output parses")
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    fn xy(&self, name: &str) -> Vec<(f64, f64)> {
        match (self.column("t"), self.column(name)) {
            (Some(t), Some(y)) => t.into_iter().zip(y).collect(),
            _ => Vec::new(),
        }
    }
}

pub fn read_series_csv<R: std::io::BufRead>(input: R) -> Result<SeriesTable, CliError> {
    let mut comments = Vec::new();
    let mut columns: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            comments.push(c.trim().to_string());
            continue;
        }
        match &columns {
            None => columns = Some(line.split(',').map(|s| s.trim().to_string()).collect()),
            Some(cols) => {
                let row: Vec<f64> = line
                    .split(',')
                    .map(|s| match s.trim() {
                        "NaN" | "nan" | "" => Ok(f64::NAN),
                        v => v.parse::<f64>(),
                    })
                    .collect::<Result<_, _>>()
                    .map_err(|e| CliError::Input(format!("series line {}: {e}", n + 1)))?;
                if row.len() != cols.len() {
                    return Err(CliError::Input(format!(
                        "series line {} has {} fields, header has {}",
                        n + 1,
                        row.len(),
                        cols.len()
                    )));
                }
                rows.push(row);
            }
        }
    }
    let columns = columns.ok_or_else(|| CliError::Input("series file has no header".into()))?;
    Ok(SeriesTable { comments, columns, rows })
}

fn write_plots(table: &SeriesTable, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let header: String = table.comments.iter().map(|c| format!("<!-- {c} -->\n")).collect();
    let charts = [
        ("energy.svg", line_chart("Energy", "t", "E(t)", &[Series { name: "E", points: table.xy("energy") }], true)),
        (
            "distance.svg",
            line_chart(
                "Distance to the constant state",
                "t",
                "distance",
                &[
                    Series { name: "sup |u-u*|", points: table.xy("linf_u") },
                    Series { name: "sup |v-v*|", points: table.xy("linf_v") },
                    Series { name: "sup |w-w*|", points: table.xy("linf_w") },
                ],
                true,
            ),
        ),
        ("min_w.svg", line_chart("Minimum of w", "t", "min w", &[Series { name: "min w", points: table.xy("min_w") }], false)),
    ];
    let mut files = Vec::new();
    for (name, svg) in charts {
        let path = dir.join(name);
        write_file(&path, format!("{header}{svg}").as_bytes())?;
        files.push(path);
    }
    Ok(files)
}

/// Draws the charts for an existing series CSV into `out`.
pub fn cmd_plot(input: &Path, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let file = fs::File::open(input).map_err(|e| CliError::Input(format!("cannot open {}: {e}", input.display())))?;
    let table = read_series_csv(BufReader::new(file))?;
    for col in ["t", "energy", "linf_u", "linf_v", "min_w"] {
        if !table.columns.iter().any(|c| c == col) {
            return Err(CliError::Input(format!("series file lacks column `{col}`")));
        }
    }
    fs::create_dir_all(out)?;
    write_plots(&table, out)
}

// ---------------------------------------------------------------- sweep

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub i: usize,
    pub j: usize,
    pub chi1: f64,
    pub chi2: f64,
    pub equal_chi: bool,
    pub weak_competition: bool,
    pub persistence_general: bool,
    pub persistence_equal_chi: bool,
    pub stabilization_general: bool,
    pub stabilization_equal_chi: bool,
    pub classification: String,
    pub final_distance: f64,
    pub t_final: f64,
    pub error: String,
}

pub const SWEEP_MAX_K: usize = 64;
const SWEEP_COLUMNS: &str = "i,j,chi1,chi2,equal_chi,weak_competition,persistence_general,persistence_equal_chi,stabilization_general,stabilization_equal_chi,classification,final_distance,t_final,error";

fn linspace(range: [f64; 2], k: usize, idx: usize) -> f64 {
    if k == 1 {
        range[0]
    } else {
        range[0] + (range[1] - range[0]) * idx as f64 / (k - 1) as f64
    }
}

fn sweep_cell(cfg: &RunConfig, grid: &Grid, i: usize, j: usize) -> SweepCell {
    let k = cfg.sweep.k;
    let chi1 = linspace(cfg.sweep.chi1, k, i);
    // the diagonal reuses chi1 exactly so the equal-chi branch applies
    let chi2 = if i == j && cfg.sweep.chi1 == cfg.sweep.chi2 { chi1 } else { linspace(cfg.sweep.chi2, k, j) };
    let params = ModelParams { chi1, chi2, ..cfg.params };
    let mut cell = SweepCell {
        i,
        j,
        chi1,
        chi2,
        equal_chi: chi1 == chi2,
        weak_competition: false,
        persistence_general: false,
        persistence_equal_chi: false,
        stabilization_general: false,
        stabilization_equal_chi: false,
        classification: String::new(),
        final_distance: f64::NAN,
        t_final: f64::NAN,
        error: String::new(),
    };
    match check_theorems(&params, grid) {
        Ok(r) => {
            cell.weak_competition = r.weak_competition.holds;
            cell.persistence_general = r.persistence_general.holds;
            cell.persistence_equal_chi = r.persistence_equal_chi.holds;
            cell.stabilization_general = r.stabilization_general.holds;
            cell.stabilization_equal_chi = r.stabilization_equal_chi.holds;
        }
        Err(e) => cell.error = e.to_string(),
    }
    match run(&params, grid, &cfg.stepper) {
        Ok(traj) => {
            let last = traj.records.last().expect("final record");
            cell.classification = traj.classification.as_str().to_string();
            cell.final_distance = last.distance_inf();
            cell.t_final = traj.final_state.t;
        }
        Err(e) => {
            cell.classification = "error".into();
            if cell.error.is_empty() {
                cell.error = e.to_string();
            }
        }
    }
    cell
}

fn sweep_row(c: &SweepCell) -> String {
    use chemostab::grid::fmt_f64;
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},\"{}\"",
        c.i,
        c.j,
        fmt_f64(c.chi1),
        fmt_f64(c.chi2),
        c.equal_chi,
        c.weak_competition,
        c.persistence_general,
        c.persistence_equal_chi,
        c.stabilization_general,
        c.stabilization_equal_chi,
        c.classification,
        fmt_f64(c.final_distance),
        fmt_f64(c.t_final),
        c.error.replace('"', "'")
    )
}

/// Runs every `(chi1, chi2)` cell on its own worker. Each cell writes its
/// row to `cells/`; the rows are then merged in index order into
/// `sweep.csv` and the per-cell files removed.
pub fn cmd_sweep(cfg: &RunConfig, threads: usize) -> Result<Vec<SweepCell>, CliError> {
    let k = cfg.sweep.k;
    if k == 0 || k > SWEEP_MAX_K {
        return Err(CliError::Input(format!("sweep.k must be in 1..={SWEEP_MAX_K}, got {k}")));
    }
    for (name, r) in [("sweep.chi1", cfg.sweep.chi1), ("sweep.chi2", cfg.sweep.chi2)] {
        if !(r[0] >= 0.0 && r[1] >= r[0] && r[1].is_finite()) {
            return Err(CliError::Input(format!("{name} must be [low, high] with 0 <= low <= high")));
        }
    }
    let grid = cfg.grid()?;
    let cell_dir = cfg.output.dir.join("cells");
    fs::create_dir_all(&cell_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    let indices: Vec<(usize, usize)> = (0..k).flat_map(|j| (0..k).map(move |i| (i, j))).collect();
    let cells: Vec<Result<SweepCell, CliError>> = pool.install(|| {
        indices
            .par_iter()
            .map(|&(i, j)| {
                let cell = sweep_cell(cfg, &grid, i, j);
                write_file(&cell_dir.join(format!("cell_{i:02}_{j:02}.csv")), format!("{}\n", sweep_row(&cell)).as_bytes())?;
                Ok(cell)
            })
            .collect()
    });
    let cells: Vec<SweepCell> = cells.into_iter().collect::<Result<_, _>>()?;

    let mut merged = BufWriter::new(fs::File::create(cfg.output.dir.join("sweep.csv"))?);
    for c in provenance(cfg) {
        writeln!(merged, "# {c}")?;
    }
    writeln!(merged, "{SWEEP_COLUMNS}")?;
    for &(i, j) in &indices {
        let path = cell_dir.join(format!("cell_{i:02}_{j:02}.csv"));
        merged.write_all(&fs::read(&path)?)?;
    }
    merged.flush()?;
    fs::remove_dir_all(&cell_dir)?;
    Ok(cells)
}

// --------------------------------------------------------------- verify

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyCheck {
    pub name: String,
    /// `pass`, `fail` or `skip`.
    pub status: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub config_hash: String,
    pub seed: u64,
    pub inject_clipping: bool,
    pub checks: Vec<VerifyCheck>,
    pub all_passed: bool,
}

impl VerifyReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn check(&self, name: &str) -> Option<&VerifyCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn check(name: &str, passed: bool, detail: String) -> VerifyCheck {
    VerifyCheck { name: name.into(), status: if passed { "pass" } else { "fail" }.into(), detail }
}

fn skip(name: &str, detail: &str) -> VerifyCheck {
    VerifyCheck { name: name.into(), status: "skip".into(), detail: detail.into() }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

pub const DELTA0_TOL: f64 = 1e-8;

/// Closed form of the heat-kernel constant: `e^{-d}/2` on an interval,
/// `K0(d)/(2 pi)` in the plane.
fn delta0_reference(dim: usize, d: f64) -> f64 {
    if dim == 1 {
        (-d).exp() / 2.0
    } else {
        bessel_k0(d) / (2.0 * std::f64::consts::PI)
    }
}

fn verify_delta0(grid: &Grid) -> Vec<VerifyCheck> {
    let mut out = Vec::new();
    for (dim, ds) in [(1usize, &[0.25, 0.5, 1.0, 2.0, 4.0][..]), (2, &[0.5, 1.0, 2.0][..])] {
        let mut worst: f64 = 0.0;
        let mut error = None;
        for &d in ds {
            match compute_delta0(dim, d) {
                Ok(q) => worst = worst.max(rel_err(q, delta0_reference(dim, d))),
                Err(e) => error = Some(e.to_string()),
            }
        }
        let name = format!("delta0_closed_form_{dim}d");
        out.push(match error {
            Some(e) => check(&name, false, e),
            None => check(&name, worst <= DELTA0_TOL, format!("max relative error {worst:.2e} (tol {DELTA0_TOL:.0e})")),
        });
    }
    let (dim, d) = (grid.dimension(), grid.diameter());
    out.push(match compute_delta0(dim, d) {
        Ok(q) => {
            let e = rel_err(q, delta0_reference(dim, d));
            check("delta0_config_domain", e <= DELTA0_TOL, format!("delta0 = {q:.10e}, relative error {e:.2e}"))
        }
        Err(e) => check("delta0_config_domain", false, e.to_string()),
    });
    out
}

/// A grid with the extents of `grid` and at most [`DENSE_MAX_CELLS`] cells.
fn coarse_grid(grid: &Grid) -> Grid {
    if grid.len() <= DENSE_MAX_CELLS {
        return *grid;
    }
    let l = grid.lengths();
    if grid.dimension() == 1 {
        Grid::line(l[0], DENSE_MAX_CELLS).expect("valid grid")
    } else {
        Grid::rect(l[0], l[1], 8, 8).expect("valid grid")
    }
}

fn random_field(grid: Grid, rng: &mut rand_chacha::ChaCha8Rng) -> Field {
    Field::new(grid, (0..grid.len()).map(|_| rng.gen_range(0.1..5.0)).collect()).expect("sizes match")
}

fn verify_elliptic(cfg: &RunConfig, grid: &Grid) -> Vec<VerifyCheck> {
    let p = &cfg.params;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed());
    let coarse = coarse_grid(grid);
    let (u, v) = (random_field(coarse, &mut rng), random_field(coarse, &mut rng));
    let dense = match (chemostab::elliptic::solve_helmholtz(&u, &v, p), dense_elliptic_oracle(&u, &v, p)) {
        (Ok(a), Ok(b)) => {
            let worst = a.values().iter().zip(b.values()).map(|(x, y)| rel_err(*x, *y)).fold(0.0, f64::max);
            check("elliptic_dense_oracle", worst <= 1e-10, format!("{} cells, max relative error {worst:.2e}", coarse.len()))
        }
        (Err(e), _) | (_, Err(e)) => check("elliptic_dense_oracle", false, e.to_string()),
    };

    let mut worst: f64 = 0.0;
    let mut error = None;
    for _ in 0..10 {
        let (u, v) = (random_field(*grid, &mut rng), random_field(*grid, &mut rng));
        match chemostab::elliptic::solve_helmholtz(&u, &v, p) {
            Ok(w) => {
                let rhs = p.nu * integrate(&u) + p.lambda * integrate(&v);
                worst = worst.max(rel_err(p.mu * integrate(&w), rhs));
            }
            Err(e) => error = Some(e.to_string()),
        }
    }
    // direct solves in 1D; the iterative 2D solve stops at a relative residual of 1e-12
    let tol = if grid.dimension() == 1 { 1e-12 } else { 1e-9 };
    let mass = match error {
        Some(e) => check("elliptic_mass_identity", false, e),
        None => check("elliptic_mass_identity", worst <= tol, format!("max relative defect {worst:.2e} (tol {tol:.0e})")),
    };
    vec![dense, mass]
}

fn verify_fixed_point(cfg: &RunConfig, grid: &Grid) -> VerifyCheck {
    let Ok(eq) = compute_equilibrium(&cfg.params) else {
        return skip("equilibrium_fixed_point", "no coexistence equilibrium");
    };
    let stepper = StepperConfig {
        initial: InitialCondition::Constant { u: eq.u_star, v: eq.v_star },
        stop_on_converge: false,
        max_steps: 100,
        t_end: f64::MAX,
        w_floor: Some(ABSOLUTE_W_FLOOR),
        debug_clip: false,
        ..cfg.stepper.clone()
    };
    match run(&cfg.params, grid, &stepper) {
        Ok(t) => {
            let d = t.final_state.distance_inf(&eq);
            check("equilibrium_fixed_point", d <= 1e-10, format!("distance after 100 steps {d:.2e}"))
        }
        Err(e) => check("equilibrium_fixed_point", false, e.to_string()),
    }
}

/// PDE on homogeneous data against the RK4 kinetics, at two step sizes.
fn verify_ode(cfg: &RunConfig, grid: &Grid) -> VerifyCheck {
    let p = &cfg.params;
    let (u0, v0) = match compute_equilibrium(p) {
        Ok(eq) => (1.5 * eq.u_star, 0.5 * eq.v_star),
        Err(_) => (0.5 * p.a1 / p.b1, 0.5 * p.a2 / p.b2),
    };
    let coarse = if grid.dimension() == 1 {
        Grid::line(grid.lengths()[0], 4)
    } else {
        Grid::rect(grid.lengths()[0], grid.lengths()[1], 4, 4)
    }
    .expect("valid grid");
    let dt = 1e-3 * (3.0 / p.a_max()).min(1.0);
    let t_end = 40.0 / p.a_min();
    let scale = 1.0f64.max(u0 + v0);
    let cmp = |dt: f64| {
        let stepper = StepperConfig {
            dt_max: dt,
            t_end,
            initial: InitialCondition::Constant { u: u0, v: v0 },
            w_floor: Some(ABSOLUTE_W_FLOOR),
            ..cfg.stepper.clone()
        };
        compare_homogeneous(p, &coarse, &stepper)
    };
    match (cmp(dt), cmp(dt / 2.0)) {
        (Ok(a), Ok(b)) => {
            let order = (a.max_deviation / b.max_deviation).log2();
            let small = a.max_deviation <= 1e-3 * scale;
            let ordered = a.max_deviation < 1e-12 || order >= 0.9;
            check(
                "ode_oracle",
                small && ordered,
                format!("dt = {dt:.1e}: deviation {:.3e}, dt/2: {:.3e}, order {order:.3}", a.max_deviation, b.max_deviation),
            )
        }
        (Err(e), _) | (_, Err(e)) => check("ode_oracle", false, e.to_string()),
    }
}

/// One large reaction step from a crowded homogeneous state. The positive
/// scheme stays positive; clipped explicit Euler drives the densities to
/// zero and the signal solve then fails.
fn verify_stiff_positivity(cfg: &RunConfig, grid: &Grid, clip: bool) -> VerifyCheck {
    let p = &cfg.params;
    let stepper = match chemostab::solver::Stepper::new(*p, *grid, ABSOLUTE_W_FLOOR, clip) {
        Ok(s) => s,
        Err(e) => return check("stiff_positivity", false, e.to_string()),
    };
    let u = Field::constant(*grid, 4.0 * p.a1 / p.b1);
    let v = Field::constant(*grid, 4.0 * p.a2 / p.b2);
    let dt = 1.0 / p.a_min();
    let result = stepper.state_from(0.0, 0, u, v).and_then(|s| stepper.step(&s, dt));
    match result {
        Ok(s) => {
            let m = s.u.min().min(s.v.min()).min(s.w.min());
            check("stiff_positivity", m > 0.0, format!("min over u, v, w after one step of dt = {dt:.3e}: {m:.3e}"))
        }
        Err(e) => check("stiff_positivity", false, e.to_string()),
    }
}

fn verify_run(cfg: &RunConfig, grid: &Grid, clip: bool) -> Vec<VerifyCheck> {
    let stepper = StepperConfig { debug_clip: clip || cfg.stepper.debug_clip, ..cfg.stepper.clone() };
    let traj = match run(&cfg.params, grid, &stepper) {
        Ok(t) => t,
        Err(e) => {
            return vec![
                check("run_positivity", false, e.to_string()),
                check("inequality_suite", false, "run failed".into()),
            ]
        }
    };
    let s = &traj.final_state;
    let positive = match traj.mode {
        SystemMode::TwoSpecies => s.u.min() > 0.0 && s.v.min() > 0.0,
        SystemMode::UOnly => s.u.min() > 0.0,
        SystemMode::VOnly => s.v.min() > 0.0,
    } && s.w.min() > 0.0;
    let mut out = vec![check(
        "run_positivity",
        positive,
        format!("{} at t = {}, min u = {:.3e}, min v = {:.3e}", traj.classification.as_str(), s.t, s.u.min(), s.v.min()),
    )];
    out.push(match verify_inequalities(&traj.records, &traj.context, VerifyOptions::default()) {
        Ok(r) => {
            let failed: Vec<&str> = [
                ("mass_bound_u", r.mass_bound_u.passed),
                ("mass_bound_v", r.mass_bound_v.passed),
                ("w_lower_bound", r.w_lower_bound.passed),
                ("holder", r.holder.passed),
                ("signal_l2", r.signal_l2.passed),
                ("energy", r.energy.passed),
            ]
            .iter()
            .filter(|(_, ok)| !ok)
            .map(|(n, _)| *n)
            .collect();
            let detail = if failed.is_empty() {
                format!("{} records, epsilon_hat = {:?}", traj.records.len(), r.energy.epsilon_hat)
            } else {
                format!("failed: {}", failed.join(", "))
            };
            check("inequality_suite", r.all_passed, detail)
        }
        Err(e) => check("inequality_suite", false, e.to_string()),
    });
    out
}

fn verify_determinism(cfg: &RunConfig, grid: &Grid) -> VerifyCheck {
    let stepper = StepperConfig { max_steps: cfg.stepper.max_steps.min(200), ..cfg.stepper.clone() };
    match (run(&cfg.params, grid, &stepper), run(&cfg.params, grid, &stepper)) {
        (Ok(a), Ok(b)) => {
            let same = series_bytes(cfg, &a.records, None) == series_bytes(cfg, &b.records, None);
            check("determinism", same, format!("{} records compared byte for byte", a.records.len()))
        }
        (Err(e), _) | (_, Err(e)) => check("determinism", false, e.to_string()),
    }
}

/// The full oracle and inequality suite on the configured parameters and
/// grid. `inject_clipping` swaps in the clipped reaction step.
pub fn cmd_verify(cfg: &RunConfig, inject_clipping: bool) -> Result<VerifyReport, CliError> {
    let grid = cfg.grid()?;
    cfg.params.validate_for_simulation()?;
    cfg.stepper.validate()?;
    let clip = inject_clipping || cfg.stepper.debug_clip;
    let mut checks = verify_delta0(&grid);
    checks.extend(verify_elliptic(cfg, &grid));
    checks.push(verify_fixed_point(cfg, &grid));
    checks.push(verify_ode(cfg, &grid));
    checks.push(verify_stiff_positivity(cfg, &grid, clip));
    checks.extend(verify_run(cfg, &grid, clip));
    checks.push(verify_determinism(cfg, &grid));
    let all_passed = checks.iter().all(|c| c.status != "fail");
    Ok(VerifyReport { config_hash: cfg.hash(), seed: cfg.seed(), inject_clipping: clip, checks, all_passed })
}
