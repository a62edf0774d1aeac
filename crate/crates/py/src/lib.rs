//! Python bindings. Parameters and grids are small value classes; results
//! come back as plain dicts, lists and JSON strings.

use chemostab::oracle::ode_reduction as ode;
use chemostab::solver::StepperConfig;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "ModelParams", from_py_object)]
#[derive(Clone)]
pub struct PyModelParams {
    inner: chemostab::ModelParams,
}

#[pymethods]
impl PyModelParams {
    #[new]
    #[pyo3(signature = (*, chi1, chi2, a1, a2, b1, b2, c1, c2, mu, nu, lambda_))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        chi1: f64,
        chi2: f64,
        a1: f64,
        a2: f64,
        b1: f64,
        b2: f64,
        c1: f64,
        c2: f64,
        mu: f64,
        nu: f64,
        lambda_: f64,
    ) -> PyResult<Self> {
        let inner = chemostab::ModelParams { chi1, chi2, a1, a2, b1, b2, c1, c2, mu, nu, lambda: lambda_ };
        inner.validate_for_simulation().map_err(err)?;
        Ok(PyModelParams { inner })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("params serialize")
    }

    fn __repr__(&self) -> String {
        format!("ModelParams({})", self.to_json())
    }
}

#[pyclass(name = "Grid", from_py_object)]
#[derive(Clone)]
pub struct PyGrid {
    inner: chemostab::Grid,
}

#[pymethods]
impl PyGrid {
    #[new]
    fn new(lengths: Vec<f64>, cells: Vec<usize>) -> PyResult<Self> {
        Ok(PyGrid { inner: chemostab::Grid::new(&lengths, &cells).map_err(err)? })
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    #[getter]
    fn measure(&self) -> f64 {
        self.inner.measure()
    }

    #[getter]
    fn diameter(&self) -> f64 {
        self.inner.diameter()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Hypothesis report as a JSON string.
#[pyfunction]
fn check_theorems(params: &PyModelParams, grid: &PyGrid) -> PyResult<String> {
    Ok(chemostab::check_theorems(&params.inner, &grid.inner).map_err(err)?.to_json())
}

/// `(u*, v*, w*)`; raises ValueError under strong competition.
#[pyfunction]
fn compute_equilibrium(params: &PyModelParams) -> PyResult<(f64, f64, f64)> {
    let eq = chemostab::compute_equilibrium(&params.inner).map_err(err)?;
    Ok((eq.u_star, eq.v_star, eq.w_star))
}

#[pyfunction]
fn delta0(dimension: usize, diameter: f64) -> PyResult<f64> {
    chemostab::compute_delta0(dimension, diameter).map_err(err)
}

/// Runs the solver. `config` is a JSON object with the stepper fields
/// (`t_end`, `dt_max`, `seed`, `initial`, ...); omitted fields take their
/// defaults. Returns a dict with the classification, the final fields and
/// the diagnostic series by column.
#[pyfunction]
#[pyo3(signature = (params, grid, config=None))]
fn simulate<'py>(
    py: Python<'py>,
    params: &PyModelParams,
    grid: &PyGrid,
    config: Option<&str>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg: StepperConfig = match config {
        Some(text) => serde_json::from_str(text).map_err(err)?,
        None => StepperConfig::default(),
    };
    let (p, g) = (params.inner, grid.inner);
    let traj = py.detach(move || chemostab::run(&p, &g, &cfg)).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("classification", traj.classification.as_str())?;
    out.set_item("mode", serde_json::to_value(traj.mode).map_err(err)?.as_str().unwrap_or("").to_string())?;
    out.set_item("t_final", traj.final_state.t)?;
    out.set_item("steps", traj.final_state.step)?;
    out.set_item("u", traj.final_state.u.values().to_vec())?;
    out.set_item("v", traj.final_state.v.values().to_vec())?;
    out.set_item("w", traj.final_state.w.values().to_vec())?;
    let series = PyDict::new(py);
    let r = &traj.records;
    let col = |f: fn(&chemostab::diagnostics::DiagnosticsRecord) -> f64| r.iter().map(f).collect::<Vec<f64>>();
    series.set_item("t", col(|x| x.t))?;
    series.set_item("mass_u", col(|x| x.mass_u))?;
    series.set_item("mass_v", col(|x| x.mass_v))?;
    series.set_item("mass_uv", col(|x| x.mass_uv))?;
    series.set_item("mass_inv_p", col(|x| x.mass_inv_p))?;
    series.set_item("min_w", col(|x| x.min_w))?;
    series.set_item("energy", col(|x| x.energy))?;
    series.set_item("l2_u", col(|x| x.l2_u))?;
    series.set_item("l2_v", col(|x| x.l2_v))?;
    series.set_item("linf_u", col(|x| x.linf_u))?;
    series.set_item("linf_v", col(|x| x.linf_v))?;
    series.set_item("linf_w", col(|x| x.linf_w))?;
    out.set_item("series", series)?;
    Ok(out)
}

/// RK4 solution of the spatially homogeneous kinetics: `(t, u, v, w)` lists.
#[pyfunction]
#[allow(clippy::type_complexity)]
fn ode_reduction(
    params: &PyModelParams,
    u0: f64,
    v0: f64,
    t_end: f64,
    dt: f64,
) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    let s = ode(&params.inner, u0, v0, t_end, dt).map_err(err)?;
    Ok((s.t, s.u, s.v, s.w))
}

#[pymodule]
fn pychemostab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelParams>()?;
    m.add_class::<PyGrid>()?;
    m.add_function(wrap_pyfunction!(check_theorems, m)?)?;
    m.add_function(wrap_pyfunction!(compute_equilibrium, m)?)?;
    m.add_function(wrap_pyfunction!(delta0, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(ode_reduction, m)?)?;
    Ok(())
}
