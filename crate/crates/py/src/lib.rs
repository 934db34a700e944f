//! Python module `pilotwave`: grids, wave fields, the propagator, guidance
//! velocities, equilibrium sampling and the built-in scenarios.

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use pilotwave::ensemble::{integrate_trajectory, IntegratorSettings, StaticVelocity};
use pilotwave::scenarios::{ScenarioParams, BUILTIN};
use pilotwave::wavefield::{gaussian, GridSpec, Potential, WaveField};

fn py_err(e: pilotwave::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json_to_py<'py>(py: Python<'py>, value: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Periodic box grid.
#[pyclass(name = "Grid", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGrid(GridSpec);

#[pymethods]
impl PyGrid {
    /// `axes` is a list of `(lower, upper, points)`; `masses` may hold one
    /// value per axis or a single shared value.
    #[new]
    #[pyo3(signature = (axes, hbar = 1.0, masses = None))]
    fn new(axes: Vec<(f64, f64, usize)>, hbar: f64, masses: Option<Vec<f64>>) -> PyResult<Self> {
        GridSpec::new(&axes, hbar, &masses.unwrap_or_default())
            .map(Self)
            .map_err(py_err)
    }

    #[getter]
    fn dims(&self) -> usize {
        self.0.dims()
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.0.shape()
    }

    #[getter]
    fn hbar(&self) -> f64 {
        self.0.hbar()
    }

    #[getter]
    fn masses(&self) -> Vec<f64> {
        self.0.masses().to_vec()
    }

    fn coords(&self, axis: usize) -> PyResult<Vec<f64>> {
        self.0.check_axis(axis).map_err(py_err)?;
        Ok(self.0.coords(axis))
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Grid(shape={:?}, hbar={}, masses={:?})",
            self.0.shape(),
            self.0.hbar(),
            self.0.masses()
        )
    }
}

/// Complex field on a grid, row-major with the last axis fastest.
#[pyclass(name = "WaveField", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyWaveField(WaveField);

#[pymethods]
impl PyWaveField {
    #[new]
    #[pyo3(signature = (grid, amplitudes, time = 0.0))]
    fn new(grid: &PyGrid, amplitudes: Vec<Complex64>, time: f64) -> PyResult<Self> {
        WaveField::from_amplitudes(&grid.0, amplitudes)
            .map(|f| Self(f.with_time(time)))
            .map_err(py_err)
    }

    /// Product of 1D Gaussians `exp(-(x-c)²/(4σ²) + ikx)`, one per axis, normalized.
    #[staticmethod]
    fn gaussian(
        grid: &PyGrid,
        centers: Vec<f64>,
        widths: Vec<f64>,
        wavenumbers: Vec<f64>,
    ) -> PyResult<Self> {
        let d = grid.0.dims();
        if centers.len() != d || widths.len() != d || wavenumbers.len() != d {
            return Err(PyValueError::new_err(format!(
                "need {d} centers, widths and wavenumbers"
            )));
        }
        let f = WaveField::from_fn(&grid.0, |q| {
            (0..d).fold(Complex64::new(1.0, 0.0), |acc, a| {
                acc * gaussian(q[a], centers[a], widths[a], wavenumbers[a])
            })
        })
        .and_then(|f| f.normalized())
        .map_err(py_err)?;
        Ok(Self(f))
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid(self.0.grid().clone())
    }

    #[getter]
    fn time(&self) -> f64 {
        self.0.time()
    }

    fn amplitudes(&self) -> Vec<Complex64> {
        self.0.amplitudes().to_vec()
    }

    fn density(&self) -> Vec<f64> {
        self.0.density().values().to_vec()
    }

    fn norm(&self) -> f64 {
        self.0.norm()
    }

    fn normalized(&self) -> PyResult<Self> {
        self.0.normalized().map(Self).map_err(py_err)
    }

    fn inner_product(&self, other: &PyWaveField) -> PyResult<Complex64> {
        self.0.inner_product(&other.0).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "WaveField(shape={:?}, time={}, norm={})",
            self.0.grid().shape(),
            self.0.time(),
            self.0.norm()
        )
    }
}

/// Split-operator propagator with a static potential.
#[pyclass(name = "Propagator", frozen)]
struct PyPropagator(pilotwave::propagator::PropagatorPlan);

#[pymethods]
impl PyPropagator {
    #[new]
    #[pyo3(signature = (grid, dt, potential = None))]
    fn new(grid: &PyGrid, dt: f64, potential: Option<Vec<f64>>) -> PyResult<Self> {
        let v = match potential {
            Some(values) => Potential::from_values(&grid.0, values).map_err(py_err)?,
            None => Potential::zero(&grid.0),
        };
        pilotwave::propagator::PropagatorPlan::new(dt, v)
            .map(Self)
            .map_err(py_err)
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.0.dt()
    }

    fn step(&self, field: &PyWaveField) -> PyResult<PyWaveField> {
        self.0.step(&field.0).map(PyWaveField).map_err(py_err)
    }

    /// Fields at `snapshot_times` (elapsed from the start), or the final field alone.
    #[pyo3(signature = (field, t_final, snapshot_times = Vec::new()))]
    fn evolve(
        &self,
        py: Python<'_>,
        field: &PyWaveField,
        t_final: f64,
        snapshot_times: Vec<f64>,
    ) -> PyResult<Vec<PyWaveField>> {
        let out = py
            .detach(|| self.0.evolve(&field.0, t_final, &snapshot_times))
            .map_err(py_err)?;
        Ok(out.into_iter().map(PyWaveField).collect())
    }

    fn reversed(&self) -> Self {
        Self(self.0.reversed())
    }
}

/// Guidance velocity on every grid point, one list per axis.
#[pyfunction]
fn velocity_field(field: &PyWaveField) -> PyResult<Vec<Vec<f64>>> {
    let v = pilotwave::guidance::velocity_field(&field.0).map_err(py_err)?;
    Ok((0..field.0.grid().dims())
        .map(|a| v.component(a).to_vec())
        .collect())
}

/// Guidance velocity at an arbitrary point. `exact=True` evaluates the full
/// trigonometric interpolant (axes of at most 64 points) instead of the
/// cubic interpolation of grid velocities.
#[pyfunction]
#[pyo3(signature = (field, point, exact = false))]
fn velocity_at(field: &PyWaveField, point: Vec<f64>, exact: bool) -> PyResult<Vec<f64>> {
    if exact {
        pilotwave::guidance::spectral_velocity_at(&field.0, &point).map_err(py_err)
    } else {
        pilotwave::guidance::velocity_at(&field.0, &point).map_err(py_err)
    }
}

/// `‖Hψ − Eψ‖ / ‖ψ‖`.
#[pyfunction]
#[pyo3(signature = (field, energy, potential = None))]
fn eigen_residual(field: &PyWaveField, energy: f64, potential: Option<Vec<f64>>) -> PyResult<f64> {
    let g = field.0.grid();
    let v = match potential {
        Some(values) => Potential::from_values(g, values).map_err(py_err)?,
        None => Potential::zero(g),
    };
    pilotwave::propagator::eigen_residual(&field.0, &v, energy).map_err(py_err)
}

/// `n` points drawn from |ψ|² with the given seed.
#[pyfunction]
fn sample_equilibrium(
    py: Python<'_>,
    field: &PyWaveField,
    n: usize,
    seed: u64,
) -> PyResult<Vec<Vec<f64>>> {
    let d = field.0.density();
    py.detach(|| pilotwave::ensemble::sample_equilibrium(&d, n, seed))
        .map_err(py_err)
}

/// Trajectory through the velocity field of a fixed wave field.
#[pyfunction]
fn integrate<'py>(
    py: Python<'py>,
    field: &PyWaveField,
    start: Vec<f64>,
    dt: f64,
    t_final: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let v = pilotwave::guidance::velocity_field(&field.0).map_err(py_err)?;
    let provider = StaticVelocity(v);
    let traj = py
        .detach(|| integrate_trajectory(&start, &provider, &IntegratorSettings::new(dt, t_final)))
        .map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("times", traj.times)?;
    out.set_item("positions", traj.positions)?;
    out.set_item("unwrapped", traj.unwrapped)?;
    out.set_item("node_encounters", traj.node_encounters)?;
    out.set_item("clamp_events", traj.clamp_events)?;
    Ok(out)
}

/// `1 − |⟨a, b⟩| / (‖a‖ ‖b‖)`.
#[pyfunction]
fn projective_distance(a: &PyWaveField, b: &PyWaveField) -> PyResult<f64> {
    pilotwave::subsystem::projective_distance(&a.0, &b.0).map_err(py_err)
}

/// The slice `x ↦ Ψ(x, y)` over the first `x_dims` axes, or `None` at a node.
#[pyfunction]
fn conditional_wavefunction(
    field: &PyWaveField,
    x_dims: usize,
    y: Vec<f64>,
) -> PyResult<Option<PyWaveField>> {
    let slice =
        pilotwave::subsystem::conditional_wavefunction(&field.0, x_dims, &y, Default::default())
            .map_err(py_err)?;
    Ok(slice.normalized.map(PyWaveField))
}

/// `(id, description)` for each built-in scenario.
#[pyfunction]
fn scenarios() -> Vec<(&'static str, &'static str)> {
    BUILTIN.to_vec()
}

/// Runs a built-in scenario and returns its checks, diagnostics, summary
/// and result rows as plain Python data.
#[pyfunction]
#[pyo3(signature = (scenario, seed, n = None, t_final = None, dt = None))]
fn run_scenario<'py>(
    py: Python<'py>,
    scenario: &str,
    seed: u64,
    n: Option<usize>,
    t_final: Option<f64>,
    dt: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let params = ScenarioParams {
        n,
        t_final,
        dt,
        ..ScenarioParams::with_seed(seed)
    };
    let out = py
        .detach(|| pilotwave::scenarios::run_scenario(scenario, &params))
        .map_err(py_err)?;
    let value = serde_json::json!({
        "scenario": out.scenario,
        "seed": out.seed,
        "passed": out.passed(),
        "failures": out.failures(),
        "checks": out.checks,
        "diagnostics": out.diagnostics,
        "details": out.details,
        "results": out.results,
        "trajectories": out.ensemble.as_ref().map_or(0, |e| e.len()),
    });
    json_to_py(py, &value)
}

#[pymodule]
#[pyo3(name = "pilotwave")]
fn pilotwave_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyWaveField>()?;
    m.add_class::<PyPropagator>()?;
    m.add_function(wrap_pyfunction!(velocity_field, m)?)?;
    m.add_function(wrap_pyfunction!(velocity_at, m)?)?;
    m.add_function(wrap_pyfunction!(eigen_residual, m)?)?;
    m.add_function(wrap_pyfunction!(sample_equilibrium, m)?)?;
    m.add_function(wrap_pyfunction!(integrate, m)?)?;
    m.add_function(wrap_pyfunction!(projective_distance, m)?)?;
    m.add_function(wrap_pyfunction!(conditional_wavefunction, m)?)?;
    m.add_function(wrap_pyfunction!(scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    Ok(())
}
