//! Python bindings: scenarios, models, policies, metrics, sweeps and the simulator.

use std::path::PathBuf;

use locrelay::analysis::{self, SearchOptions, SweepParam, SweepSpec, TauSearch};
use locrelay::montecarlo::{self, ReportMode, SimConfig, UpdateTimer};
use locrelay::{Error, MetricReport, PolicyKind, RelayPolicy};
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyArithmeticError::new_err(e.to_string())
    }
}

fn kind(name: &str) -> PyResult<PolicyKind> {
    PolicyKind::parse(name).ok_or_else(|| PyValueError::new_err(format!("unknown policy {name:?}")))
}

fn param(name: &str) -> PyResult<SweepParam> {
    SweepParam::parse(name).ok_or_else(|| PyValueError::new_err(format!("unknown parameter {name:?}; use sigma, speed or tau")))
}

#[pyclass(module = "locrelay", name = "Scenario", skip_from_py_object)]
#[derive(Clone)]
struct PyScenario {
    inner: locrelay::Scenario,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyScenario { inner: locrelay::load_scenario(path).map_err(to_py)? })
    }

    /// Parses scenario text. Relative map paths resolve against `base_dir`.
    #[staticmethod]
    #[pyo3(signature = (text, base_dir=None))]
    fn from_string(text: &str, base_dir: Option<PathBuf>) -> PyResult<Self> {
        let inner = locrelay::Scenario::parse_str(text, "<string>", base_dir.as_deref()).map_err(to_py)?;
        Ok(PyScenario { inner })
    }

    fn to_text(&self) -> String {
        self.inner.to_config_string()
    }

    /// Copy with `sigma`, `speed` or `tau` replaced.
    fn with_param(&self, name: &str, value: f64) -> PyResult<Self> {
        let inner = param(name)?.apply(&self.inner, value).map_err(to_py)?;
        Ok(PyScenario { inner })
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn n_points(&self) -> usize {
        self.inner.grid.n_points()
    }

    #[getter]
    fn relay_count(&self) -> usize {
        self.inner.relay_count()
    }

    #[getter]
    fn sigma_m(&self) -> f64 {
        self.inner.location_error.sigma_m
    }

    #[getter]
    fn speed_mps(&self) -> f64 {
        self.inner.mobility.speed_mps
    }

    #[getter]
    fn tau_hz(&self) -> f64 {
        self.inner.updates.tau_hz
    }

    /// Grid point coordinates in metres, in row-major order.
    fn coords(&self) -> Vec<(f64, f64)> {
        let g = &self.inner.grid;
        (0..g.n_points())
            .map(|m| {
                let c = g.coord(m);
                (c.x, c.y)
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        format!("Scenario(name={:?}, points={}, relays={})", self.inner.name, self.n_points(), self.relay_count())
    }
}

#[pyclass(module = "locrelay", name = "Report", get_all, skip_from_py_object)]
#[derive(Clone)]
struct PyReport {
    s_ideal: f64,
    s_loc: f64,
    s_dir: f64,
    s_rel: f64,
    s_lost: f64,
    s_lost_prime: f64,
    lost_fraction: f64,
    relay_fraction: f64,
}

impl From<MetricReport> for PyReport {
    fn from(r: MetricReport) -> Self {
        PyReport {
            s_ideal: r.s_ideal,
            s_loc: r.s_loc,
            s_dir: r.s_dir,
            s_rel: r.s_rel,
            s_lost: r.s_lost,
            s_lost_prime: r.s_lost_prime,
            lost_fraction: r.lost_fraction,
            relay_fraction: r.relay_fraction,
        }
    }
}

#[pymethods]
impl PyReport {
    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        for (k, v) in [
            ("s_ideal", self.s_ideal),
            ("s_loc", self.s_loc),
            ("s_dir", self.s_dir),
            ("s_rel", self.s_rel),
            ("s_lost", self.s_lost),
            ("s_lost_prime", self.s_lost_prime),
            ("lost_fraction", self.lost_fraction),
            ("relay_fraction", self.relay_fraction),
        ] {
            d.set_item(k, v)?;
        }
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Report(s_loc={:.4}, s_ideal={:.4}, lost_fraction={:.4})", self.s_loc, self.s_ideal, self.lost_fraction)
    }
}

/// A built model. Policies are given either as a name (`"standard"`,
/// `"optimized"`, `"file:PATH"`, ...) or as a list of per-point decisions
/// where 0 means direct and n >= 1 means relay n.
#[pyclass(module = "locrelay", name = "Model")]
struct PyModel {
    inner: locrelay::ScenarioModel,
}

impl PyModel {
    fn resolve(&self, policy: &Bound<'_, PyAny>) -> PyResult<RelayPolicy> {
        if let Ok(name) = policy.extract::<String>() {
            return self.inner.policy(&kind(&name)?).map_err(to_py);
        }
        let decisions: Vec<u16> = policy.extract()?;
        if decisions.len() != self.inner.n_points() {
            return Err(PyValueError::new_err(format!(
                "policy has {} entries, grid has {} points",
                decisions.len(),
                self.inner.n_points()
            )));
        }
        Ok(RelayPolicy::new(decisions))
    }
}

#[pymethods]
impl PyModel {
    #[new]
    fn new(py: Python<'_>, scenario: &PyScenario) -> PyResult<Self> {
        let scn = scenario.inner.clone();
        let inner = py.detach(move || locrelay::ScenarioModel::build(scn)).map_err(to_py)?;
        Ok(PyModel { inner })
    }

    #[getter]
    fn scenario(&self) -> PyScenario {
        PyScenario { inner: self.inner.scenario.clone() }
    }

    #[getter]
    fn n_points(&self) -> usize {
        self.inner.n_points()
    }

    #[getter]
    fn n_states(&self) -> usize {
        self.inner.n_states()
    }

    #[getter]
    fn p_mob(&self) -> Vec<f64> {
        self.inner.mobility.p_mob.clone()
    }

    #[getter]
    fn t_direct(&self) -> Vec<f64> {
        self.inner.tables.t_direct.clone()
    }

    /// One list per relay option.
    #[getter]
    fn t_relay(&self) -> Vec<Vec<f64>> {
        self.inner.tables.t_relay.clone()
    }

    /// Row-stochastic location-error matrix E[i][j] = Pr[report j | true i].
    fn error_matrix(&self) -> Vec<Vec<f64>> {
        let e = &self.inner.error;
        (0..e.n()).map(|i| e.row(i).to_vec()).collect()
    }

    /// Pr[true point j | AP believes point i]; `None` for views that never occur.
    fn conditional(&self) -> PyResult<Vec<Option<Vec<f64>>>> {
        let c = self.inner.conditional().map_err(to_py)?;
        Ok((0..self.inner.n_points()).map(|i| c.row(i)).collect())
    }

    fn policy(&self, policy: &Bound<'_, PyAny>) -> PyResult<Vec<u16>> {
        Ok(self.resolve(policy)?.decisions)
    }

    fn optimize(&self, py: Python<'_>) -> PyResult<Vec<u16>> {
        let m = &self.inner;
        let opt = py.detach(|| m.optimize()).map_err(to_py)?;
        Ok(opt.policy.decisions)
    }

    /// Metrics of a policy; defaults to the standard policy.
    #[pyo3(signature = (policy=None))]
    fn evaluate(&self, py: Python<'_>, policy: Option<&Bound<'_, PyAny>>) -> PyResult<PyReport> {
        let pol = match policy {
            Some(p) => self.resolve(p)?,
            None => self.inner.policy(&PolicyKind::Standard).map_err(to_py)?,
        };
        let m = &self.inner;
        let ev = py.detach(|| m.evaluate_policy(&pol)).map_err(to_py)?;
        Ok(ev.report.into())
    }

    /// Runs the discrete-event simulator and returns a dict with the mean,
    /// the 95% CI half-width and the pooled occupancy.
    #[pyo3(signature = (policy=None, replications=None, duration_s=None, warmup_s=None, seed=None, periodic=false, continuous_snap=false))]
    #[allow(clippy::too_many_arguments)]
    fn simulate<'py>(
        &self,
        py: Python<'py>,
        policy: Option<&Bound<'py, PyAny>>,
        replications: Option<usize>,
        duration_s: Option<f64>,
        warmup_s: Option<f64>,
        seed: Option<u64>,
        periodic: bool,
        continuous_snap: bool,
    ) -> PyResult<Bound<'py, PyDict>> {
        let pol = match policy {
            Some(p) => self.resolve(p)?,
            None => self.inner.policy(&PolicyKind::Standard).map_err(to_py)?,
        };
        let base = SimConfig::from_scenario(&self.inner);
        let cfg = SimConfig {
            replications: replications.unwrap_or(base.replications),
            duration_s: duration_s.unwrap_or(base.duration_s),
            warmup_s: warmup_s.unwrap_or(base.warmup_s),
            seed: seed.unwrap_or(base.seed),
            update_timer: if periodic { UpdateTimer::Periodic } else { UpdateTimer::Exponential },
            report_mode: if continuous_snap { ReportMode::ContinuousSnap } else { ReportMode::ErrorMatrix },
            ..base
        };
        let m = &self.inner;
        let sim = py.detach(|| montecarlo::simulate(m, &pol, &cfg)).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("mean_mbps", sim.mean)?;
        d.set_item("ci95_half_width_mbps", sim.half_width)?;
        d.set_item("samples", sim.samples())?;
        d.set_item("dropped_updates", sim.dropped())?;
        d.set_item("occupancy", sim.occupancy())?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Model(points={}, states={})", self.inner.n_points(), self.inner.n_states())
    }
}

/// Sweeps one parameter; returns the sweep CSV text.
#[pyfunction]
#[pyo3(signature = (scenario, param_name, values, policies=vec!["standard".to_string(), "optimized".to_string()]))]
fn sweep(py: Python<'_>, scenario: &PyScenario, param_name: &str, values: Vec<f64>, policies: Vec<String>) -> PyResult<String> {
    let spec = SweepSpec { param: param(param_name)?, values, policies: policies.iter().map(|p| kind(p)).collect::<PyResult<_>>()? };
    let base = &scenario.inner;
    let rows = py.detach(|| analysis::run_sweep(base, None, &spec)).map_err(to_py)?;
    Ok(analysis::sweep_csv(&rows))
}

/// Smallest update rate meeting a lost-fraction target at the given speed, or `None`.
#[pyfunction]
#[pyo3(signature = (scenario, target, speed_mps, tau_min=1e-3, tau_max=1e3))]
fn required_tau(py: Python<'_>, scenario: &PyScenario, target: f64, speed_mps: f64, tau_min: f64, tau_max: f64) -> PyResult<Option<f64>> {
    let opts = SearchOptions { tau_min, tau_max, ..SearchOptions::default() };
    let base = &scenario.inner;
    let r = py.detach(|| analysis::required_tau(base, None, target, speed_mps, &opts)).map_err(to_py)?;
    Ok(match r {
        TauSearch::Found(t) => Some(t),
        TauSearch::Unreachable => None,
    })
}

#[pymodule]
#[pyo3(name = "locrelay")]
fn locrelay_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(required_tau, m)?)?;
    Ok(())
}
