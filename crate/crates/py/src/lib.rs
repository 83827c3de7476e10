//! Python bindings: scenarios, trajectories, channels, the BCD driver, sweeps and the CLI.

use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use uav_isac::channel::{los_probability, ChannelRealization};
use uav_isac::error::Error;
use uav_isac::metrics::{compute_crb, compute_rates, flight_power_terms};
use uav_isac::orchestrator::{self as orch, BaselineKind, BcdReport, BcdSettings, BcdStatus, SweepAxis, TrajectoryMode};
use uav_isac::scenario::{self as scen, validate_kinematics, ScenarioConfig, TrajectorySet};

create_exception!(uav_isac_py, InfeasibleError, PyRuntimeError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Infeasible(_) => InfeasibleError::new_err(e.to_string()),
        Error::Validation(_) | Error::Domain(_) | Error::Schema { .. } | Error::Json(_) => PyValueError::new_err(e.to_string()),
        Error::Io(_) => PyOSError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

pub fn parse_mode(mode: &str) -> PyResult<TrajectoryMode> {
    match mode {
        "frozen" | "bfwot" => Ok(TrajectoryMode::Frozen),
        "ddpg" | "proposed" => Ok(TrajectoryMode::Ddpg),
        other => Err(PyValueError::new_err(format!("unknown mode {other:?}; use \"frozen\" or \"ddpg\""))),
    }
}

pub fn parse_baseline(kind: &str) -> PyResult<BaselineKind> {
    match kind {
        "twobf" => Ok(BaselineKind::Twobf),
        "bfwot" => Ok(BaselineKind::Bfwot),
        "random-policy" | "random_policy" => Ok(BaselineKind::RandomPolicy),
        other => Err(PyValueError::new_err(format!("unknown baseline {other:?}"))),
    }
}

pub fn parse_axis(axis: &str) -> PyResult<SweepAxis> {
    match axis {
        "crb" => Ok(SweepAxis::Crb),
        "pmax" => Ok(SweepAxis::Pmax),
        other => Err(PyValueError::new_err(format!("unknown sweep axis {other:?}; use \"crb\" or \"pmax\""))),
    }
}

/// Scenario parameters.
#[pyclass(name = "Scenario", module = "uav_isac_py", from_py_object)]
#[derive(Clone)]
pub struct PyScenario {
    pub inner: ScenarioConfig,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn table_one() -> Self {
        PyScenario { inner: ScenarioConfig::table_one() }
    }

    #[staticmethod]
    fn desk() -> Self {
        PyScenario { inner: ScenarioConfig::desk() }
    }

    #[staticmethod]
    fn tiny() -> Self {
        PyScenario { inner: ScenarioConfig::tiny() }
    }

    #[staticmethod]
    fn random_desk(seed: u64) -> Self {
        PyScenario { inner: ScenarioConfig::random_desk(seed) }
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        scen::load_scenario(path).map(|inner| PyScenario { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        scen::parse_scenario(text).map(|inner| PyScenario { inner }).map_err(to_py)
    }

    fn to_json(&self) -> PyResult<String> {
        scen::scenario_to_json(&self.inner).map_err(to_py)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        scen::save_scenario(&self.inner, path).map_err(to_py)
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(to_py)
    }

    fn with_seed(&self, seed: u64) -> Self {
        PyScenario { inner: self.inner.clone().with_seed(seed) }
    }

    /// Copy with a new CRB threshold (rad²).
    fn with_crb_threshold(&self, value: f64) -> Self {
        PyScenario { inner: SweepAxis::Crb.apply(&self.inner, value) }
    }

    /// Copy with the same power budget (W) on every UAV.
    fn with_max_power(&self, value: f64) -> Self {
        PyScenario { inner: SweepAxis::Pmax.apply(&self.inner, value) }
    }

    #[getter]
    fn uav_count(&self) -> usize {
        self.inner.uav_count
    }

    #[getter]
    fn slot_count(&self) -> usize {
        self.inner.slot_count()
    }

    #[getter]
    fn slot_length(&self) -> f64 {
        self.inner.slot_length()
    }

    #[getter]
    fn antennas(&self) -> usize {
        self.inner.antennas()
    }

    #[getter]
    fn user_count(&self) -> usize {
        self.inner.user_count()
    }

    #[getter]
    fn target_count(&self) -> usize {
        self.inner.target_count()
    }

    #[getter]
    fn crb_threshold(&self) -> f64 {
        self.inner.crb_threshold
    }

    #[getter]
    fn max_power(&self) -> Vec<f64> {
        self.inner.max_power.clone()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.rng_seed
    }

    /// LoS probability at an elevation angle in degrees.
    fn los_probability(&self, elevation_deg: f64) -> PyResult<f64> {
        los_probability(elevation_deg, &self.inner.los).map_err(to_py)
    }

    /// Propulsion power (W) at the given horizontal and vertical speeds.
    fn flight_power(&self, horizontal_speed: f64, vertical_speed: f64) -> f64 {
        flight_power_terms(horizontal_speed, vertical_speed, &self.inner.flight).total()
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(uavs={}, users={}, targets={}, slots={}, antennas={})",
            self.inner.uav_count,
            self.inner.user_count(),
            self.inner.target_count(),
            self.inner.slot_count(),
            self.inner.antennas()
        )
    }
}

/// Waypoints of every UAV, `positions[u][n] = (x, y, h)`.
#[pyclass(name = "Trajectory", module = "uav_isac_py", from_py_object)]
#[derive(Clone)]
pub struct PyTrajectory {
    pub inner: TrajectorySet,
}

#[pymethods]
impl PyTrajectory {
    #[new]
    fn new(positions: Vec<Vec<[f64; 3]>>, slot_length: f64) -> Self {
        PyTrajectory { inner: TrajectorySet::new(positions, slot_length) }
    }

    #[staticmethod]
    fn straight_line(scenario: &PyScenario) -> Self {
        PyTrajectory { inner: TrajectorySet::straight_line(&scenario.inner) }
    }

    #[getter]
    fn positions(&self) -> Vec<Vec<[f64; 3]>> {
        self.inner.positions.clone()
    }

    /// Residuals of the step, endpoint, altitude and separation constraints.
    fn residuals<'py>(&self, py: Python<'py>, scenario: &PyScenario) -> PyResult<Bound<'py, PyDict>> {
        let r = validate_kinematics(&self.inner, &scenario.inner).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("step", r.step)?;
        d.set_item("endpoint", r.endpoint)?;
        d.set_item("altitude", r.altitude)?;
        d.set_item("separation", r.separation)?;
        Ok(d)
    }
}

/// Channel draw for a scenario and trajectory.
#[pyclass(name = "Channels", module = "uav_isac_py", from_py_object)]
#[derive(Clone)]
pub struct PyChannels {
    pub inner: ChannelRealization,
}

#[pymethods]
impl PyChannels {
    #[staticmethod]
    #[pyo3(signature = (scenario, trajectory, seed=None))]
    fn sample(scenario: &PyScenario, trajectory: &PyTrajectory, seed: Option<u64>) -> PyResult<Self> {
        let seed = seed.unwrap_or(scenario.inner.rng_seed);
        ChannelRealization::sample(&scenario.inner, &trajectory.inner, seed).map(|inner| PyChannels { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        uav_isac::channel::load_channels(path).map(|inner| PyChannels { inner }).map_err(to_py)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        uav_isac::channel::save_channels(&self.inner, path).map_err(to_py)
    }

    /// `|h|²` of every communication link, `[u][user][n]`.
    fn comm_gains(&self) -> Vec<Vec<Vec<f64>>> {
        self.inner.comm.iter().map(|per| per.iter().map(|slots| slots.iter().map(|h| h.norm_squared()).collect()).collect()).collect()
    }
}

/// Outcome of a BCD run or a baseline.
#[pyclass(name = "BcdResult", module = "uav_isac_py", skip_from_py_object)]
pub struct PyBcdResult {
    pub inner: BcdReport,
    pub cfg: ScenarioConfig,
}

#[pymethods]
impl PyBcdResult {
    #[getter]
    fn label(&self) -> String {
        self.inner.label.clone()
    }

    #[getter]
    fn status(&self) -> String {
        match &self.inner.status {
            BcdStatus::Converged => "converged".into(),
            BcdStatus::IterationLimit => "iteration_limit".into(),
            BcdStatus::Infeasible(m) => format!("infeasible: {m}"),
        }
    }

    #[getter]
    fn sum_rate(&self) -> f64 {
        self.inner.sum_rate
    }

    #[getter]
    fn min_crb(&self) -> f64 {
        self.inner.min_crb
    }

    #[getter]
    fn max_crb(&self) -> f64 {
        self.inner.max_crb
    }

    #[getter]
    fn energy_margins(&self) -> Vec<f64> {
        self.inner.energy_margins.clone()
    }

    #[getter]
    fn max_residual(&self) -> f64 {
        self.inner.residuals.max()
    }

    #[getter]
    fn policy_reward(&self) -> Option<f64> {
        self.inner.policy_reward
    }

    #[getter]
    fn trajectory(&self) -> PyTrajectory {
        PyTrajectory { inner: self.inner.trajectory.clone() }
    }

    #[getter]
    fn channels(&self) -> PyChannels {
        PyChannels { inner: self.inner.channels.clone() }
    }

    /// Sum rate after each outer iteration.
    fn convergence(&self) -> Vec<f64> {
        self.inner.records.iter().map(|r| r.sum_rate).collect()
    }

    fn records<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.inner
            .records
            .iter()
            .map(|r| {
                let d = PyDict::new(py);
                d.set_item("iteration", r.iteration)?;
                d.set_item("sum_rate", r.sum_rate)?;
                d.set_item("candidate_rate", r.candidate_rate)?;
                d.set_item("min_crb_margin", r.min_crb_margin)?;
                d.set_item("energy_margins", r.energy_margins.clone())?;
                d.set_item("alg1_iterations", r.alg1_iterations)?;
                d.set_item("alg2_iterations", r.alg2_iterations)?;
                d.set_item("rl_episodes", r.rl_episodes)?;
                d.set_item("trajectory_accepted", r.trajectory_accepted)?;
                Ok(d)
            })
            .collect()
    }

    /// Per-link rates in bits, `[u][user][n]`.
    fn link_rates(&self) -> PyResult<Vec<Vec<Vec<f64>>>> {
        let r = compute_rates(&self.inner.beams, &self.inner.channels, &self.cfg).map_err(to_py)?;
        Ok(r.links.iter().map(|per| per.iter().map(|slots| slots.iter().map(|l| l.rate).collect()).collect()).collect())
    }

    /// CRB values in rad², `[u][target][n]`.
    fn crb_values(&self) -> PyResult<Vec<Vec<Vec<f64>>>> {
        let r = compute_crb(&self.inner.beams, &self.inner.channels, &self.cfg).map_err(to_py)?;
        Ok(r.entries.iter().map(|per| per.iter().map(|slots| slots.iter().map(|e| e.value).collect()).collect()).collect())
    }

    /// Writes the results directory of a `run`.
    fn write(&self, dir: &str) -> PyResult<()> {
        uav_isac::report::write_results(std::path::Path::new(dir), &self.inner, &self.cfg).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("BcdResult(label={:?}, sum_rate={:.6}, iterations={})", self.inner.label, self.inner.sum_rate, self.inner.records.len())
    }
}

fn settings(cfg: &ScenarioConfig, mode: TrajectoryMode, episodes: Option<usize>, max_outer: Option<usize>, seed: Option<u64>) -> BcdSettings {
    let mut s = BcdSettings::new(cfg, mode);
    if let Some(e) = episodes {
        s.ddpg.episodes = e;
        s.finetune_episodes = s.finetune_episodes.min(e);
    }
    if let Some(m) = max_outer {
        s.max_outer = m;
    }
    if let Some(seed) = seed {
        s.channel_seed = seed;
        s.rl_seed = seed;
    }
    s
}

/// Runs block coordinate descent. `mode` is "frozen" (beams only) or "ddpg".
#[pyfunction]
#[pyo3(signature = (scenario, mode="ddpg", episodes=None, max_outer=None, seed=None))]
fn run_bcd(py: Python<'_>, scenario: &PyScenario, mode: &str, episodes: Option<usize>, max_outer: Option<usize>, seed: Option<u64>) -> PyResult<PyBcdResult> {
    let cfg = scenario.inner.clone();
    let s = settings(&cfg, parse_mode(mode)?, episodes, max_outer, seed);
    let report = py.detach(|| orch::run_bcd(&cfg, &s)).map_err(to_py)?;
    Ok(PyBcdResult { inner: report, cfg })
}

/// Runs a baseline: "twobf", "bfwot" or "random-policy".
#[pyfunction]
#[pyo3(signature = (scenario, kind, episodes=None, seed=None))]
fn run_baseline(py: Python<'_>, scenario: &PyScenario, kind: &str, episodes: Option<usize>, seed: Option<u64>) -> PyResult<PyBcdResult> {
    let cfg = scenario.inner.clone();
    let kind = parse_baseline(kind)?;
    let s = settings(&cfg, TrajectoryMode::Ddpg, episodes, None, seed);
    let report = py.detach(|| orch::run_baseline(kind, &cfg, &s)).map_err(to_py)?;
    Ok(PyBcdResult { inner: report, cfg })
}

/// One run per ascending value of "crb" or "pmax". Returns `(value, sum_rate, status)` rows.
#[pyfunction]
#[pyo3(signature = (scenario, axis, values, mode="frozen", episodes=None))]
fn sweep(py: Python<'_>, scenario: &PyScenario, axis: &str, values: Vec<f64>, mode: &str, episodes: Option<usize>) -> PyResult<Vec<(f64, f64, String)>> {
    let cfg = scenario.inner.clone();
    let axis = parse_axis(axis)?;
    let s = settings(&cfg, parse_mode(mode)?, episodes, None, None);
    let rows = py.detach(|| orch::sweep(&cfg, axis, &values, &s)).map_err(to_py)?;
    Ok(rows.into_iter().map(|r| (r.value, r.sum_rate, r.status)).collect())
}

/// `χ* = S / Θ`
#[pyfunction]
fn chi_star(signal: f64, theta: f64) -> PyResult<f64> {
    uav_isac::comm::chi_star(signal, theta).map_err(to_py)
}

/// `ψ* = √O / P`
#[pyfunction]
fn psi_star(o: f64, p: f64) -> PyResult<f64> {
    uav_isac::comm::psi_star(o, p).map_err(to_py)
}

/// `Ω* = Θ / ι`
#[pyfunction]
fn omega_star(theta: f64, iota: f64) -> PyResult<f64> {
    uav_isac::sensing::omega_star(theta, iota).map_err(to_py)
}

/// Runs the command-line front end with `args` (without the program name); returns the exit code.
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> i32 {
    py.detach(|| uav_isac::cli::run_cli(std::iter::once("uav-isac".to_string()).chain(args)))
}

#[pymodule]
fn uav_isac_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("InfeasibleError", m.py().get_type::<InfeasibleError>())?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyChannels>()?;
    m.add_class::<PyBcdResult>()?;
    m.add_function(wrap_pyfunction!(run_bcd, m)?)?;
    m.add_function(wrap_pyfunction!(run_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(chi_star, m)?)?;
    m.add_function(wrap_pyfunction!(psi_star, m)?)?;
    m.add_function(wrap_pyfunction!(omega_star, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
