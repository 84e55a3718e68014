//! Python bindings. Times are seconds; structured results come back as plain dicts.

use hetero_hawkes::ccg::{mc_null_inference, CcgConfig};
use hetero_hawkes::estimate::{
    fit_modified_mle, fit_nonparametric, fit_standard_mhp, impact_curve, DesignSpec, FitResult, ImpactBasis, SigmaW,
};
use hetero_hawkes::experiments::{run_experiment, ExperimentOptions};
use hetero_hawkes::inference::{ks_rescaling_test, wald_test};
use hetero_hawkes::io::{read_spikes, write_spikes, SpikeFormat};
use hetero_hawkes::simulate::{scenario_preset, thinning_simulate};
use hetero_hawkes::theory::{bias_approx, bias_hawkes, theory_curves, CoxTheoryParams};
use hetero_hawkes::{Error, EventSequence, TrialSet};
use pyo3::exceptions::{PyIOError, PyKeyError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_object<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Multi-trial spike data.
#[pyclass(frozen, module = "hetero_hawkes_py")]
pub struct Dataset {
    inner: TrialSet,
}

#[pymethods]
impl Dataset {
    /// Builds a dataset from `{unit: [[t, ...] per trial]}`.
    #[new]
    fn new(units: std::collections::BTreeMap<String, Vec<Vec<f64>>>, horizon: f64) -> PyResult<Self> {
        let trials = units.values().map(Vec::len).max().unwrap_or(0);
        let mut processes = std::collections::BTreeMap::new();
        for (id, per_trial) in units {
            if per_trial.len() != trials {
                return Err(PyValueError::new_err(format!(
                    "unit {id} has {} trials, expected {trials}",
                    per_trial.len()
                )));
            }
            let seqs = per_trial
                .into_iter()
                .map(|ts| EventSequence::from_unsorted(ts, horizon))
                .collect::<Result<Vec<_>, _>>()
                .map_err(to_py)?;
            processes.insert(id, seqs);
        }
        Ok(Self {
            inner: TrialSet::new(processes, trials, horizon).map_err(to_py)?,
        })
    }

    #[getter]
    fn units(&self) -> Vec<String> {
        self.inner.process_ids().map(String::from).collect()
    }

    #[getter]
    fn trial_count(&self) -> usize {
        self.inner.trial_count()
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.trial_horizon()
    }

    fn events(&self, unit: &str, trial: usize) -> PyResult<Vec<f64>> {
        let seqs = self
            .inner
            .process(unit)
            .ok_or_else(|| PyKeyError::new_err(unit.to_string()))?;
        seqs.get(trial)
            .map(|s| s.times().to_vec())
            .ok_or_else(|| PyValueError::new_err(format!("trial {trial} out of range")))
    }

    /// Mean rate of `unit` in spikes/s.
    fn rate(&self, unit: &str) -> PyResult<f64> {
        if self.inner.process(unit).is_none() {
            return Err(PyKeyError::new_err(unit.to_string()));
        }
        Ok(self.inner.event_count(unit) as f64 / self.inner.total_time())
    }

    #[pyo3(signature = (path, format = "auto"))]
    fn save(&self, path: &str, format: &str) -> PyResult<()> {
        let f: SpikeFormat = format.parse().map_err(to_py)?;
        write_spikes(&self.inner, path, f).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(units={:?}, trials={}, horizon={})",
            self.units(),
            self.inner.trial_count(),
            self.inner.trial_horizon()
        )
    }
}

#[pyfunction]
#[pyo3(signature = (preset, seed = 0, trials = None, horizon = None))]
fn simulate(py: Python<'_>, preset: &str, seed: u64, trials: Option<usize>, horizon: Option<f64>) -> PyResult<Dataset> {
    let mut spec = scenario_preset(preset).map_err(to_py)?;
    spec.seed = seed;
    if let Some(n) = trials {
        spec.trial_count = n;
    }
    if let Some(h) = horizon {
        spec.horizon = h;
    }
    let out = py.detach(|| thinning_simulate(&spec, false)).map_err(to_py)?;
    Ok(Dataset { inner: out.trials })
}

#[pyfunction]
#[pyo3(signature = (path, format = "auto", horizon = None))]
fn load(path: &str, format: &str, horizon: Option<f64>) -> PyResult<Dataset> {
    let f: SpikeFormat = format.parse().map_err(to_py)?;
    Ok(Dataset {
        inner: read_spikes(path, f, horizon).map_err(to_py)?,
    })
}

fn build_spec(
    method: &str,
    source: &str,
    target: &str,
    sigma_h: f64,
    sigma_w: Option<f64>,
    lag_window: f64,
    knots: usize,
) -> PyResult<DesignSpec> {
    let mut spec = match method {
        "modified" => DesignSpec::modified(source, target, sigma_h),
        "standard" => DesignSpec::standard(source, target, sigma_h),
        "spline" => DesignSpec::modified(source, target, sigma_h).with_basis(ImpactBasis::spline(lag_window, knots)),
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown method {other}; expected modified, standard or spline"
            )))
        }
    };
    if let Some(s) = sigma_w {
        spec.sigma_w = SigmaW::Fixed(s);
    }
    Ok(spec)
}

fn run_fit(method: &str, spec: &DesignSpec, data: &TrialSet) -> Result<FitResult, Error> {
    match method {
        "standard" => fit_standard_mhp(spec, data),
        "spline" => fit_nonparametric(spec, data),
        _ => fit_modified_mle(spec, data),
    }
}

/// Fits `source -> target`; widths in seconds. Returns the fit record plus the impact curve
/// and, for single-coefficient impacts, a Wald test.
#[pyfunction]
#[pyo3(signature = (data, source, target, method = "modified", sigma_h = 0.03, sigma_w = None, lag_window = 0.05, knots = 9))]
#[allow(clippy::too_many_arguments)]
fn fit(
    py: Python<'_>,
    data: &Dataset,
    source: &str,
    target: &str,
    method: &str,
    sigma_h: f64,
    sigma_w: Option<f64>,
    lag_window: f64,
    knots: usize,
) -> PyResult<Py<PyAny>> {
    let spec = build_spec(method, source, target, sigma_h, sigma_w, lag_window, knots)?;
    let result = py.detach(|| run_fit(method, &spec, &data.inner)).map_err(to_py)?;
    let end = if method == "spline" { lag_window } else { 1.5 * sigma_h };
    let lags: Vec<f64> = (0..=(end * 1e3).ceil() as usize).map(|k| k as f64 * 1e-3).collect();
    let curve = impact_curve(&spec, &result, 0, &lags, 0.95).map_err(to_py)?;

    let out = PyDict::new(py);
    out.set_item("fit", to_object(py, &result)?)?;
    out.set_item("curve", to_object(py, &curve)?)?;
    if spec.impacts[0].basis.len().map_err(to_py)? == 1 {
        let w = wald_test(&result, result.impact_offset).map_err(to_py)?;
        out.set_item("wald", to_object(py, &w)?)?;
    }
    Ok(out.into_any().unbind())
}

/// Time-rescaling KS test of a fitted model.
#[pyfunction]
#[pyo3(signature = (data, source, target, method = "modified", sigma_h = 0.03, sigma_w = None))]
fn goodness_of_fit(
    py: Python<'_>,
    data: &Dataset,
    source: &str,
    target: &str,
    method: &str,
    sigma_h: f64,
    sigma_w: Option<f64>,
) -> PyResult<Py<PyAny>> {
    let spec = build_spec(method, source, target, sigma_h, sigma_w, 0.05, 9)?;
    let g = py
        .detach(|| {
            let f = run_fit(method, &spec, &data.inner)?;
            ks_rescaling_test(&spec, &f, &data.inner)
        })
        .map_err(to_py)?;
    to_object(py, &g)
}

/// Jitter cross-correlogram; widths in seconds.
#[pyfunction]
#[pyo3(signature = (data, source, target, bin_width = 0.002, max_lag = 0.1, jitter_window = 0.12, n_mc = 1000, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn ccg(
    py: Python<'_>,
    data: &Dataset,
    source: &str,
    target: &str,
    bin_width: f64,
    max_lag: f64,
    jitter_window: f64,
    n_mc: usize,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let cfg = CcgConfig {
        bin_width,
        max_lag,
        jitter_window,
        n_mc,
        ..CcgConfig::default()
    };
    let get = |id: &str| {
        data.inner
            .process(id)
            .ok_or_else(|| PyKeyError::new_err(id.to_string()))
    };
    let (s, t) = (get(source)?, get(target)?);
    let r = py.detach(|| mc_null_inference(s, t, &cfg, seed)).map_err(to_py)?;
    let p = r.max_stat_p_value(bin_width, max_lag).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("lags", r.lags.clone())?;
    out.set_item("ccg", r.ccg.clone())?;
    out.set_item("null_mean", r.null_mean.clone())?;
    out.set_item("simultaneous_band", r.simultaneous_band.clone())?;
    out.set_item("p_values", r.p_values.clone())?;
    out.set_item("max_stat_p", p)?;
    Ok(out.into_any().unbind())
}

fn theory_params(
    rho: f64,
    sigma_i: f64,
    alpha_i: f64,
    alpha_j: f64,
    sigma_h: f64,
    horizon: f64,
    alpha_ij: f64,
) -> PyResult<CoxTheoryParams> {
    let p = CoxTheoryParams {
        rho,
        sigma_i,
        alpha_i,
        alpha_j,
        sigma_h,
        horizon,
        alpha_ij,
    };
    p.validate().map_err(to_py)?;
    Ok(p)
}

/// Closed-form bias/SE/RMSE of the modified estimator along `sigma_w` (seconds), linear-Cox pair.
#[pyfunction]
#[pyo3(signature = (sigma_w, rho = 30.0, sigma_i = 0.1, alpha_i = 10.0, alpha_j = 10.0, sigma_h = 0.03, horizon = 1000.0, alpha_ij = 2.0))]
#[allow(clippy::too_many_arguments)]
fn theory(
    py: Python<'_>,
    sigma_w: Vec<f64>,
    rho: f64,
    sigma_i: f64,
    alpha_i: f64,
    alpha_j: f64,
    sigma_h: f64,
    horizon: f64,
    alpha_ij: f64,
) -> PyResult<Py<PyAny>> {
    let p = theory_params(rho, sigma_i, alpha_i, alpha_j, sigma_h, horizon, alpha_ij)?;
    let rows = theory_curves(&p, &sigma_w).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("bias_standard", bias_hawkes(&p).map_err(to_py)?)?;
    out.set_item("rows", to_object(py, &rows)?)?;
    Ok(out.into_any().unbind())
}

/// Closed-form bias at a single width.
#[pyfunction]
#[pyo3(signature = (sigma_w, rho = 30.0, sigma_i = 0.1, alpha_i = 10.0, alpha_j = 10.0, sigma_h = 0.03))]
fn bias(sigma_w: f64, rho: f64, sigma_i: f64, alpha_i: f64, alpha_j: f64, sigma_h: f64) -> PyResult<f64> {
    let p = theory_params(rho, sigma_i, alpha_i, alpha_j, sigma_h, 1000.0, 2.0)?;
    bias_approx(&p, sigma_w).map_err(to_py)
}

/// Runs a named replicated study and returns its summary and tables.
#[pyfunction]
#[pyo3(signature = (name, reps = 20, seed = 0, trials = None, n_mc = 1000, jobs = 1))]
fn experiment(
    py: Python<'_>,
    name: &str,
    reps: usize,
    seed: u64,
    trials: Option<usize>,
    n_mc: usize,
    jobs: usize,
) -> PyResult<Py<PyAny>> {
    let opts = ExperimentOptions {
        reps,
        trials,
        seed,
        jobs,
        sigma_w_grid: None,
        n_mc,
    };
    let report = py.detach(|| run_experiment(name, &opts)).map_err(to_py)?;
    to_object(py, &report)
}

#[pymodule]
fn hetero_hawkes_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Dataset>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(load, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(goodness_of_fit, m)?)?;
    m.add_function(wrap_pyfunction!(ccg, m)?)?;
    m.add_function(wrap_pyfunction!(theory, m)?)?;
    m.add_function(wrap_pyfunction!(bias, m)?)?;
    m.add_function(wrap_pyfunction!(experiment, m)?)?;
    Ok(())
}
