//! Python bindings: potentials, the hypothesis validator, simulation runs
//! and the verification suites. Structured results cross the boundary as
//! JSON strings.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use fracphase::cli::RunConfig;
use fracphase::diagnostics::{estimate_report, scale_sweep, stability_experiment};
use fracphase::model::{validate_hypotheses, StructuralHypotheses};
use fracphase::potentials::{make_potential, ConvexSplitPotential, ExtendedReal, PotentialKind};
use fracphase::solver::{build_run, refine_study, run};
use fracphase::verify::{run_suite as core_run_suite, SuiteOptions};
use fracphase::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::NumericalFailure { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

fn potential_kind(variant: &str, constant: f64, d: f64) -> Result<PotentialKind, Error> {
    Ok(match variant {
        "regular" => PotentialKind::Regular { c0: constant },
        "logarithmic" => PotentialKind::Logarithmic { c1: constant },
        "singular" => PotentialKind::SingularReciprocal { c2: constant, d },
        "double_obstacle" => PotentialKind::DoubleObstacle { c3: constant },
        other => {
            return Err(Error::config(format!(
                "unknown potential '{other}', expected regular, logarithmic, singular or double_obstacle"
            )))
        }
    })
}

/// A catalog double-well potential F = β̂ + π̂.
#[pyclass(name = "Potential", frozen)]
struct PyPotential {
    inner: ConvexSplitPotential,
}

#[pymethods]
impl PyPotential {
    #[new]
    #[pyo3(signature = (variant, constant, d = 1.0))]
    fn new(variant: &str, constant: f64, d: f64) -> PyResult<Self> {
        let kind = potential_kind(variant, constant, d).map_err(to_py)?;
        Ok(PyPotential {
            inner: make_potential(kind).map_err(to_py)?,
        })
    }

    /// F(r), or +inf outside the domain.
    fn value(&self, r: f64) -> f64 {
        match self.inner.value(r) {
            ExtendedReal::Finite(v) => v,
            ExtendedReal::PosInfinity => f64::INFINITY,
        }
    }

    /// β̂(r), or +inf outside the domain.
    fn beta_hat(&self, r: f64) -> f64 {
        match self.inner.beta_hat(r) {
            ExtendedReal::Finite(v) => v,
            ExtendedReal::PosInfinity => f64::INFINITY,
        }
    }

    fn pi(&self, r: f64) -> f64 {
        self.inner.pi(r)
    }

    fn prox(&self, r: f64, eps: f64) -> PyResult<f64> {
        self.inner.prox(r, eps).map_err(to_py)
    }

    /// (β̂_ε(r), β_ε(r)).
    fn yosida(&self, r: f64, eps: f64) -> PyResult<(f64, f64)> {
        let p = self.inner.yosida_pair(r, eps).map_err(to_py)?;
        Ok((p.value, p.slope))
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// Result of `simulate`.
#[pyclass(name = "Trajectory", frozen)]
struct PyTrajectory {
    inner: fracphase::solver::Trajectory,
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times.clone()
    }

    /// φ coefficients per saved time.
    #[getter]
    fn y(&self) -> Vec<Vec<f64>> {
        self.inner.y.clone()
    }

    /// σ coefficients per saved time.
    #[getter]
    fn z(&self) -> Vec<Vec<f64>> {
        self.inner.z.clone()
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn estimates_json(&self) -> PyResult<String> {
        to_json(&estimate_report(&self.inner))
    }

    fn monitors_json(&self) -> PyResult<String> {
        to_json(&self.inner.monitors)
    }

    fn __len__(&self) -> usize {
        self.inner.times.len()
    }
}

fn parse(config: &str) -> PyResult<RunConfig> {
    RunConfig::parse(config).map_err(to_py)
}

/// Runs the model, data and solver sections of a TOML configuration.
#[pyfunction]
fn simulate(config: &str) -> PyResult<PyTrajectory> {
    let cfg = parse(config)?;
    let (model, data) = cfg.model_and_data().map_err(to_py)?;
    let spec = data.ok_or_else(|| PyValueError::new_err("missing [data] section"))?;
    let solver = cfg
        .solver
        .as_ref()
        .ok_or_else(|| PyValueError::new_err("missing [solver] section"))?;
    let (sys, data) = build_run(&model, &spec, solver).map_err(to_py)?;
    let (_, traj) = run(&sys, &data, solver).map_err(to_py)?;
    Ok(PyTrajectory { inner: traj })
}

/// Refinement study of a configuration with a [refine] section, as JSON.
#[pyfunction]
fn refine(config: &str) -> PyResult<String> {
    let cfg = parse(config)?;
    let (model, data) = cfg.model_and_data().map_err(to_py)?;
    let spec = data.ok_or_else(|| PyValueError::new_err("missing [data] section"))?;
    let solver = cfg
        .solver
        .as_ref()
        .ok_or_else(|| PyValueError::new_err("missing [solver] section"))?;
    let levels = cfg
        .refine
        .as_ref()
        .ok_or_else(|| PyValueError::new_err("missing [refine] section"))?;
    to_json(&refine_study(&model, &spec, solver, &levels.levels).map_err(to_py)?)
}

/// Identical-data run and perturbation sweep of a [contdep] section, as JSON.
#[pyfunction]
fn contdep(config: &str) -> PyResult<String> {
    let cfg = parse(config)?;
    let (model, data) = cfg.model_and_data().map_err(to_py)?;
    let spec = data.ok_or_else(|| PyValueError::new_err("missing [data] section"))?;
    let solver = cfg
        .solver
        .as_ref()
        .ok_or_else(|| PyValueError::new_err("missing [solver] section"))?;
    let cc = cfg
        .contdep
        .as_ref()
        .ok_or_else(|| PyValueError::new_err("missing [contdep] section"))?;
    let (_, data) = build_run(&model, &spec, solver).map_err(to_py)?;
    let same = stability_experiment(&model, &data, &data, solver).map_err(to_py)?;
    let sweep = scale_sweep(&model, &data, &cc.perturbation, &cc.scales, solver).map_err(to_py)?;
    to_json(&serde_json::json!({ "identical": same, "sweep": sweep }))
}

/// Validates structural hypotheses given as a JSON object.
#[pyfunction]
fn check_hypotheses(hypotheses_json: &str) -> PyResult<String> {
    let h: StructuralHypotheses =
        serde_json::from_str(hypotheses_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    to_json(&validate_hypotheses(&h))
}

/// Runs a verification suite with default options; returns the report JSON.
#[pyfunction]
#[pyo3(signature = (name, seed = 0))]
fn run_suite(py: Python<'_>, name: &str, seed: u64) -> PyResult<String> {
    let report = py
        .detach(|| core_run_suite(name, &SuiteOptions::default(), seed))
        .map_err(to_py)?;
    to_json(&report)
}

#[pymodule]
fn fracphase_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPotential>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(refine, m)?)?;
    m.add_function(wrap_pyfunction!(contdep, m)?)?;
    m.add_function(wrap_pyfunction!(check_hypotheses, m)?)?;
    m.add_function(wrap_pyfunction!(run_suite, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn potential_names() {
        assert!(matches!(
            potential_kind("singular", 2.0, 0.5).unwrap(),
            PotentialKind::SingularReciprocal { c2, d } if c2 == 2.0 && d == 0.5
        ));
        assert!(potential_kind("quartic", 1.0, 1.0).is_err());
    }
}
