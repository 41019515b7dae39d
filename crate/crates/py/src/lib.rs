//! Python bindings: fields, chaos measures, LBM paths, the resolvent, the
//! intrinsic metric and the experiment harness.

use liouville::chaos::{self, CellMeasure};
use liouville::fieldgen::{self, FieldSynthesizer, LayeredField};
use liouville::harness::{self, parse_config};
use liouville::metric::{build_weighted_lattice, intrinsic_distance};
use liouville::operators::{self, ResolventOptions, TrigPolynomial};
use liouville::pathkit::{self, LbmModel};
use liouville::{GridSpec, TorusPoint};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn py_err(e: liouville::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Layered log-correlated field on an `N x N` torus grid.
#[pyclass(name = "Field", frozen)]
pub struct PyField(LayeredField);

#[pymethods]
impl PyField {
    #[new]
    fn new(grid: usize, n_max: usize, seed: u64) -> PyResult<Self> {
        let synth = FieldSynthesizer::new(GridSpec::new(grid).map_err(py_err)?, n_max).map_err(py_err)?;
        Ok(Self(synth.sample(seed)))
    }

    #[getter]
    fn grid(&self) -> usize {
        self.0.grid().size()
    }

    #[getter]
    fn n_max(&self) -> usize {
        self.0.n_max()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed()
    }

    /// Cumulative field `X_n`, row-major.
    fn values(&self, n: usize) -> PyResult<Vec<f64>> {
        Ok(self.0.values(n).map_err(py_err)?.to_vec())
    }

    /// Single layer `Y_k`, row-major.
    fn layer(&self, k: usize) -> PyResult<Vec<f64>> {
        Ok(self.0.layer(k).map_err(py_err)?.to_vec())
    }

    fn variance(&self, n: usize) -> f64 {
        self.0.variance(n)
    }

    fn at(&self, x: f64, y: f64, n: usize) -> PyResult<f64> {
        self.0.field_at(TorusPoint::new(x, y), n).map_err(py_err)
    }
}

/// Chaos measure of a field at one level, as cell masses.
#[pyclass(name = "Measure", frozen)]
pub struct PyMeasure(CellMeasure);

#[pymethods]
impl PyMeasure {
    #[new]
    fn new(field: &PyField, gamma: f64, n: usize) -> PyResult<Self> {
        Ok(Self(chaos::chaos_measure(&field.0, gamma, n).map_err(py_err)?))
    }

    fn total(&self) -> f64 {
        self.0.total()
    }

    fn masses(&self) -> Vec<f64> {
        self.0.masses().to_vec()
    }

    fn mass_at(&self, x: f64, y: f64) -> f64 {
        self.0.mass_at(TorusPoint::new(x, y))
    }
}

/// Liouville Brownian motion driven by one field at one level.
#[pyclass(name = "Lbm", frozen)]
pub struct PyLbm(LbmModel);

#[pymethods]
impl PyLbm {
    #[new]
    #[pyo3(signature = (field, gamma, n, dt=None))]
    fn new(field: &PyField, gamma: f64, n: usize, dt: Option<f64>) -> PyResult<Self> {
        let model = match dt {
            Some(dt) => LbmModel::new(&field.0, gamma, n, dt),
            None => LbmModel::with_max_step(&field.0, gamma, n),
        };
        Ok(Self(model.map_err(py_err)?))
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.0.dt()
    }

    /// Positions at increasing quantum times from `(x, y)`.
    fn positions(&self, x: f64, y: f64, times: Vec<f64>, seed: u64) -> PyResult<Vec<(f64, f64)>> {
        if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < 0.0) {
            return Err(PyValueError::new_err("times must be nonnegative and nondecreasing"));
        }
        let mut w = self.0.walker(TorusPoint::new(x, y), seed);
        Ok(times
            .iter()
            .map(|&t| {
                let p = w.position_at(t);
                (p.x, p.y)
            })
            .collect())
    }

    /// `(estimate, stderr)` of `R_lambda cos(2 pi x1)` at `(x, y)`.
    #[pyo3(signature = (lam, x, y, replicas, seed, eps_tail=1e-4))]
    fn resolvent_cos(&self, lam: f64, x: f64, y: f64, replicas: usize, seed: u64, eps_tail: f64) -> PyResult<(f64, f64)> {
        let options = ResolventOptions {
            replicas,
            eps_tail,
            seed,
            ..ResolventOptions::default()
        };
        let r = operators::resolvent(&self.0, lam, &TrigPolynomial::cos_x(), TorusPoint::new(x, y), options)
            .map_err(py_err)?;
        Ok((r.value, r.stderr))
    }
}

#[pyfunction]
fn xi(q: f64, gamma: f64) -> PyResult<f64> {
    chaos::xi(q, gamma).map_err(py_err)
}

#[pyfunction]
fn covariance_cumulative(r: f64, n: f64) -> PyResult<f64> {
    fieldgen::covariance_cumulative(r, n).map_err(py_err)
}

#[pyfunction]
fn max_time_step(n: usize) -> f64 {
    pathkit::max_time_step(n)
}

/// Regularized intrinsic distance between two points at level `n`.
#[pyfunction]
fn intrinsic_distance_between(field: &PyField, gamma: f64, n: usize, a: (f64, f64), b: (f64, f64)) -> PyResult<f64> {
    let lattice = build_weighted_lattice(&field.0, gamma, n).map_err(py_err)?;
    Ok(intrinsic_distance(
        &lattice,
        TorusPoint::new(a.0, a.1),
        TorusPoint::new(b.0, b.1),
    ))
}

/// Runs one experiment (or `"all"`) from config text and returns the JSON
/// summaries; files are written only when `out` is given.
#[pyfunction]
#[pyo3(signature = (config, experiment, out=None))]
fn run_experiment(py: Python<'_>, config: &str, experiment: &str, out: Option<String>) -> PyResult<Vec<String>> {
    let mut cfg = parse_config(config).map_err(py_err)?;
    let experiment = experiment.to_string();
    py.allow_threads(move || {
        let reports = match out {
            Some(dir) => {
                cfg.out = dir.into();
                harness::run_experiment(&cfg, &experiment)?
            }
            None if experiment == "all" => harness::EXPERIMENTS
                .iter()
                .map(|e| harness::evaluate(&cfg, e))
                .collect::<liouville::Result<Vec<_>>>()?,
            None => vec![harness::evaluate(&cfg, &experiment)?],
        };
        Ok(reports.iter().map(|r| r.summary().to_string()).collect())
    })
    .map_err(py_err)
}

#[pymodule]
fn liouville_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyField>()?;
    m.add_class::<PyMeasure>()?;
    m.add_class::<PyLbm>()?;
    m.add_function(wrap_pyfunction!(xi, m)?)?;
    m.add_function(wrap_pyfunction!(covariance_cumulative, m)?)?;
    m.add_function(wrap_pyfunction!(max_time_step, m)?)?;
    m.add_function(wrap_pyfunction!(intrinsic_distance_between, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("EXPERIMENTS", harness::EXPERIMENTS.to_vec())?;
    Ok(())
}
