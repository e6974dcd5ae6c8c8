//! Python bindings: `import jdevar`.
//!
//! Vectors and matrices cross the boundary as lists (matrices row-major);
//! results come back as dicts mirroring the JSON documents of the CLI.

use jdevar_core::data::{load_prices, to_log_returns, ReturnSample};
use jdevar_core::estimate::{fit_els, ElsProblem};
use jdevar_core::model::{Model1Params, Model2Params, ModelKind, ModelParams, ReturnModel, TruncationPolicy};
use jdevar_core::optimize::{
    efficient_frontier, evar_objective_gradient, kkt_check, recover_multipliers, solve_evar, solve_min_variance,
    target_grid, Portfolio, RiskKind, BOUND_TOL,
};
use jdevar_core::risk::{evar_empirical, evar_model, var_empirical, RiskLevel};
use jdevar_core::Error;
use nalgebra::{DMatrix, DVector};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::{json, Value};

create_exception!(jdevar, JdevarError, PyException, "Raised with (code, message) arguments.");

fn py_err(e: Error) -> PyErr {
    JdevarError::new_err((e.code(), e.to_string()))
}

fn to_py(py: Python<'_>, v: &Value) -> PyResult<Py<PyAny>> {
    Ok(match v {
        Value::Null => py.None(),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any().unbind(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any().unbind(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any().unbind(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any().unbind(),
        Value::Array(xs) => {
            let items = xs.iter().map(|x| to_py(py, x)).collect::<PyResult<Vec<_>>>()?;
            PyList::new(py, items)?.into_any().unbind()
        }
        Value::Object(m) => {
            let d = PyDict::new(py);
            for (k, x) in m {
                d.set_item(k, to_py(py, x)?)?;
            }
            d.into_any().unbind()
        }
    })
}

fn to_py_ser(py: Python<'_>, v: &impl serde::Serialize) -> PyResult<Py<PyAny>> {
    let value = serde_json::to_value(v).map_err(|e| py_err(e.into()))?;
    to_py(py, &value)
}

fn level(confidence: f64) -> PyResult<RiskLevel> {
    RiskLevel::from_confidence(confidence).map_err(py_err)
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    jdevar_core::linalg::matrix_from_rows(rows).map_err(PyValueError::new_err)
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    jdevar_core::linalg::matrix_to_rows(m)
}

fn sample_from(returns: &[Vec<f64>]) -> PyResult<ReturnSample> {
    ReturnSample::unnamed(matrix(returns)?).map_err(py_err)
}

/// A Model 1 or Model 2 parameter set.
#[pyclass(name = "Model", module = "jdevar", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyModel {
    inner: ModelParams,
}

impl PyModel {
    fn model(&self) -> &dyn ReturnModel {
        self.inner.as_model()
    }

    fn check_len(&self, v: &[f64], what: &str) -> PyResult<()> {
        let n = self.model().n_assets();
        if v.len() != n {
            return Err(PyValueError::new_err(format!("{what} has length {}, expected {n}", v.len())));
        }
        Ok(())
    }
}

#[pymethods]
impl PyModel {
    /// Per-asset jumps plus systemic jumps.
    #[staticmethod]
    #[allow(clippy::too_many_arguments)]
    fn model1(
        mu_tilde: Vec<f64>,
        sigma: f64,
        lam: Vec<f64>,
        theta: Vec<f64>,
        sigma_jump: Vec<f64>,
        gamma: f64,
        mu: Vec<f64>,
        a: Vec<Vec<f64>>,
    ) -> PyResult<Self> {
        let p = Model1Params::new(
            DVector::from_vec(mu_tilde),
            sigma,
            DVector::from_vec(lam),
            DVector::from_vec(theta),
            DVector::from_vec(sigma_jump),
            gamma,
            DVector::from_vec(mu),
            matrix(&a)?,
        )
        .map_err(py_err)?;
        Ok(Self { inner: p.into() })
    }

    /// Correlated diffusion plus systemic jumps.
    #[staticmethod]
    fn model2(mu_tilde: Vec<f64>, q: Vec<Vec<f64>>, lam: f64, mu: Vec<f64>, a: Vec<Vec<f64>>) -> PyResult<Self> {
        let p = Model2Params::new(DVector::from_vec(mu_tilde), matrix(&q)?, lam, DVector::from_vec(mu), matrix(&a)?)
            .map_err(py_err)?;
        Ok(Self { inner: p.into() })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: ModelParams::from_json_str(text).map_err(py_err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json_pretty().map_err(py_err)
    }

    #[getter]
    fn kind(&self) -> String {
        self.model().kind().to_string()
    }

    #[getter]
    fn n_assets(&self) -> usize {
        self.model().n_assets()
    }

    fn mean(&self) -> Vec<f64> {
        self.model().mean().iter().copied().collect()
    }

    fn covariance(&self) -> Vec<Vec<f64>> {
        rows(&self.model().covariance())
    }

    /// `ln E[exp(−u·R)]`.
    fn laplace_exponent(&self, u: Vec<f64>) -> PyResult<f64> {
        self.check_len(&u, "u")?;
        self.model().laplace_exponent(&DVector::from_vec(u)).map_err(py_err)
    }

    #[pyo3(signature = (r, tail_mass=None, max_terms=None))]
    fn density(&self, r: Vec<f64>, tail_mass: Option<f64>, max_terms: Option<usize>) -> PyResult<f64> {
        self.check_len(&r, "r")?;
        let d = TruncationPolicy::default();
        let policy = TruncationPolicy::new(tail_mass.unwrap_or(d.tail_mass), max_terms.unwrap_or(d.max_terms))
            .map_err(py_err)?;
        self.model().density(&DVector::from_vec(r), &policy).map_err(py_err)
    }

    /// `count` return vectors as a list of rows.
    #[pyo3(signature = (count, seed=0))]
    fn sample(&self, count: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&self.model().sample(count, seed).map_err(py_err)?.returns))
    }

    /// EVaR of the portfolio at the given confidence (`α = 1 − confidence`).
    #[pyo3(signature = (weights, confidence=0.95))]
    fn evar(&self, py: Python<'_>, weights: Vec<f64>, confidence: f64) -> PyResult<Py<PyAny>> {
        self.check_len(&weights, "weights")?;
        let r = evar_model(self.model(), &DVector::from_vec(weights), level(confidence)?).map_err(py_err)?;
        to_py_ser(py, &r)
    }

    /// Long-only EVaR-optimal portfolio for a target return.
    #[pyo3(signature = (target, confidence=0.95))]
    fn solve_evar(&self, py: Python<'_>, target: f64, confidence: f64) -> PyResult<Py<PyAny>> {
        let sol = solve_evar(self.model(), level(confidence)?, target).map_err(py_err)?;
        let doc = json!({
            "weights": sol.portfolio.weights.as_slice(),
            "target_return": target,
            "evar": sol.evar.value,
            "s_star": sol.evar.s_star,
            "kkt": sol.kkt,
        });
        to_py(py, &doc)
    }

    /// One entry per target with either a `point` or an `error`.
    #[pyo3(signature = (targets, confidence=0.95, risk="evar"))]
    fn efficient_frontier(&self, py: Python<'_>, targets: Vec<f64>, confidence: f64, risk: &str) -> PyResult<Py<PyAny>> {
        let kind = match risk {
            "evar" => RiskKind::Evar,
            "stdev" => RiskKind::Stdev,
            other => return Err(PyValueError::new_err(format!("risk must be 'evar' or 'stdev', got {other:?}"))),
        };
        let lvl = level(confidence)?;
        let model = self.inner.clone();
        let entries = py.detach(|| efficient_frontier(model.as_model(), lvl, &targets, kind));
        to_py_ser(py, &entries)
    }

    /// KKT residuals at `(weights, s)` with least-squares multipliers.
    #[pyo3(signature = (weights, s, target=None, confidence=0.95))]
    fn kkt_check(&self, py: Python<'_>, weights: Vec<f64>, s: f64, target: Option<f64>, confidence: f64) -> PyResult<Py<PyAny>> {
        self.check_len(&weights, "weights")?;
        let lvl = level(confidence)?;
        let w = DVector::from_vec(weights);
        let means = self.model().mean();
        let grad = evar_objective_gradient(self.model(), lvl, &w, s).map_err(py_err)?;
        let m = recover_multipliers(&grad, &means, &w, s, BOUND_TOL);
        let target = target.unwrap_or_else(|| means.dot(&w));
        let report = kkt_check(self.model(), lvl, &Portfolio::new(w, target), s, &m).map_err(py_err)?;
        to_py_ser(py, &report)
    }

    fn __repr__(&self) -> String {
        format!("Model(kind={}, n_assets={})", self.kind(), self.n_assets())
    }
}

/// Empirical EVaR of `weights · R` over the rows of `returns`.
#[pyfunction]
#[pyo3(signature = (returns, weights, confidence=0.95))]
fn evar_sample(py: Python<'_>, returns: Vec<Vec<f64>>, weights: Vec<f64>, confidence: f64) -> PyResult<Py<PyAny>> {
    let r = evar_empirical(&sample_from(&returns)?, &DVector::from_vec(weights), level(confidence)?).map_err(py_err)?;
    to_py_ser(py, &r)
}

/// Empirical VaR (lower quantile of the loss).
#[pyfunction]
#[pyo3(signature = (returns, weights, confidence=0.95))]
fn var_sample(returns: Vec<Vec<f64>>, weights: Vec<f64>, confidence: f64) -> PyResult<f64> {
    var_empirical(&sample_from(&returns)?, &DVector::from_vec(weights), level(confidence)?).map_err(py_err)
}

/// Long-only minimum-variance weights for a target return.
#[pyfunction]
fn min_variance(cov: Vec<Vec<f64>>, means: Vec<f64>, target: f64) -> PyResult<Vec<f64>> {
    let p = solve_min_variance(&matrix(&cov)?, &DVector::from_vec(means), target).map_err(py_err)?;
    Ok(p.weights.iter().copied().collect())
}

/// Evenly spaced targets from `lo` to `hi` inclusive.
#[pyfunction]
fn grid(lo: f64, hi: f64, count: usize) -> PyResult<Vec<f64>> {
    target_grid(lo, hi, count).map_err(py_err)
}

/// Fits model 1 or 2 by extended least squares. Returns the fitted model and
/// a dict with the objective and diagnostics.
#[pyfunction]
#[pyo3(signature = (returns, model, starts=16, seed=0))]
fn fit(py: Python<'_>, returns: Vec<Vec<f64>>, model: u8, starts: usize, seed: u64) -> PyResult<(PyModel, Py<PyAny>)> {
    let kind = match model {
        1 => ModelKind::Model1,
        2 => ModelKind::Model2,
        other => return Err(PyValueError::new_err(format!("model must be 1 or 2, got {other}"))),
    };
    let problem = ElsProblem::new(sample_from(&returns)?, kind).map_err(py_err)?;
    let result = py.detach(|| fit_els(&problem, starts, seed)).map_err(py_err)?;
    let info = json!({
        "objective": result.objective,
        "iterations": result.iterations,
        "converged": result.converged,
        "n_obs": result.n_obs,
        "diagnostics": result.diagnostics,
    });
    Ok((PyModel { inner: result.params }, to_py(py, &info)?))
}

/// Log returns from closing-price CSV files: `(asset_names, rows)`.
#[pyfunction]
fn load_returns(paths: Vec<String>) -> PyResult<(Vec<String>, Vec<Vec<f64>>)> {
    let sample = to_log_returns(&load_prices(&paths).map_err(py_err)?).map_err(py_err)?;
    Ok((sample.asset_names.clone(), rows(&sample.returns)))
}

#[pymodule]
pub fn jdevar(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add("JdevarError", m.py().get_type::<JdevarError>())?;
    m.add_function(wrap_pyfunction!(evar_sample, m)?)?;
    m.add_function(wrap_pyfunction!(var_sample, m)?)?;
    m.add_function(wrap_pyfunction!(min_variance, m)?)?;
    m.add_function(wrap_pyfunction!(grid, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(load_returns, m)?)?;
    Ok(())
}
