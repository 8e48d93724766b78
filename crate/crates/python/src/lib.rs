//! Python module `gdm`: driven tree systems, their measures, dimension
//! estimates, condition checks and singularity tests.
//!
//! Structured results come back as plain dicts and lists, with the same
//! field names as the JSON reports of the command-line tool.

use std::sync::Arc;

use num_rational::BigRational;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::Serialize;

use gdm_core::conditions::{check_a, check_wa, search_box_condition, ConditionSettings};
use gdm_core::config::{build_system, builtin_kinds as core_kinds, override_initial, parse_config, SystemConfig};
use gdm_core::derham::{curve_at, is_ac_with_bernoulli, minkowski_system, validate, LftMatrix};
use gdm_core::dimension::{
    dim_entropy_exact, dim_entropy_mc, dim_hata, dim_kinney as core_kinney, dim_linear as core_linear,
    entropy_average_mc, key_deficit as core_key_deficit,
};
use gdm_core::measure::{cylinder_mass, cylinder_mass_exact, distribution_function, sample_path};
use gdm_core::rational::{parse_rational, to_f64};
use gdm_core::singularity::{certify_singular, hellinger_test, HellingerSettings};
use gdm_core::symbolic::Word;
use gdm_core::systems::{DrivenSystem, SystemMeta};
use gdm_core::transfer::{dim_fanlau, solve_density, TransferSettings};

create_exception!(gdm, GdmError, PyException, "Invalid input or a failed computation; args are (code, message).");

fn err(e: gdm_core::Error) -> PyErr {
    GdmError::new_err((e.code(), e.to_string()))
}

/// Serializes through JSON so nested reports arrive as dicts and lists.
fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| GdmError::new_err(("internal", e.to_string())))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn from_py(py: Python<'_>, value: &Bound<'_, PyAny>) -> PyResult<serde_json::Value> {
    let text: String = py.import("json")?.call_method1("dumps", (value,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| GdmError::new_err(("config", e.to_string())))
}

fn rationals(items: &[String]) -> PyResult<Vec<BigRational>> {
    items.iter().map(|s| parse_rational(s).map_err(err)).collect()
}

/// A driven tree system `(N, Y, G, H)` with its initial state.
#[pyclass(module = "gdm", frozen)]
pub struct System {
    inner: DrivenSystem,
}

#[pymethods]
impl System {
    /// `System("adf")`, `System("moebius", {"N": 2, "C": "1"})`, ...
    #[new]
    #[pyo3(signature = (kind, params=None))]
    fn new(py: Python<'_>, kind: &str, params: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let params = match params {
            Some(p) => from_py(py, p)?,
            None => serde_json::Value::Null,
        };
        let cfg = SystemConfig::new(kind, params).map_err(err)?;
        Ok(System { inner: build_system(&cfg).map_err(err)? })
    }

    /// Builds a system from a JSON config `{"kind": ..., "params": {...}}`.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let cfg = parse_config(text).map_err(err)?;
        Ok(System { inner: build_system(&cfg).map_err(err)? })
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.label.clone()
    }

    #[getter]
    fn alphabet_size(&self) -> usize {
        self.inner.alphabet_size()
    }

    /// The same system started from `y`: a rational, `"inf"`, or `"a,b"`.
    fn with_initial(&self, y: &str) -> PyResult<Self> {
        Ok(System { inner: override_initial(&self.inner, y).map_err(err)? })
    }

    fn cylinder_mass(&self, word: Vec<usize>) -> PyResult<f64> {
        let w = Word::new(word, self.inner.alphabet_size()).map_err(err)?;
        cylinder_mass(&self.inner, &w).map_err(err)
    }

    /// Exact mass as a rational string, for systems with exact arithmetic.
    fn cylinder_mass_exact(&self, word: Vec<usize>) -> PyResult<String> {
        let w = Word::new(word, self.inner.alphabet_size()).map_err(err)?;
        Ok(cylinder_mass_exact(&self.inner, &w).map_err(err)?.to_string())
    }

    /// Rows `{t, phi, phi_exact, truncation_bound}` of `t ↦ μ_y([0, t])`.
    #[pyo3(signature = (points, depth=64))]
    fn distribution(&self, py: Python<'_>, points: Vec<String>, depth: usize) -> PyResult<Py<PyAny>> {
        let mut grid = rationals(&points)?;
        grid.sort();
        to_py(py, &distribution_function(&self.inner, &grid, depth).map_err(err)?)
    }

    /// One `ν_y`-sampled path: word, states, log-masses and martingale.
    #[pyo3(signature = (n, seed=0, path=0))]
    fn sample_path(&self, py: Python<'_>, n: usize, seed: u64, path: u64) -> PyResult<Py<PyAny>> {
        to_py(py, &sample_path(&self.inner, n, seed, path).map_err(err)?)
    }

    /// `(mean, ci_halfwidth)` of the entropy averages over `paths` paths.
    #[pyo3(signature = (n, paths=200, seed=0))]
    fn entropy_average(&self, py: Python<'_>, n: usize, paths: usize, seed: u64) -> PyResult<(f64, f64)> {
        let avg = py.detach(|| entropy_average_mc(&self.inner, n, paths, seed)).map_err(err)?;
        Ok((avg.mean, avg.ci_halfwidth))
    }

    /// Dimension report; `method` is one of mc, exact, closed, fanlau.
    #[pyo3(signature = (method="mc", n=None, paths=200, seed=0, grid=2049))]
    fn dim(
        &self,
        py: Python<'_>,
        method: &str,
        n: Option<usize>,
        paths: usize,
        seed: u64,
        grid: usize,
    ) -> PyResult<Py<PyAny>> {
        let s = &self.inner;
        let inapplicable = |reason: &str| {
            err(gdm_core::Error::Inapplicable { method: method.into(), reason: reason.into() })
        };
        let report = match method {
            "mc" => {
                let (r, _) = py.detach(|| dim_entropy_mc(s, n.unwrap_or(2000), paths, seed)).map_err(err)?;
                let wa = check_wa(s, &ConditionSettings { depth: 10, ..Default::default() }).map_err(err)?;
                r.with_wa(&wa, &s.geometry)
            }
            "exact" => py.detach(|| dim_entropy_exact(s, n.unwrap_or(12))).map_err(err)?,
            "closed" => match &s.meta {
                SystemMeta::Linear(w) => core_linear(w).map_err(err)?,
                SystemMeta::Hata { h_modulus_sq, alpha_modulus_sq } => {
                    dim_hata(*h_modulus_sq, *alpha_modulus_sq).map_err(err)?
                }
                SystemMeta::DeRham(d) => match is_ac_with_bernoulli(d) {
                    Some(p) => core_linear(&p.iter().map(to_f64).collect::<Vec<_>>()).map_err(err)?,
                    None => return Err(inapplicable("not equivalent to a Bernoulli measure")),
                },
                _ => return Err(inapplicable("no closed form for this kind")),
            },
            "fanlau" => {
                let SystemMeta::DeRham(d) = &s.meta else { return Err(inapplicable("needs a de Rham system")) };
                let settings = TransferSettings { m: grid, ..Default::default() };
                let g = py.detach(|| solve_density(d, &settings)).map_err(err)?;
                dim_fanlau(d, &g).map_err(err)?
            }
            other => return Err(inapplicable(&format!("unknown method `{other}`"))),
        };
        to_py(py, &report)
    }

    /// Verdicts for a comma-separated subset of A, wA, B, sB.
    #[pyo3(signature = (conditions="A,wA,B,sB", depth=12))]
    fn check(&self, py: Python<'_>, conditions: &str, depth: usize) -> PyResult<Py<PyAny>> {
        let settings = ConditionSettings { depth, ..Default::default() };
        let mut out = Vec::new();
        for name in conditions.split(',').map(str::trim).filter(|c| !c.is_empty()) {
            let v = match name {
                "A" => check_a(&self.inner, &settings),
                "wA" => check_wa(&self.inner, &settings),
                "B" => search_box_condition(&self.inner, false, None, &[1, 2, 3], &settings),
                "sB" => search_box_condition(&self.inner, true, None, &[1, 2, 3], &settings),
                other => Err(gdm_core::Error::Config(format!("unknown condition `{other}`"))),
            };
            out.push(v.map_err(err)?);
        }
        to_py(py, &out)
    }

    /// Hellinger partial sums against the Bernoulli measure `p`.
    #[pyo3(signature = (p, horizon=10_000, paths=50, seed=0))]
    fn hellinger(&self, py: Python<'_>, p: Vec<f64>, horizon: usize, paths: usize, seed: u64) -> PyResult<Py<PyAny>> {
        let settings = HellingerSettings { horizon, paths, seed, ..Default::default() };
        to_py(py, &py.detach(|| hellinger_test(&self.inner, &p, &settings)).map_err(err)?)
    }

    /// Box-separation singularity certificate against `p`.
    #[pyo3(signature = (p, max_word=3))]
    fn certify_singular(&self, py: Python<'_>, p: Vec<f64>, max_word: usize) -> PyResult<Py<PyAny>> {
        let settings = ConditionSettings::default();
        to_py(py, &py.detach(|| certify_singular(&self.inner, &p, max_word, &settings)).map_err(err)?)
    }

    fn __repr__(&self) -> String {
        format!("System({:?}, N={})", self.inner.label, self.inner.alphabet_size())
    }
}

/// The built-in kinds with a description and example parameters.
#[pyfunction]
fn builtin_kinds(py: Python<'_>) -> PyResult<Py<PyAny>> {
    to_py(py, &core_kinds())
}

/// Entropy cap outside the `ℓ¹` box of radius `eps0` around uniform.
#[pyfunction]
#[pyo3(signature = (n, eps0, l=1, c_tilde=None))]
fn key_deficit(py: Python<'_>, n: usize, eps0: f64, l: usize, c_tilde: Option<f64>) -> PyResult<Py<PyAny>> {
    to_py(py, &core_key_deficit(n, eps0, l, c_tilde).map_err(err)?)
}

/// `s_N(w)/log N` as a dimension report.
#[pyfunction]
fn dim_linear(py: Python<'_>, weights: Vec<f64>) -> PyResult<Py<PyAny>> {
    to_py(py, &core_linear(&weights).map_err(err)?)
}

/// Kinney's formula for the Minkowski measure by sampling.
#[pyfunction]
#[pyo3(signature = (samples=100_000, seed=0))]
fn dim_kinney(py: Python<'_>, samples: usize, seed: u64) -> PyResult<Py<PyAny>> {
    to_py(py, &py.detach(|| core_kinney(samples, seed)).map_err(err)?)
}

/// The de Rham curve of `matrices` (each `[a, b, c, d]` as rationals) at `t`.
#[pyfunction]
fn derham_curve(matrices: Vec<[String; 4]>, t: &str) -> PyResult<String> {
    let ms = matrices
        .iter()
        .map(|m| {
            let q = rationals(m)?;
            Ok(LftMatrix::new(q[0].clone(), q[1].clone(), q[2].clone(), q[3].clone()))
        })
        .collect::<PyResult<Vec<_>>>()?;
    let sys = validate(&ms).map_err(err)?;
    Ok(curve_at(&sys, &parse_rational(t).map_err(err)?).map_err(err)?.to_string())
}

/// Minkowski's `?⁻¹` at a rational `t`, exactly.
#[pyfunction]
fn minkowski_curve(t: &str) -> PyResult<String> {
    let sys = Arc::new(minkowski_system());
    Ok(curve_at(&sys, &parse_rational(t).map_err(err)?).map_err(err)?.to_string())
}

#[pymodule]
pub fn gdm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("GdmError", m.py().get_type::<GdmError>())?;
    m.add_class::<System>()?;
    m.add_function(wrap_pyfunction!(builtin_kinds, m)?)?;
    m.add_function(wrap_pyfunction!(key_deficit, m)?)?;
    m.add_function(wrap_pyfunction!(dim_linear, m)?)?;
    m.add_function(wrap_pyfunction!(dim_kinney, m)?)?;
    m.add_function(wrap_pyfunction!(derham_curve, m)?)?;
    m.add_function(wrap_pyfunction!(minkowski_curve, m)?)?;
    Ok(())
}
