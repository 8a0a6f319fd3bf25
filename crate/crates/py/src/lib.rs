//! Python bindings: `import gatecheck`.
//!
//! Gates are `Gate` objects; matrices cross the boundary as nested lists of
//! Python `complex`; composite results come back as dicts.

use gatecheck_core::channels::{apply_channel, counterexample_channel, ChannelSpec, NamedGate};
use gatecheck_core::discrimination::{
    self as disc, DiscriminationTask, LoccProtocol, OptimizeConfig, Strategy,
};
use gatecheck_core::kak;
use gatecheck_core::product_finder;
use gatecheck_core::qmath::{
    max_abs_diff, DensityMatrix, Ket1Q, Ket2Q, Mat2, Mat4, TwoQubitUnitary,
};
use gatecheck_core::Error;
use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: Error) -> PyErr {
    match e.exit_code() {
        3 => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn mat4_from(rows: Vec<Vec<Complex64>>) -> PyResult<Mat4> {
    if rows.len() != 4 || rows.iter().any(|r| r.len() != 4) {
        return Err(PyValueError::new_err("expected a 4x4 nested list"));
    }
    Ok(Mat4::from_fn(|r, c| rows[r][c]))
}

fn mat4_to(m: &Mat4) -> Vec<Vec<Complex64>> {
    (0..4)
        .map(|r| (0..4).map(|c| m[(r, c)]).collect())
        .collect()
}

fn mat2_to(m: &Mat2) -> Vec<Vec<Complex64>> {
    (0..2)
        .map(|r| (0..2).map(|c| m[(r, c)]).collect())
        .collect()
}

fn ket1_to(k: &Ket1Q) -> Vec<Complex64> {
    k.amplitudes().iter().copied().collect()
}

fn ket2_to(k: &Ket2Q) -> Vec<Complex64> {
    k.amplitudes().iter().copied().collect()
}

/// A two-qubit unitary.
#[pyclass(frozen, skip_from_py_object, module = "gatecheck")]
#[derive(Clone)]
pub struct Gate {
    inner: TwoQubitUnitary,
    label: String,
}

#[pymethods]
impl Gate {
    /// Builds a gate from a 4x4 nested list of complex numbers.
    #[new]
    fn new(matrix: Vec<Vec<Complex64>>) -> PyResult<Self> {
        let u = TwoQubitUnitary::new(mat4_from(matrix)?).map_err(py_err)?;
        Ok(Gate {
            inner: u,
            label: "custom".into(),
        })
    }

    /// `cnot`, `swap` or `identity`.
    #[staticmethod]
    fn named(name: &str) -> PyResult<Self> {
        let g = NamedGate::from_name(name).map_err(py_err)?;
        Ok(Gate {
            inner: g.unitary(),
            label: g.label().into(),
        })
    }

    #[getter]
    fn label(&self) -> &str {
        &self.label
    }

    fn matrix(&self) -> Vec<Vec<Complex64>> {
        mat4_to(self.inner.matrix())
    }

    fn __repr__(&self) -> String {
        format!("Gate('{}')", self.label)
    }
}

#[pyfunction]
fn kak_decompose<'py>(py: Python<'py>, gate: &Gate) -> PyResult<Bound<'py, PyDict>> {
    let d = kak::kak_decompose(&gate.inner).map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("lambdas", d.lambdas.to_vec())?;
    out.set_item("global_phase", d.global_phase)?;
    out.set_item("u_a", mat2_to(d.u_a.matrix()))?;
    out.set_item("u_b", mat2_to(d.u_b.matrix()))?;
    out.set_item("v_a", mat2_to(d.v_a.matrix()))?;
    out.set_item("v_b", mat2_to(d.v_b.matrix()))?;
    out.set_item(
        "reconstruction_error",
        max_abs_diff(&d.reconstruct(), gate.inner.matrix()),
    )?;
    Ok(out)
}

#[pyfunction]
fn find_product_preserving_state<'py>(
    py: Python<'py>,
    gate: &Gate,
) -> PyResult<Bound<'py, PyDict>> {
    let pair = product_finder::find_product_preserving_state(&gate.inner).map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("input_a", ket1_to(&pair.input.a))?;
    out.set_item("input_b", ket1_to(&pair.input.b))?;
    out.set_item("output_a", ket1_to(&pair.output.a))?;
    out.set_item("output_b", ket1_to(&pair.output.b))?;
    out.set_item("input_state", ket2_to(&pair.input.ket()))?;
    out.set_item("residual", pair.residual)?;
    out.set_item("lambdas", pair.kak.lambdas.to_vec())?;
    Ok(out)
}

#[pyfunction]
fn closed_form_guess(p: f64, q: f64) -> PyResult<f64> {
    disc::closed_form_guess(p, q).map_err(py_err)
}

/// Minimum-error discrimination of two 4x4 density matrices.
#[pyfunction]
fn helstrom<'py>(
    py: Python<'py>,
    rho0: Vec<Vec<Complex64>>,
    rho1: Vec<Vec<Complex64>>,
    q: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let r0 = DensityMatrix::new(mat4_from(rho0)?).map_err(py_err)?;
    let r1 = DensityMatrix::new(mat4_from(rho1)?).map_err(py_err)?;
    let h = disc::helstrom(&r0, &r1, q).map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("p_guess", h.p_guess)?;
    out.set_item("pi1", mat4_to(&h.povm.pi1))?;
    out.set_item("pi2", mat4_to(&h.povm.pi2))?;
    Ok(out)
}

fn protocol_dict<'py>(py: Python<'py>, p: &LoccProtocol) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    out.set_item("input_a", ket1_to(&p.input_a))?;
    out.set_item("input_b", ket1_to(&p.input_b))?;
    out.set_item("basis_a", p.basis_a.iter().map(ket1_to).collect::<Vec<_>>())?;
    out.set_item("basis_b", p.basis_b.iter().map(ket1_to).collect::<Vec<_>>())?;
    out.set_item("accept", p.accept)?;
    Ok(out)
}

#[pyfunction]
fn build_locc_protocol<'py>(py: Python<'py>, gate: &Gate) -> PyResult<Bound<'py, PyDict>> {
    let p = disc::build_locc_protocol(&gate.inner).map_err(py_err)?;
    protocol_dict(py, &p)
}

fn parse_strategy(s: &str, p: f64, q: f64) -> PyResult<Strategy> {
    match s {
        "optimal" => Ok(disc::optimal_strategy(p, q)),
        "measure" => Ok(Strategy::Measure),
        "always-noisy" => Ok(Strategy::AlwaysNoisy),
        other => Err(PyValueError::new_err(format!(
            "unknown strategy '{other}' (optimal, measure, always-noisy)"
        ))),
    }
}

/// Shot simulation of the local protocol against the depolarized gate.
#[pyfunction]
#[pyo3(signature = (gate, p, q, shots, seed, strategy = "optimal"))]
fn simulate<'py>(
    py: Python<'py>,
    gate: &Gate,
    p: f64,
    q: f64,
    shots: u64,
    seed: u64,
    strategy: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let strategy = parse_strategy(strategy, p, q)?;
    let u = gate.inner;
    let r = py
        .detach(|| {
            let task = DiscriminationTask::depolarized(u, p, q)?;
            let protocol = disc::build_locc_protocol(&u)?;
            disc::simulate(&task, &protocol, shots, seed, strategy)
        })
        .map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item(
        "counts",
        r.counts.iter().map(|c| c.to_vec()).collect::<Vec<_>>(),
    )?;
    out.set_item("shots", r.shots)?;
    out.set_item("empirical_guess", r.empirical_guess)?;
    out.set_item("ci95", r.ci95)?;
    out.set_item("f1", r.f1)?;
    out.set_item("p_hat", r.p_hat)?;
    out.set_item("p_hat_raw", r.p_hat_raw)?;
    out.set_item("strategy", strategy_name(r.strategy))?;
    out.set_item("seed", r.seed)?;
    Ok(out)
}

fn strategy_name(s: Strategy) -> &'static str {
    match s {
        Strategy::Measure => "measure",
        Strategy::AlwaysNoisy => "always-noisy",
    }
}

#[pyfunction]
fn estimate_noise(f1: f64) -> PyResult<f64> {
    disc::estimate_noise(f1).map_err(py_err)
}

#[pyfunction]
fn locc_vs_global_report<'py>(
    py: Python<'py>,
    gate: &Gate,
    p: f64,
    q: f64,
    shots: u64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let u = gate.inner;
    let r = py
        .detach(|| disc::locc_vs_global_report(&u, p, q, shots, seed))
        .map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("p_global", r.p_global)?;
    out.set_item("p_locc_analytic", r.p_locc_analytic)?;
    out.set_item("p_locc_simulated", r.p_locc_simulated)?;
    out.set_item("ci95", r.ci95)?;
    out.set_item("sigma", r.sigma)?;
    out.set_item("shots", r.shots)?;
    out.set_item("p_hat", r.p_hat)?;
    out.set_item("seed", r.seed)?;
    out.set_item("strategy", strategy_name(r.strategy))?;
    out.set_item("equal", r.equal)?;
    Ok(out)
}

/// Best pure input against the mixed-unitary counterexample channel.
#[pyfunction]
#[pyo3(signature = (p, q = 0.5, seed = 0, restarts = 32))]
fn optimize_counterexample<'py>(
    py: Python<'py>,
    p: f64,
    q: f64,
    seed: u64,
    restarts: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let gate = TwoQubitUnitary::cnot();
    let cfg = OptimizeConfig {
        restarts,
        seed,
        ..OptimizeConfig::default()
    };
    let (r, at_phi) = py
        .detach(|| {
            let ch = counterexample_channel(p)?;
            let r = disc::optimize_input(&gate, &ch, q, &cfg)?;
            let at_phi = disc::guess_for_pure_input(&gate, &ch, q, &Ket2Q::phi_plus());
            Ok::<_, Error>((r, at_phi))
        })
        .map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("p_guess", r.p_guess)?;
    out.set_item("argmax", ket2_to(&r.argmax))?;
    out.set_item("converged", r.converged)?;
    out.set_item("restart_values", r.restart_values)?;
    out.set_item("value_at_phi_plus", at_phi)?;
    out.set_item("claimed_value", 0.5 + 3.0 * p / 8.0)?;
    Ok(out)
}

/// Applies the depolarized channel of `gate` to a 4x4 density matrix.
#[pyfunction]
fn apply_depolarized(
    gate: &Gate,
    p: f64,
    rho: Vec<Vec<Complex64>>,
) -> PyResult<Vec<Vec<Complex64>>> {
    let ch = ChannelSpec::depolarized(gate.inner, p).map_err(py_err)?;
    let rho = DensityMatrix::new(mat4_from(rho)?).map_err(py_err)?;
    let out = apply_channel(&ch, &rho).map_err(py_err)?;
    Ok(mat4_to(out.matrix()))
}

#[pymodule]
fn gatecheck(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Gate>()?;
    m.add_function(wrap_pyfunction!(kak_decompose, m)?)?;
    m.add_function(wrap_pyfunction!(find_product_preserving_state, m)?)?;
    m.add_function(wrap_pyfunction!(closed_form_guess, m)?)?;
    m.add_function(wrap_pyfunction!(helstrom, m)?)?;
    m.add_function(wrap_pyfunction!(build_locc_protocol, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_noise, m)?)?;
    m.add_function(wrap_pyfunction!(locc_vs_global_report, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_counterexample, m)?)?;
    m.add_function(wrap_pyfunction!(apply_depolarized, m)?)?;
    Ok(())
}
