//! Python module `pycvtool`.
//!
//! Matrices cross the boundary as nested lists (rows) of Python numbers or
//! complex numbers; states and vectors as flat lists.

use cvtool_core::averaging::{self, ConditionedSetup};
use cvtool_core::error::CvError as CoreError;
use cvtool_core::montecarlo::{self, RunConfig};
use cvtool_core::operator::{self, ComplexMatrix, DensityOperator, MeasurementContext, Observable, DEFAULT_TOL};
use cvtool_core::scenarios::{self, detector, polarization, qpc, DetectorModel, PointerDistribution};
use cvtool_core::solver::{self, SolveMode, SolverOptions};
use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

create_exception!(pycvtool, CvError, PyValueError, "Raised for any failed contextual-value computation.");

type Rows = Vec<Vec<Complex64>>;

fn err(e: CoreError) -> PyErr {
    CvError::new_err(e.to_string())
}

fn to_matrix(rows: Rows) -> PyResult<ComplexMatrix> {
    ComplexMatrix::from_rows(&rows).map_err(err)
}

fn to_rows(m: &ComplexMatrix) -> Rows {
    m.rows()
}

fn distribution(shape: &str, sigma: f64) -> PyResult<PointerDistribution> {
    match shape {
        "gaussian" => PointerDistribution::gaussian(sigma).map_err(err),
        "box" => PointerDistribution::box_matching_sigma(sigma).map_err(err),
        other => Err(PyValueError::new_err(format!(
            "unknown pointer shape `{other}`; expected `gaussian` or `box`"
        ))),
    }
}

#[pyclass(name = "Observable", module = "pycvtool", frozen)]
struct PyObservable(Observable);

#[pymethods]
impl PyObservable {
    #[new]
    fn new(matrix: Rows) -> PyResult<Self> {
        Ok(Self(Observable::new(to_matrix(matrix)?).map_err(err)?))
    }

    #[staticmethod]
    fn pauli_z() -> Self {
        Self(Observable::pauli_z())
    }

    /// Distinct eigenvalues, descending.
    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.0.eigenvalues().to_vec()
    }

    fn matrix(&self) -> Rows {
        to_rows(self.0.matrix())
    }
}

#[pyclass(name = "DensityOperator", module = "pycvtool", frozen)]
struct PyDensity(DensityOperator);

#[pymethods]
impl PyDensity {
    #[new]
    #[pyo3(signature = (matrix, tol = DEFAULT_TOL))]
    fn new(matrix: Rows, tol: f64) -> PyResult<Self> {
        Ok(Self(DensityOperator::with_tol(to_matrix(matrix)?, tol).map_err(err)?))
    }

    /// Projector onto a (not necessarily normalized) vector.
    #[staticmethod]
    fn pure(vector: Vec<Complex64>) -> PyResult<Self> {
        Ok(Self(DensityOperator::pure(&vector).map_err(err)?))
    }

    /// `(cos(alpha/2), sin(alpha/2))`.
    #[staticmethod]
    fn psi(alpha: f64) -> Self {
        Self(DensityOperator::pure(&operator::psi(alpha)).expect("unit vector"))
    }

    fn matrix(&self) -> Rows {
        to_rows(self.0.matrix())
    }

    fn expectation(&self, operator: Rows) -> PyResult<f64> {
        let m = to_matrix(operator)?;
        if m.dim() != self.0.dim() {
            return Err(err(CoreError::DimensionMismatch {
                expected: self.0.dim(),
                found: m.dim(),
            }));
        }
        Ok(self.0.expectation(&m))
    }
}

#[pyclass(name = "MeasurementContext", module = "pycvtool", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyContext(MeasurementContext);

#[pymethods]
impl PyContext {
    #[staticmethod]
    #[pyo3(signature = (kraus, tol = DEFAULT_TOL))]
    fn from_kraus(kraus: Vec<Rows>, tol: f64) -> PyResult<Self> {
        let ops = kraus.into_iter().map(to_matrix).collect::<PyResult<_>>()?;
        Ok(Self(MeasurementContext::from_kraus(ops, tol).map_err(err)?))
    }

    /// Kraus operators are the PSD square roots of the effects.
    #[staticmethod]
    #[pyo3(signature = (effects, tol = DEFAULT_TOL))]
    fn from_povm(effects: Vec<Rows>, tol: f64) -> PyResult<Self> {
        let ops = effects.into_iter().map(to_matrix).collect::<PyResult<_>>()?;
        Ok(Self(MeasurementContext::from_povm(ops, tol).map_err(err)?))
    }

    #[staticmethod]
    fn computational(dim: usize) -> Self {
        Self(MeasurementContext::computational(dim))
    }

    /// Two outcomes: onto `vector`, then its complement.
    #[staticmethod]
    fn projective_onto(vector: Vec<Complex64>) -> PyResult<Self> {
        Ok(Self(MeasurementContext::projective_onto(&vector).map_err(err)?))
    }

    #[staticmethod]
    fn polarization(gamma: f64) -> PyResult<Self> {
        Ok(Self(polarization::polarization_context(gamma).map_err(err)?))
    }

    /// Rotation `exp(-i theta sigma_x / 2)` followed by a z measurement.
    #[staticmethod]
    fn rotated_z(theta: f64) -> Self {
        Self(qpc::rotated_postselection(theta))
    }

    fn kraus(&self) -> Vec<Rows> {
        self.0.kraus().iter().map(to_rows).collect()
    }

    fn povm(&self) -> Vec<Rows> {
        self.0.povm().iter().map(to_rows).collect()
    }

    fn probabilities(&self, state: PyRef<'_, PyDensity>) -> PyResult<Vec<f64>> {
        operator::outcome_probabilities(&self.0, &state.0).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

/// Minimum-norm contextual values and the data certifying them.
#[pyclass(name = "Solution", module = "pycvtool", frozen, get_all)]
struct PySolution {
    alpha0: Vec<f64>,
    residual: f64,
    singular_values: Vec<f64>,
    rank: usize,
    null_dim: usize,
    exact: bool,
    /// `"commuting"` or `"general"`.
    mode: &'static str,
}

#[pymethods]
impl PySolution {
    fn __repr__(&self) -> String {
        format!(
            "Solution(alpha0={:?}, exact={}, null_dim={}, residual={:e}, mode={:?})",
            self.alpha0, self.exact, self.null_dim, self.residual, self.mode
        )
    }
}

fn setup(first: &PyContext, cv: Vec<f64>, second: &PyContext, postselect: usize) -> PyResult<ConditionedSetup> {
    ConditionedSetup::new(first.0.clone(), cv, second.0.clone(), postselect).map_err(err)
}

/// Solver report; never raises for an inexact solution (check `exact`).
#[pyfunction]
#[pyo3(signature = (observable, context, svd_tol = solver::DEFAULT_SVD_TOL))]
fn solve(observable: PyRef<'_, PyObservable>, context: PyRef<'_, PyContext>, svd_tol: f64) -> PyResult<PySolution> {
    let sol =
        solver::solve_contextual_values(&observable.0, &context.0, &SolverOptions::with_svd_tol(svd_tol)).map_err(err)?;
    Ok(PySolution {
        null_dim: sol.null_dim(),
        mode: match sol.mode {
            SolveMode::CommutingF => "commuting",
            SolveMode::GeneralOperatorSpace => "general",
        },
        alpha0: sol.alpha0,
        residual: sol.residual,
        singular_values: sol.singular_values,
        rank: sol.rank,
        exact: sol.exact,
    })
}

/// Exact contextual values; raises `CvError` when the observable is not
/// reconstructable.
#[pyfunction]
fn contextual_values(observable: PyRef<'_, PyObservable>, context: PyRef<'_, PyContext>) -> PyResult<Vec<f64>> {
    solver::contextual_values(&observable.0, &context.0).map_err(err)
}

#[pyfunction]
fn average(cv: Vec<f64>, context: PyRef<'_, PyContext>, state: PyRef<'_, PyDensity>) -> PyResult<f64> {
    averaging::reconstructed_average(&cv, &context.0, &state.0).map_err(err)
}

#[pyfunction]
fn moment(cv: Vec<f64>, context: PyRef<'_, PyContext>, state: PyRef<'_, PyDensity>, n: u32) -> PyResult<f64> {
    averaging::moment(&cv, &context.0, &state.0, n).map_err(err)
}

#[pyfunction]
fn conditioned_average(
    first: PyRef<'_, PyContext>,
    cv: Vec<f64>,
    second: PyRef<'_, PyContext>,
    postselect: usize,
    state: PyRef<'_, PyDensity>,
) -> PyResult<f64> {
    averaging::conditioned_average(&setup(&first, cv, &second, postselect)?, &state.0).map_err(err)
}

/// `Tr[E_f {A, rho}] / 2 Tr[E_f rho]`.
#[pyfunction]
fn weak_value(observable: PyRef<'_, PyObservable>, effect: Rows, state: PyRef<'_, PyDensity>) -> PyResult<f64> {
    averaging::weak_value(&observable.0, &to_matrix(effect)?, &state.0).map_err(err)
}

/// `(estimate, stderr)`.
#[pyfunction]
#[pyo3(signature = (cv, context, state, trials, seed = 0))]
fn empirical_average(
    py: Python<'_>,
    cv: Vec<f64>,
    context: PyRef<'_, PyContext>,
    state: PyRef<'_, PyDensity>,
    trials: u64,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let cfg = RunConfig::new(trials, seed).map_err(err)?;
    let (ctx, rho) = (context.0.clone(), state.0.clone());
    let r = py
        .detach(|| montecarlo::empirical_average(&cv, &ctx, &rho, &cfg))
        .map_err(err)?;
    Ok((r.estimate, r.stderr))
}

/// `(estimate, stderr, postselection_rate)`.
#[pyfunction]
#[pyo3(signature = (first, cv, second, postselect, state, trials, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn empirical_conditioned_average(
    py: Python<'_>,
    first: PyRef<'_, PyContext>,
    cv: Vec<f64>,
    second: PyRef<'_, PyContext>,
    postselect: usize,
    state: PyRef<'_, PyDensity>,
    trials: u64,
    seed: u64,
) -> PyResult<(f64, f64, f64)> {
    let cfg = RunConfig::new(trials, seed).map_err(err)?;
    let s = setup(&first, cv, &second, postselect)?;
    let rho = state.0.clone();
    let r = py
        .detach(|| montecarlo::empirical_conditioned_average(&s, &rho, &cfg))
        .map_err(err)?;
    Ok((r.estimate, r.stderr, r.postselection_rate.unwrap_or(0.0)))
}

#[pyfunction]
fn polarization_conditioned_oracle(alpha: Complex64, beta: Complex64, gamma: f64) -> PyResult<f64> {
    polarization::polarization_conditioned_oracle(alpha, beta, gamma).map_err(err)
}

#[pyfunction]
fn gaussian_cv(q: f64, g: f64, sigma: f64) -> f64 {
    detector::gaussian_cv(q, g, sigma)
}

#[pyfunction]
#[pyo3(signature = (q, g, sigma, shape = "gaussian"))]
fn pointer_cv(q: f64, g: f64, sigma: f64, shape: &str) -> PyResult<f64> {
    detector::pointer_cv(&distribution(shape, sigma)?, g, q).map_err(err)
}

/// Closed form for preparation `psi(alpha)` and postselection `f(pi/2)`.
#[pyfunction]
#[pyo3(signature = (alpha, g, sigma, shape = "gaussian"))]
fn pointer_conditioned_oracle(alpha: f64, g: f64, sigma: f64, shape: &str) -> PyResult<f64> {
    detector::pointer_conditioned_oracle(&distribution(shape, sigma)?, alpha, g).map_err(err)
}

/// The same quantity from the discretized detector.
#[pyfunction]
#[pyo3(signature = (alpha, g, sigma, shape = "gaussian"))]
fn pointer_conditioned_average(py: Python<'_>, alpha: f64, g: f64, sigma: f64, shape: &str) -> PyResult<f64> {
    let dist = distribution(shape, sigma)?;
    py.detach(|| {
        let model = DetectorModel::with_default_grid(dist, g)?;
        scenarios::pointer_conditioned_average(&model, alpha)
    })
    .map_err(err)
}

#[pyfunction]
fn qpc_cv(u: f64, tau: f64) -> PyResult<f64> {
    qpc::qpc_cv(u, tau).map_err(err)
}

#[pyfunction]
fn qpc_conditioned_oracle(state: PyRef<'_, PyDensity>, theta: f64, tau: f64) -> PyResult<f64> {
    qpc::qpc_conditioned_oracle(&state.0, theta, tau).map_err(err)
}

/// Full discretized QPC pipeline at dimensionless time `tau`.
#[pyfunction]
fn qpc_conditioned_average(py: Python<'_>, state: PyRef<'_, PyDensity>, theta: f64, tau: f64) -> PyResult<f64> {
    let rho = state.0.clone();
    py.detach(|| qpc::qpc_full_pipeline(&qpc::QpcParams::from_tau(tau)?, &rho, theta))
        .map_err(err)
}

#[pymodule]
fn pycvtool(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("CvError", m.py().get_type::<CvError>())?;
    m.add_class::<PyObservable>()?;
    m.add_class::<PyDensity>()?;
    m.add_class::<PyContext>()?;
    m.add_class::<PySolution>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(contextual_values, m)?)?;
    m.add_function(wrap_pyfunction!(average, m)?)?;
    m.add_function(wrap_pyfunction!(moment, m)?)?;
    m.add_function(wrap_pyfunction!(conditioned_average, m)?)?;
    m.add_function(wrap_pyfunction!(weak_value, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_average, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_conditioned_average, m)?)?;
    m.add_function(wrap_pyfunction!(polarization_conditioned_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_cv, m)?)?;
    m.add_function(wrap_pyfunction!(pointer_cv, m)?)?;
    m.add_function(wrap_pyfunction!(pointer_conditioned_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(pointer_conditioned_average, m)?)?;
    m.add_function(wrap_pyfunction!(qpc_cv, m)?)?;
    m.add_function(wrap_pyfunction!(qpc_conditioned_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(qpc_conditioned_average, m)?)?;
    Ok(())
}
