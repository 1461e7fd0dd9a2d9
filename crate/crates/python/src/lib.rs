//! Python bindings for `neurop-core`.
//!
//! Grid functions cross the boundary as lists of floats. Validation errors
//! raise `ValueError`; numerical failures raise `neurop.NumericalError`.

use neurop_core::capacity::{self, CountKind};
use neurop_core::fixed_point;
use neurop_core::multiscale::{self, MultiScalePlan, Strategy};
use neurop_core::operator_net::{self as net, Activation};
use neurop_core::parallel_bench::{self, AmdahlModel, SpeedupLimit};
use neurop_core::training::{self, AntiderivativeTask, GenBoundInput, TrainConfig};
use neurop_core::transforms::WaveletFamily;
use neurop_core::{Error, Vector};
use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

create_exception!(neurop, NumericalError, PyRuntimeError);

fn to_py(e: Error) -> PyErr {
    if e.is_numerical() {
        NumericalError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn vector(values: Vec<f64>) -> PyResult<Vector> {
    Vector::new(values).map_err(to_py)
}

fn activation(name: &str) -> PyResult<Activation> {
    match name {
        "relu" => Ok(Activation::Relu),
        "tanh" => Ok(Activation::Tanh),
        "sigmoid" => Ok(Activation::Sigmoid),
        "identity" => Ok(Activation::Identity),
        _ => Err(PyValueError::new_err(format!("unknown activation {name:?}"))),
    }
}

fn family(name: &str) -> PyResult<WaveletFamily> {
    match name {
        "haar" => Ok(WaveletFamily::Haar),
        "d4" | "daubechies4" => Ok(WaveletFamily::Daubechies4),
        _ => Err(PyValueError::new_err(format!("unknown wavelet family {name:?}"))),
    }
}

fn strategy(name: &str) -> PyResult<Strategy> {
    match name {
        "fourier_only" => Ok(Strategy::FourierOnly),
        "wavelet_only" => Ok(Strategy::WaveletOnly),
        "combined" => Ok(Strategy::Combined),
        _ => Err(PyValueError::new_err(format!("unknown strategy {name:?}"))),
    }
}

/// Layered operator network acting on grid functions.
#[pyclass(name = "OperatorNet", module = "neurop", frozen)]
pub struct PyOperatorNet {
    inner: net::OperatorNet,
}

#[pymethods]
impl PyOperatorNet {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyOperatorNet { inner: net::OperatorNet::from_json(text).map_err(to_py)? })
    }

    /// Dense net with uniform weights scaled by `gain`, seeded.
    #[staticmethod]
    #[pyo3(signature = (widths, hidden="tanh", last="identity", gain=1.0, bias_scale=0.1, seed=0))]
    fn random_dense(widths: Vec<usize>, hidden: &str, last: &str, gain: f64, bias_scale: f64, seed: u64) -> PyResult<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inner = net::random_dense_net(&widths, activation(hidden)?, activation(last)?, gain, bias_scale, &mut rng)
            .map_err(to_py)?;
        Ok(PyOperatorNet { inner })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn forward(&self, u: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.forward(&vector(u)?).map_err(to_py)?.into_inner())
    }

    fn certify_lipschitz(&self) -> PyResult<PyCertificate> {
        let c = self.inner.certify_lipschitz().map_err(to_py)?;
        Ok(PyCertificate {
            per_layer_lipschitz: c.per_layer_lipschitz.clone(),
            activation_lipschitz: c.activation_lipschitz.clone(),
            bound: c.bound,
            is_contraction: c.is_contraction(),
        })
    }

    fn normalize_to_contraction(&self, q: f64) -> PyResult<Self> {
        Ok(PyOperatorNet { inner: self.inner.normalize_to_contraction(q).map_err(to_py)? })
    }

    #[getter]
    fn input_dim(&self) -> Option<usize> {
        self.inner.input_dim()
    }

    #[getter]
    fn depth(&self) -> usize {
        self.inner.depth()
    }

    fn __repr__(&self) -> String {
        format!("OperatorNet(depth={}, input_dim={:?})", self.inner.depth(), self.inner.input_dim())
    }
}

#[pyclass(name = "ContractionCertificate", module = "neurop", frozen, get_all)]
pub struct PyCertificate {
    per_layer_lipschitz: Vec<f64>,
    activation_lipschitz: Vec<f64>,
    bound: f64,
    is_contraction: bool,
}

#[pyclass(name = "FixedPointReport", module = "neurop", frozen, get_all)]
pub struct PyFixedPointReport {
    iterations_run: usize,
    error_trace: Vec<f64>,
    empirical_q: f64,
    predicted_n: usize,
    certified_q: f64,
    fixed_point: Vec<f64>,
}

#[pyfunction]
#[pyo3(signature = (net, u0, eps=1e-6, max_iter=100_000))]
fn iterate_to_fixed_point(net: &PyOperatorNet, u0: Vec<f64>, eps: f64, max_iter: usize) -> PyResult<PyFixedPointReport> {
    let r = fixed_point::iterate_to_fixed_point(&net.inner, &vector(u0)?, eps, max_iter).map_err(to_py)?;
    Ok(PyFixedPointReport {
        iterations_run: r.iterations_run,
        error_trace: r.error_trace,
        empirical_q: r.empirical_q,
        predicted_n: r.predicted_n,
        certified_q: r.certified_q,
        fixed_point: r.fixed_point.into_inner(),
    })
}

#[pyfunction]
fn predict_iterations(initial_error: f64, eps: f64, q: f64) -> PyResult<usize> {
    fixed_point::predict_iterations(initial_error, eps, q).map_err(to_py)
}

/// Best approximation of `f` with `budget` terms; returns `(recon, report)`.
#[pyfunction]
#[pyo3(signature = (f, budget, strategy="combined", family="d4"))]
fn approximate<'py>(
    py: Python<'py>,
    f: Vec<f64>,
    budget: usize,
    strategy: &str,
    family: &str,
) -> PyResult<(Vec<f64>, Bound<'py, PyDict>)> {
    let f = vector(f)?;
    let plan = MultiScalePlan::full(f.len(), budget, self::family(family)?);
    let (recon, r) = multiscale::approximate(&f, &plan, self::strategy(strategy)?).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("l2_error", r.l2_error)?;
    d.set_item("fourier_terms", r.fourier_terms)?;
    d.set_item("wavelet_terms", r.wavelet_terms)?;
    d.set_item("decay_exponent_fourier", r.decay_exponent_fourier)?;
    d.set_item("decay_exponent_wavelet", r.decay_exponent_wavelet)?;
    Ok((recon.into_inner(), d))
}

#[pyfunction]
fn smooth_plus_spike(n: usize, center: f64, width_cells: f64, amp: f64) -> PyResult<Vec<f64>> {
    Ok(multiscale::smooth_plus_spike(n, center, width_cells, amp).map_err(to_py)?.into_inner())
}

#[pyfunction]
fn decay_exponent(magnitudes: Vec<f64>) -> PyResult<f64> {
    multiscale::decay_exponent(&magnitudes).map_err(to_py)
}

#[pyfunction]
fn montufar_lower_bound(input_dim: usize, width: usize, depth: usize) -> PyResult<u128> {
    capacity::montufar_lower_bound(input_dim, width, depth).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (width, depth, perturbation=1e-6, seed=0))]
fn sawtooth_net(width: usize, depth: usize, perturbation: f64, seed: u64) -> PyResult<PyOperatorNet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(PyOperatorNet { inner: capacity::sawtooth_net(width, depth, perturbation, &mut rng).map_err(to_py)? })
}

/// Linear regions of a scalar-input ReLU net on `[a, b]`; returns
/// `(count, exact)`.
#[pyfunction]
#[pyo3(signature = (net, a=0.0, b=1.0, max_breakpoints=1_000_000))]
fn count_regions_1d(net: &PyOperatorNet, a: f64, b: f64, max_breakpoints: usize) -> PyResult<(u64, bool)> {
    let c = capacity::count_regions_1d(&net.inner, a, b, max_breakpoints).map_err(to_py)?;
    Ok((c.count, c.kind == CountKind::Exact))
}

#[pyfunction]
fn amdahl_speedup(p: f64, n: f64) -> PyResult<f64> {
    Ok(parallel_bench::amdahl_speedup(&AmdahlModel::new(p, n).map_err(to_py)?))
}

/// `1 / (1 − p)`, or `inf` at `p = 1`.
#[pyfunction]
fn amdahl_limit(p: f64) -> PyResult<f64> {
    Ok(match parallel_bench::amdahl_limit(p).map_err(to_py)? {
        SpeedupLimit::Bounded(v) => v,
        SpeedupLimit::Unbounded => f64::INFINITY,
    })
}

#[pyfunction]
fn generalization_bound(lipschitz_l: f64, delta: f64, n_samples: usize, empirical_risk: f64) -> PyResult<f64> {
    training::generalization_bound(&GenBoundInput { lipschitz_l, delta, n_samples, empirical_risk }).map_err(to_py)
}

/// Trains on the antiderivative task and returns the loss curves.
#[pyfunction]
#[pyo3(signature = (widths, epochs=100, learning_rate=0.1, lambda_wd=0.0, dropout_p=0.0, batch_size=50, seed=0, renormalize_q=None, n_train=200, n_test=200))]
#[allow(clippy::too_many_arguments)]
fn train_antiderivative<'py>(
    py: Python<'py>,
    widths: Vec<usize>,
    epochs: usize,
    learning_rate: f64,
    lambda_wd: f64,
    dropout_p: f64,
    batch_size: usize,
    seed: u64,
    renormalize_q: Option<f64>,
    n_train: usize,
    n_test: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let task = AntiderivativeTask { n_train, n_test, ..AntiderivativeTask::default() };
    let cfg = TrainConfig { epochs, learning_rate, lambda_wd, dropout_p, batch_size, seed, renormalize_q };
    let r = training::run_experiment(&task, &widths, &cfg).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("train_loss_curve", r.train_loss_curve)?;
    d.set_item("test_loss_curve", r.test_loss_curve)?;
    d.set_item("final_gap", r.final_gap)?;
    d.set_item("cert_bounds", r.cert_bounds)?;
    Ok(d)
}

#[pymodule]
fn neurop(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    m.add_class::<PyOperatorNet>()?;
    m.add_class::<PyCertificate>()?;
    m.add_class::<PyFixedPointReport>()?;
    m.add_function(wrap_pyfunction!(iterate_to_fixed_point, m)?)?;
    m.add_function(wrap_pyfunction!(predict_iterations, m)?)?;
    m.add_function(wrap_pyfunction!(approximate, m)?)?;
    m.add_function(wrap_pyfunction!(smooth_plus_spike, m)?)?;
    m.add_function(wrap_pyfunction!(decay_exponent, m)?)?;
    m.add_function(wrap_pyfunction!(montufar_lower_bound, m)?)?;
    m.add_function(wrap_pyfunction!(sawtooth_net, m)?)?;
    m.add_function(wrap_pyfunction!(count_regions_1d, m)?)?;
    m.add_function(wrap_pyfunction!(amdahl_speedup, m)?)?;
    m.add_function(wrap_pyfunction!(amdahl_limit, m)?)?;
    m.add_function(wrap_pyfunction!(generalization_bound, m)?)?;
    m.add_function(wrap_pyfunction!(train_antiderivative, m)?)?;
    Ok(())
}
