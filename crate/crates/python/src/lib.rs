//! Python module `thermo_diffuse`: matrices, couplings, equilibria, the
//! conditioning interface, the energy chain and the experiment runners.
//!
//! Matrices cross the boundary as lists of rows. Reports come back as JSON
//! text matching `REPORT_SCHEMA`.

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use thermo_diffuse_core::conditioning::{
    self as cond, BiasPair, ConditioningInterface, EncoderKind, InitScheme, TrainConfig,
};
use thermo_diffuse_core::data_io;
use thermo_diffuse_core::harness::{self, EnergyModel, HarnessConfig};
use thermo_diffuse_core::substrate::{self, CouplingMatrix, SubstrateConfig};
use thermo_diffuse_core::{Error, Matrix};

fn err(e: Error) -> PyErr {
    if e.is_numerical() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn to_matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(PyValueError::new_err("ragged matrix rows"));
    }
    Matrix::from_vec(r, c, rows.concat()).map_err(err)
}

fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

fn coupling(j: Vec<Vec<f64>>) -> PyResult<CouplingMatrix> {
    let j = to_matrix(j)?;
    if !j.is_square() {
        return Err(PyValueError::new_err("coupling matrix must be square"));
    }
    Ok(CouplingMatrix { j })
}

/// Python dict to a serde value through the `json` module.
fn from_dict<T: serde::de::DeserializeOwned + Default>(
    py: Python<'_>,
    d: Option<&Bound<'_, PyDict>>,
) -> PyResult<T> {
    let Some(d) = d else { return Ok(T::default()) };
    let text: String = py.import("json")?.call_method1("dumps", (d,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn parse_kind(kind: &str) -> PyResult<EncoderKind> {
    match kind {
        "linear" => Ok(EncoderKind::Linear),
        "mlp" => Ok(EncoderKind::Mlp),
        other => Err(PyValueError::new_err(format!("encoder must be 'linear' or 'mlp', got {other:?}"))),
    }
}

/// A dense row-major matrix.
#[pyclass(name = "Matrix", module = "thermo_diffuse", from_py_object)]
#[derive(Clone)]
struct PyMatrix {
    inner: Matrix,
}

#[pymethods]
impl PyMatrix {
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self { inner: to_matrix(rows)? })
    }

    #[staticmethod]
    fn identity(n: usize) -> Self {
        Self { inner: Matrix::identity(n) }
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.rows(), self.inner.cols())
    }

    fn to_list(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner)
    }

    fn matmul(&self, other: &PyMatrix) -> PyResult<PyMatrix> {
        Ok(Self { inner: self.inner.matmul(&other.inner).map_err(err)? })
    }

    fn matvec(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.matvec(&x).map_err(err)
    }

    fn transpose(&self) -> PyMatrix {
        Self { inner: self.inner.transpose() }
    }

    fn frobenius_norm(&self) -> f64 {
        self.inner.frobenius_norm()
    }

    /// `(u, sigma, v)` with `self = u·diag(sigma)·vᵀ`.
    fn svd(&self) -> PyResult<(PyMatrix, Vec<f64>, PyMatrix)> {
        let s = thermo_diffuse_core::linalg::svd(&self.inner).map_err(err)?;
        Ok((Self { inner: s.u }, s.sigma, Self { inner: s.v }))
    }

    /// Eigenvalues (non-increasing) and eigenvectors as columns.
    fn sym_eig(&self) -> PyResult<(Vec<f64>, PyMatrix)> {
        let e = thermo_diffuse_core::linalg::sym_eig(&self.inner).map_err(err)?;
        Ok((e.values, Self { inner: e.vectors }))
    }

    fn solve_spd(&self, b: Vec<f64>) -> PyResult<Vec<f64>> {
        thermo_diffuse_core::linalg::solve_spd(&self.inner, &b).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Matrix({}x{})", self.inner.rows(), self.inner.cols())
    }

    fn __eq__(&self, other: &PyMatrix) -> bool {
        self.inner == other.inner
    }
}

/// `WᵀW / (4·kbt)` as a list of rows.
#[pyfunction]
#[pyo3(signature = (w, kbt = 1.0, j2 = 0.1))]
fn gram_coupling(w: Vec<Vec<f64>>, kbt: f64, j2: f64) -> PyResult<Vec<Vec<f64>>> {
    let w = to_matrix(w)?;
    let cfg = SubstrateConfig::new(w.cols(), kbt, j2, 0.0).map_err(err)?;
    Ok(to_rows(&substrate::gram_coupling(&w, &cfg).map_err(err)?.j))
}

/// Dense rank-`rank` skip coupling between two Gram couplings.
#[pyfunction]
#[pyo3(signature = (j_enc, j_dec, rank, kbt = 1.0))]
fn skip_coupling(j_enc: Vec<Vec<f64>>, j_dec: Vec<Vec<f64>>, rank: usize, kbt: f64) -> PyResult<Vec<Vec<f64>>> {
    let (je, jd) = (coupling(j_enc)?, coupling(j_dec)?);
    let cfg = SubstrateConfig::new(je.dim(), kbt, 0.1, 0.0).map_err(err)?;
    Ok(to_rows(&substrate::skip_coupling(&je, &jd, rank, &cfg).map_err(err)?.dense))
}

/// Exact equilibrium `(x*, y*)` of the coupled block system.
#[pyfunction]
#[pyo3(signature = (j_enc, j_dec, b_enc, b_dec, rank = None, kbt = 1.0, j2 = 0.1))]
fn solve_equilibrium(
    j_enc: Vec<Vec<f64>>,
    j_dec: Vec<Vec<f64>>,
    b_enc: Vec<f64>,
    b_dec: Vec<f64>,
    rank: Option<usize>,
    kbt: f64,
    j2: f64,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let (je, jd) = (coupling(j_enc)?, coupling(j_dec)?);
    let cfg = SubstrateConfig::new(je.dim(), kbt, j2, 0.0).map_err(err)?;
    let skip = rank
        .map(|k| substrate::skip_coupling(&je, &jd, k, &cfg))
        .transpose()
        .map_err(err)?;
    let sys = substrate::assemble_block(&je, &jd, skip.as_ref(), &b_enc, &b_dec, &cfg).map_err(err)?;
    substrate::validate_pd(&sys).map_err(err)?;
    let eq = substrate::solve_equilibrium(&sys).map_err(err)?;
    Ok((eq.x_star, eq.y_star))
}

/// Relative decoder shift from a rank-`rank` skip coupling over target
/// pairs `[(x, y), ...]`: `(mean_rho, cv, per_sample)`.
#[pyfunction]
#[pyo3(signature = (j_enc, j_dec, rank, targets, kbt = 1.0, j2 = 0.1))]
fn rho_skip(
    j_enc: Vec<Vec<f64>>,
    j_dec: Vec<Vec<f64>>,
    rank: usize,
    targets: Vec<(Vec<f64>, Vec<f64>)>,
    kbt: f64,
    j2: f64,
) -> PyResult<(f64, f64, Vec<f64>)> {
    let (je, jd) = (coupling(j_enc)?, coupling(j_dec)?);
    let cfg = SubstrateConfig::new(je.dim(), kbt, j2, 0.0).map_err(err)?;
    let skip = substrate::skip_coupling(&je, &jd, rank, &cfg).map_err(err)?;
    let r = substrate::rho_skip(&je, &jd, Some(&skip), &targets, &cfg).map_err(err)?;
    Ok((r.mean_rho, r.cv, r.per_sample))
}

#[pyfunction]
#[pyo3(signature = (rank, dim, use_bias = false))]
fn count_parameters(rank: usize, dim: usize, use_bias: bool) -> usize {
    cond::count_parameters(rank, dim, use_bias)
}

/// Energy chain `(e_thermo, raw_gain, derated_gain, net_gain)`; keyword
/// arguments override `EnergyModel` fields.
#[pyfunction]
#[pyo3(signature = (**overrides))]
fn energy_chain(py: Python<'_>, overrides: Option<&Bound<'_, PyDict>>) -> PyResult<(f64, f64, f64, f64)> {
    let model: EnergyModel = from_dict(py, overrides)?;
    let c = harness::energy_chain(&model).map_err(err)?;
    Ok((c.e_thermo, c.raw_gain, c.derated_gain, c.net_gain))
}

/// Trained conditioning interface.
#[pyclass(name = "Interface", module = "thermo_diffuse", skip_from_py_object)]
struct PyInterface {
    inner: ConditioningInterface,
}

#[pymethods]
impl PyInterface {
    /// `(b_enc, b_dec)` for one encoder activation.
    fn forward(&self, x: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let b = self.inner.forward(&x).map_err(err)?;
        Ok((b.b_enc, b.b_dec))
    }

    fn encode(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.encode(&x).map_err(err)
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.inner.parameter_count()
    }

    #[getter]
    fn rank(&self) -> usize {
        self.inner.rank
    }

    fn parameters(&self) -> Vec<f64> {
        self.inner.parameters()
    }

    fn __repr__(&self) -> String {
        format!(
            "Interface(kind={:?}, rank={}, dim={}, parameters={})",
            self.inner.kind,
            self.inner.rank,
            self.inner.dim(),
            self.inner.parameter_count()
        )
    }
}

/// Full-batch training against oracle biases. Returns the interface and
/// its loss history.
#[pyfunction]
#[pyo3(signature = (
    x_enc, b_enc, b_dec, rank = 4, encoder = "linear", seed = 1, init = "spectral",
    learning_rate = 0.05, max_iterations = 5000, use_bias = false
))]
#[allow(clippy::too_many_arguments)]
fn train_interface(
    x_enc: Vec<Vec<f64>>,
    b_enc: Vec<Vec<f64>>,
    b_dec: Vec<Vec<f64>>,
    rank: usize,
    encoder: &str,
    seed: u64,
    init: &str,
    learning_rate: f64,
    max_iterations: usize,
    use_bias: bool,
) -> PyResult<(PyInterface, Vec<f64>)> {
    if x_enc.len() != b_enc.len() || x_enc.len() != b_dec.len() {
        return Err(PyValueError::new_err("x_enc, b_enc and b_dec need the same length"));
    }
    let pairs: Vec<_> = x_enc
        .into_iter()
        .zip(b_enc.into_iter().zip(b_dec))
        .map(|(x, (e, d))| (x, BiasPair { b_enc: e, b_dec: d }))
        .collect();
    let init = match init {
        "spectral" => InitScheme::Spectral,
        "random" => InitScheme::Random,
        other => return Err(PyValueError::new_err(format!("init must be 'spectral' or 'random', got {other:?}"))),
    };
    let cfg = TrainConfig {
        use_bias,
        init,
        learning_rate,
        max_iterations,
        ..TrainConfig::new(parse_kind(encoder)?, rank, seed)
    };
    let out = cond::train_interface(&pairs, &cfg).map_err(err)?;
    Ok((PyInterface { inner: out.interface }, out.loss_history))
}

/// Runs one experiment and returns its report as JSON text.
///
/// `config` holds harness settings (`dim`, `seed`, `samples`, `j2`, `kbt`,
/// `j4`, `lambda_max`, `manifest`, `parallel`); `options` the experiment's own.
#[pyfunction]
#[pyo3(signature = (name, config = None, options = None))]
fn run_experiment(
    py: Python<'_>,
    name: &str,
    config: Option<&Bound<'_, PyDict>>,
    options: Option<&Bound<'_, PyDict>>,
) -> PyResult<String> {
    let h: HarnessConfig = from_dict(py, config)?;
    let report = match name {
        "skip-sweep" => harness::run_experiment_a(&h, &from_dict(py, options)?),
        "deficit" => harness::run_deficit(&h, &from_dict(py, options)?),
        "train-interface" => harness::run_experiment_b(&h, &from_dict(py, options)?),
        "production-test" => harness::run_experiment_c(&h, &from_dict(py, options)?).map(|r| r.0),
        "langevin-check" => harness::run_langevin_check(&h, &from_dict(py, options)?),
        "energy" => harness::run_energy(&from_dict(py, options)?),
        other => return Err(PyValueError::new_err(format!("unknown experiment {other:?}"))),
    }
    .map_err(err)?;
    report.to_json().map_err(err)
}

#[pyfunction]
fn read_matrix(path: &str) -> PyResult<PyMatrix> {
    Ok(PyMatrix { inner: data_io::read_matrix(path).map_err(err)? })
}

#[pyfunction]
fn write_matrix(m: &PyMatrix, path: &str) -> PyResult<()> {
    data_io::write_matrix(&m.inner, path).map_err(err)
}

#[pymodule]
fn thermo_diffuse(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMatrix>()?;
    m.add_class::<PyInterface>()?;
    m.add_function(wrap_pyfunction!(gram_coupling, m)?)?;
    m.add_function(wrap_pyfunction!(skip_coupling, m)?)?;
    m.add_function(wrap_pyfunction!(solve_equilibrium, m)?)?;
    m.add_function(wrap_pyfunction!(rho_skip, m)?)?;
    m.add_function(wrap_pyfunction!(count_parameters, m)?)?;
    m.add_function(wrap_pyfunction!(energy_chain, m)?)?;
    m.add_function(wrap_pyfunction!(train_interface, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(read_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(write_matrix, m)?)?;
    m.add("REPORT_SCHEMA", harness::REPORT_SCHEMA)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
