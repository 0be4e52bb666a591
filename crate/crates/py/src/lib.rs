//! Python bindings: `import pypmcert`.

use pyo3::exceptions::{PyOSError, PyOverflowError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use pmcert::certify;
use pmcert::gilbert::{run_gilbert, GilbertConfig};
use pmcert::gisin;
use pmcert::heuristics;
use pmcert::matrix::{self, RealMatrix};
use pmcert::norms::{self, SolverConfig};
use pmcert::qgeom::{self, BlochConfig, Vec3, DEFAULT_MAX_ITER, DEFAULT_TOL};
use pmcert::Error;

fn to_py(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::Io { .. } => PyOSError::new_err(msg),
        Error::Overflow(_) => PyOverflowError::new_err(msg),
        Error::SizeCap(_) | Error::GuessDominated { .. } | Error::NoViolation { .. } => PyRuntimeError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

type Triple = (f64, f64, f64);
type Strategy = (i64, Vec<i8>, Vec<i8>, Vec<i8>);

fn to_vecs(v: Vec<Triple>) -> Vec<Vec3> {
    v.into_iter().map(|(x, y, z)| Vec3::new(x, y, z)).collect()
}

fn from_vecs(v: &[Vec3]) -> Vec<Triple> {
    v.iter().map(|p| (p.x, p.y, p.z)).collect()
}

fn bloch(a: Vec<Triple>, b: Option<Vec<Triple>>) -> PyResult<BlochConfig> {
    match b {
        Some(b) => BlochConfig::new(to_vecs(a), to_vecs(b)),
        None => BlochConfig::symmetric(to_vecs(a)),
    }
    .map_err(to_py)
}

/// Integer witness matrix.
#[pyclass(name = "WitnessMatrix", module = "pypmcert", frozen)]
struct PyWitness(pmcert::WitnessMatrix);

#[pymethods]
impl PyWitness {
    #[new]
    fn new(rows: Vec<Vec<i64>>) -> PyResult<Self> {
        pmcert::WitnessMatrix::from_rows(rows).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        matrix::load_matrix(path).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        pmcert::WitnessMatrix::parse(text).map(Self).map_err(to_py)
    }

    /// Family matrix with `k` rows (`k = 2` is CHSH).
    #[staticmethod]
    fn family(k: usize) -> PyResult<Self> {
        matrix::gen_family(k).map(Self).map_err(to_py)
    }

    /// Truncates `scale · r` toward zero.
    #[staticmethod]
    fn integerize(r: Vec<Vec<f64>>, scale: i64) -> PyResult<Self> {
        let r = RealMatrix::from_rows(r).map_err(to_py)?;
        matrix::integerize(&r, scale).map(Self).map_err(to_py)
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    fn to_list(&self) -> Vec<Vec<i64>> {
        self.0.to_rows()
    }

    fn to_text(&self) -> String {
        self.0.to_text()
    }

    fn save(&self, path: &str) -> PyResult<()> {
        matrix::save_matrix(&self.0, path).map_err(to_py)
    }

    /// Sum of all entries.
    fn total(&self) -> i64 {
        matrix::sum_s(&self.0)
    }

    /// `M` stacked on `−M`.
    fn doubled(&self) -> Self {
        Self(matrix::make_doubled(&self.0))
    }

    fn __repr__(&self) -> String {
        let (n, m) = self.0.shape();
        format!("WitnessMatrix({n}x{m})")
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }
}

fn solver(threads: Option<usize>, depth: usize, guess: i64) -> SolverConfig {
    let mut cfg = SolverConfig {
        parallel_depth: depth,
        guess,
        ..SolverConfig::default()
    };
    if let Some(t) = threads {
        cfg.threads = t;
    }
    cfg
}

/// Exact `L_k(M)`. Returns `(value, groups)`; `groups` is `None` when the
/// guess exceeds the true value.
#[pyfunction]
#[pyo3(signature = (m, k = 2, threads = None, depth = 3, guess = 0))]
fn lk(
    py: Python<'_>,
    m: &PyWitness,
    k: usize,
    threads: Option<usize>,
    depth: usize,
    guess: i64,
) -> PyResult<(i64, Option<Vec<usize>>)> {
    let cfg = solver(threads, depth, guess);
    let r = py.detach(|| norms::lk_branch_bound(&m.0, k, &cfg)).map_err(to_py)?;
    Ok((r.value, r.witness.map(|w| w.groups())))
}

/// `L_k(M)` by enumeration.
#[pyfunction]
#[pyo3(signature = (m, k = 2))]
fn lk_bruteforce(py: Python<'_>, m: &PyWitness, k: usize) -> PyResult<i64> {
    py.detach(|| norms::lk_bruteforce(&m.0, k)).map_err(to_py)
}

/// `L(M)` with optimal signs `(value, a, b)`.
#[pyfunction]
#[pyo3(signature = (m, threads = None))]
fn local_bound(py: Python<'_>, m: &PyWitness, threads: Option<usize>) -> PyResult<(i64, Vec<i8>, Vec<i8>)> {
    let cfg = solver(threads, 3, 0);
    let w = py.detach(|| norms::local_bound_branch_bound(&m.0, &cfg)).map_err(to_py)?;
    Ok((w.value, w.a, w.b))
}

#[pyfunction]
fn cut_norm(py: Python<'_>, m: &PyWitness) -> PyResult<i64> {
    py.detach(|| norms::cut_norm_bruteforce(&m.0)).map_err(to_py)
}

/// See-saw lower bound on `L_2`: `(value, a, b_plus, b_minus)`.
#[pyfunction]
#[pyo3(signature = (m, restarts = 50, seed = 0))]
fn seesaw(py: Python<'_>, m: &PyWitness, restarts: usize, seed: u64) -> PyResult<Strategy> {
    let r = py.detach(|| heuristics::seesaw_l2(&m.0, restarts, seed)).map_err(to_py)?;
    let s = r.strategy;
    Ok((r.value, s.a, s.b_plus, s.b_minus))
}

/// `Σ M_xy a_x·b_y`.
#[pyfunction]
#[pyo3(signature = (m, a, b = None))]
fn q_value(m: &PyWitness, a: Vec<Triple>, b: Option<Vec<Triple>>) -> PyResult<f64> {
    qgeom::q_value(&m.0, &bloch(a, b)?).map_err(to_py)
}

/// Lower bound on the qubit value: `(value, a, b)`.
#[pyfunction]
#[pyo3(signature = (m, restarts = 10, seed = 0, max_iter = DEFAULT_MAX_ITER, tol = DEFAULT_TOL))]
fn q_lower_bound(
    py: Python<'_>,
    m: &PyWitness,
    restarts: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> PyResult<(f64, Vec<Triple>, Vec<Triple>)> {
    let r = py
        .detach(|| qgeom::q_lowerbound_restarts(&m.0, Vec::new(), restarts, seed, max_iter, tol))
        .map_err(to_py)?;
    Ok((r.value, from_vecs(r.config.a()), from_vecs(r.config.b())))
}

#[pyfunction]
#[pyo3(signature = (n, seed = 0, iters = 3000))]
fn gen_packing(n: usize, seed: u64, iters: usize) -> Vec<Triple> {
    from_vecs(&qgeom::gen_packing(n, seed, iters))
}

/// Full certificate as a dict.
#[pyfunction]
#[pyo3(signature = (m, a = None, b = None, seed = 0, threads = None, guess = 0))]
fn certify_witness<'py>(
    py: Python<'py>,
    m: &PyWitness,
    a: Option<Vec<Triple>>,
    b: Option<Vec<Triple>>,
    seed: u64,
    threads: Option<usize>,
    guess: i64,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = a.map(|a| bloch(a, b)).transpose()?;
    let solver_cfg = solver(threads, 3, guess);
    let c = py
        .detach(|| certify::certify_witness(&m.0, cfg.as_ref(), &solver_cfg, seed))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("l2_exact", c.l2_exact)?;
    d.set_item("s", c.s)?;
    d.set_item("q_lb", c.q_lb)?;
    d.set_item("q_err", c.q_err)?;
    d.set_item("ratio_kpm", c.ratio_kpm)?;
    d.set_item("ratio_kd", c.ratio_kd)?;
    d.set_item("eta_certified", c.eta_certified)?;
    d.set_item("p_certified", c.p_certified)?;
    d.set_item("margin_ok", c.margin_ok)?;
    d.set_item("kd_lower_rational", c.kd_lower_rational())?;
    d.set_item("kpm_lower_rational", c.kpm_lower_rational())?;
    d.set_item("a", from_vecs(c.config.a()))?;
    d.set_item("b", from_vecs(c.config.b()))?;
    Ok(d)
}

/// Monte Carlo of the one-bit Gisin-Gisin model for one pair.
#[pyfunction]
#[pyo3(signature = (a, b, samples = 1_000_000, seed = 0))]
fn simulate_gg<'py>(py: Python<'py>, a: Triple, b: Triple, samples: u64, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let (a, b) = (Vec3::new(a.0, a.1, a.2), Vec3::new(b.0, b.1, b.2));
    let r = py.detach(|| gisin::simulate_gg(&a, &b, samples, seed)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("n_samples", r.n_samples)?;
    d.set_item("detect_rate", r.detect_rate)?;
    d.set_item("e_detected", r.e_detected)?;
    d.set_item("e_coarse", r.e_coarse)?;
    d.set_item("se_detect_rate", r.se_detect_rate)?;
    d.set_item("se_detected", r.se_detected)?;
    d.set_item("se_coarse", r.se_coarse)?;
    Ok(d)
}

/// Gilbert search against `η E + (1 − η)` for shared vectors.
#[pyfunction]
#[pyo3(signature = (vectors, eta, eps = 1e-6, imax = 200_000, buffer = 40, oracle_restarts = 20, seed = 0, stall_window = 0))]
#[allow(clippy::too_many_arguments)]
fn gilbert<'py>(
    py: Python<'py>,
    vectors: Vec<Triple>,
    eta: f64,
    eps: f64,
    imax: usize,
    buffer: usize,
    oracle_restarts: usize,
    seed: u64,
    stall_window: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let e = qgeom::correlation_matrix(&bloch(vectors, None)?);
    let target = qgeom::noisy_family(&e, eta).map_err(to_py)?;
    let cfg = GilbertConfig {
        epsilon: eps,
        i_max: imax,
        buffer_size: buffer,
        oracle_restarts,
        seed,
        stall_window,
        ..GilbertConfig::default()
    };
    let out = py.detach(|| run_gilbert(&target, &cfg)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("residual", out.residual.to_rows())?;
    d.set_item("final_dist", out.final_dist)?;
    d.set_item("stop", format!("{:?}", out.stop))?;
    d.set_item("iterations", out.state.i)?;
    d.set_item("dist_history", out.state.dist_history)?;
    Ok(d)
}

/// Whether `Σ M E > L_2` with a rounding margin: `(violated, value, err)`.
#[pyfunction]
fn check_violation(m: &PyWitness, e: Vec<Vec<f64>>, l2: i64) -> PyResult<(bool, f64, f64)> {
    let e = RealMatrix::from_rows(e).map_err(to_py)?;
    let r = certify::check_violation(&m.0, &e, l2).map_err(to_py)?;
    Ok((r.violated, r.value, r.err))
}

#[pymodule]
fn pypmcert(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyWitness>()?;
    m.add_function(wrap_pyfunction!(lk, m)?)?;
    m.add_function(wrap_pyfunction!(lk_bruteforce, m)?)?;
    m.add_function(wrap_pyfunction!(local_bound, m)?)?;
    m.add_function(wrap_pyfunction!(cut_norm, m)?)?;
    m.add_function(wrap_pyfunction!(seesaw, m)?)?;
    m.add_function(wrap_pyfunction!(q_value, m)?)?;
    m.add_function(wrap_pyfunction!(q_lower_bound, m)?)?;
    m.add_function(wrap_pyfunction!(gen_packing, m)?)?;
    m.add_function(wrap_pyfunction!(certify_witness, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_gg, m)?)?;
    m.add_function(wrap_pyfunction!(gilbert, m)?)?;
    m.add_function(wrap_pyfunction!(check_violation, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
