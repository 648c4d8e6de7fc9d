//! Python bindings. Matrices cross the boundary as lists of rows of Python
//! complex numbers; neighbor lists are 1-based as in configuration files.

use desprit_core::array_model::{generate_snapshots, sample_covariance, ArrayGeometry, SnapshotSet, Subarray};
use desprit_core::dpm::{dpm_centralized_emulation, dpm_eigendecomposition, DpmConfig, SelectionMatrixT};
use desprit_core::error::ErrorClass;
use desprit_core::esprit::{desprit_from_basis, esprit_from_subspace, DespritMode};
use desprit_core::harness::{
    self, analytical_desprit, analytical_dpm, preset, run_experiment, OperatingPoint, TrialPlan,
};
use desprit_core::network::{build_metropolis_weights, check_convergence, Topology, DEFAULT_CONVERGENCE_TOL};
use desprit_core::perf::AcDepth;
use desprit_core::{CMatrix, CVector, Complex64, Error};
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e.class() {
        ErrorClass::Input => PyValueError::new_err(msg),
        ErrorClass::Numerical => PyArithmeticError::new_err(msg),
        ErrorClass::Io => PyOSError::new_err(msg),
    }
}

type Rows = Vec<Vec<Complex64>>;

pub fn to_rows(m: &CMatrix) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<CMatrix, Error> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension("rows have different lengths".into()));
    }
    Ok(CMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn mode_from(name: &str) -> PyResult<DespritMode> {
    match name {
        "a3-shortcut" => Ok(DespritMode::A3Shortcut),
        "full" => Ok(DespritMode::Full),
        other => Err(PyValueError::new_err(format!("unknown ESPRIT mode {other:?}"))),
    }
}

fn depth(p: Option<usize>) -> AcDepth {
    p.map_or(AcDepth::Exact, AcDepth::Finite)
}

/// Array geometry, network and sources.
#[pyclass(name = "Scene", frozen, skip_from_py_object)]
pub struct PyScene {
    inner: harness::Scene,
}

#[pymethods]
impl PyScene {
    /// `subarrays` holds `(x, y, sensors)` per node; `neighbors` are 1-based.
    #[new]
    #[pyo3(signature = (subarrays, neighbors, doas_deg, spacing = 1.0, source_power = 1.0))]
    fn new(
        subarrays: Vec<(f64, f64, usize)>,
        neighbors: Vec<Vec<usize>>,
        doas_deg: Vec<f64>,
        spacing: f64,
        source_power: f64,
    ) -> PyResult<Self> {
        let subs = subarrays
            .into_iter()
            .map(|(x, y, sensors)| Subarray { xi: [x, y], sensors })
            .collect();
        let geometry = ArrayGeometry::new(subs, spacing).map_err(py_err)?;
        let topology = Topology::from_one_based(&neighbors).map_err(py_err)?;
        let inner = harness::Scene::new(geometry, topology, doas_deg, source_power).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Six two-sensor subarrays on a six-node network, sources at -14, -10
    /// and 5 degrees.
    #[staticmethod]
    fn reference() -> Self {
        Self {
            inner: harness::Scene::reference(),
        }
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.geometry.node_count()
    }

    #[getter]
    fn sensor_count(&self) -> usize {
        self.inner.geometry.total_sensors()
    }

    #[getter]
    fn doas_deg(&self) -> Vec<f64> {
        self.inner.doas_deg.clone()
    }

    /// Consensus weight matrix.
    fn weights(&self) -> Vec<Vec<f64>> {
        let w = self.inner.weights.entries();
        w.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    /// Eigenvalues of the weight matrix (descending) and the spectral gap.
    fn spectrum(&self) -> PyResult<(Vec<f64>, f64)> {
        let d = check_convergence(&self.inner.weights, DEFAULT_CONVERGENCE_TOL).map_err(py_err)?;
        Ok((d.alphas, d.spectral_gap))
    }

    /// `M x N` snapshot matrix, deterministic in `seed`.
    fn snapshots(&self, snr_db: f64, samples: usize, seed: u64) -> PyResult<Rows> {
        let scen = self.inner.scenario(snr_db).map_err(py_err)?;
        let s = generate_snapshots(&self.inner.geometry, &scen, samples, seed).map_err(py_err)?;
        Ok(to_rows(&s.stacked()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Scene(nodes={}, sensors={}, doas_deg={:?})",
            self.node_count(),
            self.sensor_count(),
            self.inner.doas_deg
        )
    }
}

impl PyScene {
    fn snapshot_set(&self, x: &[Vec<Complex64>]) -> PyResult<SnapshotSet> {
        let m = from_rows(x).map_err(py_err)?;
        SnapshotSet::from_stacked(&m, &self.inner.geometry).map_err(py_err)
    }
}

#[pyfunction]
fn metropolis_weights(neighbors: Vec<Vec<usize>>) -> PyResult<Vec<Vec<f64>>> {
    let t = Topology::from_one_based(&neighbors).map_err(py_err)?;
    let w = build_metropolis_weights(&t);
    Ok(w.entries().row_iter().map(|r| r.iter().copied().collect()).collect())
}

#[pyfunction]
fn sample_cov(scene: &PyScene, snapshots: Vec<Vec<Complex64>>) -> PyResult<Rows> {
    Ok(to_rows(&sample_covariance(&scene.snapshot_set(&snapshots)?)))
}

/// Leading `vectors` eigenvectors from the decentralized power method, as an
/// `M x L` matrix. `mode` is `"full"` for the message-level simulation or
/// `"emulated"` for the power method on the equivalent covariance.
#[pyfunction]
#[pyo3(signature = (scene, snapshots, p, vectors = 3, q = 10, seed = 0, mode = "full"))]
fn dpm(
    scene: &PyScene,
    snapshots: Vec<Vec<Complex64>>,
    p: usize,
    vectors: usize,
    q: usize,
    seed: u64,
    mode: &str,
) -> PyResult<Rows> {
    let snaps = scene.snapshot_set(&snapshots)?;
    let s = &scene.inner;
    let cfg = DpmConfig::for_subspace(p).with_q(q).with_seed(seed);
    let u = match mode {
        "full" => dpm_eigendecomposition(&snaps, &s.topology, &s.weights, vectors, &cfg)
            .map_err(py_err)?
            .assembled(),
        "emulated" => dpm_centralized_emulation(
            &sample_covariance(&snaps),
            &SelectionMatrixT::from_geometry(&s.geometry),
            &s.weights,
            vectors,
            p,
            q,
            seed,
        )
        .map_err(py_err)?,
        other => return Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
    };
    Ok(to_rows(&u))
}

/// Directions in degrees from a signal subspace (`M x L` rows).
#[pyfunction]
fn esprit(scene: &PyScene, subspace: Vec<Vec<Complex64>>) -> PyResult<Vec<f64>> {
    let u = from_rows(&subspace).map_err(py_err)?;
    Ok(esprit_from_subspace(&u, &scene.inner.geometry).map_err(py_err)?.doas_deg)
}

/// Per-node direction estimates of decentralized ESPRIT.
#[pyfunction]
#[pyo3(name = "desprit", signature = (scene, snapshots, p, q = 2, seed = 0, mode = "a3-shortcut"))]
fn desprit_estimate(
    scene: &PyScene,
    snapshots: Vec<Vec<Complex64>>,
    p: usize,
    q: usize,
    seed: u64,
    mode: &str,
) -> PyResult<Vec<Vec<f64>>> {
    let snaps = scene.snapshot_set(&snapshots)?;
    let s = &scene.inner;
    let cfg = DpmConfig::for_esprit(p).with_q(q).with_seed(seed);
    let basis = dpm_eigendecomposition(&snaps, &s.topology, &s.weights, s.source_count(), &cfg).map_err(py_err)?;
    let out = desprit_from_basis(&basis.per_node, &s.geometry, &s.weights, cfg.p3, mode_from(mode)?).map_err(py_err)?;
    out.per_node
        .into_iter()
        .map(|r| r.map(|e| e.doas_deg).map_err(py_err))
        .collect()
}

/// Rotates `est` by the unit-modulus factor that brings it closest to `reference`.
#[pyfunction]
fn align_eigenvector(est: Vec<Complex64>, reference: Vec<Complex64>) -> PyResult<Vec<Complex64>> {
    let a = harness::align_eigenvector(&CVector::from_vec(est), &CVector::from_vec(reference)).map_err(py_err)?;
    Ok(a.iter().copied().collect())
}

/// Predicted eigenvector RMSE; `p=None` means exact consensus.
#[pyfunction]
#[pyo3(signature = (scene, snr_db, samples, p = None))]
fn armse_dpm(scene: &PyScene, snr_db: f64, samples: usize, p: Option<usize>) -> PyResult<f64> {
    analytical_dpm(&scene.inner, OperatingPoint { snr_db, samples }, depth(p)).map_err(py_err)
}

/// Predicted DOA RMSE in degrees; `p=None` gives centralized ESPRIT.
#[pyfunction]
#[pyo3(signature = (scene, snr_db, samples, p = None))]
fn armse_desprit(scene: &PyScene, snr_db: f64, samples: usize, p: Option<usize>) -> PyResult<f64> {
    analytical_desprit(&scene.inner, OperatingPoint { snr_db, samples }, depth(p)).map_err(py_err)
}

/// Monte Carlo eigenvector RMSE of the decentralized power method.
#[pyfunction]
#[pyo3(signature = (scene, snr_db, samples, p, trials = 200, seed = 0, q = 10))]
fn rmse_dpm_mc(scene: &PyScene, snr_db: f64, samples: usize, p: usize, trials: usize, seed: u64, q: usize) -> PyResult<Option<f64>> {
    let cfg = DpmConfig::for_subspace(p).with_q(q);
    let r = harness::rmse_dpm_mc(&scene.inner, OperatingPoint { snr_db, samples }, &cfg, &TrialPlan::new(trials, seed))
        .map_err(py_err)?;
    Ok(r.rmse)
}

/// Monte Carlo DOA RMSE in degrees of decentralized ESPRIT.
#[pyfunction]
#[pyo3(signature = (scene, snr_db, samples, p, trials = 200, seed = 0, q = 2))]
fn rmse_desprit_mc(
    scene: &PyScene,
    snr_db: f64,
    samples: usize,
    p: usize,
    trials: usize,
    seed: u64,
    q: usize,
) -> PyResult<Option<f64>> {
    let cfg = DpmConfig::for_esprit(p).with_q(q);
    let r = harness::rmse_desprit_mc(&scene.inner, OperatingPoint { snr_db, samples }, &cfg, &TrialPlan::new(trials, seed))
        .map_err(py_err)?;
    Ok(r.rmse)
}

/// Runs a shipped preset configuration and returns its rows as dicts.
#[pyfunction]
#[pyo3(signature = (name, trials = None, seed = None))]
fn run_preset<'py>(py: Python<'py>, name: &str, trials: Option<usize>, seed: Option<u64>) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut cfg = preset(name).ok_or_else(|| PyValueError::new_err(format!("unknown preset {name:?}")))?;
    if let Some(t) = trials {
        cfg = cfg.with_trials(t);
    }
    if let Some(s) = seed {
        cfg = cfg.with_seed(s);
    }
    let exp = cfg.validate().map_err(py_err)?;
    let report = run_experiment(&exp).map_err(py_err)?;
    report
        .points
        .iter()
        .map(|p| {
            let d = PyDict::new(py);
            d.set_item("sweep_value", p.sweep_value)?;
            d.set_item("p", p.p)?;
            d.set_item("curve_kind", p.curve_kind.name())?;
            d.set_item("value", p.value)?;
            d.set_item("trials_used", p.trials_used)?;
            d.set_item("ac_instances", p.ac_instances)?;
            d.set_item("ac_iterations_total", p.ac_iterations_total)?;
            Ok(d)
        })
        .collect()
}

pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScene>()?;
    m.add_function(wrap_pyfunction!(metropolis_weights, m)?)?;
    m.add_function(wrap_pyfunction!(sample_cov, m)?)?;
    m.add_function(wrap_pyfunction!(dpm, m)?)?;
    m.add_function(wrap_pyfunction!(esprit, m)?)?;
    m.add_function(wrap_pyfunction!(desprit_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(align_eigenvector, m)?)?;
    m.add_function(wrap_pyfunction!(armse_dpm, m)?)?;
    m.add_function(wrap_pyfunction!(armse_desprit, m)?)?;
    m.add_function(wrap_pyfunction!(rmse_dpm_mc, m)?)?;
    m.add_function(wrap_pyfunction!(rmse_desprit_mc, m)?)?;
    m.add_function(wrap_pyfunction!(run_preset, m)?)?;
    Ok(())
}

#[pymodule(name = "desprit")]
fn desprit_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
