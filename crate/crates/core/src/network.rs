//! Graph topologies, consensus weight matrices and the averaging consensus
//! iteration `x <- W x`.

use std::ops::{Add, Mul};
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;

/// Undirected graph given by its neighbor sets, nodes numbered from zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    neighbors: Vec<Vec<usize>>,
}

impl Topology {
    /// Builds a topology from zero-based neighbor lists. Duplicate entries are
    /// collapsed; self loops, out-of-range indices and asymmetric links are
    /// rejected. Connectivity is not required here: a disconnected graph is a
    /// legitimate object whose consensus simply fails to converge, which
    /// [`check_convergence`] reports.
    pub fn new(neighbors: Vec<Vec<usize>>) -> Result<Self> {
        let k = neighbors.len();
        if k == 0 {
            return Err(Error::Topology("a topology needs at least one node".into()));
        }
        let mut sets = Vec::with_capacity(k);
        for (i, list) in neighbors.into_iter().enumerate() {
            let mut list = list;
            list.sort_unstable();
            list.dedup();
            if let Some(&j) = list.iter().find(|&&j| j >= k) {
                return Err(Error::Topology(format!(
                    "node {i} lists neighbor {j}, but there are only {k} nodes"
                )));
            }
            if list.binary_search(&i).is_ok() {
                return Err(Error::Topology(format!("node {i} lists itself as a neighbor")));
            }
            sets.push(list);
        }
        for (i, list) in sets.iter().enumerate() {
            for &j in list {
                if sets[j].binary_search(&i).is_err() {
                    return Err(Error::Topology(format!(
                        "link {i}-{j} is not symmetric: {j} does not list {i}"
                    )));
                }
            }
        }
        Ok(Self { neighbors: sets })
    }

    /// Same as [`Topology::new`] with one-based node labels, the convention used
    /// in configuration files.
    pub fn from_one_based(neighbors: &[Vec<usize>]) -> Result<Self> {
        let mut zero_based = Vec::with_capacity(neighbors.len());
        for (i, list) in neighbors.iter().enumerate() {
            let mut out = Vec::with_capacity(list.len());
            for &j in list {
                if j == 0 {
                    return Err(Error::Topology(format!(
                        "node {} lists neighbor 0, labels start at 1",
                        i + 1
                    )));
                }
                out.push(j - 1);
            }
            zero_based.push(out);
        }
        Self::new(zero_based)
    }

    pub fn path(k: usize) -> Result<Self> {
        Self::new(
            (0..k)
                .map(|i| {
                    let mut n = Vec::new();
                    if i > 0 {
                        n.push(i - 1);
                    }
                    if i + 1 < k {
                        n.push(i + 1);
                    }
                    n
                })
                .collect(),
        )
    }

    pub fn ring(k: usize) -> Result<Self> {
        if k < 3 {
            return Self::path(k);
        }
        Self::new((0..k).map(|i| vec![(i + k - 1) % k, (i + 1) % k]).collect())
    }

    pub fn complete(k: usize) -> Result<Self> {
        Self::new((0..k).map(|i| (0..k).filter(|&j| j != i).collect()).collect())
    }

    /// The six-node network of the reference subarray scenario.
    pub fn six_node_reference() -> Self {
        Self::from_one_based(&[
            vec![2, 3],
            vec![1, 3],
            vec![1, 2, 4],
            vec![3, 5, 6],
            vec![4, 6],
            vec![4, 5],
        ])
        .expect("reference topology is valid")
    }

    pub fn node_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, k: usize) -> &[usize] {
        &self.neighbors[k]
    }

    pub fn degree(&self, k: usize) -> usize {
        self.neighbors[k].len()
    }

    /// Number of undirected links.
    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn is_connected(&self) -> bool {
        let k = self.node_count();
        let mut seen = vec![false; k];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &j in &self.neighbors[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Neighbor lists with one-based labels.
    pub fn to_one_based(&self) -> Vec<Vec<usize>> {
        self.neighbors
            .iter()
            .map(|l| l.iter().map(|j| j + 1).collect())
            .collect()
    }
}

/// Eigenvalues `alpha` (descending) and orthonormal eigenvectors `beta`
/// (columns) of a weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub alphas: Vec<f64>,
    pub betas: DMatrix<f64>,
}

impl Spectrum {
    pub fn beta(&self, k: usize) -> DVector<f64> {
        self.betas.column(k).into_owned()
    }

    /// `max_{k>=2} |alpha_k|`, the per-iteration contraction factor of the
    /// disagreement.
    pub fn second_largest_magnitude(&self) -> f64 {
        self.alphas.iter().skip(1).fold(0.0, |m, a| m.max(a.abs()))
    }
}

/// Symmetric, row-stochastic consensus weight matrix.
#[derive(Debug, Clone)]
pub struct WeightMatrix {
    entries: DMatrix<f64>,
    support: Vec<Vec<usize>>,
    spectrum: OnceLock<std::result::Result<Spectrum, String>>,
}

impl PartialEq for WeightMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

const STRUCTURE_TOL: f64 = 1e-12;

impl WeightMatrix {
    /// Wraps a dense matrix after checking symmetry and unit row sums. The
    /// communication support is read off the non-zero off-diagonal entries.
    pub fn from_dense(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() || entries.nrows() == 0 {
            return Err(Error::WeightMatrix(format!(
                "expected a non-empty square matrix, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let k = entries.nrows();
        for i in 0..k {
            for j in 0..i {
                let d = (entries[(i, j)] - entries[(j, i)]).abs();
                if d > STRUCTURE_TOL {
                    return Err(Error::WeightMatrix(format!(
                        "entries ({i},{j}) and ({j},{i}) differ by {d:e}"
                    )));
                }
            }
            let s: f64 = entries.row(i).iter().sum();
            if (s - 1.0).abs() > STRUCTURE_TOL * k as f64 {
                return Err(Error::WeightMatrix(format!("row {i} sums to {s}, not 1")));
            }
        }
        let support = (0..k)
            .map(|i| (0..k).filter(|&j| j != i && entries[(i, j)] != 0.0).collect())
            .collect();
        Ok(Self {
            entries,
            support,
            spectrum: OnceLock::new(),
        })
    }

    /// Like [`WeightMatrix::from_dense`], additionally requiring that weights
    /// vanish between nodes that are not neighbors in `topology`.
    pub fn with_topology(entries: DMatrix<f64>, topology: &Topology) -> Result<Self> {
        if entries.nrows() != topology.node_count() {
            return Err(Error::WeightMatrix(format!(
                "matrix has {} rows but the topology has {} nodes",
                entries.nrows(),
                topology.node_count()
            )));
        }
        let w = Self::from_dense(entries)?;
        for (i, list) in w.support.iter().enumerate() {
            if let Some(&j) = list.iter().find(|&&j| topology.neighbors(i).binary_search(&j).is_err()) {
                return Err(Error::WeightMatrix(format!(
                    "weight ({i},{j}) is non-zero but nodes {i} and {j} are not neighbors"
                )));
            }
        }
        Ok(w)
    }

    pub fn node_count(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    /// Nodes `j != i` with a non-zero weight `[W]_{i,j}`.
    pub fn support(&self, i: usize) -> &[usize] {
        &self.support[i]
    }

    /// Messages sent network-wide in one consensus iteration: every node sends
    /// its value to every node it has a weight for.
    pub fn messages_per_iteration(&self) -> u64 {
        self.support.iter().map(|s| s.len() as u64).sum()
    }

    /// Eigen-decomposition, computed on first use and cached.
    pub fn spectrum(&self) -> Result<&Spectrum> {
        self.spectrum
            .get_or_init(|| compute_spectrum(&self.entries).map_err(|e| e.to_string()))
            .as_ref()
            .map_err(|e| Error::Eigen(e.clone()))
    }

    /// `W^p` by repeated multiplication.
    pub fn power(&self, p: usize) -> DMatrix<f64> {
        linalg::matrix_power(&self.entries, p)
    }
}

fn compute_spectrum(w: &DMatrix<f64>) -> Result<Spectrum> {
    let (alphas, mut betas) = linalg::eig_symmetric(w)?;
    if betas.nrows() > 0 && betas[(0, 0)] < 0.0 {
        let flipped = -betas.column(0);
        betas.set_column(0, &flipped);
    }
    Ok(Spectrum { alphas, betas })
}

/// Metropolis weights: `1 / max(|N_i|, |N_j|)` on every link, with the
/// diagonal absorbing the remainder of each row.
pub fn build_metropolis_weights(topology: &Topology) -> WeightMatrix {
    let k = topology.node_count();
    let mut w = DMatrix::zeros(k, k);
    for i in 0..k {
        for &j in topology.neighbors(i) {
            w[(i, j)] = 1.0 / topology.degree(i).max(topology.degree(j)) as f64;
        }
        let off: f64 = topology.neighbors(i).iter().map(|&j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    WeightMatrix::with_topology(w, topology).expect("Metropolis weights are symmetric and stochastic")
}

/// Eigenvalues and eigenvectors of `W`, sorted descending, with the leading
/// eigenvector's first entry positive.
pub fn spectral_decomposition(w: &WeightMatrix) -> Result<Spectrum> {
    w.spectrum().cloned()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceFailure {
    /// The largest eigenvalue is not 1.
    NotUnitPrincipal,
    /// The unit eigenvalue is repeated (disconnected support graph).
    Disconnected,
    /// An eigenvalue sits at -1 (bipartite-like oscillation).
    Bipartite,
    /// Some eigenvalue lies outside the unit interval.
    Expanding,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceDiagnostic {
    pub converges: bool,
    pub spectral_gap: f64,
    pub alphas: Vec<f64>,
    pub failure: Option<ConvergenceFailure>,
}

pub const DEFAULT_CONVERGENCE_TOL: f64 = 1e-9;

/// Decides whether `W^p` tends to `(1/K) 1 1^T`: the largest eigenvalue must be
/// a simple 1 and every other eigenvalue must lie strictly inside (-1, 1).
pub fn check_convergence(w: &WeightMatrix, tol: f64) -> Result<ConvergenceDiagnostic> {
    let spec = w.spectrum()?;
    let alphas = spec.alphas.clone();
    let k = alphas.len();
    let second = spec.second_largest_magnitude();
    let spectral_gap = 1.0 - second;
    let failure = if (alphas[0] - 1.0).abs() > tol {
        Some(if alphas[0] > 1.0 {
            ConvergenceFailure::Expanding
        } else {
            ConvergenceFailure::NotUnitPrincipal
        })
    } else if k > 1 && alphas[1] >= 1.0 - tol {
        Some(ConvergenceFailure::Disconnected)
    } else if k > 1 && alphas[k - 1] <= -1.0 - tol {
        Some(ConvergenceFailure::Expanding)
    } else if k > 1 && alphas[k - 1] <= -1.0 + tol {
        Some(ConvergenceFailure::Bipartite)
    } else if second >= 1.0 - tol {
        Some(ConvergenceFailure::Expanding)
    } else {
        None
    };
    Ok(ConvergenceDiagnostic {
        converges: failure.is_none(),
        spectral_gap,
        alphas,
        failure,
    })
}

/// Values that can be averaged by consensus.
pub trait AcValue: Copy + Default + Add<Output = Self> + Mul<f64, Output = Self> {}

impl AcValue for f64 {}
impl AcValue for Complex64 {}

fn ac_step<T: AcValue>(w: &WeightMatrix, x: &[T], out: &mut [T]) {
    for (i, slot) in out.iter_mut().enumerate() {
        let mut acc = x[i] * w.get(i, i);
        for &j in w.support(i) {
            acc = acc + x[j] * w.get(i, j);
        }
        *slot = acc;
    }
}

/// `W^p x0`, evaluated as `p` rounds of local neighbor averaging.
pub fn ac_iterate<T: AcValue>(w: &WeightMatrix, x0: &[T], p: usize) -> Result<Vec<T>> {
    if x0.len() != w.node_count() {
        return Err(Error::Dimension(format!(
            "consensus input has length {}, network has {} nodes",
            x0.len(),
            w.node_count()
        )));
    }
    let mut x = x0.to_vec();
    let mut next = vec![T::default(); x.len()];
    for _ in 0..p {
        ac_step(w, &x, &mut next);
        std::mem::swap(&mut x, &mut next);
    }
    Ok(x)
}

/// Message and instance counters for simulated consensus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct AcStats {
    /// Independent consensus runs started.
    pub ac_instances: u64,
    /// Sum of the iteration depths of all runs.
    pub ac_iterations_total: u64,
    /// Point-to-point messages exchanged.
    pub messages: u64,
}

impl AcStats {
    pub fn merge(&mut self, other: &AcStats) {
        self.ac_instances += other.ac_instances;
        self.ac_iterations_total += other.ac_iterations_total;
        self.messages += other.messages;
    }
}

/// Consensus simulator that counts what it does.
#[derive(Debug)]
pub struct Consensus<'a> {
    w: &'a WeightMatrix,
    stats: AcStats,
}

impl<'a> Consensus<'a> {
    pub fn new(w: &'a WeightMatrix) -> Self {
        Self {
            w,
            stats: AcStats::default(),
        }
    }

    pub fn weights(&self) -> &WeightMatrix {
        self.w
    }

    pub fn stats(&self) -> AcStats {
        self.stats
    }

    fn record(&mut self, instances: usize, p: usize) {
        let n = instances as u64;
        self.stats.ac_instances += n;
        self.stats.ac_iterations_total += n * p as u64;
        self.stats.messages += n * p as u64 * self.w.messages_per_iteration();
    }

    /// Runs one consensus instance: node `k` starts from `x0[k]` and ends with
    /// its own estimate of the network average.
    pub fn run<T: AcValue>(&mut self, x0: &[T], p: usize) -> Result<Vec<T>> {
        let out = ac_iterate(self.w, x0, p)?;
        self.record(1, p);
        Ok(out)
    }

    /// Runs `values.ncols()` independent instances side by side. Row `k` holds
    /// node `k`'s initial values, one per instance; the result has the same
    /// layout. Per instance the arithmetic is identical to [`Consensus::run`].
    pub fn run_batch<T>(&mut self, values: &DMatrix<T>, p: usize) -> Result<DMatrix<T>>
    where
        T: AcValue + nalgebra::Scalar,
    {
        let k = self.w.node_count();
        if values.nrows() != k {
            return Err(Error::Dimension(format!(
                "batch has {} rows, network has {k} nodes",
                values.nrows()
            )));
        }
        let n = values.ncols();
        let mut x = values.clone();
        let mut next = values.clone();
        for _ in 0..p {
            for i in 0..k {
                let wii = self.w.get(i, i);
                for t in 0..n {
                    let mut acc = x[(i, t)] * wii;
                    for &j in self.w.support(i) {
                        acc = acc + x[(j, t)] * self.w.get(i, j);
                    }
                    next[(i, t)] = acc;
                }
            }
            std::mem::swap(&mut x, &mut next);
        }
        self.record(n, p);
        Ok(x)
    }
}
