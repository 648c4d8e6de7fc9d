//! Decentralized power method (d-PM).
//!
//! Every node holds the snapshots of its own subarray. A matrix-vector product
//! with the sample covariance needs, for each snapshot, the inner product of
//! the full measurement vector with the current iterate; that scalar is a sum
//! over nodes and is obtained by averaging consensus. With a finite number of
//! consensus iterations each node ends up with its own, slightly different,
//! copy of every scalar, and the method converges to the eigenvectors of a
//! tapered covariance `K (T W^P T^T) ⊙ R` instead of those of `R`
//! ([`equivalent_covariance`]).

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::array_model::{ArrayGeometry, SnapshotSet};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, ONE};
use crate::network::{check_convergence, AcStats, Consensus, Topology, WeightMatrix, DEFAULT_CONVERGENCE_TOL};
use crate::rng;

/// Sensor-to-node membership: the `M x K` zero/one matrix with a one in row
/// `i`, column `k` when sensor `i` belongs to node `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionMatrixT {
    owner: Vec<usize>,
    nodes: usize,
}

impl SelectionMatrixT {
    pub fn from_geometry(geom: &ArrayGeometry) -> Self {
        Self {
            owner: geom.sensor_owner(),
            nodes: geom.node_count(),
        }
    }

    pub fn sensors(&self) -> usize {
        self.owner.len()
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    /// Node of stacked sensor `i`.
    pub fn owner(&self, i: usize) -> usize {
        self.owner[i]
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.sensors(), self.nodes, |i, k| if self.owner[i] == k { 1.0 } else { 0.0 })
    }

    /// `diag(T b)` as the vector `T b`: every sensor takes its node's entry.
    pub fn spread(&self, b: &[f64]) -> Vec<f64> {
        self.owner.iter().map(|&k| b[k]).collect()
    }
}

/// Builds the membership matrix, checking that topology and geometry agree on
/// the number of nodes.
pub fn selection_matrix(topology: &Topology, geom: &ArrayGeometry) -> Result<SelectionMatrixT> {
    if topology.node_count() != geom.node_count() {
        return Err(Error::Dimension(format!(
            "topology has {} nodes, geometry has {} subarrays",
            topology.node_count(),
            geom.node_count()
        )));
    }
    Ok(SelectionMatrixT::from_geometry(geom))
}

/// Consensus depths and power-iteration count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DpmConfig {
    /// Consensus iterations for the per-snapshot inner products.
    pub p: usize,
    /// Consensus iterations for the deflation projections.
    pub p1: usize,
    /// Consensus iterations for the final normalization.
    pub p2: usize,
    /// Consensus iterations for the ESPRIT pair products.
    pub p3: usize,
    /// Power iterations per eigenvector.
    pub q: usize,
    /// Seed for the random start vectors.
    pub seed: u64,
    /// Also estimate each eigenvalue by a consensus Rayleigh quotient.
    pub rayleigh: bool,
}

pub const DEFAULT_AUX_DEPTH: usize = 500;

impl DpmConfig {
    /// Ten power iterations, long auxiliary consensus runs.
    pub fn for_subspace(p: usize) -> Self {
        Self {
            p,
            p1: DEFAULT_AUX_DEPTH,
            p2: DEFAULT_AUX_DEPTH,
            p3: DEFAULT_AUX_DEPTH,
            q: 10,
            seed: 0,
            rayleigh: false,
        }
    }

    /// Two power iterations, as used in front of ESPRIT.
    pub fn for_esprit(p: usize) -> Self {
        Self {
            q: 2,
            ..Self::for_subspace(p)
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn with_q(self, q: usize) -> Self {
        Self { q, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("q", self.q), ("p1", self.p1), ("p2", self.p2), ("p3", self.p3)] {
            if v == 0 {
                return Err(Error::Scenario(format!("d-PM setting {name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Settings that produced a [`DistributedEigenbasis`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub p: usize,
    pub p1: usize,
    pub p2: usize,
    pub q: usize,
}

/// Eigenvector estimates as held by the nodes: block `k` is node `k`'s slice
/// of every vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributedEigenbasis {
    pub per_node: Vec<CMatrix>,
    pub provenance: Provenance,
    pub stats: AcStats,
    /// Per-node Rayleigh-quotient eigenvalue estimates, when requested:
    /// `eigenvalues[k][l]` is node `k`'s estimate of the `l`-th eigenvalue.
    pub eigenvalues: Option<Vec<Vec<f64>>>,
}

impl DistributedEigenbasis {
    /// Stacks the node slices into the `M x L` matrix of full vectors.
    pub fn assembled(&self) -> CMatrix {
        let m: usize = self.per_node.iter().map(|b| b.nrows()).sum();
        let l = self.per_node[0].ncols();
        let mut out = CMatrix::zeros(m, l);
        let mut row = 0;
        for b in &self.per_node {
            out.rows_mut(row, b.nrows()).copy_from(b);
            row += b.nrows();
        }
        out
    }

    pub fn vector_count(&self) -> usize {
        self.per_node[0].ncols()
    }
}

/// `K (T W^P T^T) ⊙ R`: the covariance whose exact eigenvectors the d-PM
/// computes once the auxiliary consensus runs have converged.
pub fn equivalent_covariance(r_hat: &CMatrix, t: &SelectionMatrixT, w: &WeightMatrix, p: usize) -> Result<CMatrix> {
    let m = t.sensors();
    if r_hat.nrows() != m || r_hat.ncols() != m {
        return Err(Error::Dimension(format!(
            "covariance is {}x{}, selection matrix has {m} sensors",
            r_hat.nrows(),
            r_hat.ncols()
        )));
    }
    if w.node_count() != t.nodes() {
        return Err(Error::Dimension(format!(
            "weight matrix has {} nodes, selection matrix {}",
            w.node_count(),
            t.nodes()
        )));
    }
    let wp = w.power(p);
    let k = t.nodes() as f64;
    let taper = |i: usize, j: usize| {
        let (a, b) = (t.owner(i), t.owner(j));
        k * 0.5 * (wp[(a, b)] + wp[(b, a)])
    };
    Ok(CMatrix::from_fn(m, m, |i, j| r_hat[(i, j)] * taper(i, j)))
}

/// Unit-norm complex Gaussian start vectors, one column per eigenvector.
pub fn initial_vectors(m: usize, count: usize, seed: u64) -> CMatrix {
    let mut r = rng::trial_rng(seed, 0, rng::Purpose::PowerInit);
    let mut v = CMatrix::zeros(m, count);
    for l in 0..count {
        let mut col = rng::complex_normal_vector(&mut r, m);
        let n = col.norm();
        col.unscale_mut(n);
        v.set_column(l, &col);
    }
    v
}

/// Rejects estimates whose target eigenvalue is not separated from the next
/// one, where power iteration cannot single out a direction.
fn check_separation(values: &[f64], count: usize) -> Result<()> {
    let scale = values.first().copied().unwrap_or(0.0).abs();
    for l in 0..count.min(values.len().saturating_sub(1)) {
        if (values[l] - values[l + 1]).abs() <= 1e-10 * scale {
            return Err(Error::Degenerate { index: l });
        }
    }
    Ok(())
}

fn require_convergent(w: &WeightMatrix) -> Result<()> {
    let diag = check_convergence(w, DEFAULT_CONVERGENCE_TOL)?;
    match diag.failure {
        None => Ok(()),
        Some(f) => Err(Error::NonConvergentWeights(format!(
            "{f:?} (spectral gap {:.3e})",
            diag.spectral_gap
        ))),
    }
}

/// Power of two that brings the largest magnitude in `blocks` near one.
/// Multiplying by it is exact in floating point, so it only guards against
/// overflow and leaves the iterates' digits untouched.
fn rescale_power_of_two(blocks: &mut [CVector]) {
    let peak = blocks
        .iter()
        .flat_map(|b| b.iter())
        .fold(0.0f64, |m, z| m.max(z.re.abs()).max(z.im.abs()));
    if peak == 0.0 || !peak.is_finite() {
        return;
    }
    let e = peak.log2().floor() as i32;
    if e == 0 {
        return;
    }
    let s = 2f64.powi(-e);
    for b in blocks.iter_mut() {
        for z in b.iter_mut() {
            *z *= s;
        }
    }
}

/// Consensus estimate of the network sum: node `k` holds `K [W^p x]_k`.
fn consensus_sum(engine: &mut Consensus<'_>, x: &[Complex64], p: usize) -> Result<Vec<Complex64>> {
    let k = x.len() as f64;
    Ok(engine.run(x, p)?.into_iter().map(|z| z * k).collect())
}

/// One decentralized product `R v`: node `k` returns
/// `(1/N) sum_t x_k(t) phi_{t,k}` where `phi_{t,k}` is its consensus copy of
/// `x(t)^H v`.
fn distributed_product(
    engine: &mut Consensus<'_>,
    snaps: &SnapshotSet,
    v: &[CVector],
    p: usize,
) -> Result<Vec<CVector>> {
    let k = snaps.node_count();
    let n = snaps.samples();
    let local = DMatrix::from_fn(k, n, |node, t| {
        snaps.block(node).column(t).dotc(&v[node])
    });
    let phi = engine.run_batch(&local, p)?;
    let scale = k as f64 / n as f64;
    Ok((0..k)
        .map(|node| {
            let block = snaps.block(node);
            let mut out = CVector::zeros(block.nrows());
            for t in 0..n {
                out.axpy(phi[(node, t)] * scale, &block.column(t), ONE);
            }
            out
        })
        .collect())
}

/// Message-level simulation of the decentralized power method with
/// deflation. For every power iteration the nodes run `N` consensus instances
/// of depth `P` for the snapshot inner products and `l - 1` instances of depth
/// `P1` for the projections on the vectors already found; each vector is
/// normalized at the end by one instance of depth `P2`. Every node only ever
/// uses its own consensus copies.
pub fn dpm_eigendecomposition(
    snaps: &SnapshotSet,
    topology: &Topology,
    w: &WeightMatrix,
    l_vec: usize,
    cfg: &DpmConfig,
) -> Result<DistributedEigenbasis> {
    cfg.validate()?;
    let k = snaps.node_count();
    if topology.node_count() != k || w.node_count() != k {
        return Err(Error::Dimension(format!(
            "snapshots cover {k} nodes, topology {} and weights {}",
            topology.node_count(),
            w.node_count()
        )));
    }
    for i in 0..k {
        if let Some(&j) = w.support(i).iter().find(|j| !topology.neighbors(i).contains(j)) {
            return Err(Error::WeightMatrix(format!(
                "weight ({i},{j}) is non-zero but nodes {i} and {j} cannot communicate"
            )));
        }
    }
    let m = snaps.total_sensors();
    if l_vec == 0 || l_vec > m {
        return Err(Error::Dimension(format!("cannot extract {l_vec} eigenvectors from {m} sensors")));
    }
    require_convergent(w)?;

    // Simulator-side guard only: the nodes never see this matrix.
    let sizes: Vec<usize> = snaps.blocks().iter().map(|b| b.nrows()).collect();
    let t = SelectionMatrixT {
        owner: sizes.iter().enumerate().flat_map(|(k, &s)| std::iter::repeat_n(k, s)).collect(),
        nodes: k,
    };
    let r_hat = crate::array_model::sample_covariance(snaps);
    let r_tilde = equivalent_covariance(&r_hat, &t, w, cfg.p)?;
    check_separation(&linalg::eig_hermitian(&r_tilde)?.values, l_vec)?;

    let init = initial_vectors(m, l_vec, cfg.seed);
    let offsets: Vec<usize> = sizes.iter().scan(0, |acc, &s| {
        let o = *acc;
        *acc += s;
        Some(o)
    }).collect();

    let mut engine = Consensus::new(w);
    let mut found: Vec<Vec<CVector>> = Vec::with_capacity(l_vec);
    for l in 0..l_vec {
        let mut v: Vec<CVector> = (0..k)
            .map(|node| init.column(l).rows(offsets[node], sizes[node]).into_owned())
            .collect();
        for _ in 0..cfg.q {
            let mut y = distributed_product(&mut engine, snaps, &v, cfg.p)?;
            // Projections on all earlier vectors are computed from the same
            // product, then subtracted.
            let mut coeffs = Vec::with_capacity(l);
            for prev in &found {
                let local: Vec<Complex64> = (0..k).map(|node| prev[node].dotc(&y[node])).collect();
                coeffs.push(consensus_sum(&mut engine, &local, cfg.p1)?);
            }
            for (prev, u) in found.iter().zip(&coeffs) {
                for node in 0..k {
                    y[node].axpy(-u[node], &prev[node], ONE);
                }
            }
            rescale_power_of_two(&mut y);
            v = y;
        }
        let local: Vec<Complex64> = v.iter().map(|b| Complex64::new(b.norm_squared(), 0.0)).collect();
        let norms = consensus_sum(&mut engine, &local, cfg.p2)?;
        for node in 0..k {
            let n2 = norms[node].re;
            if n2.is_nan() || n2 <= 0.0 {
                return Err(Error::NormEstimate { node });
            }
            v[node].unscale_mut(n2.sqrt());
        }
        found.push(v);
    }

    let eigenvalues = if cfg.rayleigh {
        let mut est = vec![vec![0.0; l_vec]; k];
        for (l, v) in found.iter().enumerate() {
            let y = distributed_product(&mut engine, snaps, v, cfg.p)?;
            let local: Vec<Complex64> = (0..k).map(|node| v[node].dotc(&y[node])).collect();
            let q = consensus_sum(&mut engine, &local, cfg.p2)?;
            for node in 0..k {
                est[node][l] = q[node].re;
            }
        }
        Some(est)
    } else {
        None
    };

    let per_node = (0..k)
        .map(|node| {
            let mut b = CMatrix::zeros(sizes[node], l_vec);
            for (l, v) in found.iter().enumerate() {
                b.set_column(l, &v[node]);
            }
            b
        })
        .collect();
    Ok(DistributedEigenbasis {
        per_node,
        provenance: Provenance {
            p: cfg.p,
            p1: cfg.p1,
            p2: cfg.p2,
            q: cfg.q,
        },
        stats: engine.stats(),
        eigenvalues,
    })
}

/// Consensus work [`dpm_eigendecomposition`] performs for `n` snapshots and
/// `l_vec` vectors, without running it.
pub fn nominal_ac_cost(w: &WeightMatrix, n: usize, l_vec: usize, cfg: &DpmConfig) -> AcStats {
    let mut instances = 0u64;
    let mut iterations = 0u64;
    for l in 0..l_vec as u64 {
        let q = cfg.q as u64;
        instances += q * (n as u64 + l) + 1;
        iterations += q * (n as u64 * cfg.p as u64 + l * cfg.p1 as u64) + cfg.p2 as u64;
    }
    if cfg.rayleigh {
        instances += l_vec as u64 * (n as u64 + 1);
        iterations += l_vec as u64 * (n as u64 * cfg.p as u64 + cfg.p2 as u64);
    }
    AcStats {
        ac_instances: instances,
        ac_iterations_total: iterations,
        messages: iterations * w.messages_per_iteration(),
    }
}

/// Plain power method with deflation run directly on
/// [`equivalent_covariance`]: what the decentralized method computes when the
/// projection and normalization consensus runs are exact.
pub fn dpm_centralized_emulation(
    r_hat: &CMatrix,
    t: &SelectionMatrixT,
    w: &WeightMatrix,
    l_vec: usize,
    p: usize,
    q: usize,
    seed: u64,
) -> Result<CMatrix> {
    require_convergent(w)?;
    let r_tilde = equivalent_covariance(r_hat, t, w, p)?;
    let m = r_tilde.nrows();
    if l_vec == 0 || l_vec > m {
        return Err(Error::Dimension(format!("cannot extract {l_vec} eigenvectors from {m} sensors")));
    }
    check_separation(&linalg::eig_hermitian(&r_tilde)?.values, l_vec)?;
    Ok(power_method(&r_tilde, l_vec, q, seed))
}

/// Power iteration with deflation against the vectors already found.
pub fn power_method(r: &CMatrix, l_vec: usize, q: usize, seed: u64) -> CMatrix {
    let m = r.nrows();
    let init = initial_vectors(m, l_vec, seed);
    let mut out = CMatrix::zeros(m, l_vec);
    for l in 0..l_vec {
        let mut v = init.column(l).into_owned();
        for _ in 0..q {
            let mut y = r * &v;
            for i in 0..l {
                let prev = out.column(i);
                let u = prev.dotc(&y);
                y.axpy(-u, &prev, ONE);
            }
            let n = y.norm();
            if n > 0.0 {
                y.unscale_mut(n);
            }
            v = y;
        }
        out.set_column(l, &v);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_model::{generate_snapshots, sample_covariance, SourceScenario, Subarray};
    use crate::linalg::ZERO;
    use crate::network::build_metropolis_weights;
    use approx::assert_relative_eq;

    fn aligned_error(est: &CMatrix, reference: &CMatrix) -> f64 {
        let mut worst = 0.0f64;
        for l in 0..est.ncols() {
            let e = est.column(l);
            let r = reference.column(l);
            let ip = r.dotc(&e);
            let c = ip.conj() / ip.norm();
            worst = worst.max((e * c - r).norm());
        }
        worst
    }

    fn reference_setup(snr: f64, n: usize, seed: u64) -> (ArrayGeometry, Topology, WeightMatrix, SnapshotSet) {
        let g = ArrayGeometry::six_subarray_reference();
        let topo = Topology::six_node_reference();
        let w = build_metropolis_weights(&topo);
        let scen = SourceScenario::three_source_reference(snr);
        let snaps = generate_snapshots(&g, &scen, n, seed).unwrap();
        (g, topo, w, snaps)
    }

    #[test]
    fn selection_matrix_shapes() {
        let g = ArrayGeometry::six_subarray_reference();
        let t = selection_matrix(&Topology::six_node_reference(), &g).unwrap().to_matrix();
        assert_eq!(t.shape(), (12, 6));
        for k in 0..6 {
            assert_eq!(t.column(k).sum(), 2.0);
        }
        for i in 0..12 {
            assert_eq!(t.row(i).sum(), 1.0);
        }
        let one = ArrayGeometry::new(vec![Subarray { xi: [0.0, 0.0], sensors: 4 }], 1.0).unwrap();
        assert_eq!(SelectionMatrixT::from_geometry(&one).to_matrix(), DMatrix::from_element(4, 1, 1.0));
        let singles = ArrayGeometry::new(
            (0..3).map(|k| Subarray { xi: [k as f64, 0.0], sensors: 1 }).collect(),
            1.0,
        )
        .unwrap();
        assert_eq!(SelectionMatrixT::from_geometry(&singles).to_matrix(), DMatrix::identity(3, 3));
        assert!(selection_matrix(&Topology::path(3).unwrap(), &g).is_err());
    }

    #[test]
    fn equivalent_covariance_limits() {
        let (g, _, w, snaps) = reference_setup(10.0, 50, 1);
        let t = SelectionMatrixT::from_geometry(&g);
        let r = sample_covariance(&snaps);
        let far = equivalent_covariance(&r, &t, &w, 10_000).unwrap();
        assert!((&far - &r).norm() < 1e-8 * r.norm());
        let zero = equivalent_covariance(&r, &t, &w, 0).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                let want = if i / 2 == j / 2 { r[(i, j)] * 6.0 } else { ZERO };
                assert_eq!(zero[(i, j)], want);
            }
        }
        // Frobenius distance to R shrinks as P grows.
        let mut last = f64::INFINITY;
        for p in 0..=100 {
            let d = (equivalent_covariance(&r, &t, &w, p).unwrap() - &r).norm();
            assert!(d <= last * (1.0 + 1e-12), "P = {p}: {d} > {last}");
            last = d;
        }
        assert_eq!(linalg::hermitian_defect(&equivalent_covariance(&r, &t, &w, 7).unwrap()), 0.0);
    }

    #[test]
    fn single_node_is_plain_power_method() {
        let g = ArrayGeometry::new(vec![Subarray { xi: [0.0, 0.0], sensors: 6 }], 1.0).unwrap();
        let topo = Topology::new(vec![vec![]]).unwrap();
        let w = build_metropolis_weights(&topo);
        let scen = SourceScenario::from_snr_db(vec![-20.0, 15.0], 1.0, 10.0).unwrap();
        let snaps = generate_snapshots(&g, &scen, 200, 5).unwrap();
        let cfg = DpmConfig::for_subspace(3).with_q(200);
        let basis = dpm_eigendecomposition(&snaps, &topo, &w, 2, &cfg).unwrap();
        let eig = linalg::eig_hermitian(&sample_covariance(&snaps)).unwrap();
        assert!(aligned_error(&basis.assembled(), &eig.leading(2)) < 1e-6);
    }

    #[test]
    fn message_level_matches_equivalent_covariance() {
        let (g, topo, w, snaps) = reference_setup(10.0, 100, 11);
        let t = SelectionMatrixT::from_geometry(&g);
        let r = sample_covariance(&snaps);
        for p in [10, 500] {
            let cfg = DpmConfig::for_subspace(p).with_q(100).with_seed(3);
            let basis = dpm_eigendecomposition(&snaps, &topo, &w, 3, &cfg).unwrap();
            let eig = linalg::eig_hermitian(&equivalent_covariance(&r, &t, &w, p).unwrap()).unwrap();
            let err = aligned_error(&basis.assembled(), &eig.leading(3));
            assert!(err < 1e-4, "P = {p}: error {err}");
            let emu = dpm_centralized_emulation(&r, &t, &w, 3, p, 100, 3).unwrap();
            assert!(aligned_error(&basis.assembled(), &emu) < 1e-4);
            let v = basis.assembled();
            let gram = v.adjoint() * &v;
            for i in 0..3 {
                for j in 0..3 {
                    if i != j {
                        assert!(gram[(i, j)].norm() < 1e-4);
                    }
                }
            }
        }
    }

    #[test]
    fn ac_accounting_matches_nominal_cost() {
        let (_, topo, w, snaps) = reference_setup(10.0, 20, 2);
        let mut cfg = DpmConfig::for_esprit(4);
        cfg.p1 = 7;
        cfg.p2 = 9;
        cfg.rayleigh = true;
        let basis = dpm_eigendecomposition(&snaps, &topo, &w, 3, &cfg).unwrap();
        assert_eq!(basis.stats, nominal_ac_cost(&w, 20, 3, &cfg));
        let ev = basis.eigenvalues.unwrap();
        assert_eq!(ev.len(), 6);
    }

    #[test]
    fn rayleigh_estimates_track_eigenvalues() {
        let (g, topo, w, snaps) = reference_setup(10.0, 100, 4);
        let t = SelectionMatrixT::from_geometry(&g);
        let mut cfg = DpmConfig::for_subspace(500).with_q(100);
        cfg.rayleigh = true;
        let basis = dpm_eigendecomposition(&snaps, &topo, &w, 3, &cfg).unwrap();
        let eig = linalg::eig_hermitian(&equivalent_covariance(&sample_covariance(&snaps), &t, &w, 500).unwrap()).unwrap();
        for node in basis.eigenvalues.unwrap() {
            for (est, exact) in node.iter().zip(&eig.values) {
                assert_relative_eq!(*est, *exact, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn rejects_bad_requests() {
        let (_, topo, w, snaps) = reference_setup(10.0, 10, 2);
        let cfg = DpmConfig::for_subspace(5);
        assert!(matches!(dpm_eigendecomposition(&snaps, &topo, &w, 13, &cfg), Err(Error::Dimension(_))));
        let swap = WeightMatrix::from_dense(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        let g2 = ArrayGeometry::new(
            vec![Subarray { xi: [0.0, 0.0], sensors: 2 }, Subarray { xi: [1.0, 0.0], sensors: 2 }],
            1.0,
        )
        .unwrap();
        let s2 = generate_snapshots(&g2, &SourceScenario::three_source_reference(0.0), 10, 1).unwrap();
        let path = Topology::path(2).unwrap();
        assert!(matches!(
            dpm_eigendecomposition(&s2, &path, &swap, 1, &cfg),
            Err(Error::NonConvergentWeights(_))
        ));
        // Identical eigenvalues cannot be separated.
        let r = CMatrix::identity(4, 4);
        let t = SelectionMatrixT::from_geometry(&g2);
        let w2 = WeightMatrix::from_dense(DMatrix::from_element(2, 2, 0.5)).unwrap();
        assert!(matches!(
            dpm_centralized_emulation(&r, &t, &w2, 1, 3, 10, 0),
            Err(Error::Degenerate { index: 0 })
        ));
    }

    #[test]
    fn emulation_is_deterministic_and_tends_to_centralized() {
        let (g, _, w, snaps) = reference_setup(10.0, 100, 8);
        let t = SelectionMatrixT::from_geometry(&g);
        let r = sample_covariance(&snaps);
        let a = dpm_centralized_emulation(&r, &t, &w, 3, 30, 10, 1).unwrap();
        let b = dpm_centralized_emulation(&r, &t, &w, 3, 30, 10, 1).unwrap();
        assert_eq!(a, b);
        let far = dpm_centralized_emulation(&r, &t, &w, 3, 2000, 300, 1).unwrap();
        let central = power_method(&r, 3, 300, 1);
        assert!(aligned_error(&far, &central) < 1e-8);
    }
}
