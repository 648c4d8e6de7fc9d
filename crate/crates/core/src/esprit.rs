//! ESPRIT direction finding on partly calibrated arrays, centralized and on
//! top of the decentralized power method.
//!
//! Inside every subarray the first `M_k - 1` sensors and the last `M_k - 1`
//! sensors form two identical groups shifted by the spacing `d`. The shift
//! invariance gives `J_up U_s Psi = J_lo U_s` with `Psi` similar to
//! `diag(exp(j pi d sin(theta_l)))`, whatever the unknown displacements between
//! subarrays are.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array_model::{eig_hermitian, ArrayGeometry, SnapshotSet};
use crate::dpm::{dpm_eigendecomposition, DistributedEigenbasis, DpmConfig};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::network::{AcStats, Consensus, Topology, WeightMatrix};

/// Upper and lower sensor groups, stored as the stacked sensor index each
/// selected row picks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionPair {
    upper: Vec<usize>,
    lower: Vec<usize>,
    sensors: usize,
    /// Per node, the rows of the pair that belong to it.
    node_rows: Vec<std::ops::Range<usize>>,
    /// Nodes with a single sensor, which contribute no rows.
    pub single_sensor_nodes: Vec<usize>,
}

pub fn build_selection_pair(geom: &ArrayGeometry) -> Result<SelectionPair> {
    let mut upper = Vec::new();
    let mut lower = Vec::new();
    let mut node_rows = Vec::with_capacity(geom.node_count());
    let mut singles = Vec::new();
    for k in 0..geom.node_count() {
        let start = upper.len();
        let off = geom.offset(k);
        let mk = geom.sensors(k);
        if mk == 1 {
            singles.push(k);
        }
        for s in 0..mk.saturating_sub(1) {
            upper.push(off + s);
            lower.push(off + s + 1);
        }
        node_rows.push(start..upper.len());
    }
    if upper.is_empty() {
        return Err(Error::Geometry(
            "every subarray has a single sensor, so there is no shift invariance to exploit".into(),
        ));
    }
    Ok(SelectionPair {
        upper,
        lower,
        sensors: geom.total_sensors(),
        node_rows,
        single_sensor_nodes: singles,
    })
}

impl SelectionPair {
    pub fn rows(&self) -> usize {
        self.upper.len()
    }

    fn as_matrix(&self, idx: &[usize]) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(idx.len(), self.sensors);
        for (r, &c) in idx.iter().enumerate() {
            j[(r, c)] = 1.0;
        }
        j
    }

    pub fn upper_matrix(&self) -> DMatrix<f64> {
        self.as_matrix(&self.upper)
    }

    pub fn lower_matrix(&self) -> DMatrix<f64> {
        self.as_matrix(&self.lower)
    }

    /// `J_up U`.
    pub fn upper_of(&self, u: &CMatrix) -> CMatrix {
        u.select_rows(self.upper.iter())
    }

    /// `J_lo U`.
    pub fn lower_of(&self, u: &CMatrix) -> CMatrix {
        u.select_rows(self.lower.iter())
    }

    /// Row range of node `k` within the selected groups.
    pub fn node_rows(&self, k: usize) -> std::ops::Range<usize> {
        self.node_rows[k].clone()
    }
}

/// `Psi` together with its eigen-system. `left` holds the left eigenvectors
/// as rows, normalized so that `left.row(l) * right.column(l) = 1`.
#[derive(Debug, Clone)]
pub struct PsiEstimate {
    pub matrix: CMatrix,
    pub values: Vec<Complex64>,
    pub right: CMatrix,
    pub left: CMatrix,
    /// Condition number of the upper-group subspace the estimate was solved
    /// from.
    pub cond: f64,
}

pub const RANK_COND_LIMIT: f64 = 1e12;

/// Solves `C Psi = F` and eigen-decomposes the result. `cond` is the
/// condition number of the underlying upper-group subspace.
pub fn psi_from_products(c: &CMatrix, f: &CMatrix, cond: f64, context: &str) -> Result<PsiEstimate> {
    if cond.is_nan() || cond > RANK_COND_LIMIT {
        return Err(Error::RankDeficient {
            cond,
            context: context.to_string(),
        });
    }
    let matrix = linalg::solve(c, f).map_err(|_| Error::RankDeficient {
        cond: f64::INFINITY,
        context: context.to_string(),
    })?;
    let eig = linalg::eig_general(&matrix)?;
    Ok(PsiEstimate {
        matrix,
        values: eig.values,
        right: eig.right,
        left: eig.left,
        cond,
    })
}

/// Least-squares solution of `J_up U_s Psi = J_lo U_s`.
pub fn psi_from_subspace(u_s: &CMatrix, sel: &SelectionPair) -> Result<PsiEstimate> {
    if u_s.nrows() != sel.sensors {
        return Err(Error::Dimension(format!(
            "subspace has {} rows, array has {} sensors",
            u_s.nrows(),
            sel.sensors
        )));
    }
    let up = sel.upper_of(u_s);
    let lo = sel.lower_of(u_s);
    if up.nrows() < up.ncols() {
        return Err(Error::RankDeficient {
            cond: f64::INFINITY,
            context: format!("{} shift rows for {} sources", up.nrows(), up.ncols()),
        });
    }
    let cond = linalg::condition_number(&up);
    let c = up.adjoint() * &up;
    let f = up.adjoint() * lo;
    psi_from_products(&c, &f, cond, "upper-group signal subspace")
}

/// Who produced an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateSource {
    Centralized,
    Node(usize),
}

#[derive(Debug, Clone)]
pub struct DoaEstimate {
    /// Directions in degrees, ascending; invalid ones are NaN and sort last.
    pub doas_deg: Vec<f64>,
    /// False where `|arg(psi) / (pi d)| > 1`, i.e. no real angle exists.
    pub valid: Vec<bool>,
    pub psi: PsiEstimate,
    pub source: EstimateSource,
}

impl DoaEstimate {
    pub fn all_valid(&self) -> bool {
        self.valid.iter().all(|&v| v)
    }
}

/// `theta = asin(arg(psi) / (pi d))` for every eigenvalue of `Psi`.
pub fn extract_doas(psi: PsiEstimate, d: f64, source: EstimateSource) -> DoaEstimate {
    let mut pairs: Vec<(f64, bool)> = psi
        .values
        .iter()
        .map(|z| {
            let s = z.arg() / (std::f64::consts::PI * d);
            if s.abs() <= 1.0 {
                (s.asin().to_degrees(), true)
            } else {
                (f64::NAN, false)
            }
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    DoaEstimate {
        doas_deg: pairs.iter().map(|p| p.0).collect(),
        valid: pairs.iter().map(|p| p.1).collect(),
        psi,
        source,
    }
}

/// Eigendecomposition of `R`, leading `L` eigenvectors, shift-invariance solve.
pub fn centralized_esprit(r_hat: &CMatrix, geom: &ArrayGeometry, l: usize) -> Result<DoaEstimate> {
    if l == 0 || l > geom.total_sensors() {
        return Err(Error::Dimension(format!("cannot estimate {l} sources")));
    }
    let eig = eig_hermitian(r_hat)?;
    esprit_from_subspace(&eig.leading(l), geom)
}

pub fn esprit_from_subspace(u_s: &CMatrix, geom: &ArrayGeometry) -> Result<DoaEstimate> {
    let sel = build_selection_pair(geom)?;
    let psi = psi_from_subspace(u_s, &sel)?;
    Ok(extract_doas(psi, geom.spacing(), EstimateSource::Centralized))
}

/// How the nodes form `Psi` from their eigenvector slices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DespritMode {
    /// Every entry of `C = U_up^H U_up` and `F = U_up^H U_lo` is a consensus
    /// average of depth `P3`; each node solves its own `C Psi = F`.
    Full,
    /// The pair products are taken as exact, so all nodes share one `Psi`.
    #[default]
    A3Shortcut,
}

/// Per-node results of decentralized ESPRIT.
#[derive(Debug)]
pub struct DespritOutcome {
    pub per_node: Vec<Result<DoaEstimate>>,
    pub stats: AcStats,
}

impl DespritOutcome {
    /// The first node estimate that succeeded.
    pub fn first_ok(&self) -> Option<&DoaEstimate> {
        self.per_node.iter().find_map(|r| r.as_ref().ok())
    }
}

/// ESPRIT on eigenvector slices already held by the nodes.
pub fn desprit_from_basis(
    per_node: &[CMatrix],
    geom: &ArrayGeometry,
    w: &WeightMatrix,
    p3: usize,
    mode: DespritMode,
) -> Result<DespritOutcome> {
    let k = geom.node_count();
    if per_node.len() != k || w.node_count() != k {
        return Err(Error::Dimension(format!(
            "{} eigenvector slices and {} weight rows for {k} nodes",
            per_node.len(),
            w.node_count()
        )));
    }
    let l = per_node[0].ncols();
    let sel = build_selection_pair(geom)?;
    let pairs = 2 * l * l;
    match mode {
        DespritMode::A3Shortcut => {
            let mut u = CMatrix::zeros(geom.total_sensors(), l);
            for (node, b) in per_node.iter().enumerate() {
                u.rows_mut(geom.offset(node), b.nrows()).copy_from(b);
            }
            let psi = psi_from_subspace(&u, &sel);
            let per_node = (0..k)
                .map(|node| match &psi {
                    Ok(p) => Ok(extract_doas(p.clone(), geom.spacing(), EstimateSource::Node(node))),
                    Err(Error::RankDeficient { cond, context }) => Err(Error::RankDeficient {
                        cond: *cond,
                        context: context.clone(),
                    }),
                    Err(other) => Err(Error::Eigen(other.to_string())),
                })
                .collect();
            let iterations = (pairs * p3) as u64;
            Ok(DespritOutcome {
                per_node,
                stats: AcStats {
                    ac_instances: pairs as u64,
                    ac_iterations_total: iterations,
                    messages: iterations * w.messages_per_iteration(),
                },
            })
        }
        DespritMode::Full => {
            // Column (2 (i L + j)) holds node contributions to C[i, j], the
            // next column those to F[i, j].
            let mut local = DMatrix::from_element(k, pairs, Complex64::new(0.0, 0.0));
            for (node, b) in per_node.iter().enumerate() {
                let rows = sel.node_rows(node);
                let m = rows.len();
                if m == 0 {
                    continue;
                }
                let up = b.rows(0, m);
                let lo = b.rows(1, m);
                for i in 0..l {
                    for j in 0..l {
                        let col = 2 * (i * l + j);
                        local[(node, col)] = up.column(i).dotc(&up.column(j));
                        local[(node, col + 1)] = up.column(i).dotc(&lo.column(j));
                    }
                }
            }
            let mut engine = Consensus::new(w);
            let avg = engine.run_batch(&local, p3)?;
            let scale = k as f64;
            let per_node = (0..k)
                .map(|node| {
                    let c = CMatrix::from_fn(l, l, |i, j| avg[(node, 2 * (i * l + j))] * scale);
                    let f = CMatrix::from_fn(l, l, |i, j| avg[(node, 2 * (i * l + j) + 1)] * scale);
                    let c = linalg::hermitian_part(&c);
                    // C = U_up^H U_up, so its condition number is the square of
                    // the subspace's.
                    let cond = linalg::condition_number(&c).sqrt();
                    psi_from_products(&c, &f, cond, &format!("node {node} pair products"))
                        .map(|psi| extract_doas(psi, geom.spacing(), EstimateSource::Node(node)))
                })
                .collect();
            Ok(DespritOutcome {
                per_node,
                stats: engine.stats(),
            })
        }
    }
}

/// Decentralized ESPRIT: d-PM for the signal subspace, then ESPRIT at every
/// node. Consensus accounting covers both stages.
pub fn desprit(
    snaps: &SnapshotSet,
    topology: &Topology,
    w: &WeightMatrix,
    geom: &ArrayGeometry,
    l: usize,
    cfg: &DpmConfig,
    mode: DespritMode,
) -> Result<(DistributedEigenbasis, DespritOutcome)> {
    let basis = dpm_eigendecomposition(snaps, topology, w, l, cfg)?;
    let mut out = desprit_from_basis(&basis.per_node, geom, w, cfg.p3, mode)?;
    out.stats.merge(&basis.stats);
    Ok((basis, out))
}

/// Squared DOA errors in degrees², pairing estimates and truth by rank after
/// sorting both ascending. Invalid estimates yield `None`.
pub fn paired_squared_errors(estimate: &DoaEstimate, truth_deg: &[f64]) -> Option<Vec<f64>> {
    if !estimate.all_valid() || estimate.doas_deg.len() != truth_deg.len() {
        return None;
    }
    let mut truth = truth_deg.to_vec();
    truth.sort_by(f64::total_cmp);
    Some(
        estimate
            .doas_deg
            .iter()
            .zip(&truth)
            .map(|(e, t)| (e - t).powi(2))
            .collect(),
    )
}
