//! First- and second-order statistics of the eigenvectors produced by the
//! decentralized power method.
//!
//! The estimate of the `l`-th eigenvector deviates from the truth by a
//! zero-mean finite-sample term and a deterministic consensus bias. To first
//! order `dv_l = -B_l (dR v_l + h_l)`, where `dR` is the sample covariance
//! error, `B_l` the deflated resolvent of the true covariance and `h_l` the
//! bias vector caused by stopping consensus after `P` iterations.

use serde::Serialize;

use crate::array_model::{true_covariance, ArrayGeometry, EigenPairs, SourceScenario};
use crate::dpm::SelectionMatrixT;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};
use crate::network::{Spectrum, WeightMatrix};

/// Consensus depth used by the analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AcDepth {
    Finite(usize),
    /// Consensus run to convergence: no bias.
    Exact,
}

/// Everything the closed-form expressions consume.
#[derive(Debug, Clone)]
pub struct AnalysisInputs {
    pub r: CMatrix,
    pub eig: EigenPairs,
    pub spectrum: Spectrum,
    pub t: SelectionMatrixT,
    pub n: usize,
    pub depth: AcDepth,
}

/// Relative eigenvalue separation below which a pair counts as coincident.
pub const GAP_THRESHOLD: f64 = 1e-10;

impl AnalysisInputs {
    /// Builds the inputs from a covariance matrix. The theory is stated for
    /// the true covariance; passing a sample covariance gives a plug-in
    /// estimate of the same quantities.
    pub fn new(r: CMatrix, w: &WeightMatrix, t: SelectionMatrixT, n: usize, depth: AcDepth) -> Result<Self> {
        if r.nrows() != t.sensors() {
            return Err(Error::Dimension(format!(
                "covariance has {} rows, selection matrix {} sensors",
                r.nrows(),
                t.sensors()
            )));
        }
        if w.node_count() != t.nodes() {
            return Err(Error::Dimension(format!(
                "weight matrix has {} nodes, selection matrix {}",
                w.node_count(),
                t.nodes()
            )));
        }
        if n == 0 {
            return Err(Error::Dimension("sample count must be positive".into()));
        }
        let eig = linalg::eig_hermitian(&r)?;
        let spectrum = w.spectrum()?.clone();
        Ok(Self {
            r,
            eig,
            spectrum,
            t,
            n,
            depth,
        })
    }

    /// Inputs at the true covariance of `scen` observed by `geom`.
    pub fn from_scenario(
        geom: &ArrayGeometry,
        scen: &SourceScenario,
        w: &WeightMatrix,
        n: usize,
        depth: AcDepth,
    ) -> Result<Self> {
        let r = true_covariance(geom, scen)?;
        Self::new(r, w, SelectionMatrixT::from_geometry(geom), n, depth)
    }

    pub fn with_depth(&self, depth: AcDepth) -> Self {
        Self { depth, ..self.clone() }
    }

    pub fn with_samples(&self, n: usize) -> Self {
        Self { n, ..self.clone() }
    }

    pub fn dim(&self) -> usize {
        self.eig.dim()
    }

    pub fn lambda(&self, i: usize) -> f64 {
        self.eig.values[i]
    }

    pub fn v(&self, i: usize) -> CVector {
        self.eig.vector(i)
    }

    fn check_gaps(&self, l: usize) -> Result<()> {
        if l >= self.dim() {
            return Err(Error::Dimension(format!("eigenvector index {l} out of range")));
        }
        let scale = GAP_THRESHOLD * self.lambda(0).abs();
        for i in 0..self.dim() {
            if i != l && (self.lambda(i) - self.lambda(l)).abs() < scale {
                let (a, b) = (i.min(l), i.max(l));
                return Err(Error::EigenGap {
                    i: a,
                    j: b,
                    lambda_i: self.lambda(a),
                    lambda_j: self.lambda(b),
                });
            }
        }
        Ok(())
    }
}

/// `B_l = sum_{i != l} v_i v_i^H / (lambda_i - lambda_l)`.
pub fn deflation_matrix(inputs: &AnalysisInputs, l: usize) -> Result<CMatrix> {
    inputs.check_gaps(l)?;
    let m = inputs.dim();
    let mut b = CMatrix::zeros(m, m);
    for i in (0..m).filter(|&i| i != l) {
        let vi = inputs.v(i);
        let scale = 1.0 / (inputs.lambda(i) - inputs.lambda(l));
        b += linalg::outer(&vi, &vi).scale(scale);
    }
    Ok(b)
}

/// Consensus bias `h_l = K sum_{k>=2} alpha_k^P diag(T beta_k) R diag(T beta_k) v_l`.
pub fn consensus_bias_vector(inputs: &AnalysisInputs, l: usize) -> Result<CVector> {
    let m = inputs.dim();
    if l >= m {
        return Err(Error::Dimension(format!("eigenvector index {l} out of range")));
    }
    let p = match inputs.depth {
        AcDepth::Exact => return Ok(CVector::zeros(m)),
        AcDepth::Finite(p) => p,
    };
    let k = inputs.t.nodes();
    let vl = inputs.v(l);
    let mut h = CVector::zeros(m);
    for idx in 1..k {
        let a = inputs.spectrum.alphas[idx];
        let weight = k as f64 * a.powi(p as i32);
        if weight == 0.0 {
            continue;
        }
        let beta: Vec<f64> = inputs.spectrum.beta(idx).iter().copied().collect();
        let d = inputs.t.spread(&beta);
        let dv = CVector::from_fn(m, |j, _| vl[j] * d[j]);
        let rdv = &inputs.r * dv;
        for i in 0..m {
            h[i] += rdv[i] * (d[i] * weight);
        }
    }
    Ok(h)
}

/// Linearized eigenvector error `-B_l (dR v_l + h_l)`.
pub fn first_order_error(inputs: &AnalysisInputs, l: usize, delta_r: &CMatrix) -> Result<CVector> {
    let b = deflation_matrix(inputs, l)?;
    let h = consensus_bias_vector(inputs, l)?;
    Ok(-(b * (delta_r * inputs.v(l) + h)))
}

/// Orientation of the finite-sample part of `E[dv_l dv_m^T]` for `l != m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TransposeCrossTerm {
    /// `-(lambda_l lambda_m / (N (lambda_l - lambda_m)^2)) v_m v_l^T`, the
    /// orientation that follows from circular Gaussian fourth moments and that
    /// Monte Carlo simulation confirms.
    #[default]
    Classical,
    /// The same coefficient with `v_l v_m^T`.
    Swapped,
}

/// Second-order moments of the errors of eigenvectors `l` and `m`, split into
/// the finite-sample and consensus-bias contributions.
#[derive(Debug, Clone, PartialEq)]
pub struct EigvecCov {
    pub l: usize,
    pub m: usize,
    /// `E[dv_l dv_m^H]`.
    pub herm: CMatrix,
    /// `E[dv_l dv_m^T]`.
    pub trans: CMatrix,
    pub herm_sample: CMatrix,
    pub herm_bias: CMatrix,
    pub trans_sample: CMatrix,
    pub trans_bias: CMatrix,
}

/// `B_l h_l`, the deterministic part of the eigenvector error.
pub fn bias_direction(inputs: &AnalysisInputs, l: usize) -> Result<CVector> {
    Ok(deflation_matrix(inputs, l)? * consensus_bias_vector(inputs, l)?)
}

pub fn eigvec_second_order(inputs: &AnalysisInputs, l: usize, m: usize) -> Result<EigvecCov> {
    eigvec_second_order_with(inputs, l, m, TransposeCrossTerm::Classical)
}

pub fn eigvec_second_order_with(
    inputs: &AnalysisInputs,
    l: usize,
    m: usize,
    cross: TransposeCrossTerm,
) -> Result<EigvecCov> {
    inputs.check_gaps(l)?;
    inputs.check_gaps(m)?;
    let dim = inputs.dim();
    let n = inputs.n as f64;
    let mut herm_sample = CMatrix::zeros(dim, dim);
    let mut trans_sample = CMatrix::zeros(dim, dim);
    if l == m {
        let ll = inputs.lambda(l);
        for i in (0..dim).filter(|&i| i != l) {
            let li = inputs.lambda(i);
            let vi = inputs.v(i);
            herm_sample += linalg::outer(&vi, &vi).scale(ll * li / (n * (ll - li).powi(2)));
        }
    } else {
        let (ll, lm) = (inputs.lambda(l), inputs.lambda(m));
        let coeff = -ll * lm / (n * (ll - lm).powi(2));
        let (vl, vm) = (inputs.v(l), inputs.v(m));
        trans_sample = match cross {
            TransposeCrossTerm::Classical => linalg::outer_t(&vm, &vl),
            TransposeCrossTerm::Swapped => linalg::outer_t(&vl, &vm),
        }
        .scale(coeff);
    }
    let gl = bias_direction(inputs, l)?;
    let gm = if l == m { gl.clone() } else { bias_direction(inputs, m)? };
    let herm_bias = linalg::outer(&gl, &gm);
    let trans_bias = linalg::outer_t(&gl, &gm);
    Ok(EigvecCov {
        l,
        m,
        herm: &herm_sample + &herm_bias,
        trans: &trans_sample + &trans_bias,
        herm_sample,
        herm_bias,
        trans_sample,
        trans_bias,
    })
}

/// Squared subspace error split into its finite-sample and bias parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArmseParts {
    pub sample_sq: f64,
    pub bias_sq: f64,
}

impl ArmseParts {
    pub fn total(&self) -> f64 {
        (self.sample_sq + self.bias_sq).sqrt()
    }
}

pub fn armse_dpm_parts(inputs: &AnalysisInputs, l_sig: usize) -> Result<ArmseParts> {
    if l_sig == 0 || l_sig > inputs.dim() {
        return Err(Error::Dimension(format!(
            "signal subspace dimension {l_sig} out of range 1..={}",
            inputs.dim()
        )));
    }
    let mut sample = 0.0;
    let mut bias = 0.0;
    for l in 0..l_sig {
        let c = eigvec_second_order(inputs, l, l)?;
        sample += linalg::trace(&c.herm_sample).re;
        bias += linalg::trace(&c.herm_bias).re;
    }
    Ok(ArmseParts {
        sample_sq: sample / l_sig as f64,
        bias_sq: bias / l_sig as f64,
    })
}

/// Predicted root mean square subspace error
/// `sqrt(sum_l tr E[dv_l dv_l^H] / L)`.
pub fn armse_dpm(inputs: &AnalysisInputs, l_sig: usize) -> Result<f64> {
    Ok(armse_dpm_parts(inputs, l_sig)?.total())
}
