//! Analytical mean square error of decentralized ESPRIT.
//!
//! The eigenvalue `psi_l` of `Psi` moves to first order by
//! `mu_l^H dU_s r_l`, where `dU_s` collects the eigenvector errors whose
//! second-order moments [`crate::perf`] provides. The DOA variance follows from
//! `theta = asin(arg(psi) / (pi d))`. Everything is evaluated at the true model
//! quantities.

use num_complex::Complex64;
use serde::Serialize;

use crate::array_model::{ArrayGeometry, SourceScenario};
use crate::error::{Error, Result};
use crate::esprit::{build_selection_pair, psi_from_subspace, PsiEstimate, SelectionPair};
use crate::linalg::{self, CMatrix, CVector};
use crate::network::WeightMatrix;
use crate::perf::{eigvec_second_order, AcDepth, AnalysisInputs};

/// True-model quantities shared by all DOAs.
#[derive(Debug, Clone)]
pub struct EspritAnalysisContext {
    pub inputs: AnalysisInputs,
    pub sel: SelectionPair,
    pub u_s: CMatrix,
    /// Eigen-system of the true `Psi`, reordered so that eigenvalue `l`
    /// belongs to `doas_deg[l]`.
    pub psi: PsiEstimate,
    pub doas_deg: Vec<f64>,
    pub spacing: f64,
    /// `(U_up^H U_up)^{-1} U_up^H`.
    pub g: CMatrix,
}

/// How far a true `Psi` eigenvalue may sit from `exp(j pi d sin(theta))`.
pub const PSI_SELF_CHECK_TOL: f64 = 1e-9;

impl EspritAnalysisContext {
    pub fn new(inputs: AnalysisInputs, geom: &ArrayGeometry, doas_deg: &[f64]) -> Result<Self> {
        let l = doas_deg.len();
        if l == 0 || l > inputs.dim() {
            return Err(Error::Dimension(format!("cannot analyse {l} sources")));
        }
        if inputs.dim() != geom.total_sensors() {
            return Err(Error::Dimension("analysis inputs do not match the geometry".into()));
        }
        let sel = build_selection_pair(geom)?;
        let u_s = inputs.eig.leading(l);
        let raw = psi_from_subspace(&u_s, &sel)?;
        let d = geom.spacing();

        // Match every DOA to its eigenvalue and reorder the eigen-system.
        let mut order = Vec::with_capacity(l);
        for (idx, &theta) in doas_deg.iter().enumerate() {
            let want = Complex64::from_polar(1.0, std::f64::consts::PI * d * theta.to_radians().sin());
            let (best, dist) = raw
                .values
                .iter()
                .enumerate()
                .map(|(i, z)| (i, (z - want).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            if dist > PSI_SELF_CHECK_TOL || order.contains(&best) {
                return Err(Error::SelfCheck(format!(
                    "no eigenvalue of the true Psi matches direction {idx} ({theta} deg): closest is {dist:e} away"
                )));
            }
            order.push(best);
        }
        let psi = PsiEstimate {
            matrix: raw.matrix.clone(),
            values: order.iter().map(|&i| raw.values[i]).collect(),
            right: CMatrix::from_fn(l, l, |r, c| raw.right[(r, order[c])]),
            left: CMatrix::from_fn(l, l, |r, c| raw.left[(order[r], c)]),
            cond: raw.cond,
        };
        let up = sel.upper_of(&u_s);
        let g = linalg::solve(&(up.adjoint() * &up), &up.adjoint())?;
        Ok(Self {
            inputs,
            sel,
            u_s,
            psi,
            doas_deg: doas_deg.to_vec(),
            spacing: d,
            g,
        })
    }

    /// Context at the true covariance of `scen`.
    pub fn from_scenario(
        geom: &ArrayGeometry,
        scen: &SourceScenario,
        w: &WeightMatrix,
        n: usize,
        depth: AcDepth,
    ) -> Result<Self> {
        let inputs = AnalysisInputs::from_scenario(geom, scen, w, n, depth)?;
        Self::new(inputs, geom, scen.doas_deg())
    }

    pub fn source_count(&self) -> usize {
        self.doas_deg.len()
    }

    pub fn with_depth(&self, depth: AcDepth) -> Self {
        Self {
            inputs: self.inputs.with_depth(depth),
            ..self.clone()
        }
    }

    pub fn with_samples(&self, n: usize) -> Self {
        Self {
            inputs: self.inputs.with_samples(n),
            ..self.clone()
        }
    }

    /// Embeds an `(M - K) x L`-row operation `row * J` into sensor space.
    fn embed(&self, row_up: &CVector, row_lo: &CVector) -> CVector {
        let m = self.inputs.dim();
        let mut out = CVector::zeros(m);
        let ju = self.sel.upper_matrix();
        let jl = self.sel.lower_matrix();
        for r in 0..self.sel.rows() {
            for c in 0..m {
                if ju[(r, c)] != 0.0 {
                    out[c] += row_up[r];
                }
                if jl[(r, c)] != 0.0 {
                    out[c] += row_lo[r];
                }
            }
        }
        out
    }
}

/// Sensitivity vectors of eigenvalue `l`: `gamma^H = q G (J_up - conj(psi) J_lo)`
/// and `mu^H = q G (J_lo - psi J_up)`, both returned as column vectors of
/// length `M`.
pub fn gamma_mu_vectors(ctx: &EspritAnalysisContext, l: usize) -> Result<(CVector, CVector)> {
    if l >= ctx.source_count() {
        return Err(Error::Dimension(format!("source index {l} out of range")));
    }
    let q = ctx.psi.left.row(l);
    let qg: CVector = (q * &ctx.g).transpose();
    let psi = ctx.psi.values[l];
    let gamma_row = ctx.embed(&qg, &qg.map(|z| -z * psi.conj()));
    let mu_row = ctx.embed(&qg.map(|z| -z * psi), &qg);
    Ok((gamma_row.conjugate(), mu_row.conjugate()))
}

/// `E[|dpsi|^2]` and `E[dpsi^2]`, each split into finite-sample and bias
/// contributions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpsiMoments {
    pub abs_sq: f64,
    pub sq: Complex64,
    pub abs_sq_sample: f64,
    pub abs_sq_bias: f64,
    pub sq_sample: Complex64,
    pub sq_bias: Complex64,
}

pub fn expected_dpsi_moments(ctx: &EspritAnalysisContext, l: usize) -> Result<DpsiMoments> {
    let (gamma, mu) = gamma_mu_vectors(ctx, l)?;
    let r = ctx.psi.right.column(l).into_owned();
    let big_l = ctx.source_count();
    let m = ctx.inputs.dim();
    let mut e1_sample = CMatrix::zeros(m, m);
    let mut e1_bias = CMatrix::zeros(m, m);
    let mut e2_sample = CMatrix::zeros(m, m);
    let mut e2_bias = CMatrix::zeros(m, m);
    for i in 0..big_l {
        for j in 0..big_l {
            let cov = eigvec_second_order(&ctx.inputs, i, j)?;
            let w1 = r[i] * r[j].conj();
            let w2 = r[i] * r[j];
            e1_sample += cov.herm_sample * w1;
            e1_bias += cov.herm_bias * w1;
            e2_sample += cov.trans_sample * w2;
            e2_bias += cov.trans_bias * w2;
        }
    }
    let quad_h = |e: &CMatrix| gamma.dotc(&(e * &gamma)).re;
    let mu_conj = mu.conjugate();
    let quad_t = |e: &CMatrix| mu.dotc(&(e * &mu_conj));
    let (abs_sq_sample, abs_sq_bias) = (quad_h(&e1_sample), quad_h(&e1_bias));
    let (sq_sample, sq_bias) = (quad_t(&e2_sample), quad_t(&e2_bias));
    Ok(DpsiMoments {
        abs_sq: abs_sq_sample + abs_sq_bias,
        sq: sq_sample + sq_bias,
        abs_sq_sample,
        abs_sq_bias,
        sq_sample,
        sq_bias,
    })
}

/// Per-DOA variance in rad², split like [`DpsiMoments`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DoaVariance {
    pub total: f64,
    pub sample: f64,
    pub bias: f64,
}

/// `(E|dpsi|^2 - Re(conj(psi)^2 E[dpsi^2])) / (2 (pi d cos(theta))^2)`.
pub fn doa_variance(ctx: &EspritAnalysisContext, l: usize) -> Result<DoaVariance> {
    let theta = ctx.doas_deg[l];
    let c = theta.to_radians().cos();
    if c.abs() < 1e-8 {
        return Err(Error::Endfire { theta_deg: theta });
    }
    let mom = expected_dpsi_moments(ctx, l)?;
    let psi2 = ctx.psi.values[l].conj().powi(2);
    let denom = 2.0 * (std::f64::consts::PI * ctx.spacing * c).powi(2);
    let part = |abs_sq: f64, sq: Complex64| (abs_sq - (psi2 * sq).re) / denom;
    let sample = part(mom.abs_sq_sample, mom.sq_sample);
    let bias = part(mom.abs_sq_bias, mom.sq_bias);
    Ok(DoaVariance {
        total: sample + bias,
        sample,
        bias,
    })
}

/// Mean DOA variance over `l_set` in rad², split into parts. A negative
/// variance means the first-order model has broken down and is reported as
/// an error.
pub fn armse_desprit_parts(ctx: &EspritAnalysisContext, l_set: &[usize]) -> Result<DoaVariance> {
    if l_set.is_empty() {
        return Err(Error::Dimension("no sources selected".into()));
    }
    let mut acc = DoaVariance {
        total: 0.0,
        sample: 0.0,
        bias: 0.0,
    };
    for &l in l_set {
        let v = doa_variance(ctx, l)?;
        if v.total < 0.0 {
            return Err(Error::SelfCheck(format!(
                "predicted variance for direction {l} is negative ({:e} rad^2)",
                v.total
            )));
        }
        acc.total += v.total;
        acc.sample += v.sample;
        acc.bias += v.bias;
    }
    let n = l_set.len() as f64;
    Ok(DoaVariance {
        total: acc.total / n,
        sample: acc.sample / n,
        bias: acc.bias / n,
    })
}

/// Predicted DOA RMSE in degrees, averaged over `l_set`.
pub fn armse_desprit(ctx: &EspritAnalysisContext, l_set: &[usize]) -> Result<f64> {
    Ok(armse_desprit_parts(ctx, l_set)?.total.sqrt().to_degrees())
}

/// Predicted RMSE over all sources.
pub fn armse_desprit_all(ctx: &EspritAnalysisContext) -> Result<f64> {
    let all: Vec<usize> = (0..ctx.source_count()).collect();
    armse_desprit(ctx, &all)
}
