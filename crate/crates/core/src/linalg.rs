//! Dense linear-algebra helpers shared by the estimators.
//!
//! Everything here works on small matrices (a few dozen rows at most), so the
//! routines favour clarity and determinism over blocking or parallelism.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Ordered eigenpairs of a Hermitian matrix: values descending, vectors as
/// orthonormal columns in the same order.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl EigenPairs {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, i: usize) -> CVector {
        self.vectors.column(i).into_owned()
    }

    /// First `count` eigenvectors as an `M x count` matrix.
    pub fn leading(&self, count: usize) -> CMatrix {
        self.vectors.columns(0, count).into_owned()
    }

    pub fn reconstruct(&self) -> CMatrix {
        let lambda = CMatrix::from_diagonal(&CVector::from_iterator(
            self.values.len(),
            self.values.iter().map(|&v| Complex64::new(v, 0.0)),
        ));
        &self.vectors * lambda * self.vectors.adjoint()
    }
}

pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let scale = m.norm().max(f64::MIN_POSITIVE);
    (m - m.adjoint()).norm() / scale
}

/// `(A + A^H) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).unscale(2.0)
}

pub fn symmetric_defect(m: &DMatrix<f64>) -> f64 {
    let scale = m.norm().max(f64::MIN_POSITIVE);
    (m - m.transpose()).norm() / scale
}

/// Largest-magnitude entry made real and positive; ties go to the lowest index.
fn fix_gauge(col: &mut CVector) {
    let mut best = 0;
    let mut best_mag = -1.0;
    for (i, z) in col.iter().enumerate() {
        let mag = z.norm();
        if mag > best_mag {
            best_mag = mag;
            best = i;
        }
    }
    if best_mag > 0.0 {
        let phase = col[best].conj() / best_mag;
        for z in col.iter_mut() {
            *z *= phase;
        }
        col[best] = Complex64::new(col[best].re, 0.0);
    }
}

fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx
}

/// Eigendecomposition of a Hermitian matrix with values sorted descending and
/// each eigenvector's largest-magnitude entry made real positive.
pub fn eig_hermitian(r: &CMatrix) -> Result<EigenPairs> {
    if !r.is_square() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            r.nrows(),
            r.ncols()
        )));
    }
    let defect = hermitian_defect(r);
    if defect > 1e-10 {
        return Err(Error::NotHermitian { defect });
    }
    let n = r.nrows();
    if n == 0 {
        return Ok(EigenPairs {
            values: Vec::new(),
            vectors: CMatrix::zeros(0, 0),
        });
    }
    // Solve on the exactly Hermitian part so rounding in the input cannot leak
    // into the spectrum.
    let sym = hermitian_part(r);
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0)
        .ok_or_else(|| Error::Eigen("Hermitian eigen-solver did not converge".into()))?;
    let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let order = descending_order(&values);
    let mut vectors = CMatrix::zeros(n, n);
    let mut sorted = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        sorted.push(values[src]);
        let mut col = eig.eigenvectors.column(src).into_owned();
        let nrm = col.norm();
        col /= Complex64::new(nrm, 0.0);
        fix_gauge(&mut col);
        vectors.set_column(dst, &col);
    }
    Ok(EigenPairs {
        values: sorted,
        vectors,
    })
}

/// Real symmetric eigendecomposition, values descending. Each eigenvector is
/// sign-fixed so that its largest-magnitude entry is positive.
pub fn eig_symmetric(w: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let defect = symmetric_defect(w);
    if defect > 1e-12 {
        return Err(Error::NotSymmetric { defect });
    }
    let n = w.nrows();
    let sym = (w + w.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0)
        .ok_or_else(|| Error::Eigen("symmetric eigen-solver did not converge".into()))?;
    let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let order = descending_order(&values);
    let mut vectors = DMatrix::zeros(n, n);
    let mut sorted = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        sorted.push(values[src]);
        let mut col = eig.eigenvectors.column(src).into_owned();
        col /= col.norm();
        let pivot = col.iter().copied().fold(0.0_f64, |acc, v| {
            if v.abs() > acc.abs() + 1e-12 {
                v
            } else {
                acc
            }
        });
        if pivot < 0.0 {
            col = -col;
        }
        vectors.set_column(dst, &col);
    }
    Ok((sorted, vectors))
}

/// Eigen-system of a general (non-Hermitian) complex matrix.
#[derive(Debug, Clone)]
pub struct GeneralEigen {
    pub values: Vec<Complex64>,
    /// Right eigenvectors as unit-norm columns.
    pub right: CMatrix,
    /// Left eigenvectors as rows, scaled so that `left.row(l) * right.column(l) = 1`.
    pub left: CMatrix,
}

/// Eigenvalues from a complex Schur form, right eigenvectors by triangular
/// back-substitution, left eigenvectors as the rows of the inverse of the
/// right-eigenvector matrix.
pub fn eig_general(m: &CMatrix) -> Result<GeneralEigen> {
    if !m.is_square() {
        return Err(Error::Dimension("eig_general needs a square matrix".into()));
    }
    let n = m.nrows();
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Eigen("Schur decomposition did not converge".into()))?;
    let (q, t) = schur.unpack();
    let scale = t.norm().max(f64::MIN_POSITIVE);
    let values: Vec<Complex64> = (0..n).map(|i| t[(i, i)]).collect();

    let mut right = CMatrix::zeros(n, n);
    for i in 0..n {
        let lambda = values[i];
        let mut y = CVector::zeros(n);
        y[i] = ONE;
        for j in (0..i).rev() {
            let mut acc = ZERO;
            for k in (j + 1)..=i {
                acc += t[(j, k)] * y[k];
            }
            let mut denom = t[(j, j)] - lambda;
            if denom.norm() < f64::EPSILON * scale {
                denom = Complex64::new(f64::EPSILON * scale, 0.0);
            }
            y[j] = -acc / denom;
        }
        let mut x = &q * y;
        let nrm = x.norm();
        x /= Complex64::new(nrm, 0.0);
        right.set_column(i, &x);
    }
    let left = right
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Eigen("eigenvector matrix is singular (defective matrix)".into()))?;
    Ok(GeneralEigen {
        values,
        right,
        left,
    })
}

pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    let svd = m.clone().svd(false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// 2-norm condition number; infinite for rank-deficient or empty matrices.
pub fn condition_number(m: &CMatrix) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

pub fn solve(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::RankDeficient {
            cond: f64::INFINITY,
            context: "linear solve".into(),
        })
}

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|v| Complex64::new(v, 0.0))
}

pub fn outer(a: &CVector, b: &CVector) -> CMatrix {
    a * b.adjoint()
}

/// `a * b^T` without conjugation.
pub fn outer_t(a: &CVector, b: &CVector) -> CMatrix {
    a * b.transpose()
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

/// Pairwise summation in fixed index order; the result depends only on the
/// slice contents, never on how they were produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n if n <= 8 => xs.iter().sum(),
        n => {
            let (a, b) = xs.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// `W^p` by repeated multiplication.
pub fn matrix_power(w: &DMatrix<f64>, p: usize) -> DMatrix<f64> {
    let mut out = DMatrix::identity(w.nrows(), w.ncols());
    for _ in 0..p {
        out = w * out;
    }
    out
}
