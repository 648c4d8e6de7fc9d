//! Phase alignment of estimated eigenvectors and the subspace error metric.
//!
//! An eigenvector is only defined up to a unit-modulus factor, so estimates
//! are rotated onto the reference before their error is measured.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector};

const UNIT_NORM_TOL: f64 = 1e-6;
const ORTHOGONAL_TOL: f64 = 1e-12;

/// Returns `est * c` with `c = conj(ref^H est) / |ref^H est|`, the unit-modulus
/// factor that minimizes `||est * c - ref||`.
pub fn align_eigenvector(est: &CVector, reference: &CVector) -> Result<CVector> {
    if est.len() != reference.len() {
        return Err(Error::Dimension(format!(
            "estimate has {} entries, reference has {}",
            est.len(),
            reference.len()
        )));
    }
    for (name, v) in [("estimate", est), ("reference", reference)] {
        let norm = v.norm();
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::Dimension(format!("{name} is not unit norm (norm {norm})")));
        }
    }
    let inner = reference.dotc(est);
    let mag = inner.norm();
    if mag < ORTHOGONAL_TOL {
        return Err(Error::Orthogonal);
    }
    let c = inner.conj() / Complex64::new(mag, 0.0);
    Ok(est * c)
}

/// Aligns every column of `est` to the matching column of `reference`.
pub fn align_columns(est: &CMatrix, reference: &CMatrix) -> Result<CMatrix> {
    if est.shape() != reference.shape() {
        return Err(Error::Dimension(format!(
            "estimate is {:?}, reference is {:?}",
            est.shape(),
            reference.shape()
        )));
    }
    let mut out = est.clone();
    for l in 0..est.ncols() {
        let a = align_eigenvector(&est.column(l).into_owned(), &reference.column(l).into_owned())?;
        out.set_column(l, &a);
    }
    Ok(out)
}

/// `tr(dU dU^H) / tr(U U^H)` after aligning the columns of `est` to the
/// unit-norm columns of `truth`.
pub fn subspace_squared_error(est: &CMatrix, truth: &CMatrix) -> Result<f64> {
    let aligned = align_columns(est, truth)?;
    let err = (aligned - truth).norm_squared();
    Ok(err / truth.norm_squared())
}

/// Root of the mean of per-trial squared errors, summed pairwise in index
/// order so the result does not depend on how the trials were scheduled.
pub fn root_mean(squared: &[f64]) -> Option<f64> {
    if squared.is_empty() {
        return None;
    }
    Some((crate::linalg::pairwise_sum(squared) / squared.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{complex_normal_vector, stream_rng};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit(seed: u64, m: usize) -> CVector {
        let v = complex_normal_vector(&mut stream_rng(seed, 9), m);
        let n = v.norm();
        v / Complex64::new(n, 0.0)
    }

    #[test]
    fn identical_vectors_are_unchanged() {
        let v = unit(1, 5);
        let a = align_eigenvector(&v, &v).unwrap();
        assert_relative_eq!((a - &v).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn pure_phase_rotation_is_undone() {
        let v = unit(2, 7);
        for phi in [0.3, -2.0, 3.1] {
            let rotated = &v * Complex64::from_polar(1.0, phi);
            let a = align_eigenvector(&rotated, &v).unwrap();
            assert!((a - &v).norm() < 1e-14);
        }
    }

    #[test]
    fn orthogonal_estimate_is_rejected() {
        let mut a = CVector::zeros(3);
        let mut b = CVector::zeros(3);
        a[0] = Complex64::new(1.0, 0.0);
        b[1] = Complex64::new(0.0, 1.0);
        assert!(matches!(align_eigenvector(&a, &b), Err(Error::Orthogonal)));
    }

    #[test]
    fn non_unit_input_is_rejected() {
        let v = unit(3, 4) * Complex64::new(1.1, 0.0);
        assert!(matches!(align_eigenvector(&v, &unit(4, 4)), Err(Error::Dimension(_))));
    }

    #[test]
    fn zero_error_gives_zero_metric() {
        let mut u = CMatrix::zeros(6, 2);
        u.set_column(0, &unit(5, 6));
        u.set_column(1, &unit(6, 6));
        assert_eq!(subspace_squared_error(&u, &u).unwrap(), 0.0);
        assert_eq!(root_mean(&[0.0, 0.0]), Some(0.0));
        assert_eq!(root_mean(&[]), None);
    }

    proptest! {
        #[test]
        fn aligned_error_beats_random_phases(seed in 0u64..500, m in 2usize..9) {
            let est = unit(seed, m);
            let reference = unit(seed + 10_000, m);
            let a = align_eigenvector(&est, &reference).unwrap();
            let best = (&a - &reference).norm();
            let mut rng = stream_rng(seed, 3);
            for _ in 0..100 {
                let phi: f64 = rand::Rng::random_range(&mut rng, -std::f64::consts::PI..std::f64::consts::PI);
                let other = (&est * Complex64::from_polar(1.0, phi) - &reference).norm();
                prop_assert!(best <= other + 1e-12);
            }
        }

        #[test]
        fn alignment_never_increases_error(seed in 0u64..500, m in 2usize..9) {
            let est = unit(seed, m);
            let reference = unit(seed + 20_000, m);
            let a = align_eigenvector(&est, &reference).unwrap();
            prop_assert!((&a - &reference).norm() <= (&est - &reference).norm() + 1e-12);
            prop_assert!((a.norm() - 1.0).abs() < 1e-12);
        }
    }
}
