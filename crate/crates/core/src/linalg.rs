//! Householder-QR least squares shared by the OLS and IRLS engines.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Smallest allowed ratio of extreme singular values of a design matrix.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug)]
pub(crate) struct LeastSquares {
    pub coefficients: Vec<f64>,
    /// `(X'X)^{-1}`, computed as `R^{-1} R^{-T}`.
    pub unscaled_covariance: DMatrix<f64>,
}

/// Builds an `n x p` design matrix, with a leading column of ones when
/// `intercept` is set.
pub(crate) fn design_matrix(columns: &[&[f64]], intercept: bool, n: usize) -> DMatrix<f64> {
    let offset = usize::from(intercept);
    DMatrix::from_fn(n, columns.len() + offset, |i, j| {
        if j < offset {
            1.0
        } else {
            columns[j - offset][i]
        }
    })
}

fn rank_check(r: &DMatrix<f64>) -> Result<()> {
    let sv = r.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    let ratio = if max > 0.0 { min / max } else { 0.0 };
    if !(ratio >= RANK_TOLERANCE) {
        return Err(Error::RankDeficient { ratio });
    }
    Ok(())
}

/// Errors with [`Error::RankDeficient`] unless `x` has numerically full column rank.
pub(crate) fn check_full_rank(x: DMatrix<f64>) -> Result<()> {
    rank_check(&x.qr().r())
}

/// Minimizes `||y - X b||` through a QR factorization of `X`.
pub(crate) fn least_squares(x: DMatrix<f64>, y: &[f64]) -> Result<LeastSquares> {
    let (n, p) = x.shape();
    if p == 0 {
        return Err(Error::invalid("design matrix has no columns"));
    }
    if n < p {
        return Err(Error::InsufficientRows { rows: n, parameters: p });
    }
    let qr = x.qr();
    let r = qr.r();
    rank_check(&r)?;
    let mut qty = DVector::from_column_slice(y);
    qr.q_tr_mul(&mut qty);
    let rhs = qty.rows(0, p).into_owned();
    let beta = r
        .solve_upper_triangular(&rhs)
        .ok_or(Error::RankDeficient { ratio: 0.0 })?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or(Error::RankDeficient { ratio: 0.0 })?;
    let unscaled_covariance = &r_inv * r_inv.transpose();
    Ok(LeastSquares {
        coefficients: beta.iter().copied().collect(),
        unscaled_covariance,
    })
}

/// Pairwise summation; the result does not depend on how callers batched the
/// work that produced `values`.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_solution_recovered() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let y = [3.0, 5.0, 7.0, 9.0];
        let ls = least_squares(design_matrix(&[&a], true, 4), &y).unwrap();
        assert!((ls.coefficients[0] - 1.0).abs() < 1e-12);
        assert!((ls.coefficients[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn duplicate_column_is_rank_deficient() {
        let a = [1.0, 2.0, 3.0, 5.0];
        let err = least_squares(design_matrix(&[&a, &a], true, 4), &a).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. }));
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let v: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&v), 500_500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }
}
