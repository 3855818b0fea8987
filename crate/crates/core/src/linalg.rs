//! Small dense linear algebra on row-major `Vec<Vec<f64>>` matrices.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

pub fn determinant(rows: &[Vec<f64>]) -> f64 {
    if rows.is_empty() {
        return 1.0;
    }
    to_matrix(rows).lu().determinant()
}

/// Scale-aware singularity test: `|det| <= 1e-10 * (1 + max|a_ij|)^n`.
pub fn is_singular(rows: &[Vec<f64>], det: f64) -> bool {
    let scale = rows
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |m, x| m.max(x.abs()));
    !det.is_finite() || det.abs() <= 1e-10 * (1.0 + scale).powi(rows.len() as i32)
}

/// Solves `A x = b` by LU with partial pivoting, rejecting singular `A`
/// under [`is_singular`].
pub fn solve(rows: &[Vec<f64>], rhs: &[f64], what: &'static str) -> Result<Vec<f64>> {
    let a = to_matrix(rows);
    let lu = a.lu();
    let det = lu.determinant();
    if is_singular(rows, det) {
        return Err(Error::Singular { what, det: det.abs() });
    }
    let b = DVector::from_column_slice(rhs);
    let x = lu.solve(&b).ok_or(Error::Singular { what, det: det.abs() })?;
    Ok(x.iter().copied().collect())
}

/// Numerical rank of a (possibly rectangular) matrix.
pub fn rank(rows: &[Vec<f64>], tol: f64) -> usize {
    if rows.is_empty() || rows[0].is_empty() {
        return 0;
    }
    let m = DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]);
    m.svd(false, false).rank(tol)
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_pivoting_system() {
        let a = vec![vec![0.0, 2.0], vec![3.0, 1.0]];
        let x = solve(&a, &[4.0, 5.0], "test").unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_singular() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(matches!(solve(&a, &[1.0, 1.0], "test"), Err(Error::Singular { .. })));
        assert!(is_singular(&[vec![0.0]], 0.0));
        assert!(!is_singular(&[vec![1e-3]], 1e-3));
    }

    #[test]
    fn rank_of_rectangular() {
        let a = vec![vec![1.0], vec![2.0]];
        assert_eq!(rank(&a, 1e-12), 1);
        assert_eq!(rank(&[vec![0.0], vec![0.0]], 1e-12), 0);
    }
}
