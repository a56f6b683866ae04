//! Small dense solvers: Gaussian elimination over jets and a few f64 helpers.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::jet::Jet;

/// Solves `a x = b` with partial pivoting on the constant terms.
///
/// Each entry of the solution is a jet, so derivatives of the solution with
/// respect to the base point come out alongside the values. `pivot_tol` is
/// relative to the largest constant term of `a`.
pub fn solve_jets(mut a: Vec<Vec<Jet>>, mut b: Vec<Jet>, pivot_tol: f64) -> Result<Vec<Jet>> {
    let n = b.len();
    if a.len() != n || a.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension { expected: n, got: a.len() });
    }
    let scale = a.iter().flatten().fold(0.0f64, |m, x| m.max(x.value().abs()));
    if scale == 0.0 {
        return Err(Error::Singular("zero matrix".into()));
    }
    for col in 0..n {
        let (piv, best) = (col..n)
            .map(|r| (r, a[r][col].value().abs()))
            .fold((col, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best <= pivot_tol * scale {
            return Err(Error::Singular(format!("pivot {best:e} in column {col}")));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        let inv = a[col][col].recip()?;
        for r in col + 1..n {
            let f = &a[r][col] * &inv;
            if f.is_zero() {
                continue;
            }
            for c in col..n {
                a[r][c] = &a[r][c] - &(&f * &a[col][c]);
            }
            b[r] = &b[r] - &(&f * &b[col]);
        }
    }
    let mut x: Vec<Jet> = vec![b[0].zero_like(); n];
    for r in (0..n).rev() {
        let mut acc = b[r].clone();
        for c in r + 1..n {
            acc = &acc - &(&a[r][c] * &x[c]);
        }
        x[r] = acc.div(&a[r][r])?;
    }
    Ok(x)
}

pub fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(n, m, |i, j| rows[i][j])
}

/// Smallest singular value of a dense matrix.
pub fn min_singular_value(rows: &[Vec<f64>]) -> f64 {
    let m = to_matrix(rows);
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(rows: &[Vec<f64>]) -> f64 {
    let m = to_matrix(rows);
    let sym = (&m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn axpy(a: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(x, y)| a * x + y).collect()
}

pub fn scale(a: f64, x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| a * v).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
