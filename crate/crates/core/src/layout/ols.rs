//! Least squares by Householder QR with column pivoting.
//!
//! Columns that are (numerically) linear combinations of earlier pivots get a
//! zero coefficient, so constant features simply fold into the intercept.

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OlsError {
    #[error("need at least one row and one column")]
    Empty,
    #[error("ragged design: row {row} has {got} values, expected {want}")]
    Ragged { row: usize, got: usize, want: usize },
    #[error("non-finite value in the design or targets")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstsqSolution<T> {
    /// `p x m` coefficients: column `j` solves target `j`.
    pub coef: Vec<Vec<T>>,
    pub rank: usize,
}

/// Solves `min ||A X - B||` for `A` (`n x p`) and `B` (`n x m`), given row-wise.
pub fn lstsq<T: Scalar>(a: &[Vec<T>], b: &[Vec<T>]) -> Result<LstsqSolution<T>, OlsError> {
    let n = a.len();
    if n == 0 || a[0].is_empty() || b.len() != n || b[0].is_empty() {
        return Err(OlsError::Empty);
    }
    let p = a[0].len();
    let m = b[0].len();
    for (row, r) in a.iter().enumerate() {
        if r.len() != p {
            return Err(OlsError::Ragged { row, got: r.len(), want: p });
        }
    }
    for (row, r) in b.iter().enumerate() {
        if r.len() != m {
            return Err(OlsError::Ragged { row, got: r.len(), want: m });
        }
    }
    if a.iter().chain(b.iter()).flatten().any(|v| !v.is_finite()) {
        return Err(OlsError::NonFinite);
    }

    // column-major working copies
    let mut q: Vec<Vec<T>> = (0..p).map(|j| a.iter().map(|r| r[j]).collect()).collect();
    let mut rhs: Vec<Vec<T>> = (0..m).map(|j| b.iter().map(|r| r[j]).collect()).collect();
    let mut perm: Vec<usize> = (0..p).collect();

    let norm2 = |v: &[T]| v.iter().fold(T::zero(), |s, x| s + *x * *x);
    let kmax = n.min(p);
    let first_norm = (0..p).map(|j| norm2(&q[j]).sqrt()).fold(T::zero(), T::max);
    let tol = T::epsilon() * T::lit((n.max(p) * 10) as f64) * first_norm;
    let mut rank = 0;

    for k in 0..kmax {
        // pivot: remaining column with the largest trailing norm
        let (best, best_norm) = (k..p)
            .map(|j| (j, norm2(&q[j][k..]).sqrt()))
            .fold((k, T::lit(-1.0)), |acc, c| if c.1 > acc.1 { c } else { acc });
        if best_norm <= tol {
            break;
        }
        q.swap(k, best);
        perm.swap(k, best);

        // Householder vector v for column k, rows k..n
        let alpha = if q[k][k] >= T::zero() { -best_norm } else { best_norm };
        let mut v: Vec<T> = q[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2 = norm2(&v);
        if vnorm2 > T::zero() {
            let reflect = |col: &mut [T]| {
                let dot = v.iter().zip(col.iter()).fold(T::zero(), |s, (a, b)| s + *a * *b);
                let f = T::lit(2.0) * dot / vnorm2;
                for (c, vi) in col.iter_mut().zip(&v) {
                    *c -= f * *vi;
                }
            };
            for col in q.iter_mut().skip(k) {
                reflect(&mut col[k..]);
            }
            for col in rhs.iter_mut() {
                reflect(&mut col[k..]);
            }
        }
        rank = k + 1;
    }

    // back substitution on the leading rank x rank triangle
    let mut coef = vec![vec![T::zero(); m]; p];
    for t in 0..m {
        let mut x = vec![T::zero(); rank];
        for i in (0..rank).rev() {
            let mut s = rhs[t][i];
            for j in i + 1..rank {
                s -= q[j][i] * x[j];
            }
            x[i] = s / q[i][i];
        }
        for i in 0..rank {
            coef[perm[i]][t] = x[i];
        }
    }
    Ok(LstsqSolution { coef, rank })
}
