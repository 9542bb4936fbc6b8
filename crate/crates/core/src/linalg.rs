//! Small dense linear algebra: row-major matrices, Cholesky log-determinant,
//! Jacobi symmetric eigenvalues and Gaussian elimination.

use serde::{Deserialize, Serialize};

use crate::error::{EobError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            crate::error::check_len(cols, r.len())?;
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [S] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<S> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        crate::error::check_len(self.cols, other.rows)?;
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == S::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] = out[(i, j)] + a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn frobenius_sq(&self) -> S {
        self.data.iter().map(|&x| x * x).sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> S {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(S::zero(), S::max)
    }

    /// Leading `k x k` principal sub-matrix.
    pub fn leading(&self, k: usize) -> Self {
        Self::from_fn(k, k, |i, j| self[(i, j)])
    }

    /// `sum log d_i` from an `L D L^T` factorization of a symmetric
    /// positive-definite matrix. Fails on the first non-positive pivot.
    pub fn log_det_spd(&self) -> Result<S> {
        let n = self.rows;
        if n != self.cols {
            return Err(EobError::LengthMismatch {
                expected: n,
                got: self.cols,
            });
        }
        // l holds the unit lower factor, d the pivots.
        let mut l = Self::identity(n);
        let mut d = vec![S::zero(); n];
        let mut log_det = S::zero();
        for j in 0..n {
            let mut dj = self[(j, j)];
            for k in 0..j {
                dj = dj - l[(j, k)] * l[(j, k)] * d[k];
            }
            if !(dj > S::zero()) || !dj.is_finite() {
                let min_eig = self.symmetric_eigenvalues().ok().and_then(|e| e.first().copied());
                return Err(EobError::NotPositiveDefinite {
                    min_eigenvalue: min_eig.map_or(dj.as_f64(), S::as_f64),
                });
            }
            d[j] = dj;
            log_det = log_det + dj.ln();
            for i in (j + 1)..n {
                let mut v = self[(i, j)];
                for k in 0..j {
                    v = v - l[(i, k)] * l[(j, k)] * d[k];
                }
                l[(i, j)] = v / dj;
            }
        }
        Ok(log_det)
    }

    /// Lower Cholesky factor `C` with `C C^T = self`.
    pub fn cholesky(&self) -> Result<Self> {
        let n = self.rows;
        let mut c = Self::zeros(n, n);
        for j in 0..n {
            let mut s = self[(j, j)];
            for k in 0..j {
                s = s - c[(j, k)] * c[(j, k)];
            }
            if !(s > S::zero()) {
                return Err(EobError::NotPositiveDefinite {
                    min_eigenvalue: s.as_f64(),
                });
            }
            let cjj = s.sqrt();
            c[(j, j)] = cjj;
            for i in (j + 1)..n {
                let mut v = self[(i, j)];
                for k in 0..j {
                    v = v - c[(i, k)] * c[(j, k)];
                }
                c[(i, j)] = v / cjj;
            }
        }
        Ok(c)
    }

    /// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations,
    /// sorted ascending.
    pub fn symmetric_eigenvalues(&self) -> Result<Vec<S>> {
        let n = self.rows;
        if n != self.cols {
            return Err(EobError::LengthMismatch {
                expected: n,
                got: self.cols,
            });
        }
        let mut a = self.clone();
        let eps = S::epsilon();
        for _sweep in 0..100 {
            let off: S = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[(i, j)] * a[(i, j)])
                .sum();
            let diag: S = (0..n).map(|i| a[(i, i)] * a[(i, i)]).sum();
            if off <= eps * eps * (diag + S::min_positive_value()) {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[(p, q)];
                    if apq == S::zero() {
                        continue;
                    }
                    let app = a[(p, p)];
                    let aqq = a[(q, q)];
                    let theta = (aqq - app) / (S::lit(2.0) * apq);
                    let t = sgn_nonzero(theta) / (theta.abs() + (theta * theta + S::one()).sqrt());
                    let c = S::one() / (t * t + S::one()).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut eig: Vec<S> = (0..n).map(|i| a[(i, i)]).collect();
        eig.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
        Ok(eig)
    }
}

fn sgn_nonzero<S: Scalar>(x: S) -> S {
    if x < S::zero() {
        -S::one()
    } else {
        S::one()
    }
}

impl<S> std::ops::Index<(usize, usize)> for Matrix<S> {
    type Output = S;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &S {
        &self.data[i * self.cols + j]
    }
}

impl<S> std::ops::IndexMut<(usize, usize)> for Matrix<S> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        &mut self.data[i * self.cols + j]
    }
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve<S: Scalar>(a: &Matrix<S>, b: &[S]) -> Result<Vec<S>> {
    let n = a.rows();
    crate::error::check_len(n, a.cols())?;
    crate::error::check_len(n, b.len())?;
    let mut m = a.clone();
    let mut x = b.to_vec();
    let scale = m.as_slice().iter().fold(S::zero(), |acc, v| acc.max(v.abs()));
    let tiny = S::epsilon() * S::from_usize_lossy(n.max(1)) * scale.max(S::one());
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                m[(i, col)]
                    .abs()
                    .partial_cmp(&m[(j, col)].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .ok_or(EobError::Singular)?;
        if !(m[(pivot, col)].abs() > tiny) {
            return Err(EobError::Singular);
        }
        if pivot != col {
            for j in 0..n {
                let tmp = m[(col, j)];
                m[(col, j)] = m[(pivot, j)];
                m[(pivot, j)] = tmp;
            }
            x.swap(col, pivot);
        }
        for i in (col + 1)..n {
            let f = m[(i, col)] / m[(col, col)];
            if f == S::zero() {
                continue;
            }
            for j in col..n {
                m[(i, j)] = m[(i, j)] - f * m[(col, j)];
            }
            x[i] = x[i] - f * x[col];
        }
    }
    for i in (0..n).rev() {
        let mut v = x[i];
        for j in (i + 1)..n {
            v = v - m[(i, j)] * x[j];
        }
        x[i] = v / m[(i, i)];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_det_matches_closed_form_2x2() {
        let m = Matrix::from_rows(&[vec![1.0, 0.9], vec![0.9, 1.0]]).unwrap();
        assert!((m.log_det_spd().unwrap() - (0.19f64).ln()).abs() < 1e-14);
    }

    #[test]
    fn log_det_rejects_indefinite() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        match m.log_det_spd() {
            Err(EobError::NotPositiveDefinite { min_eigenvalue }) => {
                assert!((min_eigenvalue + 1.0).abs() < 1e-10)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn jacobi_eigenvalues_of_known_matrix() {
        let m = Matrix::from_rows(&[
            vec![2.0, -1.0, 0.0],
            vec![-1.0, 2.0, -1.0],
            vec![0.0, -1.0, 2.0],
        ])
        .unwrap();
        let e = m.symmetric_eigenvalues().unwrap();
        let s2 = 2.0f64.sqrt();
        let want = [2.0 - s2, 2.0, 2.0 + s2];
        for (a, b) in e.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_reconstructs() {
        let m = Matrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]).unwrap();
        let c = m.cholesky().unwrap();
        let back = c.matmul(&c.transpose()).unwrap();
        assert!(back.max_abs_diff(&m) < 1e-14);
    }

    #[test]
    fn solve_small_system() {
        let a = Matrix::from_rows(&[vec![0.0f64, 2.0], vec![3.0, 1.0]]).unwrap();
        let x = solve(&a, &[4.0, 5.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 2.0).abs() < 1e-14);
        let sing = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert_eq!(solve(&sing, &[1.0, 1.0]), Err(EobError::Singular));
    }
}
