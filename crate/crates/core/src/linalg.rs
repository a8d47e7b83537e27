//! Small dense and tridiagonal solvers.
//!
//! The large systems in this crate are all "tridiagonal block bordered by a
//! modest dense block"; these are the two kernels needed to eliminate them.

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "matrix must be square");
            m.data[i * n..(i + 1) * n].copy_from_slice(row);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| {
                self.data[i * self.n..(i + 1) * self.n]
                    .iter()
                    .zip(v)
                    .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
            })
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] = out.data[i * n + j] + a * other.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    /// Factorizes the matrix, preferring Cholesky and falling back to LU with
    /// partial pivoting when the matrix is not numerically positive definite.
    pub fn factor(&self) -> Result<DenseFactor<T>> {
        match Cholesky::new(self) {
            Some(c) => Ok(DenseFactor::Cholesky(c)),
            None => Lu::new(self).map(DenseFactor::Lu),
        }
    }

    pub fn inverse(&self) -> Result<Self> {
        let f = self.factor()?;
        let n = self.n;
        let mut inv = Self::zeros(n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = T::zero());
            e[j] = T::one();
            let col = f.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        Ok(inv)
    }
}

impl<T> std::ops::Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for DenseMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}

#[derive(Debug, Clone)]
pub enum DenseFactor<T> {
    Cholesky(Cholesky<T>),
    Lu(Lu<T>),
}

impl<T: Scalar> DenseFactor<T> {
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        match self {
            DenseFactor::Cholesky(c) => c.solve(b),
            DenseFactor::Lu(l) => l.solve(b),
        }
    }
}

/// Lower Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    n: usize,
    l: Vec<T>,
}

impl<T: Scalar> Cholesky<T> {
    pub fn new(a: &DenseMatrix<T>) -> Option<Self> {
        let n = a.n;
        let mut l = vec![T::zero(); n * n];
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d = d - l[j * n + k] * l[j * n + k];
            }
            if !(d > T::zero()) || !d.is_finite() {
                return None;
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s = s - l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        Some(Self { n, l })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s = s - self.l[i * n + k] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s = s - self.l[k * n + i] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        y
    }
}

/// LU factorization with partial pivoting.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    n: usize,
    lu: Vec<T>,
    perm: Vec<usize>,
}

impl<T: Scalar> Lu<T> {
    pub fn new(a: &DenseMatrix<T>) -> Result<Self> {
        let n = a.n;
        let mut lu = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs().max(T::min_positive_value());
        let tiny = scale * T::epsilon() * lit(n.max(1) as f64);
        for k in 0..n {
            let (p, pv) = (k..n)
                .map(|i| (i, lu[i * n + k].abs()))
                .fold((k, -T::one()), |best, cur| if cur.1 > best.1 { cur } else { best });
            if !(pv > tiny) {
                return Err(Error::Singular(format!(
                    "pivot {k} of {n} is {:e}",
                    pv.to_f64().unwrap_or(f64::NAN)
                )));
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let d = lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] / d;
                lu[i * n + k] = f;
                if f != T::zero() {
                    for j in k + 1..n {
                        lu[i * n + j] = lu[i * n + j] - f * lu[k * n + j];
                    }
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut y: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s = s - self.lu[i * n + k] * y[k];
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s = s - self.lu[i * n + k] * y[k];
            }
            y[i] = s / self.lu[i * n + i];
        }
        y
    }
}

/// `L D Lᵀ` factorization of a symmetric tridiagonal matrix.
#[derive(Debug, Clone)]
pub struct TridiagonalLdl<T> {
    d: Vec<T>,
    l: Vec<T>,
}

impl<T: Scalar> TridiagonalLdl<T> {
    /// `diag` has length `m`, `off` has length `m - 1` (`off[k] = A[k, k+1]`).
    /// Fails if a pivot is not strictly positive.
    pub fn new(diag: &[T], off: &[T]) -> Result<Self> {
        let m = diag.len();
        debug_assert!(m == 0 || off.len() + 1 == m);
        let mut d = Vec::with_capacity(m);
        let mut l = Vec::with_capacity(m.saturating_sub(1));
        for k in 0..m {
            let mut dk = diag[k];
            if k > 0 {
                let lk = off[k - 1] / d[k - 1];
                dk = dk - lk * off[k - 1];
                l.push(lk);
            }
            if !(dk > T::zero()) || !dk.is_finite() {
                return Err(Error::Singular(format!(
                    "tridiagonal pivot {k} of {m} is not positive"
                )));
            }
            d.push(dk);
        }
        Ok(Self { d, l })
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        let m = self.d.len();
        for k in 1..m {
            b[k] = b[k] - self.l[k - 1] * b[k - 1];
        }
        for k in 0..m {
            b[k] = b[k] / self.d[k];
        }
        for k in (0..m.saturating_sub(1)).rev() {
            b[k] = b[k] - self.l[k] * b[k + 1];
        }
    }

    /// Solves with a sparse right-hand side given as `(index, value)` pairs.
    /// The forward sweep starts at the smallest listed index.
    pub fn solve_sparse_into(&self, entries: &[(usize, T)], out: &mut [T]) {
        let m = self.d.len();
        out.iter_mut().for_each(|v| *v = T::zero());
        let Some(lo) = entries.iter().map(|e| e.0).min() else {
            return;
        };
        for &(k, v) in entries {
            out[k] = out[k] + v;
        }
        for k in lo.max(1)..m {
            out[k] = out[k] - self.l[k - 1] * out[k - 1];
        }
        for k in lo..m {
            out[k] = out[k] / self.d[k];
        }
        for k in (0..m.saturating_sub(1)).rev() {
            out[k] = out[k] - self.l[k] * out[k + 1];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri_dense(diag: &[f64], off: &[f64]) -> DenseMatrix<f64> {
        let m = diag.len();
        let mut a = DenseMatrix::zeros(m);
        for k in 0..m {
            a[(k, k)] = diag[k];
            if k + 1 < m {
                a[(k, k + 1)] = off[k];
                a[(k + 1, k)] = off[k];
            }
        }
        a
    }

    #[test]
    fn tridiagonal_matches_dense_solve() {
        let diag = [4.0, 5.0, 3.0, 6.0, 2.5];
        let off = [1.0, -0.5, 0.7, 0.2];
        let b = [1.0, -2.0, 0.5, 3.0, 0.0];
        let f = TridiagonalLdl::new(&diag, &off).unwrap();
        let mut x = b.to_vec();
        f.solve_in_place(&mut x);
        let dense = tri_dense(&diag, &off);
        let ax = dense.mul_vec(&x);
        for (l, r) in ax.iter().zip(&b) {
            assert!((l - r).abs() < 1e-12);
        }
        let mut y = vec![0.0; 5];
        f.solve_sparse_into(&[(2, 1.5), (3, -1.0)], &mut y);
        let mut rhs = vec![0.0; 5];
        rhs[2] = 1.5;
        rhs[3] = -1.0;
        let mut z = rhs.clone();
        f.solve_in_place(&mut z);
        for (a, b) in y.iter().zip(&z) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn cholesky_and_lu_agree() {
        let a = DenseMatrix::from_rows(&[
            vec![4.0, 1.0, 0.5],
            vec![1.0, 3.0, -0.2],
            vec![0.5, -0.2, 2.0],
        ]);
        let b = [1.0_f64, 2.0, 3.0];
        let c = Cholesky::new(&a).unwrap().solve(&b);
        let l = Lu::new(&a).unwrap().solve(&b);
        for (x, y) in c.iter().zip(&l) {
            assert!((x - *y).abs() < 1e-13);
        }
        let inv = a.inverse().unwrap();
        let id = a.matmul(&inv);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0_f64 } else { 0.0 };
                assert!((id[(i, j)] - e).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn lu_handles_indefinite_and_rejects_singular() {
        let a = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert!(Cholesky::new(&a).is_none());
        let x = a.factor().unwrap().solve(&[2.0, 3.0]);
        assert_eq!(x, vec![3.0, 2.0]);
        let s = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(matches!(s.factor(), Err(Error::Singular(_))));
    }
}
