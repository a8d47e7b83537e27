//! Symmetric systems with a tridiagonal leading block, a diagonal trailing
//! block and a sparse coupling between them:
//!
//! ```text
//!     [ T   E ]
//!     [ Eᵀ  D ]
//! ```
//!
//! This is the shape of the CPM information matrix: intercepts `α` couple only
//! to their neighbours, cluster coefficients `β` only to themselves and to the
//! intercepts their cluster touches. Eliminating the `α` block first costs
//! `O(q·(m + nnz(E)) + q³)` for `m` intercepts and `q` coefficients.

use crate::error::{Error, Result};
use crate::linalg::{DenseFactor, DenseMatrix, TridiagonalLdl};
use crate::scalar::{lit, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct ArrowMatrix<T> {
    pub t_diag: Vec<T>,
    /// `t_off[k] = T[k, k+1]`.
    pub t_off: Vec<T>,
    /// Column `j` of `E` as `(row, value)` pairs sorted by row.
    pub coupling: Vec<Vec<(usize, T)>>,
    pub d: Vec<T>,
}

impl<T: Scalar> ArrowMatrix<T> {
    pub fn zeros(m: usize, q: usize) -> Self {
        Self {
            t_diag: vec![T::zero(); m],
            t_off: vec![T::zero(); m.saturating_sub(1)],
            coupling: vec![Vec::new(); q],
            d: vec![T::zero(); q],
        }
    }

    pub fn n_leading(&self) -> usize {
        self.t_diag.len()
    }

    pub fn n_trailing(&self) -> usize {
        self.d.len()
    }

    pub fn dim(&self) -> usize {
        self.n_leading() + self.n_trailing()
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        let m = self.n_leading();
        let mut out = vec![T::zero(); self.dim()];
        for k in 0..m {
            out[k] = self.t_diag[k] * v[k];
            if k > 0 {
                out[k] = out[k] + self.t_off[k - 1] * v[k - 1];
            }
            if k + 1 < m {
                out[k] = out[k] + self.t_off[k] * v[k + 1];
            }
        }
        for (j, col) in self.coupling.iter().enumerate() {
            let mut acc = self.d[j] * v[m + j];
            for &(a, e) in col {
                out[a] = out[a] + e * v[m + j];
                acc = acc + e * v[a];
            }
            out[m + j] = acc;
        }
        out
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let m = self.n_leading();
        let mut a = DenseMatrix::zeros(self.dim());
        for k in 0..m {
            a[(k, k)] = self.t_diag[k];
            if k + 1 < m {
                a[(k, k + 1)] = self.t_off[k];
                a[(k + 1, k)] = self.t_off[k];
            }
        }
        for (j, col) in self.coupling.iter().enumerate() {
            a[(m + j, m + j)] = self.d[j];
            for &(r, e) in col {
                a[(r, m + j)] = a[(r, m + j)] + e;
                a[(m + j, r)] = a[(m + j, r)] + e;
            }
        }
        a
    }

    fn scale(&self) -> T {
        self.t_diag
            .iter()
            .chain(&self.d)
            .fold(T::zero(), |acc, v| acc.max(v.abs()))
            .max(T::one())
    }

    /// Factorizes by eliminating the leading block.
    pub fn factor(&self) -> Result<ArrowFactor<T>> {
        let m = self.n_leading();
        let q = self.n_trailing();
        let tri = TridiagonalLdl::new(&self.t_diag, &self.t_off)?;
        let mut w = vec![vec![T::zero(); m]; q];
        for (j, col) in self.coupling.iter().enumerate() {
            tri.solve_sparse_into(col, &mut w[j]);
        }
        let mut s = DenseMatrix::zeros(q);
        for j in 0..q {
            for k in 0..q {
                let cross: T = self.coupling[j].iter().map(|&(a, e)| e * w[k][a]).sum();
                s[(j, k)] = if j == k { self.d[j] - cross } else { -cross };
            }
        }
        for j in 0..q {
            for k in (j + 1)..q {
                let avg = (s[(j, k)] + s[(k, j)]) * lit(0.5);
                s[(j, k)] = avg;
                s[(k, j)] = avg;
            }
        }
        let schur = if q > 0 { Some(s.factor()?) } else { None };
        Ok(ArrowFactor {
            tri,
            w,
            coupling: self.coupling.clone(),
            schur,
            ridge: T::zero(),
        })
    }

    /// Factorizes, adding the smallest ridge from an increasing ladder when
    /// the matrix is not numerically positive definite.
    pub fn factor_regularized(&self) -> Result<ArrowFactor<T>> {
        if let Ok(f) = self.factor() {
            return Ok(f);
        }
        let scale = self.scale();
        let mut ridge = scale * lit(1e-10);
        let mut last = None;
        while ridge <= scale * lit(1e-2) {
            let mut shifted = self.clone();
            shifted.t_diag.iter_mut().for_each(|v| *v = *v + ridge);
            shifted.d.iter_mut().for_each(|v| *v = *v + ridge);
            match shifted.factor() {
                Ok(mut f) => {
                    f.ridge = ridge;
                    return Ok(f);
                }
                Err(e) => last = Some(e),
            }
            ridge = ridge * lit(100.0);
        }
        Err(last.unwrap_or_else(|| Error::Singular("information matrix".into())))
    }
}

/// Reusable factorization of an [`ArrowMatrix`].
#[derive(Debug, Clone)]
pub struct ArrowFactor<T> {
    tri: TridiagonalLdl<T>,
    /// `T⁻¹ E`, one column per trailing unknown.
    w: Vec<Vec<T>>,
    coupling: Vec<Vec<(usize, T)>>,
    schur: Option<DenseFactor<T>>,
    ridge: T,
}

impl<T: Scalar> ArrowFactor<T> {
    /// Ridge that had to be added before the factorization succeeded.
    pub fn ridge(&self) -> T {
        self.ridge
    }

    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        let m = self.tri.len();
        let mut ya = rhs[..m].to_vec();
        self.tri.solve_in_place(&mut ya);
        let rb: Vec<T> = self
            .coupling
            .iter()
            .enumerate()
            .map(|(j, col)| rhs[m + j] - col.iter().map(|&(a, e)| e * ya[a]).sum::<T>())
            .collect();
        let db = match &self.schur {
            Some(s) => s.solve(&rb),
            None => Vec::new(),
        };
        for (j, &bj) in db.iter().enumerate() {
            if bj != T::zero() {
                for (y, &wv) in ya.iter_mut().zip(&self.w[j]) {
                    *y = *y - wv * bj;
                }
            }
        }
        ya.extend(db);
        ya
    }
}
