//! Minimal dense linear algebra: a row-major matrix and the LDL^T
//! factorization backing the QP solver's quasi-definite KKT systems.

use std::ops::{Index, IndexMut};

use crate::num::Real;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Real> Mat<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> F) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row slices; all rows must share one length.
    pub fn from_rows(rows: &[Vec<F>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { F::one() } else { F::zero() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [F] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `A v`.
    pub fn matvec(&self, v: &[F]) -> Vec<F> {
        assert_eq!(v.len(), self.cols, "matvec dimension");
        (0..self.rows).map(|i| crate::num::dot(self.row(i), v)).collect()
    }

    /// `A^T v`.
    pub fn matvec_t(&self, v: &[F]) -> Vec<F> {
        assert_eq!(v.len(), self.rows, "matvec_t dimension");
        let mut out = vec![F::zero(); self.cols];
        for i in 0..self.rows {
            let vi = v[i];
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o = *o + vi * a;
            }
        }
        out
    }

    /// Quadratic form `v^T A v` for square `A`.
    pub fn quad_form(&self, v: &[F]) -> F {
        crate::num::dot(&self.matvec(v), v)
    }

    pub fn is_symmetric(&self, tol: F) -> bool {
        if self.rows != self.cols {
            return false;
        }
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let a = self[(i, j)];
                let b = self[(j, i)];
                let scale = F::one().max(a.abs()).max(b.abs());
                if (a - b).abs() > tol * scale {
                    return false;
                }
            }
        }
        true
    }

    /// Element-wise scalar conversion.
    pub fn map_scalar<G: Real>(&self) -> Mat<G> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| G::of(x.widen())).collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &F> {
        self.data.iter()
    }
}

impl<F> Index<(usize, usize)> for Mat<F> {
    type Output = F;
    fn index(&self, (i, j): (usize, usize)) -> &F {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<F> IndexMut<(usize, usize)> for Mat<F> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut F {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// LDL^T factorization of a symmetric (possibly quasi-definite) matrix.
///
/// No pivoting: the KKT systems this backs are symmetric quasi-definite
/// after diagonal regularization, for which plain LDL^T is well defined.
pub(crate) struct LdlFactor<F> {
    dim: usize,
    /// Strict lower triangle of L (unit diagonal implied), row-major.
    l: Mat<F>,
    d: Vec<F>,
}

impl<F: Real> LdlFactor<F> {
    /// Factors `a`; returns `None` when a pivot collapses to (near) zero.
    pub fn factor(a: &Mat<F>) -> Option<Self> {
        assert_eq!(a.rows(), a.cols(), "LDL^T needs a square matrix");
        let n = a.rows();
        let mut l = Mat::zeros(n, n);
        let mut d = vec![F::zero(); n];
        let tiny = F::of(1e-300);
        for j in 0..n {
            let mut dj = a[(j, j)];
            for k in 0..j {
                dj = dj - l[(j, k)] * l[(j, k)] * d[k];
            }
            if dj.abs() < tiny {
                return None;
            }
            d[j] = dj;
            for i in (j + 1)..n {
                let mut v = a[(i, j)];
                for k in 0..j {
                    v = v - l[(i, k)] * l[(j, k)] * d[k];
                }
                l[(i, j)] = v / dj;
            }
        }
        Some(Self { dim: n, l, d })
    }

    /// Solves `A x = b` given the factorization.
    pub fn solve(&self, b: &[F]) -> Vec<F> {
        assert_eq!(b.len(), self.dim, "rhs dimension");
        let n = self.dim;
        let mut x = b.to_vec();
        // forward: L y = b
        for i in 0..n {
            let mut v = x[i];
            for k in 0..i {
                v = v - self.l[(i, k)] * x[k];
            }
            x[i] = v;
        }
        // diagonal
        for i in 0..n {
            x[i] = x[i] / self.d[i];
        }
        // backward: L^T x = y
        for i in (0..n).rev() {
            let mut v = x[i];
            for k in (i + 1)..n {
                v = v - self.l[(k, i)] * x[k];
            }
            x[i] = v;
        }
        x
    }
}
