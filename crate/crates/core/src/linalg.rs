//! Small dense linear algebra for desk-scale graphs.
//!
//! Everything here is row-major and sized for a few hundred unknowns at most.

use crate::scalar::Scalar;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    /// Builds a matrix from row-major data. Panics if the length does not match.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data has wrong length");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| crate::scalar::dot(self.row(i), v)).collect()
    }

    pub fn transpose_mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.rows);
        let mut out = vec![T::zero(); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        out
    }

    /// Solves `self * x = b` by Gaussian elimination with partial pivoting.
    /// Returns `None` when a pivot falls below `tol` times the largest entry.
    pub fn solve(&self, b: &[T], tol: T) -> Option<Vec<T>> {
        assert_eq!(self.rows, self.cols, "solve needs a square matrix");
        assert_eq!(b.len(), self.rows);
        let n = self.rows;
        let scale = crate::scalar::max_abs(&self.data).max(T::min_positive_value());
        let mut a = self.data.clone();
        let mut x = b.to_vec();
        for col in 0..n {
            let (piv, piv_abs) =
                (col..n)
                    .map(|r| (r, a[r * n + col].abs()))
                    .fold(
                        (col, T::neg_infinity()),
                        |best, cur| {
                            if cur.1 > best.1 {
                                cur
                            } else {
                                best
                            }
                        },
                    );
            if piv_abs <= tol * scale {
                return None;
            }
            if piv != col {
                for c in 0..n {
                    a.swap(col * n + c, piv * n + c);
                }
                x.swap(col, piv);
            }
            let d = a[col * n + col];
            for r in col + 1..n {
                let f = a[r * n + col] / d;
                if f == T::zero() {
                    continue;
                }
                for c in col..n {
                    a[r * n + c] = a[r * n + c] - f * a[col * n + c];
                }
                x[r] = x[r] - f * x[col];
            }
        }
        for col in (0..n).rev() {
            let mut s = x[col];
            for c in col + 1..n {
                s -= a[col * n + c] * x[c];
            }
            x[col] = s / a[col * n + col];
        }
        Some(x)
    }
}

impl<T> std::ops::Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for DenseMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Cholesky factor `L` with `A = L Lᵀ` of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    n: usize,
    l: Vec<T>,
}

impl<T: Scalar> Cholesky<T> {
    /// Returns `None` if the matrix is not numerically positive definite.
    pub fn factor(a: &DenseMatrix<T>) -> Option<Self> {
        assert_eq!(a.rows(), a.cols());
        let n = a.rows();
        let mut l = vec![T::zero(); n * n];
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if d <= T::zero() || !d.is_finite() {
                return None;
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        Some(Self { n, l })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut z = b.to_vec();
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s -= self.l[i * n + k] * z[k];
            }
            z[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * z[k];
            }
            z[i] = s / self.l[i * n + i];
        }
        z
    }
}

/// Largest eigenvalue of a symmetric positive semidefinite operator by power iteration.
pub(crate) fn spectral_radius<T: Scalar>(n: usize, apply: impl Fn(&[T]) -> Vec<T>) -> T {
    if n == 0 {
        return T::zero();
    }
    // deterministic, non-symmetric start so no eigenvector is missed on path graphs
    let mut v: Vec<T> = (0..n)
        .map(|i| T::one() + T::from_count(i) / T::from_count(n + 1))
        .collect();
    let mut lambda = T::zero();
    for _ in 0..1000 {
        let nv = crate::scalar::norm2(&v);
        if nv == T::zero() {
            return T::zero();
        }
        v.iter_mut().for_each(|x| *x /= nv);
        let w = apply(&v);
        let next = crate::scalar::dot(&v, &w);
        let converged = (next - lambda).abs() <= T::tol(1e-12) * next.abs().max(T::one());
        lambda = next;
        v = w;
        if converged {
            break;
        }
    }
    lambda
}
