//! Dense square matrices and a symmetric eigensolver.
//!
//! The toolkit needs exactly one piece of nontrivial linear algebra: the
//! symmetric eigendecomposition behind the covariance inverse square root.
//! Channel counts are small (tens to a few hundred), so a cyclic Jacobi
//! solver is plenty fast, is deterministic, and keeps the scalar-generic core
//! free of external matrix-library trait bounds.

use crate::error::{Error, Result};
use crate::real::Real;

/// Dense square matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix<R = f64> {
    n: usize,
    data: Vec<R>,
}

impl<R: Real> SquareMatrix<R> {
    /// Zero matrix of size `n x n`.
    pub fn zeros(n: usize) -> Self {
        SquareMatrix { n, data: vec![R::zero(); n * n] }
    }

    /// Identity matrix of size `n x n`.
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = R::one();
        }
        m
    }

    /// Builds a matrix from a row-major flat vector. `data.len()` must be `n * n`.
    pub fn from_flat(n: usize, data: Vec<R>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Dimension(format!(
                "square matrix of size {n} needs {} entries, got {}",
                n * n,
                data.len()
            )));
        }
        Ok(SquareMatrix { n, data })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> R {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: R) {
        self.data[i * self.n + j] = v;
    }

    /// Row `i` as a slice.
    #[inline]
    pub fn row(&self, i: usize) -> &[R] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Flat row-major view of the entries.
    pub fn as_flat(&self) -> &[R] {
        &self.data
    }

    /// Matrix-vector product `self * v`.
    pub fn mul_vec(&self, v: &[R]) -> Vec<R> {
        assert_eq!(v.len(), self.n, "matrix-vector size mismatch");
        let mut out = vec![R::zero(); self.n];
        for (i, o) in out.iter_mut().enumerate() {
            let row = self.row(i);
            let mut acc = R::zero();
            for (a, b) in row.iter().zip(v) {
                acc = acc + *a * *b;
            }
            *o = acc;
        }
        out
    }

    /// Matrix-matrix product `self * other`.
    pub fn mul_mat(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n, "matrix-matrix size mismatch");
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == R::zero() {
                    continue;
                }
                let orow = &other.data[k * n..(k + 1) * n];
                let dst = &mut out.data[i * n..(i + 1) * n];
                for (d, b) in dst.iter_mut().zip(orow) {
                    *d = *d + a * *b;
                }
            }
        }
        out
    }

    /// Largest absolute entry of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> R {
        assert_eq!(self.n, other.n, "matrix size mismatch");
        let mut worst = R::zero();
        for (a, b) in self.data.iter().zip(&other.data) {
            let d = (*a - *b).abs();
            if d > worst {
                worst = d;
            }
        }
        worst
    }

    /// Largest absolute asymmetry `|a_ij - a_ji|`.
    pub fn max_asymmetry(&self) -> R {
        let mut worst = R::zero();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let d = (self.get(i, j) - self.get(j, i)).abs();
                if d > worst {
                    worst = d;
                }
            }
        }
        worst
    }
}

/// Eigendecomposition of a symmetric matrix: `m = vectors * diag(values) * vectors^T`.
///
/// Eigenvalues are sorted ascending; `vectors` holds the matching eigenvectors
/// as columns and is orthogonal.
#[derive(Debug, Clone)]
pub struct SymEigen<R = f64> {
    pub values: Vec<R>,
    pub vectors: SquareMatrix<R>,
}

/// Eigendecomposition of a symmetric matrix by the cyclic Jacobi method.
///
/// The input must be symmetric; asymmetry beyond rounding noise is rejected
/// rather than silently averaged away. Jacobi rotations drive the off-diagonal
/// mass to zero quadratically, so even 256-channel covariances finish in a
/// handful of sweeps.
pub fn sym_eigen<R: Real>(m: &SquareMatrix<R>) -> Result<SymEigen<R>> {
    let n = m.size();
    if n == 0 {
        return Err(Error::Dimension("cannot eigendecompose an empty matrix".into()));
    }
    let scale = m
        .as_flat()
        .iter()
        .fold(R::zero(), |acc, v| if v.abs() > acc { v.abs() } else { acc });
    let asym_tol = R::of(1e3) * R::epsilon() * if scale > R::zero() { scale } else { R::one() };
    if m.max_asymmetry() > asym_tol {
        return Err(Error::Degenerate(format!(
            "matrix is not symmetric (max asymmetry {})",
            m.max_asymmetry()
        )));
    }

    let mut a = m.clone();
    let mut v = SquareMatrix::identity(n);
    let two = R::of(2.0);

    let off_norm = |a: &SquareMatrix<R>| -> R {
        let mut acc = R::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                let x = a.get(i, j);
                acc = acc + x * x;
            }
        }
        acc.sqrt()
    };
    let frob = {
        let mut acc = R::zero();
        for x in a.as_flat() {
            acc = acc + *x * *x;
        }
        acc.sqrt()
    };
    let target = R::epsilon() * if frob > R::zero() { frob } else { R::one() };

    const MAX_SWEEPS: usize = 64;
    for _sweep in 0..MAX_SWEEPS {
        if off_norm(&a) <= target {
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                // Entries already negligible relative to their diagonal are
                // zeroed outright; rotating on them only churns rounding noise.
                if apq.abs() <= R::epsilon() * (app.abs() + aqq.abs()) {
                    a.set(p, q, R::zero());
                    a.set(q, p, R::zero());
                    continue;
                }
                let tau = (aqq - app) / (two * apq);
                let t = if tau >= R::zero() {
                    R::one() / (tau + (R::one() + tau * tau).sqrt())
                } else {
                    R::one() / (tau - (R::one() + tau * tau).sqrt())
                };
                let c = R::one() / (R::one() + t * t).sqrt();
                let s = t * c;

                a.set(p, p, app - t * apq);
                a.set(q, q, aqq + t * apq);
                a.set(p, q, R::zero());
                a.set(q, p, R::zero());
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = a.get(r, p);
                    let arq = a.get(r, q);
                    a.set(r, p, c * arp - s * arq);
                    a.set(p, r, c * arp - s * arq);
                    a.set(r, q, s * arp + c * arq);
                    a.set(q, r, s * arp + c * arq);
                }
                for r in 0..n {
                    let vrp = v.get(r, p);
                    let vrq = v.get(r, q);
                    v.set(r, p, c * vrp - s * vrq);
                    v.set(r, q, s * vrp + c * vrq);
                }
            }
        }
    }

    // Sort eigenpairs ascending by eigenvalue for a deterministic layout.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a.get(i, i)
            .partial_cmp(&a.get(j, j))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let mut values = Vec::with_capacity(n);
    let mut vectors = SquareMatrix::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        values.push(a.get(src, src));
        for r in 0..n {
            vectors.set(r, dst, v.get(r, src));
        }
    }
    Ok(SymEigen { values, vectors })
}

impl<R: Real> SymEigen<R> {
    /// Rebuilds `vectors * diag(f(values)) * vectors^T`.
    pub fn recompose(&self, mut f: impl FnMut(R) -> R) -> SquareMatrix<R> {
        let n = self.values.len();
        let mut out = SquareMatrix::zeros(n);
        for k in 0..n {
            let fv = f(self.values[k]);
            if fv == R::zero() {
                continue;
            }
            for i in 0..n {
                let vik = self.vectors.get(i, k) * fv;
                if vik == R::zero() {
                    continue;
                }
                for j in 0..n {
                    let cur = out.get(i, j);
                    out.set(i, j, cur + vik * self.vectors.get(j, k));
                }
            }
        }
        out
    }
}
