//! Small dense linear algebra: square matrices, validated symmetric
//! matrices, Jacobi eigendecomposition and the symmetric matrix exponential.
//!
//! Everything here targets the tiny drift matrices of the fOU models
//! (d ≤ 8); no attempt is made at large-scale performance.

use thiserror::Error;

use crate::scalar::Scalar;

/// Relative tolerance for the symmetry validation of [`SymMatrix`].
pub const SYMMETRY_TOL: f64 = 1e-12;

const MAX_JACOBI_SWEEPS: usize = 64;

#[derive(Debug, Error)]
pub enum LinAlgError {
    #[error("matrix is not symmetric: max |a_ij - a_ji| = {max_asymmetry:.3e} exceeds {tol:.3e} relative")]
    NotSymmetric { max_asymmetry: f64, tol: f64 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("rows do not form a square matrix of dimension {dim}")]
    BadShape { dim: usize },
    #[error("matrix must be positive definite: smallest eigenvalue {min_eigenvalue:.6e}")]
    NotPositiveDefinite { min_eigenvalue: f64 },
}

/// Dense square matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> SquareMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![T::zero(); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.set(i, i, T::one());
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, LinAlgError> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(LinAlgError::BadShape { dim });
        }
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Ok(Self { dim, data })
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn diagonal(entries: &[T]) -> Self {
        let mut m = Self::zeros(entries.len());
        for (i, &v) in entries.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    /// Outer product `a ⊗ b`, entry (i, j) = `a[i] * b[j]`.
    pub fn outer(a: &[T], b: &[T]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        Self::from_fn(a.len(), |i, j| a[i] * b[j])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.dim + j] = v;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.dim + j] += v;
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        (0..self.dim).map(|i| (0..self.dim).map(|j| self.get(i, j)).collect()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self.get(j, i))
    }

    pub fn scale(&self, s: T) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|&v| v * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        let d = self.dim;
        Self::from_fn(d, |i, j| (0..d).map(|k| self.get(i, k) * other.get(k, j)).sum())
    }

    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        debug_assert_eq!(self.dim, v.len());
        (0..self.dim)
            .map(|i| (0..self.dim).map(|k| self.get(i, k) * v[k]).sum())
            .collect()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    /// Exact average with the transpose; used after eigen-based assembly to
    /// return bit-symmetric results.
    pub fn symmetrized(&self) -> Self {
        let half = T::lit(0.5);
        Self::from_fn(self.dim, |i, j| (self.get(i, j) + self.get(j, i)) * half)
    }

    pub fn max_asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// Square matrix validated to be symmetric within [`SYMMETRY_TOL`] relative
/// to its largest entry.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix<T> {
    inner: SquareMatrix<T>,
}

impl<T: Scalar> SymMatrix<T> {
    pub fn new(m: SquareMatrix<T>) -> Result<Self, LinAlgError> {
        let scale = m.max_abs().max(T::one());
        let tol = T::lit(SYMMETRY_TOL).max(T::epsilon() * T::lit(16.0));
        let asym = m.max_asymmetry();
        if asym > tol * scale {
            return Err(LinAlgError::NotSymmetric {
                max_asymmetry: asym.as_f64(),
                tol: (tol * scale).as_f64(),
            });
        }
        Ok(Self { inner: m.symmetrized() })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, LinAlgError> {
        Self::new(SquareMatrix::from_rows(rows)?)
    }

    pub fn identity(dim: usize) -> Self {
        Self { inner: SquareMatrix::identity(dim) }
    }

    pub fn diagonal(entries: &[T]) -> Self {
        Self { inner: SquareMatrix::diagonal(entries) }
    }

    pub(crate) fn from_symmetric_unchecked(m: SquareMatrix<T>) -> Self {
        Self { inner: m.symmetrized() }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.inner.get(i, j)
    }

    pub fn as_matrix(&self) -> &SquareMatrix<T> {
        &self.inner
    }

    pub fn into_matrix(self) -> SquareMatrix<T> {
        self.inner
    }
}

/// Spectral decomposition `M = Q diag(λ) Qᵀ` with ascending eigenvalues.
#[derive(Debug, Clone)]
pub struct EigDecomp<T> {
    /// Eigenvalues sorted ascending: λ₁ ≤ … ≤ λ_d.
    pub eigenvalues: Vec<T>,
    /// Orthogonal matrix whose columns are the matching eigenvectors, with
    /// the sign convention that the first nonzero component of each column
    /// is positive.
    pub basis: SquareMatrix<T>,
}

impl<T: Scalar> EigDecomp<T> {
    pub fn reconstruct(&self) -> SquareMatrix<T> {
        self.apply(|l| l)
    }

    /// Assembles `Q diag(f(λ)) Qᵀ`, the spectral function calculus.
    pub fn apply(&self, f: impl Fn(T) -> T) -> SquareMatrix<T> {
        let mapped: Vec<T> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        self.apply_values(&mapped)
    }

    /// Assembles `Q diag(v) Qᵀ` from precomputed spectral values.
    pub fn apply_values(&self, values: &[T]) -> SquareMatrix<T> {
        let d = self.eigenvalues.len();
        debug_assert_eq!(values.len(), d);
        let q = &self.basis;
        let mut out = SquareMatrix::zeros(d);
        for (k, &fk) in values.iter().enumerate() {
            for i in 0..d {
                let qik = q.get(i, k) * fk;
                for j in 0..d {
                    out.add_to(i, j, qik * q.get(j, k));
                }
            }
        }
        out.symmetrized()
    }

    pub fn min_eigenvalue(&self) -> T {
        self.eigenvalues[0]
    }

    pub fn max_eigenvalue(&self) -> T {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }
}

/// Spectral decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// The sweep order (p, q) is fixed row-by-row, so the result is deterministic
/// across runs and platforms with the same scalar type.
pub fn sym_eig<T: Scalar>(m: &SymMatrix<T>) -> EigDecomp<T> {
    let d = m.dim();
    let mut a = m.as_matrix().clone();
    let mut q = SquareMatrix::identity(d);

    if d == 1 {
        return EigDecomp { eigenvalues: vec![a.get(0, 0)], basis: q };
    }

    let norm = a.frobenius_norm().max(T::min_positive_value());
    let stop = T::epsilon() * norm;
    for _ in 0..MAX_JACOBI_SWEEPS {
        let mut off = T::zero();
        for i in 0..d {
            for j in (i + 1)..d {
                off += a.get(i, j) * a.get(i, j);
            }
        }
        if off.sqrt() <= stop {
            break;
        }
        for p in 0..(d - 1) {
            for r in (p + 1)..d {
                let apq = a.get(p, r);
                if apq.abs() <= T::epsilon() * norm * T::lit(1e-3) {
                    continue;
                }
                let theta = (a.get(r, r) - a.get(p, p)) / (T::lit(2.0) * apq);
                let t = {
                    let root = (theta * theta + T::one()).sqrt();
                    if theta >= T::zero() {
                        T::one() / (theta + root)
                    } else {
                        -T::one() / (-theta + root)
                    }
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                // A <- Jᵀ A J on rows/columns p and r.
                for k in 0..d {
                    let akp = a.get(k, p);
                    let akr = a.get(k, r);
                    a.set(k, p, c * akp - s * akr);
                    a.set(k, r, s * akp + c * akr);
                }
                for k in 0..d {
                    let apk = a.get(p, k);
                    let ark = a.get(r, k);
                    a.set(p, k, c * apk - s * ark);
                    a.set(r, k, s * apk + c * ark);
                }
                for k in 0..d {
                    let qkp = q.get(k, p);
                    let qkr = q.get(k, r);
                    q.set(k, p, c * qkp - s * qkr);
                    q.set(k, r, s * qkp + c * qkr);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        a.get(i, i).partial_cmp(&a.get(j, j)).expect("eigenvalues must be ordered")
    });

    let eigenvalues: Vec<T> = order.iter().map(|&k| a.get(k, k)).collect();
    let mut basis = SquareMatrix::zeros(d);
    for (col, &k) in order.iter().enumerate() {
        // Sign convention: first component of nonnegligible magnitude positive.
        let mut flip = false;
        for i in 0..d {
            let v = q.get(i, k);
            if v.abs() > T::epsilon() * T::lit(64.0) {
                flip = v < T::zero();
                break;
            }
        }
        for i in 0..d {
            let v = q.get(i, k);
            basis.set(i, col, if flip { -v } else { v });
        }
    }

    EigDecomp { eigenvalues, basis }
}

/// Matrix exponential `e^{-M t}` of a symmetric matrix, assembled from the
/// spectral decomposition as `Q diag(e^{-λᵢ t}) Qᵀ`.
pub fn mat_exp_sym<T: Scalar>(m: &SymMatrix<T>, t: T) -> SymMatrix<T> {
    let eig = sym_eig(m);
    SymMatrix::from_symmetric_unchecked(eig.apply(|l| (-l * t).exp()))
}
