//! Small dense linear algebra: just what the trainers and the data-driven
//! network designs need.
//!
//! Matrices are row-major. Vectors are plain slices / `Vec`s.

use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::ops::{Index, IndexMut};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("matrix is not positive definite (pivot {pivot} non-positive)")]
    NotPositiveDefinite { pivot: usize },
    #[error("empty matrix")]
    Empty,
}

pub type Result<T, E = LinalgError> = std::result::Result<T, E>;

/// Dense vector alias.
pub type Vector<T> = Vec<T>;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
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

    pub fn from_diag(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(LinalgError::DimensionMismatch("ragged rows".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Column matrix from a vector.
    pub fn column(v: &[T]) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[T]> {
        // chunks_exact(0) panics; a 0-column matrix has no meaningful rows.
        self.data.chunks_exact(self.cols.max(1))
    }

    pub fn col_vec(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// New matrix made of the selected rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matvec(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "matvec {}x{} by vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok(self.iter_rows().map(|r| dot_unchecked(r, v)).collect())
    }

    /// `selfᵀ · v` without forming the transpose.
    pub fn tr_matvec(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.rows {
            return Err(LinalgError::DimensionMismatch(format!(
                "transposed matvec {}x{} by vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        let mut out = vec![T::zero(); self.cols];
        for (r, &vi) in self.iter_rows().zip(v) {
            for (o, &a) in out.iter_mut().zip(r) {
                *o += a * vi;
            }
        }
        Ok(out)
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(LinalgError::DimensionMismatch(format!(
                "matmul {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · self`, exploiting symmetry.
    pub fn gram(&self) -> Self {
        let n = self.cols;
        let mut g = Self::zeros(n, n);
        for r in self.iter_rows() {
            for i in 0..n {
                let ri = r[i];
                if ri == T::zero() {
                    continue;
                }
                let gi = &mut g.data[i * n..(i + 1) * n];
                for j in i..n {
                    gi[j] += ri * r[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                g.data[i * n + j] = g.data[j * n + i];
            }
        }
        g
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Frobenius norm.
    pub fn norm_fro(&self) -> T {
        norm2(&self.data)
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub(crate) fn dot_unchecked<T: Scalar>(u: &[T], v: &[T]) -> T {
    u.iter().zip(v).fold(T::zero(), |acc, (&a, &b)| acc + a * b)
}

pub fn dot<T: Scalar>(u: &[T], v: &[T]) -> Result<T> {
    if u.len() != v.len() {
        return Err(LinalgError::DimensionMismatch(format!(
            "dot of lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    Ok(dot_unchecked(u, v))
}

/// Euclidean norm, scaled to avoid overflow/underflow.
pub fn norm2<T: Scalar>(v: &[T]) -> T {
    let scale = v.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    if scale == T::zero() || !scale.is_finite() {
        return scale;
    }
    let ss: T = v.iter().map(|&x| (x / scale) * (x / scale)).sum();
    scale * ss.sqrt()
}

pub fn matvec<T: Scalar>(a: &Matrix<T>, v: &[T]) -> Result<Vec<T>> {
    a.matvec(v)
}

pub fn matmul<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    a.matmul(b)
}

pub fn transpose<T: Scalar>(a: &Matrix<T>) -> Matrix<T> {
    a.transpose()
}

/// Solves `a·x = b` for symmetric positive definite `a` by Cholesky
/// factorization. A non-positive pivot is reported, never regularized away.
pub fn solve_spd<T: Scalar>(a: &Matrix<T>, b: &[T]) -> Result<Vec<T>> {
    let n = a.rows();
    if n == 0 {
        return Err(LinalgError::Empty);
    }
    if a.cols() != n || b.len() != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "solve_spd with {}x{} matrix and rhs of length {}",
            a.rows(),
            a.cols(),
            b.len()
        )));
    }
    let tol = T::lit(1e-10);
    for i in 0..n {
        for j in 0..i {
            let (x, y) = (a[(i, j)], a[(j, i)]);
            if (x - y).abs() > tol * x.abs().max(y.abs()).max(T::one()) {
                return Err(LinalgError::NotSymmetric);
            }
        }
    }

    // Lower factor, row-major, only j <= i is used.
    let mut l = Matrix::<T>::zeros(n, n);
    for j in 0..n {
        let lj = l.row(j);
        let d = a[(j, j)] - dot_unchecked(&lj[..j], &lj[..j]);
        if !(d > T::zero()) || !d.is_finite() {
            return Err(LinalgError::NotPositiveDefinite { pivot: j });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let s = dot_unchecked(&l.row(i)[..j], &l.row(j)[..j]);
            l[(i, j)] = (a[(i, j)] - s) / djj;
        }
    }

    // L·y = b, then Lᵀ·x = y.
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        let s = dot_unchecked(&l.row(i)[..i], &y[..i]);
        y[i] = (b[i] - s) / l[(i, i)];
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    Ok(x)
}

/// Minimum-norm least-squares solution of `a·X ≈ b` (Frobenius norm).
///
/// Householder QR with column pivoting determines the numerical rank; a
/// rank-deficient trailing block is eliminated with right-hand Householder
/// reflections (complete orthogonal decomposition), which yields the
/// minimum-norm minimizer.
pub fn least_squares<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    let (m, n) = (a.rows(), a.cols());
    if a.rows() != b.rows() {
        return Err(LinalgError::DimensionMismatch(format!(
            "least_squares with {}x{} matrix and {}x{} rhs",
            m,
            n,
            b.rows(),
            b.cols()
        )));
    }
    if m == 0 || n == 0 {
        return Err(LinalgError::Empty);
    }
    let k = b.cols();

    // Column-major working copies: each column contiguous.
    let mut cols: Vec<Vec<T>> = (0..n).map(|j| a.col_vec(j)).collect();
    let mut rhs: Vec<Vec<T>> = (0..k).map(|j| b.col_vec(j)).collect();
    let mut perm: Vec<usize> = (0..n).collect();
    let steps = m.min(n);
    let mut diag = Vec::with_capacity(steps);
    let mut rank = 0;
    let rcond = T::lit(1e-14);

    for step in 0..steps {
        // Pivot: remaining column with the largest trailing norm.
        let (best, best_norm) = (step..n)
            .map(|j| (j, norm2(&cols[j][step..])))
            .fold((step, -T::one()), |acc, c| if c.1 > acc.1 { c } else { acc });
        if step == 0 && best_norm == T::zero() {
            break;
        }
        if step > 0 && best_norm <= rcond * diag[0] {
            break;
        }
        cols.swap(step, best);
        perm.swap(step, best);

        // Householder vector for cols[step][step..].
        let x = &mut cols[step];
        let alpha = x[step];
        let beta = if alpha >= T::zero() { -best_norm } else { best_norm };
        let v0 = alpha - beta;
        // v = (1, x[step+1..]/v0), tau = (beta - alpha)/beta
        for xi in x[step + 1..].iter_mut() {
            *xi /= v0;
        }
        x[step] = beta;
        let tau = (beta - alpha) / beta;
        diag.push(beta.abs());
        rank += 1;

        let (head, tail) = cols.split_at_mut(step + 1);
        let v = &head[step][step + 1..];
        let apply = |c: &mut [T]| {
            let s = c[step] + dot_unchecked(v, &c[step + 1..]);
            let f = tau * s;
            c[step] -= f;
            for (ci, &vi) in c[step + 1..].iter_mut().zip(v) {
                *ci -= f * vi;
            }
        };
        for c in tail.iter_mut() {
            apply(c);
        }
        for r in rhs.iter_mut() {
            apply(r);
        }
    }

    let mut x = Matrix::<T>::zeros(n, k);
    if rank == 0 {
        return Ok(x);
    }

    // R[i][j] for i < rank, stored row-major as rank x n.
    let r = rank;
    let mut rm = vec![T::zero(); r * n];
    for (j, c) in cols.iter().enumerate() {
        for i in 0..r.min(j + 1) {
            rm[i * n + j] = c[i];
        }
    }

    // Eliminate columns r..n from the trapezoid with right reflections,
    // bottom row first. Each reflector acts on coordinates {i} ∪ {r..n}.
    let mut reflectors: Vec<(usize, Vec<T>, T)> = Vec::new();
    if r < n {
        for i in (0..r).rev() {
            let row = &rm[i * n..(i + 1) * n];
            let mut z: Vec<T> = Vec::with_capacity(1 + n - r);
            z.push(row[i]);
            z.extend_from_slice(&row[r..]);
            let norm = norm2(&z);
            if norm == T::zero() {
                continue;
            }
            let alpha = z[0];
            let beta = if alpha >= T::zero() { -norm } else { norm };
            let v0 = alpha - beta;
            let mut v = z;
            v[0] = T::one();
            for vi in v[1..].iter_mut() {
                *vi /= v0;
            }
            let tau = (beta - alpha) / beta;
            // Apply to rows 0..=i.
            for p in 0..=i {
                let rp = &mut rm[p * n..(p + 1) * n];
                let s = rp[i] + dot_unchecked(&v[1..], &rp[r..]);
                let f = tau * s;
                rp[i] -= f;
                for (c, &vi) in rp[r..].iter_mut().zip(&v[1..]) {
                    *c -= f * vi;
                }
            }
            reflectors.push((i, v, tau));
        }
    }

    for col in 0..k {
        // Back substitution with the leading r x r triangle.
        let c = &rhs[col];
        let mut u = vec![T::zero(); n];
        for i in (0..r).rev() {
            let mut s = c[i];
            for j in (i + 1)..r {
                s -= rm[i * n + j] * u[j];
            }
            u[i] = s / rm[i * n + i];
        }
        // z = H_{r-1} ... H_0 u; reflectors were recorded from i = r-1 down.
        for (i, v, tau) in reflectors.iter().rev() {
            let i = *i;
            let s = u[i] + dot_unchecked(&v[1..], &u[r..]);
            let f = *tau * s;
            u[i] -= f;
            for (uj, &vj) in u[r..].iter_mut().zip(&v[1..]) {
                *uj -= f * vj;
            }
        }
        for (j, &p) in perm.iter().enumerate() {
            x[(p, col)] = u[j];
        }
    }
    Ok(x)
}
