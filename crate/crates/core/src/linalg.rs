//! Small dense linear algebra: row-major matrices, LU with partial pivoting,
//! full-pivot rank, cyclic Jacobi for symmetric matrices, minimum-norm least
//! squares and the discrete Lyapunov equation.
//!
//! Dimensions in this crate stay in the low thousands at most, so everything
//! is direct and allocation-simple.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is singular to working precision")]
    Singular,
    #[error("rows have unequal lengths")]
    Ragged,
    #[error("iteration did not converge: {0}")]
    NoConvergence(&'static str),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(LinalgError::Ragged);
        }
        Ok(Self { rows: rows.len(), cols, data: rows.concat() })
    }

    /// `diag(v)`.
    pub fn diagonal(v: &[T]) -> Self {
        let mut m = Self::zeros(v.len(), v.len());
        for (i, &x) in v.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
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
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
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

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `M x`.
    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(self.cols, x.len(), "mul_vec shape mismatch");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `xᵀ M`.
    pub fn vec_mul(&self, x: &[T]) -> Vec<T> {
        assert_eq!(self.rows, x.len(), "vec_mul shape mismatch");
        let mut out = vec![T::zero(); self.cols];
        for (i, &xi) in x.iter().enumerate() {
            axpy(&mut out, xi, self.row(i));
        }
        out
    }

    pub fn add(&self, rhs: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let data = self.data.iter().zip(&rhs.data).map(|(&a, &b)| a + b).collect();
        Self { rows: self.rows, cols: self.cols, data }
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let data = self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect();
        Self { rows: self.rows, cols: self.cols, data }
    }

    pub fn scale(&self, s: T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&a| a * s).collect() }
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &a| m.max(a.abs()))
    }

    /// Induced ∞-norm (maximum absolute row sum).
    pub fn norm_inf(&self) -> T {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|a| a.abs()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    pub fn frobenius(&self) -> T {
        norm(&self.data)
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|a| a.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| U::lit(a.to_f64_lossy())).collect(),
        }
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

#[inline]
pub fn norm_sq<T: Scalar>(a: &[T]) -> T {
    dot(a, a)
}

#[inline]
pub fn norm<T: Scalar>(a: &[T]) -> T {
    norm_sq(a).sqrt()
}

/// `y += alpha * x`.
#[inline]
pub fn axpy<T: Scalar>(y: &mut [T], alpha: T, x: &[T]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

pub fn add<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x + y).collect()
}

pub fn max_abs<T: Scalar>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

/// LU factorization `PA = LU` with partial pivoting.
#[derive(Clone, Debug)]
pub struct Lu<T> {
    lu: Matrix<T>,
    perm: Vec<usize>,
}

impl<T: Scalar> Lu<T> {
    pub fn factor(a: &Matrix<T>) -> Result<Self, LinalgError> {
        if !a.is_square() {
            return Err(LinalgError::DimensionMismatch("LU needs a square matrix".into()));
        }
        let n = a.rows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs().max(T::min_positive_value());
        let tiny = scale * T::epsilon() * T::from_count(n.max(1));
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -T::one()), |best, cur| if cur.1 > best.1 { cur } else { best });
            if !(pivot > tiny) {
                return Err(LinalgError::Singular);
            }
            if p != k {
                for j in 0..n {
                    lu.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let d = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / d;
                lu[(i, k)] = f;
                if f != T::zero() {
                    for j in k + 1..n {
                        let u = lu[(k, j)];
                        lu[(i, j)] -= f * u;
                    }
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.lu.rows()
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(b.len(), n, "rhs length");
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let s = dot(&row[..i], &x[..i]);
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let s = dot(&row[i + 1..], &x[i + 1..]);
            x[i] = (x[i] - s) / row[i];
        }
        x
    }

    /// Solves `A X = B` column by column.
    pub fn solve_matrix(&self, b: &Matrix<T>) -> Matrix<T> {
        let mut out = Matrix::zeros(b.rows(), b.cols());
        for j in 0..b.cols() {
            let x = self.solve(&b.column(j));
            for (i, v) in x.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        out
    }

    pub fn inverse(&self) -> Matrix<T> {
        self.solve_matrix(&Matrix::identity(self.dim()))
    }
}

/// Numerical rank by Gaussian elimination with complete pivoting; pivots
/// below `rel_tol · max|a_ij|` count as zero.
pub fn rank<T: Scalar>(a: &Matrix<T>, rel_tol: T) -> usize {
    let (r, c) = (a.rows(), a.cols());
    let mut m = a.clone();
    let thresh = rel_tol * a.max_abs();
    let mut rank = 0;
    for k in 0..r.min(c) {
        let mut best = (k, k, T::zero());
        for i in k..r {
            for j in k..c {
                let v = m[(i, j)].abs();
                if v > best.2 {
                    best = (i, j, v);
                }
            }
        }
        if !(best.2 > thresh) || best.2 == T::zero() {
            break;
        }
        let (pi, pj, _) = best;
        for j in 0..c {
            m.data.swap(k * c + j, pi * c + j);
        }
        for i in 0..r {
            m.data.swap(i * c + k, i * c + pj);
        }
        let d = m[(k, k)];
        for i in k + 1..r {
            let f = m[(i, k)] / d;
            for j in k..c {
                let u = m[(k, j)];
                m[(i, j)] -= f * u;
            }
        }
        rank += 1;
    }
    rank
}

/// Eigen-decomposition of a symmetric matrix. Eigenvalues ascend; column `i`
/// of `vectors` belongs to `values[i]`.
#[derive(Clone, Debug)]
pub struct SymmetricEigen<T> {
    pub values: Vec<T>,
    pub vectors: Matrix<T>,
}

/// Cyclic Jacobi rotations. Only the upper triangle is trusted to be the
/// intended symmetric matrix; the input is symmetrized first.
pub fn symmetric_eigen<T: Scalar>(a: &Matrix<T>) -> Result<SymmetricEigen<T>, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::DimensionMismatch("eigen needs a square matrix".into()));
    }
    let n = a.rows();
    let half = T::lit(0.5);
    let mut m = Matrix::from_fn(n, n, |i, j| half * (a[(i, j)] + a[(j, i)]));
    let mut v = Matrix::identity(n);
    let scale = m.frobenius().max(T::min_positive_value());
    let mut converged = n <= 1;
    for _sweep in 0..100 {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off.sqrt() <= T::epsilon() * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(LinalgError::NoConvergence("Jacobi sweeps"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].partial_cmp(&m[(j, j)]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(SymmetricEigen { values, vectors })
}

/// Eigenvalues of `AᵀA`, i.e. squared singular values of `A` (ascending,
/// padded with zeros when `A` has fewer rows than columns).
pub fn squared_singular_values<T: Scalar>(a: &Matrix<T>) -> Result<Vec<T>, LinalgError> {
    let gram = a.transpose().matmul(a);
    let mut vals = symmetric_eigen(&gram)?.values;
    for v in &mut vals {
        *v = v.max(T::zero());
    }
    Ok(vals)
}

/// Smallest eigenvalue of a PSD spectrum that is not numerically zero.
pub fn smallest_nonzero<T: Scalar>(spectrum: &[T], rel_tol: T) -> Option<T> {
    let top = spectrum.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
    spectrum.iter().copied().filter(|&v| v > rel_tol * top).fold(None, |m, v| {
        Some(m.map_or(v, |m: T| m.min(v)))
    })
}

/// Minimum-norm least-squares solution of `A x ≈ b` through the
/// eigen-decomposition of `AᵀA` (pseudo-inverse with relative cutoff).
pub fn least_squares<T: Scalar>(a: &Matrix<T>, b: &[T], rel_tol: T) -> Result<Vec<T>, LinalgError> {
    if a.rows() != b.len() {
        return Err(LinalgError::DimensionMismatch("least squares rhs".into()));
    }
    let gram = a.transpose().matmul(a);
    let eig = symmetric_eigen(&gram)?;
    let atb = a.vec_mul(b);
    let top = eig.values.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
    let n = a.cols();
    let mut x = vec![T::zero(); n];
    for (i, &lam) in eig.values.iter().enumerate() {
        if lam <= rel_tol * top || lam <= T::zero() {
            continue;
        }
        let vi = eig.vectors.column(i);
        let coef = dot(&vi, &atb) / lam;
        axpy(&mut x, coef, &vi);
    }
    Ok(x)
}

/// Solves `S = A S Aᵀ + Q` for a stable `A` by the doubling iteration
/// `S ← S + A S Aᵀ`, `A ← A²`.
pub fn discrete_lyapunov<T: Scalar>(a: &Matrix<T>, q: &Matrix<T>) -> Result<Matrix<T>, LinalgError> {
    if !a.is_square() || a.rows() != q.rows() || !q.is_square() {
        return Err(LinalgError::DimensionMismatch("Lyapunov operands".into()));
    }
    let mut s = q.clone();
    let mut ak = a.clone();
    for _ in 0..64 {
        let inc = ak.matmul(&s).matmul(&ak.transpose());
        s = s.add(&inc);
        if !s.is_finite() {
            break;
        }
        if inc.max_abs() <= T::epsilon() * s.max_abs() {
            let sym = Matrix::from_fn(s.rows(), s.cols(), |i, j| T::lit(0.5) * (s[(i, j)] + s[(j, i)]));
            return Ok(sym);
        }
        ak = ak.matmul(&ak);
    }
    Err(LinalgError::NoConvergence("Lyapunov doubling (is A stable?)"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lu_solves_and_inverts() {
        let a = Matrix::from_rows(&[vec![4.0, 3.0, 0.0], vec![6.0, 3.0, 1.0], vec![0.0, 2.0, 5.0]]).unwrap();
        let lu = Lu::factor(&a).unwrap();
        let x = lu.solve(&[1.0, 2.0, 3.0]);
        let back = a.mul_vec(&x);
        for (b, e) in back.iter().zip([1.0, 2.0, 3.0]) {
            assert_relative_eq!(*b, e, epsilon = 1e-13);
        }
        let prod = a.matmul(&lu.inverse());
        assert!(prod.sub(&Matrix::identity(3)).max_abs() < 1e-14);
    }

    #[test]
    fn lu_rejects_singular() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert_eq!(Lu::factor(&a).unwrap_err(), LinalgError::Singular);
    }

    #[test]
    fn rank_of_outer_product() {
        let a = Matrix::from_fn(4, 3, |i, j| (i + 1) as f64 * (j as f64 - 1.5));
        assert_eq!(rank(&a, 1e-12), 1);
        assert_eq!(rank(&Matrix::<f64>::identity(5), 1e-12), 5);
        assert_eq!(rank(&Matrix::<f64>::zeros(3, 3), 1e-12), 0);
    }

    #[test]
    fn jacobi_reconstructs() {
        let a = Matrix::from_rows(&[vec![2.0, -1.0, 0.0], vec![-1.0, 2.0, -1.0], vec![0.0, -1.0, 2.0]]).unwrap();
        let e = symmetric_eigen(&a).unwrap();
        let s2 = 2f64.sqrt();
        assert_relative_eq!(e.values[0], 2.0 - s2, epsilon = 1e-13);
        assert_relative_eq!(e.values[1], 2.0, epsilon = 1e-13);
        assert_relative_eq!(e.values[2], 2.0 + s2, epsilon = 1e-13);
        let rebuilt = e.vectors.matmul(&Matrix::diagonal(&e.values)).matmul(&e.vectors.transpose());
        assert!(rebuilt.sub(&a).max_abs() < 1e-13);
    }

    #[test]
    fn least_squares_min_norm() {
        // Rank-deficient: second column duplicates the first.
        let a = Matrix::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap();
        let x = least_squares(&a, &[1.0, 2.0], 1e-12).unwrap();
        assert_relative_eq!(x[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(x[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn lyapunov_scalar_fixed_point() {
        let a = Matrix::from_rows(&[vec![0.5]]).unwrap();
        let q = Matrix::from_rows(&[vec![1.0]]).unwrap();
        let s = discrete_lyapunov(&a, &q).unwrap();
        assert_relative_eq!(s[(0, 0)], 1.0 / 0.75, epsilon = 1e-14);
    }

    #[test]
    fn generic_over_f32() {
        let a: Matrix<f32> = Matrix::from_rows(&[vec![3.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let e = symmetric_eigen(&a).unwrap();
        assert!((e.values[0] - 2.0).abs() < 1e-5 && (e.values[1] - 4.0).abs() < 1e-5);
    }
}
