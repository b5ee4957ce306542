//! Dense kernels for small symmetric matrices.
//!
//! Everything here targets dimensions of at most a dozen or so. Storage is
//! row-major. Symmetric eigenproblems are solved with cyclic Jacobi
//! rotations, which is slow for large matrices but accurate to the last few
//! ulps for the sizes we care about.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::math;

/// Relative tolerance below which a negative eigenvalue is treated as round-off.
pub const PSD_REL_TOL: f64 = 1e-10;
/// Relative floor an eigenvalue must exceed to count as strictly positive.
pub const SPD_REL_FLOOR: f64 = 1e-12;

/// `psd_tol` for a matrix of spectral norm `norm`.
pub fn psd_tolerance(norm: f64) -> f64 {
    PSD_REL_TOL * (1.0 + norm)
}

/// `spd_floor` for a matrix of spectral norm `norm`.
pub fn spd_floor(norm: f64) -> f64 {
    SPD_REL_FLOOR * (1.0 + norm)
}

#[derive(Debug, Clone, PartialEq)]
pub enum MatrixError {
    DimMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    NotSquare {
        rows: usize,
        cols: usize,
    },
    NotPsd {
        min_eigenvalue: f64,
        tolerance: f64,
    },
    Singular {
        min_eigenvalue: f64,
        floor: f64,
    },
}

impl fmt::Display for MatrixError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixError::DimMismatch { expected, found } => write!(
                f,
                "dimension mismatch: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            MatrixError::NotSquare { rows, cols } => {
                write!(f, "matrix is not square ({rows}x{cols})")
            }
            MatrixError::NotPsd { min_eigenvalue, tolerance } => write!(
                f,
                "matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e}, tolerance {tolerance:e})"
            ),
            MatrixError::Singular { min_eigenvalue, floor } => write!(
                f,
                "matrix is not positive definite (min eigenvalue {min_eigenvalue:e}, floor {floor:e})"
            ),
        }
    }
}

impl core::error::Error for MatrixError {}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, MatrixError> {
        if data.len() != rows * cols {
            return Err(MatrixError::DimMismatch {
                expected: (rows, cols),
                found: (data.len(), 1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. All rows must have equal length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, MatrixError> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.as_ref().len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            let row = row.as_ref();
            if row.len() != c {
                return Err(MatrixError::DimMismatch {
                    expected: (r, c),
                    found: (r, row.len()),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: r,
            cols: c,
            data,
        })
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![v],
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
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// Matrix product. Panics on incompatible shapes.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul: inner dimensions differ");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[k * other.cols..(k + 1) * other.cols];
                let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "mul_vec: dimension mismatch");
        (0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.shape(), other.shape(), "add: shape mismatch");
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.shape(), other.shape(), "sub: shape mismatch");
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// `A Aᵀ`, exactly symmetric.
    pub fn gram(&self) -> SymMatrix {
        let n = self.rows;
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v: f64 = (0..self.cols)
                    .map(|k| self.get(i, k) * self.get(j, k))
                    .sum();
                out.data[i * n + j] = v;
                out.data[j * n + i] = v;
            }
        }
        SymMatrix(out)
    }

    /// `Aᵀ A`, exactly symmetric.
    pub fn gram_t(&self) -> SymMatrix {
        self.transpose().gram()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |acc, (a, b)| acc.max(math::abs(a - b)))
    }
}

/// Eigen-decomposition `A = V diag(values) Vᵀ`, eigenvalues ascending,
/// eigenvectors stored as the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl SymEigen {
    /// Rebuilds `V diag(f(λ)) Vᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let n = self.values.len();
        let fv: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let v = &self.vectors;
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let s: f64 = (0..n).map(|k| v.get(i, k) * fv[k] * v.get(j, k)).sum();
                out.set(i, j, s);
                out.set(j, i, s);
            }
        }
        SymMatrix(out)
    }

    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}

/// Square matrix with exactly equal mirrored entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    /// Symmetrizes `m` as `(m + mᵀ)/2`.
    pub fn from_matrix(m: Matrix) -> Result<Self, MatrixError> {
        if m.rows != m.cols {
            return Err(MatrixError::NotSquare {
                rows: m.rows,
                cols: m.cols,
            });
        }
        let mut m = m;
        symmetrize_in_place(&mut m.data, m.rows);
        Ok(SymMatrix(m))
    }

    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self, MatrixError> {
        Self::from_matrix(Matrix::from_row_major(n, n, data)?)
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(Matrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(Matrix::identity(n))
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        SymMatrix(Matrix::from_diag(diag))
    }

    pub fn scalar(v: f64) -> Self {
        SymMatrix(Matrix::scalar(v))
    }

    /// Wraps a flat buffer that the caller guarantees to be symmetric.
    pub(crate) fn from_symmetric_unchecked(n: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), n * n);
        SymMatrix(Matrix {
            rows: n,
            cols: n,
            data,
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.rows
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.get(i, i)).sum()
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(self.0.add(&other.0))
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(self.0.sub(&other.0))
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        SymMatrix(self.0.scale(s))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.0.mul_vec(x)
    }

    /// `B A Bᵀ` for any `B` with `B.cols() == dim`.
    pub fn congruence(&self, b: &Matrix) -> SymMatrix {
        let tmp = b.matmul(&self.0);
        let mut out = tmp.matmul(&b.transpose());
        symmetrize_in_place(&mut out.data, out.rows);
        SymMatrix(out)
    }

    pub fn eigen(&self) -> SymEigen {
        jacobi_eigen(&self.0)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigen().min()
    }

    /// Spectral norm, i.e. the largest absolute eigenvalue.
    pub fn norm(&self) -> f64 {
        let e = self.eigen();
        math::abs(e.min()).max(math::abs(e.max()))
    }

    pub fn sqrt(&self) -> Result<SymMatrix, MatrixError> {
        sym_sqrt(self)
    }

    /// Lower Cholesky factor. Requires strict positive definiteness.
    pub fn cholesky(&self) -> Result<Matrix, MatrixError> {
        let n = self.dim();
        let mut l = self.0.data.clone();
        if !kernel::cholesky_in_place(&mut l, n) {
            let min_eigenvalue = self.min_eigenvalue();
            return Err(MatrixError::Singular {
                min_eigenvalue,
                floor: spd_floor(self.norm()),
            });
        }
        Ok(Matrix {
            rows: n,
            cols: n,
            data: l,
        })
    }

    pub fn inverse(&self) -> Result<SymMatrix, MatrixError> {
        let x = solve_spd(self, &Matrix::identity(self.dim()))?;
        SymMatrix::from_matrix(x)
    }

    pub fn solve_vec(&self, rhs: &[f64]) -> Result<Vec<f64>, MatrixError> {
        let b = Matrix::from_row_major(rhs.len(), 1, rhs.to_vec())?;
        Ok(solve_spd(self, &b)?.into_vec())
    }

    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        self.0.max_abs_diff(&other.0)
    }
}

fn symmetrize_in_place(a: &mut [f64], n: usize) {
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (a[i * n + j] + a[j * n + i]);
            a[i * n + j] = v;
            a[j * n + i] = v;
        }
    }
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix.
fn jacobi_eigen(a: &Matrix) -> SymEigen {
    let n = a.rows;
    let mut m = a.data.clone();
    let mut v = Matrix::identity(n).data;
    if n > 1 {
        let scale: f64 = m.iter().map(|x| x * x).sum::<f64>();
        for _sweep in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| m[i * n + j] * m[i * n + j])
                .sum();
            if off == 0.0 || off <= 1e-32 * scale {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = m[p * n + q];
                    if apq == 0.0 {
                        continue;
                    }
                    let app = m[p * n + p];
                    let aqq = m[q * n + q];
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = {
                        let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                        sign / (math::abs(theta) + math::sqrt(theta * theta + 1.0))
                    };
                    let c = 1.0 / math::sqrt(t * t + 1.0);
                    let s = t * c;
                    // A' = Jᵀ A J with J the (p, q) rotation.
                    for k in 0..n {
                        let akp = m[k * n + p];
                        let akq = m[k * n + q];
                        m[k * n + p] = c * akp - s * akq;
                        m[k * n + q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = m[p * n + k];
                        let aqk = m[q * n + k];
                        m[p * n + k] = c * apk - s * aqk;
                        m[q * n + k] = s * apk + c * aqk;
                    }
                    m[p * n + q] = 0.0;
                    m[q * n + p] = 0.0;
                    for k in 0..n {
                        let vkp = v[k * n + p];
                        let vkq = v[k * n + q];
                        v[k * n + p] = c * vkp - s * vkq;
                        v[k * n + q] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i * n + i].total_cmp(&m[j * n + j]));
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (new, &old) in order.iter().enumerate() {
        for k in 0..n {
            vectors.set(k, new, v[k * n + old]);
        }
    }
    SymEigen { values, vectors }
}

/// Principal square root of a positive-semidefinite matrix.
///
/// Eigenvalues in `[-psd_tol, 0)` are clamped to zero.
pub fn sym_sqrt(a: &SymMatrix) -> Result<SymMatrix, MatrixError> {
    let e = a.eigen();
    let norm = math::abs(e.min()).max(math::abs(e.max()));
    let tol = psd_tolerance(norm);
    if e.min() < -tol {
        return Err(MatrixError::NotPsd {
            min_eigenvalue: e.min(),
            tolerance: tol,
        });
    }
    Ok(e.reconstruct_with(|l| math::sqrt(l.max(0.0))))
}

/// Spectral norm (largest singular value) of an arbitrary matrix,
/// computed as the square root of the top eigenvalue of `AᵀA`.
pub fn spectral_norm(a: &Matrix) -> f64 {
    if a.rows == 0 || a.cols == 0 {
        return 0.0;
    }
    let ata = a.gram_t();
    math::sqrt(ata.eigen().max().max(0.0))
}

/// `a ⪯ b` up to `tol`: the smallest eigenvalue of `b - a` is at least `-tol`.
pub fn loewner_leq(a: &SymMatrix, b: &SymMatrix, tol: f64) -> Result<bool, MatrixError> {
    if a.dim() != b.dim() {
        return Err(MatrixError::DimMismatch {
            expected: (a.dim(), a.dim()),
            found: (b.dim(), b.dim()),
        });
    }
    Ok(b.sub(a).min_eigenvalue() >= -tol)
}

/// Solves `a x = rhs` for strictly positive-definite `a`.
pub fn solve_spd(a: &SymMatrix, rhs: &Matrix) -> Result<Matrix, MatrixError> {
    let n = a.dim();
    if rhs.rows != n {
        return Err(MatrixError::DimMismatch {
            expected: (n, rhs.cols),
            found: rhs.shape(),
        });
    }
    let e = a.eigen();
    let norm = math::abs(e.min()).max(math::abs(e.max()));
    let floor = spd_floor(norm);
    if e.min() <= floor {
        return Err(MatrixError::Singular {
            min_eigenvalue: e.min(),
            floor,
        });
    }
    let mut l = a.as_slice().to_vec();
    if !kernel::cholesky_in_place(&mut l, n) {
        return Err(MatrixError::Singular {
            min_eigenvalue: e.min(),
            floor,
        });
    }
    let mut x = rhs.clone();
    let mut col = vec![0.0; n];
    for j in 0..rhs.cols {
        for i in 0..n {
            col[i] = rhs.get(i, j);
        }
        kernel::cholesky_solve(&l, &mut col, n);
        for i in 0..n {
            x.set(i, j, col[i]);
        }
    }
    Ok(x)
}

/// Allocation-free kernels on flat row-major `n×n` buffers, for hot loops.
pub mod kernel {
    /// `out = a b` for square `n×n` buffers.
    #[inline]
    pub fn matmul(a: &[f64], b: &[f64], out: &mut [f64], n: usize) {
        if n == 1 {
            out[0] = a[0] * b[0];
            return;
        }
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += a[i * n + k] * b[k * n + j];
                }
                out[i * n + j] = s;
            }
        }
    }

    /// `out = a x` for an `r×c` buffer `a`.
    #[inline]
    pub fn mat_vec(a: &[f64], x: &[f64], out: &mut [f64], r: usize, c: usize) {
        for i in 0..r {
            let mut s = 0.0;
            for k in 0..c {
                s += a[i * c + k] * x[k];
            }
            out[i] = s;
        }
    }

    #[inline]
    pub fn symmetrize(a: &mut [f64], n: usize) {
        super::symmetrize_in_place(a, n);
    }

    /// Overwrites the lower triangle of `a` with its Cholesky factor.
    /// Returns `false` if a non-positive pivot shows up.
    pub fn cholesky_in_place(a: &mut [f64], n: usize) -> bool {
        for j in 0..n {
            let mut d = a[j * n + j];
            for k in 0..j {
                d -= a[j * n + k] * a[j * n + k];
            }
            if d <= 0.0 || !d.is_finite() {
                return false;
            }
            let d = crate::math::sqrt(d);
            a[j * n + j] = d;
            for i in (j + 1)..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= a[i * n + k] * a[j * n + k];
                }
                a[i * n + j] = s / d;
            }
            for i in 0..j {
                a[i * n + j] = 0.0;
            }
        }
        true
    }

    /// Solves `L Lᵀ x = b` in place given the factor from [`cholesky_in_place`].
    pub fn cholesky_solve(l: &[f64], b: &mut [f64], n: usize) {
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= l[i * n + k] * b[k];
            }
            b[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= l[k * n + i] * b[k];
            }
            b[i] = s / l[i * n + i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_spd(n: usize, seed: u64) -> SymMatrix {
        let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let data: Vec<f64> = (0..n * n).map(|_| next()).collect();
        let b = Matrix::from_row_major(n, n, data).unwrap();
        b.gram().add(&SymMatrix::identity(n).scale(0.1))
    }

    #[test]
    fn sqrt_of_identity_and_diagonal() {
        let i3 = SymMatrix::identity(3);
        assert!(sym_sqrt(&i3).unwrap().max_abs_diff(&i3) < 1e-15);
        let r = sym_sqrt(&SymMatrix::from_diag(&[4.0, 9.0])).unwrap();
        assert!(r.max_abs_diff(&SymMatrix::from_diag(&[2.0, 3.0])) < 1e-15);
    }

    #[test]
    fn sqrt_squares_back() {
        for (n, seed) in [(1, 1), (2, 2), (3, 3), (5, 4)] {
            let a = random_spd(n, seed);
            let r = sym_sqrt(&a).unwrap();
            let rr = r.as_matrix().matmul(r.as_matrix());
            let tol = 1e-12 * (1.0 + a.norm());
            assert!(rr.max_abs_diff(a.as_matrix()) < tol, "n={n}");
            assert!(r.min_eigenvalue() >= -1e-14);
        }
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        let a = SymMatrix::from_diag(&[1.0, -0.5]);
        assert!(matches!(sym_sqrt(&a), Err(MatrixError::NotPsd { .. })));
        // Round-off sized negative eigenvalues are clamped.
        let a = SymMatrix::from_diag(&[1.0, -1e-13]);
        let r = sym_sqrt(&a).unwrap();
        assert_eq!(r.get(1, 1), 0.0);
    }

    #[test]
    fn spectral_norm_cases() {
        assert!((spectral_norm(&Matrix::from_diag(&[-5.0, 2.0])) - 5.0).abs() < 1e-14);
        assert_eq!(spectral_norm(&Matrix::zeros(3, 3)), 0.0);
        let jordan = Matrix::from_rows(&[[0.0, 1.0], [0.0, 0.0]]).unwrap();
        assert!((spectral_norm(&jordan) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn loewner_cases() {
        let a = SymMatrix::from_diag(&[1.0, 1.0]);
        let b = SymMatrix::from_diag(&[2.0, 3.0]);
        assert!(loewner_leq(&a, &b, 0.0).unwrap());
        assert!(loewner_leq(&b, &b, 0.0).unwrap());
        let a = SymMatrix::from_diag(&[2.0, 0.0]);
        let b = SymMatrix::from_diag(&[1.0, 3.0]);
        assert!(!loewner_leq(&a, &b, 0.0).unwrap());
        assert!(!loewner_leq(&b, &a, 0.0).unwrap());
        let c = SymMatrix::identity(3);
        assert_eq!(
            loewner_leq(&a, &c, 0.0),
            Err(MatrixError::DimMismatch {
                expected: (2, 2),
                found: (3, 3)
            })
        );
    }

    #[test]
    fn solve_cases() {
        let rhs = Matrix::from_rows(&[[1.5], [-2.0]]).unwrap();
        let x = solve_spd(&SymMatrix::identity(2), &rhs).unwrap();
        assert_eq!(x, rhs);
        let x = SymMatrix::from_diag(&[2.0, 4.0])
            .solve_vec(&[2.0, 4.0])
            .unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
        let singular = SymMatrix::from_diag(&[1.0, 0.0]);
        assert!(matches!(
            solve_spd(&singular, &rhs),
            Err(MatrixError::Singular { .. })
        ));
    }

    #[test]
    fn solve_residual_random() {
        for seed in 0..20 {
            let n = 1 + (seed as usize % 5);
            let a = random_spd(n, seed + 100);
            let rhs =
                Matrix::from_row_major(n, 1, (0..n).map(|i| i as f64 - 1.3).collect()).unwrap();
            let x = solve_spd(&a, &rhs).unwrap();
            let r = a.as_matrix().matmul(&x).sub(&rhs);
            let rn = spectral_norm(&r) / spectral_norm(&rhs);
            assert!(rn < 1e-12, "residual {rn}");
        }
    }

    #[test]
    fn eigen_reconstructs() {
        let a = random_spd(4, 9);
        let e = a.eigen();
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        let back = e.reconstruct_with(|l| l);
        assert!(back.max_abs_diff(&a) < 1e-13);
        let vtv = e.vectors.transpose().matmul(&e.vectors);
        assert!(vtv.max_abs_diff(&Matrix::identity(4)) < 1e-13);
    }

    #[test]
    fn construction_symmetrizes() {
        let m = Matrix::from_rows(&[[1.0, 2.0], [4.0, 1.0]]).unwrap();
        let s = SymMatrix::from_matrix(m).unwrap();
        assert_eq!(s.get(0, 1), s.get(1, 0));
        assert_eq!(s.get(0, 1), 3.0);
        assert!(SymMatrix::from_matrix(Matrix::zeros(2, 3)).is_err());
    }
}
