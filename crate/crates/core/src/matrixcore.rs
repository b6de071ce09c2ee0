//! Small dense linear algebra for the k×k and n×k matrices used throughout
//! the crate: Gauss–Jordan inversion, block inversion, rank-one inverse
//! updates and cyclic Jacobi eigenvalues.
//!
//! Dimensions here are tiny (k ≤ ~10, n ≤ a few hundred), so everything is
//! a plain row-major `Vec<f64>`.

use std::fmt;
use std::ops::{Deref, Index};

use crate::error::{Error, Result};

/// Relative pivot threshold for declaring a matrix singular.
pub const SINGULAR_RTOL: f64 = 1e-12;

/// Jacobi stops once the off-diagonal Frobenius norm drops below this
/// fraction of the full Frobenius norm.
const JACOBI_RTOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Dense row-major real matrix with finite entries.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from a flat row-major buffer.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                what: "matrix buffer",
                expected: rows * cols,
                found: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { what: "matrix" });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(nrows * ncols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != ncols {
                return Err(Error::ShapeMismatch {
                    what: "matrix row",
                    expected: ncols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Matrix::from_vec(nrows, ncols, data)
    }

    /// Column vector (n×1).
    pub fn column(v: &[f64]) -> Self {
        Matrix {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    /// `u vᵀ`.
    pub fn outer(u: &[f64], v: &[f64]) -> Self {
        let mut m = Matrix::zeros(u.len(), v.len());
        for (i, ui) in u.iter().enumerate() {
            for (j, vj) in v.iter().enumerate() {
                m.data[i * v.len() + j] = ui * vj;
            }
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Matrix::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.data[i * n + i] = *v;
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
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.get(i, j);
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self.get(i, l);
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(l);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, o) in dst.iter_mut().zip(orow) {
                    *d += a * o;
                }
            }
        }
        out
    }

    /// `Aᵀ B` without forming the transpose.
    pub fn t_matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows, "t_matmul dimension mismatch");
        let mut out = Matrix::zeros(self.cols, other.cols);
        for r in 0..self.rows {
            let arow = self.row(r);
            let brow = other.row(r);
            for (i, a) in arow.iter().enumerate() {
                if *a == 0.0 {
                    continue;
                }
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(brow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn mat_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "mat_vec dimension mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        assert_eq!(
            (self.rows, self.cols),
            (other.rows, other.cols),
            "elementwise dimension mismatch"
        );
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        }
    }

    /// Largest absolute entry (0 for an empty matrix).
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.sub(other).max_abs()
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

/// Square matrix with exactly equal mirrored entries.
///
/// Construction averages `m[i][j]` and `m[j][i]`, so symmetry holds bit for
/// bit afterwards.
#[derive(Clone, PartialEq)]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::ShapeMismatch {
                what: "symmetric matrix columns",
                expected: m.rows,
                found: m.cols,
            });
        }
        if m.rows == 0 {
            return Err(Error::InvalidArgument("symmetric matrix must have dim ≥ 1".into()));
        }
        Ok(SymMatrix::symmetrize(m))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        SymMatrix::new(Matrix::from_rows(rows)?)
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(Matrix::identity(n))
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(Matrix::zeros(n, n))
    }

    pub fn diag(values: &[f64]) -> Self {
        SymMatrix(Matrix::diag(values))
    }

    fn symmetrize(mut m: Matrix) -> Self {
        let n = m.rows;
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (m.get(i, j) + m.get(j, i));
                m.set(i, j, avg);
                m.set(j, i, avg);
            }
        }
        SymMatrix(m)
    }

    /// Symmetrizes the result of an operation that is symmetric in exact
    /// arithmetic. Panics on non-square input.
    pub(crate) fn from_symmetric_product(m: Matrix) -> Self {
        assert!(m.is_square());
        SymMatrix::symmetrize(m)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.rows
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.0.get(i, i)).sum()
    }

    /// `x M xᵀ` for a row vector `x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim());
        let mx = self.0.mat_vec(x);
        x.iter().zip(&mx).map(|(a, b)| a * b).sum()
    }

    /// `B M Bᵀ` for a matrix `B` with `dim` columns.
    pub fn congruence(&self, b: &Matrix) -> SymMatrix {
        SymMatrix::from_symmetric_product(b.matmul(&self.0).matmul(&b.transpose()))
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
}

impl Deref for SymMatrix {
    type Target = Matrix;

    fn deref(&self) -> &Matrix {
        &self.0
    }
}

impl TryFrom<Matrix> for SymMatrix {
    type Error = Error;

    fn try_from(m: Matrix) -> Result<Self> {
        SymMatrix::new(m)
    }
}

impl From<SymMatrix> for Matrix {
    fn from(s: SymMatrix) -> Matrix {
        s.0
    }
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sym")?;
        self.0.fmt(f)
    }
}

/// Gauss–Jordan inverse of a general square matrix with partial pivoting,
/// followed by one Newton–Schulz refinement step.
pub fn invert_general(m: &Matrix) -> Result<Matrix> {
    if !m.is_square() {
        return Err(Error::ShapeMismatch {
            what: "inverse columns",
            expected: m.rows,
            found: m.cols,
        });
    }
    let n = m.rows;
    let threshold = SINGULAR_RTOL * m.max_abs();
    let mut a = m.clone();
    let mut inv = Matrix::identity(n);

    for col in 0..n {
        let (pivot_row, pivot_abs) = (col..n)
            .map(|r| (r, a.get(r, col).abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot_abs <= threshold || pivot_abs == 0.0 {
            return Err(Error::Singular {
                pivot: pivot_abs,
                threshold,
            });
        }
        if pivot_row != col {
            swap_rows(&mut a, pivot_row, col);
            swap_rows(&mut inv, pivot_row, col);
        }
        let p = a.get(col, col);
        for j in 0..n {
            a.data[col * n + j] /= p;
            inv.data[col * n + j] /= p;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = a.get(r, col);
            if factor == 0.0 {
                continue;
            }
            for j in 0..n {
                a.data[r * n + j] -= factor * a.data[col * n + j];
                inv.data[r * n + j] -= factor * inv.data[col * n + j];
            }
        }
    }

    // X <- X + X (I - A X)
    let residual = Matrix::identity(n).sub(&m.matmul(&inv));
    Ok(inv.add(&inv.matmul(&residual)))
}

fn swap_rows(m: &mut Matrix, r1: usize, r2: usize) {
    let c = m.cols;
    for j in 0..c {
        m.data.swap(r1 * c + j, r2 * c + j);
    }
}

/// Inverse of a symmetric matrix; the result is symmetrized.
pub fn invert(m: &SymMatrix) -> Result<SymMatrix> {
    invert_general(m.as_matrix()).map(SymMatrix::from_symmetric_product)
}

/// Inverse of `[[C, B], [Bᵀ, D]]` assembled from `C⁻¹` and the inverse of the
/// Schur complement `D - Bᵀ C⁻¹ B`.
pub fn block_inverse(c: &SymMatrix, b: &Matrix, d: &SymMatrix) -> Result<SymMatrix> {
    let p = c.dim();
    let s = d.dim();
    if b.rows() != p {
        return Err(Error::ShapeMismatch {
            what: "off-diagonal block rows",
            expected: p,
            found: b.rows(),
        });
    }
    if b.cols() != s {
        return Err(Error::ShapeMismatch {
            what: "off-diagonal block columns",
            expected: s,
            found: b.cols(),
        });
    }
    let c_inv = invert(c)?;
    let c_inv_b = c_inv.matmul(b);
    let schur = SymMatrix::from_symmetric_product(d.as_matrix().sub(&b.t_matmul(&c_inv_b)));
    let schur_inv = invert(&schur)?;

    let upper_right = c_inv_b.matmul(&schur_inv).scale(-1.0);
    let upper_left = c_inv.as_matrix().add(&c_inv_b.matmul(&schur_inv).matmul(&c_inv_b.transpose()));

    let n = p + s;
    let mut out = Matrix::zeros(n, n);
    for i in 0..p {
        for j in 0..p {
            out.set(i, j, upper_left.get(i, j));
        }
        for j in 0..s {
            out.set(i, p + j, upper_right.get(i, j));
            out.set(p + j, i, upper_right.get(i, j));
        }
    }
    for i in 0..s {
        for j in 0..s {
            out.set(p + i, p + j, schur_inv.get(i, j));
        }
    }
    Ok(SymMatrix::from_symmetric_product(out))
}

/// `(C + b dᵀ)⁻¹` from `C⁻¹` for column vectors `b`, `d`.
///
/// The result is only symmetric when `b == d`; use
/// [`SymMatrix::new`] on the output in that case.
pub fn rank_one_inverse_update(c_inv: &Matrix, b: &[f64], d: &[f64]) -> Result<Matrix> {
    let n = c_inv.rows();
    if b.len() != n || d.len() != n {
        return Err(Error::ShapeMismatch {
            what: "rank-one update vector",
            expected: n,
            found: if b.len() != n { b.len() } else { d.len() },
        });
    }
    let c_inv_b = c_inv.mat_vec(b);
    let dt_c_inv = c_inv.transpose().mat_vec(d);
    let denominator = 1.0 + d.iter().zip(&c_inv_b).map(|(x, y)| x * y).sum::<f64>();
    if denominator.abs() < SINGULAR_RTOL {
        return Err(Error::DegenerateUpdate { denominator });
    }
    Ok(c_inv.sub(&Matrix::outer(&c_inv_b, &dt_c_inv).scale(1.0 / denominator)))
}

/// Eigenvalues in ascending order.
pub fn sym_eigenvalues(m: &SymMatrix) -> Vec<f64> {
    sym_eigen(m).0
}

/// Eigenvalues (ascending) and the matching orthonormal eigenvectors stored
/// as the columns of the returned matrix.
pub fn sym_eigen(m: &SymMatrix) -> (Vec<f64>, Matrix) {
    let n = m.dim();
    let mut a = m.as_matrix().clone();
    let mut v = Matrix::identity(n);
    let norm = a.frobenius();

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a.get(i, j).powi(2))
            .sum::<f64>()
            .sqrt();
        if off <= JACOBI_RTOL * norm || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(i, i).total_cmp(&a.get(j, j)));
    let values = order.iter().map(|&i| a.get(i, i)).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors.set(k, dst, v.get(k, src));
        }
    }
    (values, vectors)
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn determinant(m: &Matrix) -> f64 {
    assert!(m.is_square());
    let n = m.rows;
    let mut a = m.clone();
    let mut det = 1.0;
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r, &s| a.get(r, col).abs().total_cmp(&a.get(s, col).abs()))
            .unwrap();
        let p = a.get(pivot_row, col);
        if p == 0.0 {
            return 0.0;
        }
        if pivot_row != col {
            swap_rows(&mut a, pivot_row, col);
            det = -det;
        }
        det *= p;
        for r in (col + 1)..n {
            let f = a.get(r, col) / p;
            for j in col..n {
                a.data[r * n + j] -= f * a.data[col * n + j];
            }
        }
    }
    det
}
