//! Designs, noise models and the augmented (n+1)-observation problem.

use crate::error::{Error, Result};
use crate::matrixcore::{invert, sym_eigenvalues, Matrix, SymMatrix};

/// Eigenvalues of a full covariance may dip this far below zero (relative to
/// `max(1, max |Σ|)`) and still count as positive semidefinite.
pub const PSD_TOL: f64 = 1e-10;
const SYMMETRY_RTOL: f64 = 1e-12;

/// A validated full-column-rank n×k design with its Gram matrix and inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    a: Matrix,
    gram: SymMatrix,
    gram_inv: SymMatrix,
}

impl DesignMatrix {
    /// Validates `rows` as an n×k design of rank k.
    pub fn new<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::ShapeMismatch {
                what: "design rows",
                expected: 1,
                found: 0,
            });
        }
        let a = Matrix::from_rows(rows)?;
        if a.cols() == 0 {
            return Err(Error::ShapeMismatch {
                what: "design columns",
                expected: 1,
                found: 0,
            });
        }
        DesignMatrix::from_matrix(a)
    }

    pub fn from_matrix(a: Matrix) -> Result<Self> {
        if a.rows() < a.cols() {
            return Err(Error::RankDeficient);
        }
        let gram = SymMatrix::from_symmetric_product(a.t_matmul(&a));
        let gram_inv = invert(&gram).map_err(|_| Error::RankDeficient)?;
        Ok(DesignMatrix { a, gram, gram_inv })
    }

    /// Straight-line design with rows `(1, h_i)`.
    pub fn intercept_line(h: &[f64]) -> Result<Self> {
        let rows: Vec<[f64; 2]> = h.iter().map(|&x| [1.0, x]).collect();
        DesignMatrix::new(&rows)
    }

    /// Observation count.
    pub fn n(&self) -> usize {
        self.a.rows()
    }

    /// Parameter count.
    pub fn k(&self) -> usize {
        self.a.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.a.row(i)
    }

    pub fn gram(&self) -> &SymMatrix {
        &self.gram
    }

    pub fn gram_inv(&self) -> &SymMatrix {
        &self.gram_inv
    }

    /// Appends the design row of the (n+1)-th experiment.
    pub fn augment(&self, row: &[f64]) -> Result<DesignMatrix> {
        if row.len() != self.k() {
            return Err(Error::ShapeMismatch {
                what: "augmentation row",
                expected: self.k(),
                found: row.len(),
            });
        }
        let mut data = self.a.as_slice().to_vec();
        data.extend_from_slice(row);
        DesignMatrix::from_matrix(Matrix::from_vec(self.n() + 1, self.k(), data)?)
    }

    /// The explanatory values `h_i` when this is a `(1, h_i)` design.
    pub fn line_points(&self) -> Option<Vec<f64>> {
        if self.k() != 2 || (0..self.n()).any(|i| self.a.get(i, 0) != 1.0) {
            return None;
        }
        Some((0..self.n()).map(|i| self.a.get(i, 1)).collect())
    }
}

/// Unvalidated noise description, as read from a problem file.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec {
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

/// Validated covariance of the first n errors.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseModel {
    Diagonal {
        variances: Vec<f64>,
        /// `σ²_i ≥ σ²_{i+1}` for every i, compared exactly.
        non_increasing: bool,
    },
    Full {
        cov: SymMatrix,
    },
}

impl NoiseModel {
    pub fn validate(spec: &NoiseSpec, n: usize) -> Result<Self> {
        match spec {
            NoiseSpec::Diagonal(v) => NoiseModel::diagonal(v.clone(), n),
            NoiseSpec::Full(rows) => NoiseModel::full(rows, n),
        }
    }

    fn diagonal(variances: Vec<f64>, n: usize) -> Result<Self> {
        if variances.len() != n {
            return Err(Error::ShapeMismatch {
                what: "diagonal variances",
                expected: n,
                found: variances.len(),
            });
        }
        for (index, &value) in variances.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFinite { what: "variances" });
            }
            if value <= 0.0 {
                return Err(Error::NotPositive { index, value });
            }
        }
        let non_increasing = variances.windows(2).all(|w| w[0] >= w[1]);
        Ok(NoiseModel::Diagonal {
            variances,
            non_increasing,
        })
    }

    fn full(rows: &[Vec<f64>], n: usize) -> Result<Self> {
        if rows.len() != n {
            return Err(Error::ShapeMismatch {
                what: "covariance rows",
                expected: n,
                found: rows.len(),
            });
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::ShapeMismatch {
                what: "covariance columns",
                expected: n,
                found: bad.len(),
            });
        }
        let m = Matrix::from_rows(rows)?;
        let scale = m.max_abs().max(1.0);
        let asymmetry = m.max_asymmetry();
        if asymmetry > SYMMETRY_RTOL * scale {
            return Err(Error::NotSymmetric { asymmetry });
        }
        let cov = SymMatrix::new(m)?;
        let min_eigenvalue = sym_eigenvalues(&cov)[0];
        if min_eigenvalue < -PSD_TOL * scale {
            return Err(Error::NotPsd { min_eigenvalue });
        }
        Ok(NoiseModel::Full { cov })
    }

    /// Inverse of [`NoiseModel::validate`].
    pub fn to_spec(&self) -> NoiseSpec {
        match self {
            NoiseModel::Diagonal { variances, .. } => NoiseSpec::Diagonal(variances.clone()),
            NoiseModel::Full { cov } => NoiseSpec::Full(cov.to_rows()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            NoiseModel::Diagonal { variances, .. } => variances.len(),
            NoiseModel::Full { cov } => cov.dim(),
        }
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self, NoiseModel::Diagonal { .. })
    }

    /// Diagonal of Σ.
    pub fn variances(&self) -> Vec<f64> {
        match self {
            NoiseModel::Diagonal { variances, .. } => variances.clone(),
            NoiseModel::Full { cov } => cov.diagonal(),
        }
    }

    pub fn covariance(&self) -> SymMatrix {
        match self {
            NoiseModel::Diagonal { variances, .. } => SymMatrix::diag(variances),
            NoiseModel::Full { cov } => cov.clone(),
        }
    }
}

pub fn validate_design<R: AsRef<[f64]>>(rows: &[R]) -> Result<DesignMatrix> {
    DesignMatrix::new(rows)
}

pub fn validate_noise(spec: &NoiseSpec, n: usize) -> Result<NoiseModel> {
    NoiseModel::validate(spec, n)
}

pub fn augment(d: &DesignMatrix, row: &[f64]) -> Result<DesignMatrix> {
    d.augment(row)
}

/// A base problem of n observations plus the (n+1)-th experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedProblem {
    base: DesignMatrix,
    augmented: DesignMatrix,
    next_row: Vec<f64>,
    base_noise: NoiseModel,
    next_variance: f64,
    cross_cov: Option<Vec<f64>>,
}

impl AugmentedProblem {
    pub fn new(
        base: DesignMatrix,
        next_row: Vec<f64>,
        base_noise: NoiseModel,
        next_variance: f64,
        cross_cov: Option<Vec<f64>>,
    ) -> Result<Self> {
        if base_noise.dim() != base.n() {
            return Err(Error::ShapeMismatch {
                what: "noise dimension",
                expected: base.n(),
                found: base_noise.dim(),
            });
        }
        if !next_variance.is_finite() {
            return Err(Error::NonFinite {
                what: "next variance",
            });
        }
        if next_variance <= 0.0 {
            return Err(Error::NotPositive {
                index: base.n(),
                value: next_variance,
            });
        }
        if let Some(c) = &cross_cov {
            if c.len() != base.n() {
                return Err(Error::ShapeMismatch {
                    what: "cross covariances",
                    expected: base.n(),
                    found: c.len(),
                });
            }
            if c.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    what: "cross covariances",
                });
            }
        }
        let augmented = base.augment(&next_row)?;
        Ok(AugmentedProblem {
            base,
            augmented,
            next_row,
            base_noise,
            next_variance,
            cross_cov,
        })
    }

    /// Straight-line problem with base points `h`, diagonal variances
    /// `variances` for them and `(h_next, next_variance)` for the new point.
    pub fn line(h: &[f64], variances: &[f64], h_next: f64, next_variance: f64) -> Result<Self> {
        let base = DesignMatrix::intercept_line(h)?;
        let noise = NoiseModel::validate(&NoiseSpec::Diagonal(variances.to_vec()), h.len())?;
        AugmentedProblem::new(base, vec![1.0, h_next], noise, next_variance, None)
    }

    pub fn base(&self) -> &DesignMatrix {
        &self.base
    }

    pub fn augmented(&self) -> &DesignMatrix {
        &self.augmented
    }

    pub fn next_row(&self) -> &[f64] {
        &self.next_row
    }

    pub fn base_noise(&self) -> &NoiseModel {
        &self.base_noise
    }

    pub fn next_variance(&self) -> f64 {
        self.next_variance
    }

    pub fn cross_cov(&self) -> Option<&[f64]> {
        self.cross_cov.as_deref()
    }

    /// Covariance of all n+1 errors.
    pub fn joint_covariance(&self) -> SymMatrix {
        let n = self.base.n();
        let base = self.base_noise.covariance();
        let mut m = Matrix::zeros(n + 1, n + 1);
        for i in 0..n {
            for j in 0..n {
                m.set(i, j, base.get(i, j));
            }
        }
        if let Some(c) = &self.cross_cov {
            for (i, v) in c.iter().enumerate() {
                m.set(i, n, *v);
                m.set(n, i, *v);
            }
        }
        m.set(n, n, self.next_variance);
        SymMatrix::from_symmetric_product(m)
    }

    /// Diagonal base noise, no cross covariances, non-increasing variances
    /// and `σ²_{n+1}` no larger than the last base variance.
    pub fn satisfies_vrp_hypotheses(&self) -> bool {
        match (&self.base_noise, &self.cross_cov) {
            (
                NoiseModel::Diagonal {
                    variances,
                    non_increasing: true,
                },
                None,
            ) => variances.last().is_some_and(|&last| self.next_variance <= last),
            _ => false,
        }
    }
}
