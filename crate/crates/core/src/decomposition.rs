//! Exact OLS covariances before and after adding the (n+1)-th observation,
//! and the decomposition
//!
//! ```text
//! V11 = V00 - σ²_{n+1} W - W11 (+ W22 when errors are correlated)
//! ```
//!
//! with `W = G0⁻¹ aᵀ a G0⁻¹ / q`, `W11 = G0⁻¹ D11 G0⁻¹ - G1⁻¹ D11 G1⁻¹`,
//! `D11 = A0ᵀ D A0` and `D = Σ0 - σ²_{n+1} I`. `G0`, `G1` are the Gram
//! matrices of the base and augmented designs.

use crate::error::{Error, Result};
use crate::matrixcore::{invert, sym_eigenvalues, Matrix, SymMatrix, SINGULAR_RTOL};
use crate::model::{AugmentedProblem, DesignMatrix, NoiseModel, PSD_TOL};

/// Relative tolerance for non-negativity of partial sums and diagonals.
pub const NONNEG_RTOL: f64 = 1e-9;

/// Leverage `d = a G0⁻¹ aᵀ` of a new design row and `q = 1 + d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leverage {
    pub d_lev: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub v00: SymMatrix,
    pub v11: SymMatrix,
    pub w: SymMatrix,
    pub w11: SymMatrix,
    /// Correlation term; `None` for the uncorrelated decomposition.
    pub w22: Option<SymMatrix>,
    pub d_lev: f64,
    pub q: f64,
    /// Max-entry defect of the decomposition identity.
    pub residual: f64,
    /// Closed-form correlation term `G1⁻¹(aᵀσ̄ᵀA0 + A0ᵀσ̄a)G1⁻¹`, kept for
    /// comparison against the residual-defined `w22`.
    pub w22_closed_form: Option<SymMatrix>,
    /// `max |w22 - w22_closed_form|`.
    pub w22_defect: Option<f64>,
}

impl Decomposition {
    /// `V00 - V11`; non-negative diagonal entries mean the variance of that
    /// coordinate did not increase.
    pub fn variance_change(&self) -> SymMatrix {
        self.v00.sub(&self.v11)
    }
}

/// Outcome of the prefix-sum criterion for each coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct VrpVerdict {
    pub per_coordinate: Vec<bool>,
    /// `partial_sums[i][m-1]` is the criterion sum over the first m rows.
    pub partial_sums: Vec<Vec<f64>>,
    /// Magnitude each coordinate's sums are judged against.
    pub scales: Vec<f64>,
    /// Smallest `partial_sum / scale` over all coordinates and prefixes.
    pub worst_margin: f64,
    /// First (1-based) prefix length with a negative sum, per coordinate.
    pub witness: Vec<Option<usize>>,
}

impl VrpVerdict {
    pub fn holds(&self) -> bool {
        self.per_coordinate.iter().all(|&ok| ok)
    }
}

/// `G⁻¹ Aᵀ`, the k×n matrix mapping observations to OLS estimates.
pub fn coefficient_matrix(d: &DesignMatrix) -> Matrix {
    d.gram_inv().matmul(&d.matrix().transpose())
}

/// Sandwich covariance `G⁻¹ Aᵀ Σ A G⁻¹` of the OLS estimator.
pub fn ols_covariance(d: &DesignMatrix, noise: &NoiseModel) -> Result<SymMatrix> {
    if noise.dim() != d.n() {
        return Err(Error::ShapeMismatch {
            what: "noise dimension",
            expected: d.n(),
            found: noise.dim(),
        });
    }
    Ok(match noise {
        NoiseModel::Diagonal { variances, .. } => diagonal_sandwich(&coefficient_matrix(d), variances),
        NoiseModel::Full { cov } => cov.congruence(&coefficient_matrix(d)),
    })
}

fn sandwich_with(d: &DesignMatrix, sigma: &SymMatrix) -> SymMatrix {
    sigma.congruence(&coefficient_matrix(d))
}

/// `H diag(v) Hᵀ`.
fn diagonal_sandwich(h: &Matrix, v: &[f64]) -> SymMatrix {
    let k = h.rows();
    let mut out = Matrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let s: f64 = (0..h.cols()).map(|l| h.get(i, l) * h.get(j, l) * v[l]).sum();
            out.set(i, j, s);
            out.set(j, i, s);
        }
    }
    SymMatrix::from_symmetric_product(out)
}

pub fn leverage(d: &DesignMatrix, row: &[f64]) -> Result<Leverage> {
    if row.len() != d.k() {
        return Err(Error::ShapeMismatch {
            what: "augmentation row",
            expected: d.k(),
            found: row.len(),
        });
    }
    let d_lev = d.gram_inv().quadratic_form(row);
    Ok(Leverage { d_lev, q: 1.0 + d_lev })
}

/// `W = G0⁻¹ aᵀ a G0⁻¹ / q` together with the leverage it was built from.
pub fn w_matrix(gram_inv: &SymMatrix, row: &[f64]) -> Result<(SymMatrix, Leverage)> {
    if row.len() != gram_inv.dim() {
        return Err(Error::ShapeMismatch {
            what: "augmentation row",
            expected: gram_inv.dim(),
            found: row.len(),
        });
    }
    let g_a = gram_inv.mat_vec(row);
    let d_lev: f64 = row.iter().zip(&g_a).map(|(x, y)| x * y).sum();
    let q = 1.0 + d_lev;
    if q.abs() <= SINGULAR_RTOL {
        return Err(Error::DegenerateUpdate { denominator: q });
    }
    let w = SymMatrix::from_symmetric_product(Matrix::outer(&g_a, &g_a).scale(1.0 / q));
    Ok((w, Leverage { d_lev, q }))
}

/// Inverse of the augmented Gram matrix, `G0⁻¹ - W`.
pub fn plackett_update(gram_inv: &SymMatrix, row: &[f64]) -> Result<SymMatrix> {
    let (w, _) = w_matrix(gram_inv, row)?;
    Ok(gram_inv.sub(&w))
}

/// `G0⁻¹ D11 G0⁻¹ - G1⁻¹ D11 G1⁻¹` with `D11 = A0ᵀ D A0` for a symmetric
/// (not necessarily diagonal) `D`.
fn w11_from(base: &DesignMatrix, g1_inv: &SymMatrix, d: &SymMatrix) -> SymMatrix {
    let d11 = d.congruence(&base.matrix().transpose());
    d11.congruence(base.gram_inv()).sub(&d11.congruence(g1_inv))
}

/// `W11` for an arbitrary diagonal `D` given as `weights`, with the
/// augmented inverse obtained by the rank-one update.
pub fn w11_for_weights(base: &DesignMatrix, row: &[f64], weights: &[f64]) -> Result<SymMatrix> {
    if weights.len() != base.n() {
        return Err(Error::ShapeMismatch {
            what: "weights",
            expected: base.n(),
            found: weights.len(),
        });
    }
    let g1_inv = plackett_update(base.gram_inv(), row)?;
    let h0 = coefficient_matrix(base);
    let h1 = g1_inv.matmul(&base.matrix().transpose());
    Ok(diagonal_sandwich(&h0, weights).sub(&diagonal_sandwich(&h1, weights)))
}

/// Decomposition for uncorrelated errors.
pub fn decompose(p: &AugmentedProblem) -> Result<Decomposition> {
    let variances = match (p.base_noise(), p.cross_cov()) {
        (NoiseModel::Diagonal { variances, .. }, None) => variances,
        _ => return Err(Error::NotDiagonal),
    };
    let base = p.base();
    let sigma2 = p.next_variance();
    let v00 = ols_covariance(base, p.base_noise())?;
    let mut joint = variances.clone();
    joint.push(sigma2);
    let v11 = diagonal_sandwich(&coefficient_matrix(p.augmented()), &joint);

    let (w, lev) = w_matrix(base.gram_inv(), p.next_row())?;
    let g1_inv = base.gram_inv().sub(&w);
    let d: Vec<f64> = variances.iter().map(|s| s - sigma2).collect();
    let w11 = w11_from(base, &g1_inv, &SymMatrix::diag(&d));

    let implied = v00.sub(&w.scale(sigma2)).sub(&w11);
    let residual = v11.max_abs_diff(&implied);
    Ok(Decomposition {
        v00,
        v11,
        w,
        w11,
        w22: None,
        d_lev: lev.d_lev,
        q: lev.q,
        residual,
        w22_closed_form: None,
        w22_defect: None,
    })
}

/// Decomposition with a full base covariance and/or covariances between
/// the new observation and the old ones.
pub fn decompose_correlated(p: &AugmentedProblem) -> Result<Decomposition> {
    let joint = p.joint_covariance();
    let scale = joint.max_abs().max(1.0);
    let min_eigenvalue = sym_eigenvalues(&joint)[0];
    if min_eigenvalue < -PSD_TOL * scale {
        return Err(Error::NotPsd { min_eigenvalue });
    }
    if invert(&joint).is_err() {
        return Err(Error::NotPsd { min_eigenvalue });
    }

    let base = p.base();
    let n = base.n();
    let sigma2 = p.next_variance();
    let base_cov = p.base_noise().covariance();
    let v00 = sandwich_with(base, &base_cov);
    let v11 = sandwich_with(p.augmented(), &joint);

    let (w, lev) = w_matrix(base.gram_inv(), p.next_row())?;
    let g1_inv = base.gram_inv().sub(&w);
    let d = base_cov.sub(&SymMatrix::identity(n).scale(sigma2));
    let w11 = w11_from(base, &g1_inv, &d);

    let w22 = v11.sub(&v00).add(&w.scale(sigma2)).add(&w11);

    let zeros = vec![0.0; n];
    let sigma_bar = p.cross_cov().unwrap_or(&zeros);
    let u = base.matrix().transpose().mat_vec(sigma_bar);
    let a = p.next_row();
    let middle = SymMatrix::from_symmetric_product(Matrix::outer(a, &u).add(&Matrix::outer(&u, a)));
    let closed = middle.congruence(&g1_inv);
    let w22_defect = w22.max_abs_diff(&closed);

    let implied = v00.sub(&w.scale(sigma2)).sub(&w11).add(&w22);
    let residual = v11.max_abs_diff(&implied);
    Ok(Decomposition {
        v00,
        v11,
        w,
        w11,
        w22: Some(w22),
        d_lev: lev.d_lev,
        q: lev.q,
        residual,
        w22_closed_form: Some(closed),
        w22_defect: Some(w22_defect),
    })
}

/// `W11` for equal base variances `σ²_1 = … = σ²_n`:
/// `(σ²_1 - σ²_{n+1}) (2 - d/(1+d)) W`.
pub fn w11_equal_variance(p: &AugmentedProblem) -> Result<SymMatrix> {
    let variances = match (p.base_noise(), p.cross_cov()) {
        (NoiseModel::Diagonal { variances, .. }, None) => variances,
        _ => return Err(Error::NotDiagonal),
    };
    let common = variances[0];
    if variances.iter().any(|&v| v != common) {
        return Err(Error::NotEqualVariance);
    }
    let sigma2 = common - p.next_variance();
    let (w, lev) = w_matrix(p.base().gram_inv(), p.next_row())?;
    Ok(w.scale(sigma2 * (2.0 - lev.d_lev / (1.0 + lev.d_lev))))
}

/// Prefix-sum criterion for non-negativity of every `W11(i,i)` under all
/// non-increasing diagonal noise, for the problem's base design and row.
pub fn vrp_partial_sums(p: &AugmentedProblem) -> Result<VrpVerdict> {
    vrp_partial_sums_for(p.base(), p.next_row())
}

/// Same as [`vrp_partial_sums`] for a bare design and candidate row.
///
/// For coordinate i the j-th term is `C0(i,j)² - C1(i,j)²` with
/// `C0 = G0⁻¹A0ᵀ` and `C1 = G1⁻¹A0ᵀ`; the verdict holds iff every prefix sum
/// is ≥ `-NONNEG_RTOL * scale`, where `scale` is the largest prefix-sum or
/// single-term magnitude of that coordinate.
pub fn vrp_partial_sums_for(base: &DesignMatrix, row: &[f64]) -> Result<VrpVerdict> {
    let augmented = base.augment(row)?;
    let c0 = coefficient_matrix(base);
    let c1 = augmented.gram_inv().matmul(&base.matrix().transpose());
    let (k, n) = (base.k(), base.n());

    let mut per_coordinate = Vec::with_capacity(k);
    let mut partial_sums = Vec::with_capacity(k);
    let mut scales = Vec::with_capacity(k);
    let mut witness = Vec::with_capacity(k);
    let mut worst_margin = f64::INFINITY;
    for i in 0..k {
        let mut running = 0.0;
        let mut scale: f64 = 0.0;
        let mut sums = Vec::with_capacity(n);
        for j in 0..n {
            let a0 = c0.get(i, j).powi(2);
            let a1 = c1.get(i, j).powi(2);
            running += a0 - a1;
            scale = scale.max(a0).max(a1).max(running.abs());
            sums.push(running);
        }
        let scale = if scale > 0.0 { scale } else { 1.0 };
        let first_bad = sums.iter().position(|&s| s < -NONNEG_RTOL * scale);
        let margin = sums.iter().fold(f64::INFINITY, |m, &s| m.min(s / scale));
        worst_margin = worst_margin.min(margin);
        per_coordinate.push(first_bad.is_none());
        witness.push(first_bad.map(|j| j + 1));
        partial_sums.push(sums);
        scales.push(scale);
    }
    Ok(VrpVerdict {
        per_coordinate,
        partial_sums,
        scales,
        worst_margin,
        witness,
    })
}

/// The non-increasing 0/1 weight vector with ones on the first m entries.
pub fn step_weights(n: usize, m: usize) -> Vec<f64> {
    (0..n).map(|j| if j < m { 1.0 } else { 0.0 }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NoiseSpec;

    fn line_problem(h: &[f64], v: &[f64], h_next: f64, v_next: f64) -> AugmentedProblem {
        AugmentedProblem::line(h, v, h_next, v_next).unwrap()
    }

    #[test]
    fn unit_noise_gives_inverse_gram() {
        let d = DesignMatrix::intercept_line(&[0.5, 1.0, 2.5, 3.0]).unwrap();
        let noise = NoiseModel::validate(&NoiseSpec::Diagonal(vec![1.0; 4]), 4).unwrap();
        let v = ols_covariance(&d, &noise).unwrap();
        assert!(v.max_abs_diff(d.gram_inv()) < 1e-14);
    }

    #[test]
    fn leverage_of_simple_line() {
        let d = DesignMatrix::intercept_line(&[1.0, 2.0, 3.0]).unwrap();
        let lev = leverage(&d, &[1.0, 4.0]).unwrap();
        assert!((lev.d_lev - 7.0 / 3.0).abs() < 1e-14);
        assert!((lev.q - 10.0 / 3.0).abs() < 1e-14);
        assert_eq!(leverage(&d, &[0.0, 0.0]).unwrap(), Leverage { d_lev: 0.0, q: 1.0 });
        assert_eq!(lev.q, 1.0 + lev.d_lev);
    }

    #[test]
    fn plackett_matches_direct() {
        let d = DesignMatrix::intercept_line(&[1.0, 2.0, 3.0]).unwrap();
        let up = plackett_update(d.gram_inv(), &[1.0, 4.0]).unwrap();
        let direct = DesignMatrix::intercept_line(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(up.max_abs_diff(direct.gram_inv()) < 1e-12);
        let same = plackett_update(d.gram_inv(), &[0.0, 0.0]).unwrap();
        assert_eq!(&same, d.gram_inv());
    }

    #[test]
    fn homoscedastic_has_no_w11() {
        let p = line_problem(&[0.3, 1.1, 2.0], &[0.7; 3], 2.4, 0.7);
        let dec = decompose(&p).unwrap();
        assert!(dec.w11.max_abs() < 1e-14);
        let expected = dec.v00.sub(&dec.w.scale(0.7));
        assert!(dec.v11.max_abs_diff(&expected) < 1e-13);
    }

    #[test]
    fn equal_variance_factor() {
        let p = line_problem(&[1.0, 2.0, 3.0], &[2.0; 3], 4.0, 1.0);
        let w11 = w11_equal_variance(&p).unwrap();
        let dec = decompose(&p).unwrap();
        // factor 2 - (7/3)/(10/3) = 1.3
        assert!(w11.max_abs_diff(&dec.w.scale(1.3)) < 1e-13);
        assert!(w11.max_abs_diff(&dec.w11) < 1e-12);
        let zero = w11_equal_variance(&line_problem(&[1.0, 2.0, 3.0], &[2.0; 3], 4.0, 2.0)).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
        assert_eq!(
            w11_equal_variance(&line_problem(&[1.0, 2.0, 3.0], &[3.0, 2.0, 2.0], 4.0, 1.0))
                .unwrap_err(),
            Error::NotEqualVariance
        );
    }

    #[test]
    fn decompose_rejects_correlation() {
        let base = DesignMatrix::intercept_line(&[1.0, 2.0]).unwrap();
        let noise = NoiseModel::validate(&NoiseSpec::Diagonal(vec![2.0, 1.0]), 2).unwrap();
        let p = AugmentedProblem::new(base, vec![1.0, 3.0], noise, 0.5, Some(vec![0.0, 0.0]))
            .unwrap();
        assert_eq!(decompose(&p).unwrap_err(), Error::NotDiagonal);
        let dec = decompose_correlated(&p).unwrap();
        assert!(dec.w22.unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn scalar_partial_sums() {
        // A0 = (1), a = (1): C0 = 1, C1 = 1/2.
        let d = DesignMatrix::new(&[[1.0]]).unwrap();
        let v = vrp_partial_sums_for(&d, &[1.0]).unwrap();
        assert!((v.partial_sums[0][0] - 0.75).abs() < 1e-15);
        assert!(v.holds());
    }

    #[test]
    fn increasing_line_passes_partial_sums() {
        let d = DesignMatrix::intercept_line(&[1.0, 2.0, 3.0]).unwrap();
        let v = vrp_partial_sums_for(&d, &[1.0, 4.0]).unwrap();
        assert!(v.holds());
        assert!(v.partial_sums.iter().flatten().all(|&s| s >= 0.0));
        assert_eq!(v.witness, vec![None, None]);
    }

    #[test]
    fn step_witness_shape() {
        assert_eq!(step_weights(4, 2), vec![1.0, 1.0, 0.0, 0.0]);
    }
}
