use vrp_core::decomposition::{decompose, decompose_correlated, vrp_partial_sums};
use vrp_core::matrixcore::{sym_eigenvalues, Matrix, SymMatrix};
use vrp_core::model::{AugmentedProblem, DesignMatrix, NoiseModel, NoiseSpec};
use vrp_core::planner::{admissible_next_general, admissible_next_line, is_admissible_line, DEFAULT_GRID};
use vrp_core::straightline::check_conditions;

fn assert_close(got: f64, want: f64, tol: f64, what: &str) {
    assert!((got - want).abs() <= tol, "{what}: got {got}, want {want}");
}

fn indefinite_w11_problem() -> AugmentedProblem {
    AugmentedProblem::line(&[0.62, 1.24, 1.80], &[1.56, 1.26, 0.78], 1.96, 0.28).unwrap()
}

fn reversed_next_problem() -> AugmentedProblem {
    AugmentedProblem::line(&[0.7, 1.6, 1.62], &[2.0, 1.0, 0.8], 1.45, 0.2).unwrap()
}

/// Covariance `SᵀS` of the correlated base block.
fn correlated_block() -> SymMatrix {
    let s = Matrix::from_rows(&[
        vec![2.0, 1.25, 0.9],
        vec![5.0 / 3.0, 1.2, 0.4],
        vec![1.25, 1.0, 0.25],
    ])
    .unwrap();
    SymMatrix::new(s.t_matmul(&s)).unwrap()
}

#[test]
fn w11_indefinite_with_positive_diagonal() {
    let dec = decompose(&indefinite_w11_problem()).unwrap();
    let want = [[0.54605, -0.55859], [-0.55859, 0.56787]];
    for i in 0..2 {
        for j in 0..2 {
            assert_close(dec.w11.get(i, j), want[i][j], 1e-4, "W11");
        }
    }
    let ev = sym_eigenvalues(&dec.w11);
    assert_close(ev[0], -0.00174, 1e-4, "smallest eigenvalue");
    assert_close(ev[1], 1.11566, 1e-4, "largest eigenvalue");
    assert!(vrp_partial_sums(&indefinite_w11_problem()).unwrap().holds());
}

#[test]
fn correlated_base_increases_both_variances() {
    let cov = correlated_block();
    let diag: Vec<f64> = (0..3).map(|i| cov.get(i, i)).collect();
    for (got, want) in diag.iter().zip([8.340278, 4.0025, 1.0325]) {
        assert_close(*got, want, 1e-6, "covariance diagonal");
    }
    let base = DesignMatrix::intercept_line(&[0.7, 1.6, 1.7]).unwrap();
    let noise = NoiseModel::validate(&NoiseSpec::Full(cov.to_rows()), 3).unwrap();
    let p = AugmentedProblem::new(base, vec![1.0, 1.9], noise, 0.2, None).unwrap();
    let dec = decompose_correlated(&p).unwrap();
    let change = dec.variance_change();
    let want = [[-4.505055, 3.277313], [3.277313, -1.987787]];
    for i in 0..2 {
        for j in 0..2 {
            assert_close(change.get(i, j), want[i][j], 1e-4, "V00 - V11");
        }
    }
    assert!(dec.residual < 1e-10);
}

#[test]
fn next_point_below_last_breaks_reduction() {
    let p = reversed_next_problem();
    let change = decompose(&p).unwrap().variance_change();
    let want = [[-0.002878, 0.064592], [0.064592, -0.013034]];
    for i in 0..2 {
        for j in 0..2 {
            assert_close(change.get(i, j), want[i][j], 1e-5, "V00 - V11");
        }
    }
    let report = check_conditions(&[0.7, 1.6, 1.62], 1.45, None).unwrap();
    assert!(!report.c4.holds);
    assert!(report.c4.witness.is_some());
    assert!(!is_admissible_line(&[0.7, 1.6, 1.62], 1.45).unwrap());
    let region = admissible_next_line(&[0.7, 1.6, 1.62], (0.0, 3.0), DEFAULT_GRID).unwrap();
    assert!(!region.contains(1.45));
}

#[test]
fn planner_examples() {
    assert!(is_admissible_line(&[0.62, 1.24, 1.80], 1.96).unwrap());
    let region = admissible_next_line(&[0.62, 1.24, 1.80], (0.0, 4.0), DEFAULT_GRID).unwrap();
    assert!(region.contains(1.96));

    let base = DesignMatrix::intercept_line(&[0.7, 1.6, 1.62]).unwrap();
    let v = admissible_next_general(&base, &[vec![1.0, 1.45], vec![1.0, 1.6]]);
    assert_eq!(v[0].admissible(), Some(false));
    assert!(v[1].admissible().is_some());

    let base = DesignMatrix::intercept_line(&[0.62, 1.24, 1.80]).unwrap();
    let v = admissible_next_general(&base, &[vec![1.0, 1.96]]);
    assert_eq!(v[0].admissible(), Some(true));
}

#[test]
fn saturated_design_duplicate_candidate() {
    let base = DesignMatrix::new(&[vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
    let v = admissible_next_general(&base, &[vec![1.0, 1.0]]);
    assert!(v[0].outcome.is_ok());
}
