//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use vrp_cli::commands::{self, Input};
use vrp_cli::report::matrix_from;
use vrp_cli::Report;
use vrp_core::decomposition::{
    decompose, decompose_correlated, plackett_update, vrp_partial_sums_for, w11_equal_variance,
};
use vrp_core::matrixcore::{sym_eigenvalues, Matrix, SymMatrix};
use vrp_core::model::{AugmentedProblem, DesignMatrix, NoiseModel, NoiseSpec};
use vrp_core::planner::{admissible_next_line, DEFAULT_GRID};
use vrp_core::simulate::monte_carlo;
use vrp_core::straightline::{
    check_conditions, identity_checks, lemma_diagnostics, prefix_sums, scope_orderings, step_witness,
    two_point_design, two_point_values, EquivalenceTier,
};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(got: f64, want: f64, tol: f64, what: &str) -> Result<(), String> {
    ensure((got - want).abs() <= tol, || format!("{what}: got {got}, want {want} ± {tol}"))
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_vrp-ols")
}

fn run_cli(args: &[&str]) -> Result<(i32, String, String), String> {
    let out = Command::new(bin())
        .args(args)
        .env("VRP_OLS_THREADS", "0")
        .output()
        .map_err(|e| format!("cannot run binary: {e}"))?;
    Ok((
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    ))
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).expect("write temp file");
    path.display().to_string()
}

fn cli_report(args: &[&str]) -> Result<Report, String> {
    let (code, out, err) = run_cli(args)?;
    ensure(code == 0, || format!("{args:?} exited {code}: {err}"))?;
    Report::parse(&out).map_err(|e| format!("report does not parse: {e}"))
}

const INDEFINITE_W11: &str = r#"{
  "intercept_line": [0.62, 1.24, 1.80],
  "noise": {"diagonal": [1.56, 1.26, 0.78]},
  "next": {"h": 1.96, "variance": 0.28}
}"#;

const REVERSED_NEXT: &str = r#"{
  "intercept_line": [0.7, 1.6, 1.62],
  "noise": {"diagonal": [2, 1, 0.8]},
  "next": {"h": 1.45, "variance": 0.2}
}"#;

fn correlated_block() -> SymMatrix {
    let s = Matrix::from_rows(&[
        vec![2.0, 1.25, 0.9],
        vec![5.0 / 3.0, 1.2, 0.4],
        vec![1.25, 1.0, 0.25],
    ])
    .unwrap();
    SymMatrix::new(s.t_matmul(&s)).unwrap()
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || {
        format!("runtime {:.2}s exceeds {limit_s}s", elapsed.as_secs_f64())
    })
}

fn criterion_1(dir: &Path) -> Outcome {
    let start = Instant::now();
    let p = AugmentedProblem::line(&[0.62, 1.24, 1.80], &[1.56, 1.26, 0.78], 1.96, 0.28).map_err(|e| e.to_string())?;
    let dec = decompose(&p).map_err(|e| e.to_string())?;
    let want = [[0.54605, -0.55859], [-0.55859, 0.56787]];
    for i in 0..2 {
        for j in 0..2 {
            close(dec.w11.get(i, j), want[i][j], 1e-4, "W11")?;
        }
    }
    let ev = sym_eigenvalues(&dec.w11);
    close(ev[0], -0.00174, 1e-4, "eigenvalue 1")?;
    close(ev[1], 1.11566, 1e-4, "eigenvalue 2")?;
    let path = write(dir, "indefinite.json", INDEFINITE_W11);
    let rep = cli_report(&["decompose", &path])?;
    let w11 = matrix_from(&rep.results["w11"]).ok_or("report lacks w11")?;
    ensure(w11.max_abs_diff(dec.w11.as_matrix()) < 1e-10, || "report W11 differs".into())?;
    within(start.elapsed(), 1.0)?;
    Ok(format!("W11 diag ({:.5}, {:.5}), eigenvalues ({:.5}, {:.5})", dec.w11.get(0, 0), dec.w11.get(1, 1), ev[0], ev[1]))
}

fn criterion_2(dir: &Path) -> Outcome {
    let start = Instant::now();
    let cov = correlated_block();
    for (i, want) in [8.340278, 4.0025, 1.0325].into_iter().enumerate() {
        close(cov.get(i, i), want, 1e-6, "covariance diagonal")?;
    }
    close(0.2, 0.2, 1e-6, "next variance")?;
    let base = DesignMatrix::intercept_line(&[0.7, 1.6, 1.7]).map_err(|e| e.to_string())?;
    let noise = NoiseModel::validate(&NoiseSpec::Full(cov.to_rows()), 3).map_err(|e| e.to_string())?;
    let p = AugmentedProblem::new(base, vec![1.0, 1.9], noise, 0.2, None).map_err(|e| e.to_string())?;
    let change = decompose_correlated(&p).map_err(|e| e.to_string())?.variance_change();
    let want = [[-4.505055, 3.277313], [3.277313, -1.987787]];
    for i in 0..2 {
        for j in 0..2 {
            close(change.get(i, j), want[i][j], 1e-4, "V00 - V11")?;
        }
    }
    let file = serde_json::json!({
        "intercept_line": [0.7, 1.6, 1.7],
        "noise": {"full": cov.to_rows()},
        "next": {"h": 1.9, "variance": 0.2},
    });
    let path = write(dir, "correlated.json", &file.to_string());
    let rep = cli_report(&["decompose", "--correlated", &path])?;
    let got = matrix_from(&rep.results["variance_change"]).ok_or("report lacks variance_change")?;
    for i in 0..2 {
        for j in 0..2 {
            close(got.get(i, j), want[i][j], 1e-4, "reported V00 - V11")?;
        }
    }
    within(start.elapsed(), 1.0)?;
    Ok(format!("V00-V11 diag ({:.6}, {:.6})", change.get(0, 0), change.get(1, 1)))
}

fn criterion_3(dir: &Path) -> Outcome {
    let start = Instant::now();
    let p = AugmentedProblem::line(&[0.7, 1.6, 1.62], &[2.0, 1.0, 0.8], 1.45, 0.2).map_err(|e| e.to_string())?;
    let change = decompose(&p).map_err(|e| e.to_string())?.variance_change();
    let want = [[-0.002878, 0.064592], [0.064592, -0.013034]];
    for i in 0..2 {
        for j in 0..2 {
            close(change.get(i, j), want[i][j], 1e-5, "V00 - V11")?;
        }
    }
    let rep = commands::check(&Input::json(REVERSED_NEXT)).map_err(|e| e.to_string())?;
    let c4 = &rep.results["conditions"]["C4"];
    ensure(c4["holds"] == Value::Bool(false), || "check does not flag C4".into())?;
    let witness_m = c4["witness"]["m"].as_u64().ok_or("C4 has no witness")?;
    let path = write(dir, "reversed.json", REVERSED_NEXT);
    let plan = cli_report(&["plan", &path, "--query", "1.45"])?;
    ensure(plan.results["query"]["verdict"] == "inadmissible", || {
        format!("plan verdict {}", plan.results["query"]["verdict"])
    })?;
    within(start.elapsed(), 1.0)?;
    Ok(format!("C4 fails at m = {witness_m}; 1.45 inadmissible"))
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| std::iter::once(1.0).chain((1..k).map(|_| rng.random_range(-3.0..3.0))).collect())
        .collect()
}

/// A random base design with condition number of the Gram matrix ≤ 1e8,
/// plus a next row.
fn conditioned_instance(rng: &mut ChaCha8Rng) -> (DesignMatrix, Vec<f64>) {
    loop {
        let k = rng.random_range(2..=5);
        let n = rng.random_range(k + 1..=50);
        let rows = random_rows(rng, n + 1, k);
        let Ok(base) = DesignMatrix::new(&rows[..n]) else { continue };
        let ev = sym_eigenvalues(base.gram());
        if ev[0] > 0.0 && ev[k - 1] / ev[0] <= 1e8 {
            return (base, rows[n].clone());
        }
    }
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst_residual, mut worst_update) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let (base, row) = conditioned_instance(&mut rng);
        let n = base.n();
        let variances: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..3.0)).collect();
        let next_var = rng.random_range(0.01..3.0);
        let noise = NoiseModel::validate(&NoiseSpec::Diagonal(variances), n).map_err(|e| e.to_string())?;
        let p = AugmentedProblem::new(base, row.clone(), noise, next_var, None).map_err(|e| e.to_string())?;
        let dec = decompose(&p).map_err(|e| e.to_string())?;
        worst_residual = worst_residual.max(dec.residual / dec.v11.max_abs().max(dec.v00.max_abs()));
        let g1 = plackett_update(p.base().gram_inv(), &row).map_err(|e| e.to_string())?;
        let direct = p.augmented().gram_inv();
        worst_update = worst_update.max(g1.max_abs_diff(direct) / direct.max_abs());
    }
    ensure(worst_residual <= 1e-9, || format!("identity residual {worst_residual:e}"))?;
    ensure(worst_update <= 1e-9, || format!("Plackett defect {worst_update:e}"))?;
    within(start.elapsed(), 30.0)?;
    Ok(format!("max residual {worst_residual:.1e}, max update defect {worst_update:.1e}"))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst, mut min_change) = (0.0f64, f64::INFINITY);
    for _ in 0..500 {
        let (base, row) = conditioned_instance(&mut rng);
        let n = base.n();
        let common = rng.random_range(0.1..3.0);
        let next_var = common * rng.random_range(0.01..1.0);
        let noise = NoiseModel::validate(&NoiseSpec::Diagonal(vec![common; n]), n).map_err(|e| e.to_string())?;
        let p = AugmentedProblem::new(base, row, noise, next_var, None).map_err(|e| e.to_string())?;
        let dec = decompose(&p).map_err(|e| e.to_string())?;
        let closed = w11_equal_variance(&p).map_err(|e| e.to_string())?;
        worst = worst.max(closed.max_abs_diff(&dec.w11) / dec.w11.max_abs());
        let change = dec.variance_change();
        for i in 0..change.dim() {
            min_change = min_change.min(change.get(i, i));
        }
    }
    ensure(worst <= 1e-10, || format!("closed-form defect {worst:e}"))?;
    ensure(min_change >= -1e-10, || format!("variance increased by {:e}", -min_change))?;
    Ok(format!("max relative defect {worst:.1e}, min diag change {min_change:.3e}"))
}

fn non_increasing(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..len).map(|_| rng.random_range(0.01..3.0)).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

fn increasing(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let mut x = rng.random_range(0.0..5.0);
    (0..len)
        .map(|_| {
            let v = x;
            x += rng.random_range(0.001..2.0);
            v
        })
        .collect()
}

/// Coordinates whose variance increases beyond round-off.
fn violations(p: &AugmentedProblem) -> Result<usize, String> {
    let dec = decompose(p).map_err(|e| e.to_string())?;
    Ok((0..dec.v00.dim())
        .filter(|&i| {
            let scale = dec.v00.get(i, i).max(dec.v11.get(i, i));
            dec.v00.get(i, i) - dec.v11.get(i, i) < -1e-9 * scale
        })
        .count())
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut bad = 0;
    for _ in 0..10_000 {
        let n = rng.random_range(2..=40);
        let h = increasing(&mut rng, n + 1);
        let v = non_increasing(&mut rng, n + 1);
        let p = AugmentedProblem::line(&h[..n], &v[..n], h[n], v[n]).map_err(|e| e.to_string())?;
        bad += violations(&p)?;
    }
    ensure(bad == 0, || format!("{bad} violations"))?;
    within(start.elapsed(), 60.0)?;
    Ok("0 violations in 10000 designs".into())
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut bad, mut worst) = (0, 0.0f64);
    for _ in 0..10_000 {
        let n = rng.random_range(2..=40);
        let (b, c) = loop {
            let b: f64 = rng.random_range(-5.0..5.0);
            let c = rng.random_range(-5.0..5.0);
            if (b - c).abs() > 1e-3 {
                break (b, c);
            }
        };
        let h = two_point_design(b, c, n);
        let v = non_increasing(&mut rng, n + 1);
        let p = AugmentedProblem::line(&h[..n], &v[..n], h[n], v[n]).map_err(|e| e.to_string())?;
        bad += violations(&p)?;
        let rep = check_conditions(&h[..n], h[n], None).map_err(|e| e.to_string())?;
        for m in 1..=n {
            let (p1, p2) = two_point_values(b, c, n, m).map_err(|e| e.to_string())?;
            for (coord, want) in [p1, p2].into_iter().enumerate() {
                let got = rep.c5.values[coord][m - 1];
                let scale = rep.c5.scales[coord][m - 1].max(want.abs());
                worst = worst.max((got - want).abs() / scale);
            }
        }
    }
    ensure(bad == 0, || format!("{bad} violations"))?;
    ensure(worst <= 1e-9, || format!("closed form disagrees by {worst:e}"))?;
    Ok(format!("0 violations; closed forms agree to {worst:.1e}"))
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut evaluated, mut failing, mut tier2, mut tier3, mut witnesses) = (0, 0, 0, 0, 0);
    while evaluated < 1000 {
        let n = rng.random_range(3..=20);
        let (h, x) = if evaluated % 3 == 0 {
            let h = increasing(&mut rng, n + 1);
            (h[..n].to_vec(), h[n])
        } else {
            ((0..n).map(|_| rng.random_range(-3.0..3.0)).collect::<Vec<f64>>(), rng.random_range(-4.0..4.0))
        };
        let Ok(rep) = check_conditions(&h, x, None) else { continue };
        evaluated += 1;
        let v = rep.verdicts();
        let base = v[0].unwrap();
        for (i, c) in v[1..5].iter().enumerate() {
            ensure(c.unwrap() == base, || format!("C{} disagrees with C1 for h={h:?}, x={x}", i + 2))?;
        }
        if !base {
            failing += 1;
        }
        if rep.tier >= EquivalenceTier::Tier2 {
            tier2 += 1;
            ensure(v[5] == Some(base), || format!("C6 disagrees for h={h:?}, x={x}"))?;
        }
        if rep.tier == EquivalenceTier::Tier3 {
            tier3 += 1;
            ensure(v[6] == Some(base), || format!("C7 disagrees for h={h:?}, x={x}"))?;
        }
        let al = rep.alphas;
        for p in [|a: &vrp_core::straightline::AlphaSet, t: f64| a.p1(t), |a: &vrp_core::straightline::AlphaSet, t: f64| a.p2(t)] {
            let u: Vec<f64> = h.iter().map(|&t| p(&al, t)).collect();
            let negative_prefix = prefix_sums(&u).iter().any(|&s| s < 0.0);
            match step_witness(&u) {
                Some((_, weights)) => {
                    let s: f64 = weights.iter().zip(&u).map(|(a, b)| a * b).sum();
                    ensure(s < 0.0, || "witness sum is not negative".into())?;
                    witnesses += 1;
                }
                None => ensure(!negative_prefix, || "missing witness".into())?,
            }
        }
    }
    Ok(format!(
        "{evaluated} instances ({failing} failing, {tier2} tier≥2, {tier3} tier 3), {witnesses} witnesses"
    ))
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut evaluated, mut worst, mut ordered) = (0, 0.0f64, 0);
    while evaluated < 1000 {
        let n = rng.random_range(2..=20);
        let monotone = evaluated % 2 == 0;
        let (h, x) = if monotone {
            let h = increasing(&mut rng, n + 1);
            (h[..n].to_vec(), h[n])
        } else {
            ((0..n).map(|_| rng.random_range(-3.0..3.0)).collect::<Vec<f64>>(), rng.random_range(-4.0..4.0))
        };
        let Ok(ids) = identity_checks(&h, x) else { continue };
        let mut checks = vec![
            ids.delta1,
            ids.delta2,
            ids.q_and_v,
            ids.r11_direct,
            ids.r11_equals_r21,
            ids.monic_at_mean,
        ];
        checks.extend(ids.root_residuals);
        for m in 1..n {
            let Ok(d) = lemma_diagnostics(&h, x, m) else { continue };
            checks.extend(d.going_down);
            checks.extend(d.prefix_root_increment);
        }
        for c in &checks {
            worst = worst.max(c.relative_defect());
        }
        ensure(worst <= 1e-8, || format!("identity defect {worst:e} for h={h:?}, x={x}"))?;
        if monotone {
            let ord = scope_orderings(&h, x).map_err(|e| e.to_string())?;
            ensure(ord.alphas_positive && ord.min_relative_gap() > 0.0, || {
                format!("orderings fail for h={h:?}, x={x}: {ord:?}")
            })?;
            ensure(ids.r12_minus_r11.lhs > 0.0 && ids.r12_minus_r11.rhs > 0.0, || "r12 - r11 not positive".into())?;
            ensure(ids.r12_minus_r22.lhs > 0.0 && ids.r12_minus_r22.rhs > 0.0, || "r12 - r22 not positive".into())?;
            ordered += 1;
        }
        evaluated += 1;
    }
    Ok(format!("{evaluated} instances, max defect {worst:.1e}, orderings hold on {ordered}"))
}

fn criterion_10(dir: &Path) -> Outcome {
    let start = Instant::now();
    let design = DesignMatrix::intercept_line(&[0.62, 1.24, 1.80, 1.96]).map_err(|e| e.to_string())?;
    let noise = NoiseModel::validate(&NoiseSpec::Diagonal(vec![1.56, 1.26, 0.78, 0.28]), 4).map_err(|e| e.to_string())?;
    let a = monte_carlo(&design, &noise, &[1.0, -0.5], 500_000, 2024).map_err(|e| e.to_string())?;
    let b = monte_carlo(&design, &noise, &[1.0, -0.5], 500_000, 2024).map_err(|e| e.to_string())?;
    ensure(a == b, || "reruns differ".into())?;
    ensure(a.max_rel_dev <= 0.02, || format!("max relative deviation {}", a.max_rel_dev))?;
    let path = write(dir, "mc.json", INDEFINITE_W11);
    let args = ["simulate", &path, "--beta", "1,-0.5", "--reps", "20000", "--seed", "7"];
    let (c1, o1, _) = run_cli(&args)?;
    let (c2, o2, _) = run_cli(&args)?;
    ensure(c1 == 0 && c2 == 0 && o1 == o2, || "CLI reruns differ".into())?;
    within(start.elapsed(), 60.0)?;
    Ok(format!("max relative deviation {:.4}, reruns identical", a.max_rel_dev))
}

fn criterion_11() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut pairs, mut skipped, mut inside) = (0, 0, 0);
    while pairs < 5000 {
        let n = rng.random_range(2..=12);
        let h: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let Ok(region) = admissible_next_line(&h, (-4.0, 4.0), DEFAULT_GRID) else { continue };
        let base = DesignMatrix::intercept_line(&h).map_err(|e| e.to_string())?;
        for _ in 0..10 {
            let x: f64 = rng.random_range(-4.0..4.0);
            pairs += 1;
            if region.distance_to_boundary(x) <= 1e-8 {
                skipped += 1;
                continue;
            }
            let direct = vrp_partial_sums_for(&base, &[1.0, x]).map_err(|e| e.to_string())?.holds();
            ensure(region.contains(x) == direct, || {
                format!("h={h:?}, x={x}: region says {}, partial sums say {direct}", region.contains(x))
            })?;
            if direct {
                inside += 1;
            }
        }
    }
    Ok(format!("{pairs} pairs agree ({inside} admissible, {skipped} at boundaries)"))
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("indefinite W11 example", Box::new(|| criterion_1(dir.path()))),
        ("correlated example", Box::new(|| criterion_2(dir.path()))),
        ("reversed next point example", Box::new(|| criterion_3(dir.path()))),
        ("decomposition identity suite", Box::new(criterion_4)),
        ("equal-variance suite", Box::new(criterion_5)),
        ("increasing line designs", Box::new(criterion_6)),
        ("two-point designs", Box::new(criterion_7)),
        ("criterion equivalence", Box::new(criterion_8)),
        ("algebraic identities", Box::new(criterion_9)),
        ("Monte Carlo calibration", Box::new(|| criterion_10(dir.path()))),
        ("planner consistency", Box::new(criterion_11)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(run))
            .unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("criterion {:>2} PASS  {name} ({secs:.2}s): {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name} ({secs:.2}s): {msg}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
