//! The five verbs, each turning inputs into a [`Report`].

use serde_json::{json, Value};
use vrp_core::decomposition::{decompose as decompose_uncorrelated, decompose_correlated, vrp_partial_sums_for, VrpVerdict};
use vrp_core::model::{NoiseModel, NoiseSpec};
use vrp_core::planner::{admissible_next_line, is_admissible_line, DEFAULT_GRID};
use vrp_core::simulate::{monte_carlo, search_counterexamples, Category, SearchConfig, SearchMode};
use vrp_core::straightline::{check_conditions, ConditionValues, EquivalenceTier};

use crate::error::CliError;
use crate::problem::{parse_csv_design, parse_problem, ProblemFile, Resolved};
use crate::report::{matrix, num, nums, object, Report};

/// Raw input texts of a command.
#[derive(Debug, Clone)]
pub struct Input {
    pub problem: String,
    /// Design rows given separately as CSV.
    pub csv: Option<String>,
}

impl Input {
    pub fn json(problem: impl Into<String>) -> Self {
        Input {
            problem: problem.into(),
            csv: None,
        }
    }

    fn load(&self) -> Result<Resolved, CliError> {
        let file = match &self.csv {
            Some(csv) => ProblemFile::parse_without_design(&self.problem)?.with_design(parse_csv_design(csv)?)?,
            None => parse_problem(&self.problem)?,
        };
        file.resolve()
    }

    fn digest_parts(&self) -> Vec<&[u8]> {
        let mut parts = vec![self.problem.as_bytes()];
        if let Some(c) = &self.csv {
            parts.push(c.as_bytes());
        }
        parts
    }

    fn report(&self, command: Value, results: Value) -> Report {
        Report::new(command, &self.digest_parts(), results)
    }
}

fn verdict_json(v: &VrpVerdict) -> Value {
    json!({
        "holds": v.holds(),
        "per_coordinate": v.per_coordinate,
        "witness_m": v.witness,
        "worst_margin": num(v.worst_margin),
        "partial_sums": v.partial_sums.iter().map(|s| nums(s)).collect::<Vec<_>>(),
    })
}

pub fn decompose(input: &Input, correlated: bool) -> Result<Report, CliError> {
    let r = input.load()?;
    let p = r.augmented_problem()?;
    let dec = if correlated {
        decompose_correlated(&p)?
    } else {
        decompose_uncorrelated(&p)?
    };
    let change = dec.variance_change();
    let diag_change: Vec<f64> = (0..change.dim()).map(|i| change.get(i, i)).collect();
    let mut results = object(vec![
        ("v00", matrix(&dec.v00)),
        ("v11", matrix(&dec.v11)),
        ("w", matrix(&dec.w)),
        ("w11", matrix(&dec.w11)),
        ("variance_change", matrix(&change)),
        ("variance_reduced", json!(diag_change.iter().all(|&c| c >= 0.0))),
        ("leverage", num(dec.d_lev)),
        ("q", num(dec.q)),
        ("residual", num(dec.residual)),
        ("hypotheses_hold", json!(p.satisfies_vrp_hypotheses())),
        ("partial_sums", verdict_json(&vrp_partial_sums_for(p.base(), p.next_row())?)),
    ]);
    if let (Some(w22), Some(closed), Some(defect)) = (&dec.w22, &dec.w22_closed_form, dec.w22_defect) {
        let obj = results.as_object_mut().expect("object");
        obj.insert("w22".into(), matrix(w22));
        obj.insert("w22_closed_form".into(), matrix(closed));
        obj.insert("w22_defect".into(), num(defect));
    }
    Ok(input.report(json!({"verb": "decompose", "correlated": correlated}), results))
}

fn condition_json(c: &ConditionValues, families: usize) -> Value {
    json!({
        "holds": c.holds,
        "witness": c.witness.map(|(coord, m)| json!({"coordinate": coord, "m": m})),
        "values": c.values[..families].iter().map(|v| nums(v)).collect::<Vec<_>>(),
    })
}

pub fn check(input: &Input) -> Result<Report, CliError> {
    let r = input.load()?;
    let next = r.require_next()?;
    let partial = vrp_partial_sums_for(&r.design, &next.row)?;
    let mut results = object(vec![("partial_sums", verdict_json(&partial))]);
    let obj = results.as_object_mut().expect("object");

    if let (Some(h), Some(x)) = (&r.line, next.line_point()) {
        // Excess variances over the new one, when the noise is plain diagonal.
        let weights = match (&r.noise, &next.cross_cov) {
            (Some(NoiseModel::Diagonal { variances, .. }), None) => {
                Some(variances.iter().map(|v| v - next.variance).collect::<Vec<_>>())
            }
            _ => None,
        };
        let rep = check_conditions(h, x, weights.as_deref())?;
        let al = &rep.alphas;
        obj.insert("tier".into(), json!(match rep.tier {
            EquivalenceTier::Tier1 => 1,
            EquivalenceTier::Tier2 => 2,
            EquivalenceTier::Tier3 => 3,
        }));
        obj.insert(
            "coefficients".into(),
            json!({
                "a": nums(&[al.a1, al.a2, al.a3, al.a4, al.a5, al.a6]),
                "alpha": nums(&[al.alpha1, al.alpha2, al.alpha3, al.alpha4, al.alpha5]),
                "q": num(al.q),
            }),
        );
        obj.insert(
            "roots".into(),
            match (&rep.roots, &rep.root_error) {
                (Some(rt), _) => json!({
                    "r11": num(rt.r11), "r12": num(rt.r12),
                    "r21": num(rt.r21), "r22": num(rt.r22),
                    "delta1": num(rt.delta1), "delta2": num(rt.delta2),
                }),
                (None, Some(e)) => json!({"error": e.to_string()}),
                (None, None) => Value::Null,
            },
        );
        let mut conds = serde_json::Map::new();
        for (name, c, fam) in [
            ("C1", Some(&rep.c1), 2),
            ("C2", Some(&rep.c2), 2),
            ("C3", Some(&rep.c3), 2),
            ("C4", Some(&rep.c4), 2),
            ("C5", Some(&rep.c5), 2),
            ("C6", rep.c6.as_ref(), 2),
            ("C7", rep.c7.as_ref(), 1),
        ] {
            conds.insert(name.into(), c.map_or(Value::Null, |c| condition_json(c, fam)));
        }
        let failing: Vec<&str> = ["C1", "C2", "C3", "C4", "C5", "C6", "C7"]
            .into_iter()
            .zip(rep.verdicts())
            .filter(|(_, v)| *v == Some(false))
            .map(|(n, _)| n)
            .collect();
        obj.insert("conditions".into(), Value::Object(conds));
        obj.insert("failing".into(), json!(failing));
        if let Some(((d0, d1), ok)) = rep.supplied {
            obj.insert(
                "supplied_profile".into(),
                json!({"w11_diagonal": nums(&[d0, d1]), "nonnegative": ok}),
            );
        }
    }
    Ok(input.report(json!({"verb": "check"}), results))
}

pub fn plan(input: &Input, search: Option<(f64, f64)>, grid: usize, query: Option<f64>) -> Result<Report, CliError> {
    let r = input.load()?;
    let h = r
        .line
        .as_ref()
        .ok_or_else(|| vrp_core::Error::InvalidArgument("plan needs an intercept-plus-slope design".into()))?;
    let domain = search.unwrap_or_else(|| {
        let lo = h.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        (lo - span, hi + span)
    });
    let region = admissible_next_line(h, domain, grid)?;
    let mut results = object(vec![
        (
            "intervals",
            Value::Array(region.intervals.iter().map(|&(a, b)| nums(&[a, b])).collect()),
        ),
        ("search_domain", nums(&[region.search_domain.0, region.search_domain.1])),
        ("boundary_points", nums(&region.boundary_points)),
        ("polynomials_checked", json!(region.polynomials_checked)),
    ]);
    if let Some(x) = query {
        let direct = is_admissible_line(h, x)?;
        let verdict = if direct { "admissible" } else { "inadmissible" };
        results.as_object_mut().expect("object").insert(
            "query".into(),
            json!({
                "h_next": num(x),
                "verdict": verdict,
                "in_region": region.contains(x),
                "distance_to_boundary": num(region.distance_to_boundary(x)),
            }),
        );
    }
    let command = json!({
        "verb": "plan",
        "search": nums(&[domain.0, domain.1]),
        "grid": grid,
        "query": query.map(num),
    });
    Ok(input.report(command, results))
}

pub const MIN_REPS: usize = 1000;

pub fn simulate(input: &Input, beta: Option<Vec<f64>>, reps: usize, seed: u64) -> Result<Report, CliError> {
    if reps < MIN_REPS {
        return Err(vrp_core::Error::InvalidArgument(format!("--reps must be at least {MIN_REPS}")).into());
    }
    let r = input.load()?;
    let noise = r.require_noise()?;
    // With a next observation the augmented design is simulated.
    let (design, noise, which) = match &r.next {
        Some(_) => {
            let p = r.augmented_problem()?;
            let joint = if noise.is_diagonal() && p.cross_cov().is_none() {
                let mut v = noise.variances();
                v.push(p.next_variance());
                NoiseModel::validate(&NoiseSpec::Diagonal(v), p.augmented().n())?
            } else {
                NoiseModel::validate(&NoiseSpec::Full(p.joint_covariance().to_rows()), p.augmented().n())?
            };
            (p.augmented().clone(), joint, "augmented")
        }
        None => (r.design.clone(), noise.clone(), "base"),
    };
    let beta = beta.unwrap_or_else(|| vec![0.0; design.k()]);
    let res = monte_carlo(&design, &noise, &beta, reps, seed)?;
    let results = object(vec![
        ("design", json!(which)),
        ("reps", json!(res.reps)),
        ("seed", json!(res.seed)),
        ("empirical_cov", matrix(&res.empirical_cov)),
        ("analytic_cov", matrix(&res.analytic_cov)),
        ("empirical_mean", nums(&res.empirical_mean)),
        ("max_abs_dev", num(res.max_abs_dev)),
        ("max_rel_dev", num(res.max_rel_dev)),
        ("diag_z", nums(&res.diag_z)),
    ]);
    let command = json!({"verb": "simulate", "beta": nums(&beta), "reps": reps, "seed": seed});
    Ok(input.report(command, results))
}

pub fn search(config: &SearchConfig) -> Result<Report, CliError> {
    let records = search_counterexamples(config)?;
    let count = |c: Category| records.iter().filter(|r| r.category == c).count();
    let results = object(vec![
        ("trials", json!(config.trials)),
        ("records_found", json!(records.len())),
        (
            "by_category",
            json!({
                "monotone-h-violated": count(Category::MonotoneViolated),
                "other": count(Category::Other),
            }),
        ),
        (
            "records",
            Value::Array(
                records
                    .iter()
                    .map(|r| {
                        json!({
                            "trial": r.trial,
                            "rows": r.rows.iter().map(|row| nums(row)).collect::<Vec<_>>(),
                            "variances": nums(&r.variances),
                            "diag_change": nums(&r.diag_change),
                            "violating": r.violating,
                            "category": r.category.to_string(),
                        })
                    })
                    .collect(),
            ),
        ),
    ]);
    let command = json!({
        "verb": "search",
        "n": config.n,
        "k": config.k,
        "trials": config.trials,
        "seed": config.seed,
        "mode": config.mode.to_string(),
        "probe": config.include_probes,
    });
    Ok(Report::new(command, &[], results))
}

/// Default search domain and grid for `plan`.
pub const PLAN_GRID: usize = DEFAULT_GRID;

/// Parses `lo:hi`.
pub fn parse_interval(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected lo:hi, got {s:?}"))?;
    let lo: f64 = a.trim().parse().map_err(|e| format!("bad lower bound {a:?}: {e}"))?;
    let hi: f64 = b.trim().parse().map_err(|e| format!("bad upper bound {b:?}: {e}"))?;
    Ok((lo, hi))
}

pub fn parse_mode(s: &str) -> Result<SearchMode, String> {
    s.parse().map_err(|e: vrp_core::Error| e.to_string())
}
