//! Monte Carlo checks of the analytic covariances and a randomized search
//! for designs that lose variance reduction.
//!
//! Randomness comes from ChaCha8 seeded with the user seed. Work is split
//! into fixed chunks (replications) or single trials (search), and chunk or
//! trial `i` draws from stream `i` of that generator, so results do not
//! depend on the number of threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::decomposition::{coefficient_matrix, decompose, ols_covariance, NONNEG_RTOL};
use crate::error::{Error, Result};
use crate::matrixcore::{sym_eigen, Matrix, SymMatrix};
use crate::model::{AugmentedProblem, DesignMatrix, NoiseModel, PSD_TOL};
use crate::straightline::two_point_design;

/// Replications per RNG stream.
pub const CHUNK: usize = 4096;
/// Environment variable capping worker threads (0 or unset: rayon default).
pub const THREADS_ENV: &str = "VRP_OLS_THREADS";

/// Runs `f` on a pool limited by `VRP_OLS_THREADS` when that is a positive
/// integer.
pub fn with_thread_cap<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let cap = match std::env::var(THREADS_ENV) {
        Ok(s) => s.trim().parse::<usize>().map_err(|_| {
            Error::InvalidArgument(format!("{THREADS_ENV} must be a non-negative integer, got {s:?}"))
        })?,
        Err(_) => 0,
    };
    if cap == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cap)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub reps: usize,
    pub seed: u64,
    pub empirical_cov: SymMatrix,
    pub analytic_cov: SymMatrix,
    pub empirical_mean: Vec<f64>,
    pub max_abs_dev: f64,
    /// Largest relative deviation over the diagonal.
    pub max_rel_dev: f64,
    /// `(empirical - analytic) / se` per diagonal entry, with the normal
    /// theory standard error `analytic·sqrt(2/(reps-1))`.
    pub diag_z: Vec<f64>,
}

/// Running mean and co-moment matrix.
#[derive(Debug, Clone)]
struct Moments {
    count: f64,
    mean: Vec<f64>,
    comoment: Vec<f64>,
}

impl Moments {
    fn new(k: usize) -> Self {
        Moments {
            count: 0.0,
            mean: vec![0.0; k],
            comoment: vec![0.0; k * k],
        }
    }

    fn push(&mut self, x: &[f64]) {
        let k = x.len();
        self.count += 1.0;
        let delta: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        for (m, d) in self.mean.iter_mut().zip(&delta) {
            *m += d / self.count;
        }
        for i in 0..k {
            let after = x[i] - self.mean[i];
            for j in 0..k {
                self.comoment[i * k + j] += after * delta[j];
            }
        }
    }

    fn merge(&mut self, other: &Moments) {
        if other.count == 0.0 {
            return;
        }
        let k = self.mean.len();
        let total = self.count + other.count;
        let delta: Vec<f64> = other.mean.iter().zip(&self.mean).map(|(b, a)| b - a).collect();
        let w = self.count * other.count / total;
        for i in 0..k {
            for j in 0..k {
                self.comoment[i * k + j] += other.comoment[i * k + j] + delta[i] * delta[j] * w;
            }
        }
        for (m, d) in self.mean.iter_mut().zip(&delta) {
            *m += d * other.count / total;
        }
        self.count = total;
    }
}

/// Noise generator: `ε = L z` with `z` standard normal.
enum NoiseFactor {
    Diagonal(Vec<f64>),
    Full(Matrix),
}

impl NoiseFactor {
    fn new(noise: &NoiseModel) -> Result<Self> {
        match noise {
            NoiseModel::Diagonal { variances, .. } => {
                Ok(NoiseFactor::Diagonal(variances.iter().map(|v| v.sqrt()).collect()))
            }
            NoiseModel::Full { cov } => {
                let (values, vectors) = sym_eigen(cov);
                let floor = -PSD_TOL * cov.max_abs().max(1.0);
                let n = cov.dim();
                let mut l = Matrix::zeros(n, n);
                for (j, &lam) in values.iter().enumerate() {
                    if lam < floor {
                        return Err(Error::NotPsd { min_eigenvalue: lam });
                    }
                    let s = lam.max(0.0).sqrt();
                    for i in 0..n {
                        l.set(i, j, vectors.get(i, j) * s);
                    }
                }
                Ok(NoiseFactor::Full(l))
            }
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        match self {
            NoiseFactor::Diagonal(sd) => {
                for (e, s) in out.iter_mut().zip(sd) {
                    let z: f64 = rng.sample(StandardNormal);
                    *e = s * z;
                }
            }
            NoiseFactor::Full(l) => {
                let z: Vec<f64> = (0..out.len()).map(|_| rng.sample(StandardNormal)).collect();
                out.copy_from_slice(&l.mat_vec(&z));
            }
        }
    }
}

/// Simulates `Y = Aβ + ε`, refits OLS each replication and compares the
/// empirical covariance of the estimates with the sandwich formula.
pub fn monte_carlo(
    d: &DesignMatrix,
    noise: &NoiseModel,
    beta: &[f64],
    reps: usize,
    seed: u64,
) -> Result<SimulationResult> {
    let (n, k) = (d.n(), d.k());
    if beta.len() != k {
        return Err(Error::ShapeMismatch {
            what: "beta",
            expected: k,
            found: beta.len(),
        });
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::NonFinite { what: "beta" });
    }
    if reps < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 replications, got {reps}")));
    }
    let analytic_cov = ols_covariance(d, noise)?;
    let factor = NoiseFactor::new(noise)?;
    let coef = coefficient_matrix(d);
    let mean_y = d.matrix().mat_vec(beta);

    let chunks = reps.div_ceil(CHUNK);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c as u64);
            let mut m = Moments::new(k);
            let mut eps = vec![0.0; n];
            let mut y = vec![0.0; n];
            let count = CHUNK.min(reps - c * CHUNK);
            for _ in 0..count {
                factor.draw(&mut rng, &mut eps);
                for ((yi, mu), e) in y.iter_mut().zip(&mean_y).zip(&eps) {
                    *yi = mu + e;
                }
                m.push(&coef.mat_vec(&y));
            }
            m
        })
        .collect();
    let mut total = Moments::new(k);
    for p in &parts {
        total.merge(p);
    }

    let denom = (reps - 1) as f64;
    let empirical = Matrix::from_vec(k, k, total.comoment.iter().map(|c| c / denom).collect())?;
    let empirical_cov = SymMatrix::new(empirical)?;
    let max_abs_dev = empirical_cov.max_abs_diff(&analytic_cov);
    let mut max_rel_dev: f64 = 0.0;
    let mut diag_z = Vec::with_capacity(k);
    for i in 0..k {
        let a = analytic_cov.get(i, i);
        let e = empirical_cov.get(i, i);
        let rel = if a > 0.0 { (e - a).abs() / a } else { (e - a).abs() };
        max_rel_dev = max_rel_dev.max(rel);
        let se = a * (2.0 / denom).sqrt();
        diag_z.push(if se > 0.0 { (e - a) / se } else { 0.0 });
    }
    Ok(SimulationResult {
        reps,
        seed,
        empirical_cov,
        analytic_cov,
        empirical_mean: total.mean,
        max_abs_dev,
        max_rel_dev,
        diag_z,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    /// Strictly increasing non-negative points, next point included.
    Increasing,
    /// Independent points in any order.
    Unrestricted,
    /// Alternating two-point designs.
    TwoPoint,
}

impl std::str::FromStr for SearchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "increasing" => Ok(SearchMode::Increasing),
            "unrestricted" => Ok(SearchMode::Unrestricted),
            "two-point" => Ok(SearchMode::TwoPoint),
            other => Err(Error::InvalidArgument(format!("unknown search mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for SearchMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SearchMode::Increasing => "increasing",
            SearchMode::Unrestricted => "unrestricted",
            SearchMode::TwoPoint => "two-point",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    /// Base observations.
    pub n: usize,
    /// Parameters; line designs when 2, random rows with intercept above.
    pub k: usize,
    pub trials: usize,
    pub seed: u64,
    pub mode: SearchMode,
    /// Also evaluate the fixed probe instances.
    pub include_probes: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    /// The points are not all non-negative and strictly increasing.
    MonotoneViolated,
    Other,
}

impl std::fmt::Display for Category {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Category::MonotoneViolated => "monotone-h-violated",
            Category::Other => "other",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleRecord {
    /// Trial index, or `None` for a fixed probe.
    pub trial: Option<usize>,
    /// The n base rows followed by the new row.
    pub rows: Vec<Vec<f64>>,
    /// Variances of all n+1 observations.
    pub variances: Vec<f64>,
    /// Diagonal of `V00 - V11`.
    pub diag_change: Vec<f64>,
    /// Coordinates whose variance grew.
    pub violating: Vec<usize>,
    pub category: Category,
}

/// A line design and variances: `(h with next point last, variances)`.
pub type LineInstance = (Vec<f64>, Vec<f64>);

/// Fixed instances that lose variance reduction: an increasing base with a
/// next point below the last one.
pub fn probe_instances() -> Vec<LineInstance> {
    vec![(vec![0.7, 1.6, 1.62, 1.45], vec![2.0, 1.0, 0.8, 0.2])]
}

fn is_nonneg_increasing(h: &[f64]) -> bool {
    h.iter().all(|&x| x >= 0.0) && h.windows(2).all(|w| w[0] < w[1])
}

/// Evaluates one instance; `Ok(None)` when variance reduction holds.
fn evaluate(
    trial: Option<usize>,
    rows: Vec<Vec<f64>>,
    variances: Vec<f64>,
    line_points: Option<&[f64]>,
) -> Result<Option<CounterexampleRecord>> {
    let n = rows.len() - 1;
    let base = DesignMatrix::new(&rows[..n])?;
    let noise = NoiseModel::validate(&crate::model::NoiseSpec::Diagonal(variances[..n].to_vec()), n)?;
    let problem = AugmentedProblem::new(base, rows[n].clone(), noise, variances[n], None)?;
    let dec = decompose(&problem)?;
    let k = rows[0].len();
    let mut diag_change = Vec::with_capacity(k);
    let mut violating = Vec::new();
    for i in 0..k {
        let change = dec.v00.get(i, i) - dec.v11.get(i, i);
        let scale = dec.v00.get(i, i).abs().max(dec.v11.get(i, i).abs());
        if change < -NONNEG_RTOL * scale {
            violating.push(i);
        }
        diag_change.push(change);
    }
    if violating.is_empty() {
        return Ok(None);
    }
    let category = match line_points {
        Some(h) if is_nonneg_increasing(h) => Category::Other,
        Some(_) => Category::MonotoneViolated,
        None => Category::Other,
    };
    Ok(Some(CounterexampleRecord {
        trial,
        rows,
        variances,
        diag_change,
        violating,
        category,
    }))
}

fn line_rows(h: &[f64]) -> Vec<Vec<f64>> {
    h.iter().map(|&x| vec![1.0, x]).collect()
}

fn draw_trial(config: &SearchConfig, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Option<Vec<f64>>) {
    let n = config.n;
    if config.k == 2 {
        let h: Vec<f64> = match config.mode {
            SearchMode::Increasing => {
                let mut h: Vec<f64> = (0..=n).map(|_| rng.random_range(0.0..10.0)).collect();
                h.sort_by(f64::total_cmp);
                h
            }
            SearchMode::Unrestricted => (0..=n).map(|_| rng.random_range(0.0..3.0)).collect(),
            SearchMode::TwoPoint => {
                let b = rng.random_range(-5.0..5.0);
                let c = rng.random_range(-5.0..5.0);
                two_point_design(b, c, n)
            }
        };
        (line_rows(&h), Some(h))
    } else {
        let rows = (0..=n)
            .map(|_| {
                std::iter::once(1.0)
                    .chain((1..config.k).map(|_| rng.sample::<f64, _>(StandardNormal)))
                    .collect()
            })
            .collect();
        (rows, None)
    }
}

fn draw_variances(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..=n).map(|_| rng.random_range(0.05..2.0)).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Samples designs with non-increasing variances and records every instance
/// where some coordinate's variance increases. Degenerate draws are skipped.
pub fn search_counterexamples(config: &SearchConfig) -> Result<Vec<CounterexampleRecord>> {
    if config.trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    if config.k < 2 {
        return Err(Error::InvalidArgument(format!("k must be at least 2, got {}", config.k)));
    }
    if config.n < config.k {
        return Err(Error::InvalidArgument(format!(
            "n = {} is too small for k = {}",
            config.n, config.k
        )));
    }
    let mut records = Vec::new();
    if config.include_probes {
        for (h, v) in probe_instances() {
            if let Some(r) = evaluate(None, line_rows(&h), v, Some(&h))? {
                records.push(r);
            }
        }
    }
    let found: Vec<Option<CounterexampleRecord>> = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(config.seed, t as u64);
            let (rows, h) = draw_trial(config, &mut rng);
            let variances = draw_variances(config.n, &mut rng);
            evaluate(Some(t), rows, variances, h.as_deref()).ok().flatten()
        })
        .collect();
    records.extend(found.into_iter().flatten());
    Ok(records)
}
