//! Closed forms for the intercept-plus-slope design `(1, h_i)`.
//!
//! Notation follows the usual sums over the first m design points:
//! `S1,m = Σ h_i`, `S2,m = Σ h_i²`, `V_m = S2,m/m - (S1,m/m)²`. Unless a
//! prefix length is given explicitly, sums run over the n base points and
//! `h_next` is the (n+1)-th point.
//!
//! Everything that decides whether the diagonal of `W11` stays non-negative
//! for every non-increasing noise profile is expressed through the
//! coefficients `a1..a6`, `α1..α5` and the quadratic "driving" polynomials
//! `p1(h) = α1 - 2α2 h + α3 h²` and `p2(h) = α3 - 2α4 h + α5 h²`.

use crate::decomposition::{vrp_partial_sums_for, NONNEG_RTOL};
use crate::error::{Error, Result, RootDenominator};
use crate::model::DesignMatrix;

/// `V` is treated as zero below this fraction of `S2/m`.
const DEGENERATE_V_RTOL: f64 = 1e-14;
/// Root denominators below this fraction of their terms count as zero.
const ROOT_DENOM_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSummary {
    pub m: usize,
    pub s1: f64,
    pub s2: f64,
    /// Population variance of the points (two-pass).
    pub v: f64,
    /// `|(S2/S1 - S1/m) - V/(S1/m)|` when `S1 ≠ 0`.
    pub ratio_identity_defect: Option<f64>,
}

impl LineSummary {
    pub fn mean(&self) -> f64 {
        self.s1 / self.m as f64
    }

    fn is_degenerate(&self) -> bool {
        self.v <= DEGENERATE_V_RTOL * self.s2 / self.m as f64
    }
}

/// Sums and variance of `h`. Panics on an empty slice.
pub fn summarize(h: &[f64]) -> LineSummary {
    assert!(!h.is_empty(), "summarize needs at least one point");
    let m = h.len();
    let mf = m as f64;
    let s1: f64 = h.iter().sum();
    let s2: f64 = h.iter().map(|x| x * x).sum();
    let mean = s1 / mf;
    let v = h.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / mf;
    let ratio_identity_defect = (s1 != 0.0).then(|| ((s2 / s1 - mean) - v / mean).abs());
    LineSummary {
        m,
        s1,
        s2,
        v,
        ratio_identity_defect,
    }
}

/// Summaries of every prefix `h[..m]`, m = 1..=len, in one pass.
pub fn prefix_summaries(h: &[f64]) -> Vec<LineSummary> {
    let mut out = Vec::with_capacity(h.len());
    let (mut s1, mut s2, mut mean, mut m2) = (0.0, 0.0, 0.0, 0.0);
    for (i, &x) in h.iter().enumerate() {
        let m = i + 1;
        s1 += x;
        s2 += x * x;
        let delta = x - mean;
        mean += delta / m as f64;
        m2 += delta * (x - mean);
        out.push(LineSummary {
            m,
            s1,
            s2,
            v: (m2 / m as f64).max(0.0),
            ratio_identity_defect: None,
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineLeverage {
    pub d: f64,
    pub q: f64,
    /// `((n+1)²/n²) V_{n+1}/V_n`, which equals `q` in exact arithmetic.
    pub q_from_variances: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaSet {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    pub a5: f64,
    pub a6: f64,
    /// `a1 - a2`, `a3 - a4`, `a5 - a6` from their factored forms.
    pub diff12: f64,
    pub diff34: f64,
    pub diff56: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
    pub alpha5: f64,
    pub q: f64,
}

impl AlphaSet {
    fn new(n: usize, base: &LineSummary, h_next: f64, q: f64) -> Self {
        let nf = n as f64;
        let a1 = q * base.s2;
        let a2 = base.s2 + h_next * h_next;
        let a3 = q * base.s1;
        let a4 = base.s1 + h_next;
        let a5 = nf * q;
        let a6 = nf + 1.0;
        // With e = S2 - h S1, f = S1 - n h and g = n²V:
        // a1 - a2 = e²/g, a3 - a4 = ef/g, a5 - a6 = f²/g. Subtracting the
        // a's directly loses most digits when they nearly coincide.
        let e = base.s2 - h_next * base.s1;
        let f = base.s1 - nf * h_next;
        let g = nf * nf * base.v;
        let diff12 = e * e / g;
        let diff34 = e * f / g;
        let diff56 = f * f / g;
        AlphaSet {
            a1,
            a2,
            a3,
            a4,
            a5,
            a6,
            diff12,
            diff34,
            diff56,
            // a1² - a2² and friends, expanded around the differences.
            alpha1: diff12 * (a1 + a2),
            alpha2: a2 * diff34 + a4 * diff12 + diff12 * diff34,
            alpha3: diff34 * (a3 + a4),
            alpha4: a4 * diff56 + a6 * diff34 + diff34 * diff56,
            alpha5: diff56 * (a5 + a6),
            q,
        }
    }

    pub fn p1(&self, h: f64) -> f64 {
        self.alpha1 - 2.0 * self.alpha2 * h + self.alpha3 * h * h
    }

    pub fn p2(&self, h: f64) -> f64 {
        self.alpha3 - 2.0 * self.alpha4 * h + self.alpha5 * h * h
    }

    /// `α2² - α1α3`.
    pub fn delta1(&self) -> f64 {
        self.alpha2 * self.alpha2 - self.alpha1 * self.alpha3
    }

    /// `α4² - α3α5`.
    pub fn delta2(&self) -> f64 {
        self.alpha4 * self.alpha4 - self.alpha3 * self.alpha5
    }

    /// Left sides of the two prefix-mean inequalities
    /// `α1 - 2α2 μ + α3 s ≥ 0` and `α3 - 2α4 μ + α5 s ≥ 0`, where
    /// `μ = S1,m/m` and `s = S2,m/m`, with the magnitude of their terms.
    fn prefix_mean_values(&self, mu: f64, s: f64) -> [(f64, f64); 2] {
        [
            (
                self.alpha1 - 2.0 * self.alpha2 * mu + self.alpha3 * s,
                self.alpha1.abs() + 2.0 * (self.alpha2 * mu).abs() + (self.alpha3 * s).abs(),
            ),
            (
                self.alpha3 - 2.0 * self.alpha4 * mu + self.alpha5 * s,
                self.alpha3.abs() + 2.0 * (self.alpha4 * mu).abs() + (self.alpha5 * s).abs(),
            ),
        ]
    }
}

/// Precomputed quantities for a base design `h` and a next point.
#[derive(Debug, Clone)]
struct LineFit {
    n: usize,
    base: LineSummary,
    next: LineSummary,
    h_next: f64,
    d: f64,
    alphas: AlphaSet,
}

impl LineFit {
    fn new(h: &[f64], h_next: f64) -> Result<Self> {
        if h.is_empty() {
            return Err(Error::ShapeMismatch {
                what: "design points",
                expected: 1,
                found: 0,
            });
        }
        if h.iter().any(|x| !x.is_finite()) || !h_next.is_finite() {
            return Err(Error::NonFinite {
                what: "design points",
            });
        }
        let n = h.len();
        let nf = n as f64;
        let base = summarize(h);
        if base.is_degenerate() {
            return Err(Error::DegenerateDesign { variance: base.v });
        }
        let mut all = h.to_vec();
        all.push(h_next);
        let next = summarize(&all);
        let d = ((base.s1 - nf * h_next).powi(2) / (nf * nf * base.v) + 1.0) / nf;
        let alphas = AlphaSet::new(n, &base, h_next, 1.0 + d);
        Ok(LineFit {
            n,
            base,
            next,
            h_next,
            d,
            alphas,
        })
    }

    fn denominator(&self) -> f64 {
        ((self.n + 1) as f64).powi(4) * self.next.v * self.next.v
    }
}

pub fn leverage_line(h: &[f64], h_next: f64) -> Result<LineLeverage> {
    let fit = LineFit::new(h, h_next)?;
    let n = fit.n as f64;
    Ok(LineLeverage {
        d: fit.d,
        q: fit.alphas.q,
        q_from_variances: ((n + 1.0) / n).powi(2) * fit.next.v / fit.base.v,
    })
}

pub fn alphas(h: &[f64], h_next: f64) -> Result<AlphaSet> {
    Ok(LineFit::new(h, h_next)?.alphas)
}

/// `(δ11, δ1h, δhh) = (Σ D_i, Σ D_i h_i, Σ D_i h_i²)`.
pub fn deltas(h: &[f64], weights: &[f64]) -> (f64, f64, f64) {
    h.iter()
        .zip(weights)
        .fold((0.0, 0.0, 0.0), |(a, b, c), (&x, &w)| (a + w, b + w * x, c + w * x * x))
}

/// Diagonal of `W11` (intercept, slope) for the diagonal `D = weights`.
pub fn w11_diag_line(h: &[f64], h_next: f64, weights: &[f64]) -> Result<(f64, f64)> {
    if weights.len() != h.len() {
        return Err(Error::ShapeMismatch {
            what: "weights",
            expected: h.len(),
            found: weights.len(),
        });
    }
    let fit = LineFit::new(h, h_next)?;
    let al = &fit.alphas;
    let (d11, d1h, dhh) = deltas(h, weights);
    let den = fit.denominator();
    Ok((
        (al.alpha1 * d11 - 2.0 * al.alpha2 * d1h + al.alpha3 * dhh) / den,
        (al.alpha3 * d11 - 2.0 * al.alpha4 * d1h + al.alpha5 * dhh) / den,
    ))
}

/// Roots of the driving polynomials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootSet {
    pub r11: f64,
    pub r12: f64,
    pub r21: f64,
    pub r22: f64,
    pub delta1: f64,
    pub delta2: f64,
}

impl RootSet {
    /// `(h - r11)(h - r12)`, i.e. `p1 / α3`.
    pub fn p1_monic(&self, h: f64) -> f64 {
        (h - self.r11) * (h - self.r12)
    }

    /// `(h - r21)(h - r22)`, i.e. `p2 / α5`.
    pub fn p2_monic(&self, h: f64) -> f64 {
        (h - self.r21) * (h - self.r22)
    }
}

fn ratio(num: f64, den: f64, terms: f64, which: RootDenominator) -> Result<f64> {
    if den.abs() <= ROOT_DENOM_RTOL * terms {
        return Err(Error::DegenerateRoot(which));
    }
    Ok(num / den)
}

pub fn driving_roots(h: &[f64], h_next: f64) -> Result<RootSet> {
    roots_of(&LineFit::new(h, h_next)?)
}

fn roots_of(fit: &LineFit) -> Result<RootSet> {
    let al = &fit.alphas;
    let n = fit.n as f64;
    let centered = fit.base.s1 - n * fit.h_next;
    if centered.abs() <= ROOT_DENOM_RTOL * (fit.base.s1.abs() + (n * fit.h_next).abs()) {
        return Err(Error::DegenerateRoot(RootDenominator::CenteredPoint));
    }
    let s34 = al.a3.abs() + al.a4.abs();
    let s56 = al.a5.abs() + al.a6.abs();
    Ok(RootSet {
        r11: ratio(al.diff12, al.diff34, s34, RootDenominator::A3MinusA4)?,
        r12: ratio(al.a1 + al.a2, al.a3 + al.a4, s34, RootDenominator::A3PlusA4)?,
        r21: ratio(al.diff34, al.diff56, s56, RootDenominator::A5MinusA6)?,
        r22: ratio(al.a3 + al.a4, al.a5 + al.a6, s56, RootDenominator::A5PlusA6)?,
        delta1: al.delta1(),
        delta2: al.delta2(),
    })
}

/// Which equivalences among the conditions are guaranteed for a design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EquivalenceTier {
    /// `V_n > 0`: C1 through C5 are equivalent.
    Tier1,
    /// Additionally `α3, α5 > 0`: C6 joins.
    Tier2,
    /// Additionally all n+1 points non-negative and strictly increasing:
    /// C7 joins.
    Tier3,
}

/// Per-prefix values of one condition, for the intercept (index 0) and
/// slope (index 1) coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionValues {
    /// `values[c][m-1]`.
    pub values: [Vec<f64>; 2],
    /// Term magnitudes the values are judged against.
    pub scales: [Vec<f64>; 2],
    pub holds: bool,
    /// First failing `(coordinate, m)`.
    pub witness: Option<(usize, usize)>,
}

impl ConditionValues {
    fn from_parts(values: [Vec<f64>; 2], scales: [Vec<f64>; 2], families: usize) -> Self {
        let mut witness = None;
        'outer: for c in 0..families {
            for (j, (v, s)) in values[c].iter().zip(&scales[c]).enumerate() {
                if *v < -NONNEG_RTOL * s {
                    witness = Some((c, j + 1));
                    break 'outer;
                }
            }
        }
        ConditionValues {
            values,
            scales,
            holds: witness.is_none(),
            witness,
        }
    }
}

/// Evaluation of the chain of criteria C1..C7 for one design.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub n: usize,
    pub tier: EquivalenceTier,
    pub alphas: AlphaSet,
    /// `None` when a root denominator vanished; see `root_error`.
    pub roots: Option<RootSet>,
    pub root_error: Option<Error>,
    /// W11 diagonal under every step profile, through the general k×k
    /// matrix route.
    pub c1: ConditionValues,
    /// α/δ form evaluated at the step profiles.
    pub c2: ConditionValues,
    /// Prefix sums of `p1(h_i)`, `p2(h_i)`.
    pub c3: ConditionValues,
    /// Prefix-mean form; the left sides are quartics in `h_next`.
    pub c4: ConditionValues,
    /// `p(S1,m/m) + α V_m`.
    pub c5: ConditionValues,
    /// Monic form `p̄(S1,m/m) + V_m`; needs the roots.
    pub c6: Option<ConditionValues>,
    /// First family of C6 alone.
    pub c7: Option<ConditionValues>,
    /// W11 diagonal for the caller's own `D`, with its verdict.
    pub supplied: Option<((f64, f64), bool)>,
}

impl ConditionReport {
    /// Verdicts of C1..C7 (`None` where not evaluated).
    pub fn verdicts(&self) -> [Option<bool>; 7] {
        [
            Some(self.c1.holds),
            Some(self.c2.holds),
            Some(self.c3.holds),
            Some(self.c4.holds),
            Some(self.c5.holds),
            self.c6.as_ref().map(|c| c.holds),
            self.c7.as_ref().map(|c| c.holds),
        ]
    }
}

fn is_nonneg_increasing(points: &[f64]) -> bool {
    points.iter().all(|&x| x >= 0.0) && points.windows(2).all(|w| w[0] < w[1])
}

pub fn check_conditions(h: &[f64], h_next: f64, weights: Option<&[f64]>) -> Result<ConditionReport> {
    let fit = LineFit::new(h, h_next)?;
    let al = fit.alphas;
    let n = fit.n;
    let prefixes = prefix_summaries(h);

    // C1 through the general design-matrix route.
    let design = DesignMatrix::intercept_line(h).map_err(|_| Error::DegenerateDesign {
        variance: fit.base.v,
    })?;
    let verdict = vrp_partial_sums_for(&design, &[1.0, h_next])?;
    let c1 = ConditionValues::from_parts(
        [verdict.partial_sums[0].clone(), verdict.partial_sums[1].clone()],
        [vec![verdict.scales[0]; n], vec![verdict.scales[1]; n]],
        2,
    );

    let mut c2 = [(); 2].map(|_| (Vec::with_capacity(n), Vec::with_capacity(n)));
    let mut c3 = [(); 2].map(|_| (Vec::with_capacity(n), Vec::with_capacity(n)));
    let mut c4 = [(); 2].map(|_| (Vec::with_capacity(n), Vec::with_capacity(n)));
    let mut c5 = [(); 2].map(|_| (Vec::with_capacity(n), Vec::with_capacity(n)));
    let mut u_sum = [0.0; 2];
    let mut u_scale = [0.0; 2];
    for (ps, &x) in prefixes.iter().zip(h) {
        let mf = ps.m as f64;
        let mu = ps.mean();
        let s = ps.s2 / mf;

        // Step profile D = (1,..,1,0,..,0): δ11 = m, δ1h = S1,m, δhh = S2,m.
        let step = [
            (
                al.alpha1 * mf - 2.0 * al.alpha2 * ps.s1 + al.alpha3 * ps.s2,
                (al.alpha1 * mf).abs() + 2.0 * (al.alpha2 * ps.s1).abs() + (al.alpha3 * ps.s2).abs(),
            ),
            (
                al.alpha3 * mf - 2.0 * al.alpha4 * ps.s1 + al.alpha5 * ps.s2,
                (al.alpha3 * mf).abs() + 2.0 * (al.alpha4 * ps.s1).abs() + (al.alpha5 * ps.s2).abs(),
            ),
        ];
        let u = [
            (
                al.p1(x),
                al.alpha1.abs() + 2.0 * (al.alpha2 * x).abs() + (al.alpha3 * x * x).abs(),
            ),
            (
                al.p2(x),
                al.alpha3.abs() + 2.0 * (al.alpha4 * x).abs() + (al.alpha5 * x * x).abs(),
            ),
        ];
        let means = al.prefix_mean_values(mu, s);
        let poly = [
            (
                al.p1(mu) + al.alpha3 * ps.v,
                al.alpha1.abs()
                    + 2.0 * (al.alpha2 * mu).abs()
                    + (al.alpha3 * mu * mu).abs()
                    + (al.alpha3 * ps.v).abs(),
            ),
            (
                al.p2(mu) + al.alpha5 * ps.v,
                al.alpha3.abs()
                    + 2.0 * (al.alpha4 * mu).abs()
                    + (al.alpha5 * mu * mu).abs()
                    + (al.alpha5 * ps.v).abs(),
            ),
        ];
        for c in 0..2 {
            c2[c].0.push(step[c].0);
            c2[c].1.push(step[c].1);
            u_sum[c] += u[c].0;
            u_scale[c] += u[c].1;
            c3[c].0.push(u_sum[c]);
            c3[c].1.push(u_scale[c]);
            c4[c].0.push(means[c].0);
            c4[c].1.push(means[c].1);
            c5[c].0.push(poly[c].0);
            c5[c].1.push(poly[c].1);
        }
    }
    let split = |f: [(Vec<f64>, Vec<f64>); 2], families| {
        let [(v0, s0), (v1, s1)] = f;
        ConditionValues::from_parts([v0, v1], [s0, s1], families)
    };

    let (roots, root_error) = match roots_of(&fit) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e)),
    };
    let monic = roots.map(|r| {
        let mut vals = [Vec::with_capacity(n), Vec::with_capacity(n)];
        let mut scales = [Vec::with_capacity(n), Vec::with_capacity(n)];
        for ps in &prefixes {
            let mu = ps.mean();
            vals[0].push(r.p1_monic(mu) + ps.v);
            scales[0].push((mu.abs() + r.r11.abs()) * (mu.abs() + r.r12.abs()) + ps.v);
            vals[1].push(r.p2_monic(mu) + ps.v);
            scales[1].push((mu.abs() + r.r21.abs()) * (mu.abs() + r.r22.abs()) + ps.v);
        }
        (vals, scales)
    });
    let c6 = monic
        .clone()
        .map(|(v, s)| ConditionValues::from_parts(v, s, 2));
    let c7 = monic.map(|(v, s)| ConditionValues::from_parts(v, s, 1));

    let mut tier = EquivalenceTier::Tier1;
    if roots.is_some() && al.alpha3 > 0.0 && al.alpha5 > 0.0 {
        tier = EquivalenceTier::Tier2;
        let mut all = h.to_vec();
        all.push(h_next);
        if n > 1 && is_nonneg_increasing(&all) {
            tier = EquivalenceTier::Tier3;
        }
    }

    let supplied = match weights {
        Some(w) => {
            let diag = w11_diag_line(h, h_next, w)?;
            let (d11, d1h, dhh) = deltas(h, w);
            let den = fit.denominator();
            let sc0 = (al.alpha1 * d11).abs() + 2.0 * (al.alpha2 * d1h).abs() + (al.alpha3 * dhh).abs();
            let sc1 = (al.alpha3 * d11).abs() + 2.0 * (al.alpha4 * d1h).abs() + (al.alpha5 * dhh).abs();
            let ok = diag.0 >= -NONNEG_RTOL * sc0 / den && diag.1 >= -NONNEG_RTOL * sc1 / den;
            Some((diag, ok))
        }
        None => None,
    };

    Ok(ConditionReport {
        n,
        tier,
        alphas: al,
        roots,
        root_error,
        c1,
        c2: split(c2, 2),
        c3: split(c3, 2),
        c4: split(c4, 2),
        c5: split(c5, 2),
        c6,
        c7,
        supplied,
    })
}

/// Left sides of the two prefix-mean (C4) inequalities at every m, as
/// functions of the candidate `h_next`, each paired with its term
/// magnitude. Returns `(values, scales)` indexed `[coordinate][m-1]`.
pub fn prefix_mean_values(h: &[f64], h_next: f64) -> Result<([Vec<f64>; 2], [Vec<f64>; 2])> {
    let fit = LineFit::new(h, h_next)?;
    Ok(prefix_mean_values_with(&fit.alphas, &prefix_summaries(h)))
}

pub(crate) fn prefix_mean_values_with(
    al: &AlphaSet,
    prefixes: &[LineSummary],
) -> ([Vec<f64>; 2], [Vec<f64>; 2]) {
    let mut vals = [Vec::with_capacity(prefixes.len()), Vec::with_capacity(prefixes.len())];
    let mut scales = [Vec::with_capacity(prefixes.len()), Vec::with_capacity(prefixes.len())];
    for ps in prefixes {
        let r = al.prefix_mean_values(ps.mean(), ps.s2 / ps.m as f64);
        for c in 0..2 {
            vals[c].push(r[c].0);
            scales[c].push(r[c].1);
        }
    }
    (vals, scales)
}

/// Validated alphas for planning: the base design is fixed and only
/// `h_next` varies.
#[derive(Debug, Clone)]
pub struct LinePlanner {
    h: Vec<f64>,
    base: LineSummary,
    prefixes: Vec<LineSummary>,
}

impl LinePlanner {
    pub fn new(h: &[f64]) -> Result<Self> {
        // Validation only; the next point is irrelevant here.
        let fit = LineFit::new(h, 0.0)?;
        Ok(LinePlanner {
            h: h.to_vec(),
            base: fit.base,
            prefixes: prefix_summaries(h),
        })
    }

    pub fn points(&self) -> &[f64] {
        &self.h
    }

    pub fn summary(&self) -> &LineSummary {
        &self.base
    }

    pub fn alphas_at(&self, h_next: f64) -> AlphaSet {
        let n = self.h.len() as f64;
        let d = ((self.base.s1 - n * h_next).powi(2) / (n * n * self.base.v) + 1.0) / n;
        AlphaSet::new(self.h.len(), &self.base, h_next, 1.0 + d)
    }

    /// C4 left sides and term magnitudes at `h_next`.
    pub fn c4_at(&self, h_next: f64) -> ([Vec<f64>; 2], [Vec<f64>; 2]) {
        prefix_mean_values_with(&self.alphas_at(h_next), &self.prefixes)
    }

    /// One C4 left side (coordinate 0 or 1, prefix length m) and its term
    /// magnitude at `h_next`.
    pub fn c4_single(&self, h_next: f64, coord: usize, m: usize) -> (f64, f64) {
        let ps = &self.prefixes[m - 1];
        self.alphas_at(h_next)
            .prefix_mean_values(ps.mean(), ps.s2 / ps.m as f64)[coord]
    }
}

/// The alternating design `b, c, b, c, …` of length n+1 (odd positions get
/// `b`, counting from 1).
pub fn two_point_design(b: f64, c: f64, n: usize) -> Vec<f64> {
    (1..=n + 1).map(|i| if i % 2 == 1 { b } else { c }).collect()
}

/// Closed forms of `p1(S1,m/m) + α3 V_m` and `p2(S1,m/m) + α5 V_m` for the
/// alternating two-point design with n base points.
pub fn two_point_values(b: f64, c: f64, n: usize, m: usize) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "two-point closed forms need n ≥ 2, got {n}"
        )));
    }
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!("m = {m} outside 1..={n}")));
    }
    let nf = n as f64;
    let mf = m as f64;
    let gap2 = (b - c).powi(2);
    let m_odd = m % 2 == 1;
    if n % 2 == 0 {
        let f = if m_odd { (mf + 1.0) / mf } else { 1.0 };
        let base = 0.5 * f * (nf + 1.0) * gap2;
        Ok((base * c * c, base))
    } else {
        let f = if m_odd { (mf - 1.0) / mf } else { 1.0 };
        let base = 0.5 * f * nf * ((nf + 1.0) / (nf - 1.0)).powi(2) * gap2;
        Ok((base * b * b, base))
    }
}

/// An identity evaluated on both sides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// Magnitude of the quantities entering the identity.
    pub scale: f64,
}

impl IdentityCheck {
    fn new(lhs: f64, rhs: f64, scale: f64) -> Self {
        IdentityCheck { lhs, rhs, scale }
    }

    pub fn defect(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }

    /// Defect relative to `max(scale, |lhs|, |rhs|)`.
    pub fn relative_defect(&self) -> f64 {
        let s = self.scale.max(self.lhs.abs()).max(self.rhs.abs());
        if s == 0.0 {
            0.0
        } else {
            self.defect() / s
        }
    }
}

/// Algebraic identities that hold for any nondegenerate design.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityReport {
    /// `Δ1 = q²(S2 - S1 h)² h²`.
    pub delta1: IdentityCheck,
    /// `Δ2 = q²(S1 - n h)²`.
    pub delta2: IdentityCheck,
    /// `q = ((n+1)²/n²) V_{n+1}/V_n`.
    pub q_and_v: IdentityCheck,
    /// Ratio-form `r11` against `(S2 - S1 h)/(S1 - n h)`.
    pub r11_direct: IdentityCheck,
    pub r11_equals_r21: IdentityCheck,
    /// `p1(r11), p1(r12), p2(r21), p2(r22)` against zero.
    pub root_residuals: [IdentityCheck; 4],
    /// `p̄1(S1,n/n) + V_n` against its closed form.
    pub monic_at_mean: IdentityCheck,
    /// `r12 - r11` against its closed form.
    pub r12_minus_r11: IdentityCheck,
    /// `r12 - r22` against the printed closed form. Reported only; the two
    /// sides are not equal in general.
    pub r12_minus_r22: IdentityCheck,
}

pub fn identity_checks(h: &[f64], h_next: f64) -> Result<IdentityReport> {
    let fit = LineFit::new(h, h_next)?;
    let roots = roots_of(&fit)?;
    let al = &fit.alphas;
    let n = fit.n as f64;
    let (s1, s2, v) = (fit.base.s1, fit.base.s2, fit.base.v);
    let x = h_next;
    let q = al.q;

    let delta1_rhs = q * q * (s2 - s1 * x).powi(2) * x * x;
    let delta2_rhs = q * q * (s1 - n * x).powi(2);
    let q_ratio = ((n + 1.0) / n).powi(2) * fit.next.v / v;

    let p_scale = |a: f64, b: f64, c: f64, r: f64| a.abs() + 2.0 * (b * r).abs() + (c * r * r).abs();
    let res = |value: f64, scale: f64| IdentityCheck::new(value, 0.0, scale);

    let mu = s1 / n;
    let u = x - mu;
    let monic = roots.p1_monic(mu) + v;
    let monic_rhs = n * v * (s2 - s1 * x) / (s1 - x * n) * (u * u + (2.0 * n + 1.0) * v)
        / (s1 * u * u + (n * x + s1 * (2.0 * n + 1.0)) * v);
    let r12_r11 = roots.r12 - roots.r11;
    let r12_r11_rhs = 2.0 * n * v * x / (n * v / s1 + (x - s2 / s1))
        * ((n + 1.0) * n * n * v + n * n * u * u)
        / (n * n * v * (s1 + 2.0 * n * s1 + n * x) + n * n * s1 * u * u);
    let r12_r22 = roots.r12 - roots.r22;
    let r12_r22_rhs = 2.0 * v * (n * u * u + (n * n + 1.0) * v)
        / (s1 * (u * u + x * v / (n * s1) + (2.0 * n + 1.0) * v))
        * (u * u + (2.0 * n + 1.0) * v)
        / (u * u + 2.0 * (n + 1.0) * v);

    Ok(IdentityReport {
        delta1: IdentityCheck::new(
            roots.delta1,
            delta1_rhs,
            (al.alpha2 * al.alpha2).abs().max((al.alpha1 * al.alpha3).abs()),
        ),
        delta2: IdentityCheck::new(
            roots.delta2,
            delta2_rhs,
            (al.alpha4 * al.alpha4).abs().max((al.alpha3 * al.alpha5).abs()),
        ),
        q_and_v: IdentityCheck::new(q, q_ratio, q),
        r11_direct: IdentityCheck::new(
            roots.r11,
            (s2 - s1 * x) / (s1 - n * x),
            roots.r11.abs(),
        ),
        r11_equals_r21: IdentityCheck::new(roots.r11, roots.r21, roots.r11.abs()),
        root_residuals: [
            res(al.p1(roots.r11), p_scale(al.alpha1, al.alpha2, al.alpha3, roots.r11)),
            res(al.p1(roots.r12), p_scale(al.alpha1, al.alpha2, al.alpha3, roots.r12)),
            res(al.p2(roots.r21), p_scale(al.alpha3, al.alpha4, al.alpha5, roots.r21)),
            res(al.p2(roots.r22), p_scale(al.alpha3, al.alpha4, al.alpha5, roots.r22)),
        ],
        monic_at_mean: IdentityCheck::new(
            monic,
            monic_rhs,
            (mu.abs() + roots.r11.abs()) * (mu.abs() + roots.r12.abs()) + v,
        ),
        r12_minus_r11: IdentityCheck::new(r12_r11, r12_r11_rhs, roots.r12.abs().max(roots.r11.abs())),
        r12_minus_r22: IdentityCheck::new(r12_r22, r12_r22_rhs, roots.r12.abs().max(roots.r22.abs())),
    })
}

/// Identities tied to a prefix length m < n, plus the chain of prefix roots.
#[derive(Debug, Clone, PartialEq)]
pub struct LemmaDiagnostics {
    pub m: usize,
    /// Decrease of `(μ_m - r11) + V_m/(μ_m - r11)` from m to m+1.
    pub going_down: Option<IdentityCheck>,
    /// Increment of the prefix root from m to m+1.
    pub prefix_root_increment: Option<IdentityCheck>,
    /// `r11(j) = (S2,j - S1,j h_{j+1})/(S1,j - j h_{j+1})` for j = 1..=n;
    /// the last entry equals `r11`.
    pub r11_chain: Vec<f64>,
    /// Whether `r11_chain` is non-decreasing.
    pub chain_monotone: bool,
    pub identities: IdentityReport,
}

/// `r11(m) = g(h_{m+1})` for a prefix of length m of `all` (which includes
/// the next point).
fn prefix_root(all: &[f64], m: usize) -> Result<f64> {
    let ps = summarize(&all[..m]);
    let next = all[m];
    let den = ps.s1 - m as f64 * next;
    if den.abs() <= ROOT_DENOM_RTOL * (ps.s1.abs() + (m as f64 * next).abs()) {
        return Err(Error::DegenerateRoot(RootDenominator::Prefix { m }));
    }
    Ok((ps.s2 - ps.s1 * next) / den)
}

pub fn lemma_diagnostics(h: &[f64], h_next: f64, m: usize) -> Result<LemmaDiagnostics> {
    let n = h.len();
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!("m = {m} outside 1..={n}")));
    }
    let identities = identity_checks(h, h_next)?;
    let fit = LineFit::new(h, h_next)?;
    let r11 = roots_of(&fit)?.r11;
    let mut all = h.to_vec();
    all.push(h_next);

    let r11_chain = (1..=n).map(|j| prefix_root(&all, j)).collect::<Result<Vec<_>>>()?;
    let chain_monotone = r11_chain.windows(2).all(|w| w[0] <= w[1]);

    let (going_down, prefix_root_increment) = if m < n {
        let p = summarize(&all[..m]);
        let pp = summarize(&all[..m + 1]);
        let (mf, mpf) = (m as f64, (m + 1) as f64);
        let e = p.mean() - r11;
        let ep = pp.mean() - r11;
        if e == 0.0 || ep == 0.0 {
            return Err(Error::DegenerateRoot(RootDenominator::Prefix { m }));
        }
        let t0 = e + p.v / e;
        let t1 = ep + pp.v / ep;
        let hm1 = all[m];
        let g_den = p.s1 - mf * r11;
        if g_den == 0.0 {
            return Err(Error::DegenerateRoot(RootDenominator::Prefix { m }));
        }
        let rhs = -(hm1 - r11) / (mpf * ep) * (hm1 - (p.s2 - r11 * p.s1) / g_den);
        let going = IdentityCheck::new(t0 - t1, rhs, t0.abs().max(t1.abs()));

        let hm2 = all[m + 1];
        let lhs = prefix_root(&all, m + 1)? - prefix_root(&all, m)?;
        let rhs = (hm2 - hm1) * (mf * (p.mean() - hm1).powi(2) + mf * mpf * p.v)
            / ((p.s1 - hm1 * mf) * (pp.s1 - mpf * hm2));
        let scale = r11_chain[m - 1].abs().max(r11_chain[m].abs());
        (Some(going), Some(IdentityCheck::new(lhs, rhs, scale)))
    } else {
        (None, None)
    };

    Ok(LemmaDiagnostics {
        m,
        going_down,
        prefix_root_increment,
        r11_chain,
        chain_monotone,
        identities,
    })
}

/// Orderings among means, ratios and roots that hold for non-negative
/// strictly increasing designs with n ≥ 2. Each chain is listed in its
/// claimed increasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScopeOrderings {
    pub alphas_positive: bool,
    /// `h1 < S1/n < S2/S1 < h_n`.
    pub base_chain: Vec<f64>,
    /// `h1 < r11 < S1/n < r22 < S1'/(n+1) < h_{n+1}`.
    pub root_chain: Vec<f64>,
    /// `S2/S1 < r12 < S2'/S1' < h_{n+1}`.
    pub upper_chain: Vec<f64>,
}

impl ScopeOrderings {
    /// Smallest gap between consecutive chain entries, relative to the
    /// largest entry magnitude; positive iff every chain is strictly
    /// increasing.
    pub fn min_relative_gap(&self) -> f64 {
        [&self.base_chain, &self.root_chain, &self.upper_chain]
            .iter()
            .flat_map(|chain| {
                let scale = chain.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
                chain.windows(2).map(move |w| (w[1] - w[0]) / scale)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn scope_orderings(h: &[f64], h_next: f64) -> Result<ScopeOrderings> {
    let fit = LineFit::new(h, h_next)?;
    let roots = roots_of(&fit)?;
    let al = &fit.alphas;
    let n = fit.n as f64;
    let (s1, s2) = (fit.base.s1, fit.base.s2);
    let (s1p, s2p) = (fit.next.s1, fit.next.s2);
    Ok(ScopeOrderings {
        alphas_positive: [al.alpha1, al.alpha2, al.alpha3, al.alpha4, al.alpha5]
            .iter()
            .all(|&a| a > 0.0),
        base_chain: vec![h[0], s1 / n, s2 / s1, h[h.len() - 1]],
        root_chain: vec![h[0], roots.r11, s1 / n, roots.r22, s1p / (n + 1.0), h_next],
        upper_chain: vec![s2 / s1, roots.r12, s2p / s1p, h_next],
    })
}

/// Prefix sums `Σ_{i≤m} u_i`.
pub fn prefix_sums(u: &[f64]) -> Vec<f64> {
    u.iter()
        .scan(0.0, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

/// `Σ D_i U_i` rewritten through differences of consecutive weights:
/// `Σ_{j<n} (D_j - D_{j+1}) Σ_{s≤j} U_s + D_n Σ_s U_s`.
pub fn weighted_sum_by_parts(weights: &[f64], u: &[f64]) -> f64 {
    assert_eq!(weights.len(), u.len());
    let sums = prefix_sums(u);
    let n = u.len();
    let mut total = 0.0;
    for j in 0..n {
        let next = if j + 1 < n { weights[j + 1] } else { 0.0 };
        total += (weights[j] - next) * sums[j];
    }
    total
}

/// When some prefix sum of `u` is negative, the 0/1 step weights that make
/// `Σ D_i U_i` negative, with the prefix length used.
pub fn step_witness(u: &[f64]) -> Option<(usize, Vec<f64>)> {
    let sums = prefix_sums(u);
    let (j, _) = sums
        .iter()
        .enumerate()
        .filter(|(_, &s)| s < 0.0)
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let m = j + 1;
    Some((m, (0..u.len()).map(|i| if i < m { 1.0 } else { 0.0 }).collect()))
}
