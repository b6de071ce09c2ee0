//! Admissible next design points.
//!
//! For a straight-line design the variance-reduction criterion, seen as a
//! function of the next point, is a set of 2n quartics (one per prefix
//! length and coordinate). The region where all of them are non-negative is
//! found by scanning a grid, refining sign changes by bisection and testing
//! each resulting piece.

use rayon::prelude::*;

use crate::decomposition::{vrp_partial_sums_for, VrpVerdict, NONNEG_RTOL};
use crate::error::{Error, Result};
use crate::model::DesignMatrix;
use crate::straightline::LinePlanner;

pub const DEFAULT_GRID: usize = 512;
pub const MIN_GRID: usize = 16;
/// Absolute width bisection stops at.
pub const BISECTION_TOL: f64 = 1e-10;
/// Pieces shorter than this are treated as tangencies.
pub const MIN_INTERVAL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibleRegion {
    /// Ordered, disjoint closed intervals.
    pub intervals: Vec<(f64, f64)>,
    pub search_domain: (f64, f64),
    /// Points where some quartic changes sign, ascending.
    pub boundary_points: Vec<f64>,
    pub polynomials_checked: usize,
}

impl AdmissibleRegion {
    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|&(a, b)| a <= x && x <= b)
    }

    /// Distance from `x` to the nearest boundary point or interval endpoint.
    pub fn distance_to_boundary(&self, x: f64) -> f64 {
        self.boundary_points
            .iter()
            .copied()
            .chain(self.intervals.iter().flat_map(|&(a, b)| [a, b]))
            .filter(|&p| p != self.search_domain.0 && p != self.search_domain.1)
            .map(|p| (p - x).abs())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Shifted value `v + tol·scale` of one quartic: non-negative iff the
/// criterion holds at the tolerance used elsewhere.
fn shifted(planner: &LinePlanner, x: f64, coord: usize, m: usize) -> f64 {
    let (v, s) = planner.c4_single(x, coord, m);
    v + NONNEG_RTOL * s
}

/// Whether every quartic is non-negative (within tolerance) at `x`.
fn all_nonneg(planner: &LinePlanner, x: f64) -> bool {
    let (vals, scales) = planner.c4_at(x);
    (0..2).all(|c| {
        vals[c]
            .iter()
            .zip(&scales[c])
            .all(|(v, s)| *v >= -NONNEG_RTOL * s)
    })
}

/// Direct C4 membership test for a single candidate next point.
pub fn is_admissible_line(h: &[f64], h_next: f64) -> Result<bool> {
    Ok(all_nonneg(&LinePlanner::new(h)?, h_next))
}

fn bisect(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    while b - a > BISECTION_TOL {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let fm = f(mid);
        if (fm < 0.0) == (fa < 0.0) {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Minimizer of `g` on `[a, b]` by golden-section search.
fn golden_min(g: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut gc, mut gd) = (g(c), g(d));
    while b - a > BISECTION_TOL {
        if gc < gd {
            b = d;
            d = c;
            gd = gc;
            c = b - INV_PHI * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + INV_PHI * (b - a);
            gd = g(d);
        }
    }
    0.5 * (a + b)
}

/// Sign changes of one shifted quartic over the grid, including pairs of
/// roots that fall between neighbouring grid nodes.
fn roots_of_quartic(planner: &LinePlanner, grid: &[f64], coord: usize, m: usize) -> Vec<f64> {
    let f = |x: f64| shifted(planner, x, coord, m);
    let vals: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    let mut roots = Vec::new();
    for j in 0..grid.len() - 1 {
        if (vals[j] < 0.0) != (vals[j + 1] < 0.0) {
            roots.push(bisect(&f, grid[j], grid[j + 1]));
        }
    }
    // A local extremum of the same sign as its neighbours can hide two roots.
    for j in 1..grid.len() - 1 {
        let (l, c, r) = (vals[j - 1], vals[j], vals[j + 1]);
        let positive_dip = c >= 0.0 && l >= 0.0 && r >= 0.0 && c <= l && c <= r;
        let negative_bump = c < 0.0 && l < 0.0 && r < 0.0 && c >= l && c >= r;
        if !(positive_dip || negative_bump) {
            continue;
        }
        let sign = if positive_dip { 1.0 } else { -1.0 };
        let g = |x: f64| sign * f(x);
        let x_ext = golden_min(&g, grid[j - 1], grid[j + 1]);
        let f_ext = f(x_ext);
        if (f_ext < 0.0) != (c < 0.0) {
            roots.push(bisect(&f, grid[j - 1], x_ext));
            roots.push(bisect(&f, x_ext, grid[j + 1]));
        }
    }
    roots
}

/// Admissible next points for the line design `h` within `search`.
pub fn admissible_next_line(h: &[f64], search: (f64, f64), grid: usize) -> Result<AdmissibleRegion> {
    let planner = LinePlanner::new(h)?;
    let (lo, hi) = search;
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::NonFinite {
            what: "search domain",
        });
    }
    if lo > hi {
        return Err(Error::InvalidArgument(format!(
            "search domain [{lo}, {hi}] is empty"
        )));
    }
    if grid < MIN_GRID {
        return Err(Error::InvalidArgument(format!(
            "grid must have at least {MIN_GRID} points, got {grid}"
        )));
    }
    let n = h.len();
    let polynomials_checked = 2 * n;
    if lo == hi {
        let intervals = if all_nonneg(&planner, lo) {
            vec![(lo, hi)]
        } else {
            Vec::new()
        };
        return Ok(AdmissibleRegion {
            intervals,
            search_domain: search,
            boundary_points: Vec::new(),
            polynomials_checked,
        });
    }

    let step = (hi - lo) / (grid - 1) as f64;
    let nodes: Vec<f64> = (0..grid)
        .map(|j| if j + 1 == grid { hi } else { lo + j as f64 * step })
        .collect();

    let mut roots: Vec<f64> = (0..polynomials_checked)
        .into_par_iter()
        .map(|idx| roots_of_quartic(&planner, &nodes, idx % 2, idx / 2 + 1))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .filter(|&x| lo < x && x < hi)
        .collect();
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() <= BISECTION_TOL);

    let mut breaks = Vec::with_capacity(roots.len() + 2);
    breaks.push(lo);
    breaks.extend(&roots);
    breaks.push(hi);

    let pieces: Vec<(f64, f64, bool)> = breaks
        .par_windows(2)
        .map(|w| (w[0], w[1], all_nonneg(&planner, 0.5 * (w[0] + w[1]))))
        .collect();

    let mut boundary_points = roots;
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    for (i, &(a, b, ok)) in pieces.iter().enumerate() {
        let short = b - a < MIN_INTERVAL;
        // Short pieces take the verdict of their neighbourhood.
        let ok = if short {
            let prev = i.checked_sub(1).map(|p| pieces[p].2);
            let next = pieces.get(i + 1).map(|p| p.2);
            match (prev, next) {
                (Some(p), Some(q)) => p && q,
                (Some(p), None) => p,
                (None, Some(q)) => q,
                (None, None) => ok,
            }
        } else {
            ok
        };
        if !ok {
            continue;
        }
        match intervals.last_mut() {
            Some(last) if last.1 == a => last.1 = b,
            _ => intervals.push((a, b)),
        }
    }
    intervals.retain(|&(a, b)| {
        let keep = b - a >= MIN_INTERVAL || (pieces.len() == 1 && a == lo);
        if !keep {
            boundary_points.push(0.5 * (a + b));
        }
        keep
    });
    boundary_points.sort_by(f64::total_cmp);

    Ok(AdmissibleRegion {
        intervals,
        search_domain: search,
        boundary_points,
        polynomials_checked,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateVerdict {
    pub row: Vec<f64>,
    /// The partial-sum verdict, or why it could not be computed.
    pub outcome: std::result::Result<VrpVerdict, Error>,
}

impl CandidateVerdict {
    pub fn admissible(&self) -> Option<bool> {
        self.outcome.as_ref().ok().map(VrpVerdict::holds)
    }

    pub fn worst_margin(&self) -> Option<f64> {
        self.outcome.as_ref().ok().map(|v| v.worst_margin)
    }
}

/// Partial-sum verdict for each candidate row appended to `d`. Failures are
/// reported per candidate.
pub fn admissible_next_general<R: AsRef<[f64]> + Sync>(
    d: &DesignMatrix,
    candidates: &[R],
) -> Vec<CandidateVerdict> {
    candidates
        .par_iter()
        .map(|row| CandidateVerdict {
            row: row.as_ref().to_vec(),
            outcome: vrp_partial_sums_for(d, row.as_ref()),
        })
        .collect()
}
