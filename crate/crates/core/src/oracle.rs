//! Brute-force ground truth on a finite feasible grid: the six approximate
//! Pareto notions, bounded sections, existence searches and the two max
//! scalarizations used by the optimality conditions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::norm;
use crate::par::prelude::*;
use crate::problem::{lattice, linspace, Problem};

/// Box lattice plus explicit extra points (tested first, in order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Points per dimension, box vertices included.
    pub points: usize,
    #[serde(default)]
    pub extra: Vec<Vec<f64>>,
}

impl GridSpec {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, points: usize) -> Self {
        GridSpec {
            lo,
            hi,
            points,
            extra: vec![],
        }
    }

    pub fn with_extra(mut self, extra: Vec<Vec<f64>>) -> Self {
        self.extra = extra;
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.lo.len() != n || self.hi.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: self.lo.len().max(self.hi.len()),
                context: "grid box",
            });
        }
        if self.lo.iter().zip(&self.hi).any(|(a, b)| !(a <= b)) {
            return Err(Error::invalid("grid box needs lo <= hi"));
        }
        if self.points < 2 {
            return Err(Error::invalid("grid needs at least 2 points per dimension"));
        }
        if let Some(e) = self.extra.iter().find(|e| e.len() != n) {
            return Err(Error::Dimension {
                expected: n,
                got: e.len(),
                context: "extra grid point",
            });
        }
        Ok(())
    }

    pub fn spacing(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| (b - a) / (self.points - 1) as f64)
            .collect()
    }

    /// The box scaled about its center by `factor`, keeping the spacing.
    pub fn enlarged(&self, factor: usize) -> Self {
        let lo = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| 0.5 * (a + b) - 0.5 * (b - a) * factor as f64)
            .collect();
        let hi = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| 0.5 * (a + b) + 0.5 * (b - a) * factor as f64)
            .collect();
        GridSpec {
            lo,
            hi,
            points: (self.points - 1) * factor + 1,
            extra: self.extra.clone(),
        }
    }
}

/// Feasible points of a grid with their objective values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibleGrid {
    pub spec: GridSpec,
    pub points: Vec<Vec<f64>>,
    pub values: Vec<Vec<f64>>,
    /// Candidates examined before filtering.
    pub sampled: usize,
}

impl FeasibleGrid {
    pub fn build(p: &Problem, spec: &GridSpec, tol: f64) -> Result<Self> {
        spec.validate(p.n())?;
        let axes: Vec<Vec<f64>> = spec
            .lo
            .iter()
            .zip(&spec.hi)
            .map(|(&a, &b)| linspace(a, b, spec.points))
            .collect();
        let mut candidates = spec.extra.clone();
        candidates.extend(lattice(&axes));
        let sampled = candidates.len();
        let kept: Vec<Option<(Vec<f64>, Vec<f64>)>> = candidates
            .into_par_iter()
            .map(|x| {
                let ok = p.is_feasible(&x, tol).is_ok_and(|f| f.feasible);
                if !ok {
                    return None;
                }
                // points outside an objective's domain are not part of C
                p.objective_values(&x).ok().map(|v| (x, v))
            })
            .collect();
        let (points, values) = kept.into_iter().flatten().unzip();
        Ok(FeasibleGrid {
            spec: spec.clone(),
            points,
            values,
            sampled,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn require_nonempty(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::invalid("the feasible grid is empty"));
        }
        Ok(())
    }
}

/// `a < b − slack` componentwise.
fn strictly_below(a: &[f64], b: &[f64], slack: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| *x < *y - slack)
}

/// `a ≤ b − slack` componentwise with some component strictly below.
fn dominates(a: &[f64], b: &[f64], slack: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| *x <= *y - slack) && a.iter().zip(b).any(|(x, y)| *x < *y - slack)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Notion {
    WeakPareto,
    Pareto,
    XiWeak,
    XiPareto,
    XiQuasiWeak,
    XiQuasi,
}

impl Notion {
    pub const ALL: [Notion; 6] = [
        Notion::WeakPareto,
        Notion::Pareto,
        Notion::XiWeak,
        Notion::XiPareto,
        Notion::XiQuasiWeak,
        Notion::XiQuasi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Notion::WeakPareto => "weak Pareto",
            Notion::Pareto => "Pareto",
            Notion::XiWeak => "xi-weak Pareto",
            Notion::XiPareto => "xi-Pareto",
            Notion::XiQuasiWeak => "xi-quasi-weak Pareto",
            Notion::XiQuasi => "xi-quasi Pareto",
        }
    }

    /// Shift added to `f(x)` before comparing with `f(x̄)`.
    fn shifted(self, fx: &[f64], xi: &[f64], dist: f64) -> Vec<f64> {
        match self {
            Notion::WeakPareto | Notion::Pareto => fx.to_vec(),
            Notion::XiWeak | Notion::XiPareto => fx.iter().zip(xi).map(|(f, e)| f + e).collect(),
            Notion::XiQuasiWeak | Notion::XiQuasi => fx.iter().zip(xi).map(|(f, e)| f + dist * e).collect(),
        }
    }

    fn violates(self, lhs: &[f64], rhs: &[f64], slack: f64) -> bool {
        match self {
            Notion::WeakPareto | Notion::XiWeak | Notion::XiQuasiWeak => strictly_below(lhs, rhs, slack),
            Notion::Pareto | Notion::XiPareto | Notion::XiQuasi => dominates(lhs, rhs, slack),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub x: Vec<f64>,
    /// Shifted objective vector at `x`.
    pub lhs: Vec<f64>,
    /// `lhs − f(x̄)`.
    pub gap: Vec<f64>,
    /// Inequality re-evaluated from scratch at report time.
    pub reverified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NotionVerdict {
    pub notion: Notion,
    pub holds_on_grid: bool,
    /// First violating grid point in grid order.
    pub witness: Option<Witness>,
    /// Violating grid point maximizing `min_i (f_i(x̄) − lhs_i)`.
    pub deepest: Option<Witness>,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub anchor: Vec<f64>,
    pub xi: Vec<f64>,
    pub f_anchor: Vec<f64>,
    pub slack: f64,
    pub grid_points: usize,
    pub verdicts: Vec<NotionVerdict>,
}

impl ClassificationReport {
    pub fn verdict(&self, notion: Notion) -> &NotionVerdict {
        self.verdicts.iter().find(|v| v.notion == notion).expect("all notions present")
    }

    pub fn holds(&self, notion: Notion) -> bool {
        self.verdict(notion).holds_on_grid
    }
}

fn witness(p: &Problem, notion: Notion, x: &[f64], x_bar: &[f64], xi: &[f64], slack: f64) -> Result<Witness> {
    let fx = p.objective_values(x)?;
    let fb = p.objective_values(x_bar)?;
    let dist = distance(x, x_bar);
    let lhs = notion.shifted(&fx, xi, dist);
    let gap = lhs.iter().zip(&fb).map(|(a, b)| a - b).collect();
    let reverified = notion.violates(&lhs, &fb, slack);
    Ok(Witness {
        x: x.to_vec(),
        lhs,
        gap,
        reverified,
    })
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    norm(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>())
}

/// Tests every grid point against the six notions at `x̄`. A violation
/// needs the defining inequality to hold with margin `slack` (0 tests the
/// definitions literally).
pub fn classify_point(
    p: &Problem,
    x_bar: &[f64],
    xi: &[f64],
    grid: &FeasibleGrid,
    slack: f64,
) -> Result<ClassificationReport> {
    grid.require_nonempty()?;
    if xi.len() != p.m() {
        return Err(Error::Dimension {
            expected: p.m(),
            got: xi.len(),
            context: "xi",
        });
    }
    let fb = p.objective_values(x_bar)?;
    let flags: Vec<[bool; 6]> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let dist = distance(&grid.points[k], x_bar);
            let mut out = [false; 6];
            for (j, notion) in Notion::ALL.iter().enumerate() {
                let lhs = notion.shifted(&grid.values[k], xi, dist);
                out[j] = notion.violates(&lhs, &fb, slack);
            }
            out
        })
        .collect();
    let mut verdicts = Vec::with_capacity(6);
    for (j, &notion) in Notion::ALL.iter().enumerate() {
        let mut first = None;
        let mut deepest: Option<(f64, usize)> = None;
        let mut count = 0;
        for (k, f) in flags.iter().enumerate() {
            if !f[j] {
                continue;
            }
            count += 1;
            first.get_or_insert(k);
            let dist = distance(&grid.points[k], x_bar);
            let lhs = notion.shifted(&grid.values[k], xi, dist);
            let depth = lhs.iter().zip(&fb).map(|(a, b)| b - a).fold(f64::INFINITY, f64::min);
            if deepest.is_none_or(|(d, _)| depth > d) {
                deepest = Some((depth, k));
            }
        }
        verdicts.push(NotionVerdict {
            notion,
            holds_on_grid: count == 0,
            witness: first
                .map(|k| witness(p, notion, &grid.points[k], x_bar, xi, slack))
                .transpose()?,
            deepest: deepest
                .map(|(_, k)| witness(p, notion, &grid.points[k], x_bar, xi, slack))
                .transpose()?,
            violations: count,
        });
    }
    Ok(ClassificationReport {
        anchor: x_bar.to_vec(),
        xi: xi.to_vec(),
        f_anchor: fb,
        slack,
        grid_points: grid.len(),
        verdicts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SectionReport {
    Bounded {
        bound: Vec<f64>,
        section_points: usize,
        /// Componentwise infimum of the section at each enlargement.
        history: Vec<Vec<f64>>,
    },
    Unbounded {
        history: Vec<Vec<f64>>,
        factors: Vec<usize>,
    },
    Empty,
}

const ENLARGEMENTS: [usize; 3] = [1, 2, 4];
const MAX_ENLARGED_POINTS: usize = 2_000_000;

fn section_infimum(grid: &FeasibleGrid, y_bar: &[f64]) -> (Vec<f64>, usize) {
    let mut inf = vec![f64::INFINITY; y_bar.len()];
    let mut count = 0;
    for v in &grid.values {
        if v.iter().zip(y_bar).all(|(a, b)| a <= b) {
            count += 1;
            for (m, a) in inf.iter_mut().zip(v) {
                *m = m.min(*a);
            }
        }
    }
    (inf, count)
}

/// Componentwise infimum of `{f(x) : x ∈ grid, f(x) ≤ ȳ}`, with the box
/// enlarged ×2 and ×4 at constant spacing: a bound that keeps moving is
/// reported as evidence of an unbounded section. Enlargements past
/// 2·10⁶ points are skipped.
pub fn bounded_section(p: &Problem, y_bar: &[f64], spec: &GridSpec, tol: f64) -> Result<SectionReport> {
    if y_bar.len() != p.m() {
        return Err(Error::Dimension {
            expected: p.m(),
            got: y_bar.len(),
            context: "section level",
        });
    }
    let mut history = Vec::new();
    let mut factors = Vec::new();
    let mut last_count = 0;
    for factor in ENLARGEMENTS {
        let s = spec.enlarged(factor);
        // keep the spacing fixed; a coarser grid would move the infimum
        if s.points.checked_pow(p.n() as u32).is_none_or(|t| t > MAX_ENLARGED_POINTS) {
            break;
        }
        let grid = FeasibleGrid::build(p, &s, tol)?;
        let (inf, count) = section_infimum(&grid, y_bar);
        history.push(inf);
        factors.push(factor);
        last_count = count;
    }
    if history.len() < 2 {
        return Err(Error::invalid(format!(
            "grid too fine to enlarge: more than {MAX_ENLARGED_POINTS} points at factor 2"
        )));
    }
    if last_count == 0 {
        return Ok(SectionReport::Empty);
    }
    let k = history.len();
    let (a, b) = (&history[k - 2], &history[k - 1]);
    let stable = a
        .iter()
        .zip(b)
        .all(|(x, y)| x.is_finite() && (x - y).abs() <= 1e-9 * (1.0 + x.abs()));
    Ok(if stable {
        SectionReport::Bounded {
            bound: b.clone(),
            section_points: last_count,
            history,
        }
    } else {
        SectionReport::Unbounded { history, factors }
    })
}

/// First grid index `y` with `f(y) + shift(y) ≤ f(x)` (nonzero difference).
fn first_improvement(grid: &FeasibleGrid, fx: &[f64], shift: impl Fn(usize) -> Vec<f64> + Sync) -> Option<usize> {
    let hits: Vec<bool> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let s = shift(k);
            let lhs: Vec<f64> = grid.values[k].iter().zip(&s).map(|(a, b)| a + b).collect();
            dominates(&lhs, fx, 0.0)
        })
        .collect();
    hits.iter().position(|h| *h)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResult {
    pub point: Vec<f64>,
    pub value: Vec<f64>,
    /// Points visited, starting point first.
    pub path: Vec<Vec<f64>>,
    pub iterations: usize,
}

/// A ξ-Pareto point of the grid: starting from the first grid point, move
/// to the first point that ξ-dominates the current one until none does.
/// Each move lowers `Σ f_i` by at least `Σ ξ_i > 0`.
pub fn find_xi_pareto(p: &Problem, xi: &[f64], grid: &FeasibleGrid) -> Result<SearchResult> {
    grid.require_nonempty()?;
    if xi.len() != p.m() || xi.iter().any(|v| *v < 0.0) || xi.iter().all(|v| *v == 0.0) {
        return Err(Error::invalid("xi must be nonnegative and nonzero with one entry per objective"));
    }
    let mut k = 0;
    let mut path = vec![grid.points[0].clone()];
    let mut iterations = 0;
    while let Some(next) = first_improvement(grid, &grid.values[k], |_| xi.to_vec()) {
        k = next;
        iterations += 1;
        path.push(grid.points[k].clone());
    }
    Ok(SearchResult {
        point: grid.points[k].clone(),
        value: grid.values[k].clone(),
        path,
        iterations,
    })
}

/// The descent from the existence proof for ξ-quasi solutions: from `x⁰`,
/// repeatedly move to the first grid point `x` with
/// `f(x) + ‖x − x_k‖ξ ≤ f(x_k)` (nonzero difference). `Σ f_i` strictly
/// decreases, so at most `|grid|` moves happen.
pub fn ekeland_quasi(p: &Problem, xi: &[f64], x0: &[f64], grid: &FeasibleGrid, tol: f64) -> Result<SearchResult> {
    grid.require_nonempty()?;
    if xi.len() != p.m() || xi.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::invalid("xi must have strictly positive entries, one per objective"));
    }
    if !p.is_feasible(x0, tol)?.feasible {
        return Err(Error::Infeasible(format!("start point {x0:?} is infeasible")));
    }
    let mut x = x0.to_vec();
    let mut fx = p.objective_values(x0)?;
    let mut path = vec![x.clone()];
    let mut iterations = 0;
    loop {
        let cur = x.clone();
        let step = first_improvement(grid, &fx, |k| {
            let d = distance(&grid.points[k], &cur);
            xi.iter().map(|e| e * d).collect()
        });
        let Some(k) = step else { break };
        iterations += 1;
        if iterations > grid.len() {
            return Err(Error::invalid("descent exceeded the grid size; objective values are inconsistent"));
        }
        x.clone_from(&grid.points[k]);
        fx.clone_from(&grid.values[k]);
        path.push(x.clone());
    }
    Ok(SearchResult {
        point: x,
        value: fx,
        path,
        iterations,
    })
}

/// Indices of grid points not ξ-dominated by any other grid point.
pub fn xi_front(grid: &FeasibleGrid, xi: &[f64]) -> Vec<usize> {
    let keep: Vec<bool> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            !grid.values.iter().any(|v| {
                let lhs: Vec<f64> = v.iter().zip(xi).map(|(a, b)| a + b).collect();
                dominates(&lhs, &grid.values[k], 0.0)
            })
        })
        .collect();
    keep.iter().enumerate().filter(|(_, k)| **k).map(|(i, _)| i).collect()
}

/// `ψ(x) = max_i {f_i(x) − f_i(x̄) + ξ_i}`.
pub fn scalarize_psi(p: &Problem, x_bar: &[f64], xi: &[f64], x: &[f64]) -> Result<f64> {
    let fb = p.objective_values(x_bar)?;
    let fx = p.objective_values(x)?;
    Ok((0..p.m()).map(|i| fx[i] - fb[i] + xi[i]).fold(f64::NEG_INFINITY, f64::max))
}

/// `Φ(x) = max_i {f_i(x) − f_i(x̄) + ξ_i ‖x − x̄‖}`.
pub fn scalarize_phi(p: &Problem, x_bar: &[f64], xi: &[f64], x: &[f64]) -> Result<f64> {
    let fb = p.objective_values(x_bar)?;
    let fx = p.objective_values(x)?;
    let d = distance(x, x_bar);
    Ok((0..p.m()).map(|i| fx[i] - fb[i] + xi[i] * d).fold(f64::NEG_INFINITY, f64::max))
}
