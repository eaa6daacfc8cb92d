//! The vector problem: objectives, an indexed constraint family over a
//! discretized index set, and the geometric set Ω.

use serde::{Deserialize, Serialize};

use crate::convexsets::TangentCone;
use crate::error::{Error, Result};
use crate::functions::{dot, norm, FuncExpr};
use crate::par::prelude::*;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IndexDomain {
    /// Explicit parameter vectors; an empty vector means a single constraint.
    Finite { points: Vec<Vec<f64>> },
    Interval { lo: f64, hi: f64, points: usize },
    /// Uniform lattice with `points` per dimension, vertices included.
    Box { lo: Vec<f64>, hi: Vec<f64>, points: usize },
}

impl IndexDomain {
    pub fn single() -> Self {
        IndexDomain::Finite { points: vec![vec![]] }
    }

    pub fn dim(&self) -> usize {
        match self {
            IndexDomain::Finite { points } => points.first().map_or(0, Vec::len),
            IndexDomain::Interval { .. } => 1,
            IndexDomain::Box { lo, .. } => lo.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            IndexDomain::Finite { points } => {
                if points.is_empty() {
                    return Err(Error::invalid("finite index set is empty"));
                }
                let k = points[0].len();
                if points.iter().any(|p| p.len() != k) {
                    return Err(Error::invalid("finite index points of mixed dimension"));
                }
            }
            IndexDomain::Interval { lo, hi, points } => {
                if !(lo <= hi) || *points < 2 {
                    return Err(Error::invalid("index interval needs lo <= hi and at least 2 points"));
                }
            }
            IndexDomain::Box { lo, hi, points } => {
                if lo.len() != hi.len() || lo.is_empty() || lo.iter().zip(hi).any(|(a, b)| !(a <= b)) {
                    return Err(Error::invalid("index box needs matching bounds with lo <= hi"));
                }
                if *points < 2 {
                    return Err(Error::invalid("index box needs at least 2 points per dimension"));
                }
            }
        }
        Ok(())
    }

    /// Grid in lexicographic order; interval and box grids contain the
    /// endpoints / vertices.
    pub fn grid(&self) -> Vec<Vec<f64>> {
        match self {
            IndexDomain::Finite { points } => points.clone(),
            IndexDomain::Interval { lo, hi, points } => {
                linspace(*lo, *hi, *points).into_iter().map(|t| vec![t]).collect()
            }
            IndexDomain::Box { lo, hi, points } => {
                let axes: Vec<Vec<f64>> = lo.iter().zip(hi).map(|(&a, &b)| linspace(a, b, *points)).collect();
                lattice(&axes)
            }
        }
    }

    /// Doubles the resolution; the new grid contains the old one.
    pub fn refine(&self) -> Self {
        match self {
            IndexDomain::Finite { .. } => self.clone(),
            IndexDomain::Interval { lo, hi, points } => IndexDomain::Interval {
                lo: *lo,
                hi: *hi,
                points: 2 * points - 1,
            },
            IndexDomain::Box { lo, hi, points } => IndexDomain::Box {
                lo: lo.clone(),
                hi: hi.clone(),
                points: 2 * points - 1,
            },
        }
    }
}

pub(crate) fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![lo];
    }
    let step = (hi - lo) / (points - 1) as f64;
    (0..points)
        .map(|k| if k + 1 == points { hi } else { lo + step * k as f64 })
        .collect()
}

/// Cartesian product of axes, last axis varying fastest.
pub(crate) fn lattice(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::with_capacity(axes.len())];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for prefix in &out {
            for &v in axis {
                let mut p = prefix.clone();
                p.push(v);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OmegaSet {
    Whole,
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// `{x : a x <= b}`, one row of `a` per inequality.
    Polyhedron { a: Vec<Vec<f64>>, b: Vec<f64> },
}

impl OmegaSet {
    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            OmegaSet::Whole => Ok(()),
            OmegaSet::Box { lo, hi } => {
                if lo.len() != n || hi.len() != n {
                    return Err(Error::Dimension {
                        expected: n,
                        got: lo.len().max(hi.len()),
                        context: "omega box bounds",
                    });
                }
                if lo.iter().zip(hi).any(|(l, u)| !(l <= u)) {
                    return Err(Error::invalid("omega box is empty (lo > hi)"));
                }
                Ok(())
            }
            OmegaSet::Polyhedron { a, b } => {
                if a.len() != b.len() || a.iter().any(|row| row.len() != n) {
                    return Err(Error::invalid("omega polyhedron rows must match b and have length n"));
                }
                if a.iter().any(|row| norm(row) == 0.0) {
                    return Err(Error::invalid("omega polyhedron has a zero row"));
                }
                Ok(())
            }
        }
    }

    /// Largest constraint slack violation (≤ 0 inside).
    pub fn violation(&self, x: &[f64]) -> f64 {
        match self {
            OmegaSet::Whole => f64::NEG_INFINITY,
            OmegaSet::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(&xi, (&l, &u))| (l - xi).max(xi - u))
                .fold(f64::NEG_INFINITY, f64::max),
            OmegaSet::Polyhedron { a, b } => a
                .iter()
                .zip(b)
                .map(|(row, &bi)| dot(row, x) - bi)
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.violation(x) <= tol
    }

    /// Unit outward normals of the constraints active at `x` within `tol`.
    /// These generate N(x; Ω) and are the rows of the H-representation of
    /// T(x; Ω).
    pub fn active_normals(&self, x: &[f64], tol: f64) -> Vec<Vec<f64>> {
        let n = x.len();
        match self {
            OmegaSet::Whole => vec![],
            OmegaSet::Box { lo, hi } => {
                let mut out = Vec::new();
                for i in 0..n {
                    let fixed = hi[i] - lo[i] <= tol;
                    if x[i] >= hi[i] - tol || fixed {
                        let mut e = vec![0.0; n];
                        e[i] = 1.0;
                        out.push(e);
                    }
                    if x[i] <= lo[i] + tol || fixed {
                        let mut e = vec![0.0; n];
                        e[i] = -1.0;
                        out.push(e);
                    }
                }
                out
            }
            OmegaSet::Polyhedron { a, b } => a
                .iter()
                .zip(b)
                .filter(|(row, &bi)| dot(row, x) >= bi - tol * (1.0 + bi.abs()))
                .map(|(row, _)| {
                    let r = norm(row);
                    row.iter().map(|v| v / r).collect()
                })
                .collect(),
        }
    }

    pub fn tangent_cone(&self, x: &[f64], tol: f64) -> TangentCone {
        TangentCone::new(x.len(), self.active_normals(x, tol))
    }

    /// Euclidean projection for boxes; other kinds return `None` unless
    /// the point already lies inside.
    pub fn project(&self, x: &[f64]) -> Option<Vec<f64>> {
        match self {
            OmegaSet::Whole => Some(x.to_vec()),
            OmegaSet::Box { lo, hi } => Some(
                x.iter()
                    .zip(lo.iter().zip(hi))
                    .map(|(&v, (&l, &u))| v.clamp(l, u))
                    .collect(),
            ),
            OmegaSet::Polyhedron { .. } => self.contains(x, 0.0).then(|| x.to_vec()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConstraintBlock {
    pub expr: FuncExpr,
    pub domain: IndexDomain,
}

/// A grid point of the index set: block, position in the block grid, value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexPoint {
    pub block: usize,
    pub index: usize,
    pub t: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Problem {
    n: usize,
    objectives: Vec<FuncExpr>,
    constraints: Vec<ConstraintBlock>,
    omega: OmegaSet,
    index_points: Vec<IndexPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Feasibility {
    pub feasible: bool,
    /// `G(x)`; −∞ without constraints.
    pub g_max: f64,
    pub worst: Option<IndexPoint>,
    pub omega_violation: f64,
}

impl Feasibility {
    /// Largest violation over constraints and Ω.
    pub fn violation(&self) -> f64 {
        self.g_max.max(self.omega_violation).max(0.0)
    }
}

impl Problem {
    pub fn new(
        n: usize,
        objectives: Vec<FuncExpr>,
        constraints: Vec<ConstraintBlock>,
        omega: OmegaSet,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("dimension n must be positive"));
        }
        if objectives.is_empty() {
            return Err(Error::invalid("at least one objective is required"));
        }
        for f in &objectives {
            if f.n_vars() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: f.n_vars(),
                    context: "objective variables",
                });
            }
            if f.n_params() > 0 {
                return Err(Error::invalid(format!(
                    "objective `{}` references index parameters",
                    f.source()
                )));
            }
        }
        omega.validate(n)?;
        let mut index_points = Vec::new();
        for (b, c) in constraints.iter().enumerate() {
            c.domain.validate()?;
            if c.expr.n_vars() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: c.expr.n_vars(),
                    context: "constraint variables",
                });
            }
            if c.expr.n_params() > c.domain.dim() {
                return Err(Error::invalid(format!(
                    "constraint `{}` uses {} parameters but its index set has dimension {}",
                    c.expr.source(),
                    c.expr.n_params(),
                    c.domain.dim()
                )));
            }
            for (index, t) in c.domain.grid().into_iter().enumerate() {
                index_points.push(IndexPoint { block: b, index, t });
            }
        }
        Ok(Problem {
            n,
            objectives,
            constraints,
            omega,
            index_points,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.objectives.len()
    }

    pub fn objectives(&self) -> &[FuncExpr] {
        &self.objectives
    }

    pub fn constraints(&self) -> &[ConstraintBlock] {
        &self.constraints
    }

    pub fn omega(&self) -> &OmegaSet {
        &self.omega
    }

    /// Flattened index grid over all constraint blocks.
    pub fn index_points(&self) -> &[IndexPoint] {
        &self.index_points
    }

    pub fn constraint_fn(&self, ip: &IndexPoint) -> &FuncExpr {
        &self.constraints[ip.block].expr
    }

    /// Same problem with every index grid refined once.
    pub fn refined(&self) -> Result<Self> {
        let constraints = self
            .constraints
            .iter()
            .map(|c| ConstraintBlock {
                expr: c.expr.clone(),
                domain: c.domain.refine(),
            })
            .collect();
        Problem::new(self.n, self.objectives.clone(), constraints, self.omega.clone())
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                got: x.len(),
                context: "point",
            });
        }
        Ok(())
    }

    pub fn objective_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        self.objectives.iter().map(|f| f.eval(x, &[])).collect()
    }

    pub fn g(&self, ip: &IndexPoint, x: &[f64]) -> Result<f64> {
        self.constraint_fn(ip).eval(x, &ip.t)
    }

    /// `g_t(x)` for every index grid point, in grid order.
    pub fn constraint_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        self.index_points.par_iter().map(|ip| self.g(ip, x)).collect()
    }

    /// Grid maximum `G(x)` and its first maximizer.
    pub fn g_max(&self, x: &[f64]) -> Result<(f64, Option<IndexPoint>)> {
        let values = self.constraint_values(x)?;
        let mut best: Option<(f64, usize)> = None;
        for (k, &v) in values.iter().enumerate() {
            if best.is_none_or(|(m, _)| v > m) {
                best = Some((v, k));
            }
        }
        Ok(match best {
            Some((v, k)) => (v, Some(self.index_points[k].clone())),
            None => (f64::NEG_INFINITY, None),
        })
    }

    pub fn is_feasible(&self, x: &[f64], tol: f64) -> Result<Feasibility> {
        let (g_max, worst) = self.g_max(x)?;
        let omega_violation = self.omega.violation(x);
        Ok(Feasibility {
            feasible: g_max <= tol && omega_violation <= tol,
            g_max,
            worst,
            omega_violation,
        })
    }

    /// Grid points with `g_t(x) ≥ G(x) − tol`.
    pub fn active_indices(&self, x: &[f64], tol: f64) -> Result<Vec<IndexPoint>> {
        let values = self.constraint_values(x)?;
        let g = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(values
            .iter()
            .zip(&self.index_points)
            .filter(|(&v, _)| v >= g - tol)
            .map(|(_, ip)| ip.clone())
            .collect())
    }

    /// Active indices that can carry a multiplier: in the activity band of
    /// `G(x)` and binding (`g_t(x) ≥ −tol_comp`).
    pub fn binding_indices(&self, x: &[f64], activity: f64, tol_comp: f64) -> Result<Vec<IndexPoint>> {
        let values = self.constraint_values(x)?;
        let g = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let band = activity * (g.abs() + 1.0);
        Ok(values
            .iter()
            .zip(&self.index_points)
            .filter(|(&v, _)| v >= g - band && v >= -tol_comp)
            .map(|(_, ip)| ip.clone())
            .collect())
    }

    pub fn tangent_cone(&self, x: &[f64], tol: f64) -> TangentCone {
        self.omega.tangent_cone(x, tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuEntry {
    pub block: usize,
    pub index: usize,
    pub t: Vec<f64>,
    pub weight: f64,
}

/// Finitely supported nonnegative constraint multipliers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MultiplierMu {
    pub entries: Vec<MuEntry>,
}

impl MultiplierMu {
    pub fn zero() -> Self {
        MultiplierMu::default()
    }

    /// Builds from `(index point, weight)` pairs, dropping zero weights.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (IndexPoint, f64)>) -> Result<Self> {
        let mut entries: Vec<MuEntry> = Vec::new();
        for (ip, w) in pairs {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::invalid(format!("multiplier weight {w} is not a nonnegative number")));
            }
            if w == 0.0 {
                continue;
            }
            if let Some(e) = entries.iter_mut().find(|e| e.block == ip.block && e.index == ip.index) {
                e.weight += w;
            } else {
                entries.push(MuEntry {
                    block: ip.block,
                    index: ip.index,
                    t: ip.t,
                    weight: w,
                });
            }
        }
        entries.sort_by_key(|e| (e.block, e.index));
        Ok(MultiplierMu { entries })
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.weight).sum::<f64>() + 0.0
    }

    pub fn index_point(e: &MuEntry) -> IndexPoint {
        IndexPoint {
            block: e.block,
            index: e.index,
            t: e.t.clone(),
        }
    }

    /// Checks that every key is an index grid point of `p`.
    pub fn check_support(&self, p: &Problem) -> Result<()> {
        for e in &self.entries {
            let ok = p
                .index_points()
                .iter()
                .any(|ip| ip.block == e.block && ip.index == e.index && ip.t == e.t);
            if !ok {
                return Err(Error::invalid(format!(
                    "multiplier key (block {}, t = {:?}) is not an index grid point",
                    e.block, e.t
                )));
            }
        }
        Ok(())
    }

    /// Largest `|μ_t g_t(x)|`.
    pub fn complementarity_gap(&self, p: &Problem, x: &[f64]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for e in &self.entries {
            let g = p.g(&Self::index_point(e), x)?;
            worst = worst.max((e.weight * g).abs());
        }
        Ok(worst)
    }
}
