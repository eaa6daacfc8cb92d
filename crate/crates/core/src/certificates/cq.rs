use serde::Serialize;

use super::{constraint_subdiff, objective_subdiffs, outer_generators, support_max};
use crate::convexsets::{strict_direction_lp, StrictDirection};
use crate::error::{Error, Result};
use crate::problem::{IndexPoint, Problem};
use crate::tolerances::Tolerances;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CqReport {
    /// `"U"` or `"A_i"` with the objective number.
    pub condition: String,
    pub holds: bool,
    pub direction: Option<Vec<f64>>,
    pub margin: f64,
    /// Largest support value at the direction over all required sets
    /// (negative when the witness is valid).
    pub max_support: Option<f64>,
    pub active: Vec<IndexPoint>,
    /// True when a nonsmooth objective entered through its hull estimate,
    /// so a failure is only a failure of that estimate.
    pub hull_estimate: bool,
    pub diagnostic: Option<String>,
}

fn active_sets(p: &Problem, x: &[f64], tol: &Tolerances) -> Result<(Vec<IndexPoint>, Vec<Vec<Vec<f64>>>)> {
    if !p.omega().contains(x, tol.feasibility) {
        return Err(Error::Infeasible(format!("point {x:?} is outside omega")));
    }
    if p.index_points().is_empty() {
        return Ok((vec![], vec![]));
    }
    let (g, _) = p.g_max(x)?;
    let active = p.active_indices(x, tol.activity_band(g))?;
    let sets = active
        .iter()
        .map(|ip| Ok(outer_generators(&constraint_subdiff(p, ip, x, tol)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok((active, sets))
}

fn report(
    condition: String,
    sets: &[Vec<Vec<f64>>],
    active: Vec<IndexPoint>,
    hull_estimate: bool,
    p: &Problem,
    x: &[f64],
    tol: &Tolerances,
) -> Result<CqReport> {
    let cone = p.tangent_cone(x, tol.feasibility);
    Ok(match strict_direction_lp(sets, &cone, tol.sigma_min)? {
        StrictDirection::Found { d, margin } => CqReport {
            condition,
            holds: true,
            max_support: (!sets.is_empty()).then(|| support_max(sets, &d)),
            direction: Some(d),
            margin,
            active,
            hull_estimate,
            diagnostic: None,
        },
        StrictDirection::Infeasible { best_margin, diagnostic } => CqReport {
            condition,
            holds: false,
            direction: None,
            margin: best_margin,
            max_support: None,
            active,
            hull_estimate,
            diagnostic: Some(diagnostic),
        },
    })
}

/// Slater-type qualification: some tangent direction makes every active
/// constraint's Clarke directional derivative negative.
pub fn check_cq_u(p: &Problem, x: &[f64], tol: &Tolerances) -> Result<CqReport> {
    let (active, sets) = active_sets(p, x, tol)?;
    report("U".into(), &sets, active, false, p, x, tol)
}

/// Like [`check_cq_u`], additionally requiring descent for every objective
/// except number `i` (1-based).
pub fn check_cq_ai(p: &Problem, x: &[f64], i: usize, tol: &Tolerances) -> Result<CqReport> {
    if i == 0 || i > p.m() {
        return Err(Error::invalid(format!("objective number {i} is out of range 1..={}", p.m())));
    }
    let (active, mut sets) = active_sets(p, x, tol)?;
    let objectives = objective_subdiffs(p, x, tol)?;
    let mut hull = false;
    for (k, set) in objectives.iter().enumerate() {
        if k + 1 != i {
            hull |= !p.objectives()[k].is_smooth();
            sets.push(outer_generators(set));
        }
    }
    report(format!("A_{i}"), &sets, active, hull, p, x, tol)
}
