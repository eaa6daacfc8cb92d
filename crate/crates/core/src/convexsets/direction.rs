//! Strict descent directions: maximize σ subject to `⟨u, d⟩ ≤ −σ` for every
//! generator `u`, `d ∈ T`, `‖d‖_∞ ≤ 1`.

use serde::Serialize;

use super::lp::{maximize, LpOutcome};
use super::TangentCone;
use crate::error::{Error, Result};
use crate::functions::dot;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum StrictDirection {
    Found { d: Vec<f64>, margin: f64 },
    Infeasible { best_margin: f64, diagnostic: String },
}

impl StrictDirection {
    pub fn is_found(&self) -> bool {
        matches!(self, StrictDirection::Found { .. })
    }
}

/// Smallest `−⟨u, d⟩` over all generators: the margin `d` actually achieves.
pub fn achieved_margin(sets: &[Vec<Vec<f64>>], d: &[f64]) -> f64 {
    sets.iter()
        .flatten()
        .map(|u| -dot(u, d))
        .fold(f64::INFINITY, f64::min)
}

/// Among maximal-margin directions the one of least ℓ₁ norm is returned,
/// which keeps witnesses canonical (e.g. `(−1, 0)` rather than `(−1, −1)`
/// when the second coordinate is unconstrained).
pub fn strict_direction_lp(sets: &[Vec<Vec<f64>>], cone: &TangentCone, sigma_min: f64) -> Result<StrictDirection> {
    let n = cone.dim();
    if sets.iter().any(|s| s.is_empty()) {
        return Err(Error::invalid("strict direction: empty generator set"));
    }
    if let Some(u) = sets.iter().flatten().find(|u| u.len() != n) {
        return Err(Error::Dimension {
            expected: n,
            got: u.len(),
            context: "strict direction generator",
        });
    }
    let gens: Vec<&Vec<f64>> = sets.iter().flatten().collect();
    if gens.is_empty() {
        // nothing to decrease: every tangent direction qualifies
        return Ok(StrictDirection::Found {
            d: vec![0.0; n],
            margin: f64::MAX,
        });
    }

    // variables: p (n), q (n), σ;  d = p − q
    let nv = 2 * n + 1;
    let row = |a: &[f64], sigma: f64| {
        let mut r = vec![0.0; nv];
        for j in 0..n {
            r[j] = a[j];
            r[n + j] = -a[j];
        }
        r[2 * n] = sigma;
        r
    };
    let mut a_rows = Vec::new();
    let mut b = Vec::new();
    for u in &gens {
        a_rows.push(row(u, 1.0));
        b.push(0.0);
    }
    for a in cone.rows() {
        a_rows.push(row(a, 0.0));
        b.push(0.0);
    }
    for j in 0..2 * n {
        let mut r = vec![0.0; nv];
        r[j] = 1.0;
        a_rows.push(r);
        b.push(1.0);
    }

    let mut c = vec![0.0; nv];
    c[2 * n] = 1.0;
    let sigma_star = match maximize(&c, &a_rows, &b) {
        LpOutcome::Optimal { value, .. } => value,
        other => {
            return Ok(StrictDirection::Infeasible {
                best_margin: 0.0,
                diagnostic: format!("margin LP ended as {other:?}"),
            })
        }
    };
    if sigma_star <= sigma_min {
        return Ok(StrictDirection::Infeasible {
            best_margin: sigma_star.max(0.0),
            diagnostic: format!("optimal margin {sigma_star:e} is not above {sigma_min:e}"),
        });
    }

    // second stage: least ℓ₁ norm at (nearly) optimal margin
    let mut a2 = a_rows.clone();
    let mut b2 = b.clone();
    let mut r = vec![0.0; nv];
    r[2 * n] = -1.0;
    a2.push(r);
    b2.push(-sigma_star * (1.0 - 1e-12));
    let mut c2 = vec![-1.0; nv];
    c2[2 * n] = 0.0;
    let x = match maximize(&c2, &a2, &b2) {
        LpOutcome::Optimal { x, .. } => x,
        _ => match maximize(&c, &a_rows, &b) {
            LpOutcome::Optimal { x, .. } => x,
            _ => unreachable!("first stage was optimal"),
        },
    };
    let d: Vec<f64> = (0..n).map(|j| x[j] - x[n + j]).collect();

    // re-verify from scratch rather than trusting the tableau
    let margin = achieved_margin(sets, &d);
    let cone_violation = cone.rows().iter().map(|a| dot(a, &d)).fold(0.0, f64::max);
    if margin <= sigma_min || cone_violation > 1e-12 {
        return Ok(StrictDirection::Infeasible {
            best_margin: margin.max(0.0),
            diagnostic: format!(
                "witness failed re-verification (margin {margin:e}, cone violation {cone_violation:e})"
            ),
        });
    }
    Ok(StrictDirection::Found { d, margin })
}
