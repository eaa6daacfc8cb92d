use serde::Serialize;

use super::{
    check_xi, constraint_subdiff, objective_subdiffs, require_feasible, verdict_of, witness_residual, Inclusion,
    Verdict,
};
use crate::convexsets::residual_min;
use crate::error::{Error, Result};
use crate::functions::norm;
use crate::oracle::scalarize_psi;
use crate::problem::{lattice, linspace, MultiplierMu, Problem};
use crate::tolerances::Tolerances;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FuzzyCertificate {
    pub anchor: Vec<f64>,
    pub xi: Vec<f64>,
    pub delta: f64,
    /// Approximate minimizer of ψ over the feasible points of B(x̄, δ).
    pub point: Vec<f64>,
    pub distance: f64,
    pub psi: f64,
    pub lambda: Vec<f64>,
    /// Cone weights on the constraint subdifferentials at `point`.
    pub mu: MultiplierMu,
    pub objective_subgradients: Vec<Vec<f64>>,
    pub constraint_subgradients: Vec<Vec<f64>>,
    /// `(1/δ)·max_i ξ_i`.
    pub ball_radius: f64,
    pub ball: Vec<f64>,
    pub normal: Vec<f64>,
    pub residual: f64,
    /// `λ_i (f_i(x_δ) − f_i(x̄) + ξ_i − ψ(x_δ))`.
    pub complementarity: Vec<f64>,
    /// The pattern search hit its iteration cap.
    pub stagnated: bool,
    pub verdict: Verdict,
    pub notes: Vec<String>,
}

const STARTS_PER_DIM: usize = 11;
const KEPT_STARTS: usize = 4;
const SEARCH_ITERS: usize = 20_000;

struct Ball<'a> {
    p: &'a Problem,
    center: &'a [f64],
    xi: &'a [f64],
    delta: f64,
    tol: &'a Tolerances,
}

impl Ball<'_> {
    /// ψ at `x` if `x` is feasible and strictly inside the ball.
    fn value(&self, x: &[f64]) -> Result<Option<f64>> {
        let d: Vec<f64> = x.iter().zip(self.center).map(|(a, b)| a - b).collect();
        if norm(&d) >= self.delta {
            return Ok(None);
        }
        if !self.p.is_feasible(x, self.tol.feasibility)?.feasible {
            return Ok(None);
        }
        scalarize_psi(self.p, self.center, self.xi, x).map(Some)
    }

    /// Compass search from `x0`; returns the point, its value and whether
    /// the iteration cap was hit.
    fn descend(&self, x0: Vec<f64>, v0: f64) -> Result<(Vec<f64>, f64, bool)> {
        let n = x0.len();
        let mut x = x0;
        let mut v = v0;
        let mut h = self.delta / 4.0;
        let floor = 1e-12 * self.delta;
        for _ in 0..SEARCH_ITERS {
            if h < floor {
                return Ok((x, v, false));
            }
            let mut moved = false;
            'dirs: for j in 0..n {
                for s in [-1.0, 1.0] {
                    let mut y = x.clone();
                    y[j] += s * h;
                    if let Some(vy) = self.value(&y)? {
                        if vy < v {
                            x = y;
                            v = vy;
                            moved = true;
                            break 'dirs;
                        }
                    }
                }
            }
            if !moved {
                h /= 2.0;
            }
        }
        Ok((x, v, true))
    }
}

/// Approximate KKT conditions at a point near `x̄`: minimizes
/// `ψ(x) = max_i{f_i(x) − f_i(x̄) + ξ_i}` over the feasible part of the
/// open ball B(x̄, δ), then checks
/// `0 ∈ Σλ_i ∂f_i(x_δ) + cone ∪_{t active} ∂g_t(x_δ) + N(x_δ; Ω) + (1/δ)max ξ·B`
/// with λ carried only by objectives attaining ψ(x_δ).
pub fn fuzzy_kkt(p: &Problem, x: &[f64], xi: &[f64], delta: f64, tol: &Tolerances) -> Result<FuzzyCertificate> {
    check_xi(p, xi)?;
    require_feasible(p, x, tol)?;
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::invalid("delta must be positive"));
    }
    let mut notes = Vec::new();
    if xi.iter().all(|v| *v == 0.0) {
        notes.push("xi = 0: the ball term vanishes".into());
    }
    let ball = Ball {
        p,
        center: x,
        xi,
        delta,
        tol,
    };

    // starting points: x̄ plus the best feasible points of a coarse lattice
    let n = p.n();
    let mut starts = vec![(x.to_vec(), ball.value(x)?.expect("anchor is feasible"))];
    if n <= 3 {
        let axes: Vec<Vec<f64>> = x
            .iter()
            .map(|&c| linspace(c - delta, c + delta, STARTS_PER_DIM))
            .collect();
        let mut cand = Vec::new();
        for y in lattice(&axes) {
            if let Some(v) = ball.value(&y)? {
                cand.push((y, v));
            }
        }
        cand.sort_by(|a, b| a.1.total_cmp(&b.1));
        starts.extend(cand.into_iter().take(KEPT_STARTS));
    }
    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    for (s, v) in starts {
        let (y, vy, stuck) = ball.descend(s, v)?;
        if best.as_ref().is_none_or(|b| vy < b.1) {
            best = Some((y, vy, stuck));
        }
    }
    let (xd, psi, stagnated) = best.expect("at least the anchor");
    if stagnated {
        notes.push("pattern search hit its iteration cap".into());
    }

    // objectives attaining ψ carry λ; the others are held at zero
    let f_bar = p.objective_values(x)?;
    let f_d = p.objective_values(&xd)?;
    let shifted: Vec<f64> = (0..p.m()).map(|i| f_d[i] - f_bar[i] + xi[i]).collect();
    let attaining: Vec<bool> = shifted.iter().map(|v| *v >= psi - tol.complementarity).collect();
    let objectives = objective_subdiffs(p, &xd, tol)?;
    let radius = xi.iter().copied().fold(0.0, f64::max) / delta;
    let constraints = if p.index_points().is_empty() {
        vec![]
    } else {
        let (g, _) = p.g_max(&xd)?;
        p.active_indices(&xd, tol.activity_band(g))?
            .into_iter()
            .map(|ip| {
                let set = constraint_subdiff(p, &ip, &xd, tol)?;
                Ok((ip, set, None))
            })
            .collect::<Result<Vec<_>>>()?
    };
    let inc = Inclusion {
        objectives,
        xi: vec![0.0; p.m()],
        lambda: None,
        carriers: Some(attaining),
        constraints,
        normal: p.tangent_cone(&xd, tol.feasibility),
        offset: vec![0.0; n],
        ball_fixed: radius,
    };
    let sum = inc.to_sum(n);
    let sol = residual_min(&sum, tol.kkt, tol.max_iter)?;
    let w = inc.witnesses(&sol);
    let residual = witness_residual(&inc.offset, &w.lambda, &w.zs, &w.mu, &w.xs, &w.ball, &w.normal);
    let complementarity: Vec<f64> = w.lambda.iter().zip(&shifted).map(|(l, s)| l * (s - psi)).collect();
    let comp_ok = complementarity.iter().all(|c| c.abs() <= tol.complementarity);
    let verdict = match verdict_of(residual, &sol, tol.kkt) {
        Verdict::Certified if comp_ok && !stagnated => Verdict::Certified,
        // failure at a given δ does not refute the condition for smaller δ
        _ => Verdict::Inconclusive,
    };
    Ok(FuzzyCertificate {
        anchor: x.to_vec(),
        xi: xi.to_vec(),
        delta,
        distance: norm(&xd.iter().zip(x).map(|(a, b)| a - b).collect::<Vec<_>>()),
        point: xd,
        psi,
        lambda: w.lambda,
        mu: w.mu,
        objective_subgradients: w.zs,
        constraint_subgradients: w.xs,
        ball_radius: sol.ball_radius,
        ball: w.ball,
        normal: w.normal,
        residual,
        complementarity,
        stagnated,
        verdict,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::super::testing::*;
    use super::*;
    use crate::problem::OmegaSet;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn example_31_with_wide_ball() {
        let p = example_31();
        let c = fuzzy_kkt(&p, &[0.0], &[1.0, 0.0], 0.5, &tol()).unwrap();
        assert!(c.point[0] <= 0.0 && c.point[0] >= -0.5, "{:?}", c.point);
        assert!(c.residual <= 1e-8);
        assert_eq!(c.ball_radius, 2.0);
        assert_eq!(c.verdict, Verdict::Certified);
        // independent check: ψ at x_δ is no worse than on a fine grid of [−0.5, 0]
        let grid_min = (0..=5000)
            .map(|k| -0.5 + k as f64 * 1e-4)
            .filter(|x| *x > -0.5)
            .map(|x| scalarize_psi(&p, &[0.0], &[1.0, 0.0], &[x]).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!(c.psi <= grid_min + 1e-6);
    }

    #[test]
    fn large_xi_is_absorbed_at_the_anchor() {
        let p = problem(1, &["3*x", "-2*x"], &[], OmegaSet::Whole);
        let c = fuzzy_kkt(&p, &[0.0], &[10.0, 10.0], 1.0, &tol()).unwrap();
        assert_eq!(c.verdict, Verdict::Certified);
        assert_eq!(c.residual, 0.0);
    }

    #[test]
    fn smooth_convex_stays_put() {
        let p = problem(
            1,
            &["x^2", "x^2"],
            &[],
            OmegaSet::Box {
                lo: vec![-1.0],
                hi: vec![1.0],
            },
        );
        for delta in [0.1, 0.5] {
            let c = fuzzy_kkt(&p, &[0.0], &[0.1, 0.1], delta, &tol()).unwrap();
            assert_eq!(c.point, vec![0.0]);
            assert!(c.residual <= 1e-12);
            assert_eq!(c.verdict, Verdict::Certified);
        }
    }
}
