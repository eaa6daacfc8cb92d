//! Approximate KKT certificates and the checks around them: multiplier
//! search and verification, the fuzzy variant at a nearby point, the
//! constraint qualifications, and generalized convexity.

mod convexity;
mod cq;
mod fuzzy;

use serde::Serialize;

use crate::convexsets::{residual_min, FactoredSum, Pool, ResidualSolution, TangentCone};
use crate::error::{Error, Result};
use crate::functions::{dot, norm, SubdiffSet};
use crate::problem::{IndexPoint, MultiplierMu, Problem};
use crate::tolerances::Tolerances;

pub use convexity::{
    check_gen_convexity, confirm_counterexample, sufficiency_verdict, Counterexample, GenConvexityReport, SufficiencyMode, SufficiencyReport,
    SufficiencyVerdict,
};
pub use cq::{check_cq_ai, check_cq_u, CqReport};
pub use fuzzy::{fuzzy_kkt, FuzzyCertificate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Certified,
    Refuted,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckMode {
    /// Multipliers supplied by the caller; only they are checked.
    Verify,
    Search,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub anchor: Vec<f64>,
    pub xi: Vec<f64>,
    pub mode: CheckMode,
    /// ξ = 0: the inclusion is the exact KKT condition.
    pub exact: bool,
    pub lambda: Vec<f64>,
    pub mu: MultiplierMu,
    /// `z_i ∈ ∂f_i(x̄)`, one per objective.
    pub objective_subgradients: Vec<Vec<f64>>,
    /// `x_t ∈ ∂g_t(x̄)`, aligned with `mu.entries`.
    pub constraint_subgradients: Vec<Vec<f64>>,
    pub ball: Vec<f64>,
    pub ball_radius: f64,
    /// Element of the normal cone of Ω at x̄.
    pub normal: Vec<f64>,
    /// `‖Σλ_i z_i + Σμ_t x_t + b + w‖`, recomputed from the witnesses.
    pub residual: f64,
    pub lower_bound: Option<f64>,
    pub converged: bool,
    pub verdict: Verdict,
    pub notes: Vec<String>,
}

/// Generators of a polytope containing `set` (a ball of radius r is
/// replaced by the cube of half-width r).
pub(crate) fn outer_generators(set: &SubdiffSet) -> Vec<Vec<f64>> {
    if set.ball_radius == 0.0 {
        return set.generators.clone();
    }
    let n = set.dim();
    let mut out = Vec::with_capacity(set.generators.len() << n);
    for v in &set.generators {
        for mask in 0..(1usize << n) {
            out.push(
                v.iter()
                    .enumerate()
                    .map(|(j, vj)| vj + if mask >> j & 1 == 1 { set.ball_radius } else { -set.ball_radius })
                    .collect(),
            );
        }
    }
    out
}

pub(crate) fn objective_subdiffs(p: &Problem, x: &[f64], tol: &Tolerances) -> Result<Vec<SubdiffSet>> {
    p.objectives()
        .iter()
        .map(|f| f.clarke_subdiff(x, &[], tol.activity))
        .collect()
}

pub(crate) fn constraint_subdiff(p: &Problem, ip: &IndexPoint, x: &[f64], tol: &Tolerances) -> Result<SubdiffSet> {
    p.constraint_fn(ip).clarke_subdiff(x, &ip.t, tol.activity)
}

pub(crate) fn check_xi(p: &Problem, xi: &[f64]) -> Result<()> {
    if xi.len() != p.m() {
        return Err(Error::Dimension {
            expected: p.m(),
            got: xi.len(),
            context: "xi",
        });
    }
    if xi.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::invalid("xi must be finite and componentwise nonnegative"));
    }
    Ok(())
}

pub(crate) fn require_feasible(p: &Problem, x: &[f64], tol: &Tolerances) -> Result<()> {
    let f = p.is_feasible(x, tol.feasibility)?;
    if !f.feasible {
        return Err(Error::Infeasible(format!(
            "point {x:?} is infeasible (max constraint {:e}, omega violation {:e})",
            f.g_max, f.omega_violation
        )));
    }
    Ok(())
}

/// Inputs of one KKT inclusion at a point, before the solve.
pub(crate) struct Inclusion {
    pub objectives: Vec<SubdiffSet>,
    /// Ball coefficient per unit of λ_i.
    pub xi: Vec<f64>,
    pub lambda: Option<Vec<f64>>,
    /// When searching λ, the objectives allowed to carry weight (all if
    /// `None`).
    pub carriers: Option<Vec<bool>>,
    /// Constraint terms: index point, subdifferential, fixed μ if any.
    pub constraints: Vec<(IndexPoint, SubdiffSet, Option<f64>)>,
    pub normal: TangentCone,
    pub offset: Vec<f64>,
    pub ball_fixed: f64,
}

impl Inclusion {
    pub fn to_sum(&self, n: usize) -> FactoredSum {
        let mut s = FactoredSum::new(n);
        s.set_offset(self.offset.clone());
        s.set_ball(self.ball_fixed);
        let joint = self.lambda.is_none().then(|| s.add_pool(1.0));
        let idle = self.carriers.is_some().then(|| s.add_pool(0.0));
        for (i, set) in self.objectives.iter().enumerate() {
            let pool = match (&self.lambda, joint) {
                (Some(l), _) => s.add_pool(l[i]),
                (None, Some(j)) => match (&self.carriers, idle) {
                    (Some(c), Some(z)) if !c[i] => z,
                    _ => j,
                },
                (None, None) => unreachable!(),
            };
            s.add_block(format!("f{}", i + 1), set.generators.clone(), self.xi[i] + set.ball_radius, Pool::Simplex(pool));
        }
        for (ip, set, fixed) in &self.constraints {
            let pool = match fixed {
                Some(w) => Pool::Simplex(s.add_pool(*w)),
                None => Pool::Free,
            };
            s.add_block(format!("g[{}:{}]", ip.block, ip.index), set.generators.clone(), set.ball_radius, pool);
        }
        if !self.normal.is_whole() {
            s.add_block("normal", self.normal.normal_generators().to_vec(), 0.0, Pool::Free);
        }
        s
    }

    /// Reads λ, μ and the witnesses off a solution; the residual is
    /// recomputed from them.
    pub fn witnesses(&self, sol: &ResidualSolution) -> Witnesses {
        let m = self.objectives.len();
        let mut lambda = Vec::with_capacity(m);
        let mut zs = Vec::with_capacity(m);
        for (i, set) in self.objectives.iter().enumerate() {
            let b = &sol.blocks[i];
            lambda.push(b.mass);
            if b.mass > 0.0 {
                zs.push(b.point.iter().map(|v| v / b.mass).collect());
            } else {
                zs.push(set.generators[0].clone());
            }
        }
        let mut pairs = Vec::new();
        let mut xs: Vec<Vec<f64>> = Vec::new();
        for (k, (ip, _, _)) in self.constraints.iter().enumerate() {
            let b = &sol.blocks[m + k];
            if b.mass > 0.0 {
                pairs.push((ip.clone(), b.mass));
                xs.push(b.point.iter().map(|v| v / b.mass).collect());
            }
        }
        let mu = MultiplierMu::from_pairs(pairs).expect("block masses are nonnegative");
        // from_pairs sorts; realign the subgradients with the sorted entries
        let mut aligned = Vec::with_capacity(xs.len());
        for e in &mu.entries {
            let k = self
                .constraints
                .iter()
                .enumerate()
                .filter(|(k, _)| sol.blocks[m + k].mass > 0.0)
                .position(|(_, (ip, _, _))| ip.block == e.block && ip.index == e.index)
                .expect("entry comes from a block");
            aligned.push(xs[k].clone());
        }
        let normal = if self.normal.is_whole() {
            vec![0.0; self.offset.len()]
        } else {
            sol.blocks[m + self.constraints.len()].point.clone()
        };
        Witnesses {
            lambda,
            mu,
            zs,
            xs: aligned,
            ball: sol.ball.clone(),
            ball_radius: sol.ball_radius,
            normal,
        }
    }
}

pub(crate) struct Witnesses {
    pub lambda: Vec<f64>,
    pub mu: MultiplierMu,
    pub zs: Vec<Vec<f64>>,
    pub xs: Vec<Vec<f64>>,
    pub ball: Vec<f64>,
    pub ball_radius: f64,
    pub normal: Vec<f64>,
}

/// `‖o + Σλ_i z_i + Σμ_t x_t + b + w‖`.
pub fn witness_residual(
    offset: &[f64],
    lambda: &[f64],
    zs: &[Vec<f64>],
    mu: &MultiplierMu,
    xs: &[Vec<f64>],
    ball: &[f64],
    normal: &[f64],
) -> f64 {
    let mut s = offset.to_vec();
    let mut add = |c: f64, v: &[f64]| {
        for (a, b) in s.iter_mut().zip(v) {
            *a += c * b;
        }
    };
    for (l, z) in lambda.iter().zip(zs) {
        add(*l, z);
    }
    for (e, x) in mu.entries.iter().zip(xs) {
        add(e.weight, x);
    }
    add(1.0, ball);
    add(1.0, normal);
    norm(&s)
}

fn validate_lambda(lambda: &[f64], m: usize) -> Result<()> {
    if lambda.len() != m {
        return Err(Error::Dimension {
            expected: m,
            got: lambda.len(),
            context: "lambda",
        });
    }
    if lambda.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::invalid("lambda must be nonnegative"));
    }
    let total: f64 = lambda.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!("lambda must sum to 1 (sums to {total})")));
    }
    Ok(())
}

pub(crate) fn verdict_of(residual: f64, sol: &ResidualSolution, tol: f64) -> Verdict {
    if residual <= tol {
        Verdict::Certified
    } else if sol.lower_bound.is_some_and(|lb| lb > tol) || sol.converged {
        Verdict::Refuted
    } else {
        Verdict::Inconclusive
    }
}

/// Checks the approximate KKT inclusion
/// `0 ∈ Σλ_i ∂f_i(x̄) + Σμ_t ∂g_t(x̄) + (Σλ_iξ_i)·B + N(x̄; Ω)`.
///
/// Supplied `lambda`/`mu` are verified as given; missing ones are searched.
/// Searched μ is supported on index points that are active and binding.
pub fn check_kkt(
    p: &Problem,
    x: &[f64],
    xi: &[f64],
    lambda: Option<&[f64]>,
    mu: Option<&MultiplierMu>,
    tol: &Tolerances,
) -> Result<Certificate> {
    check_xi(p, xi)?;
    require_feasible(p, x, tol)?;
    if let Some(l) = lambda {
        validate_lambda(l, p.m())?;
    }
    let mut notes = Vec::new();
    let exact = xi.iter().all(|v| *v == 0.0);
    if exact {
        notes.push("xi = 0: checking the exact KKT inclusion (no ball term)".into());
    }
    let objectives = objective_subdiffs(p, x, tol)?;
    let constraints = match mu {
        Some(mu) => {
            mu.check_support(p)?;
            let gap = mu.complementarity_gap(p, x)?;
            if gap > tol.complementarity {
                notes.push(format!("supplied mu violates complementarity (|mu_t g_t| up to {gap:e})"));
            }
            mu.entries
                .iter()
                .map(|e| {
                    let ip = MultiplierMu::index_point(e);
                    let set = constraint_subdiff(p, &ip, x, tol)?;
                    Ok((ip, set, Some(e.weight)))
                })
                .collect::<Result<Vec<_>>>()?
        }
        None => p
            .binding_indices(x, tol.activity, tol.activity_band(0.0))?
            .into_iter()
            .map(|ip| {
                let set = constraint_subdiff(p, &ip, x, tol)?;
                Ok((ip, set, None))
            })
            .collect::<Result<Vec<_>>>()?,
    };
    let inc = Inclusion {
        objectives,
        xi: xi.to_vec(),
        lambda: lambda.map(<[f64]>::to_vec),
        carriers: None,
        constraints,
        normal: p.tangent_cone(x, tol.feasibility),
        offset: vec![0.0; p.n()],
        ball_fixed: 0.0,
    };
    let sol = residual_min(&inc.to_sum(p.n()), tol.kkt, tol.max_iter)?;
    let w = inc.witnesses(&sol);
    let residual = witness_residual(&inc.offset, &w.lambda, &w.zs, &w.mu, &w.xs, &w.ball, &w.normal);
    let mut verdict = verdict_of(residual, &sol, tol.kkt);
    let gap = w.mu.complementarity_gap(p, x)?;
    if gap > tol.complementarity {
        if verdict == Verdict::Certified {
            verdict = if mu.is_some() { Verdict::Refuted } else { Verdict::Inconclusive };
        }
        if mu.is_none() {
            notes.push(format!("multiplier complementarity gap {gap:e} exceeds tolerance"));
        }
    }
    if !sol.converged && verdict != Verdict::Certified {
        notes.push(format!("solver stopped after {} iterations without converging", sol.iterations));
    }
    let (lambda_out, mode) = match lambda {
        Some(l) => (l.to_vec(), CheckMode::Verify),
        None => (w.lambda, CheckMode::Search),
    };
    let mode = if mu.is_some() { CheckMode::Verify } else { mode };
    Ok(Certificate {
        anchor: x.to_vec(),
        xi: xi.to_vec(),
        mode,
        exact,
        lambda: lambda_out,
        mu: w.mu,
        objective_subgradients: w.zs,
        constraint_subgradients: w.xs,
        ball: w.ball,
        ball_radius: w.ball_radius,
        normal: w.normal,
        residual,
        lower_bound: sol.lower_bound,
        converged: sol.converged,
        verdict,
        notes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recheck {
    pub residual: f64,
    /// Largest distance of a reported subgradient from its subdifferential.
    pub membership_error: f64,
    pub lambda_ok: bool,
    pub ball_ok: bool,
    pub normal_ok: bool,
    pub complementarity_gap: f64,
}

impl Recheck {
    pub fn passes(&self, cert: &Certificate, tol: &Tolerances) -> bool {
        self.lambda_ok
            && self.ball_ok
            && self.normal_ok
            && self.membership_error <= 1e-9
            && (self.residual - cert.residual).abs() <= 1e-10
            && (cert.verdict != Verdict::Certified || self.complementarity_gap <= tol.complementarity)
    }
}

fn distance_to_hull(set: &SubdiffSet, v: &[f64]) -> Result<f64> {
    let mut s = FactoredSum::new(v.len());
    s.set_offset(v.iter().map(|a| -a).collect());
    s.set_ball(set.ball_radius);
    let p = s.add_pool(1.0);
    s.add_block("set", set.generators.clone(), 0.0, Pool::Simplex(p));
    Ok(residual_min(&s, 1e-13, 20_000)?.residual)
}

/// Re-derives every quantity of `cert` from the problem data, trusting
/// nothing but the reported witnesses.
pub fn reverify(p: &Problem, cert: &Certificate, tol: &Tolerances) -> Result<Recheck> {
    let x = &cert.anchor;
    let objectives = objective_subdiffs(p, x, tol)?;
    let mut membership: f64 = 0.0;
    for (set, z) in objectives.iter().zip(&cert.objective_subgradients) {
        membership = membership.max(distance_to_hull(set, z)?);
    }
    for (e, xt) in cert.mu.entries.iter().zip(&cert.constraint_subgradients) {
        let set = constraint_subdiff(p, &MultiplierMu::index_point(e), x, tol)?;
        membership = membership.max(distance_to_hull(&set, xt)?);
    }
    let lambda_ok = cert.lambda.len() == p.m()
        && cert.lambda.iter().all(|l| *l >= 0.0)
        && (cert.lambda.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
    let radius: f64 = cert
        .lambda
        .iter()
        .zip(&cert.xi)
        .zip(&objectives)
        .map(|((l, xi), set)| l * (xi + set.ball_radius))
        .sum::<f64>()
        + cert
            .mu
            .entries
            .iter()
            .map(|e| {
                constraint_subdiff(p, &MultiplierMu::index_point(e), x, tol)
                    .map(|s| e.weight * s.ball_radius)
                    .unwrap_or(0.0)
            })
            .sum::<f64>();
    let ball_ok = norm(&cert.ball) <= radius * (1.0 + 1e-12) + 1e-15;
    // w ∈ N(x̄; Ω): ⟨w, d⟩ ≤ 0 on the tangent cone; checked against the
    // cone's generators' polar via distance to the generated cone
    let cone = p.tangent_cone(x, tol.feasibility);
    let normal_ok = if cone.is_whole() {
        norm(&cert.normal) <= 1e-12
    } else {
        let mut s = FactoredSum::new(p.n());
        s.set_offset(cert.normal.iter().map(|a| -a).collect());
        s.add_block("normal", cone.normal_generators().to_vec(), 0.0, Pool::Free);
        residual_min(&s, 1e-13, 20_000)?.residual <= 1e-9 * (1.0 + norm(&cert.normal))
    };
    let residual = witness_residual(
        &vec![0.0; p.n()],
        &cert.lambda,
        &cert.objective_subgradients,
        &cert.mu,
        &cert.constraint_subgradients,
        &cert.ball,
        &cert.normal,
    );
    Ok(Recheck {
        residual,
        membership_error: membership,
        lambda_ok,
        ball_ok,
        normal_ok,
        complementarity_gap: cert.mu.complementarity_gap(p, x)?,
    })
}

pub(crate) fn support_max(sets: &[Vec<Vec<f64>>], d: &[f64]) -> f64 {
    sets.iter()
        .flatten()
        .map(|u| dot(u, d))
        .fold(f64::NEG_INFINITY, f64::max)
}


#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;
    use crate::problem::OmegaSet;
    use proptest::prelude::*;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn example_32_verifies_at_equal_weights() {
        let p = example_32();
        let c = check_kkt(&p, &[0.0], &[0.1, 0.1], Some(&[0.5, 0.5]), Some(&MultiplierMu::zero()), &tol()).unwrap();
        assert_eq!(c.verdict, Verdict::Certified);
        assert!(c.residual <= 1e-10);
        assert_eq!(c.mode, CheckMode::Verify);
        let r = reverify(&p, &c, &tol()).unwrap();
        assert!(r.passes(&c, &tol()), "{r:?}");
    }

    #[test]
    fn example_31_search_certifies() {
        let p = example_31();
        let c = check_kkt(&p, &[0.0], &[0.1, 0.1], None, None, &tol()).unwrap();
        assert_eq!(c.verdict, Verdict::Certified, "{c:?}");
        // the derived multiplier λ = (1, 0), μ = 0 is a valid certificate too
        let c = check_kkt(&p, &[0.0], &[0.1, 0.1], Some(&[1.0, 0.0]), Some(&MultiplierMu::zero()), &tol()).unwrap();
        assert_eq!(c.verdict, Verdict::Certified);
        assert!(reverify(&p, &c, &tol()).unwrap().passes(&c, &tol()));
    }

    #[test]
    fn linear_objectives_without_constraints_are_refuted() {
        let p = problem(1, &["x", "x"], &[], OmegaSet::Whole);
        let c = check_kkt(&p, &[0.0], &[0.1, 0.1], None, None, &tol()).unwrap();
        // 1-D: dist(1, 0.1·B) = 0.9
        assert!((c.residual - 0.9).abs() < 1e-9, "{}", c.residual);
        assert_eq!(c.verdict, Verdict::Refuted);
        assert!(reverify(&p, &c, &tol()).unwrap().passes(&c, &tol()));
    }

    #[test]
    fn exact_case_is_flagged_and_checked() {
        let p = problem(1, &["x^2", "(x - 1)^2"], &[], OmegaSet::Whole);
        let c = check_kkt(&p, &[0.5], &[0.0, 0.0], None, None, &tol()).unwrap();
        assert!(c.exact);
        assert_eq!(c.verdict, Verdict::Certified);
        assert!((c.lambda[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn infeasible_anchor_is_an_error() {
        let p = example_32();
        assert!(matches!(
            check_kkt(&p, &[0.5], &[0.1, 0.1], None, None, &tol()),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn constraint_multiplier_is_found_on_binding_index() {
        // min (x, x) subject to -x - t <= 0, t ∈ [0, 1]: x̄ = 0, μ on t = 0
        let p = problem(1, &["x", "x"], &[("-x - t", interval(0.0, 1.0, 11))], OmegaSet::Whole);
        let c = check_kkt(&p, &[0.0], &[0.0, 0.0], None, None, &tol()).unwrap();
        assert_eq!(c.verdict, Verdict::Certified);
        assert_eq!(c.mu.entries.len(), 1);
        assert_eq!(c.mu.entries[0].t, vec![0.0]);
        assert!((c.mu.entries[0].weight - 1.0).abs() < 1e-8);
        assert!(reverify(&p, &c, &tol()).unwrap().passes(&c, &tol()));
    }

    #[test]
    fn normal_cone_of_box_enters() {
        // f = (x, 2x) on Ω = [0, 1] at x̄ = 0: cancelled by the normal -1
        let p = problem(
            1,
            &["x", "2*x"],
            &[],
            OmegaSet::Box {
                lo: vec![0.0],
                hi: vec![1.0],
            },
        );
        let c = check_kkt(&p, &[0.0], &[0.0, 0.0], None, None, &tol()).unwrap();
        assert_eq!(c.verdict, Verdict::Certified);
        assert!(c.normal[0] < 0.0);
        assert!(reverify(&p, &c, &tol()).unwrap().passes(&c, &tol()));
    }

    #[test]
    fn wrong_supplied_mu_is_rejected() {
        let p = example_32();
        let mu = MultiplierMu::from_pairs([(p.index_points()[5].clone(), 1.0)]).unwrap();
        let c = check_kkt(&p, &[0.0], &[0.1, 0.1], Some(&[0.5, 0.5]), Some(&mu), &tol()).unwrap();
        assert_ne!(c.verdict, Verdict::Certified);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn certificates_are_monotone_in_xi(
            a in -2.0f64..2.0, b in -2.0f64..2.0,
            xi in prop::collection::vec(0.0f64..1.0, 2),
            bump in prop::collection::vec(0.0f64..1.0, 2),
        ) {
            let p = problem(1, &[&format!("{a}*x + x^2"), &format!("{b}*x")], &[], OmegaSet::Whole);
            let tol = tol();
            let c = check_kkt(&p, &[0.0], &xi, None, None, &tol).unwrap();
            prop_assert!(reverify(&p, &c, &tol).unwrap().passes(&c, &tol));
            if c.verdict == Verdict::Certified {
                let bigger: Vec<f64> = xi.iter().zip(&bump).map(|(x, d)| x + d).collect();
                let c2 = check_kkt(&p, &[0.0], &bigger, Some(&c.lambda), Some(&c.mu), &tol).unwrap();
                prop_assert_eq!(c2.verdict, Verdict::Certified);
            }
        }
    }
}
