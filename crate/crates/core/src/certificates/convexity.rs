//! Falsification of generalized convexity at a point: for a sample point
//! `x ∈ Ω` and a choice of subgradients `z_i ∈ ∂f_i(x̄)`, `x_t ∈ ∂g_t(x̄)`,
//! look for `ν ∈ T(x̄; Ω)` with `‖ν‖ ≤ ‖x − x̄‖` and
//! `⟨z_i, ν⟩ ≤ f_i(x) − f_i(x̄)` (strictly, in the strict variant),
//! `⟨x_t, ν⟩ ≤ g_t(x) − g_t(x̄)`.
//!
//! The Euclidean ball is handled by outer linearization (box plus tangent
//! cuts), so an infeasible linear program is a sound counterexample.

use serde::Serialize;

use super::{check_kkt, constraint_subdiff, objective_subdiffs, Certificate, Verdict};
use crate::convexsets::lp::{maximize, LpOutcome};
use crate::convexsets::TangentCone;
use crate::error::{Error, Result};
use crate::functions::{norm, SubdiffSet};
use crate::par::prelude::*;
use crate::problem::{IndexPoint, Problem};
use crate::tolerances::Tolerances;

const MAX_CUTS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Counterexample {
    pub x: Vec<f64>,
    pub objective_subgradients: Vec<Vec<f64>>,
    pub constraint_subgradients: Vec<(IndexPoint, Vec<f64>)>,
    /// Lower bound on the smallest achievable constraint violation.
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum GenConvexityReport {
    NotFalsified {
        samples: usize,
        combinations: usize,
        /// Some sample had more combinations than the cap.
        capped: bool,
        /// Combinations whose program could not be decided; counted as
        /// not falsified.
        undecided: usize,
    },
    Counterexample(Counterexample),
}

impl GenConvexityReport {
    pub fn is_counterexample(&self) -> bool {
        matches!(self, GenConvexityReport::Counterexample(_))
    }
}

enum Decision {
    Feasible,
    Infeasible(f64),
    Undecided,
}

/// min v  s.t.  ⟨c_k, ν⟩ − v ≤ rhs_k,  ν ∈ T,  ‖ν‖ ≤ rho.
fn min_violation(rows: &[(&[f64], f64)], cone: &TangentCone, rho: f64) -> Decision {
    let n = cone.dim();
    let nv = 2 * n + 1;
    let scale = rows.iter().map(|(_, r)| r.abs()).fold(1.0, f64::max);
    let thr = 1e-12 * scale;
    let row = |a: &[f64], v: f64| {
        let mut r = vec![0.0; nv];
        for j in 0..n {
            r[j] = a[j];
            r[n + j] = -a[j];
        }
        r[2 * n] = v;
        r
    };
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (c, rhs) in rows {
        a.push(row(c, -1.0));
        b.push(*rhs);
    }
    for t in cone.rows() {
        a.push(row(t, 0.0));
        b.push(0.0);
    }
    for j in 0..2 * n {
        let mut r = vec![0.0; nv];
        r[j] = 1.0;
        a.push(r);
        b.push(rho);
    }
    let mut c = vec![0.0; nv];
    c[2 * n] = -1.0;
    for _ in 0..MAX_CUTS {
        let LpOutcome::Optimal { x, value } = maximize(&c, &a, &b) else {
            return Decision::Undecided;
        };
        let v = -value;
        if v > thr {
            return Decision::Infeasible(v);
        }
        let nu: Vec<f64> = (0..n).map(|j| x[j] - x[n + j]).collect();
        let len = norm(&nu);
        if len <= rho * (1.0 + 1e-12) {
            return Decision::Feasible;
        }
        let w: Vec<f64> = nu.iter().map(|v| v / len).collect();
        a.push(row(&w, 0.0));
        b.push(rho);
    }
    Decision::Undecided
}

/// Mixed-radix enumeration of generator choices, at most `cap` of them.
fn combinations(sizes: &[usize], cap: usize) -> (Vec<Vec<usize>>, bool) {
    let total = sizes.iter().try_fold(1usize, |acc, &s| acc.checked_mul(s));
    let capped = total.is_none_or(|t| t > cap);
    let mut out = Vec::new();
    let mut idx = vec![0usize; sizes.len()];
    loop {
        if out.len() == cap {
            break;
        }
        out.push(idx.clone());
        let mut k = 0;
        loop {
            if k == sizes.len() {
                return (out, capped);
            }
            idx[k] += 1;
            if idx[k] < sizes[k] {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
    (out, capped)
}

fn choices(set: &SubdiffSet) -> Vec<Vec<f64>> {
    // centroid first: an interior choice often falsifies fastest
    let mut out = Vec::with_capacity(set.generators.len() + 1);
    if set.generators.len() > 1 {
        out.push(set.centroid());
    }
    out.extend(set.generators.iter().cloned());
    out
}

/// Tests generalized convexity of the data at `x̄` on `samples`. Constraint
/// subgradients range over the active index points. With `strict`, objective
/// inequalities need the margin `strict_factor·(1 + ‖x − x̄‖)` and the
/// anchor itself is skipped.
pub fn check_gen_convexity(
    p: &Problem,
    x_bar: &[f64],
    samples: &[Vec<f64>],
    strict: bool,
    tol: &Tolerances,
) -> Result<GenConvexityReport> {
    if !p.omega().contains(x_bar, tol.feasibility) {
        return Err(Error::Infeasible("anchor is outside omega".into()));
    }
    let f_bar = p.objective_values(x_bar)?;
    let obj_choices: Vec<Vec<Vec<f64>>> = objective_subdiffs(p, x_bar, tol)?.iter().map(choices).collect();
    let active = if p.index_points().is_empty() {
        vec![]
    } else {
        let (g, _) = p.g_max(x_bar)?;
        p.active_indices(x_bar, tol.activity_band(g))?
    };
    let mut con_choices = Vec::with_capacity(active.len());
    let mut g_bar = Vec::with_capacity(active.len());
    for ip in &active {
        con_choices.push(choices(&constraint_subdiff(p, ip, x_bar, tol)?));
        g_bar.push(p.g(ip, x_bar)?);
    }
    let sizes: Vec<usize> = obj_choices.iter().chain(&con_choices).map(Vec::len).collect();
    let (combos, capped) = combinations(&sizes, tol.combination_cap);
    let cone = p.tangent_cone(x_bar, tol.feasibility);
    let m = p.m();

    let usable: Vec<&Vec<f64>> = samples
        .iter()
        .filter(|x| p.omega().contains(x, tol.feasibility))
        .filter(|x| !(strict && x.as_slice() == x_bar))
        .collect();

    // per sample: first counterexample in combination order, or undecided count
    let outcomes: Vec<Result<(Option<Counterexample>, usize)>> = usable
        .par_iter()
        .map(|x| {
            let dx: Vec<f64> = x.iter().zip(x_bar).map(|(a, b)| a - b).collect();
            let rho = norm(&dx);
            let margin = if strict { tol.strict_factor * (1.0 + rho) } else { 0.0 };
            let f_x = p.objective_values(x)?;
            let mut rhs = Vec::with_capacity(m + active.len());
            for i in 0..m {
                rhs.push(f_x[i] - f_bar[i] - margin);
            }
            for (ip, gb) in active.iter().zip(&g_bar) {
                rhs.push(p.g(ip, x)? - gb);
            }
            let mut undecided = 0;
            for combo in &combos {
                let rows: Vec<(&[f64], f64)> = combo
                    .iter()
                    .enumerate()
                    .map(|(k, &c)| {
                        let v = if k < m { &obj_choices[k][c] } else { &con_choices[k - m][c] };
                        (v.as_slice(), rhs[k])
                    })
                    .collect();
                match min_violation(&rows, &cone, rho) {
                    Decision::Feasible => {}
                    Decision::Undecided => undecided += 1,
                    Decision::Infeasible(v) => {
                        return Ok((
                            Some(Counterexample {
                                x: x.to_vec(),
                                objective_subgradients: (0..m).map(|k| obj_choices[k][combo[k]].clone()).collect(),
                                constraint_subgradients: active
                                    .iter()
                                    .enumerate()
                                    .map(|(j, ip)| (ip.clone(), con_choices[j][combo[m + j]].clone()))
                                    .collect(),
                                violation: v,
                            }),
                            undecided,
                        ))
                    }
                }
            }
            Ok((None, undecided))
        })
        .collect();

    let mut undecided = 0;
    for o in outcomes {
        let (cx, u) = o?;
        if let Some(cx) = cx {
            return Ok(GenConvexityReport::Counterexample(cx));
        }
        undecided += u;
    }
    Ok(GenConvexityReport::NotFalsified {
        samples: usable.len(),
        combinations: combos.len(),
        capped,
        undecided,
    })
}

/// Re-checks a counterexample: no ν in the tangent cone and radius ball
/// satisfies its inequalities (up to the reported violation).
pub fn confirm_counterexample(
    p: &Problem,
    x_bar: &[f64],
    cx: &Counterexample,
    strict: bool,
    tol: &Tolerances,
) -> Result<bool> {
    let f_bar = p.objective_values(x_bar)?;
    let f_x = p.objective_values(&cx.x)?;
    let rho = norm(&cx.x.iter().zip(x_bar).map(|(a, b)| a - b).collect::<Vec<_>>());
    let margin = if strict { tol.strict_factor * (1.0 + rho) } else { 0.0 };
    let mut rows: Vec<(&[f64], f64)> = Vec::new();
    for (i, z) in cx.objective_subgradients.iter().enumerate() {
        rows.push((z, f_x[i] - f_bar[i] - margin));
    }
    let mut rhs_g = Vec::new();
    for (ip, _) in &cx.constraint_subgradients {
        rhs_g.push(p.g(ip, &cx.x)? - p.g(ip, x_bar)?);
    }
    for ((_, v), r) in cx.constraint_subgradients.iter().zip(&rhs_g) {
        rows.push((v, *r));
    }
    let cone = p.tangent_cone(x_bar, tol.feasibility);
    Ok(matches!(min_violation(&rows, &cone, rho), Decision::Infeasible(_)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SufficiencyMode {
    /// Generalized convexity; concludes ξ-quasi-weak Pareto.
    QuasiWeak,
    /// Strict generalized convexity; concludes ξ-quasi Pareto.
    Quasi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SufficiencyVerdict {
    /// KKT certified and convexity not falsified on the sample.
    SatisfiedSampled,
    KktFails,
    KktInconclusive,
    NotGeneralizedConvex,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SufficiencyReport {
    pub mode: SufficiencyMode,
    pub verdict: SufficiencyVerdict,
    pub certificate: Certificate,
    pub convexity: Option<GenConvexityReport>,
}

/// The hypotheses of the sufficient condition, checked at sample
/// resolution. This never asserts optimality by itself.
pub fn sufficiency_verdict(
    p: &Problem,
    x_bar: &[f64],
    xi: &[f64],
    mode: SufficiencyMode,
    samples: &[Vec<f64>],
    tol: &Tolerances,
) -> Result<SufficiencyReport> {
    let certificate = check_kkt(p, x_bar, xi, None, None, tol)?;
    let kkt_verdict = certificate.verdict;
    let mut report = SufficiencyReport {
        mode,
        verdict: SufficiencyVerdict::KktFails,
        certificate,
        convexity: None,
    };
    match kkt_verdict {
        Verdict::Refuted => return Ok(report),
        Verdict::Inconclusive => {
            report.verdict = SufficiencyVerdict::KktInconclusive;
            return Ok(report);
        }
        Verdict::Certified => {}
    }
    let conv = check_gen_convexity(p, x_bar, samples, mode == SufficiencyMode::Quasi, tol)?;
    report.verdict = if conv.is_counterexample() {
        SufficiencyVerdict::NotGeneralizedConvex
    } else {
        SufficiencyVerdict::SatisfiedSampled
    };
    report.convexity = Some(conv);
    Ok(report)
}
