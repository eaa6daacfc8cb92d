//! Built-in worked examples with their expected outcomes. A section is
//! `reproduced` when the computed result matches the expectation.

use std::f64::consts::PI;
use std::time::Instant;

use super::{classify_section, fmt_vec, kkt_section, ProblemFile, Report, Section, Status};
use crate::certificates::{
    check_cq_ai, check_cq_u, check_gen_convexity, check_kkt, confirm_counterexample, GenConvexityReport, Verdict,
};
use crate::error::{Error, Result};
use crate::oracle::{FeasibleGrid, Notion};
use crate::problem::{linspace, MultiplierMu};
use crate::tolerances::Tolerances;

pub const EXAMPLES: [(&str, &str); 2] = [
    ("example-3.1", include_str!("../../problems/example-3.1.toml")),
    ("example-3.2", include_str!("../../problems/example-3.2.toml")),
];

fn expect(s: Section, ok: bool, what: &str) -> Section {
    let status = if ok { Status::Reproduced } else { Status::NotReproduced };
    Section { status, ..s }.line(format!("expected: {what}"))
}

pub(super) fn run(name: &str) -> Result<Report> {
    let src = EXAMPLES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, s)| *s)
        .ok_or_else(|| {
            Error::invalid(format!(
                "unknown example `{name}` (available: {})",
                EXAMPLES.map(|e| e.0).join(", ")
            ))
        })?;
    let pf = ProblemFile::parse(src)?;
    let mut timings = Vec::new();
    let sections = match name {
        "example-3.1" => example_31(&pf, &mut timings)?,
        _ => example_32(&pf, &mut timings)?,
    };
    let ok = sections.iter().all(|s| s.status == Status::Reproduced);
    let status = if ok { Status::Reproduced } else { Status::NotReproduced };
    let mut report = Report::new(Some(pf.sha256.clone()), pf.tolerances.clone(), status, sections);
    report.timings = timings;
    Ok(report)
}

type Timings = Vec<(String, std::time::Duration)>;

fn timed<T>(timings: &mut Timings, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t = Instant::now();
    let out = f()?;
    timings.push((name.into(), t.elapsed()));
    Ok(out)
}

fn example_31(pf: &ProblemFile, timings: &mut Timings) -> Result<Vec<Section>> {
    let p = &pf.problem;
    let tol: &Tolerances = &pf.tolerances;
    let x = [0.0];
    let xi = pf.xi.clone().expect("built-in xi");
    let mut out = Vec::new();

    let u = timed(timings, "cq U", || check_cq_u(p, &x, tol))?;
    let d_ok = u.direction.as_ref().is_some_and(|d| (d[0] + 1.0).abs() <= 1e-9);
    let ok = u.holds && d_ok && u.margin >= 1.0 - 1e-9;
    let s = Section::new("cq U", Status::Info, &u).line(format!(
        "direction {}, margin {:.12}",
        u.direction.as_deref().map_or("none".into(), fmt_vec),
        u.margin
    ));
    out.push(expect(s, ok, "holds with direction -1 and margin >= 1"));

    for i in [1, 2] {
        let a = timed(timings, &format!("cq A_{i}"), || check_cq_ai(p, &x, i, tol))?;
        let s = Section::new(format!("cq A_{i}"), Status::Info, &a)
            .line(format!("holds: {} (best margin {:.3e})", a.holds, a.margin));
        out.push(expect(s, !a.holds, "fails"));
    }

    let cert = timed(timings, "kkt", || check_kkt(p, &x, &xi, None, None, tol))?;
    let s = kkt_section("kkt", p, &cert, tol)?;
    out.push(expect(s, cert.verdict == Verdict::Certified, "certified"));

    let spec = pf.oracle.as_ref().expect("built-in grid");
    let (s, r) = timed(timings, "classify", || {
        let grid = FeasibleGrid::build(p, spec, tol.feasibility)?;
        classify_section("classify", p, &x, &xi, &grid, Notion::XiQuasiWeak, 0.0)
    })?;
    out.push(expect(
        s,
        r.holds(Notion::XiQuasiWeak) && r.grid_points == 10_000,
        "xi-quasi-weak Pareto on all 10000 grid points",
    ));
    Ok(out)
}

fn example_32(pf: &ProblemFile, timings: &mut Timings) -> Result<Vec<Section>> {
    let p = &pf.problem;
    let tol: &Tolerances = &pf.tolerances;
    let x = [0.0];
    let xi = pf.xi.clone().expect("built-in xi");
    let mut out = Vec::new();

    let cert = timed(timings, "kkt", || {
        check_kkt(p, &x, &xi, Some(&[0.5, 0.5]), Some(&MultiplierMu::zero()), tol)
    })?;
    let s = kkt_section("kkt", p, &cert, tol)?;
    let ok = cert.verdict == Verdict::Certified && cert.residual <= 1e-10;
    out.push(expect(s, ok, "certified at lambda = (1/2, 1/2), mu = 0 with residual <= 1e-10"));

    let spec = pf.oracle.as_ref().expect("built-in grid");
    let (s, r) = timed(timings, "classify", || {
        let grid = FeasibleGrid::build(p, spec, tol.feasibility)?;
        classify_section("classify", p, &x, &xi, &grid, Notion::XiQuasiWeak, 0.0)
    })?;
    let closed_form = (0.1 - 1.0 / PI) / PI;
    let v = r.verdict(Notion::XiQuasiWeak);
    let ok = !v.holds_on_grid
        && v.witness
            .as_ref()
            .is_some_and(|w| w.reverified && w.gap.iter().all(|g| (g + 0.069).abs() <= 1e-3));
    let s = s.line(format!("closed-form gap at x = -1/pi: {closed_form:.6}"));
    out.push(expect(s, ok, "xi-quasi-weak violated with both gaps within -0.069 +- 1e-3"));

    let mut samples = vec![vec![-1.0 / PI]];
    samples.extend(linspace(-2.0, 0.0, 201).into_iter().map(|v| vec![v]));
    let g = timed(timings, "generalized convexity", || {
        check_gen_convexity(p, &x, &samples, false, tol)
    })?;
    let (ok, line) = match &g {
        GenConvexityReport::Counterexample(cx) => {
            let confirmed = confirm_counterexample(p, &x, cx, false, tol)?;
            (
                confirmed && cx.objective_subgradients.iter().all(|z| z.iter().all(|v| *v == 0.0)),
                format!(
                    "counterexample at x = {} with z* = {:?}, violation {:.6e}, confirmed {confirmed}",
                    fmt_vec(&cx.x),
                    cx.objective_subgradients,
                    cx.violation
                ),
            )
        }
        GenConvexityReport::NotFalsified { samples, .. } => (false, format!("not falsified on {samples} samples")),
    };
    let s = Section::new("generalized convexity", Status::Info, &g).line(line);
    out.push(expect(s, ok, "counterexample with z* = 0"));
    Ok(out)
}
