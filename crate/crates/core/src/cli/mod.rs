//! Problem files, command dispatch and reports behind the `apcert` binary.
//! Exit codes: 0 certified/holds, 1 refuted/violated, 2 inconclusive,
//! 3 input error (the binary maps every `Err` to 3).

mod examples;
mod file;
mod report;

use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;

pub use examples::EXAMPLES;
pub use file::{ProblemFile, SCHEMA_VERSION};
pub use report::{Report, Section, Status, Table};

use crate::certificates::{
    check_cq_ai, check_cq_u, check_kkt, fuzzy_kkt, reverify, sufficiency_verdict, Certificate, SufficiencyMode,
    SufficiencyVerdict, Verdict,
};
use crate::conic::{recover_zeta, sdp_check_kkt, sdp_witness_residual};
use crate::error::{Error, Result};
use crate::oracle::{
    bounded_section, classify_point, ekeland_quasi, find_xi_pareto, xi_front, FeasibleGrid, GridSpec, Notion,
    SectionReport,
};
use crate::problem::{lattice, linspace, IndexPoint, MultiplierMu, Problem};

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Check {
        file: PathBuf,
        point: Vec<f64>,
        xi: Option<Vec<f64>>,
        lambda: Option<Vec<f64>>,
        /// `(block, index, weight)` triples.
        mu: Option<Vec<(usize, usize, f64)>>,
    },
    Fuzzy {
        file: PathBuf,
        point: Vec<f64>,
        xi: Option<Vec<f64>>,
        delta: f64,
    },
    Cq {
        file: PathBuf,
        point: Vec<f64>,
        ai: Option<usize>,
    },
    Classify {
        file: PathBuf,
        point: Vec<f64>,
        xi: Option<Vec<f64>>,
        notion: Notion,
    },
    Exists {
        file: PathBuf,
        xi: Option<Vec<f64>>,
        quasi: bool,
        start: Option<Vec<f64>>,
    },
    Suffice {
        file: PathBuf,
        point: Vec<f64>,
        xi: Option<Vec<f64>>,
        mode: SufficiencyMode,
        samples: usize,
    },
    Sdp {
        file: PathBuf,
        point: Vec<f64>,
        xi: Option<Vec<f64>>,
        lambda: Option<Vec<f64>>,
        multiplier: Option<Vec<Vec<f64>>>,
    },
    Example {
        name: String,
    },
}

/// Comma-separated reals, e.g. `-0.5,1e-3`.
pub fn parse_vector(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::invalid(format!("`{v}` is not a finite number")))
        })
        .collect()
}

/// Rows separated by `;`, e.g. `1,0;0,1`.
pub fn parse_matrix(s: &str) -> Result<Vec<Vec<f64>>> {
    s.split(';').map(parse_vector).collect()
}

/// `block:index=weight` entries separated by commas.
pub fn parse_mu(s: &str) -> Result<Vec<(usize, usize, f64)>> {
    s.split(',')
        .map(|e| {
            let bad = || Error::invalid(format!("multiplier entry `{e}` is not block:index=weight"));
            let (key, w) = e.split_once('=').ok_or_else(bad)?;
            let (b, i) = key.split_once(':').ok_or_else(bad)?;
            Ok((
                b.trim().parse().map_err(|_| bad())?,
                i.trim().parse().map_err(|_| bad())?,
                w.trim().parse().map_err(|_| bad())?,
            ))
        })
        .collect()
}

pub fn parse_notion(s: &str) -> Result<Notion> {
    Ok(match s {
        "weak-pareto" => Notion::WeakPareto,
        "pareto" => Notion::Pareto,
        "xi-weak" => Notion::XiWeak,
        "xi-pareto" => Notion::XiPareto,
        "xi-quasi-weak" => Notion::XiQuasiWeak,
        "xi-quasi" => Notion::XiQuasi,
        _ => return Err(Error::invalid(format!("unknown notion `{s}`"))),
    })
}

pub fn parse_mode(s: &str) -> Result<SufficiencyMode> {
    match s {
        "quasi-weak" => Ok(SufficiencyMode::QuasiWeak),
        "quasi" => Ok(SufficiencyMode::Quasi),
        _ => Err(Error::invalid(format!("unknown mode `{s}` (quasi-weak or quasi)"))),
    }
}

pub(crate) fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("({})", parts.join(", "))
}

fn check_dim(p: &Problem, x: &[f64], what: &'static str) -> Result<()> {
    if x.len() != p.n() {
        return Err(Error::Dimension {
            expected: p.n(),
            got: x.len(),
            context: what,
        });
    }
    Ok(())
}

fn xi_of(pf: &ProblemFile, xi: &Option<Vec<f64>>) -> Result<Vec<f64>> {
    xi.clone()
        .or_else(|| pf.xi.clone())
        .ok_or_else(|| Error::invalid("xi is required (give --xi or set `xi` in the file)"))
}

fn oracle_of(pf: &ProblemFile) -> Result<&GridSpec> {
    pf.oracle
        .as_ref()
        .ok_or_else(|| Error::invalid("this command needs an [oracle] grid in the problem file"))
}

fn no_sdp(pf: &ProblemFile) -> Result<()> {
    if pf.sdp.is_some() {
        return Err(Error::invalid("the file has an [sdp] block; use the sdp command"));
    }
    Ok(())
}

pub(crate) fn verdict_status(v: Verdict) -> Status {
    match v {
        Verdict::Certified => Status::Certified,
        Verdict::Refuted => Status::Refuted,
        Verdict::Inconclusive => Status::Inconclusive,
    }
}

pub(crate) fn holds_status(holds: bool) -> Status {
    if holds {
        Status::Holds
    } else {
        Status::Violated
    }
}

pub(crate) fn kkt_section(name: &str, p: &Problem, cert: &Certificate, tol: &crate::Tolerances) -> Result<Section> {
    let recheck = reverify(p, cert, tol)?;
    #[derive(Serialize)]
    struct Body<'a> {
        certificate: &'a Certificate,
        recheck: &'a crate::certificates::Recheck,
        recheck_passes: bool,
    }
    let passes = recheck.passes(cert, tol);
    let mut s = Section::new(
        name,
        verdict_status(cert.verdict),
        Body {
            certificate: cert,
            recheck: &recheck,
            recheck_passes: passes,
        },
    )
    .line(format!("residual {:e} ({:?} mode)", cert.residual, cert.mode).to_lowercase())
    .line(format!("lambda {}", fmt_vec(&cert.lambda)))
    .line(format!("mu: {} entries, total {:.6}", cert.mu.entries.len(), cert.mu.total()))
    .line(format!("independent recheck: residual {:e}, passes {passes}", recheck.residual));
    for n in &cert.notes {
        s = s.line(format!("note: {n}"));
    }
    Ok(s)
}

pub(crate) fn classify_section(
    name: &str,
    p: &Problem,
    x: &[f64],
    xi: &[f64],
    grid: &FeasibleGrid,
    notion: Notion,
    slack: f64,
) -> Result<(Section, crate::oracle::ClassificationReport)> {
    let r = classify_point(p, x, xi, grid, slack)?;
    let v = r.verdict(notion);
    let mut s = Section::new(name, holds_status(v.holds_on_grid), &r).line(format!(
        "{} on {} feasible grid points: {}",
        notion.name(),
        r.grid_points,
        if v.holds_on_grid { "holds" } else { "violated" }
    ));
    for v in &r.verdicts {
        let mut l = format!("  {:<22} {}", v.notion.name(), if v.holds_on_grid { "holds" } else { "violated" });
        if let Some(w) = &v.witness {
            l += &format!(" — witness x = {}, gap {}", fmt_vec(&w.x), fmt_vec(&w.gap));
        }
        s = s.line(l);
    }
    Ok((s, r))
}

/// Lattice points of the oracle box that lie in Ω, extras first, thinned
/// evenly to at most `cap`.
pub(crate) fn omega_samples(p: &Problem, spec: &GridSpec, cap: usize, tol: f64) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = spec
        .lo
        .iter()
        .zip(&spec.hi)
        .map(|(&a, &b)| linspace(a, b, spec.points))
        .collect();
    let lat: Vec<Vec<f64>> = lattice(&axes).into_iter().filter(|x| p.omega().contains(x, tol)).collect();
    let mut out: Vec<Vec<f64>> = spec.extra.iter().filter(|x| p.omega().contains(x, tol)).cloned().collect();
    let room = cap.saturating_sub(out.len());
    if lat.len() <= room {
        out.extend(lat);
    } else if room > 0 {
        let step = lat.len() as f64 / room as f64;
        out.extend((0..room).map(|k| lat[(k as f64 * step) as usize].clone()));
    }
    out
}

fn overall(sections: &[Section]) -> Status {
    sections.first().map_or(Status::Info, |s| s.status)
}

pub fn run(cmd: &Command) -> Result<Report> {
    let started = Instant::now();
    let mut report = match cmd {
        Command::Example { name } => examples::run(name)?,
        _ => run_file(cmd)?,
    };
    report.timings.push(("total".into(), started.elapsed()));
    Ok(report)
}

fn run_file(cmd: &Command) -> Result<Report> {
    let file = match cmd {
        Command::Check { file, .. }
        | Command::Fuzzy { file, .. }
        | Command::Cq { file, .. }
        | Command::Classify { file, .. }
        | Command::Exists { file, .. }
        | Command::Suffice { file, .. }
        | Command::Sdp { file, .. } => file,
        Command::Example { .. } => unreachable!(),
    };
    let pf = ProblemFile::load(file)?;
    let tol = pf.tolerances.clone();
    let p = &pf.problem;
    let mut sections = Vec::new();
    let mut table = None;
    match cmd {
        Command::Check { point, xi, lambda, mu, .. } => {
            no_sdp(&pf)?;
            check_dim(p, point, "point")?;
            let xi = xi_of(&pf, xi)?;
            let mu = match mu {
                None => None,
                Some(entries) => {
                    let pairs = entries
                        .iter()
                        .map(|&(block, index, w)| {
                            let ip = p
                                .index_points()
                                .iter()
                                .find(|ip| ip.block == block && ip.index == index)
                                .cloned()
                                .ok_or_else(|| Error::invalid(format!("no index point {block}:{index}")))?;
                            Ok((ip, w))
                        })
                        .collect::<Result<Vec<(IndexPoint, f64)>>>()?;
                    Some(MultiplierMu::from_pairs(pairs)?)
                }
            };
            let cert = check_kkt(p, point, &xi, lambda.as_deref(), mu.as_ref(), &tol)?;
            sections.push(kkt_section("kkt", p, &cert, &tol)?);
            if let Some(cone) = &pf.cone {
                let zeta = recover_zeta(&cert.mu, cone)?;
                sections.push(
                    Section::new("cone multiplier", Status::Info, &zeta)
                        .line(format!("zeta = {} (in the dual cone)", fmt_vec(&zeta))),
                );
            }
        }
        Command::Fuzzy { point, xi, delta, .. } => {
            no_sdp(&pf)?;
            check_dim(p, point, "point")?;
            let xi = xi_of(&pf, xi)?;
            let c = fuzzy_kkt(p, point, &xi, *delta, &tol)?;
            let mut s = Section::new("fuzzy kkt", verdict_status(c.verdict), &c)
                .line(format!("x_delta = {} at distance {:.6}", fmt_vec(&c.point), c.distance))
                .line(format!("psi(x_delta) = {:.6e}", c.psi))
                .line(format!("residual {:e}, ball radius {:.6}", c.residual, c.ball_radius))
                .line(format!("lambda {}", fmt_vec(&c.lambda)));
            for n in &c.notes {
                s = s.line(format!("note: {n}"));
            }
            sections.push(s);
        }
        Command::Cq { point, ai, .. } => {
            no_sdp(&pf)?;
            check_dim(p, point, "point")?;
            let r = match ai {
                None => check_cq_u(p, point, &tol)?,
                Some(i) => check_cq_ai(p, point, *i, &tol)?,
            };
            let mut s = Section::new(format!("cq {}", r.condition), holds_status(r.holds), &r)
                .line(format!("{} active index points", r.active.len()));
            s = match &r.direction {
                Some(d) => s.line(format!("direction {} with margin {:.6e}", fmt_vec(d), r.margin)),
                None => s.line(format!(
                    "no strict direction (best margin {:.6e})",
                    r.margin
                )),
            };
            if r.hull_estimate && !r.holds {
                s = s.line("note: a nonsmooth objective entered through its hull estimate");
            }
            sections.push(s);
        }
        Command::Classify { point, xi, notion, .. } => {
            no_sdp(&pf)?;
            check_dim(p, point, "point")?;
            let xi = xi_of(&pf, xi)?;
            let f = p.is_feasible(point, tol.feasibility)?;
            if !f.feasible {
                return Err(Error::Infeasible(format!("point {point:?} is infeasible")));
            }
            let spec = oracle_of(&pf)?;
            let grid = FeasibleGrid::build(p, spec, tol.feasibility)?;
            let (s, _) = classify_section("classify", p, point, &xi, &grid, *notion, tol.oracle_slack)?;
            sections.push(s);
            let level = p.objective_values(point)?;
            let sec = bounded_section(p, &level, spec, tol.feasibility)?;
            let line = match &sec {
                SectionReport::Bounded { bound, .. } => format!("section at f(x) bounded below by {}", fmt_vec(bound)),
                SectionReport::Unbounded { .. } => "section at f(x) looks unbounded (infimum moves as the box grows)".into(),
                SectionReport::Empty => "section at f(x) has no grid points".into(),
            };
            sections.push(Section::new("section", Status::Info, &sec).line(line));
        }
        Command::Exists { xi, quasi, start, .. } => {
            no_sdp(&pf)?;
            let xi = xi_of(&pf, xi)?;
            let spec = oracle_of(&pf)?;
            let grid = FeasibleGrid::build(p, spec, tol.feasibility)?;
            let (result, notion) = if *quasi {
                let x0 = match start {
                    Some(s) => {
                        check_dim(p, s, "start point")?;
                        s.clone()
                    }
                    None => grid
                        .points
                        .first()
                        .cloned()
                        .ok_or_else(|| Error::invalid("the feasible grid is empty"))?,
                };
                (ekeland_quasi(p, &xi, &x0, &grid, tol.feasibility)?, Notion::XiQuasi)
            } else {
                (find_xi_pareto(p, &xi, &grid)?, Notion::XiPareto)
            };
            let check = classify_point(p, &result.point, &xi, &grid, 0.0)?;
            let holds = check.holds(notion);
            sections.push(
                Section::new("exists", holds_status(holds), &result)
                    .line(format!("{} point {} after {} moves", notion.name(), fmt_vec(&result.point), result.iterations))
                    .line(format!("f = {}", fmt_vec(&result.value)))
                    .line(format!("grid oracle confirms: {holds}")),
            );
            let front = xi_front(&grid, &xi);
            let mut header: Vec<String> = (1..=p.n()).map(|i| format!("x{i}")).collect();
            header.extend((1..=p.m()).map(|i| format!("f{i}")));
            table = Some(Table {
                header,
                rows: front
                    .iter()
                    .map(|&k| grid.points[k].iter().chain(&grid.values[k]).copied().collect())
                    .collect(),
            });
            sections.push(
                Section::new("front", Status::Info, &front)
                    .line(format!("{} grid points are not xi-dominated", front.len())),
            );
        }
        Command::Suffice { point, xi, mode, samples, .. } => {
            no_sdp(&pf)?;
            check_dim(p, point, "point")?;
            let xi = xi_of(&pf, xi)?;
            let pts = omega_samples(p, oracle_of(&pf)?, *samples, tol.feasibility);
            let r = sufficiency_verdict(p, point, &xi, *mode, &pts, &tol)?;
            let status = match r.verdict {
                SufficiencyVerdict::SatisfiedSampled => Status::Holds,
                SufficiencyVerdict::KktFails | SufficiencyVerdict::NotGeneralizedConvex => Status::Violated,
                SufficiencyVerdict::KktInconclusive => Status::Inconclusive,
            };
            sections.push(
                Section::new("sufficiency", status, &r)
                    .line(format!("verdict: {:?} on {} samples", r.verdict, pts.len()))
                    .line(format!("kkt residual {:e}", r.certificate.residual)),
            );
        }
        Command::Sdp { point, xi, lambda, multiplier, .. } => {
            let sd = pf
                .sdp
                .as_ref()
                .ok_or_else(|| Error::invalid("the problem file has no [sdp] block"))?;
            check_dim(p, point, "point")?;
            let xi = xi_of(&pf, xi)?;
            let c = sdp_check_kkt(p, sd, point, &xi, multiplier.as_deref(), lambda.as_deref(), &tol)?;
            let recomputed = sdp_witness_residual(sd, &c);
            let mut s = Section::new("sdp kkt", verdict_status(c.certificate.verdict), &c)
                .line(format!("residual {:e} (recomputed {:e})", c.certificate.residual, recomputed))
                .line(format!("multiplier {:?}", c.multiplier))
                .line(format!(
                    "min eigenvalue {:.3e}, complementarity {:.3e}",
                    c.multiplier_min_eigenvalue, c.complementarity
                ))
                .line(format!("lambda {}", fmt_vec(&c.certificate.lambda)));
            for n in &c.certificate.notes {
                s = s.line(format!("note: {n}"));
            }
            sections.push(s);
        }
        Command::Example { .. } => unreachable!(),
    }
    let mut report = Report::new(Some(pf.sha256.clone()), tol, overall(&sections), sections);
    report.table = table;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argument_parsers() {
        assert_eq!(parse_vector("-0.5, 1e-3").unwrap(), vec![-0.5, 1e-3]);
        assert!(parse_vector("1,,2").is_err());
        assert!(parse_vector("nan").is_err());
        assert_eq!(parse_matrix("1,0;0,1").unwrap(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(parse_mu("0:3=1.5").unwrap(), vec![(0, 3, 1.5)]);
        assert!(parse_mu("0=1").is_err());
        assert_eq!(parse_notion("xi-quasi").unwrap(), Notion::XiQuasi);
        assert!(parse_mode("strict").is_err());
    }
}
