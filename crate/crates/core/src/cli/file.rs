//! The TOML problem file.
//!
//! ```toml
//! schema = 1
//! objectives = ["sqcosinv(x)", "0"]
//! xi = [0.1, 0.1]
//!
//! [space]
//! n = 1
//!
//! [[constraints]]
//! expr = "t*x"
//! index = { kind = "interval", lo = 1.0, hi = 2.0, points = 201 }
//!
//! [omega]
//! kind = "whole"
//!
//! [oracle]
//! lo = [-2.0]
//! hi = [0.0]
//! points = 10000
//! ```

use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};
use toml::Spanned;

use crate::conic::{scalarize_cone_problem, PolyCone, SdpData};
use crate::error::{Error, Result};
use crate::functions::{CustomAtomRegistry, FuncExpr};
use crate::oracle::GridSpec;
use crate::problem::{ConstraintBlock, IndexDomain, OmegaSet, Problem};
use crate::tolerances::Tolerances;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Raw {
    schema: Spanned<u32>,
    objectives: Vec<Spanned<String>>,
    #[serde(default)]
    xi: Option<Vec<f64>>,
    space: Space,
    #[serde(default)]
    constraints: Vec<RawConstraint>,
    #[serde(default)]
    omega: Option<OmegaSet>,
    #[serde(default)]
    cone: Option<Spanned<RawCone>>,
    #[serde(default)]
    sdp: Option<Spanned<RawSdp>>,
    #[serde(default)]
    oracle: Option<GridSpec>,
    #[serde(default)]
    tolerances: Option<Spanned<toml::Table>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Space {
    n: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstraint {
    expr: Spanned<String>,
    #[serde(default)]
    index: Option<RawIndex>,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawIndex {
    Single,
    Finite { points: Vec<Vec<f64>> },
    Interval { lo: f64, hi: f64, points: Option<usize> },
    Box { lo: Vec<f64>, hi: Vec<f64>, points: Option<usize> },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCone {
    generators: Vec<Vec<f64>>,
    /// Components of g, one expression per cone coordinate.
    mapping: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSdp {
    p: usize,
    /// F0, F1, …, Fn, each row-major p×p.
    matrices: Vec<Vec<f64>>,
}

/// A parsed, validated problem file.
#[derive(Debug, Clone)]
pub struct ProblemFile {
    pub sha256: String,
    pub problem: Problem,
    pub xi: Option<Vec<f64>>,
    pub cone: Option<PolyCone>,
    pub sdp: Option<SdpData>,
    pub oracle: Option<GridSpec>,
    pub tolerances: Tolerances,
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

fn at_line(src: &str, span: std::ops::Range<usize>, msg: impl std::fmt::Display) -> Error {
    Error::Schema(format!("line {}: {msg}", line_of(src, span.start)))
}

impl ProblemFile {
    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| Error::Schema(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&src)
    }

    /// Parses a problem file; tolerance defaults come from the environment
    /// and are overridden by the `[tolerances]` table.
    pub fn parse(src: &str) -> Result<Self> {
        Self::parse_with(src, Tolerances::from_env()?)
    }

    pub fn parse_with(src: &str, base: Tolerances) -> Result<Self> {
        let raw: Raw = toml::from_str(src).map_err(|e| match e.span() {
            Some(span) => at_line(src, span, e.message()),
            None => Error::Schema(e.message().to_string()),
        })?;
        if *raw.schema.get_ref() != SCHEMA_VERSION {
            return Err(at_line(
                src,
                raw.schema.span(),
                format!("unsupported schema {} (expected {SCHEMA_VERSION})", raw.schema.get_ref()),
            ));
        }
        let tolerances = match &raw.tolerances {
            None => base,
            Some(t) => {
                let toml::Value::Table(mut merged) = toml::Value::try_from(&base)
                    .map_err(|e| Error::Schema(format!("tolerances: {e}")))?
                else {
                    unreachable!("tolerances serialize to a table")
                };
                for (k, v) in t.get_ref() {
                    merged.insert(k.clone(), v.clone());
                }
                let tol: Tolerances = merged
                    .try_into()
                    .map_err(|e: toml::de::Error| at_line(src, t.span(), format!("[tolerances] {}", e.message())))?;
                tol.validate().map_err(|e| at_line(src, t.span(), e))?;
                tol
            }
        };
        let n = raw.space.n;
        let registry = CustomAtomRegistry::default();
        let expr = |s: &Spanned<String>| {
            FuncExpr::parse(s.get_ref(), n, &registry).map_err(|e| at_line(src, s.span(), format!("`{}`: {e}", s.get_ref())))
        };
        let objectives = raw.objectives.iter().map(expr).collect::<Result<Vec<_>>>()?;
        let omega = raw.omega.clone().unwrap_or(OmegaSet::Whole);
        let mut constraints = Vec::with_capacity(raw.constraints.len());
        for c in &raw.constraints {
            let points = tolerances.index_points;
            let domain = match c.index.as_ref().unwrap_or(&RawIndex::Single) {
                RawIndex::Single => IndexDomain::single(),
                RawIndex::Finite { points } => IndexDomain::Finite { points: points.clone() },
                RawIndex::Interval { lo, hi, points: k } => IndexDomain::Interval {
                    lo: *lo,
                    hi: *hi,
                    points: k.unwrap_or(points),
                },
                RawIndex::Box { lo, hi, points: k } => IndexDomain::Box {
                    lo: lo.clone(),
                    hi: hi.clone(),
                    points: k.unwrap_or(points),
                },
            };
            domain.validate().map_err(|e| at_line(src, c.expr.span(), e))?;
            constraints.push(ConstraintBlock { expr: expr(&c.expr)?, domain });
        }

        let mut cone = None;
        let problem = if let Some(rc) = &raw.cone {
            if !constraints.is_empty() {
                return Err(at_line(src, rc.span(), "[cone] cannot be combined with [[constraints]]"));
            }
            let c = rc.get_ref();
            let q = c.mapping.len();
            let k = PolyCone::new(q, c.generators.clone()).map_err(|e| at_line(src, rc.span(), e))?;
            let mapping = c
                .mapping
                .iter()
                .map(|s| FuncExpr::parse(s, n, &registry).map_err(|e| at_line(src, rc.span(), format!("`{s}`: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            let p = scalarize_cone_problem(n, objectives, &mapping, &k, omega).map_err(|e| at_line(src, rc.span(), e))?;
            cone = Some(k);
            p
        } else {
            Problem::new(n, objectives, constraints, omega).map_err(|e| Error::Schema(e.to_string()))?
        };
        let sdp = match &raw.sdp {
            None => None,
            Some(s) => {
                if !problem.constraints().is_empty() {
                    return Err(at_line(src, s.span(), "[sdp] cannot be combined with other constraints"));
                }
                let d = SdpData::new(s.get_ref().p, s.get_ref().matrices.clone()).map_err(|e| at_line(src, s.span(), e))?;
                if d.n() != n {
                    return Err(at_line(
                        src,
                        s.span(),
                        format!("[sdp] needs n + 1 = {} matrices, got {}", n + 1, d.n() + 1),
                    ));
                }
                Some(d)
            }
        };
        if let Some(g) = &raw.oracle {
            g.validate(n).map_err(|e| Error::Schema(format!("[oracle] {e}")))?;
        }
        if let Some(xi) = &raw.xi {
            if xi.len() != problem.m() {
                return Err(Error::Schema(format!(
                    "xi has {} entries for {} objectives",
                    xi.len(),
                    problem.m()
                )));
            }
        }
        Ok(ProblemFile {
            sha256: hex::encode(Sha256::digest(src.as_bytes())),
            problem,
            xi: raw.xi,
            cone,
            sdp,
            oracle: raw.oracle,
            tolerances,
        })
    }
}
