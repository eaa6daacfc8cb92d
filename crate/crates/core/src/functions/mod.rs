//! Function representation: exact values, gradients on smooth pieces and
//! Clarke subdifferentials assembled from the sum, scaling and max rules.

pub mod atoms;
pub mod expr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use atoms::{Atom, CustomAtomRegistry};
pub use expr::Expr;

use crate::error::{Error, Result};

/// `conv(generators) ⊕ ball_radius · B` in ℝⁿ, Euclidean ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubdiffSet {
    pub generators: Vec<Vec<f64>>,
    pub ball_radius: f64,
}

impl SubdiffSet {
    pub fn new(generators: Vec<Vec<f64>>, ball_radius: f64) -> Result<Self> {
        if generators.is_empty() {
            return Err(Error::invalid("a subdifferential needs at least one generator"));
        }
        let n = generators[0].len();
        if generators.iter().any(|g| g.len() != n) {
            return Err(Error::invalid("generators of mixed dimension"));
        }
        if !(ball_radius >= 0.0) {
            return Err(Error::invalid("ball radius must be nonnegative"));
        }
        Ok(SubdiffSet {
            generators,
            ball_radius,
        })
    }

    pub fn singleton(v: Vec<f64>) -> Self {
        SubdiffSet {
            generators: vec![v],
            ball_radius: 0.0,
        }
    }

    /// The segment `[lo, hi]` in ℝ.
    pub fn interval(lo: f64, hi: f64) -> Self {
        let generators = if lo == hi { vec![vec![lo]] } else { vec![vec![lo], vec![hi]] };
        SubdiffSet {
            generators,
            ball_radius: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.generators[0].len()
    }

    /// `max ⟨v, d⟩ + r‖d‖`.
    pub fn support(&self, d: &[f64]) -> f64 {
        let best = self
            .generators
            .iter()
            .map(|v| dot(v, d))
            .fold(f64::NEG_INFINITY, f64::max);
        best + self.ball_radius * norm(d)
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut s = SubdiffSet {
            generators: self
                .generators
                .iter()
                .map(|v| v.iter().map(|x| c * x).collect())
                .collect(),
            ball_radius: c.abs() * self.ball_radius,
        };
        s.dedup();
        s
    }

    pub fn minkowski(&self, other: &Self) -> Self {
        let mut generators = Vec::with_capacity(self.generators.len() * other.generators.len());
        for a in &self.generators {
            for b in &other.generators {
                generators.push(a.iter().zip(b).map(|(p, q)| p + q).collect());
            }
        }
        let mut s = SubdiffSet {
            generators,
            ball_radius: self.ball_radius + other.ball_radius,
        };
        s.dedup();
        s
    }

    /// Drops exact duplicates, keeping first occurrences.
    pub fn dedup(&mut self) {
        let mut seen: Vec<Vec<f64>> = Vec::with_capacity(self.generators.len());
        for g in self.generators.drain(..) {
            if !seen.iter().any(|s| s == &g) {
                seen.push(g);
            }
        }
        self.generators = seen;
    }

    pub fn centroid(&self) -> Vec<f64> {
        let k = self.generators.len() as f64;
        let mut c = vec![0.0; self.dim()];
        for g in &self.generators {
            for (ci, gi) in c.iter_mut().zip(g) {
                *ci += gi / k;
            }
        }
        c
    }

    pub fn is_singleton(&self) -> bool {
        self.generators.len() == 1 && self.ball_radius == 0.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// An objective or constraint function with its source text.
#[derive(Debug, Clone)]
pub struct FuncExpr {
    source: String,
    expr: Expr,
    n_vars: usize,
    n_params: usize,
}

impl FuncExpr {
    pub fn parse(source: &str, n_vars: usize, registry: &CustomAtomRegistry) -> Result<Self> {
        let expr = expr::parse(source, n_vars, registry)?;
        Ok(Self::from_expr_with_source(expr, n_vars, source.trim().to_string()))
    }

    /// Wraps an already-built tree; validates the composition rules.
    pub fn from_expr(expr: Expr, n_vars: usize) -> Result<Self> {
        expr.validate()?;
        if expr.var_count() > n_vars {
            return Err(Error::Dimension {
                expected: n_vars,
                got: expr.var_count(),
                context: "variables referenced by expression",
            });
        }
        let source = expr.to_string();
        Ok(Self::from_expr_with_source(expr, n_vars, source))
    }

    fn from_expr_with_source(expr: Expr, n_vars: usize, source: String) -> Self {
        let n_params = expr.param_count();
        FuncExpr {
            source,
            expr,
            n_vars,
            n_params,
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn is_smooth(&self) -> bool {
        !self.expr.is_nonsmooth()
    }

    fn check(&self, x: &[f64], t: &[f64]) -> Result<()> {
        if x.len() != self.n_vars {
            return Err(Error::Dimension {
                expected: self.n_vars,
                got: x.len(),
                context: "point",
            });
        }
        if t.len() < self.n_params {
            return Err(Error::Dimension {
                expected: self.n_params,
                got: t.len(),
                context: "index parameters",
            });
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64], t: &[f64]) -> Result<f64> {
        self.check(x, t)?;
        self.expr.eval(x, t)
    }

    pub fn eval_grad(&self, x: &[f64], t: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check(x, t)?;
        self.expr.eval_grad(x, t)
    }

    /// Clarke subdifferential at `(x, t)` with Max-piece activity band
    /// `activity · (|max| + 1)`.
    pub fn clarke_subdiff(&self, x: &[f64], t: &[f64], activity: f64) -> Result<SubdiffSet> {
        self.check(x, t)?;
        subdiff(&self.expr, x, t, activity)
    }

    /// Support function of the Clarke subdifferential at `d`.
    pub fn dir_deriv_upper(&self, x: &[f64], t: &[f64], d: &[f64], activity: f64) -> Result<f64> {
        if d.len() != self.n_vars {
            return Err(Error::Dimension {
                expected: self.n_vars,
                got: d.len(),
                context: "direction",
            });
        }
        Ok(self.clarke_subdiff(x, t, activity)?.support(d))
    }
}

fn subdiff(e: &Expr, x: &[f64], t: &[f64], activity: f64) -> Result<SubdiffSet> {
    if !e.is_nonsmooth() {
        let (_, g) = e.eval_grad(x, t)?;
        return Ok(SubdiffSet::singleton(g));
    }
    match e {
        Expr::Neg(a) => Ok(subdiff(a, x, t, activity)?.scale(-1.0)),
        Expr::Add(a, b) => Ok(subdiff(a, x, t, activity)?.minkowski(&subdiff(b, x, t, activity)?)),
        Expr::Sub(a, b) => {
            Ok(subdiff(a, x, t, activity)?.minkowski(&subdiff(b, x, t, activity)?.scale(-1.0)))
        }
        Expr::Mul(a, b) => {
            let (set_side, coeff_side) = if a.is_nonsmooth() { (a, b) } else { (b, a) };
            let c = coeff_side.eval(x, t)?;
            Ok(subdiff(set_side, x, t, activity)?.scale(c))
        }
        Expr::Div(a, b) => {
            let den = b.eval(x, t)?;
            if den == 0.0 {
                return Err(Error::Domain {
                    node: e.to_string(),
                    message: "division by zero".into(),
                });
            }
            Ok(subdiff(a, x, t, activity)?.scale(1.0 / den))
        }
        Expr::Max(pieces) => {
            let mut evals = Vec::with_capacity(pieces.len());
            for p in pieces {
                evals.push(p.eval_grad(x, t)?);
            }
            let m = evals.iter().map(|(v, _)| *v).fold(f64::NEG_INFINITY, f64::max);
            let band = activity * (m.abs() + 1.0);
            let generators = evals
                .into_iter()
                .filter(|(v, _)| *v >= m - band)
                .map(|(_, g)| g)
                .collect();
            let mut s = SubdiffSet {
                generators,
                ball_radius: 0.0,
            };
            s.dedup();
            Ok(s)
        }
        Expr::Atom(atom, arg) => {
            let (y, g) = arg.eval_grad(x, t)?;
            let s = match atom.kink_interval(y) {
                Some((lo, hi)) => SubdiffSet {
                    generators: vec![
                        g.iter().map(|p| lo * p).collect(),
                        g.iter().map(|p| hi * p).collect(),
                    ],
                    ball_radius: 0.0,
                },
                None => {
                    let d = atom.derivative(y);
                    SubdiffSet::singleton(g.iter().map(|p| d * p).collect())
                }
            };
            let mut s = s;
            s.dedup();
            Ok(s)
        }
        Expr::Const(_) | Expr::Var(_) | Expr::Param(_) | Expr::Pow(..) | Expr::Call(..) => {
            unreachable!("smooth nodes handled above; validation rejects nonsmooth powers and calls")
        }
    }
}

/// Base-point radii and steps for the difference-quotient estimate.
#[derive(Debug, Clone)]
pub struct StepSchedule {
    /// `(radius, step)` pairs, coarse to fine; the finest level is reported.
    pub levels: Vec<(f64, f64)>,
    pub samples_per_level: usize,
    pub seed: u64,
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule {
            levels: vec![(1e-2, 1e-6), (1e-3, 1e-8), (1e-4, 1e-10)],
            samples_per_level: 4000,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericEstimate {
    pub value: f64,
    pub samples: usize,
}

/// Empirical limsup of `(φ(y + s d) − φ(y)) / s` over base points `y` near
/// `x` and small steps `s`. A testing oracle for [`FuncExpr::dir_deriv_upper`].
pub fn numeric_dirderiv(
    f: &FuncExpr,
    x: &[f64],
    t: &[f64],
    d: &[f64],
    schedule: &StepSchedule,
) -> Result<NumericEstimate> {
    f.check(x, t)?;
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut value = f64::NEG_INFINITY;
    let mut samples = 0;
    for &(radius, step) in &schedule.levels {
        let mut level_best = f64::NEG_INFINITY;
        let mut y = vec![0.0; x.len()];
        let mut y_step = vec![0.0; x.len()];
        for k in 0..schedule.samples_per_level {
            for i in 0..x.len() {
                let offset = if k == 0 { 0.0 } else { rng.gen_range(-radius..=radius) };
                y[i] = x[i] + offset;
                y_step[i] = y[i] + step * d[i];
            }
            if let (Ok(a), Ok(b)) = (f.eval(&y_step, t), f.eval(&y, t)) {
                level_best = level_best.max((a - b) / step);
                samples += 1;
            }
        }
        value = level_best;
    }
    Ok(NumericEstimate { value, samples })
}
