//! Cone-constrained problems: polyhedral `g(x) ∈ −K` through the extreme
//! rays of K⁺, and affine semidefinite constraints
//! `g(x) = F₀ + Σ x_i F_i ⪯ 0` with a PSD multiplier Λ.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::certificates::{
    check_xi, objective_subdiffs, require_feasible, verdict_of, witness_residual, Certificate, CheckMode, Inclusion,
    Verdict,
};
use crate::convexsets::lp::{maximize, LpOutcome};
use crate::convexsets::{residual_min, Pool, ResidualSolution};
use crate::error::{Error, Result};
use crate::functions::{dot, norm, Expr, FuncExpr};
use crate::problem::{ConstraintBlock, IndexDomain, MultiplierMu, OmegaSet, Problem};
use crate::tolerances::Tolerances;

/// Largest cone dimension handled by the dual enumeration.
pub const MAX_CONE_DIM: usize = 6;
const MAX_SUBSETS: usize = 1_000_000;

/// A polyhedral cone `K = cone{k_1, …, k_r} ⊂ ℝ^q` with the unit extreme
/// rays of its positive polar K⁺.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolyCone {
    q: usize,
    generators: Vec<Vec<f64>>,
    dual: Vec<Vec<f64>>,
}

fn eigen(a: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let e = SymmetricEigen::new(a);
    // ascending eigenvalues, columns reordered to match
    let mut order: Vec<usize> = (0..e.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| e.eigenvalues[i].total_cmp(&e.eigenvalues[j]));
    let vals = order.iter().map(|&i| e.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(e.eigenvectors.nrows(), order.len(), |r, c| e.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    v.iter().map(|x| x / n).collect()
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Calls `f` on every `k`-subset of `0..n` in lexicographic order.
fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    if k > n {
        return;
    }
    loop {
        f(&idx);
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

impl PolyCone {
    /// Builds the cone and enumerates K⁺: the orthogonal complement of
    /// span K (both signs of a basis) plus, inside span K, every direction
    /// orthogonal to r−1 independent generators that is nonnegative on all
    /// of them.
    pub fn new(q: usize, generators: Vec<Vec<f64>>) -> Result<Self> {
        if q == 0 {
            return Err(Error::invalid("cone dimension must be positive"));
        }
        if q > MAX_CONE_DIM {
            return Err(Error::ConeDimension { q, max: MAX_CONE_DIM });
        }
        if let Some(g) = generators.iter().find(|g| g.len() != q) {
            return Err(Error::Dimension {
                expected: q,
                got: g.len(),
                context: "cone generator",
            });
        }
        if generators.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("cone generators must be finite"));
        }
        let gens: Vec<Vec<f64>> = generators.iter().filter(|g| norm(g) > 0.0).cloned().collect();
        let k = gens.len();
        let gram = DMatrix::from_fn(q, q, |i, j| gens.iter().map(|g| g[i] * g[j]).sum::<f64>());
        let (vals, vecs) = eigen(gram);
        let top = vals.last().copied().unwrap_or(0.0).max(0.0);
        let eps = 1e-10 * top.max(f64::MIN_POSITIVE);
        let span: Vec<Vec<f64>> = (0..q)
            .filter(|&c| vals[c] > eps)
            .map(|c| vecs.column(c).iter().copied().collect())
            .collect();
        let perp: Vec<Vec<f64>> = (0..q)
            .filter(|&c| vals[c] <= eps)
            .map(|c| vecs.column(c).iter().copied().collect())
            .collect();
        let r = span.len();

        let mut dual: Vec<Vec<f64>> = Vec::new();
        let push = |s: Vec<f64>, dual: &mut Vec<Vec<f64>>| {
            let s = unit(&s);
            if !dual.iter().any(|d| d.iter().zip(&s).all(|(a, b)| (a - b).abs() < 1e-9)) {
                dual.push(s);
            }
        };
        for b in &perp {
            push(b.clone(), &mut dual);
            push(b.iter().map(|v| -v).collect(), &mut dual);
        }
        if r > 0 {
            if binomial(k, r - 1) > MAX_SUBSETS {
                return Err(Error::invalid(format!(
                    "too many generator subsets ({k} choose {}) for dual enumeration",
                    r - 1
                )));
            }
            // generators in coordinates of the span basis
            let coords: Vec<Vec<f64>> = gens.iter().map(|g| span.iter().map(|b| dot(b, g)).collect()).collect();
            let scale = coords.iter().map(|c| norm(c)).fold(0.0, f64::max);
            let tol = 1e-10 * scale;
            for_each_subset(k, r - 1, |subset| {
                let c = if r == 1 {
                    vec![1.0]
                } else {
                    let m = DMatrix::from_fn(r, r, |i, j| subset.iter().map(|&s| coords[s][i] * coords[s][j]).sum());
                    let (ev, evecs) = eigen(m);
                    if ev[1] <= 1e-10 * scale * scale {
                        return;
                    }
                    evecs.column(0).iter().copied().collect()
                };
                let c = unit(&c);
                let ips: Vec<f64> = coords.iter().map(|g| dot(g, &c)).collect();
                let sign = if ips.iter().all(|v| *v >= -tol) {
                    1.0
                } else if ips.iter().all(|v| *v <= tol) {
                    -1.0
                } else {
                    return;
                };
                let s: Vec<f64> = (0..q)
                    .map(|i| sign * span.iter().zip(&c).map(|(b, cj)| b[i] * cj).sum::<f64>())
                    .collect();
                push(s, &mut dual);
            });
        }
        // clean round-off so e.g. orthant duals are exact unit vectors
        for s in &mut dual {
            for v in s.iter_mut() {
                if v.abs() < 1e-14 {
                    *v = 0.0;
                }
            }
            *s = unit(s);
        }
        dual.sort_by(|a, b| {
            b.iter()
                .zip(a)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        Ok(PolyCone { q, generators, dual })
    }

    /// The nonnegative orthant ℝ^q₊.
    pub fn orthant(q: usize) -> Result<Self> {
        Self::new(q, (0..q).map(|i| (0..q).map(|j| f64::from(u8::from(i == j))).collect()).collect())
    }

    pub fn dim(&self) -> usize {
        self.q
    }

    pub fn generators(&self) -> &[Vec<f64>] {
        &self.generators
    }

    /// Unit extreme rays of K⁺ (with both signs of its lineality basis).
    pub fn dual_generators(&self) -> &[Vec<f64>] {
        &self.dual
    }

    /// `y ∈ K`, decided by the LP `y = Σ a_k k_k`, `a ≥ 0` (with slack).
    pub fn contains(&self, y: &[f64], tol: f64) -> bool {
        let r = self.generators.len();
        if r == 0 {
            return norm(y) <= tol;
        }
        let mut a = Vec::with_capacity(2 * self.q);
        let mut b = Vec::with_capacity(2 * self.q);
        for i in 0..self.q {
            a.push(self.generators.iter().map(|g| g[i]).collect::<Vec<_>>());
            b.push(y[i] + tol);
            a.push(self.generators.iter().map(|g| -g[i]).collect());
            b.push(-y[i] + tol);
        }
        matches!(maximize(&vec![0.0; r], &a, &b), LpOutcome::Optimal { .. })
    }

    /// `⟨s, k⟩ ≥ −tol` for every generator `k`.
    pub fn dual_contains(&self, s: &[f64], tol: f64) -> bool {
        self.generators.iter().all(|k| dot(s, k) >= -tol)
    }
}

/// `g(x) ∈ −K` rewritten as `⟨s, g(x)⟩ ≤ 0` over the dual generators `s`.
/// The result has a single constraint block whose finite index set is the
/// list of dual generators (parameters `t1..tq`).
pub fn scalarize_cone_problem(
    n: usize,
    objectives: Vec<FuncExpr>,
    mapping: &[FuncExpr],
    cone: &PolyCone,
    omega: OmegaSet,
) -> Result<Problem> {
    if mapping.len() != cone.dim() {
        return Err(Error::Dimension {
            expected: cone.dim(),
            got: mapping.len(),
            context: "cone mapping components",
        });
    }
    if let Some(g) = mapping.iter().find(|g| g.n_params() > 0) {
        return Err(Error::invalid(format!("cone mapping `{}` references index parameters", g.source())));
    }
    if cone.dual_generators().is_empty() {
        // K = ℝ^q: the constraint is vacuous
        return Problem::new(n, objectives, vec![], omega);
    }
    let expr = mapping
        .iter()
        .enumerate()
        .map(|(j, g)| Expr::mul(Expr::param(j), g.expr().clone()))
        .reduce(Expr::add)
        .expect("cone dimension is positive");
    let constraint = ConstraintBlock {
        expr: FuncExpr::from_expr(expr, n)?,
        domain: IndexDomain::Finite {
            points: cone.dual_generators().to_vec(),
        },
    };
    Problem::new(n, objectives, vec![constraint], omega)
}

/// `ζ = Σ μ_s s` from multipliers on the scalarized cone constraint, with
/// the check `⟨ζ, k⟩ ≥ 0` on every generator of K.
pub fn recover_zeta(mu: &MultiplierMu, cone: &PolyCone) -> Result<Vec<f64>> {
    let mut zeta = vec![0.0; cone.dim()];
    for e in &mu.entries {
        let s = cone
            .dual_generators()
            .get(e.index)
            .filter(|s| e.block == 0 && e.t.len() == s.len() && e.t.iter().zip(*s).all(|(a, b)| (a - b).abs() <= 1e-12))
            .ok_or_else(|| {
                Error::invalid(format!(
                    "multiplier key (block {}, t = {:?}) is not a dual generator",
                    e.block, e.t
                ))
            })?;
        for (z, v) in zeta.iter_mut().zip(s) {
            *z += e.weight * v;
        }
    }
    let scale = 1.0 + norm(&zeta);
    if !cone.dual_contains(&zeta, 1e-12 * scale) {
        return Err(Error::invalid("recovered multiplier is not in the dual cone"));
    }
    Ok(zeta)
}

/// Affine matrix constraint `g(x) = F₀ + Σ_i x_i F_i`, matrices row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SdpData {
    p: usize,
    matrices: Vec<Vec<f64>>,
}

impl SdpData {
    pub fn new(p: usize, matrices: Vec<Vec<f64>>) -> Result<Self> {
        if p == 0 {
            return Err(Error::invalid("matrix size p must be positive"));
        }
        if matrices.is_empty() {
            return Err(Error::invalid("at least F0 is required"));
        }
        for (k, f) in matrices.iter().enumerate() {
            if f.len() != p * p {
                return Err(Error::Dimension {
                    expected: p * p,
                    got: f.len(),
                    context: "sdp matrix entries",
                });
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("F{k} has non-finite entries")));
            }
            for i in 0..p {
                for j in 0..i {
                    if (f[i * p + j] - f[j * p + i]).abs() > 1e-12 {
                        return Err(Error::invalid(format!("F{k} is not symmetric at ({}, {})", i + 1, j + 1)));
                    }
                }
            }
        }
        Ok(SdpData { p, matrices })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Number of variables.
    pub fn n(&self) -> usize {
        self.matrices.len() - 1
    }

    fn matrix(&self, k: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.p, self.p, &self.matrices[k])
    }

    pub fn g(&self, x: &[f64]) -> DMatrix<f64> {
        let mut g = self.matrix(0);
        for (i, xi) in x.iter().enumerate() {
            g += self.matrix(i + 1) * *xi;
        }
        g
    }

    /// `(Λ • F₁, …, Λ • F_n)`.
    pub fn gradient(&self, lambda: &DMatrix<f64>) -> Vec<f64> {
        (1..self.matrices.len()).map(|i| lambda.dot(&self.matrix(i))).collect()
    }
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    eigen(m.clone()).0.last().copied().unwrap_or(0.0)
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    eigen(m.clone()).0.first().copied().unwrap_or(0.0)
}

fn project_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let (vals, vecs) = eigen(sym);
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        vals.len(),
        vals.iter().map(|v| v.max(0.0)),
    ));
    &vecs * d * vecs.transpose()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SdpCertificate {
    pub certificate: Certificate,
    /// Λ, row by row.
    pub multiplier: Vec<Vec<f64>>,
    /// `Λ • F`, the constraint term of the inclusion.
    pub multiplier_gradient: Vec<f64>,
    pub multiplier_min_eigenvalue: f64,
    pub constraint_max_eigenvalue: f64,
    /// `Λ • g(x̄)`.
    pub complementarity: f64,
    pub outer_iterations: usize,
}

const OUTER_ITERS: usize = 3000;

struct Search<'a> {
    p: &'a Problem,
    x: &'a [f64],
    xi: &'a [f64],
    lambda: Option<&'a [f64]>,
    tol: &'a Tolerances,
}

impl Search<'_> {
    fn inclusion(&self, offset: Vec<f64>) -> Result<Inclusion> {
        Ok(Inclusion {
            objectives: objective_subdiffs(self.p, self.x, self.tol)?,
            xi: self.xi.to_vec(),
            lambda: self.lambda.map(<[f64]>::to_vec),
            carriers: None,
            constraints: vec![],
            normal: self.p.tangent_cone(self.x, self.tol.feasibility),
            offset,
            ball_fixed: 0.0,
        })
    }

    fn solve(&self, offset: Vec<f64>) -> Result<(Inclusion, ResidualSolution)> {
        let inc = self.inclusion(offset)?;
        let sol = residual_min(&inc.to_sum(self.p.n()), self.tol.kkt, self.tol.max_iter)?;
        Ok((inc, sol))
    }
}

/// Checks `0 ∈ Σλ_i ∂f_i(x̄) + Λ•F + (Σλ_iξ_i)·B + N(x̄; Ω)` with
/// `Λ ⪰ 0`, `Λ • g(x̄) = 0`. `p` supplies the objectives and Ω and must have
/// no other constraints.
///
/// A supplied Λ is verified as given. Otherwise Λ is searched on the
/// eigenspace of `g(x̄)` for eigenvalue 0 (which makes complementarity
/// exact): warm start from the rank-one directions `vvᵀ` of a few `v`, then
/// accelerated projected gradient on ½·residual² with PSD projection, the
/// inner problem re-solved for every iterate.
pub fn sdp_check_kkt(
    p: &Problem,
    sd: &SdpData,
    x: &[f64],
    xi: &[f64],
    multiplier: Option<&[Vec<f64>]>,
    lambda: Option<&[f64]>,
    tol: &Tolerances,
) -> Result<SdpCertificate> {
    if !p.constraints().is_empty() {
        return Err(Error::invalid("the semidefinite check takes a problem without other constraints"));
    }
    if sd.n() != p.n() {
        return Err(Error::Dimension {
            expected: p.n(),
            got: sd.n(),
            context: "sdp matrices F1..Fn",
        });
    }
    check_xi(p, xi)?;
    require_feasible(p, x, tol)?;
    if let Some(l) = lambda {
        if l.len() != p.m() || l.iter().any(|v| !(*v >= 0.0)) || (l.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("lambda must be a probability vector with one entry per objective"));
        }
    }
    let g = sd.g(x);
    let g_max = max_eigenvalue(&g);
    if g_max > tol.feasibility {
        return Err(Error::Infeasible(format!(
            "g(x) has eigenvalue {g_max:e} > 0 at {x:?}"
        )));
    }
    let search = Search { p, x, xi, lambda, tol };
    let mut notes = Vec::new();
    let n = p.n();
    let pp = sd.p();

    let (big_lambda, outer, converged_outer, global_lb) = match multiplier {
        Some(rows) => {
            if rows.len() != pp || rows.iter().any(|r| r.len() != pp) {
                return Err(Error::Dimension {
                    expected: pp,
                    got: rows.len(),
                    context: "multiplier matrix",
                });
            }
            let m = DMatrix::from_fn(pp, pp, |i, j| rows[i][j]);
            if (0..pp).any(|i| (0..i).any(|j| (m[(i, j)] - m[(j, i)]).abs() > 1e-12)) {
                return Err(Error::invalid("multiplier matrix is not symmetric"));
            }
            (m, 0, true, None)
        }
        None => {
            let (vals, vecs) = eigen(g.clone());
            let band = tol.activity_band(0.0);
            let active: Vec<usize> = (0..pp).filter(|&c| vals[c] >= -band).collect();
            let a = active.len();
            let u = DMatrix::from_fn(pp, a, |r, c| vecs[(r, active[c])]);
            let fs: Vec<DMatrix<f64>> = (1..=n).map(|i| u.transpose() * sd.matrix(i) * &u).collect();
            let lift = |m: &DMatrix<f64>| &u * m * u.transpose();
            let image = |m: &DMatrix<f64>| fs.iter().map(|f| m.dot(f)).collect::<Vec<f64>>();
            let lip: f64 = fs.iter().map(|f| f.norm_squared()).sum();
            if a == 0 || lip == 0.0 {
                if a == 0 {
                    notes.push("constraint inactive: complementarity forces the multiplier to zero".into());
                }
                (DMatrix::zeros(pp, pp), 0, true, None)
            } else {
                // warm start on rank-one directions
                let mut dirs: Vec<nalgebra::DVector<f64>> = Vec::new();
                for i in 0..a {
                    dirs.push(nalgebra::DVector::from_fn(a, |r, _| f64::from(u8::from(r == i))));
                    for j in 0..i {
                        for s in [1.0, -1.0] {
                            dirs.push(nalgebra::DVector::from_fn(a, |r, _| {
                                (f64::from(u8::from(r == i)) + s * f64::from(u8::from(r == j))) / 2f64.sqrt()
                            }));
                        }
                    }
                }
                let rank_one: Vec<DMatrix<f64>> = dirs.iter().map(|v| v * v.transpose()).collect();
                let inc = search.inclusion(vec![0.0; n])?;
                let mut sum = inc.to_sum(n);
                let block = sum.blocks().len();
                sum.add_block("multiplier", rank_one.iter().map(&image).collect(), 0.0, Pool::Free);
                let warm = residual_min(&sum, tol.kkt, tol.max_iter)?;
                let mut m0 = DMatrix::zeros(a, a);
                for (w, r1) in warm.blocks[block].weights.iter().zip(&rank_one) {
                    m0 += r1 * *w;
                }

                // accelerated projected gradient with restart
                let mut best = (f64::INFINITY, m0.clone(), None::<f64>);
                let mut m_prev = m0.clone();
                let mut y = m0;
                let mut theta = 1.0f64;
                let mut prev_val = f64::INFINITY;
                let mut converged = false;
                let mut iters = 0;
                for k in 0..OUTER_ITERS {
                    iters = k + 1;
                    let (_, sol) = search.solve(image(&y))?;
                    let grad_o = &sol.point;
                    let grad = fs.iter().zip(grad_o).fold(DMatrix::zeros(a, a), |acc, (f, gi)| acc + f * *gi);
                    // dual bound over all Λ ⪰ 0 along u = s/‖s‖
                    let lb = sol.lower_bound.and_then(|lb| {
                        let ns = norm(&sol.sum);
                        if ns == 0.0 || lb <= 0.0 {
                            return Some(lb.max(0.0));
                        }
                        let un: Vec<f64> = sol.sum.iter().map(|v| v / ns).collect();
                        let adj = fs.iter().zip(&un).fold(DMatrix::zeros(a, a), |acc, (f, ui)| acc + f * *ui);
                        (min_eigenvalue(&adj) >= -1e-12 * (1.0 + adj.norm()))
                            .then(|| (lb - dot(&un, &image(&y))).max(0.0))
                    });
                    if sol.residual < best.0 {
                        best = (sol.residual, y.clone(), lb);
                    } else if lb.is_some_and(|l| best.2.is_none_or(|b| l > b)) {
                        best.2 = lb;
                    }
                    if sol.residual <= tol.kkt / 100.0 || best.2.is_some_and(|l| l >= best.0 - 1e-12) {
                        converged = true;
                        break;
                    }
                    let m_next = project_psd(&(&y - grad * (1.0 / lip)));
                    let step = (&m_next - &y).norm();
                    if step <= 1e-13 * (1.0 + y.norm()) && sol.converged {
                        converged = true;
                        break;
                    }
                    let val = sol.residual;
                    if val > prev_val {
                        theta = 1.0;
                        y = m_prev.clone();
                        prev_val = f64::INFINITY;
                        continue;
                    }
                    prev_val = val;
                    let theta_next = (1.0 + (1.0 + 4.0 * theta * theta).sqrt()) / 2.0;
                    y = &m_next + (&m_next - &m_prev) * ((theta - 1.0) / theta_next);
                    y = project_psd(&y);
                    m_prev = m_next;
                    theta = theta_next;
                }
                if !converged {
                    notes.push(format!("multiplier search stopped after {iters} iterations"));
                }
                (lift(&best.1), iters, converged, best.2)
            }
        }
    };

    let grad = sd.gradient(&big_lambda);
    let (inc, sol) = search.solve(grad.clone())?;
    let w = inc.witnesses(&sol);
    let residual = witness_residual(&inc.offset, &w.lambda, &w.zs, &w.mu, &w.xs, &w.ball, &w.normal);
    let min_eig = min_eigenvalue(&big_lambda);
    let complementarity = big_lambda.dot(&g);
    let mut verdict = match multiplier {
        Some(_) => verdict_of(residual, &sol, tol.kkt),
        None => {
            if residual <= tol.kkt {
                Verdict::Certified
            } else if global_lb.is_some_and(|lb| lb > tol.kkt) || (converged_outer && sol.converged) {
                Verdict::Refuted
            } else {
                Verdict::Inconclusive
            }
        }
    };
    if min_eig < -1e-10 {
        notes.push(format!("multiplier has negative eigenvalue {min_eig:e}"));
        verdict = Verdict::Refuted;
    }
    if complementarity.abs() > tol.complementarity {
        notes.push(format!("multiplier complementarity {complementarity:e} exceeds tolerance"));
        if verdict == Verdict::Certified {
            verdict = Verdict::Refuted;
        }
    }
    let mode = if multiplier.is_some() || lambda.is_some() {
        CheckMode::Verify
    } else {
        CheckMode::Search
    };
    let certificate = Certificate {
        anchor: x.to_vec(),
        xi: xi.to_vec(),
        mode,
        exact: xi.iter().all(|v| *v == 0.0),
        lambda: w.lambda,
        mu: w.mu,
        objective_subgradients: w.zs,
        constraint_subgradients: w.xs,
        ball: w.ball,
        ball_radius: w.ball_radius,
        normal: w.normal,
        residual,
        lower_bound: if multiplier.is_some() { sol.lower_bound } else { global_lb },
        converged: converged_outer && sol.converged,
        verdict,
        notes,
    };
    Ok(SdpCertificate {
        certificate,
        multiplier: to_rows(&big_lambda),
        multiplier_gradient: grad,
        multiplier_min_eigenvalue: min_eig,
        constraint_max_eigenvalue: g_max,
        complementarity,
        outer_iterations: outer,
    })
}

/// Residual of an SDP certificate recomputed from Λ and the witnesses.
pub fn sdp_witness_residual(sd: &SdpData, cert: &SdpCertificate) -> f64 {
    let pp = sd.p();
    let m = DMatrix::from_fn(pp, pp, |i, j| cert.multiplier[i][j]);
    let c = &cert.certificate;
    witness_residual(
        &sd.gradient(&m),
        &c.lambda,
        &c.objective_subgradients,
        &c.mu,
        &c.constraint_subgradients,
        &c.ball,
        &c.normal,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certificates::check_kkt;
    use crate::certificates::testing::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn orthant_is_self_dual() {
        let k = PolyCone::orthant(2).unwrap();
        assert_eq!(k.dual_generators(), &[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let p = scalarize_cone_problem(2, vec![fe("x1 + x2", 2)], &[fe("x1", 2), fe("x2", 2)], &k, OmegaSet::Whole)
            .unwrap();
        assert_eq!(p.index_points().len(), 2);
        assert_eq!(p.constraint_values(&[0.5, -2.0]).unwrap(), vec![0.5, -2.0]);
    }

    #[test]
    fn norm_cone_duals() {
        let k = PolyCone::new(2, vec![vec![1.0, 1.0], vec![-1.0, 1.0]]).unwrap();
        let d = k.dual_generators();
        assert_eq!(d.len(), 2);
        for (s, sign) in d.iter().zip([1.0, -1.0]) {
            assert!((s[0] - sign * FRAC_1_SQRT_2).abs() < 1e-12 && (s[1] - FRAC_1_SQRT_2).abs() < 1e-12, "{s:?}");
        }
    }

    #[test]
    fn degenerate_cone_has_lineality_in_dual() {
        let k = PolyCone::new(2, vec![vec![0.0, 1.0]]).unwrap();
        assert_eq!(k.dual_generators(), &[vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0]]);
        let zero = PolyCone::new(2, vec![]).unwrap();
        assert_eq!(zero.dual_generators().len(), 4);
        assert!(matches!(
            PolyCone::orthant(7),
            Err(Error::ConeDimension { q: 7, max: 6 })
        ));
    }

    #[test]
    fn zeta_recovery() {
        let k = PolyCone::orthant(2).unwrap();
        let p = scalarize_cone_problem(1, vec![fe("x", 1)], &[fe("x", 1), fe("-x", 1)], &k, OmegaSet::Whole).unwrap();
        let ip = p.index_points()[0].clone();
        let mu = MultiplierMu::from_pairs([(ip, 2.0)]).unwrap();
        assert_eq!(recover_zeta(&mu, &k).unwrap(), vec![2.0, 0.0]);
        assert_eq!(recover_zeta(&MultiplierMu::zero(), &k).unwrap(), vec![0.0, 0.0]);

        let k = PolyCone::new(2, vec![vec![1.0, 1.0], vec![-1.0, 1.0]]).unwrap();
        let p = scalarize_cone_problem(1, vec![fe("x", 1)], &[fe("x", 1), fe("x", 1)], &k, OmegaSet::Whole).unwrap();
        let mu = MultiplierMu::from_pairs(p.index_points().iter().map(|ip| (ip.clone(), 1.0))).unwrap();
        let z = recover_zeta(&mu, &k).unwrap();
        assert!(z[0].abs() < 1e-15 && (z[1] - 2f64.sqrt()).abs() < 1e-12);

        let mut bad = mu.clone();
        bad.entries[0].index = 5;
        assert!(recover_zeta(&bad, &k).is_err());
    }

    fn sdp_1d(objective: &str) -> (Problem, SdpData) {
        let p = problem(1, &[objective, objective], &[], OmegaSet::Whole);
        (p, SdpData::new(1, vec![vec![0.0], vec![1.0]]).unwrap())
    }

    #[test]
    fn scalar_sdp_refuted_at_residual_point_nine() {
        let (p, sd) = sdp_1d("x");
        let c = sdp_check_kkt(&p, &sd, &[0.0], &[0.1, 0.1], None, None, &tol()).unwrap();
        assert_eq!(c.certificate.verdict, Verdict::Refuted);
        assert!((c.certificate.residual - 0.9).abs() < 1e-12, "{}", c.certificate.residual);
        assert_eq!(c.multiplier, vec![vec![0.0]]);
    }

    #[test]
    fn scalar_sdp_certified() {
        let (p, sd) = sdp_1d("-x");
        let c = sdp_check_kkt(&p, &sd, &[0.0], &[0.1, 0.1], None, None, &tol()).unwrap();
        assert_eq!(c.certificate.verdict, Verdict::Certified);
        assert!(c.certificate.residual <= 1e-12);
        assert!(c.multiplier_min_eigenvalue >= -1e-10);
        assert!((sdp_witness_residual(&sd, &c) - c.certificate.residual).abs() <= 1e-10);
        // the hand multiplier Λ = [1]
        let v = sdp_check_kkt(&p, &sd, &[0.0], &[0.1, 0.1], Some(&[vec![1.0]]), None, &tol()).unwrap();
        assert_eq!(v.certificate.verdict, Verdict::Certified);
        assert_eq!(v.certificate.residual, 0.0);
        let neg = sdp_check_kkt(&p, &sd, &[0.0], &[0.1, 0.1], Some(&[vec![-1.0]]), None, &tol()).unwrap();
        assert_eq!(neg.certificate.verdict, Verdict::Refuted);
    }

    #[test]
    fn inactive_constraint_forces_zero() {
        let p = problem(1, &["-x", "-x"], &[], OmegaSet::Whole);
        let sd = SdpData::new(1, vec![vec![-1.0], vec![1.0]]).unwrap();
        let c = sdp_check_kkt(&p, &sd, &[0.0], &[0.1, 0.1], None, None, &tol()).unwrap();
        assert_eq!(c.multiplier, vec![vec![0.0]]);
        assert_eq!(c.certificate.verdict, Verdict::Refuted);
        assert!((c.certificate.residual - 0.9).abs() < 1e-12);
        // complementarity rejects a supplied nonzero multiplier
        let v = sdp_check_kkt(&p, &sd, &[0.0], &[0.1, 0.1], Some(&[vec![1.0]]), None, &tol()).unwrap();
        assert_eq!(v.certificate.verdict, Verdict::Refuted);
    }

    #[test]
    fn sdp_input_errors() {
        assert!(SdpData::new(2, vec![vec![0.0, 1.0, 0.5, 0.0]]).is_err());
        let (p, sd) = sdp_1d("x");
        assert!(matches!(
            sdp_check_kkt(&p, &sd, &[1.0], &[0.1, 0.1], None, None, &tol()),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn off_diagonal_psd_multiplier() {
        // g(x) = [[0, x], [x, 0]] − ... forces a rank-one Λ with off-diagonal mass
        let p = problem(1, &["-x", "-x"], &[], OmegaSet::Whole);
        let sd = SdpData::new(2, vec![vec![0.0; 4], vec![0.0, 1.0, 1.0, 0.0]]).unwrap();
        // g(x) is indefinite for x ≠ 0, so x̄ = 0 is the only feasible point
        let c = sdp_check_kkt(&p, &sd, &[0.0], &[0.0, 0.0], None, None, &tol()).unwrap();
        assert_eq!(c.certificate.verdict, Verdict::Certified, "{:?}", c.certificate);
        assert!(c.multiplier_min_eigenvalue >= -1e-10);
        assert!((c.multiplier_gradient[0] - 1.0).abs() <= 1e-8);
    }

    fn diag_instance(f: &[[f64; 2]; 2], x: [f64; 2], slack: [f64; 2]) -> SdpData {
        let f0: Vec<f64> = (0..2).map(|j| -(f[0][j] * x[0] + f[1][j] * x[1]) - slack[j]).collect();
        let diag = |d: &[f64]| vec![d[0], 0.0, 0.0, d[1]];
        SdpData::new(2, vec![diag(&f0), diag(&f[0]), diag(&f[1])]).unwrap()
    }

    fn scalar_equivalent(objectives: &[String], sd: &SdpData) -> Problem {
        let rows: Vec<Vec<f64>> = (0..3).map(|k| sd.matrices[k].clone()).collect();
        let cons: Vec<(String, IndexDomain)> = (0..2)
            .map(|j| {
                let d = j * 2 + j;
                (format!("({}) + ({})*x1 + ({})*x2", rows[0][d], rows[1][d], rows[2][d]), IndexDomain::single())
            })
            .collect();
        let obj: Vec<&str> = objectives.iter().map(String::as_str).collect();
        let cons: Vec<(&str, IndexDomain)> = cons.iter().map(|(s, d)| (s.as_str(), d.clone())).collect();
        problem(2, &obj, &cons, OmegaSet::Whole)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn scalarized_constraints_match_membership(
            gens in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 1..6),
            y in prop::collection::vec(-2.0f64..2.0, 3),
        ) {
            for cone in [PolyCone::orthant(3).unwrap(), PolyCone::new(3, gens.clone()).unwrap()] {
                for s in cone.dual_generators() {
                    prop_assert!(cone.dual_contains(s, 1e-9));
                    prop_assert!((norm(s) - 1.0).abs() < 1e-12);
                }
                let worst = cone.dual_generators().iter().map(|s| dot(s, &y)).fold(f64::NEG_INFINITY, f64::max);
                if worst.abs() < 1e-6 { continue; }
                let neg: Vec<f64> = y.iter().map(|v| -v).collect();
                prop_assert_eq!(cone.contains(&neg, 1e-9), worst <= 1e-9, "y = {:?}, worst = {}", y, worst);
            }
        }

        #[test]
        fn recovered_zeta_is_dual(
            gens in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 1..6),
            weights in prop::collection::vec(0.0f64..3.0, 12),
        ) {
            let cone = PolyCone::new(3, gens).unwrap();
            let mapping = [fe("x", 1), fe("2*x", 1), fe("-x", 1)];
            let p = scalarize_cone_problem(1, vec![fe("x", 1)], &mapping, &cone, OmegaSet::Whole).unwrap();
            let mu = MultiplierMu::from_pairs(p.index_points().iter().cloned().zip(weights)).unwrap();
            let z = recover_zeta(&mu, &cone).unwrap();
            prop_assert!(cone.dual_contains(&z, 1e-9));
        }

        #[test]
        fn diagonal_sdp_matches_scalar_constraints(
            f in prop::array::uniform2(prop::array::uniform2(-1.0f64..1.0)),
            x in prop::array::uniform2(-1.0f64..1.0),
            slack in prop::array::uniform2(prop::sample::select(vec![0.0, 0.0, 0.5])),
            c in prop::array::uniform2(prop::array::uniform2(-1.0f64..1.0)),
            xi in prop::array::uniform2(0.0f64..0.2),
        ) {
            let sd = diag_instance(&f, x, slack);
            let objectives: Vec<String> = c.iter()
                .map(|c| format!("(x1 - ({}))^2 + (x2 - ({}))^2", c[0], c[1]))
                .collect();
            let obj: Vec<&str> = objectives.iter().map(String::as_str).collect();
            let p = problem(2, &obj, &[], OmegaSet::Whole);
            let scalar = scalar_equivalent(&objectives, &sd);
            let s = sdp_check_kkt(&p, &sd, &x, &xi, None, None, &tol()).unwrap();
            let k = check_kkt(&scalar, &x, &xi, None, None, &tol()).unwrap();
            prop_assert!((s.certificate.residual - k.residual).abs() <= 1e-6,
                "sdp {} vs scalar {}", s.certificate.residual, k.residual);
            prop_assert!((sdp_witness_residual(&sd, &s) - s.certificate.residual).abs() <= 1e-10);
            prop_assert!(s.multiplier_min_eigenvalue >= -1e-10);
            prop_assert!(s.complementarity.abs() <= 1e-8);
        }
    }
}
