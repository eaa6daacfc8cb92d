//! Distance from the origin to a [`FactoredSum`].
//!
//! With `s(w) = o + G w` and `r(w) = r0 + cᵀw` the ball is eliminated
//! analytically: the distance is `(‖s‖ − r)₊`. We minimize the C¹ convex
//! function `½ (‖s‖ − r)₊²` over the product of scaled simplices and
//! orthants by accelerated projected gradient with adaptive restart, then
//! polish on the active support with an equality-constrained least-squares
//! solve.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{FactoredSum, Pool};
use crate::error::Result;
use crate::functions::{dot, norm};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockWeights {
    pub label: String,
    pub weights: Vec<f64>,
    pub mass: f64,
    /// `Σ_k w_k v_k` for this block.
    pub point: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualSolution {
    pub residual: f64,
    pub blocks: Vec<BlockWeights>,
    /// `o + Σ blocks`, before the ball.
    pub sum: Vec<f64>,
    pub ball_radius: f64,
    pub ball: Vec<f64>,
    /// `sum + ball`; its norm is the residual.
    pub point: Vec<f64>,
    /// Certified lower bound on the minimal residual, when a dual
    /// certificate could be formed.
    pub lower_bound: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
}

struct Flat<'a> {
    fs: &'a FactoredSum,
    cols: Vec<&'a [f64]>,
    cost: Vec<f64>,
    /// Column ranges per pool; free columns listed separately.
    pool_cols: Vec<Vec<usize>>,
    free_cols: Vec<usize>,
}

impl<'a> Flat<'a> {
    fn new(fs: &'a FactoredSum) -> Self {
        let mut cols = Vec::new();
        let mut cost = Vec::new();
        let mut pool_cols = vec![Vec::new(); fs.pools().len()];
        let mut free_cols = Vec::new();
        for b in fs.blocks() {
            for g in &b.generators {
                match b.pool {
                    Pool::Simplex(p) => pool_cols[p].push(cols.len()),
                    Pool::Free => free_cols.push(cols.len()),
                }
                cols.push(g.as_slice());
                cost.push(b.ball);
            }
        }
        Flat {
            fs,
            cols,
            cost,
            pool_cols,
            free_cols,
        }
    }

    fn sum(&self, w: &[f64]) -> Vec<f64> {
        let mut s = self.fs.offset().to_vec();
        for (col, &wk) in self.cols.iter().zip(w) {
            if wk != 0.0 {
                for (si, ci) in s.iter_mut().zip(col.iter()) {
                    *si += wk * ci;
                }
            }
        }
        s
    }

    fn radius(&self, w: &[f64]) -> f64 {
        self.fs.ball_fixed() + dot(&self.cost, w)
    }

    /// `(‖s‖ − r)₊`, `s`, `r`.
    fn eval(&self, w: &[f64]) -> (f64, Vec<f64>, f64) {
        let s = self.sum(w);
        let r = self.radius(w);
        ((norm(&s) - r).max(0.0), s, r)
    }

    fn grad(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let (phi, s, _) = self.eval(w);
        let ns = norm(&s);
        if phi == 0.0 || ns == 0.0 {
            return (0.0, vec![0.0; w.len()]);
        }
        let g = self
            .cols
            .iter()
            .zip(&self.cost)
            .map(|(col, c)| phi * (dot(col, &s) / ns - c))
            .collect();
        (0.5 * phi * phi, g)
    }

    fn project(&self, w: &mut [f64]) {
        for (cols, &total) in self.pool_cols.iter().zip(self.fs.pools()) {
            let mut v: Vec<f64> = cols.iter().map(|&k| w[k]).collect();
            project_simplex(&mut v, total);
            for (&k, vk) in cols.iter().zip(v) {
                w[k] = vk;
            }
        }
        for &k in &self.free_cols {
            w[k] = w[k].max(0.0);
        }
    }

    fn start(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.cols.len()];
        for (cols, &total) in self.pool_cols.iter().zip(self.fs.pools()) {
            for &k in cols {
                w[k] = total / cols.len() as f64;
            }
        }
        w
    }

    /// Weak-duality bound from the unit direction of `s`.
    fn lower_bound(&self, s: &[f64]) -> Option<f64> {
        let ns = norm(s);
        if ns == 0.0 {
            return Some(0.0);
        }
        let u: Vec<f64> = s.iter().map(|v| v / ns).collect();
        let slope = |k: usize| dot(self.cols[k], &u) - self.cost[k];
        if self.free_cols.iter().any(|&k| slope(k) < 0.0) {
            return None;
        }
        let mut lb = dot(&u, self.fs.offset()) - self.fs.ball_fixed();
        for (cols, &total) in self.pool_cols.iter().zip(self.fs.pools()) {
            if total > 0.0 {
                let m = cols.iter().map(|&k| slope(k)).fold(f64::INFINITY, f64::min);
                lb += total * m;
            }
        }
        Some(lb.max(0.0))
    }

    /// Least squares on the columns carrying weight, keeping pool totals.
    fn polish(&self, w: &[f64]) -> Option<Vec<f64>> {
        let scale = w.iter().copied().fold(1.0, f64::max);
        let support: Vec<usize> = (0..w.len()).filter(|&k| w[k] > 1e-12 * scale).collect();
        let pools: Vec<usize> = (0..self.pool_cols.len())
            .filter(|&p| self.pool_cols[p].iter().any(|k| support.contains(k)))
            .collect();
        let ns = support.len();
        let np = pools.len();
        if ns == 0 {
            return None;
        }
        let dim = ns + np;
        let mut kkt = DMatrix::<f64>::zeros(dim, dim);
        let mut rhs = DVector::<f64>::zeros(dim);
        for (a, &ka) in support.iter().enumerate() {
            for (b, &kb) in support.iter().enumerate() {
                kkt[(a, b)] = dot(self.cols[ka], self.cols[kb]);
            }
            rhs[a] = -dot(self.cols[ka], self.fs.offset());
        }
        for (j, &p) in pools.iter().enumerate() {
            for (a, &k) in support.iter().enumerate() {
                if self.pool_cols[p].contains(&k) {
                    kkt[(ns + j, a)] = 1.0;
                    kkt[(a, ns + j)] = 1.0;
                }
            }
            rhs[ns + j] = self.fs.pools()[p];
        }
        let sol = kkt.svd(true, true).solve(&rhs, 1e-13).ok()?;
        let mut out = vec![0.0; w.len()];
        for (a, &k) in support.iter().enumerate() {
            if sol[a] < -1e-12 * scale || !sol[a].is_finite() {
                return None;
            }
            out[k] = sol[a].max(0.0);
        }
        self.project(&mut out);
        Some(out)
    }
}

/// Euclidean projection onto `{v ≥ 0, Σv = total}`.
pub(crate) fn project_simplex(v: &mut [f64], total: f64) {
    if v.is_empty() {
        return;
    }
    if total <= 0.0 {
        v.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - total) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
    // remove rounding drift in the total
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        let f = total / s;
        v.iter_mut().for_each(|x| *x *= f);
    }
}

fn lipschitz_estimate(flat: &Flat) -> f64 {
    // ‖[G; c]‖² by power iteration, doubled for the curvature of ‖·‖.
    let k = flat.cols.len();
    if k == 0 {
        return 1.0;
    }
    let mut v = vec![1.0 / (k as f64).sqrt(); k];
    let mut lam = 0.0;
    for _ in 0..50 {
        let gv = flat.cols.iter().zip(&v).fold(vec![0.0; flat.fs.dim()], |mut acc, (c, &vk)| {
            for (a, ci) in acc.iter_mut().zip(c.iter()) {
                *a += vk * ci;
            }
            acc
        });
        let cv = dot(&flat.cost, &v);
        let mut next: Vec<f64> = flat
            .cols
            .iter()
            .zip(&flat.cost)
            .map(|(c, ck)| dot(c, &gv) + ck * cv)
            .collect();
        lam = norm(&next);
        if lam == 0.0 {
            return 1.0;
        }
        next.iter_mut().for_each(|x| *x /= lam);
        v = next;
    }
    (2.0 * lam).max(1e-12)
}

/// Minimizes the distance from the origin to the set described by `fs`.
/// Stops once the residual is at most `tol / 100`, when progress stalls,
/// or after `max_iter` iterations (`converged = false`).
pub fn residual_min(fs: &FactoredSum, tol: f64, max_iter: usize) -> Result<ResidualSolution> {
    fs.validate()?;
    let flat = Flat::new(fs);
    let target = tol / 100.0;
    let mut w = flat.start();
    let (mut best_phi, _, _) = flat.eval(&w);
    let mut best = w.clone();
    let mut iterations = 0;
    let mut converged = best_phi <= target;

    if !converged && !flat.cols.is_empty() {
        let mut l = lipschitz_estimate(&flat);
        let mut y = w.clone();
        let mut theta = 1.0f64;
        let mut prev_f = 0.5 * best_phi * best_phi;
        let mut stall = 0usize;
        while iterations < max_iter {
            iterations += 1;
            let (fy, gy) = flat.grad(&y);
            // backtracking on the quadratic upper model
            let next = loop {
                let mut z: Vec<f64> = y.iter().zip(&gy).map(|(a, g)| a - g / l).collect();
                flat.project(&mut z);
                let (phi_z, _, _) = flat.eval(&z);
                let fz = 0.5 * phi_z * phi_z;
                let diff: Vec<f64> = z.iter().zip(&y).map(|(a, b)| a - b).collect();
                let model = fy + dot(&gy, &diff) + 0.5 * l * dot(&diff, &diff);
                if fz <= model + 1e-15 * fy.abs() || l > 1e30 {
                    break (z, fz, diff);
                }
                l *= 2.0;
            };
            let (z, fz, step) = next;
            let phi_z = (2.0 * fz).sqrt();
            if phi_z < best_phi {
                best_phi = phi_z;
                best.clone_from(&z);
            }
            if best_phi <= target {
                converged = true;
                break;
            }
            // fixed point of the projected gradient map
            if norm(&step) * l <= 1e-14 * (1.0 + best_phi) {
                converged = true;
                break;
            }
            if fz > prev_f {
                // adaptive restart
                theta = 1.0;
                y.clone_from(&w);
                prev_f = 0.5 * best_phi * best_phi;
                stall += 1;
                if stall > 200 {
                    converged = true;
                    break;
                }
                continue;
            }
            if prev_f - fz <= 1e-16 * prev_f.max(1e-300) {
                stall += 1;
                if stall > 200 {
                    converged = true;
                    break;
                }
            } else {
                stall = 0;
            }
            let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
            let beta = (theta - 1.0) / theta_next;
            y = z.iter().zip(&w).map(|(a, b)| a + beta * (a - b)).collect();
            flat.project(&mut y);
            w = z;
            theta = theta_next;
            prev_f = fz;
        }
    }

    if best_phi > 0.0 {
        if let Some(p) = flat.polish(&best) {
            let (phi_p, _, _) = flat.eval(&p);
            if phi_p < best_phi {
                best = p;
            }
        }
    }
    Ok(assemble(&flat, &best, converged, iterations))
}

fn assemble(flat: &Flat, w: &[f64], converged: bool, iterations: usize) -> ResidualSolution {
    let n = flat.fs.dim();
    let (_, s, r) = flat.eval(w);
    let ns = norm(&s);
    let ball: Vec<f64> = if ns == 0.0 {
        vec![0.0; n]
    } else {
        let f = (r / ns).min(1.0);
        s.iter().map(|v| -v * f).collect()
    };
    let point: Vec<f64> = s.iter().zip(&ball).map(|(a, b)| a + b).collect();
    let mut blocks = Vec::with_capacity(flat.fs.blocks().len());
    let mut k = 0;
    for b in flat.fs.blocks() {
        let weights = w[k..k + b.generators.len()].to_vec();
        k += b.generators.len();
        let mut p = vec![0.0; n];
        for (g, wk) in b.generators.iter().zip(&weights) {
            for (pi, gi) in p.iter_mut().zip(g) {
                *pi += wk * gi;
            }
        }
        blocks.push(BlockWeights {
            label: b.label.clone(),
            mass: weights.iter().sum(),
            weights,
            point: p,
        });
    }
    let residual = norm(&point);
    let lower_bound = flat.lower_bound(&s).map(|lb| lb.min(residual));
    ResidualSolution {
        residual,
        blocks,
        sum: s,
        ball_radius: r,
        ball,
        point,
        lower_bound,
        converged,
        iterations,
    }
}
