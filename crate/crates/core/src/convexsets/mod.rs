//! Finitely generated convex sets and the two solvers built on them:
//! distance from the origin to a Minkowski sum, and strict descent
//! directions inside a tangent cone.

pub mod direction;
pub mod lp;
pub mod residual;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functions::{dot, SubdiffSet};

pub use direction::{strict_direction_lp, StrictDirection};
pub use residual::{residual_min, BlockWeights, ResidualSolution};

/// `max ⟨v, d⟩` over the generators plus `radius·‖d‖`.
pub fn support(set: &SubdiffSet, d: &[f64]) -> f64 {
    set.support(d)
}

/// Polyhedral cone `{d : ⟨a, d⟩ ≤ 0 for every row a}`. Its polar, the
/// normal cone, is generated by the same rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TangentCone {
    n: usize,
    rows: Vec<Vec<f64>>,
}

impl TangentCone {
    pub fn new(n: usize, rows: Vec<Vec<f64>>) -> Self {
        debug_assert!(rows.iter().all(|r| r.len() == n));
        TangentCone { n, rows }
    }

    pub fn whole(n: usize) -> Self {
        TangentCone { n, rows: vec![] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Generators of N = T°.
    pub fn normal_generators(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn is_whole(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn contains(&self, d: &[f64], tol: f64) -> bool {
        self.rows.iter().all(|a| dot(a, d) <= tol)
    }
}

/// Weight pool of a block: shared simplex with a fixed total, or free
/// nonnegative (cone) weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Pool {
    Simplex(usize),
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Block {
    pub label: String,
    pub generators: Vec<Vec<f64>>,
    /// Ball radius contributed per unit of weight on this block.
    pub ball: f64,
    pub pool: Pool,
}

/// `{ o + Σ_blocks Σ_k w_k v_k + b : w feasible for its pool,
///    ‖b‖ ≤ r0 + Σ_blocks ball·mass }`.
///
/// Blocks sharing a simplex pool split its total between them, which lifts
/// the products `λ_i · α_ik` into one convex weight vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactoredSum {
    n: usize,
    offset: Vec<f64>,
    ball_fixed: f64,
    pools: Vec<f64>,
    blocks: Vec<Block>,
}

impl FactoredSum {
    pub fn new(n: usize) -> Self {
        FactoredSum {
            n,
            offset: vec![0.0; n],
            ball_fixed: 0.0,
            pools: vec![],
            blocks: vec![],
        }
    }

    /// Standard assembly for a KKT inclusion: objective subdifferentials on
    /// one joint simplex (ball coefficient `xi[i]` each), constraint
    /// subdifferentials and normal-cone generators as free blocks.
    pub fn kkt(
        n: usize,
        objectives: Vec<(String, Vec<Vec<f64>>, f64)>,
        cones: Vec<(String, Vec<Vec<f64>>)>,
        normal: &TangentCone,
    ) -> Self {
        let mut s = FactoredSum::new(n);
        let pool = s.add_pool(1.0);
        for (label, gens, xi) in objectives {
            s.add_block(label, gens, xi, Pool::Simplex(pool));
        }
        for (label, gens) in cones {
            s.add_block(label, gens, 0.0, Pool::Free);
        }
        if !normal.is_whole() {
            s.add_block("normal", normal.normal_generators().to_vec(), 0.0, Pool::Free);
        }
        s
    }

    pub fn add_pool(&mut self, total: f64) -> usize {
        self.pools.push(total);
        self.pools.len() - 1
    }

    pub fn add_block(&mut self, label: impl Into<String>, generators: Vec<Vec<f64>>, ball: f64, pool: Pool) {
        self.blocks.push(Block {
            label: label.into(),
            generators,
            ball,
            pool,
        });
    }

    pub fn set_offset(&mut self, offset: Vec<f64>) {
        self.offset = offset;
    }

    pub fn set_ball(&mut self, r0: f64) {
        self.ball_fixed = r0;
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn ball_fixed(&self) -> f64 {
        self.ball_fixed
    }

    pub fn pools(&self) -> &[f64] {
        &self.pools
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if self.offset.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: self.offset.len(),
                context: "factored sum offset",
            });
        }
        if !(self.ball_fixed >= 0.0 && self.ball_fixed.is_finite()) {
            return Err(Error::invalid("fixed ball radius must be finite and nonnegative"));
        }
        for (p, &total) in self.pools.iter().enumerate() {
            if !(total >= 0.0 && total.is_finite()) {
                return Err(Error::invalid(format!("pool {p} total must be finite and nonnegative")));
            }
            let has = self.blocks.iter().any(|b| b.pool == Pool::Simplex(p));
            if !has && total > 0.0 {
                return Err(Error::invalid(format!("pool {p} has positive total but no blocks")));
            }
        }
        for b in &self.blocks {
            if b.generators.is_empty() {
                return Err(Error::invalid(format!("block '{}' has no generators", b.label)));
            }
            if let Some(g) = b.generators.iter().find(|g| g.len() != n) {
                return Err(Error::Dimension {
                    expected: n,
                    got: g.len(),
                    context: "factored sum generator",
                });
            }
            if b.generators.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("block '{}' has a non-finite generator", b.label)));
            }
            if !(b.ball >= 0.0 && b.ball.is_finite()) {
                return Err(Error::invalid(format!("block '{}' ball coefficient must be nonnegative", b.label)));
            }
            if let Pool::Simplex(p) = b.pool {
                if p >= self.pools.len() {
                    return Err(Error::invalid(format!("block '{}' refers to missing pool {p}", b.label)));
                }
            }
        }
        Ok(())
    }
}
