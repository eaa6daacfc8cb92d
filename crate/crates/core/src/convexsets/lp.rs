//! Dense two-phase simplex for the small LPs used by the direction and
//! feasibility checks: maximize `c·x` subject to `A x <= b`, `x >= 0`.

const PIVOT_EPS: f64 = 1e-11;
const MAX_PIVOTS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
    /// Pivot limit reached; treated by callers as "no conclusion".
    Stalled,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    /// Objective row: reduced costs, last entry is minus the objective value.
    obj: Vec<f64>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.cols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                let f = row[c];
                if f != 0.0 {
                    for (v, pv) in row.iter_mut().zip(&pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            for (v, pv) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
        }
        self.basis[r] = c;
    }

    /// Bland's rule simplex on the current objective row. Columns in
    /// `blocked` never enter.
    fn run(&mut self, blocked: &[bool]) -> Result<(), LpOutcome> {
        for _ in 0..MAX_PIVOTS {
            let entering = (0..self.cols).find(|&j| !blocked[j] && self.obj[j] > PIVOT_EPS);
            let Some(c) = entering else { return Ok(()) };
            let mut best: Option<(f64, usize)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][c];
                if a > PIVOT_EPS {
                    let ratio = self.rhs(i) / a;
                    let better = match best {
                        None => true,
                        Some((r, bi)) => {
                            ratio < r - 1e-14 || (ratio <= r + 1e-14 && self.basis[i] < self.basis[bi])
                        }
                    };
                    if better {
                        best = Some((ratio, i));
                    }
                }
            }
            match best {
                None => return Err(LpOutcome::Unbounded),
                Some((_, r)) => self.pivot(r, c),
            }
        }
        Err(LpOutcome::Stalled)
    }
}

pub fn maximize(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> LpOutcome {
    let n = c.len();
    let m = a.len();
    debug_assert_eq!(b.len(), m);
    // columns: n originals, m slacks, 1 artificial
    let art = n + m;
    let cols = n + m + 1;
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let mut row = vec![0.0; cols + 1];
        row[..n].copy_from_slice(&a[i]);
        row[n + i] = 1.0;
        row[art] = -1.0;
        row[cols] = b[i];
        rows.push(row);
    }
    let mut t = Tableau {
        rows,
        obj: vec![0.0; cols + 1],
        basis: (n..n + m).collect(),
        cols,
    };
    let mut blocked = vec![false; cols];

    let most_negative = (0..m).min_by(|&i, &j| b[i].total_cmp(&b[j]));
    if let Some(r) = most_negative.filter(|&r| b[r] < 0.0) {
        // phase 1: maximize -art
        t.obj[art] = -1.0;
        t.pivot(r, art);
        if let Err(outcome) = t.run(&blocked) {
            return match outcome {
                LpOutcome::Unbounded => LpOutcome::Infeasible,
                other => other,
            };
        }
        if -t.obj[cols] < -1e-9 {
            return LpOutcome::Infeasible;
        }
        if let Some(r) = t.basis.iter().position(|&j| j == art) {
            if let Some(c) = (0..art).find(|&j| t.rows[r][j].abs() > PIVOT_EPS) {
                t.pivot(r, c);
            }
        }
    }
    blocked[art] = true;

    // phase 2 objective expressed in nonbasic columns
    let mut obj = vec![0.0; cols + 1];
    obj[..n].copy_from_slice(c);
    for (i, &j) in t.basis.iter().enumerate() {
        let cj = obj[j];
        if cj != 0.0 {
            for (v, rv) in obj.iter_mut().zip(&t.rows[i]) {
                *v -= cj * rv;
            }
        }
    }
    t.obj = obj;
    if let Err(outcome) = t.run(&blocked) {
        return outcome;
    }
    let mut x = vec![0.0; n];
    for (i, &j) in t.basis.iter().enumerate() {
        if j < n {
            x[j] = t.rhs(i).max(0.0);
        }
    }
    let value = c.iter().zip(&x).map(|(p, q)| p * q).sum();
    LpOutcome::Optimal { x, value }
}
