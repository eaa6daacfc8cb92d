//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test --test acceptance`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use apcert::certificates::{check_cq_u, check_kkt, Certificate, SufficiencyMode, Verdict};
use apcert::cli::{self, Command, Status};
use apcert::conic::{sdp_check_kkt, SdpData};
use apcert::convexsets::{residual_min, FactoredSum, Pool};
use apcert::functions::{numeric_dirderiv, CustomAtomRegistry, FuncExpr, StepSchedule};
use apcert::oracle::{
    bounded_section, classify_point, ekeland_quasi, find_xi_pareto, FeasibleGrid, GridSpec, Notion, SectionReport,
};
use apcert::problem::{ConstraintBlock, IndexDomain, OmegaSet, Problem};
use apcert::Tolerances;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome { ok, detail: detail.into() }
}

fn fe(src: &str, n: usize) -> FuncExpr {
    FuncExpr::parse(src, n, &CustomAtomRegistry::default()).unwrap_or_else(|e| panic!("{src}: {e}"))
}

fn problems() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("problems")
}

fn vars(n: usize) -> Vec<String> {
    (1..=n).map(|j| format!("x{j}")).collect()
}

// ---------------------------------------------------------------- examples

fn example(name: &str) -> Outcome {
    let t = Instant::now();
    let r = match cli::run(&Command::Example { name: name.into() }) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("error: {e}")),
    };
    let secs = t.elapsed().as_secs_f64();
    let bad: Vec<&str> = r
        .sections
        .iter()
        .filter(|s| s.status != Status::Reproduced)
        .map(|s| s.name.as_str())
        .collect();
    let ok = bad.is_empty() && secs < 2.0;
    let detail = if bad.is_empty() {
        format!("{} sections reproduced in {secs:.2} s (limit 2 s)", r.sections.len())
    } else {
        format!("not reproduced: {}; {secs:.2} s", bad.join(", "))
    };
    outcome(ok, detail)
}

fn criterion_1() -> Outcome {
    example("example-3.1")
}

fn criterion_2() -> Outcome {
    example("example-3.2")
}

// -------------------------------------------------------- subdifferentials

/// Monomials `c · Π x_j^e_j` with total degree ≤ 4.
fn random_polynomial(rng: &mut ChaCha8Rng, n: usize) -> Vec<(f64, Vec<u32>)> {
    let terms = rng.gen_range(1..=6);
    (0..terms)
        .map(|_| {
            let mut e = vec![0u32; n];
            let degree = rng.gen_range(0..=4);
            for _ in 0..degree {
                e[rng.gen_range(0..n)] += 1;
            }
            (rng.gen_range(-2.0..2.0), e)
        })
        .collect()
}

fn poly_source(poly: &[(f64, Vec<u32>)]) -> String {
    poly.iter()
        .map(|(c, e)| {
            let mut s = format!("({c:?})");
            for (j, &k) in e.iter().enumerate() {
                if k > 0 {
                    s.push_str(&format!("*x{}^{k}", j + 1));
                }
            }
            s
        })
        .collect::<Vec<_>>()
        .join(" + ")
}

fn poly_gradient(poly: &[(f64, Vec<u32>)], x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    for (c, e) in poly {
        for (j, gj) in g.iter_mut().enumerate() {
            if e[j] == 0 {
                continue;
            }
            let mut term = c * e[j] as f64 * x[j].powi(e[j] as i32 - 1);
            for (k, &ek) in e.iter().enumerate() {
                if k != j {
                    term *= x[k].powi(ek as i32);
                }
            }
            *gj += term;
        }
    }
    g
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let activity = Tolerances::default().activity;

    let mut worst_poly = 0.0f64;
    for _ in 0..50 {
        let n = rng.gen_range(1..=3);
        let poly = random_polynomial(&mut rng, n);
        let f = fe(&poly_source(&poly), n);
        for _ in 0..4 {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let d: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let grad = poly_gradient(&poly, &x);
            let expect: f64 = grad.iter().zip(&d).map(|(a, b)| a * b).sum();
            let got = f.dir_deriv_upper(&x, &[], &d, activity).unwrap();
            worst_poly = worst_poly.max((got - expect).abs());
        }
    }

    // max of affine pieces with planted ties at x̄
    let mut hull_mismatch = 0;
    for _ in 0..50 {
        let n = rng.gen_range(1..=3);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pieces = rng.gen_range(2..=5);
        let mut active = Vec::new();
        let mut srcs = Vec::new();
        for k in 0..pieces {
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let ax: f64 = a.iter().zip(&x).map(|(p, q)| p * q).sum();
            // the first piece and a random subset attain the max value 1
            let tied = k == 0 || rng.gen_bool(0.5);
            let b = if tied { 1.0 - ax } else { 1.0 - ax - rng.gen_range(0.1..1.0) };
            if tied {
                active.push(a.clone());
            }
            let lin: Vec<String> = a.iter().enumerate().map(|(j, c)| format!("({c:?})*x{}", j + 1)).collect();
            srcs.push(format!("{} + ({b:?})", lin.join(" + ")));
        }
        let f = fe(&format!("max({})", srcs.join(", ")), n);
        let s = f.clarke_subdiff(&x, &[], activity).unwrap();
        let mut got = s.generators.clone();
        let mut want = active;
        for v in [&mut got, &mut want] {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v.dedup();
        }
        if got != want || s.ball_radius != 0.0 {
            hull_mismatch += 1;
        }
    }

    // upper bound dominates the sampled limsup on every built-in atom
    let atoms: [(&str, usize, &[f64]); 12] = [
        ("sqcosinv(x)", 1, &[0.0]),
        ("sqcosinv(x)", 1, &[0.3]),
        ("abs(x)", 1, &[0.0]),
        ("max(x, 0)", 1, &[0.0]),
        ("max(x, -2*x, 0.5*x)", 1, &[0.0]),
        ("max(x1, x2)", 2, &[0.0, 0.0]),
        ("abs(x1) + abs(x2)", 2, &[0.0, 0.0]),
        ("sin(x)", 1, &[0.7]),
        ("cos(x)", 1, &[0.0]),
        ("exp(x)", 1, &[0.5]),
        ("log(x)", 1, &[1.5]),
        ("sqrt(x)", 1, &[2.0]),
    ];
    let schedule = StepSchedule::default();
    let mut worst_gap = f64::NEG_INFINITY;
    for (src, n, x) in atoms {
        let f = fe(src, n);
        for k in 0..8 {
            let d: Vec<f64> = (0..n).map(|j| if (k >> j) & 1 == 0 { 1.0 } else { -1.0 } * (1.0 + 0.25 * (k / 4) as f64)).collect();
            let upper = f.dir_deriv_upper(x, &[], &d, activity).unwrap();
            let est = numeric_dirderiv(&f, x, &[], &d, &schedule).unwrap();
            worst_gap = worst_gap.max(est.value - upper);
        }
    }

    let ok = worst_poly <= 1e-10 && hull_mismatch == 0 && worst_gap <= 5e-2;
    outcome(
        ok,
        format!(
            "polynomials max |err| {worst_poly:.1e} (≤ 1e-10); max-affine hull mismatches {hull_mismatch}/50; \
             atoms max(numeric − upper) {worst_gap:.1e} (≤ 5e-2)"
        ),
    )
}

// ------------------------------------------------------- convex instances

struct Instance {
    p: Problem,
    xi: Vec<f64>,
    spec: GridSpec,
    /// Max gradient norm of the objectives over the box.
    lipschitz: f64,
}

/// Convex quadratic objectives, constraint `Σ (α_j + tβ_j) x_j − (γ + tδ)`
/// over `T = [0, 1]`, `Ω = [−1, 1]ⁿ`. `x = 0` is strictly feasible.
fn convex_instance(rng: &mut ChaCha8Rng) -> Instance {
    let n = rng.gen_range(1..=3);
    let m = rng.gen_range(2..=3);
    let x = vars(n);
    let mut objectives = Vec::new();
    let mut coef = Vec::new();
    for _ in 0..m {
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..2.0)).collect();
        let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let terms: Vec<String> = (0..n)
            .map(|j| format!("({:?})*({} - ({:?}))^2 + ({:?})*{}", a[j], x[j], c[j], b[j], x[j]))
            .collect();
        objectives.push(fe(&terms.join(" + "), n));
        coef.push((a, c, b));
    }
    let terms: Vec<String> = (0..n)
        .map(|j| {
            let (al, be): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            format!("(({al:?}) + ({be:?})*t)*{}", x[j])
        })
        .collect();
    let gamma: f64 = rng.gen_range(0.2..0.8);
    let delta: f64 = rng.gen_range(-0.15..0.15);
    let g = format!("{} - (({gamma:?}) + ({delta:?})*t)", terms.join(" + "));
    let p = Problem::new(
        n,
        objectives,
        vec![ConstraintBlock {
            expr: fe(&g, n),
            domain: IndexDomain::Interval { lo: 0.0, hi: 1.0, points: 21 },
        }],
        OmegaSet::Box {
            lo: vec![-1.0; n],
            hi: vec![1.0; n],
        },
    )
    .unwrap();
    let points = [401, 81, 33][n - 1];
    let spec = GridSpec::new(vec![-1.0; n], vec![1.0; n], points);
    // ξ comparable to the curvature over one grid cell, so the ξ-quasi-weak
    // band around the Pareto set is resolved by the grid
    let curvature = 2.0 * coef.iter().flat_map(|(a, _, _)| a.iter().copied()).fold(0.0, f64::max);
    let h = 2.0 / (points - 1) as f64;
    let xi = (0..m).map(|_| rng.gen_range(0.5..2.0) * curvature * h).collect();
    // |∇f_i| ≤ |2a(x − c) + b| with |x − c| ≤ 2 on the box
    let lipschitz = coef
        .iter()
        .map(|(a, _, b)| a.iter().zip(b).map(|(a, b)| (4.0 * a + b.abs()).powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    Instance { p, xi, spec, lipschitz }
}

/// Weighted-sum minimizers on the grid plus a deterministic spread of
/// further grid points.
fn candidates(rng: &mut ChaCha8Rng, grid: &FeasibleGrid, m: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for _ in 0..4 {
        let w: Vec<f64> = (0..m).map(|_| rng.gen_range(0.05..1.0)).collect();
        let best = (0..grid.len())
            .min_by(|&a, &b| {
                let va: f64 = grid.values[a].iter().zip(&w).map(|(v, w)| v * w).sum();
                let vb: f64 = grid.values[b].iter().zip(&w).map(|(v, w)| v * w).sum();
                va.partial_cmp(&vb).unwrap()
            })
            .unwrap();
        out.push(best);
    }
    for _ in 0..8 {
        out.push(rng.gen_range(0..grid.len()));
    }
    out.sort_unstable();
    out.dedup();
    out
}


/// Grid test of `notion` at `x`: the global lattice plus six nested local
/// lattices around `x`, each four times finer than the last, so small
/// violating regions near the anchor are not missed.
fn grid_holds(c: &Instance, grid: &FeasibleGrid, x: &[f64], notion: Notion, slack: f64, tol: &Tolerances) -> bool {
    if !classify_point(&c.p, x, &c.xi, grid, slack).unwrap().holds(notion) {
        return false;
    }
    let mut h = c.spec.spacing();
    for _ in 0..6 {
        let lo = x.iter().zip(&h).map(|(v, h)| v - 2.0 * h).collect();
        let hi = x.iter().zip(&h).map(|(v, h)| v + 2.0 * h).collect();
        let local = FeasibleGrid::build(&c.p, &GridSpec::new(lo, hi, 17), tol.feasibility).unwrap();
        if !classify_point(&c.p, x, &c.xi, &local, slack).unwrap().holds(notion) {
            return false;
        }
        h.iter_mut().for_each(|v| *v /= 4.0);
    }
    true
}

/// Looks for a point violating the definition along the descent direction
/// `−w/‖w‖` read off a refuted certificate, `w` being the assembled
/// inclusion point. A hit proves `x` is not ξ-quasi-weak Pareto.
fn refutation_witness(c: &Instance, x: &[f64], cert: &Certificate, tol: &Tolerances) -> bool {
    let mut w = cert.ball.clone();
    for (j, wj) in w.iter_mut().enumerate() {
        *wj += cert.normal[j];
        *wj += cert.lambda.iter().zip(&cert.objective_subgradients).map(|(l, z)| l * z[j]).sum::<f64>();
        *wj += cert.mu.entries.iter().zip(&cert.constraint_subgradients).map(|(e, v)| e.weight * v[j]).sum::<f64>();
    }
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return false;
    }
    let h = c.spec.spacing()[0];
    let ray = (0..40)
        .map(|k| {
            let r = h * 0.5f64.powi(k);
            x.iter().zip(&w).map(|(a, b)| a - r * b / norm).collect()
        })
        .collect();
    let spec = GridSpec::new(x.to_vec(), x.iter().map(|v| v + h).collect(), 2).with_extra(ray);
    let grid = FeasibleGrid::build(&c.p, &spec, tol.feasibility).unwrap();
    !classify_point(&c.p, x, &c.xi, &grid, 0.0).unwrap().holds(Notion::XiQuasiWeak)
}

fn criterion_4() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let tol = Tolerances {
        kkt: 1e-6,
        ..Tolerances::default()
    };
    let (mut seen, mut tested, mut confirmed, mut overturned, mut failures) = (0, 0, 0, 0, Vec::new());
    for inst in 0..100 {
        let c = convex_instance(&mut rng);
        let grid = FeasibleGrid::build(&c.p, &c.spec, tol.feasibility).unwrap();
        for k in candidates(&mut rng, &grid, c.p.m()) {
            seen += 1;
            let x = &grid.points[k];
            if !grid_holds(&c, &grid, x, Notion::XiQuasiWeak, 0.0, &tol) {
                continue;
            }
            confirmed += 1;
            if !check_cq_u(&c.p, x, &tol).unwrap().holds {
                continue;
            }
            tested += 1;
            let cert = check_kkt(&c.p, x, &c.xi, None, None, &tol).unwrap();
            if cert.verdict == Verdict::Certified && cert.residual <= 1e-6 {
                continue;
            }
            // a grid miss rather than a counterexample when the definition
            // fails at an explicit, re-evaluated point
            if cert.verdict == Verdict::Refuted && refutation_witness(&c, x, &cert, &tol) {
                overturned += 1;
            } else {
                failures.push(format!("instance {inst} x {x:?} residual {:.3e}", cert.residual));
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let ok = failures.is_empty() && tested > 0 && secs < 300.0;
    outcome(
        ok,
        format!(
            "{seen} candidates, {confirmed} grid-confirmed, {tested} with CQ (U); {} violations, \
             {overturned} grid confirmations overturned by explicit witnesses; {secs:.1} s (limit 300 s){}",
            failures.len(),
            failures.first().map_or(String::new(), |f| format!("; first: {f}"))
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let tol = Tolerances::default();
    let (mut certified, mut failures) = (0, Vec::new());
    for inst in 0..100 {
        let c = convex_instance(&mut rng);
        let grid = FeasibleGrid::build(&c.p, &c.spec, tol.feasibility).unwrap();
        let h = c.spec.spacing().iter().map(|s| s * s).sum::<f64>().sqrt();
        let slack = h * c.lipschitz;
        for k in candidates(&mut rng, &grid, c.p.m()) {
            let x = &grid.points[k];
            let cert = check_kkt(&c.p, x, &c.xi, None, None, &tol).unwrap();
            if cert.verdict != Verdict::Certified {
                continue;
            }
            certified += 1;
            if !grid_holds(&c, &grid, x, Notion::XiQuasiWeak, slack, &tol) {
                failures.push(format!("instance {inst} x {x:?}"));
            }
        }
    }
    outcome(
        failures.is_empty() && certified > 0,
        format!(
            "{certified} certified points, {} not confirmed by the grid oracle{}",
            failures.len(),
            failures.first().map_or(String::new(), |f| format!("; first: {f}"))
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let tol = Tolerances::default();
    let mut failures = Vec::new();
    let mut max_ratio = 0.0f64;
    for inst in 0..20 {
        let c = convex_instance(&mut rng);
        let grid = FeasibleGrid::build(&c.p, &c.spec, tol.feasibility).unwrap();
        let y_bar = c.p.objective_values(&vec![0.0; c.p.n()]).unwrap();
        if !matches!(bounded_section(&c.p, &y_bar, &c.spec, tol.feasibility).unwrap(), SectionReport::Bounded { .. }) {
            failures.push(format!("instance {inst}: section not bounded"));
            continue;
        }
        let a = find_xi_pareto(&c.p, &c.xi, &grid).unwrap();
        if !classify_point(&c.p, &a.point, &c.xi, &grid, 0.0).unwrap().holds(Notion::XiPareto) {
            failures.push(format!("instance {inst}: xi-Pareto search result fails the oracle"));
        }
        let x0 = grid.points[rng.gen_range(0..grid.len())].clone();
        let b = ekeland_quasi(&c.p, &c.xi, &x0, &grid, tol.feasibility).unwrap();
        if !classify_point(&c.p, &b.point, &c.xi, &grid, 0.0).unwrap().holds(Notion::XiQuasi) {
            failures.push(format!("instance {inst}: descent result fails the xi-quasi oracle"));
        }
        if b.iterations > grid.len() {
            failures.push(format!("instance {inst}: {} iterations > |grid| = {}", b.iterations, grid.len()));
        }
        max_ratio = max_ratio.max(b.iterations as f64 / grid.len() as f64);
    }
    outcome(
        failures.is_empty(),
        format!(
            "20 instances, {} failures, max descent iterations/|grid| = {max_ratio:.4}{}",
            failures.len(),
            failures.first().map_or(String::new(), |f| format!("; first: {f}"))
        ),
    )
}

// ------------------------------------------------------------- residual

struct Planar {
    offset: [f64; 2],
    r0: f64,
    /// `(total, ball coefficient, generators)` per block, own simplex each.
    blocks: Vec<(f64, f64, Vec<[f64; 2]>)>,
}

impl Planar {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let blocks = (0..rng.gen_range(1..=3))
            .map(|_| {
                let k = rng.gen_range(1..=3);
                let gens = (0..k).map(|_| [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]).collect();
                let ball = if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.0..0.3) };
                (rng.gen_range(0.5..2.0), ball, gens)
            })
            .collect();
        Planar {
            offset: [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
            r0: if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.0..0.3) },
            blocks,
        }
    }

    fn radius(&self) -> f64 {
        self.r0 + self.blocks.iter().map(|(total, ball, _)| total * ball).sum::<f64>()
    }

    fn sum(&self) -> FactoredSum {
        let mut fs = FactoredSum::new(2);
        fs.set_offset(self.offset.to_vec());
        fs.set_ball(self.r0);
        for (b, (total, ball, gens)) in self.blocks.iter().enumerate() {
            let pool = fs.add_pool(*total);
            fs.add_block(format!("b{b}"), gens.iter().map(|g| g.to_vec()).collect(), *ball, Pool::Simplex(pool));
        }
        fs
    }

    /// Vertices `o + Σ total_b v_b` of the Minkowski sum.
    fn vertices(&self) -> Vec<[f64; 2]> {
        let mut out = vec![self.offset];
        for (total, _, gens) in &self.blocks {
            out = out
                .iter()
                .flat_map(|p| gens.iter().map(move |g| [p[0] + total * g[0], p[1] + total * g[1]]))
                .collect();
        }
        out
    }

    /// Exact distance from the origin: the sum is the hull of its vertices,
    /// which is covered by the triangles on those vertices.
    fn exact(&self) -> f64 {
        let v = self.vertices();
        let mut best = f64::INFINITY;
        for i in 0..v.len() {
            for j in i..v.len() {
                for k in j..v.len() {
                    best = best.min(triangle_distance(v[i], v[j], v[k]));
                }
            }
        }
        (best - self.radius()).max(0.0)
    }

    /// Minimum over the product of barycentric grids with `steps` per block.
    fn dense(&self, steps: usize) -> f64 {
        let mut pts = vec![self.offset];
        for (total, _, gens) in &self.blocks {
            let mut local = Vec::new();
            for a in 0..=steps {
                for b in 0..=(steps - a) {
                    let w = [a as f64 / steps as f64, b as f64 / steps as f64];
                    let w2 = 1.0 - w[0] - w[1];
                    let g = |i: usize| gens[i.min(gens.len() - 1)];
                    let ws: [f64; 3] = match gens.len() {
                        1 => [1.0, 0.0, 0.0],
                        2 if b > 0 => continue,
                        2 => [w[0], 1.0 - w[0], 0.0],
                        _ => [w[0], w[1], w2],
                    };
                    local.push([
                        total * (ws[0] * g(0)[0] + ws[1] * g(1)[0] + ws[2] * g(2)[0]),
                        total * (ws[0] * g(0)[1] + ws[1] * g(1)[1] + ws[2] * g(2)[1]),
                    ]);
                    if gens.len() == 1 {
                        break;
                    }
                }
                if gens.len() == 1 {
                    break;
                }
            }
            pts = pts
                .iter()
                .flat_map(|p| local.iter().map(move |q| [p[0] + q[0], p[1] + q[1]]))
                .collect();
        }
        let d = pts.iter().map(|p| p[0].hypot(p[1])).fold(f64::INFINITY, f64::min);
        (d - self.radius()).max(0.0)
    }
}

fn segment_distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let s = if len2 == 0.0 { 0.0 } else { (-(a[0] * ab[0] + a[1] * ab[1]) / len2).clamp(0.0, 1.0) };
    (a[0] + s * ab[0]).hypot(a[1] + s * ab[1])
}

fn triangle_distance(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    let cross = |p: [f64; 2], q: [f64; 2]| p[0] * q[1] - p[1] * q[0];
    let (s1, s2, s3) = (cross(a, b), cross(b, c), cross(c, a));
    let area = s1 + s2 + s3;
    if area != 0.0 && ((s1 >= 0.0 && s2 >= 0.0 && s3 >= 0.0) || (s1 <= 0.0 && s2 <= 0.0 && s3 <= 0.0)) {
        return 0.0;
    }
    segment_distance(a, b).min(segment_distance(b, c)).min(segment_distance(c, a))
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut worst_exact, mut worst_dense) = (0.0f64, f64::NEG_INFINITY);
    for _ in 0..100 {
        let inst = Planar::random(&mut rng);
        let sol = residual_min(&inst.sum(), 1e-12, 20_000).unwrap();
        worst_exact = worst_exact.max((sol.residual - inst.exact()).abs());
        // the grid value is an upper bound on the true minimum
        worst_dense = worst_dense.max(sol.residual - inst.dense(24));
    }
    let mut worst_planted = 0.0f64;
    for _ in 0..100 {
        let mut inst = Planar::random(&mut rng);
        // shift the offset so a random point of the set sits at the origin
        let mut q = inst.offset;
        for (total, _, gens) in &inst.blocks {
            let w: Vec<f64> = gens.iter().map(|_| rng.gen_range(0.01..1.0)).collect();
            let s: f64 = w.iter().sum();
            for (g, wk) in gens.iter().zip(&w) {
                q[0] += total * wk / s * g[0];
                q[1] += total * wk / s * g[1];
            }
        }
        inst.offset = [inst.offset[0] - q[0], inst.offset[1] - q[1]];
        inst.r0 = 0.0;
        for b in &mut inst.blocks {
            b.1 = 0.0;
        }
        let sol = residual_min(&inst.sum(), 1e-12, 20_000).unwrap();
        worst_planted = worst_planted.max(sol.residual);
    }
    let ok = worst_exact <= 1e-4 && worst_dense <= 1e-9 && worst_planted <= 1e-8;
    outcome(
        ok,
        format!(
            "max |residual − exact| {worst_exact:.1e} (≤ 1e-4); max(residual − dense grid) {worst_dense:.1e} (≤ 0); \
             planted-zero max {worst_planted:.1e} (≤ 1e-8)"
        ),
    )
}

// ------------------------------------------------------------------- SDP

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let tol = Tolerances::default();
    let mut worst = 0.0f64;
    let mut certified = 0;
    for _ in 0..20 {
        let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f: Vec<[f64; 2]> = (0..2).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        let slack: Vec<f64> = (0..2).map(|_| if rng.gen_bool(0.6) { 0.0 } else { 0.5 }).collect();
        let f0: Vec<f64> = (0..2).map(|j| -(f[0][j] * x[0] + f[1][j] * x[1]) - slack[j]).collect();
        let diag = |d: [f64; 2]| vec![d[0], 0.0, 0.0, d[1]];
        let sd = SdpData::new(2, vec![diag([f0[0], f0[1]]), diag(f[0]), diag(f[1])]).unwrap();
        let objectives: Vec<String> = (0..2)
            .map(|_| {
                let (c1, c2): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                format!("(x1 - ({c1:?}))^2 + (x2 - ({c2:?}))^2")
            })
            .collect();
        let xi: Vec<f64> = (0..2).map(|_| rng.gen_range(0.0..0.2)).collect();
        let p = Problem::new(2, objectives.iter().map(|s| fe(s, 2)).collect(), vec![], OmegaSet::Whole).unwrap();
        let scalar = Problem::new(
            2,
            objectives.iter().map(|s| fe(s, 2)).collect(),
            (0..2)
                .map(|j| ConstraintBlock {
                    expr: fe(&format!("({:?}) + ({:?})*x1 + ({:?})*x2", f0[j], f[0][j], f[1][j]), 2),
                    domain: IndexDomain::single(),
                })
                .collect(),
            OmegaSet::Whole,
        )
        .unwrap();
        let s = sdp_check_kkt(&p, &sd, &x, &xi, None, None, &tol).unwrap();
        let k = check_kkt(&scalar, &x, &xi, None, None, &tol).unwrap();
        worst = worst.max((s.certificate.residual - k.residual).abs());
        certified += usize::from(s.certificate.verdict == Verdict::Certified);
    }

    // p = 1, g(x) = x at x̄ = 0
    let one = |obj: &str| {
        let p = Problem::new(1, vec![fe(obj, 1), fe(obj, 1)], vec![], OmegaSet::Whole).unwrap();
        (p, SdpData::new(1, vec![vec![0.0], vec![1.0]]).unwrap())
    };
    let (p, sd) = one("x");
    let refuted = sdp_check_kkt(&p, &sd, &[0.0], &[0.1, 0.1], None, None, &tol).unwrap();
    let (p, sd) = one("-x");
    let searched = sdp_check_kkt(&p, &sd, &[0.0], &[0.1, 0.1], None, None, &tol).unwrap();
    let supplied = sdp_check_kkt(&p, &sd, &[0.0], &[0.1, 0.1], Some(&[vec![1.0]]), None, &tol).unwrap();
    let hand = refuted.certificate.verdict == Verdict::Refuted
        && (refuted.certificate.residual - 0.9).abs() <= 1e-12
        && searched.certificate.verdict == Verdict::Certified
        && searched.certificate.residual <= 1e-12
        && supplied.certificate.verdict == Verdict::Certified
        && supplied.certificate.residual == 0.0;

    outcome(
        worst <= 1e-6 && hand,
        format!(
            "20 diagonal instances ({certified} certified), max |sdp − scalar| {worst:.1e} (≤ 1e-6); \
             p = 1: residuals {:.12} ({:?}) and {} ({:?})",
            refuted.certificate.residual,
            refuted.certificate.verdict,
            supplied.certificate.residual,
            supplied.certificate.verdict
        ),
    )
}

// ----------------------------------------------------------- determinism

fn criterion_9() -> Outcome {
    let f = |name: &str| problems().join(name);
    let commands = vec![
        Command::Check {
            file: f("example-3.2.toml"),
            point: vec![0.0],
            xi: None,
            lambda: None,
            mu: None,
        },
        Command::Check {
            file: f("cone.toml"),
            point: vec![0.0, 1.0],
            xi: None,
            lambda: None,
            mu: None,
        },
        Command::Fuzzy {
            file: f("example-3.1.toml"),
            point: vec![0.0],
            xi: Some(vec![1.0, 0.0]),
            delta: 0.5,
        },
        Command::Cq {
            file: f("example-3.1.toml"),
            point: vec![0.0],
            ai: None,
        },
        Command::Classify {
            file: f("example-3.2.toml"),
            point: vec![0.0],
            xi: None,
            notion: Notion::XiQuasiWeak,
        },
        Command::Exists {
            file: f("convex.toml"),
            xi: None,
            quasi: false,
            start: None,
        },
        Command::Exists {
            file: f("convex.toml"),
            xi: None,
            quasi: true,
            start: Some(vec![0.0, 0.0]),
        },
        Command::Suffice {
            file: f("convex.toml"),
            point: vec![0.5, 0.5],
            xi: None,
            mode: SufficiencyMode::QuasiWeak,
            samples: 201,
        },
        Command::Sdp {
            file: f("sdp.toml"),
            point: vec![1.0, 0.0],
            xi: None,
            lambda: None,
            multiplier: None,
        },
        Command::Example { name: "example-3.1".into() },
        Command::Example { name: "example-3.2".into() },
    ];
    let mut differing = Vec::new();
    for cmd in &commands {
        let runs: Vec<String> = (0..3).map(|_| cli::run(cmd).map(|r| r.to_json()).unwrap()).collect();
        if runs.iter().any(|r| r != &runs[0]) {
            differing.push(format!("{cmd:?}"));
        }
    }
    outcome(
        differing.is_empty(),
        format!(
            "{} commands × 3 runs, {} with differing JSON{}",
            commands.len(),
            differing.len(),
            differing.first().map_or(String::new(), |c| format!("; first: {c}"))
        ),
    )
}

fn main() -> ExitCode {
    // keep the default tolerances independent of the caller's environment
    for (key, _) in std::env::vars() {
        if key.starts_with(apcert::tolerances::ENV_PREFIX) {
            std::env::remove_var(key);
        }
    }
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("example-3.1 reproduction", criterion_1),
        ("example-3.2 reproduction", criterion_2),
        ("subdifferential calculus", criterion_3),
        ("necessary conditions on convex instances", criterion_4),
        ("sufficiency on convex instances", criterion_5),
        ("existence searches", criterion_6),
        ("residual minimization", criterion_7),
        ("semidefinite constraints", criterion_8),
        ("deterministic reports", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        failed += usize::from(!o.ok);
        println!(
            "{} {}. {name}: {} [{:.2} s]",
            if o.ok { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {}/{} passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
