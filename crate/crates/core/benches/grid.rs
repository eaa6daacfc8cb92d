//! Grid evaluation and classification, rayon pool vs one thread.
//!
//! With the default `parallel` feature each benchmark runs twice: on the
//! global pool and inside a single-thread pool. Built with
//! `--no-default-features` only the sequential path exists and is measured
//! alone.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use apcert::functions::{CustomAtomRegistry, FuncExpr};
use apcert::oracle::{classify_point, xi_front, FeasibleGrid, GridSpec};
use apcert::problem::{ConstraintBlock, IndexDomain, OmegaSet, Problem};

fn problem() -> Problem {
    let reg = CustomAtomRegistry::default();
    let fe = |s: &str| FuncExpr::parse(s, 2, &reg).unwrap();
    Problem::new(
        2,
        vec![
            fe("(x1 - 1)^2 + x2^2 + 0.1*abs(x1 - x2)"),
            fe("x1^2 + (x2 - 1)^2 + sqcosinv(x1)"),
        ],
        vec![ConstraintBlock {
            expr: fe("t*x1 + (1 - t)*x2 - 0.6"),
            domain: IndexDomain::Interval { lo: 0.0, hi: 1.0, points: 51 },
        }],
        OmegaSet::Box {
            lo: vec![-1.0, -1.0],
            hi: vec![1.0, 1.0],
        },
    )
    .unwrap()
}

type Runner = Box<dyn Fn(&mut (dyn FnMut() + Send))>;

fn modes() -> Vec<(&'static str, Runner)> {
    let mut out: Vec<(&'static str, Runner)> = Vec::new();
    #[cfg(feature = "parallel")]
    {
        out.push(("parallel", Box::new(|f: &mut (dyn FnMut() + Send)| f())));
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        out.push(("one-thread", Box::new(move |f: &mut (dyn FnMut() + Send)| pool.install(f))));
    }
    #[cfg(not(feature = "parallel"))]
    out.push(("sequential", Box::new(|f: &mut (dyn FnMut() + Send)| f())));
    out
}

fn bench_build(c: &mut Criterion) {
    let p = problem();
    let mut group = c.benchmark_group("grid_build");
    group.sample_size(10);
    for points in [101, 301] {
        let spec = GridSpec::new(vec![-1.0, -1.0], vec![1.0, 1.0], points);
        for (name, run) in modes() {
            group.bench_with_input(BenchmarkId::new(name, points * points), &spec, |b, spec| {
                b.iter(|| run(&mut || drop(FeasibleGrid::build(&p, spec, 1e-9).unwrap())))
            });
        }
    }
    group.finish();
}

fn bench_classify(c: &mut Criterion) {
    let p = problem();
    let spec = GridSpec::new(vec![-1.0, -1.0], vec![1.0, 1.0], 301);
    let grid = FeasibleGrid::build(&p, &spec, 1e-9).unwrap();
    let xi = [0.05, 0.05];
    let mut group = c.benchmark_group("classify");
    group.sample_size(20);
    for (name, run) in modes() {
        group.bench_function(BenchmarkId::new(name, grid.len()), |b| {
            b.iter(|| run(&mut || drop(classify_point(&p, &[0.3, 0.3], &xi, &grid, 0.0).unwrap())))
        });
    }
    group.finish();

    let small = FeasibleGrid::build(&p, &GridSpec::new(vec![-1.0, -1.0], vec![1.0, 1.0], 61), 1e-9).unwrap();
    let mut group = c.benchmark_group("xi_front");
    group.sample_size(10);
    for (name, run) in modes() {
        group.bench_function(BenchmarkId::new(name, small.len()), |b| {
            b.iter(|| run(&mut || drop(xi_front(&small, &xi))))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_build, bench_classify);
criterion_main!(benches);
