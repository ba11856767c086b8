// SPDX-License-Identifier: Apache-2.0

use std::hint::black_box;

use berkz_core::arith::qi;
use berkz_core::{
    boundary_norm, global_ma_integrate, invariant_metric_sequence, ma_arch, ma_nonarch, mu_total, BoundaryDivisor,
    Form, GlobalConfig, GlobalTropFSMetric, ModelAdelicDivisor, MuQuadratureConfig, NormConfig, Place, PolyMap,
    SpectrumPoint, Term, TestFunction,
};
use criterion::{criterion_group, criterion_main, Criterion};

fn form(s: &str) -> Form {
    Form::parse(s).unwrap()
}

fn cubic() -> GlobalTropFSMetric {
    let sections = ["(X-5*Y)^2*X", "Y^3", "(X+2*Y)^3"];
    GlobalTropFSMetric::new(qi(3), 1, sections.iter().map(|s| Term::pure(form(s))).collect()).unwrap()
}

fn spectrum(c: &mut Criterion) {
    c.bench_function("mu_total/100k", |b| b.iter(|| mu_total(black_box(100_000)).unwrap()));
}

fn fibers(c: &mut Criterion) {
    let phi = cubic();
    let base = SpectrumPoint::p_adic(5, 0.2).unwrap();
    c.bench_function("ma_nonarch/cubic", |b| b.iter(|| ma_nonarch(black_box(&phi), base).unwrap()));
    let std = GlobalTropFSMetric::standard();
    let arch = SpectrumPoint::archimedean(1.0).unwrap();
    let mut g = c.benchmark_group("ma_arch");
    g.sample_size(10);
    for r in [64usize, 128, 256] {
        g.bench_function(format!("std/{r}"), |b| b.iter(|| ma_arch(&std, arch, black_box(r)).unwrap()));
    }
    g.finish();
}

fn adelic(c: &mut Criterion) {
    let d0 = BoundaryDivisor::with_standard_metric(vec![(form("X"), qi(1)), (form("Y"), qi(1))], vec![(Place::Infinity, qi(1))])
        .unwrap();
    let e = ModelAdelicDivisor::new(
        vec![(form("X"), qi(1)), (form("Y"), qi(-1))],
        Vec::new(),
        Vec::new(),
        d0.open_subscheme(),
    )
    .unwrap();
    let cfg = NormConfig::default();
    c.bench_function("boundary_norm/sampled", |b| b.iter(|| boundary_norm(black_box(&e), &d0, &cfg).unwrap()));
    let f = PolyMap::new(form("X^2+Y^2"), form("Y^2")).unwrap();
    c.bench_function("invariant_metric_sequence/6", |b| b.iter(|| invariant_metric_sequence(&f, black_box(6), 512).unwrap()));
}

fn global(c: &mut Criterion) {
    let cfg = GlobalConfig { quadrature: MuQuadratureConfig { cutoff: 1000, nodes: 8 }, resolution: 64 };
    let phi = cubic();
    let one = TestFunction::Constant(1.0);
    let mut g = c.benchmark_group("global_ma_integrate");
    g.sample_size(10);
    g.bench_function("cubic/const", |b| b.iter(|| global_ma_integrate(black_box(&phi), &one, &cfg).unwrap()));
    g.finish();
}

criterion_group!(benches, spectrum, fibers, adelic, global);
criterion_main!(benches);
