use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use mhd_core::assembly::{cross_form, mass_matrix, AnalyticField, FieldRef, TestOp};
use mhd_core::par::{with_execution, Execution};
use mhd_core::timestepper::{SimParams, Sources, Stepper};
use mhd_core::{DeRham, SpaceKind};
use std::f64::consts::PI;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn b0(p: [f64; 3]) -> [f64; 3] {
    [-(PI * p[0]).sin() * (PI * p[1]).cos(), (PI * p[0]).cos() * (PI * p[1]).sin(), 0.0]
}

fn u0(p: [f64; 3]) -> [f64; 3] {
    let z = p[2] * (p[2] - 1.0);
    [
        -(PI * (p[0] - 0.5)).sin() * (PI * (p[1] - 0.5)).cos() * z,
        (PI * (p[0] - 0.5)).cos() * (PI * (p[1] - 0.5)).sin() * z,
        0.0,
    ]
}

fn assembly(c: &mut Criterion) {
    let d = DeRham::structured(12).unwrap();
    let u = d.canonical_interpolate(AnalyticField::Vector(&u0), SpaceKind::Curl).unwrap();
    let b = d.canonical_interpolate(AnalyticField::Vector(&b0), SpaceKind::Div).unwrap();
    let mut g = c.benchmark_group("assembly_n12");
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::new("cross_form", name), |bench| {
            bench.iter(|| {
                with_execution(mode, || {
                    cross_form(
                        d.mesh(),
                        FieldRef::Edge(&u.coeffs),
                        FieldRef::Face(&b.coeffs),
                        TestOp::Value,
                        &d.quadrature().trilinear,
                    )
                    .unwrap()
                })
            })
        });
        g.bench_function(BenchmarkId::new("edge_mass", name), |bench| {
            bench.iter(|| with_execution(mode, || mass_matrix(d.mesh(), SpaceKind::Curl, &d.quadrature().mass)))
        });
        let m = d.mass(SpaceKind::Curl);
        g.bench_function(BenchmarkId::new("matvec", name), |bench| {
            bench.iter(|| with_execution(mode, || m.mul_vec(black_box(&u.coeffs))))
        });
    }
    g.finish();
}

fn time_step(c: &mut Criterion) {
    let d = DeRham::structured(6).unwrap();
    let params = SimParams { dt: 5e-3, ..Default::default() };
    let st = Stepper::new(&d, params).unwrap();
    let src = Sources::none();
    let s0 = st.initial_state(AnalyticField::Vector(&u0), AnalyticField::Vector(&b0), 0.0, &src).unwrap();
    let mut g = c.benchmark_group("step_n6");
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_function(name, |bench| bench.iter(|| with_execution(mode, || st.step(&s0, &src).unwrap())));
    }
    g.finish();
}

criterion_group!(benches, assembly, time_step);
criterion_main!(benches);
