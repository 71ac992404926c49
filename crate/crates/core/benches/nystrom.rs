//! Parallel vs single-worker timings of the three hot loops: Nyström
//! assembly, contour sampling, and iterated-kernel sweeps.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use eigenbound::fredholm::{assemble_bs_matrix, build_grid, determinant_plus, spectral_point};
use eigenbound::kernel::{iterated_kernel, SpectralPoint};
use eigenbound::par;
use eigenbound::verify::kernel_samples;
use eigenbound::zerocount::{winding_traced, Contour, WindingOptions};
use eigenbound::{Complex64, Potential, QuadSpec};

/// Single worker against the full default pool (identical on one core).
fn workers() -> [(&'static str, usize); 2] {
    [("sequential", 1), ("parallel", par::current_threads())]
}

fn assembly(c: &mut Criterion) {
    let p = Potential::bump(Complex64::new(-6.0, 1.0), 1.0);
    let grid = build_grid(&p, 12, 38).unwrap();
    let k = SpectralPoint::new(Complex64::new(0.3, 0.9)).unwrap();
    let mut group = c.benchmark_group("assembly_456");
    group.sample_size(20);
    for (name, n) in workers() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| par::with_threads(n, || assemble_bs_matrix(&grid, k, &p)))
        });
    }
    group.finish();
}

fn contour(c: &mut Criterion) {
    let p = Potential::bump(Complex64::new(-20.0, 0.0), 1.0);
    let grid = build_grid(&p, 8, 26).unwrap();
    let f = |k: Complex64| -> eigenbound::Result<_> {
        Ok(determinant_plus(&assemble_bs_matrix(&grid, spectral_point(k, 1.0)?, &p)).log_det())
    };
    let contour = Contour::Circle { center: Complex64::new(0.0, 2.4), radius: 0.5 };
    let opts = WindingOptions::default();
    let mut group = c.benchmark_group("contour_208");
    group.sample_size(10);
    for (name, n) in workers() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| par::with_threads(n, || winding_traced(&f, contour, &opts).unwrap().winding))
        });
    }
    group.finish();
}

fn kernel_sweep(c: &mut Criterion) {
    let p = Potential::bump(Complex64::new(1.0, 0.5), 1.0);
    let samples = kernel_samples(&p, 16, 0);
    let quad = QuadSpec::default();
    let mut group = c.benchmark_group("kernel_sweep_16");
    group.sample_size(10);
    for (name, n) in workers() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                par::with_threads(n, || {
                    par::map_slice(&samples, |&(x, y, k)| iterated_kernel(k, x, y, &p, &quad).unwrap().value)
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, assembly, contour, kernel_sweep);
criterion_main!(benches);
