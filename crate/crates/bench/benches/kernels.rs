use std::hint::black_box;
use std::sync::Arc;

use alber_core::grid::Grid;
use alber_core::operators::HyperbolicLaplacian;
use alber_core::scheme::{Dynamics, InitMode, InitialInhomogeneity, SchemeConfig, Stepper};
use alber_core::solver::FftPreconditioner;
use alber_core::spectra::{gaussian_gamma, GaussianSpectrum, GaussianSpectrumParams};
use alber_core::stability::{hilbert_transform, nyquist_curve, SymmetricGrid};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use num_complex::Complex64;

const L: f64 = 50.0;

fn field(n: usize) -> Vec<Complex64> {
    (0..n * n).map(|k| Complex64::new((k as f64 * 0.37).sin(), (k as f64 * 0.11).cos())).collect()
}

fn stencil(c: &mut Criterion) {
    let mut group = c.benchmark_group("hyperbolic_laplacian");
    for n in [128, 417] {
        let lap = HyperbolicLaplacian::for_grid(&Grid::new(n, L).unwrap()).unwrap();
        let u = field(n);
        let mut out = vec![Complex64::default(); n * n];
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| lap.apply(black_box(&u), &mut out))
        });
    }
    group.finish();
}

fn preconditioner(c: &mut Criterion) {
    let mut group = c.benchmark_group("fft_preconditioner");
    for n in [128, 417] {
        let lap = HyperbolicLaplacian::for_grid(&Grid::new(n, L).unwrap()).unwrap();
        let mut pre = FftPreconditioner::new(&lap, 5e-4);
        let mut x = field(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| b.iter(|| pre.apply(black_box(&mut x))));
    }
    group.finish();
}

fn step(c: &mut Criterion) {
    let mut group = c.benchmark_group("scheme_step");
    group.sample_size(10);
    for n in [128, 417] {
        let grid = Grid::new(n, L).unwrap();
        let gamma = Arc::new(gaussian_gamma(GaussianSpectrumParams::new(1.6, 0.36).unwrap(), &grid).unwrap());
        let config = SchemeConfig {
            p: 1.0,
            q: 1.0,
            tau: 2e-3,
            final_time: 1.0,
            init_mode: InitMode::Advanced,
            dynamics: Dynamics::Full,
        };
        let mut stepper = Stepper::new(grid, config, gamma).unwrap();
        let mut state = stepper.initial_state(InitialInhomogeneity::reference().field(&grid)).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| stepper.advance(&mut state).unwrap())
        });
    }
    group.finish();
}

fn hilbert(c: &mut Criterion) {
    let spectrum = GaussianSpectrum(GaussianSpectrumParams::new(1.6, 0.36).unwrap());
    let x = 2.0 * std::f64::consts::PI / L;
    let grid = SymmetricGrid::for_spectrum(&spectrum, x);
    let f: Vec<f64> = grid.points().iter().map(|t| (-t * t).exp()).collect();
    c.bench_function("hilbert_transform", |b| b.iter(|| hilbert_transform(black_box(&f), &grid).unwrap()));
    c.bench_function("nyquist_curve", |b| b.iter(|| nyquist_curve(&spectrum, black_box(x), 1.0, 1.0, &grid).unwrap()));
}

criterion_group!(benches, stencil, preconditioner, step, hilbert);
criterion_main!(benches);
