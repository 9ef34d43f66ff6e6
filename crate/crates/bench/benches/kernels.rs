use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use qlab_core::conformal_ops::bilaplacian;
use qlab_core::mobius::{estimate_poincare_exponent, SingularSet, Sphere};
use qlab_core::moving_plane::{find_lambda_star, NegLaplacian, PlaneScan};
use qlab_core::radial_blowup::simulate_lower_system;
use qlab_core::rescale::{bubble_match, window_samples};
use qlab_core::{Bubble, GridField, RadialField, SchottkyConfig, SchottkyGroup};

fn two_generator(n: usize) -> SchottkyGroup {
    let mut spheres = Vec::new();
    for (axis, sign) in [(0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0)] {
        let mut c = vec![0.0; n];
        c[axis] = 2.0 * sign;
        spheres.push(Sphere { center: c, radius: 0.5 });
    }
    SchottkyGroup::new(&SchottkyConfig { n, spheres, pairings: vec![[0, 1], [2, 3]], rotations: vec![] })
        .unwrap()
}

fn grid_bilaplacian(c: &mut Criterion) {
    let u = Bubble::unit(6).unwrap();
    let grid = GridField::sample(6, -1.0, 1.0, 13, &u).unwrap();
    c.bench_function("bilaplacian n=6 m=13", |b| b.iter(|| bilaplacian(black_box(&grid)).unwrap()));
}

fn words(c: &mut Criterion) {
    let g = two_generator(6);
    c.bench_function("enumerate words depth 8", |b| b.iter(|| g.enumerate_words(black_box(8)).unwrap()));
    let x = g.base_point();
    c.bench_function("poincare exponent L=10", |b| {
        b.iter(|| estimate_poincare_exponent(&g, black_box(&x), 10, 1e-6).unwrap())
    });
}

fn radial_system(c: &mut Criterion) {
    let radii = RadialField::uniform_radii(3.0, 3001);
    c.bench_function("lower system n=5, 3001 radii", |b| {
        b.iter(|| simulate_lower_system(5, 0.0, -1.0, black_box(radii.clone()), 500, 1e-13).unwrap())
    });
}

fn plane_scan(c: &mut Criterion) {
    let v = Bubble::new(6, 1.0, vec![0.0; 6]).unwrap();
    let w = NegLaplacian(&v);
    let scan = PlaneScan::new(5, [-3.0, 4.0], 0.25);
    c.bench_function("moving plane scan", |b| {
        b.iter(|| find_lambda_star(&v, &w, &SingularSet::empty(), black_box(&scan)).unwrap())
    });
}

fn fit(c: &mut Criterion) {
    let v = Bubble::unit_q(6, 0.7, vec![0.1, -0.2, 0.0, 0.05, 0.0, 0.3]).unwrap();
    let samples = window_samples(&[0.0; 6], 2.0, 600);
    c.bench_function("bubble match 600 samples", |b| b.iter(|| bubble_match(&v, black_box(&samples)).unwrap()));
}

criterion_group!(kernels, grid_bilaplacian, words, radial_system, plane_scan, fit);
criterion_main!(kernels);
