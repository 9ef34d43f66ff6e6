//! Quadrature rules, sphere measures and deterministic samplers.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Surface area of the unit sphere `S^k ⊂ R^{k+1}`.
pub fn sphere_area(k: usize) -> f64 {
    match k {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (k as f64 - 1.0) * sphere_area(k - 2),
    }
}

/// Volume of the unit ball in `R^n`.
pub fn ball_volume(n: usize) -> f64 {
    sphere_area(n - 1) / n as f64
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; k];
    let mut weights = vec![0.0; k];
    for i in 0..k.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (k as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(k, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, d) = legendre(k, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[k - 1 - i] = x;
        weights[i] = w;
        weights[k - 1 - i] = w;
    }
    (nodes, weights)
}

/// `∫_0^π sin^m θ dθ`.
pub fn sine_power_integral(m: usize) -> f64 {
    match m {
        0 => PI,
        1 => 2.0,
        _ => (m as f64 - 1.0) / m as f64 * sine_power_integral(m - 2),
    }
}

/// Gauss rule for `∫_{-1}^{1} g(t) (1 - t^2)^{(m-1)/2} dt`, i.e. for
/// `∫_0^π g(cos θ) sin^m θ dθ`; exact for polynomials of degree `< 2k`.
/// Nodes come from the eigenvalues of the Gegenbauer Jacobi matrix.
pub fn gauss_gegenbauer(m: usize, k: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1, "sin^0 weight is not supported");
    let lambda = m as f64 / 2.0;
    let mut jacobi = nalgebra::DMatrix::<f64>::zeros(k, k);
    for j in 1..k {
        let jf = j as f64;
        let beta = jf * (jf + 2.0 * lambda - 1.0) / (4.0 * (jf + lambda) * (jf + lambda - 1.0));
        jacobi[(j, j - 1)] = beta.sqrt();
        jacobi[(j - 1, j)] = beta.sqrt();
    }
    let eig = jacobi.symmetric_eigen();
    let mu0 = sine_power_integral(m);
    let mut pairs: Vec<(f64, f64)> = (0..k)
        .map(|i| (eig.eigenvalues[i], mu0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

fn legendre(k: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if k == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=k {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let d = k as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Deterministic generator keyed by `(seed, stream)`; draws within a stream
/// are indexed by position, so every (seed, stream, sample index) triple maps
/// to fixed values regardless of scheduling.
pub fn keyed_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform point on the unit sphere `S^{d-1} ⊂ R^d`.
pub fn uniform_on_sphere(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Uniform point in the ball of radius `radius` about `center`.
pub fn uniform_in_ball(rng: &mut impl Rng, center: &[f64], radius: f64) -> Vec<f64> {
    let d = center.len();
    let dir = uniform_on_sphere(rng, d);
    let t: f64 = rng.random::<f64>().powf(1.0 / d as f64) * radius;
    center.iter().zip(dir).map(|(c, u)| c + t * u).collect()
}

/// Term `index` of the Halton sequence in `[0,1)^d` (prime bases).
pub fn halton(index: usize, d: usize) -> Vec<f64> {
    const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];
    (0..d)
        .map(|k| {
            let base = PRIMES[k % PRIMES.len()];
            let mut f = 1.0;
            let mut r = 0.0;
            let mut i = index as u64 + 1;
            while i > 0 {
                f /= base as f64;
                r += f * (i % base) as f64;
                i /= base;
            }
            r
        })
        .collect()
}

/// Mean and standard error of a sample.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(2) - 4.0 * PI).abs() < 1e-12);
        assert!((sphere_area(3) - 2.0 * PI * PI).abs() < 1e-12);
        assert!((sphere_area(6) - 16.0 * PI.powi(3) / 15.0).abs() < 1e-12);
        assert!((ball_volume(3) - 4.0 / 3.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for k in 1..12 {
            let (x, w) = gauss_legendre(k);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            for deg in 0..(2 * k) {
                let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((approx - exact).abs() < 1e-12, "k={k} deg={deg}");
            }
        }
    }

    #[test]
    fn gegenbauer_moments() {
        for m in 1..6 {
            let (t, w) = gauss_gegenbauer(m, 6);
            assert!((w.iter().sum::<f64>() - sine_power_integral(m)).abs() < 1e-13);
            // ∫ cos^2 θ sin^m θ dθ = I_m / (m + 2)
            let second: f64 = t.iter().zip(&w).map(|(t, w)| w * t * t).sum();
            assert!((second - sine_power_integral(m) / (m as f64 + 2.0)).abs() < 1e-13);
        }
    }

    #[test]
    fn keyed_streams_are_reproducible_and_distinct() {
        let a: Vec<f64> = (0..4).map({
            let mut r = keyed_rng(7, 3);
            move |_| r.random::<f64>()
        }).collect();
        let b: Vec<f64> = (0..4).map({
            let mut r = keyed_rng(7, 3);
            move |_| r.random::<f64>()
        }).collect();
        let c: f64 = keyed_rng(7, 4).random();
        assert_eq!(a, b);
        assert_ne!(a[0], c);
    }

    #[test]
    fn halton_is_in_unit_cube() {
        for i in 0..100 {
            assert!(halton(i, 6).iter().all(|&v| (0.0..1.0).contains(&v)));
        }
        assert_eq!(halton(0, 2), vec![0.5, 1.0 / 3.0]);
    }
}
