//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use qlab_core::mobius::Sphere;
use qlab_core::{ScalarField, SchottkyConfig};

/// Two generators pairing the balls at `±2e_1` and `±2e_2`.
pub fn two_generator_config(n: usize, r: f64) -> SchottkyConfig {
    let mut spheres = Vec::new();
    for (axis, sign) in [(0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0)] {
        let mut c = vec![0.0; n];
        c[axis] = 2.0 * sign;
        spheres.push(Sphere { center: c, radius: r });
    }
    SchottkyConfig { n, spheres, pairings: vec![[0, 1], [2, 3]], rotations: vec![] }
}

/// Letter-by-letter evaluation of a word from the raw sphere data: the
/// generator of pairing `[i, j]` is `x ↦ c_j + (r_j/r_i)(ι_i(x) - c_i)`.
/// Returns the image and `ln |γ'(x)|` (Euclidean).
pub fn word_oracle(cfg: &SchottkyConfig, letters: &[u8], x: &[f64]) -> (Vec<f64>, f64) {
    let mut y = x.to_vec();
    let mut log_d = 0.0;
    for &l in letters.iter().rev() {
        let [i, j] = cfg.pairings[(l / 2) as usize];
        let (si, sj) = (&cfg.spheres[i], &cfg.spheres[j]);
        let s = sj.radius / si.radius;
        if l % 2 == 0 {
            let d2: f64 = y.iter().zip(&si.center).map(|(a, c)| (a - c).powi(2)).sum();
            let k = si.radius * si.radius / d2;
            for t in 0..y.len() {
                y[t] = sj.center[t] + s * k * (y[t] - si.center[t]);
            }
            log_d += (s * k).ln();
        } else {
            let z: Vec<f64> =
                y.iter().zip(&sj.center).zip(&si.center).map(|((a, cj), ci)| ci + (a - cj) / s).collect();
            let d2: f64 = z.iter().zip(&si.center).map(|(a, c)| (a - c).powi(2)).sum();
            let k = si.radius * si.radius / d2;
            for t in 0..y.len() {
                y[t] = si.center[t] + k * (z[t] - si.center[t]);
            }
            log_d += (k / s).ln();
        }
    }
    (y, log_d)
}

/// All reduced words of length at most `depth` on `2 * rank` letters, by
/// brute force over every letter string.
pub fn brute_force_reduced_words(rank: usize, depth: usize) -> usize {
    let letters = 2 * rank;
    let mut count = 0;
    for len in 0..=depth {
        for code in 0..letters.pow(len as u32) {
            let mut c = code;
            let mut word = Vec::with_capacity(len);
            for _ in 0..len {
                word.push(c % letters);
                c /= letters;
            }
            if word.windows(2).all(|w| w[0] != (w[1] ^ 1)) {
                count += 1;
            }
        }
    }
    count
}

/// Composite Simpson rule with `panels` (even) subintervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    assert!(panels.is_multiple_of(2));
    let h = (b - a) / panels as f64;
    let mut s = f(a) + f(b);
    for i in 1..panels {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// `|S^k|` as `2π ∏_{j=1}^{k-1} ∫_0^π sin^j`, each factor by Simpson.
pub fn sphere_volume_simpson(k: usize) -> f64 {
    let mut v = 2.0 * std::f64::consts::PI;
    for j in 1..k {
        v *= simpson(|t| t.sin().powi(j as i32), 0.0, std::f64::consts::PI, 20_000);
    }
    v
}

/// Shortest of the geodesics of `v^{4/(n-4)} g_0` from `p` to `q` reached by
/// shooting from the chord velocity bent towards and away from `bend`.
pub fn shortest_geodesic(
    v: &dyn ScalarField,
    p: &[f64],
    q: &[f64],
    bend: &[f64],
    steps: usize,
) -> Option<Vec<Vec<f64>>> {
    let n = p.len();
    let chord: Vec<f64> = q.iter().zip(p).map(|(a, b)| a - b).collect();
    let len = chord.iter().map(|c| c * c).sum::<f64>().sqrt();
    let bn = bend.iter().map(|c| c * c).sum::<f64>().sqrt().max(1e-300);
    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    for t in [0.0, 1.0, -1.0, 2.0, -2.0, 4.0, -4.0] {
        let guess: Vec<f64> = (0..n).map(|i| chord[i] + t * len * bend[i] / bn).collect();
        if let Some(path) = shoot_geodesic(v, p, q, &guess, steps) {
            let l = path_length(v, &path);
            if best.as_ref().is_none_or(|(b, _)| l < *b) {
                best = Some((l, path));
            }
        }
    }
    best.map(|(_, p)| p)
}

/// Length of a polygonal path in `v^{4/(n-4)} g_0`, conformal factor at the
/// segment midpoints.
pub fn path_length(v: &dyn ScalarField, path: &[Vec<f64>]) -> f64 {
    let c = 2.0 / (path[0].len() as f64 - 4.0);
    path.windows(2)
        .map(|w| {
            let mid: Vec<f64> = w[0].iter().zip(&w[1]).map(|(a, b)| 0.5 * (a + b)).collect();
            let d = w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            v.value(&mid).powf(c) * d
        })
        .sum()
}

/// Geodesic of `v^{4/(n-4)} g_0` joining `p` to `q`, found by shooting on
/// `ẍ = -2(∇f·ẋ)ẋ + |ẋ|²∇f` with `f = (2/(n-4)) ln v`, starting Newton from
/// the initial velocity `guess`. Returns the path sampled at `steps + 1`
/// equally spaced parameter values.
pub fn shoot_geodesic(
    v: &dyn ScalarField,
    p: &[f64],
    q: &[f64],
    guess: &[f64],
    steps: usize,
) -> Option<Vec<Vec<f64>>> {
    let n = p.len();
    let c = 2.0 / (n as f64 - 4.0);
    let accel = |x: &[f64], u: &[f64]| -> Vec<f64> {
        let val = v.value(x);
        let g: Vec<f64> = v.gradient(x).iter().map(|d| c * d / val).collect();
        let gu: f64 = g.iter().zip(u).map(|(a, b)| a * b).sum();
        let uu: f64 = u.iter().map(|a| a * a).sum();
        (0..n).map(|i| -2.0 * gu * u[i] + uu * g[i]).collect()
    };
    let integrate = |u0: &[f64]| -> Vec<Vec<f64>> {
        let h = 1.0 / steps as f64;
        let mut x = p.to_vec();
        let mut u = u0.to_vec();
        let mut path = vec![x.clone()];
        let axpy = |a: &[f64], s: f64, b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(a, b)| a + s * b).collect()
        };
        for _ in 0..steps {
            let k1x = u.clone();
            let k1u = accel(&x, &u);
            let k2x = axpy(&u, h / 2.0, &k1u);
            let k2u = accel(&axpy(&x, h / 2.0, &k1x), &k2x);
            let k3x = axpy(&u, h / 2.0, &k2u);
            let k3u = accel(&axpy(&x, h / 2.0, &k2x), &k3x);
            let k4x = axpy(&u, h, &k3u);
            let k4u = accel(&axpy(&x, h, &k3x), &k4x);
            for i in 0..n {
                x[i] += h / 6.0 * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i]);
                u[i] += h / 6.0 * (k1u[i] + 2.0 * k2u[i] + 2.0 * k3u[i] + k4u[i]);
            }
            path.push(x.clone());
        }
        path
    };
    let miss = |u0: &[f64]| -> DVector<f64> {
        let end = integrate(u0).pop().unwrap();
        DVector::from_iterator(n, end.iter().zip(q).map(|(a, b)| a - b))
    };
    let scale: f64 = p.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let mut u = guess.to_vec();
    let mut r = miss(&u);
    for _ in 0..60 {
        if r.norm() < 1e-10 * scale.max(1.0) {
            return Some(integrate(&u));
        }
        let eps = 1e-7 * scale.max(1.0);
        let mut jac = DMatrix::zeros(n, n);
        for k in 0..n {
            let mut up = u.clone();
            up[k] += eps;
            let col = (miss(&up) - &r) / eps;
            jac.set_column(k, &col);
        }
        let step = jac.lu().solve(&(-&r))?;
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
            let rt = miss(&trial);
            if rt.iter().all(|x| x.is_finite()) && rt.norm() < r.norm() {
                u = trial;
                r = rt;
                break;
            }
            t *= 0.5;
            if t < 1e-6 {
                return None;
            }
        }
    }
    None
}
