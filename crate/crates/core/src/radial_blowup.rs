//! Spherical averages and the nested radial system behind the positivity
//! argument: `-Δū = \overline{w^q}`, `-Δw̄ = ū`, the iterated lower bounds
//! `w̄(r) >= c_k r^{σ_k}` and their divergence.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use rayon::prelude::*;
use serde::Serialize;

use crate::conformal_ops::ConformalExponents;
use crate::error::{QlabError, Result};
use crate::field::{RadialField, ScalarField};
use crate::quadrature::{gauss_gegenbauer, keyed_rng, uniform_on_sphere};

/// Quadrature rule on the unit sphere `S^{n-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SphereRule {
    /// Gauss–Gegenbauer in each polar angle times the uniform rule in the
    /// azimuth; exact for polynomials of degree `< 2·theta_nodes` (and
    /// `< phi_nodes` in the azimuth).
    Product { theta_nodes: usize, phi_nodes: usize },
    /// Antithetic pairs `±σ` of uniform directions from a fixed seed; exact for
    /// odd functions and for `|x|^2`.
    MonteCarlo { pairs: usize, seed: u64 },
}

impl SphereRule {
    /// Product rule with 8 polar nodes for `n <= 6`, Monte Carlo with 20000
    /// pairs above.
    pub fn default_for(n: usize) -> Self {
        if n <= 6 {
            SphereRule::Product { theta_nodes: 8, phi_nodes: 16 }
        } else {
            SphereRule::MonteCarlo { pairs: 20_000, seed: 0 }
        }
    }

    /// Unit directions and weights summing to one.
    pub fn nodes(&self, n: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        if n < 2 {
            return Err(QlabError::InvalidInput("spherical averages need n >= 2".into()));
        }
        match *self {
            SphereRule::Product { theta_nodes, phi_nodes } => {
                if theta_nodes == 0 || phi_nodes == 0 {
                    return Err(QlabError::InvalidInput("empty sphere rule".into()));
                }
                let mut pts = vec![(Vec::<f64>::new(), 1.0, 1.0)];
                // polar angle k carries weight sin^{n-2-k}
                for k in 0..n - 2 {
                    let (t, w) = gauss_gegenbauer(n - 2 - k, theta_nodes);
                    let mut next = Vec::with_capacity(pts.len() * t.len());
                    for (coords, weight, sin_prod) in &pts {
                        for (ti, wi) in t.iter().zip(&w) {
                            let mut c = coords.clone();
                            c.push(sin_prod * ti);
                            next.push((c, weight * wi, sin_prod * (1.0 - ti * ti).sqrt()));
                        }
                    }
                    pts = next;
                }
                let mut dirs = Vec::with_capacity(pts.len() * phi_nodes);
                let mut weights = Vec::with_capacity(dirs.capacity());
                for (coords, weight, sin_prod) in &pts {
                    for j in 0..phi_nodes {
                        let phi = 2.0 * std::f64::consts::PI * j as f64 / phi_nodes as f64;
                        let mut c = coords.clone();
                        c.push(sin_prod * phi.cos());
                        c.push(sin_prod * phi.sin());
                        dirs.push(c);
                        weights.push(*weight);
                    }
                }
                let total: f64 = weights.iter().sum();
                weights.iter_mut().for_each(|w| *w /= total);
                Ok((dirs, weights))
            }
            SphereRule::MonteCarlo { pairs, seed } => {
                if pairs == 0 {
                    return Err(QlabError::InvalidInput("empty sphere rule".into()));
                }
                let mut rng = keyed_rng(seed, 0);
                let mut dirs = Vec::with_capacity(2 * pairs);
                for _ in 0..pairs {
                    let d = uniform_on_sphere(&mut rng, n);
                    dirs.push(d.iter().map(|v| -v).collect());
                    dirs.push(d);
                }
                let w = 1.0 / dirs.len() as f64;
                Ok((dirs, vec![w; 2 * pairs]))
            }
        }
    }
}

/// `f̄(r) = |S^{n-1}|^{-1} ∫_{S^{n-1}} f(center + rσ) dσ` at each radius.
pub fn spherical_average(
    f: &dyn ScalarField,
    center: &[f64],
    radii: Vec<f64>,
    rule: &SphereRule,
) -> Result<RadialField> {
    let n = f.dim();
    if center.len() != n {
        return Err(QlabError::DimensionMismatch { expected: n, found: center.len() });
    }
    let (dirs, weights) = rule.nodes(n)?;
    let values: Vec<Result<f64>> = radii
        .par_iter()
        .map(|&r| {
            let mut x = vec![0.0; n];
            let mut acc = 0.0;
            for (d, w) in dirs.iter().zip(&weights) {
                for i in 0..n {
                    x[i] = center[i] + r * d[i];
                }
                if !f.contains(&x) {
                    return Err(QlabError::SphereExitsDomain { radius: r });
                }
                acc += w * f.value(&x);
            }
            Ok(acc)
        })
        .collect();
    RadialField::new(radii, values.into_iter().collect::<Result<_>>()?)
}

/// `J[f](r) = ∫_0^r s^{1-n} ∫_0^s t^{n-1} f(t) dt ds` on the grid of `f`.
///
/// The inner integral treats `f` as piecewise linear and integrates
/// `t^{n-1}(A + Bt)` exactly on each cell; the outer one applies the
/// trapezoid rule to `s^{1-n} ∫_0^s`, which vanishes like `s f(0)/n` at 0.
pub fn nested_radial_integral(radii: &[f64], f: &[f64], n: usize) -> Vec<f64> {
    let m = radii.len();
    let mut out = vec![0.0; m];
    let mut inner = 0.0;
    let mut prev_g = 0.0;
    for i in 1..m {
        let (a, b) = (radii[i - 1], radii[i]);
        let h = b - a;
        let (m0, m1) = cell_moments(a, h, n);
        let slope = (f[i] - f[i - 1]) / h;
        inner += f[i - 1] * m0 + slope * m1;
        let g = inner / b.powi(n as i32 - 1);
        out[i] = out[i - 1] + 0.5 * h * (prev_g + g);
        prev_g = g;
    }
    out
}

/// `(∫_a^{a+h} t^{n-1} dt, ∫_a^{a+h} t^{n-1}(t - a) dt)` by binomial
/// expansion, which has no cancellation.
fn cell_moments(a: f64, h: f64, n: usize) -> (f64, f64) {
    let mut binom = 1.0;
    let (mut m0, mut m1) = (0.0, 0.0);
    for k in 0..n {
        let term = binom * a.powi((n - 1 - k) as i32);
        m0 += term * h.powi(k as i32 + 1) / (k as f64 + 1.0);
        m1 += term * h.powi(k as i32 + 2) / (k as f64 + 2.0);
        binom = binom * (n - 1 - k) as f64 / (k as f64 + 1.0);
    }
    (m0, m1)
}

/// Spherical averages `(w̄, ū)` on a radius grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialState {
    pub n: usize,
    pub q: f64,
    pub radii: Vec<f64>,
    pub w_bar: Vec<f64>,
    pub u_bar: Vec<f64>,
}

/// `ū = u0 - J[source]`, `w̄ = w0 - J[ū]`.
pub fn integrate_radial_system(
    n: usize,
    w0: f64,
    u0: f64,
    source: &RadialField,
) -> Result<RadialState> {
    let exp = ConformalExponents::new(n)?;
    let valid = source.valid_len();
    for (index, &value) in source.values()[..valid].iter().enumerate() {
        if value < 0.0 || !value.is_finite() {
            return Err(QlabError::NegativeSource { index, value });
        }
    }
    let radii = &source.radii()[..valid];
    let j_src = nested_radial_integral(radii, &source.values()[..valid], n);
    let u_bar: Vec<f64> = j_src.iter().map(|j| u0 - j).collect();
    let j_u = nested_radial_integral(radii, &u_bar, n);
    let w_bar = j_u.iter().map(|j| w0 - j).collect();
    Ok(RadialState { n, q: exp.q(), radii: radii.to_vec(), w_bar, u_bar })
}

/// Minimal solution of the averaged system with the Jensen lower source
/// `max(w̄, 0)^q`, by Picard iteration from the zero source.
pub fn simulate_lower_system(
    n: usize,
    w0: f64,
    u0: f64,
    radii: Vec<f64>,
    max_iter: usize,
    tol: f64,
) -> Result<RadialState> {
    let q = ConformalExponents::new(n)?.q();
    let zero = RadialField::new(radii.clone(), vec![0.0; radii.len()])?;
    let mut state = integrate_radial_system(n, w0, u0, &zero)?;
    for _ in 0..max_iter {
        let src: Vec<f64> = state.w_bar.iter().map(|w| w.max(0.0).powf(q)).collect();
        let next = integrate_radial_system(n, w0, u0, &RadialField::new(radii.clone(), src)?)?;
        let change = next
            .w_bar
            .iter()
            .zip(&state.w_bar)
            .map(|(a, b)| (a - b).abs() / a.abs().max(1.0))
            .fold(0.0, f64::max);
        state = next;
        if !change.is_finite() {
            break;
        }
        if change < tol {
            return Ok(state);
        }
    }
    Err(QlabError::InvalidInput(format!(
        "iteration did not settle within {max_iter} sweeps; the radius range likely reaches blow-up"
    )))
}

fn q_rational(n: usize) -> Result<BigRational> {
    let exp = ConformalExponents::new(n)?;
    let r = exp.nonlinearity_ratio();
    Ok(BigRational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom())))
}

/// `σ_0 = 2`, `σ_k = q σ_{k-1} + 4` in exact arithmetic.
pub fn sigma_sequence(n: usize, k_max: usize) -> Result<Vec<BigRational>> {
    let q = q_rational(n)?;
    let four = BigRational::from_integer(4.into());
    let mut out = vec![BigRational::from_integer(2.into())];
    for k in 1..=k_max {
        let next = &q * &out[k - 1] + &four;
        out.push(next);
    }
    Ok(out)
}

/// `σ_k = 2q^k + 4q^k/(q-1) - 4/(q-1)`.
pub fn sigma_closed_form(n: usize, k: usize) -> Result<BigRational> {
    let q = q_rational(n)?;
    let qk = num_traits::pow(q.clone(), k);
    let four = BigRational::from_integer(4.into());
    let qm1 = &q - BigRational::one();
    Ok(BigRational::from_integer(2.into()) * &qk + &four * &qk / &qm1 - &four / &qm1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateEntry {
    pub k: usize,
    pub sigma: f64,
    /// Exact `σ_k` as a fraction string.
    pub sigma_exact: String,
    /// `ln c_k` for the product form `c_k = c_{k-1}^q (n + σ_k)^{-4}`.
    pub log_c_product: f64,
    /// `ln c_k` for the bound obtained by integrating `c_{k-1}^q r^{qσ_{k-1}}` twice.
    pub log_c_sharp: f64,
}

impl CertificateEntry {
    pub fn c_product(&self) -> f64 {
        self.log_c_product.exp()
    }

    pub fn c_sharp(&self) -> f64 {
        self.log_c_sharp.exp()
    }

    /// `c_k r^{σ_k}` with the sharp coefficient.
    pub fn bound(&self, r: f64) -> f64 {
        if r == 0.0 {
            return 0.0;
        }
        (self.log_c_sharp + self.sigma * r.ln()).exp()
    }

    pub fn product_bound(&self, r: f64) -> f64 {
        if r == 0.0 {
            return 0.0;
        }
        (self.log_c_product + self.sigma * r.ln()).exp()
    }
}

/// Lower bounds `w̄(r) >= c_k r^{σ_k}` for `u(0) = u0 < 0` and their collapsed
/// form `w̄(r) >= c_1 (c_2 r)^{σ_k}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationCertificate {
    pub n: usize,
    pub u0: f64,
    pub entries: Vec<CertificateEntry>,
    pub c1: f64,
    pub c2: f64,
    /// `1/c_2`: beyond this radius the bounds grow without limit in `k`.
    pub divergence_threshold: f64,
    /// Smallest grid radius with `c_2 r > 1`.
    pub divergence_radius: Option<f64>,
}

impl IterationCertificate {
    /// `c_1 (c_2 r)^{σ_k}`.
    pub fn collapsed_bound(&self, r: f64, k: usize) -> f64 {
        self.c1 * (self.c2 * r).powf(self.entries[k].sigma)
    }
}

/// Builds the certificate for `k <= k_max`.
///
/// With `B = 2 + 4/(q-1)` one has `σ_j <= B q^j`, hence
/// `ln c_k >= q^k L` with `L = ln c_0 - 4 ln(n+B)/(q-1) - 4q ln q/(q-1)^2`,
/// and `q^k = (σ_k + 4/(q-1))/B` gives `c_2 = e^{L/B}`,
/// `c_1 = e^{4L/(B(q-1))}`.
pub fn iterate_lower_bounds(
    n: usize,
    u0: f64,
    k_max: usize,
    radii: &[f64],
) -> Result<IterationCertificate> {
    if !(u0 < 0.0) {
        return Err(QlabError::InvalidInput(format!("u(0) = {u0} must be negative")));
    }
    let exp = ConformalExponents::new(n)?;
    let q = exp.q();
    let nf = n as f64;
    let sigmas = sigma_sequence(n, k_max)?;
    let log_c0 = (-u0 / (2.0 * nf)).ln();
    let mut entries = vec![CertificateEntry {
        k: 0,
        sigma: 2.0,
        sigma_exact: "2".into(),
        log_c_product: log_c0,
        log_c_sharp: log_c0,
    }];
    for k in 1..=k_max {
        let prev = &entries[k - 1];
        let sigma = sigmas[k].to_f64().unwrap_or(f64::INFINITY);
        let a = q * prev.sigma;
        let sharp_den = (nf + a).ln() + (a + 2.0).ln() + (nf + a + 2.0).ln() + (a + 4.0).ln();
        entries.push(CertificateEntry {
            k,
            sigma,
            sigma_exact: sigmas[k].to_string(),
            log_c_product: q * prev.log_c_product - 4.0 * (nf + sigma).ln(),
            log_c_sharp: q * prev.log_c_sharp - sharp_den,
        });
    }
    let b = 2.0 + 4.0 / (q - 1.0);
    let l = log_c0 - 4.0 * (nf + b).ln() / (q - 1.0) - 4.0 * q * q.ln() / (q - 1.0).powi(2);
    let c2 = (l / b).exp();
    let c1 = (4.0 * l / (b * (q - 1.0))).exp();
    let divergence_radius = radii.iter().copied().find(|r| c2 * r > 1.0);
    Ok(IterationCertificate {
        n,
        u0,
        entries,
        c1,
        c2,
        divergence_threshold: 1.0 / c2,
        divergence_radius,
    })
}

/// Outcome of comparing `(mean w)^q` with `mean(w^q)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JensenCheck {
    /// `mean(w^q) - (mean w)^q`.
    pub slack: f64,
    /// `slack >= -1e-12·max(1, mean(w^q))`.
    pub holds: bool,
}

pub fn jensen_check(samples: &[f64], q: f64) -> Result<JensenCheck> {
    if samples.is_empty() {
        return Err(QlabError::InvalidInput("no samples".into()));
    }
    if !(q > 1.0) {
        return Err(QlabError::InvalidInput(format!("exponent {q} must exceed 1")));
    }
    if let Some(&bad) = samples.iter().find(|w| !(**w >= 0.0)) {
        return Err(QlabError::NegativeSample(bad));
    }
    let m = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / m;
    let mean_q = samples.iter().map(|w| w.powf(q)).sum::<f64>() / m;
    let slack = mean_q - mean.powf(q);
    Ok(JensenCheck { slack, holds: slack >= -1e-12 * mean_q.max(1.0) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FnField;

    #[test]
    fn averages_of_simple_functions() {
        for n in [2usize, 3, 5, 6, 8] {
            let rule = SphereRule::default_for(n);
            let c: Vec<f64> = (0..n).map(|i| 0.1 * i as f64).collect();
            let radii = vec![0.0, 0.5, 1.5];
            let cc = c.clone();
            let quad = FnField::new(n, move |x: &[f64]| {
                x.iter().zip(&cc).map(|(a, b)| (a - b).powi(2)).sum()
            });
            let avg = spherical_average(&quad, &c, radii.clone(), &rule).unwrap();
            for (r, v) in radii.iter().zip(avg.values()) {
                assert!((v - r * r).abs() < 1e-10 * (1.0 + r * r), "n={n}");
            }
            let lin = FnField::new(n, |x: &[f64]| 3.0 + x[0] - 2.0 * x[n - 1]);
            let avg = spherical_average(&lin, &c, radii.clone(), &rule).unwrap();
            let at_c = 3.0 + c[0] - 2.0 * c[n - 1];
            assert!(avg.values().iter().all(|v| (v - at_c).abs() < 1e-10));
        }
    }

    #[test]
    fn quartic_average_is_exact_for_product_rule() {
        // mean of x_1^4 over S^{n-1} is 3/(n(n+2))
        let n = 5;
        let f = FnField::new(n, |x: &[f64]| x[0].powi(4));
        let avg = spherical_average(&f, &[0.0; 5], vec![0.0, 1.0], &SphereRule::default_for(n))
            .unwrap();
        assert!((avg.values()[1] - 3.0 / 35.0).abs() < 1e-14);
    }

    #[test]
    fn zero_source_closed_form() {
        let n = 5;
        let radii = RadialField::uniform_radii(2.0, 201);
        let zero = RadialField::new(radii.clone(), vec![0.0; 201]).unwrap();
        let s = integrate_radial_system(n, 0.0, -1.0, &zero).unwrap();
        for (r, (w, u)) in radii.iter().zip(s.w_bar.iter().zip(&s.u_bar)) {
            assert_eq!(*u, -1.0);
            assert!((w - r * r / 10.0).abs() < 1e-13);
        }
    }

    #[test]
    fn negative_source_is_rejected() {
        let radii = RadialField::uniform_radii(1.0, 5);
        let src = RadialField::new(radii, vec![0.0, 1.0, -1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            integrate_radial_system(5, 0.0, -1.0, &src),
            Err(QlabError::NegativeSource { index: 2, .. })
        ));
    }

    #[test]
    fn sigma_spot_values() {
        let s5: Vec<String> = sigma_sequence(5, 2).unwrap().iter().map(|s| s.to_string()).collect();
        assert_eq!(s5, ["2", "22", "202"]);
        let s8: Vec<String> = sigma_sequence(8, 2).unwrap().iter().map(|s| s.to_string()).collect();
        assert_eq!(s8, ["2", "10", "34"]);
    }

    #[test]
    fn jensen_examples() {
        assert_eq!(jensen_check(&[2.0; 4], 3.0).unwrap().slack, 0.0);
        let two = jensen_check(&[0.0, 2.0], 2.0).unwrap();
        assert_eq!(two.slack, 1.0);
        assert!(two.holds);
        assert_eq!(jensen_check(&[1.0, -1.0], 2.0), Err(QlabError::NegativeSample(-1.0)));
    }

    #[test]
    fn first_certificate_entry() {
        let n = 6;
        let cert = iterate_lower_bounds(n, -2.0, 2, &[]).unwrap();
        let (nf, q) = (6.0, 5.0);
        let c0: f64 = 2.0 / 12.0;
        let expect = c0.powf(q) / ((nf + 2.0 * q) * (2.0 * q + 2.0) * (nf + 2.0 + 2.0 * q) * (2.0 * q + 4.0));
        assert!((cert.entries[1].c_sharp() / expect - 1.0).abs() < 1e-12);
        assert!(cert.entries[1].c_product() <= cert.entries[1].c_sharp());
        assert!(iterate_lower_bounds(n, 0.0, 2, &[]).is_err());
    }
}
