//! Stereographic charts of `S^n` and the bubble family.

use serde::{Deserialize, Serialize};

use crate::conformal_ops::ConformalExponents;
use crate::error::{QlabError, Result};
use crate::field::{GridField, RadialField, ScalarField};

fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Stereographic chart of `S^n ⊂ R^{n+1}` sending `base_point` to infinity.
///
/// With the north pole as base point, `ψ(x) = (2x, |x|^2 - 1)/(1 + |x|^2)`.
/// Other base points are reached by the Householder reflection exchanging the
/// north pole and the base point.
#[derive(Debug, Clone, PartialEq)]
pub struct StereoChart {
    n: usize,
    base_point: Vec<f64>,
    householder: Option<Vec<f64>>,
}

impl StereoChart {
    pub fn north_pole(n: usize) -> Self {
        let mut base_point = vec![0.0; n + 1];
        base_point[n] = 1.0;
        Self { n, base_point, householder: None }
    }

    pub fn with_base_point(base_point: Vec<f64>) -> Result<Self> {
        if base_point.len() < 2 {
            return Err(QlabError::InvalidInput("base point needs n + 1 >= 2 coordinates".into()));
        }
        if (norm_sq(&base_point) - 1.0).abs() > 1e-12 {
            return Err(QlabError::InvalidInput("base point must be a unit vector".into()));
        }
        let n = base_point.len() - 1;
        let mut u: Vec<f64> = base_point.iter().map(|p| -p).collect();
        u[n] += 1.0;
        let len = norm_sq(&u).sqrt();
        let householder = (len > 1e-14).then(|| u.into_iter().map(|c| c / len).collect());
        Ok(Self { n, base_point, householder })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn base_point(&self) -> &[f64] {
        &self.base_point
    }

    fn reflect(&self, xi: &mut [f64]) {
        if let Some(u) = &self.householder {
            let d: f64 = u.iter().zip(xi.iter()).map(|(a, b)| a * b).sum();
            for (x, a) in xi.iter_mut().zip(u) {
                *x -= 2.0 * d * a;
            }
        }
    }

    /// `ψ(x)`, a point of the unit sphere in `R^{n+1}`.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let r2 = norm_sq(x);
        let mut xi: Vec<f64> = x.iter().map(|v| 2.0 * v / (1.0 + r2)).collect();
        xi.push((r2 - 1.0) / (1.0 + r2));
        self.reflect(&mut xi);
        xi
    }

    /// Inverse of [`StereoChart::project`]; the base point has no preimage.
    pub fn unproject(&self, xi: &[f64]) -> Result<Vec<f64>> {
        if xi.len() != self.n + 1 {
            return Err(QlabError::DimensionMismatch { expected: self.n + 1, found: xi.len() });
        }
        let mut xi = xi.to_vec();
        self.reflect(&mut xi);
        let last = xi[self.n];
        let head = &xi[..self.n];
        let h2 = norm_sq(head);
        if last > 0.0 {
            // 1 - ξ_{n+1} = |ξ'|^2/(1 + ξ_{n+1}) on the sphere; avoids cancellation
            // points beyond |x| = 1e14 are indistinguishable from the base point
            if h2 < 1e-28 {
                return Err(QlabError::PointAtInfinity);
            }
            Ok(head.iter().map(|v| v * (1.0 + last) / h2).collect())
        } else {
            Ok(head.iter().map(|v| v / (1.0 - last)).collect())
        }
    }

    /// Metric factor `|dψ(x)| = 2/(1 + |x|^2)` of the round metric in the chart.
    pub fn conformal_factor(x: &[f64]) -> f64 {
        2.0 / (1.0 + norm_sq(x))
    }
}

/// `v̂(x) = ṽ(ψ(x)) (2/(1 + |x|^2))^{(n-4)/2}` for a function `ṽ` on the sphere.
pub struct PulledBack<'a, F> {
    chart: &'a StereoChart,
    weight: f64,
    f: F,
}

pub fn pull_back<'a, F>(chart: &'a StereoChart, f: F, exp: &ConformalExponents) -> PulledBack<'a, F>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    PulledBack { chart, weight: exp.weight(), f }
}

impl<F: Fn(&[f64]) -> f64 + Sync> ScalarField for PulledBack<'_, F> {
    fn dim(&self) -> usize {
        self.chart.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(&self.chart.project(x)) * StereoChart::conformal_factor(x).powf(self.weight)
    }
}

/// Samples the pull-back of `f` on the grid `[lo, hi]^n` with `m` nodes per axis.
pub fn pull_back_function<F>(
    chart: &StereoChart,
    f: F,
    exp: &ConformalExponents,
    lo: f64,
    hi: f64,
    m: usize,
) -> Result<GridField>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if exp.n() != chart.dim() {
        return Err(QlabError::DimensionMismatch { expected: chart.dim(), found: exp.n() });
    }
    GridField::sample(chart.dim(), lo, hi, m, &pull_back(chart, f, exp))
}

/// `A·U_{λ,x₀}` with `U_{λ,x₀}(x) = (2λ/(1 + λ^2|x - x₀|^2))^{(n-4)/2}`.
///
/// `U` solves `(-Δ)^2 U = K_n U^{(n+4)/(n-4)}` with `K_n = n(n-4)(n^2-4)/16`;
/// the amplitude `A = K_n^{(n-4)/8}` gives the unit-Q representative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BubbleRecord", into = "BubbleRecord")]
pub struct Bubble {
    n: usize,
    lambda: f64,
    center: Vec<f64>,
    amplitude: f64,
    alpha: f64,
    k_n: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BubbleRecord {
    n: usize,
    lambda: f64,
    center: Vec<f64>,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    amplitude: f64,
}

fn one() -> f64 {
    1.0
}

fn is_one(v: &f64) -> bool {
    *v == 1.0
}

impl TryFrom<BubbleRecord> for Bubble {
    type Error = QlabError;
    fn try_from(s: BubbleRecord) -> Result<Self> {
        Ok(Bubble::new(s.n, s.lambda, s.center)?.with_amplitude(s.amplitude))
    }
}

impl From<Bubble> for BubbleRecord {
    fn from(b: Bubble) -> Self {
        BubbleRecord { n: b.n, lambda: b.lambda, center: b.center, amplitude: b.amplitude }
    }
}

impl Bubble {
    pub fn new(n: usize, lambda: f64, center: Vec<f64>) -> Result<Self> {
        let exp = ConformalExponents::new(n)?;
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(QlabError::NonpositiveScale(lambda));
        }
        if center.len() != n {
            return Err(QlabError::DimensionMismatch { expected: n, found: center.len() });
        }
        let alpha = exp.weight();
        let k_n = exp.bubble_constant();
        debug_assert!({
            // Δ^2 V(0) from the Taylor expansion of the radial profile
            let nf = n as f64;
            let lap2 = 4.0 * nf * alpha * 2f64.powf(alpha) * (nf * (alpha + 2.0) - 2.0);
            (lap2 - k_n * 2f64.powf(alpha + 4.0)).abs() <= 1e-9 * lap2
        });
        Ok(Self { n, lambda, center, amplitude: 1.0, alpha, k_n })
    }

    /// `U_{1,0}`: the round-sphere factor.
    pub fn unit(n: usize) -> Result<Self> {
        Self::new(n, 1.0, vec![0.0; n])
    }

    /// The member of the family with `(-Δ)^2 v = v^q`.
    pub fn unit_q(n: usize, lambda: f64, center: Vec<f64>) -> Result<Self> {
        let b = Self::new(n, lambda, center)?;
        let a = b.k_n.powf((n as f64 - 4.0) / 8.0);
        Ok(b.with_amplitude(a))
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// `K_n = n(n-4)(n^2-4)/16`.
    pub fn k_n(&self) -> f64 {
        self.k_n
    }

    /// Constant `Q` of the metric `v^{4/(n-4)} g_0`: `K_n A^{1-q}`.
    pub fn q_value(&self) -> f64 {
        let q = (self.n as f64 + 4.0) / (self.n as f64 - 4.0);
        self.k_n * self.amplitude.powf(1.0 - q)
    }

    /// Far-field limit of `v(x)|x|^{n-4}`.
    pub fn far_field_leading(&self) -> f64 {
        self.amplitude * (2.0 / self.lambda).powf(self.alpha)
    }

    fn scaled(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let y: Vec<f64> = x.iter().zip(&self.center).map(|(a, c)| self.lambda * (a - c)).collect();
        let r2 = norm_sq(&y);
        (y, r2)
    }

    /// Value as a function of the distance to the center.
    pub fn profile(&self, r: f64) -> f64 {
        let rho2 = (self.lambda * r).powi(2);
        self.amplitude * self.lambda.powf(self.alpha) * (2.0 / (1.0 + rho2)).powf(self.alpha)
    }

    /// `ΔU` as a function of the distance to the center.
    pub fn laplacian_profile(&self, r: f64) -> f64 {
        let rho2 = (self.lambda * r).powi(2);
        self.amplitude * self.lambda.powf(self.alpha + 2.0) * self.unit_laplacian(rho2)
    }

    fn unit_laplacian(&self, rho2: f64) -> f64 {
        let a = self.alpha;
        -2.0 * a * 2f64.powf(a) * (1.0 + rho2).powf(-a - 2.0) * (self.n as f64 + 2.0 * rho2)
    }

    /// `(-Δ)^2 U` in closed form.
    pub fn bilaplacian(&self, x: &[f64]) -> f64 {
        let q = (self.n as f64 + 4.0) / (self.n as f64 - 4.0);
        self.q_value() * self.value(x).powf(q)
    }

    /// Samples the profile on the given radii.
    pub fn radial_field(&self, radii: Vec<f64>) -> Result<RadialField> {
        RadialField::sample(radii, |r| self.profile(r))
    }
}

impl ScalarField for Bubble {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: &[f64]) -> f64 {
        let (_, r2) = self.scaled(x);
        self.amplitude * self.lambda.powf(self.alpha) * (2.0 / (1.0 + r2)).powf(self.alpha)
    }

    fn length_scale(&self) -> f64 {
        1.0 / self.lambda
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let (y, r2) = self.scaled(x);
        let a = self.alpha;
        let v = (2.0 / (1.0 + r2)).powf(a);
        let c = self.amplitude * self.lambda.powf(a + 1.0) * (-2.0 * a * v / (1.0 + r2));
        y.into_iter().map(|yi| c * yi).collect()
    }

    fn laplacian(&self, x: &[f64]) -> f64 {
        let (_, r2) = self.scaled(x);
        self.amplitude * self.lambda.powf(self.alpha + 2.0) * self.unit_laplacian(r2)
    }

    fn laplacian_gradient(&self, x: &[f64]) -> Vec<f64> {
        let (y, r2) = self.scaled(x);
        let a = self.alpha;
        let n = self.n as f64;
        let bracket = -2.0 * (a + 2.0) * (n + 2.0 * r2) + 4.0 * (1.0 + r2);
        let d = -2.0 * a * 2f64.powf(a) * (1.0 + r2).powf(-a - 3.0) * bracket;
        let c = self.amplitude * self.lambda.powf(a + 3.0) * d;
        y.into_iter().map(|yi| c * yi).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal_ops::exponents;

    #[test]
    fn origin_maps_to_south_pole() {
        let c = StereoChart::north_pole(3);
        assert_eq!(c.project(&[0.0, 0.0, 0.0]), vec![0.0, 0.0, 0.0, -1.0]);
        assert_eq!(c.unproject(&[0.0, 0.0, 0.0, 1.0]), Err(QlabError::PointAtInfinity));
    }

    #[test]
    fn general_base_point_round_trip() {
        let s = (0.5f64).sqrt();
        let c = StereoChart::with_base_point(vec![s, 0.0, 0.0, s]).unwrap();
        let x = [0.3, -1.2, 4.0];
        let xi = c.project(&x);
        assert!((norm_sq(&xi) - 1.0).abs() < 1e-14);
        let back = c.unproject(&xi).unwrap();
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(c.unproject(&[s, 0.0, 0.0, s]), Err(QlabError::PointAtInfinity));
        assert!(StereoChart::with_base_point(vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn bubble_values() {
        let b = Bubble::unit(6).unwrap();
        assert_eq!(b.value(&[0.0; 6]), 2.0);
        assert_eq!(b.laplacian(&[0.0; 6]), -24.0);
        assert!((b.bilaplacian(&[0.0; 6]) - 768.0).abs() < 1e-10);
        assert_eq!(b.k_n(), 24.0);
        assert!(Bubble::new(6, 0.0, vec![0.0; 6]).is_err());
        assert!(Bubble::new(6, 1.0, vec![0.0; 5]).is_err());
        assert!(Bubble::new(4, 1.0, vec![0.0; 4]).is_err());
    }

    #[test]
    fn closed_form_derivatives_match_differences() {
        let b = Bubble::new(6, 1.7, vec![0.2, -0.1, 0.0, 0.3, 0.0, 0.5]).unwrap();
        let fd = crate::field::FnField::new(6, |x: &[f64]| b.value(x)).with_length_scale(1.0 / 1.7);
        let x = [0.4, 0.1, -0.3, 0.2, 0.6, -0.2];
        for (a, c) in b.gradient(&x).iter().zip(fd.gradient(&x)) {
            assert!((a - c).abs() < 1e-8);
        }
        assert!((b.laplacian(&x) - fd.laplacian(&x)).abs() < 1e-6);
        for (a, c) in b.laplacian_gradient(&x).iter().zip(fd.laplacian_gradient(&x)) {
            assert!((a - c).abs() < 1e-4 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn unit_q_amplitude() {
        let b = Bubble::unit_q(6, 1.0, vec![0.0; 6]).unwrap();
        assert!((b.q_value() - 1.0).abs() < 1e-12);
        assert!((b.amplitude() - 24f64.powf(0.25)).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let b = Bubble::new(6, 2.0, vec![1.0, 0.0, 0.0, 0.0, 0.0, -1.0]).unwrap();
        let s = serde_json::to_string(&b).unwrap();
        assert_eq!(s, r#"{"n":6,"lambda":2.0,"center":[1.0,0.0,0.0,0.0,0.0,-1.0]}"#);
        let back: Bubble = serde_json::from_str(&s).unwrap();
        assert_eq!(back, b);
        assert!(serde_json::from_str::<Bubble>(r#"{"n":6,"lambda":-1,"center":[0,0,0,0,0,0]}"#)
            .is_err());
    }

    #[test]
    fn pull_back_of_one_is_unit_bubble() {
        let e = exponents(5).unwrap();
        let c = StereoChart::north_pole(5);
        let g = pull_back_function(&c, |_| 1.0, &e, -1.0, 1.0, 5).unwrap();
        let b = Bubble::unit(5).unwrap();
        for i in 0..g.len() {
            assert!((g.value_at(i) - b.value(&g.coords(i))).abs() < 1e-14);
        }
    }
}
