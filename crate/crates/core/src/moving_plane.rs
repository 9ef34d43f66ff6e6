//! Reflections across hyperplanes, far-field expansions, the critical plane
//! `Λ*` and the convexity diagnostic for round balls in `v^{4/(n-4)} g_0`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::conformal_ops::ConformalExponents;
use crate::error::{QlabError, Result};
use crate::field::ScalarField;
use crate::mobius::{MobiusMap, SingularSet};
use crate::quadrature::{halton, keyed_rng, uniform_on_sphere};

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `x^Λ`: the `axis` coordinate replaced by `2Λ - x_axis`.
pub fn reflect(x: &[f64], lambda: f64, axis: usize) -> Vec<f64> {
    let mut y = x.to_vec();
    y[axis] = 2.0 * lambda - y[axis];
    y
}

/// `v^Λ(x) = v(x^Λ)`.
pub struct Reflected<F> {
    inner: F,
    lambda: f64,
    axis: usize,
}

pub fn reflect_field<F: ScalarField>(v: F, lambda: f64, axis: usize) -> Reflected<F> {
    Reflected { inner: v, lambda, axis }
}

impl<F: ScalarField> ScalarField for Reflected<F> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.inner.value(&reflect(x, self.lambda, self.axis))
    }
    fn contains(&self, x: &[f64]) -> bool {
        self.inner.contains(&reflect(x, self.lambda, self.axis))
    }
    fn length_scale(&self) -> f64 {
        self.inner.length_scale()
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.inner.gradient(&reflect(x, self.lambda, self.axis));
        g[self.axis] = -g[self.axis];
        g
    }
    fn laplacian(&self, x: &[f64]) -> f64 {
        self.inner.laplacian(&reflect(x, self.lambda, self.axis))
    }
    fn laplacian_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.inner.laplacian_gradient(&reflect(x, self.lambda, self.axis));
        g[self.axis] = -g[self.axis];
        g
    }
}

/// `w = -Δv` of a field, with `∇w = -∇Δv`.
pub struct NegLaplacian<F>(pub F);

impl<F: ScalarField> ScalarField for NegLaplacian<F> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        -self.0.laplacian(x)
    }
    fn contains(&self, x: &[f64]) -> bool {
        self.0.contains(x)
    }
    fn length_scale(&self) -> f64 {
        self.0.length_scale()
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.0.laplacian_gradient(x).into_iter().map(|g| -g).collect()
    }
}

/// `v(x) ≈ |x|^{4-n}(a_0 + a_i x_i/|x|^2 + a_{ij} x_i x_j/|x|^4)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FarFieldExpansion {
    pub n: usize,
    pub a0: f64,
    pub a: Vec<f64>,
    /// Symmetric; off-diagonal entries carry half of the `x_i x_j` coefficient.
    pub a2: Vec<Vec<f64>>,
    pub annulus: [f64; 2],
    /// Largest misfit of `v|x|^{n-4}` on the samples relative to `|a_0|`.
    pub residual: f64,
    /// Singular-value ratio of the column-normalized design matrix.
    pub condition: f64,
    pub samples: usize,
}

impl FarFieldExpansion {
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let mut s = self.a0;
        for i in 0..self.n {
            s += self.a[i] * x[i] / r2;
            for j in 0..self.n {
                s += self.a2[i][j] * x[i] * x[j] / (r2 * r2);
            }
        }
        s * r2.powf((4.0 - self.n as f64) / 2.0)
    }
}

const MAX_FIT_CONDITION: f64 = 1e12;

/// Least-squares fit of the expansion on `samples` random points of the
/// annulus `R_1 <= |x| <= R_2`.
pub fn fit_far_field(
    v: &dyn ScalarField,
    annulus: [f64; 2],
    samples: usize,
    seed: u64,
) -> Result<FarFieldExpansion> {
    let n = v.dim();
    let [r1, r2] = annulus;
    if !(0.0 < r1 && r1 <= r2) {
        return Err(QlabError::InvalidInput(format!("bad annulus [{r1}, {r2}]")));
    }
    let cols = 1 + n + n * (n + 1) / 2;
    if samples < cols {
        return Err(QlabError::InvalidInput(format!("{samples} samples for {cols} unknowns")));
    }
    let mut rng = keyed_rng(seed, 0);
    let points: Vec<Vec<f64>> = (0..samples)
        .map(|_| {
            let d = uniform_on_sphere(&mut rng, n);
            let r = r1 + (r2 - r1) * rng.random::<f64>();
            d.into_iter().map(|c| c * r).collect()
        })
        .collect();
    let rows: Vec<(Vec<f64>, f64)> = points
        .par_iter()
        .map(|x| {
            if !v.contains(x) {
                return Err(QlabError::PointOutsideDomain);
            }
            let rr: f64 = x.iter().map(|c| c * c).sum();
            let mut row = Vec::with_capacity(cols);
            row.push(1.0);
            row.extend(x.iter().map(|c| c / rr));
            for i in 0..n {
                for j in i..n {
                    row.push(x[i] * x[j] / (rr * rr));
                }
            }
            Ok((row, v.value(x) * rr.powf((n as f64 - 4.0) / 2.0)))
        })
        .collect::<Result<_>>()?;
    let mut design = DMatrix::from_fn(samples, cols, |i, j| rows[i].0[j]);
    let rhs = DVector::from_iterator(samples, rows.iter().map(|r| r.1));
    let scales: Vec<f64> = (0..cols).map(|j| design.column(j).norm()).collect();
    for (j, s) in scales.iter().enumerate() {
        if *s > 0.0 {
            design.column_mut(j).scale_mut(1.0 / s);
        }
    }
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition < MAX_FIT_CONDITION) {
        return Err(QlabError::IllConditionedFit { condition });
    }
    let coef = svd
        .solve(&rhs, 0.0)
        .map_err(|e| QlabError::InvalidInput(e.to_string()))?;
    let coef: Vec<f64> = coef.iter().zip(&scales).map(|(c, s)| c / s).collect();
    let a0 = coef[0];
    let a = coef[1..=n].to_vec();
    let mut a2 = vec![vec![0.0; n]; n];
    let mut k = n + 1;
    for i in 0..n {
        for j in i..n {
            if i == j {
                a2[i][i] = coef[k];
            } else {
                a2[i][j] = coef[k] / 2.0;
                a2[j][i] = coef[k] / 2.0;
            }
            k += 1;
        }
    }
    let fitted = &design * DVector::from_iterator(cols, coef.iter().zip(&scales).map(|(c, s)| c * s));
    let misfit = (fitted - &rhs).amax();
    if !(a0 > 0.0) {
        return Err(QlabError::NonpositiveLeadingCoefficient(a0));
    }
    Ok(FarFieldExpansion {
        n,
        a0,
        a,
        a2,
        annulus,
        residual: misfit / a0.abs(),
        condition,
        samples,
    })
}

/// `{x : |x| >= C_1, x_n >= h + C_0/|x|}` where `∂_n v < 0` and `∂_n w < 0`.
///
/// The offset `h = max(0, a_n/((n-4)a_0))` absorbs the first-order centre
/// shift of the expansion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticRegion {
    pub c0: f64,
    pub c1: f64,
    pub offset: f64,
    pub axis: usize,
    pub verified_samples: usize,
    /// Largest sampled `∂_n v` and `∂_n w` (both negative when verified).
    pub max_dv: f64,
    pub max_dw: f64,
}

impl AsymptoticRegion {
    pub fn contains(&self, x: &[f64]) -> bool {
        let r = norm(x);
        r >= self.c1 && x[self.axis] >= self.offset + self.c0 / r
    }
}

/// Constants from the fitted coefficients, then a sign check of `∂_n v` and
/// `∂_n w` on `samples` deterministic points with `C_1 <= |x| <= 4C_1`.
pub fn asymptotic_sign_region(
    v: &dyn ScalarField,
    expansion: &FarFieldExpansion,
    samples: usize,
) -> Result<AsymptoticRegion> {
    let n = expansion.n;
    let axis = n - 1;
    let nf = n as f64;
    let a0 = expansion.a0;
    if !(a0 > 0.0) {
        return Err(QlabError::NonpositiveLeadingCoefficient(a0));
    }
    let lead = (nf - 4.0) * a0;
    let a_norm = norm(&expansion.a);
    let a2_norm = expansion.a2.iter().flatten().map(|c| c * c).sum::<f64>().sqrt();
    let offset = (expansion.a[axis] / lead).max(0.0);
    let c0 = 2.0 * (nf + 2.0) * a2_norm / lead + 1.0;
    let c1 = (4.0 * (nf - 2.0) * a_norm / lead).max(expansion.annulus[0]).max(c0).max(1.0);
    let w = NegLaplacian(v);
    let mut region = AsymptoticRegion {
        c0,
        c1,
        offset,
        axis,
        verified_samples: 0,
        max_dv: f64::NEG_INFINITY,
        max_dw: f64::NEG_INFINITY,
    };
    let checks: Vec<(Vec<f64>, f64, f64)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let u = halton(i, n);
            let r = c1 * (1.0 + 3.0 * u[0]);
            let lo = offset + c0 / r;
            // the axis coordinate spans [lo, r); the rest fills out the sphere |x| = r
            let xn = lo + (r - lo) * u[1];
            let mut rest: Vec<f64> = u[2..].iter().map(|t| 2.0 * t - 1.0).collect();
            rest.push(2.0 * halton(i, n + 1)[n] - 1.0);
            let rn = norm(&rest).max(1e-300);
            let scale = (r * r - xn * xn).max(0.0).sqrt() / rn;
            let mut x: Vec<f64> = rest.iter().map(|c| c * scale).collect();
            x.push(xn);
            x.rotate_right(n - 1 - axis);
            let dv = v.gradient(&x)[axis];
            let dw = w.gradient(&x)[axis];
            (x, dv, dw)
        })
        .collect();
    for (x, dv, dw) in checks {
        if !(dv < 0.0 && dw < 0.0) {
            return Err(QlabError::SignVerificationFailed { point: x });
        }
        region.max_dv = region.max_dv.max(dv);
        region.max_dw = region.max_dw.max(dw);
        region.verified_samples += 1;
    }
    Ok(region)
}

/// Knobs of the plane scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlaneScan {
    pub axis: usize,
    pub lambda_range: [f64; 2],
    pub step: f64,
    /// Points per plane in `Σ_Λ ∩ {|x_i| <= R, Λ < x_axis < Λ + R}`.
    pub samples: usize,
    pub check_radius: f64,
    /// Points on the plane for the `∂v/∂x_axis` trace.
    pub plane_samples: usize,
    /// Bisection stops at this width; defaults to `1e-4` of the range.
    pub tolerance: Option<f64>,
    /// Offset into the Halton sequence.
    pub seed: u64,
}

impl PlaneScan {
    pub fn new(axis: usize, lambda_range: [f64; 2], step: f64) -> Self {
        Self {
            axis,
            lambda_range,
            step,
            samples: 2000,
            check_radius: 4.0,
            plane_samples: 200,
            tolerance: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivativeSample {
    pub lambda: f64,
    /// Extremes of `∂v/∂x_axis` over the sampled plane points.
    pub max_derivative: f64,
    pub min_derivative: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MovingPlaneReport {
    /// First plane of the scan, where the inequalities were verified.
    pub lambda_0: f64,
    pub lambda_star: f64,
    /// The scan reached the bottom of the range without a failure; `lambda_star`
    /// is then only an upper bound.
    pub reached_bottom: bool,
    pub planes_tested: usize,
    pub tolerance: f64,
    /// `max |v^Λ* - v| / max v` on the samples.
    pub asymmetry: f64,
    pub symmetric: bool,
    pub derivative_sign_trace: Vec<DerivativeSample>,
    /// Every traced derivative with `Λ > Λ* + tolerance` is negative.
    pub derivative_sign_ok: bool,
    pub singular_margin: f64,
}

impl MovingPlaneReport {
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("lambda,max_dv,min_dv,points\n");
        for d in &self.derivative_sign_trace {
            s.push_str(&format!(
                "{:?},{:?},{:?},{}\n",
                d.lambda, d.max_derivative, d.min_derivative, d.points
            ));
        }
        s
    }
}

const SYMMETRY_THRESHOLD: f64 = 1e-2;
const STRICTNESS: f64 = 1e-12;

struct PlaneCheck<'a> {
    v: &'a dyn ScalarField,
    w: &'a dyn ScalarField,
    singular: &'a SingularSet,
    scan: &'a PlaneScan,
}

impl PlaneCheck<'_> {
    fn sample(&self, lambda: f64, i: usize) -> Vec<f64> {
        let n = self.v.dim();
        let r = self.scan.check_radius;
        let u = halton(i + self.scan.seed as usize, n);
        (0..n)
            .map(|k| if k == self.scan.axis { lambda + r * u[k] } else { r * (2.0 * u[k] - 1.0) })
            .collect()
    }

    fn admissible(&self, x: &[f64], xr: &[f64]) -> bool {
        !self.singular.near(x)
            && !self.singular.near(xr)
            && self.v.contains(x)
            && self.v.contains(xr)
            && self.w.contains(x)
            && self.w.contains(xr)
    }

    /// `v^Λ > v` and `w^Λ > w` on all admissible samples.
    fn holds(&self, lambda: f64) -> bool {
        (0..self.scan.samples).into_par_iter().all(|i| {
            let x = self.sample(lambda, i);
            let xr = reflect(&x, lambda, self.scan.axis);
            if !self.admissible(&x, &xr) {
                return true;
            }
            let (v, vr) = (self.v.value(&x), self.v.value(&xr));
            let (w, wr) = (self.w.value(&x), self.w.value(&xr));
            vr - v >= -STRICTNESS * v.abs() && wr - w >= -STRICTNESS * w.abs()
        })
    }

    fn asymmetry(&self, lambda: f64) -> f64 {
        let (num, den) = (0..self.scan.samples)
            .into_par_iter()
            .map(|i| {
                let x = self.sample(lambda, i);
                let xr = reflect(&x, lambda, self.scan.axis);
                if !self.admissible(&x, &xr) {
                    return (0.0, 0.0);
                }
                let v = self.v.value(&x);
                ((self.v.value(&xr) - v).abs(), v.abs())
            })
            .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }

    fn derivative(&self, lambda: f64) -> DerivativeSample {
        let n = self.v.dim();
        let axis = self.scan.axis;
        let r = self.scan.check_radius;
        let vals: Vec<f64> = (0..self.scan.plane_samples)
            .into_par_iter()
            .filter_map(|i| {
                let u = halton(i + self.scan.seed as usize, n);
                let x: Vec<f64> =
                    (0..n).map(|k| if k == axis { lambda } else { r * (2.0 * u[k] - 1.0) }).collect();
                (!self.singular.near(&x) && self.v.contains(&x)).then(|| self.v.gradient(&x)[axis])
            })
            .collect();
        DerivativeSample {
            lambda,
            max_derivative: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            min_derivative: vals.iter().copied().fold(f64::INFINITY, f64::min),
            points: vals.len(),
        }
    }
}

/// Scans `Λ` downward from the top of the range until `v^Λ > v, w^Λ > w`
/// fails on `Σ_Λ = {x_axis > Λ}`, then bisects for `Λ*`.
pub fn find_lambda_star(
    v: &dyn ScalarField,
    w: &dyn ScalarField,
    singular: &SingularSet,
    scan: &PlaneScan,
) -> Result<MovingPlaneReport> {
    let [bottom, top] = scan.lambda_range;
    if !(bottom < top && scan.step > 0.0 && scan.check_radius > 0.0 && scan.samples > 0) {
        return Err(QlabError::InvalidInput("bad plane scan parameters".into()));
    }
    if scan.axis >= v.dim() || w.dim() != v.dim() {
        return Err(QlabError::DimensionMismatch { expected: v.dim(), found: w.dim() });
    }
    let tol = scan.tolerance.unwrap_or(1e-4 * (top - bottom));
    let check = PlaneCheck { v, w, singular, scan };
    if !check.holds(top) {
        return Err(QlabError::ScanExhausted { bottom, top });
    }
    let mut trace = vec![check.derivative(top)];
    let mut planes = 1;
    let mut good = top;
    let mut failed = None;
    let mut k = 1;
    loop {
        let lambda = (top - k as f64 * scan.step).max(bottom);
        planes += 1;
        if !check.holds(lambda) {
            failed = Some(lambda);
            break;
        }
        good = lambda;
        trace.push(check.derivative(lambda));
        if lambda <= bottom {
            break;
        }
        k += 1;
    }
    let lambda_star = match failed {
        Some(mut lo) => {
            let mut hi = good;
            while hi - lo > tol {
                let mid = 0.5 * (lo + hi);
                planes += 1;
                if check.holds(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        }
        None => bottom,
    };
    let asymmetry = check.asymmetry(lambda_star);
    let derivative_sign_ok = trace
        .iter()
        .filter(|d| d.lambda > lambda_star + tol)
        .all(|d| d.points == 0 || d.max_derivative < 0.0);
    Ok(MovingPlaneReport {
        lambda_0: top,
        lambda_star,
        reached_bottom: failed.is_none(),
        planes_tested: planes,
        tolerance: tol,
        asymmetry,
        symmetric: asymmetry < SYMMETRY_THRESHOLD,
        derivative_sign_trace: trace,
        derivative_sign_ok,
        singular_margin: singular.margin,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Convexity {
    Convex,
    Concave,
    Mixed,
}

/// Boundary curvature of the ball `|x - center| < radius` in `v^{4/(n-4)} g_0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityReport {
    pub center: Vec<f64>,
    pub radius: f64,
    /// Extremes over the samples of the normal curvature
    /// `κ = v^{-2/(n-4)}(1/ρ + (2/(n-4)) v^{-1} ∂_ν v)`, `ν` the outward normal.
    pub min_curvature: f64,
    pub max_curvature: f64,
    /// Samples whose chart diagnostic has the sign of `κ`.
    pub chart_agreements: usize,
    pub samples: usize,
    pub verdict: Convexity,
}

impl ConvexityReport {
    pub fn chart_agrees(&self) -> bool {
        self.chart_agreements == self.samples
    }
}

/// Sign of the boundary curvature on `samples` boundary points, computed
/// directly and in the charts obtained by inverting about `center ± radius e_1`,
/// where the sphere becomes a hyperplane and the sign is that of the outward
/// derivative of the transformed field.
pub fn ball_convexity(
    v: &dyn ScalarField,
    center: &[f64],
    radius: f64,
    exp: &ConformalExponents,
    samples: usize,
    seed: u64,
) -> Result<ConvexityReport> {
    let n = v.dim();
    if center.len() != n || exp.n() != n {
        return Err(QlabError::DimensionMismatch { expected: n, found: center.len() });
    }
    if !(radius > 0.0) || samples == 0 {
        return Err(QlabError::InvalidInput("ball needs a positive radius and samples".into()));
    }
    let alpha = exp.weight();
    let poles: Vec<Vec<f64>> = [1.0, -1.0]
        .iter()
        .map(|s| {
            let mut q = center.to_vec();
            q[0] += s * radius;
            q
        })
        .collect();
    let inversions: Vec<MobiusMap> = poles
        .iter()
        .map(|q| MobiusMap::inversion(q.clone(), radius))
        .collect::<Result<_>>()?;
    let mut rng = keyed_rng(seed, 0);
    let dirs: Vec<Vec<f64>> = (0..samples).map(|_| uniform_on_sphere(&mut rng, n)).collect();
    let results: Vec<(f64, bool)> = dirs
        .par_iter()
        .map(|d| {
            let p: Vec<f64> = center.iter().zip(d).map(|(c, u)| c + radius * u).collect();
            if !v.contains(&p) {
                return Err(QlabError::BoundaryOutsideDomain);
            }
            let val = v.value(&p);
            if !(val > 0.0) {
                return Err(QlabError::NonpositiveConformalFactor { index: 0, value: val });
            }
            let dnu: f64 = v.gradient(&p).iter().zip(d).map(|(g, u)| g * u).sum();
            let kappa = val.powf(-1.0 / alpha) * (1.0 / radius + dnu / (alpha * val));
            // chart whose pole is farther from p
            let k = if norm_diff(&p, &poles[0]) >= norm_diff(&p, &poles[1]) { 0 } else { 1 };
            let chart = chart_outward_derivative(v, &inversions[k], &poles[k], center, &p, alpha)?;
            Ok((kappa, chart.signum() == kappa.signum()))
        })
        .collect::<Result<_>>()?;
    let min_curvature = results.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let max_curvature = results.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
    let verdict = if min_curvature > 0.0 {
        Convexity::Convex
    } else if max_curvature < 0.0 {
        Convexity::Concave
    } else {
        Convexity::Mixed
    };
    Ok(ConvexityReport {
        center: center.to_vec(),
        radius,
        min_curvature,
        max_curvature,
        chart_agreements: results.iter().filter(|r| r.1).count(),
        samples,
        verdict,
    })
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Derivative of `v_I(y) = v(I y)|I'(y)|^α` at `I p` along the normal of the
/// image hyperplane pointing away from the image of the ball.
fn chart_outward_derivative(
    v: &dyn ScalarField,
    inv: &MobiusMap,
    pole: &[f64],
    center: &[f64],
    p: &[f64],
    alpha: f64,
) -> Result<f64> {
    let y = inv.apply(p)?;
    let radius = norm_diff(center, pole);
    let outward: Vec<f64> = pole.iter().zip(center).map(|(q, c)| (q - c) / radius).collect();
    let transformed = |z: &[f64]| -> Result<f64> {
        let (x, log_d) = inv.apply_with_log_derivative(z)?;
        Ok(v.value(&x) * (alpha * log_d).exp())
    };
    let h = 1e-4 * radius / 2.0;
    let at = |t: f64| -> Result<f64> {
        let z: Vec<f64> = y.iter().zip(&outward).map(|(a, e)| a + t * e).collect();
        transformed(&z)
    };
    Ok((at(-2.0 * h)? - 8.0 * at(-h)? + 8.0 * at(h)? - at(2.0 * h)?) / (12.0 * h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stereographic::Bubble;

    fn bubble_at(n: usize, lambda: f64, c: f64) -> Bubble {
        let mut x0 = vec![0.0; n];
        x0[n - 1] = c;
        Bubble::new(n, lambda, x0).unwrap()
    }

    #[test]
    fn reflection_basics() {
        assert_eq!(reflect(&[1.0, 2.0, 3.0], 0.0, 2), vec![1.0, 2.0, -3.0]);
        let x = [0.3, -1.0, 2.5];
        assert_eq!(reflect(&reflect(&x, 0.7, 2), 0.7, 2), x.to_vec());
        let b = bubble_at(6, 1.0, 0.4);
        let r = reflect_field(&b, 0.4, 5);
        let y = [0.1, 0.2, -0.3, 0.5, 0.0, 1.3];
        assert!((r.value(&y) - b.value(&y)).abs() < 1e-15);
        let rr = reflect_field(reflect_field(&b, 1.1, 5), 1.1, 5);
        assert_eq!(rr.value(&y), b.value(&y));
    }

    #[test]
    fn far_field_of_centred_bubble() {
        let b = Bubble::unit(6).unwrap();
        let e = fit_far_field(&b, [100.0, 1000.0], 400, 1).unwrap();
        assert!((e.a0 - 2.0).abs() < 1e-6);
        assert!(e.a.iter().all(|a| a.abs() < 1e-5));
    }

    #[test]
    fn exact_basis_combination_is_recovered() {
        let n = 5;
        let f = crate::field::FnField::new(n, |x: &[f64]| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            (3.0 + 0.5 * x[4] / r2 - 2.0 * x[0] * x[1] / (r2 * r2)) / r2.sqrt()
        });
        let e = fit_far_field(&f, [10.0, 50.0], 200, 3).unwrap();
        assert!((e.a0 - 3.0).abs() < 1e-10);
        assert!((e.a[4] - 0.5).abs() < 1e-8);
        assert!((e.a2[0][1] + 1.0).abs() < 1e-6);
        assert!(e.residual < 1e-12);
    }

    #[test]
    fn translated_bubble_shifts_the_region() {
        let b = bubble_at(6, 1.0, 1.0);
        let e = fit_far_field(&b, [100.0, 1000.0], 400, 2).unwrap();
        assert!(e.a[5] > 0.0);
        let reg = asymptotic_sign_region(&b, &e, 300).unwrap();
        assert!((reg.offset - 1.0).abs() < 1e-3);
        assert!(reg.max_dv < 0.0 && reg.max_dw < 0.0);
    }

    #[test]
    fn region_membership() {
        let reg = AsymptoticRegion {
            c0: 2.0,
            c1: 3.0,
            offset: 0.0,
            axis: 1,
            verified_samples: 0,
            max_dv: 0.0,
            max_dw: 0.0,
        };
        assert!(reg.contains(&[(9.0f64 - 1.0).sqrt(), 1.0]));
        assert!(!reg.contains(&[1.0, 0.5]));
    }

    #[test]
    fn critical_plane_of_shifted_bubble() {
        let n = 5;
        let b = bubble_at(n, 1.0, 0.5);
        let w = NegLaplacian(&b);
        let scan = PlaneScan { samples: 500, ..PlaneScan::new(n - 1, [-2.0, 3.0], 0.25) };
        let r = find_lambda_star(&b, &w, &SingularSet::empty(), &scan).unwrap();
        assert!((r.lambda_star - 0.5).abs() < 1e-3, "{}", r.lambda_star);
        assert!(r.symmetric);
        assert!(r.derivative_sign_ok);
        let low = PlaneScan { samples: 200, ..PlaneScan::new(n - 1, [-2.0, 0.0], 0.25) };
        assert!(matches!(
            find_lambda_star(&b, &w, &SingularSet::empty(), &low),
            Err(QlabError::ScanExhausted { .. })
        ));
    }

    #[test]
    fn small_and_large_balls() {
        let n = 6;
        let exp = ConformalExponents::new(n).unwrap();
        let b = Bubble::unit(n).unwrap();
        let small = ball_convexity(&b, &[0.5, 0.0, 0.0, 0.0, 0.0, -0.2], 0.3, &exp, 40, 0).unwrap();
        assert_eq!(small.verdict, Convexity::Convex);
        assert!(small.chart_agrees());
        let big = ball_convexity(&b, &[0.0; 6], 10.0, &exp, 40, 0).unwrap();
        assert_eq!(big.verdict, Convexity::Concave);
        assert!(big.chart_agrees());
        let flat = crate::field::FnField::new(n, |_| 3.0);
        let f = ball_convexity(&flat, &[0.0; 6], 2.0, &exp, 10, 0).unwrap();
        assert_eq!(f.verdict, Convexity::Convex);
    }
}
