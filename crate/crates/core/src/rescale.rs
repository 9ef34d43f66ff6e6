//! Blow-up rescaling `v(x) = m^{-1} û(x_i + x m^{-2/(n-4)})` around a peak
//! and matching against the unit-Q bubble family.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::conformal_ops::{bilaplacian, ConformalExponents};
use crate::error::{QlabError, Result};
use crate::field::{GridField, ScalarField};
use crate::quadrature::halton;
use crate::stereographic::Bubble;

/// A source field with a chosen peak `x_i` and its value `m = û(x_i)`.
pub struct RescaleJob<'a> {
    source: &'a dyn ScalarField,
    peak: Vec<f64>,
    peak_value: f64,
    alpha: f64,
}

impl<'a> RescaleJob<'a> {
    pub fn new(source: &'a dyn ScalarField, peak: Vec<f64>, exp: &ConformalExponents) -> Result<Self> {
        if peak.len() != source.dim() || exp.n() != source.dim() {
            return Err(QlabError::DimensionMismatch { expected: source.dim(), found: peak.len() });
        }
        if !source.contains(&peak) {
            return Err(QlabError::PointOutsideDomain);
        }
        let m = source.value(&peak);
        if !(m > 0.0) {
            return Err(QlabError::NonpositiveConformalFactor { index: 0, value: m });
        }
        Ok(Self { source, peak, peak_value: m, alpha: exp.weight() })
    }

    pub fn peak(&self) -> &[f64] {
        &self.peak
    }

    pub fn peak_value(&self) -> f64 {
        self.peak_value
    }

    /// `m^{-2/(n-4)}`.
    pub fn length_factor(&self) -> f64 {
        self.peak_value.powf(-1.0 / self.alpha)
    }

    fn source_point(&self, x: &[f64]) -> Vec<f64> {
        let s = self.length_factor();
        self.peak.iter().zip(x).map(|(p, xi)| p + s * xi).collect()
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        let y = self.source_point(x);
        if !self.source.contains(&y) {
            return Err(QlabError::PointOutsideDomain);
        }
        Ok(self.source.value(&y) / self.peak_value)
    }

    /// Sampled check of `0 < v <= 1`; returns the largest value seen.
    pub fn check_peak_property(&self, points: &[Vec<f64>]) -> Result<f64> {
        let mut max = f64::NEG_INFINITY;
        for x in points {
            let v = self.value(x)?;
            if !(v > 0.0) {
                return Err(QlabError::NonpositiveConformalFactor { index: 0, value: v });
            }
            max = max.max(v);
        }
        Ok(max)
    }
}

impl ScalarField for RescaleJob<'_> {
    fn dim(&self) -> usize {
        self.source.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.source.value(&self.source_point(x)) / self.peak_value
    }
    fn contains(&self, x: &[f64]) -> bool {
        self.source.contains(&self.source_point(x))
    }
    fn length_scale(&self) -> f64 {
        self.source.length_scale() / self.length_factor()
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let c = self.length_factor() / self.peak_value;
        self.source.gradient(&self.source_point(x)).into_iter().map(|g| c * g).collect()
    }
    fn laplacian(&self, x: &[f64]) -> f64 {
        self.length_factor().powi(2) / self.peak_value * self.source.laplacian(&self.source_point(x))
    }
    fn laplacian_gradient(&self, x: &[f64]) -> Vec<f64> {
        let c = self.length_factor().powi(3) / self.peak_value;
        self.source
            .laplacian_gradient(&self.source_point(x))
            .into_iter()
            .map(|g| c * g)
            .collect()
    }
}

/// Grid argmax (lowest flat index on ties) refined by a parabola through the
/// neighbours along each axis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPeak {
    pub index: usize,
    pub node: Vec<f64>,
    pub refined: Vec<f64>,
    pub value: f64,
}

pub fn find_peak(grid: &GridField) -> Result<GridPeak> {
    let interior = grid.interior_indices();
    let mut best: Option<usize> = None;
    for &i in &interior {
        if best.is_none_or(|b| grid.value_at(i) > grid.value_at(b)) {
            best = Some(i);
        }
    }
    let index = best.ok_or_else(|| QlabError::InvalidInput("grid has no interior nodes".into()))?;
    let node = grid.coords(index);
    let h = grid.spacing();
    let m = grid.nodes_per_axis();
    let strides = grid.strides();
    let f0 = grid.value_at(index);
    let mut refined = node.clone();
    let mut value = f0;
    for (axis, &stride) in strides.iter().enumerate() {
        let pos = (index / stride) % m;
        if pos == 0 || pos + 1 == m {
            continue;
        }
        let (fm, fp) = (grid.value_at(index - stride), grid.value_at(index + stride));
        let curv = fm - 2.0 * f0 + fp;
        if curv < 0.0 {
            let t = (0.5 * (fm - fp) / curv).clamp(-0.5, 0.5);
            refined[axis] += t * h;
            value -= 0.125 * (fm - fp).powi(2) / curv;
        }
    }
    Ok(GridPeak { index, node, refined, value })
}

/// Residual of `(-Δ)^2 v = c v^q` on a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvarianceReport {
    /// `max |Δ_h^2 v - c v^q| / max |c v^q|` over interior nodes.
    pub relative_residual: f64,
    pub max_abs_residual: f64,
    pub spacing: f64,
}

/// `Δ_h^2 v - c v^q` on interior nodes.
pub fn equation_residual(v: &GridField, exp: &ConformalExponents, constant: f64) -> Result<GridField> {
    if v.dim() != exp.n() {
        return Err(QlabError::DimensionMismatch { expected: exp.n(), found: v.dim() });
    }
    let q = exp.q();
    let bil = bilaplacian(v)?;
    let vals: Vec<f64> = bil
        .values()
        .iter()
        .zip(v.values())
        .map(|(b, u)| b - constant * u.powf(q))
        .collect();
    GridField::with_margin(v.dim(), v.lo(), v.hi(), v.nodes_per_axis(), bil.margin(), vals)
}

/// Residual of the normalized equation `(-Δ)^2 v = v^q`.
pub fn equation_invariance_check(v: &GridField, exp: &ConformalExponents) -> Result<InvarianceReport> {
    let res = equation_residual(v, exp, 1.0)?;
    let q = exp.q();
    let max_abs_residual = res.max_abs_interior();
    let scale = res
        .interior_indices()
        .into_iter()
        .map(|i| v.value_at(i).abs().powf(q))
        .fold(0.0, f64::max);
    Ok(InvarianceReport {
        relative_residual: max_abs_residual / scale,
        max_abs_residual,
        spacing: v.spacing(),
    })
}

/// Best unit-Q bubble `K_n^{(n-4)/8} U_{λ,x₀}` for a field on sample points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BubbleMatch {
    pub lambda: f64,
    pub center: Vec<f64>,
    /// `max |v - fit| / max |v|` over the samples.
    pub match_error: f64,
    pub iterations: usize,
}

impl BubbleMatch {
    pub fn bubble(&self) -> Result<Bubble> {
        Bubble::unit_q(self.center.len(), self.lambda, self.center.clone())
    }
}

/// `count` Halton points in the cube of half-width `radius` about `center`.
pub fn window_samples(center: &[f64], radius: f64, count: usize) -> Vec<Vec<f64>> {
    let n = center.len();
    (0..count)
        .map(|i| {
            halton(i, n)
                .iter()
                .zip(center)
                .map(|(u, c)| c + radius * (2.0 * u - 1.0))
                .collect()
        })
        .collect()
}

const LM_MAX_ITER: usize = 200;

/// Levenberg–Marquardt in `(ln λ, x₀)` with an analytic Jacobian, started
/// from the largest sample: `x₀` there and `λ` from its value.
pub fn bubble_match(v: &dyn ScalarField, samples: &[Vec<f64>]) -> Result<BubbleMatch> {
    let n = v.dim();
    let exp = ConformalExponents::new(n)?;
    let alpha = exp.weight();
    let amp = exp.bubble_constant().powf((n as f64 - 4.0) / 8.0);
    if samples.len() < n + 2 {
        return Err(QlabError::InvalidInput("too few samples for a bubble fit".into()));
    }
    let data: Vec<f64> = samples
        .iter()
        .map(|x| if v.contains(x) { Ok(v.value(x)) } else { Err(QlabError::PointOutsideDomain) })
        .collect::<Result<_>>()?;
    let (imax, vmax) = data
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, d)| if *d > b.1 { (i, *d) } else { b });
    if !(vmax > 0.0) {
        return Err(QlabError::NonpositiveConformalFactor { index: imax, value: vmax });
    }
    let mut params = vec![((vmax / amp).powf(1.0 / alpha) / 2.0).ln()];
    params.extend_from_slice(&samples[imax]);
    let model = |p: &[f64], x: &[f64], jac: Option<&mut [f64]>| -> f64 {
        let lam = p[0].exp();
        let rho2: f64 = x.iter().zip(&p[1..]).map(|(a, c)| (a - c).powi(2)).sum();
        let d = 1.0 + lam * lam * rho2;
        let f = amp * (2.0 * lam / d).powf(alpha);
        if let Some(j) = jac {
            j[0] = alpha * f * (1.0 - lam * lam * rho2) / d;
            for k in 0..x.len() {
                j[k + 1] = 2.0 * alpha * lam * lam * f * (x[k] - p[k + 1]) / d;
            }
        }
        f
    };
    let cost = |p: &[f64]| -> f64 {
        samples.iter().zip(&data).map(|(x, d)| (model(p, x, None) - d).powi(2)).sum()
    };
    let dof = n + 1;
    let mut mu = 1e-3;
    let mut current = cost(&params);
    let mut converged = false;
    let mut iterations = 0;
    let mut jrow = vec![0.0; dof];
    while iterations < LM_MAX_ITER {
        iterations += 1;
        let mut jtj = DMatrix::<f64>::zeros(dof, dof);
        let mut jtr = DVector::<f64>::zeros(dof);
        for (x, d) in samples.iter().zip(&data) {
            let f = model(&params, x, Some(&mut jrow));
            let r = d - f;
            for a in 0..dof {
                jtr[a] += jrow[a] * r;
                for b in 0..dof {
                    jtj[(a, b)] += jrow[a] * jrow[b];
                }
            }
        }
        let mut improved = false;
        while mu < 1e16 {
            let mut lhs = jtj.clone();
            for a in 0..dof {
                lhs[(a, a)] += mu * jtj[(a, a)].max(1e-300);
            }
            let Some(chol) = lhs.cholesky() else {
                mu *= 10.0;
                continue;
            };
            let step = chol.solve(&jtr);
            let trial: Vec<f64> = params.iter().zip(step.iter()).map(|(p, s)| p + s).collect();
            let c = cost(&trial);
            if c <= current {
                let small = step.iter().zip(&trial).all(|(s, p)| s.abs() <= 1e-14 * (1.0 + p.abs()));
                params = trial;
                let flat = current - c <= 1e-30 * current.max(1e-300) || c == 0.0;
                current = c;
                mu = (mu / 10.0).max(1e-12);
                improved = true;
                converged = small || flat;
                break;
            }
            mu *= 10.0;
        }
        if !improved || converged {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(QlabError::FitNonconvergent { iterations });
    }
    let lambda = params[0].exp();
    let scale = data.iter().fold(0.0f64, |a, d| a.max(d.abs()));
    let misfit = samples
        .iter()
        .zip(&data)
        .map(|(x, d)| (model(&params, x, None) - d).abs())
        .fold(0.0, f64::max);
    Ok(BubbleMatch { lambda, center: params[1..].to_vec(), match_error: misfit / scale, iterations })
}
