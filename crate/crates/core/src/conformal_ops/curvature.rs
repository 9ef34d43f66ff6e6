use num_rational::Ratio;
use serde::Serialize;

use super::exponents::ConformalExponents;
use super::stencil::{bilaplacian, gradient_norm_sq, laplacian, radial_bilaplacian, radial_laplacian};
use crate::error::{QlabError, Result};
use crate::field::{GridField, RadialField};
use crate::quadrature::sphere_area;

/// Curvature invariants entering the tensorial Q-curvature formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvatureData {
    /// Scalar curvature `R`.
    pub scalar: f64,
    /// `ΔR`.
    pub laplacian_scalar: f64,
    /// `|Ric|^2`.
    pub ricci_sq: f64,
}

impl CurvatureData {
    pub fn new(scalar: f64, laplacian_scalar: f64, ricci_sq: f64, n: usize) -> Result<Self> {
        if ricci_sq < 0.0 {
            return Err(QlabError::InvalidInput(format!("|Ric|^2 = {ricci_sq} < 0")));
        }
        // trace inequality |Ric|^2 >= R^2/n
        let bound = scalar * scalar / n as f64;
        if ricci_sq < bound * (1.0 - 1e-12) {
            return Err(QlabError::InvalidInput(format!(
                "|Ric|^2 = {ricci_sq} below R^2/n = {bound}"
            )));
        }
        Ok(Self { scalar, laplacian_scalar, ricci_sq })
    }

    /// Unit round sphere `S^n`: `R = n(n-1)`, `ΔR = 0`, `|Ric|^2 = n(n-1)^2`.
    pub fn round_sphere(n: usize) -> Self {
        let nf = n as f64;
        Self { scalar: nf * (nf - 1.0), laplacian_scalar: 0.0, ricci_sq: nf * (nf - 1.0).powi(2) }
    }

    pub fn flat() -> Self {
        Self { scalar: 0.0, laplacian_scalar: 0.0, ricci_sq: 0.0 }
    }
}

/// Rational curvature data for exact audits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExactCurvatureData {
    pub scalar: Ratio<i64>,
    pub laplacian_scalar: Ratio<i64>,
    pub ricci_sq: Ratio<i64>,
}

impl ExactCurvatureData {
    pub fn round_sphere(n: usize) -> Self {
        let n = n as i64;
        Self {
            scalar: Ratio::from_integer(n * (n - 1)),
            laplacian_scalar: Ratio::from_integer(0),
            ricci_sq: Ratio::from_integer(n * (n - 1) * (n - 1)),
        }
    }
}

/// Which Ricci coefficient to use in the tensorial Q formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum QMode {
    /// Ricci coefficient `2(n-4)/(n-2)^2`, transcribed as published.
    AsPrinted,
    /// Ricci coefficient `(n-4)/(n-2)^2`, consistent with `P[g_0] = (-Δ)^2`.
    CovarianceConsistent,
}

fn tensorial_coefficients(n: i64, mode: QMode) -> [Ratio<i64>; 3] {
    let lap = Ratio::new(-(n - 4), 4 * (n - 1));
    let scalar_sq = Ratio::new(
        (n - 4) * (n * n * n - 4 * n * n + 16 * n - 16),
        16 * (n - 1) * (n - 1) * (n - 2) * (n - 2),
    );
    let ricci_num = match mode {
        QMode::AsPrinted => 2 * (n - 4),
        QMode::CovarianceConsistent => n - 4,
    };
    let ricci = Ratio::new(-ricci_num, (n - 2) * (n - 2));
    [lap, scalar_sq, ricci]
}

/// `Q = c_1 ΔR + c_2 R^2 + c_3 |Ric|^2` with the coefficients of `mode`.
pub fn q_curvature_tensorial(c: &CurvatureData, n: usize, mode: QMode) -> Result<f64> {
    if n < 5 {
        return Err(QlabError::DimensionTooSmall(n));
    }
    let [c1, c2, c3] = tensorial_coefficients(n as i64, mode).map(|r| {
        *r.numer() as f64 / *r.denom() as f64
    });
    Ok(c1 * c.laplacian_scalar + c2 * c.scalar * c.scalar + c3 * c.ricci_sq)
}

/// Exact rational evaluation of [`q_curvature_tensorial`].
pub fn q_curvature_tensorial_exact(
    c: &ExactCurvatureData,
    n: usize,
    mode: QMode,
) -> Result<Ratio<i64>> {
    if n < 5 {
        return Err(QlabError::DimensionTooSmall(n));
    }
    let [c1, c2, c3] = tensorial_coefficients(n as i64, mode);
    Ok(c1 * c.laplacian_scalar + c2 * c.scalar * c.scalar + c3 * c.ricci_sq)
}

fn check_dim(v: &GridField, exp: &ConformalExponents) -> Result<()> {
    if v.dim() != exp.n() {
        return Err(QlabError::DimensionMismatch { expected: exp.n(), found: v.dim() });
    }
    Ok(())
}

fn check_positive_grid(v: &GridField) -> Result<()> {
    for i in v.interior_indices() {
        let value = v.value_at(i);
        if !(value > 0.0) {
            return Err(QlabError::NonpositiveConformalFactor { index: i, value });
        }
    }
    Ok(())
}

fn check_positive_radial(v: &RadialField) -> Result<()> {
    for (i, &value) in v.values().iter().enumerate().take(v.valid_len()) {
        if !(value > 0.0) {
            return Err(QlabError::NonpositiveConformalFactor { index: i, value });
        }
    }
    Ok(())
}

/// Q-curvature of `g_v = v^{4/(n-4)} g_0` defined through the flat Paneitz
/// operator: `Q = v^{-q} (-Δ)^2 v`.
pub fn q_curvature_flatbg(v: &GridField, exp: &ConformalExponents) -> Result<GridField> {
    check_dim(v, exp)?;
    check_positive_grid(v)?;
    let q = exp.q();
    let bl = bilaplacian(v)?;
    let vals = v.values();
    Ok(bl.map_interior_indexed(|i, b| b * vals[i].powf(-q)))
}

/// Radial counterpart of [`q_curvature_flatbg`].
pub fn q_curvature_radial(v: &RadialField, exp: &ConformalExponents) -> Result<RadialField> {
    check_positive_radial(v)?;
    let q = exp.q();
    let bl = radial_bilaplacian(v, exp.n())?;
    let out = zip_valid(&bl, v, |b, vv| b * vv.powf(-q));
    RadialField::with_margin(v.radii().to_vec(), out, bl.margin())
}

fn zip_valid(op: &RadialField, v: &RadialField, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    op.values()
        .iter()
        .zip(v.values())
        .enumerate()
        .map(|(i, (a, b))| if i < op.valid_len() { f(*a, *b) } else { f64::NAN })
        .collect()
}

/// Scalar curvature of `g_v`, computed through `u = v^s` so that
/// `g_v = u^{4/(n-2)} g_0` and `R = (4(n-1)/(n-2)) u^{-(n+2)/(n-2)} (-Δu)`.
pub fn scalar_curvature_flatbg(v: &GridField, exp: &ConformalExponents) -> Result<GridField> {
    check_dim(v, exp)?;
    check_positive_grid(v)?;
    let n = exp.n() as f64;
    let s = exp.s();
    let u = v.map_interior(|x, _| x.powf(s));
    let lap = laplacian(&u)?;
    let uv = u.values();
    let c = 4.0 * (n - 1.0) / (n - 2.0);
    let e = (n + 2.0) / (n - 2.0);
    Ok(lap.map_interior_indexed(|i, l| -c * l * uv[i].powf(-e)))
}

pub fn scalar_curvature_radial(v: &RadialField, exp: &ConformalExponents) -> Result<RadialField> {
    check_positive_radial(v)?;
    let n = exp.n() as f64;
    let s = exp.s();
    let u = RadialField::with_margin(
        v.radii().to_vec(),
        zip_valid(v, v, |x, _| x.powf(s)),
        v.margin(),
    )?;
    let lap = radial_laplacian(&u, exp.n())?;
    let c = 4.0 * (n - 1.0) / (n - 2.0);
    let e = (n + 2.0) / (n - 2.0);
    let out = zip_valid(&lap, &u, |l, uu| -c * l * uu.powf(-e));
    RadialField::with_margin(v.radii().to_vec(), out, lap.margin())
}

/// The curvature normalization `R̂ = (n-2)/(4(n-1)) R` for which
/// `-Δ v^{(n-2)/(n-4)} = R̂ v^{(n+2)/(n-4)}` holds.
pub fn normalized_scalar_curvature(scalar: f64, n: usize) -> f64 {
    let n = n as f64;
    (n - 2.0) / (4.0 * (n - 1.0)) * scalar
}

/// The three terms of `-Δv = (n-4)/(n-2) R̂ v^{n/(n-4)} + 2/(n-4) v^{-1}|∇v|^2`.
#[derive(Debug, Clone)]
pub struct BridgeTerms {
    pub neg_laplacian: GridField,
    pub curvature_term: GridField,
    pub gradient_term: GridField,
}

impl BridgeTerms {
    /// Left side minus right side, on nodes valid for all three terms.
    pub fn residual(&self) -> GridField {
        let c = self.curvature_term.values();
        let g = self.gradient_term.values();
        self.curvature_term
            .map_interior_indexed(|i, _| self.neg_laplacian.value_at(i) - c[i] - g[i])
    }
}

pub fn bridge_terms(v: &GridField, exp: &ConformalExponents) -> Result<BridgeTerms> {
    let n = exp.n() as f64;
    let scalar = scalar_curvature_flatbg(v, exp)?;
    let lap = laplacian(v)?;
    let grad = gradient_norm_sq(v)?;
    let vals = v.values();
    let lv = lap.values();
    let gv = grad.values();
    let curvature_term = scalar.map_interior_indexed(|i, r| {
        (n - 4.0) / (n - 2.0) * normalized_scalar_curvature(r, exp.n()) * vals[i].powf(n / (n - 4.0))
    });
    let gradient_term = scalar.map_interior_indexed(|i, _| 2.0 / (n - 4.0) * gv[i] / vals[i]);
    let neg_laplacian = scalar.map_interior_indexed(|i, _| -lv[i]);
    Ok(BridgeTerms { neg_laplacian, curvature_term, gradient_term })
}

/// `L[g_0] u = -(4(n-1)/(n-2)) Δu` (the flat background has `R = 0`).
pub fn conformal_laplacian_flat(u: &GridField, n: usize) -> Result<GridField> {
    if n < 3 {
        return Err(QlabError::DimensionTooSmall(n));
    }
    let c = 4.0 * (n as f64 - 1.0) / (n as f64 - 2.0);
    Ok(laplacian(u)?.map_interior(|l, _| -c * l))
}

/// `∫ Q v^p dx / (∫ v^p dx)^{(n-4)/n}` over the nodes where Q is valid.
pub fn paneitz_functional(v: &GridField, exp: &ConformalExponents) -> Result<f64> {
    let q = q_curvature_flatbg(v, exp)?;
    let p = exp.p();
    let n = exp.n() as f64;
    let cell = v.spacing().powi(exp.n() as i32);
    let (mut num, mut vol) = (0.0, 0.0);
    for i in q.interior_indices() {
        let w = v.value_at(i).powf(p) * cell;
        num += q.value_at(i) * w;
        vol += w;
    }
    ratio_with_volume(num, vol, n)
}

/// Radial counterpart of [`paneitz_functional`], integrating with the
/// trapezoid rule against `|S^{n-1}| r^{n-1} dr`.
pub fn paneitz_functional_radial(v: &RadialField, exp: &ConformalExponents) -> Result<f64> {
    let q = q_curvature_radial(v, exp)?;
    let p = exp.p();
    let n = exp.n();
    let area = sphere_area(n - 1);
    let r = v.radii();
    let weight = |i: usize| v.values()[i].powf(p) * r[i].powi(n as i32 - 1) * area;
    let (mut num, mut vol) = (0.0, 0.0);
    for i in 1..q.valid_len() {
        let half = 0.5 * (r[i] - r[i - 1]);
        let (w0, w1) = (weight(i - 1), weight(i));
        num += half * (q.values()[i - 1] * w0 + q.values()[i] * w1);
        vol += half * (w0 + w1);
    }
    ratio_with_volume(num, vol, n as f64)
}

fn ratio_with_volume(num: f64, vol: f64, n: f64) -> Result<f64> {
    if !(vol > 0.0) {
        return Err(QlabError::ZeroVolume);
    }
    Ok(num / vol.powf((n - 4.0) / n))
}

impl GridField {
    /// Maps interior values with access to the flat node index.
    pub(crate) fn map_interior_indexed(&self, f: impl Fn(usize, f64) -> f64 + Sync) -> GridField {
        use rayon::prelude::*;
        let interior = self.interior_indices();
        let mapped: Vec<f64> = interior.par_iter().map(|&i| f(i, self.value_at(i))).collect();
        let mut values = vec![f64::NAN; self.len()];
        for (i, v) in interior.into_iter().zip(mapped) {
            values[i] = v;
        }
        GridField::from_parts(
            self.dim(),
            self.lo(),
            self.hi(),
            self.nodes_per_axis(),
            self.margin(),
            values,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal_ops::exponents;

    #[test]
    fn round_sphere_audit_in_both_modes() {
        let exact = ExactCurvatureData::round_sphere(6);
        let printed = q_curvature_tensorial_exact(&exact, 6, QMode::AsPrinted).unwrap();
        assert_eq!(printed, Ratio::new(21, 4));
        let cov = q_curvature_tensorial_exact(&exact, 6, QMode::CovarianceConsistent).unwrap();
        assert_eq!(cov, Ratio::from_integer(24));

        let c = CurvatureData::round_sphere(6);
        assert!((q_curvature_tensorial(&c, 6, QMode::AsPrinted).unwrap() - 5.25).abs() < 1e-12);
        for n in 5..12 {
            let e = exponents(n).unwrap();
            let c = CurvatureData::round_sphere(n);
            let q = q_curvature_tensorial(&c, n, QMode::CovarianceConsistent).unwrap();
            assert!((q - e.bubble_constant()).abs() < 1e-9 * e.bubble_constant());
        }
    }

    #[test]
    fn flat_space_has_zero_q() {
        for mode in [QMode::AsPrinted, QMode::CovarianceConsistent] {
            for n in 5..9 {
                assert_eq!(q_curvature_tensorial(&CurvatureData::flat(), n, mode).unwrap(), 0.0);
            }
        }
        assert!(q_curvature_tensorial(&CurvatureData::flat(), 4, QMode::AsPrinted).is_err());
    }

    #[test]
    fn curvature_data_invariants() {
        assert!(CurvatureData::new(30.0, 0.0, 150.0, 6).is_ok());
        assert!(CurvatureData::new(30.0, 0.0, 149.0, 6).is_err());
        assert!(CurvatureData::new(0.0, 0.0, -1.0, 6).is_err());
    }

    #[test]
    fn constant_factor_is_flat() {
        let e = exponents(5).unwrap();
        let one = GridField::from_fn(5, -1.0, 1.0, 9, |_| 1.0).unwrap();
        assert!(q_curvature_flatbg(&one, &e).unwrap().max_abs_interior() < 1e-9);
        assert!(scalar_curvature_flatbg(&one, &e).unwrap().max_abs_interior() < 1e-9);
        assert!(paneitz_functional(&one, &e).unwrap().abs() < 1e-9);
    }

    #[test]
    fn rejects_nonpositive_factor() {
        let e = exponents(5).unwrap();
        let g = GridField::from_fn(5, -1.0, 1.0, 9, |x| x[0]).unwrap();
        assert!(matches!(
            q_curvature_flatbg(&g, &e),
            Err(QlabError::NonpositiveConformalFactor { .. })
        ));
    }

    #[test]
    fn conformal_laplacian_of_quadratic() {
        let n = 5;
        let g = GridField::from_fn(n, -1.0, 1.0, 7, |x| x.iter().map(|v| v * v).sum()).unwrap();
        let l = conformal_laplacian_flat(&g, n).unwrap();
        let expect = -8.0 * 5.0 * 4.0 / 3.0;
        for i in l.interior_indices() {
            assert!((l.value_at(i) - expect).abs() < 1e-9);
        }
    }
}
