use std::sync::Arc;

use crate::error::{QlabError, Result};

/// Largest ambient dimension handled by the in-place evaluators (the Poincaré
/// extension acts on `R^{n+1}`).
pub const MAX_DIM: usize = 32;

/// Building block of a Möbius map.
#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    /// `x ↦ scale·A x + shift`, with `A` orthogonal (row-major, `None` = identity).
    Similarity { orth: Option<Arc<[f64]>>, scale: f64, shift: Vec<f64> },
    /// Inversion through the sphere `|x - center| = radius`.
    Inversion { center: Vec<f64>, radius: f64 },
}

impl Primitive {
    fn inverse(&self) -> Primitive {
        match self {
            Primitive::Inversion { .. } => self.clone(),
            Primitive::Similarity { orth, scale, shift } => {
                let n = shift.len();
                let inv_scale = 1.0 / scale;
                let mut new_shift = vec![0.0; n];
                // -A^T shift / scale
                for (i, s) in new_shift.iter_mut().enumerate() {
                    let v = match orth {
                        Some(a) => (0..n).map(|k| a[k * n + i] * shift[k]).sum(),
                        None => shift[i],
                    };
                    *s = -v * inv_scale;
                }
                let orth_t = orth.as_ref().map(|a| {
                    let mut t = vec![0.0; n * n];
                    for i in 0..n {
                        for j in 0..n {
                            t[j * n + i] = a[i * n + j];
                        }
                    }
                    Arc::<[f64]>::from(t)
                });
                Primitive::Similarity { orth: orth_t, scale: inv_scale, shift: new_shift }
            }
        }
    }

    /// Applies the primitive to `x` in place and returns `ln |f'(x)|`.
    ///
    /// `x` may carry extra trailing coordinates, on which the primitive acts by
    /// its Poincaré extension (the inversion sphere is centred on `R^n × {0}`).
    fn apply_in_place(&self, x: &mut [f64]) -> Result<f64> {
        match self {
            Primitive::Similarity { orth, scale, shift } => {
                let n = shift.len();
                if let Some(a) = orth {
                    let mut tmp = [0.0; MAX_DIM];
                    for (i, t) in tmp.iter_mut().enumerate().take(n) {
                        *t = (0..n).map(|k| a[i * n + k] * x[k]).sum();
                    }
                    x[..n].copy_from_slice(&tmp[..n]);
                }
                for (i, xi) in x.iter_mut().enumerate() {
                    *xi *= scale;
                    if i < n {
                        *xi += shift[i];
                    }
                }
                Ok(scale.ln())
            }
            Primitive::Inversion { center, radius } => {
                let d2: f64 = x
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (v - center.get(i).copied().unwrap_or(0.0)).powi(2))
                    .sum();
                if d2 == 0.0 {
                    return Err(QlabError::PoleHit);
                }
                let f = radius * radius / d2;
                for (i, xi) in x.iter_mut().enumerate() {
                    let c = center.get(i).copied().unwrap_or(0.0);
                    *xi = c + f * (*xi - c);
                }
                Ok(f.ln())
            }
        }
    }

    fn image_ball(&self, c: &[f64], rho: f64) -> Result<(Vec<f64>, f64)> {
        match self {
            Primitive::Similarity { scale, .. } => {
                let mut center = c.to_vec();
                self.apply_in_place(&mut center)?;
                Ok((center, scale * rho))
            }
            Primitive::Inversion { center, radius } => {
                let diff: Vec<f64> = c.iter().zip(center).map(|(a, b)| a - b).collect();
                let d = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
                if d <= rho {
                    return Err(QlabError::PoleHit);
                }
                let r2 = radius * radius;
                let (near, far) = (r2 / (d - rho), r2 / (d + rho));
                let mid = 0.5 * (near + far);
                let out = center.iter().zip(&diff).map(|(c0, u)| c0 + mid * u / d).collect();
                Ok((out, 0.5 * (near - far)))
            }
        }
    }
}

/// A Möbius transformation of `R^n ∪ {∞}` stored as a chain of primitives;
/// `chain[0]` is applied first.
#[derive(Debug, Clone, PartialEq)]
pub struct MobiusMap {
    n: usize,
    chain: Vec<Primitive>,
}

fn check_dim(n: usize) -> Result<()> {
    if n == 0 || n >= MAX_DIM {
        return Err(QlabError::InvalidInput(format!("dimension {n} outside 1..{MAX_DIM}")));
    }
    Ok(())
}

impl MobiusMap {
    pub fn identity(n: usize) -> Self {
        Self { n, chain: Vec::new() }
    }

    /// `x ↦ scale·A x + shift`; `orth` is a row-major orthogonal matrix.
    pub fn similarity(orth: Option<Vec<f64>>, scale: f64, shift: Vec<f64>) -> Result<Self> {
        let n = shift.len();
        check_dim(n)?;
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(QlabError::NonpositiveScale(scale));
        }
        if let Some(a) = &orth {
            if a.len() != n * n {
                return Err(QlabError::DimensionMismatch { expected: n * n, found: a.len() });
            }
            for i in 0..n {
                for j in 0..n {
                    let dot: f64 = (0..n).map(|k| a[k * n + i] * a[k * n + j]).sum();
                    let expect = if i == j { 1.0 } else { 0.0 };
                    if (dot - expect).abs() > 1e-10 {
                        return Err(QlabError::InvalidInput("matrix is not orthogonal".into()));
                    }
                }
            }
        }
        let orth = orth.map(Arc::from);
        Ok(Self { n, chain: vec![Primitive::Similarity { orth, scale, shift }] })
    }

    pub fn dilation(n: usize, lambda: f64) -> Result<Self> {
        Self::similarity(None, lambda, vec![0.0; n])
    }

    pub fn translation(shift: Vec<f64>) -> Result<Self> {
        Self::similarity(None, 1.0, shift)
    }

    pub fn inversion(center: Vec<f64>, radius: f64) -> Result<Self> {
        check_dim(center.len())?;
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(QlabError::NonpositiveScale(radius));
        }
        Ok(Self { n: center.len(), chain: vec![Primitive::Inversion { center, radius }] })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn primitives(&self) -> &[Primitive] {
        &self.chain
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &MobiusMap) -> MobiusMap {
        let mut chain = other.chain.clone();
        chain.extend(self.chain.iter().cloned());
        MobiusMap { n: self.n, chain }
    }

    pub fn inverse(&self) -> MobiusMap {
        MobiusMap { n: self.n, chain: self.chain.iter().rev().map(Primitive::inverse).collect() }
    }

    fn check_point(&self, x: &[f64], len: usize) -> Result<()> {
        if x.len() != len {
            return Err(QlabError::DimensionMismatch { expected: len, found: x.len() });
        }
        Ok(())
    }

    /// Applies the map in place and returns `ln |γ'(x)|`.
    pub fn apply_in_place(&self, x: &mut [f64]) -> Result<f64> {
        self.check_point(x, self.n)?;
        let mut log_d = 0.0;
        for p in &self.chain {
            log_d += p.apply_in_place(x)?;
        }
        Ok(log_d)
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.apply_with_log_derivative(x)?.0)
    }

    pub fn apply_with_log_derivative(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        let mut y = x.to_vec();
        let log_d = self.apply_in_place(&mut y)?;
        Ok((y, log_d))
    }

    /// Euclidean conformal derivative `|γ'(x)|`.
    pub fn conformal_derivative(&self, x: &[f64]) -> Result<f64> {
        Ok(self.apply_with_log_derivative(x)?.1.exp())
    }

    /// `ln |γ'_{S^n}(x)|`, the derivative in the round metric of the chart.
    pub fn log_sphere_derivative(&self, x: &[f64]) -> Result<f64> {
        let (y, log_d) = self.apply_with_log_derivative(x)?;
        Ok(log_d + sphere_correction(x, &y))
    }

    /// `|γ'(x)| (1 + |x|^2)/(1 + |γx|^2)`.
    pub fn sphere_conformal_derivative(&self, x: &[f64]) -> Result<f64> {
        Ok(self.log_sphere_derivative(x)?.exp())
    }

    /// Poincaré extension to the upper half-space `R^n × (0, ∞)`.
    pub fn apply_extended(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x, self.n + 1)?;
        let mut y = x.to_vec();
        for p in &self.chain {
            p.apply_in_place(&mut y)?;
        }
        Ok(y)
    }

    /// Image of the closed ball `B(center, radius)`; fails if the ball meets a
    /// pole, since the image is then unbounded.
    pub fn image_ball(&self, center: &[f64], radius: f64) -> Result<(Vec<f64>, f64)> {
        self.check_point(center, self.n)?;
        let mut ball = (center.to_vec(), radius);
        for p in &self.chain {
            ball = p.image_ball(&ball.0, ball.1)?;
        }
        Ok(ball)
    }
}

/// `ln((1 + |x|^2)/(1 + |y|^2))`.
pub(crate) fn sphere_correction(x: &[f64], y: &[f64]) -> f64 {
    let nx: f64 = x.iter().map(|v| v * v).sum();
    let ny: f64 = y.iter().map(|v| v * v).sum();
    nx.ln_1p() - ny.ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dilation_and_inversion_derivatives() {
        let d = MobiusMap::dilation(3, 2.5).unwrap();
        assert!((d.conformal_derivative(&[1.0, -2.0, 0.3]).unwrap() - 2.5).abs() < 1e-14);
        let inv = MobiusMap::inversion(vec![0.0; 3], 1.0).unwrap();
        let x = [0.0, 2.0, 0.0];
        assert!((inv.conformal_derivative(&x).unwrap() - 0.25).abs() < 1e-14);
        assert_eq!(inv.apply(&[0.0; 3]), Err(QlabError::PoleHit));
    }

    #[test]
    fn sphere_derivative_of_dilation() {
        let d = MobiusMap::dilation(4, 3.0).unwrap();
        assert!((d.sphere_conformal_derivative(&[0.0; 4]).unwrap() - 3.0).abs() < 1e-14);
        let far = [1e6, 0.0, 0.0, 0.0];
        assert!((d.sphere_conformal_derivative(&far).unwrap() - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn rotation_has_unit_sphere_derivative() {
        let (c, s) = (0.6, 0.8);
        let rot = MobiusMap::similarity(Some(vec![c, -s, s, c]), 1.0, vec![0.0, 0.0]).unwrap();
        assert!((rot.sphere_conformal_derivative(&[0.3, 2.0]).unwrap() - 1.0).abs() < 1e-14);
        assert!(MobiusMap::similarity(Some(vec![1.0, 1.0, 0.0, 1.0]), 1.0, vec![0.0; 2]).is_err());
    }

    #[test]
    fn inverse_and_image_ball() {
        let (c, s) = (0.6, 0.8);
        let rot = MobiusMap::similarity(Some(vec![c, -s, s, c]), 2.0, vec![1.0, -1.0]).unwrap();
        let inv = MobiusMap::inversion(vec![3.0, 0.5], 0.7).unwrap();
        let g = rot.compose(&inv);
        let x = [0.2, -0.4];
        let back = g.inverse().apply(&g.apply(&x).unwrap()).unwrap();
        assert!((back[0] - x[0]).abs() < 1e-12 && (back[1] - x[1]).abs() < 1e-12);

        let (bc, br) = g.image_ball(&[0.0, 0.0], 0.5).unwrap();
        for k in 0..16 {
            let t = k as f64 * std::f64::consts::PI / 8.0;
            let y = g.apply(&[0.5 * t.cos(), 0.5 * t.sin()]).unwrap();
            let d = ((y[0] - bc[0]).powi(2) + (y[1] - bc[1]).powi(2)).sqrt();
            assert!((d - br).abs() < 1e-12);
        }
        assert_eq!(inv.image_ball(&[3.0, 0.6], 0.2), Err(QlabError::PoleHit));
    }

    #[test]
    fn poincare_extension_preserves_upper_half_space() {
        let g = MobiusMap::inversion(vec![1.0, 0.0], 2.0)
            .unwrap()
            .compose(&MobiusMap::translation(vec![0.5, 0.5]).unwrap());
        let y = g.apply_extended(&[0.3, 0.1, 1.0]).unwrap();
        assert!(y[2] > 0.0);
        let back = g.inverse().apply_extended(&y).unwrap();
        assert!((back[2] - 1.0).abs() < 1e-12);
    }
}
