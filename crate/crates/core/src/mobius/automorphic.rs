use rayon::prelude::*;
use serde::Serialize;

use super::map::MobiusMap;
use super::schottky::{dist, GroupWord, SchottkyGroup, Sphere};
use crate::conformal_ops::ConformalExponents;
use crate::error::{QlabError, Result};
use crate::field::ScalarField;
use crate::quadrature::{ball_volume, keyed_rng, mean_and_stderr, sphere_area, uniform_in_ball, uniform_on_sphere};
use crate::stereographic::{Bubble, StereoChart};

/// `ṽ(γx) = v(x) |γ'_{S^n}(x)|^{-(n-4)/2}`: the image point and transported value.
pub fn transport(
    gamma: &MobiusMap,
    x: &[f64],
    value: f64,
    exp: &ConformalExponents,
) -> Result<(Vec<f64>, f64)> {
    let y = gamma.apply(x)?;
    let log_d = gamma.log_sphere_derivative(x)?;
    Ok((y, value * (-exp.weight() * log_d).exp()))
}

/// Extension of a function on the fundamental domain to the tiles `γ(F)`,
/// `|γ| <= depth`, by the cocycle `|γ'_{S^n}|^{-(n-4)/2}`.
pub struct AutomorphicExtension<'a, F> {
    group: &'a SchottkyGroup,
    v: F,
    depth: usize,
    weight: f64,
}

impl<'a, F: Fn(&[f64]) -> f64 + Sync> AutomorphicExtension<'a, F> {
    pub fn new(group: &'a SchottkyGroup, v: F, depth: usize, exp: &ConformalExponents) -> Result<Self> {
        if exp.n() != group.dim() {
            return Err(QlabError::DimensionMismatch { expected: group.dim(), found: exp.n() });
        }
        Ok(Self { group, v, depth, weight: exp.weight() })
    }

    pub fn try_value(&self, y: &[f64]) -> Result<f64> {
        let hit = self.group.locate(y, self.depth)?;
        Ok((self.v)(&hit.base) * (-self.weight * hit.log_sphere_derivative).exp())
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> ScalarField for AutomorphicExtension<'_, F> {
    fn dim(&self) -> usize {
        self.group.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.try_value(x).unwrap_or(f64::NAN)
    }
    fn contains(&self, x: &[f64]) -> bool {
        self.group.locate(x, self.depth).is_ok()
    }
}

/// Union of balls standing in for the limit set, with an exclusion margin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingularSet {
    pub balls: Vec<Sphere>,
    pub margin: f64,
}

impl SingularSet {
    pub fn empty() -> Self {
        Self { balls: Vec::new(), margin: 0.0 }
    }

    pub fn from_group(group: &SchottkyGroup, depth: usize, margin: f64) -> Result<Self> {
        Ok(Self { balls: group.limit_set_cover(depth)?, margin })
    }

    /// Whether `x` is within `margin` of some ball.
    pub fn near(&self, x: &[f64]) -> bool {
        self.balls.iter().any(|b| dist(x, &b.center) < b.radius + self.margin)
    }

    /// Largest `x_axis` coordinate reached by the margin-inflated balls.
    pub fn top(&self, axis: usize) -> f64 {
        self.balls
            .iter()
            .map(|b| b.center[axis] + b.radius + self.margin)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Truncated Poincaré series of the round-sphere factor,
/// `v(y) = Σ_{|γ| <= L} U_{1,0}(γy) |γ'(y)|^{(n-4)/2}`.
///
/// Each term is the bubble `U_{λ,x}` with `(x, 1/λ) = γ̂^{-1}(0, 1)` for the
/// Poincaré extension `γ̂` to the upper half-space, so the sum is evaluated in
/// closed form. Terms other than the identity are centred inside the pairing
/// balls.
#[derive(Debug, Clone)]
pub struct SeriesField {
    n: usize,
    bubbles: Vec<Bubble>,
    singular: SingularSet,
}

impl SeriesField {
    pub fn new(group: &SchottkyGroup, depth: usize, margin: f64) -> Result<Self> {
        let n = group.dim();
        let mut apex = vec![0.0; n + 1];
        apex[n] = 1.0;
        let mut bubbles = Vec::new();
        for (_, g) in group.enumerate_words(depth)? {
            let p = g.inverse().apply_extended(&apex)?;
            bubbles.push(Bubble::new(n, 1.0 / p[n], p[..n].to_vec())?);
        }
        let singular = SingularSet::from_group(group, depth.max(1), margin)?;
        Ok(Self { n, bubbles, singular })
    }

    pub fn bubbles(&self) -> &[Bubble] {
        &self.bubbles
    }

    pub fn singular_set(&self) -> &SingularSet {
        &self.singular
    }
}

impl ScalarField for SeriesField {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.bubbles.iter().map(|b| b.value(x)).sum()
    }
    fn contains(&self, x: &[f64]) -> bool {
        !self.singular.near(x)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        sum_vectors(self.bubbles.iter().map(|b| b.gradient(x)), self.n)
    }
    fn laplacian(&self, x: &[f64]) -> f64 {
        self.bubbles.iter().map(|b| b.laplacian(x)).sum()
    }
    fn laplacian_gradient(&self, x: &[f64]) -> Vec<f64> {
        sum_vectors(self.bubbles.iter().map(|b| b.laplacian_gradient(x)), self.n)
    }
}

fn sum_vectors(it: impl Iterator<Item = Vec<f64>>, n: usize) -> Vec<f64> {
    it.fold(vec![0.0; n], |mut acc, v| {
        acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
        acc
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrbitParams {
    /// Words up to this length get a two-sided check.
    pub word_depth: usize,
    /// Depth of the shell partial sums.
    pub series_depth: usize,
    pub samples: usize,
    pub seed: u64,
}

/// Both sides of `∫_{γ(F)} ṽ^q dV = ∫_F v^q |γ'|^{(n-4)/2} dV` for one word.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WordIntegral {
    pub index: usize,
    pub word: String,
    pub length: usize,
    pub lhs: f64,
    pub lhs_stderr: f64,
    pub rhs: f64,
    pub rhs_stderr: f64,
    pub accepted: usize,
    /// `|lhs - rhs| <= 3 sqrt(se_l^2 + se_r^2)`.
    pub agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrbitIntegralReport {
    pub words: Vec<WordIntegral>,
    /// `partial_sums[L] = ∫_F v^q Σ_{|γ| <= L} |γ'|^{(n-4)/2} dV`.
    pub partial_sums: Vec<f64>,
}

impl OrbitIntegralReport {
    pub fn increments(&self) -> Vec<f64> {
        self.partial_sums.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

const SERIES_STREAM: u64 = 1 << 40;

/// Monte-Carlo evaluation of the orbit integrals of `v^q` (all integrals in
/// the round volume of the chart). Sample `i` of word `k` draws from stream
/// `2k` (left side) or `2k + 1` (right side) of the seed.
pub fn orbit_integral<F>(
    group: &SchottkyGroup,
    v: F,
    exp: &ConformalExponents,
    params: &OrbitParams,
) -> Result<OrbitIntegralReport>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n = group.dim();
    if exp.n() != n {
        return Err(QlabError::DimensionMismatch { expected: n, found: exp.n() });
    }
    if params.samples < 2 {
        return Err(QlabError::InvalidInput("need at least two samples".into()));
    }
    let chart = StereoChart::north_pole(n);
    let (q, alpha) = (exp.q(), exp.weight());
    let area = sphere_area(n);
    let sample_f = |stream: u64| -> Vec<Option<Vec<f64>>> {
        let mut rng = keyed_rng(params.seed, stream);
        (0..params.samples)
            .map(|_| {
                let xi = uniform_on_sphere(&mut rng, n + 1);
                chart.unproject(&xi).ok().filter(|x| group.in_fundamental_domain(x))
            })
            .collect()
    };
    let words = group.enumerate_words(params.word_depth)?;

    let results: Vec<Result<WordIntegral>> = words
        .par_iter()
        .enumerate()
        .map(|(index, (word, map))| {
            let k = index as u64;
            let pts = sample_f(2 * k + 1);
            let rhs_vals: Vec<f64> = pts
                .iter()
                .map(|p| match p {
                    Some(x) => map
                        .log_sphere_derivative(x)
                        .map(|l| v(x).powf(q) * (alpha * l).exp()),
                    None => Ok(0.0),
                })
                .collect::<Result<_>>()?;
            let (rm, rs) = mean_and_stderr(&rhs_vals);
            let (lhs_vals, accepted) = if word.is_empty() {
                let vals: Vec<f64> = sample_f(2 * k)
                    .iter()
                    .map(|p| p.as_ref().map_or(0.0, |x| v(x).powf(q)))
                    .collect();
                let acc = vals.iter().filter(|v| **v != 0.0).count();
                (vals.iter().map(|v| v * area).collect::<Vec<_>>(), acc)
            } else {
                image_samples(group, word, &v, q, alpha, params, 2 * k)?
            };
            if accepted == 0 {
                return Err(QlabError::SamplingFailure { accepted: 0, total: params.samples });
            }
            let (lm, ls) = mean_and_stderr(&lhs_vals);
            let (rhs, rhs_stderr) = (rm * area, rs * area);
            let agrees = (lm - rhs).abs() <= 3.0 * (ls * ls + rhs_stderr * rhs_stderr).sqrt();
            Ok(WordIntegral {
                index,
                word: word.to_string(),
                length: word.len(),
                lhs: lm,
                lhs_stderr: ls,
                rhs,
                rhs_stderr,
                accepted,
                agrees,
            })
        })
        .collect();
    let words = results.into_iter().collect::<Result<Vec<_>>>()?;

    let pts = sample_f(SERIES_STREAM);
    let per_point: Vec<Vec<f64>> = pts
        .iter()
        .map(|p| -> Result<Vec<f64>> {
            let Some(x) = p else { return Ok(vec![0.0; params.series_depth + 1]) };
            let w = v(x).powf(q);
            let shells = group.shell_log_derivatives(x, params.series_depth)?;
            Ok(shells.iter().map(|s| w * s.iter().map(|l| (alpha * l).exp()).sum::<f64>()).collect())
        })
        .collect::<Result<_>>()?;
    let mut partial_sums = Vec::with_capacity(params.series_depth + 1);
    let mut acc = 0.0;
    for k in 0..=params.series_depth {
        acc += per_point.iter().map(|s| s[k]).sum::<f64>() / params.samples as f64 * area;
        partial_sums.push(acc);
    }
    Ok(OrbitIntegralReport { words, partial_sums })
}

/// Left side for a nontrivial word, sampled from an even mixture of two
/// proposals with balance-heuristic weights: uniform points of the ball
/// `γ_prefix(B_last)` that contains `γ(F)`, and images `γx` of round-uniform
/// points `x` of `F`. The integrand `ṽ(y)^q` is always evaluated from `y`
/// alone, by pulling `y` back to `F`; ball samples outside `γ(F)` count as zero.
fn image_samples<F: Fn(&[f64]) -> f64>(
    group: &SchottkyGroup,
    word: &GroupWord,
    v: &F,
    q: f64,
    alpha: f64,
    params: &OrbitParams,
    stream: u64,
) -> Result<(Vec<f64>, usize)> {
    let n = group.dim();
    let letters = word.letters();
    let (last, prefix) = letters.split_last().expect("nonempty word");
    let prefix_map = group.word_map(&GroupWord::from_letters(prefix.to_vec())?);
    let map = group.word_map(word);
    let ball = &group.spheres()[group.target_ball(*last)];
    let (center, radius) = prefix_map.image_ball(&ball.center, ball.radius)?;
    let ball_density = 1.0 / (ball_volume(n) * radius.powi(n as i32));
    let area = sphere_area(n);
    let chart = StereoChart::north_pole(n);
    let log1p_sq = |x: &[f64]| x.iter().map(|c| c * c).sum::<f64>().ln_1p();
    let mut rng = keyed_rng(params.seed, stream);
    let mut accepted = 0;
    let mut vals = Vec::with_capacity(params.samples);
    for i in 0..params.samples {
        let y = if i % 2 == 0 {
            Some(uniform_in_ball(&mut rng, &center, radius))
        } else {
            let xi = uniform_on_sphere(&mut rng, n + 1);
            match chart.unproject(&xi).ok().filter(|x| group.in_fundamental_domain(x)) {
                Some(x) => Some(map.apply(&x)?),
                None => None,
            }
        };
        let value = match y.map(|y| (group.locate(&y, word.len() + 1), y)) {
            Some((Ok(hit), y)) if &hit.word == word => {
                accepted += 1;
                let x = &hit.base;
                let log_s = hit.log_sphere_derivative;
                let log_e = log_s - log1p_sq(x) + log1p_sq(&y);
                let in_ball = dist(&y, &center) < radius;
                let push_density = StereoChart::conformal_factor(x).powi(n as i32) / area
                    * (-(n as f64) * log_e).exp();
                let mix = 0.5 * (if in_ball { ball_density } else { 0.0 }) + 0.5 * push_density;
                let tilde = v(x) * (-alpha * log_s).exp();
                tilde.powf(q) * StereoChart::conformal_factor(&y).powi(n as i32) / mix
            }
            _ => 0.0,
        };
        vals.push(value);
    }
    Ok((vals, accepted))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal_ops::exponents;
    use crate::mobius::schottky::tests::two_generator;

    #[test]
    fn identity_transport_is_trivial() {
        let e = exponents(6).unwrap();
        let (y, v) = transport(&MobiusMap::identity(6), &[0.1; 6], 2.5, &e).unwrap();
        assert_eq!(y, vec![0.1; 6]);
        assert_eq!(v, 2.5);
    }

    #[test]
    fn extension_is_identity_on_fundamental_domain() {
        let g = two_generator(6, 0.5);
        let e = exponents(6).unwrap();
        let ext = AutomorphicExtension::new(&g, |x: &[f64]| 1.0 + x[0] * x[0], 3, &e).unwrap();
        let x = [0.3, 0.1, 0.0, 0.0, 0.2, 0.0];
        assert_eq!(ext.try_value(&x).unwrap(), 1.09);
    }

    #[test]
    fn series_terms_are_pulled_back_bubbles() {
        let g = two_generator(6, 0.5);
        let field = SeriesField::new(&g, 2, 1e-3).unwrap();
        let words = g.enumerate_words(2).unwrap();
        let unit = Bubble::unit(6).unwrap();
        let y = [0.4, -0.3, 0.2, 0.1, 0.0, 0.7];
        for ((_, map), b) in words.iter().zip(field.bubbles()) {
            let (gy, log_d) = map.apply_with_log_derivative(&y).unwrap();
            // (n-4)/2 = 1
            let direct = unit.value(&gy) * log_d.exp();
            assert!((direct - b.value(&y)).abs() < 1e-12 * direct.max(1e-300));
        }
        for b in &field.bubbles()[1..] {
            assert!(g.spheres().iter().any(|s| dist(b.center(), &s.center) < s.radius));
        }
    }
}
