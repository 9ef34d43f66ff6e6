//! Scalar fields: evaluable fields and their sampled counterparts.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QlabError, Result};

/// Relative step for finite-difference first derivatives.
const FD_STEP_GRADIENT: f64 = 1e-3;
/// Relative step for finite-difference second derivatives.
const FD_STEP_SECOND: f64 = 2e-3;
/// Relative outer step for the gradient of the Laplacian.
const FD_STEP_THIRD: f64 = 1e-2;

/// A real-valued field on (a subset of) `R^n` that can be evaluated pointwise.
///
/// Derivatives default to fourth-order central differences with steps scaled
/// by [`ScalarField::length_scale`]; closed-form fields override them.
pub trait ScalarField: Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// Whether `x` lies in the region where the field may be evaluated.
    fn contains(&self, _x: &[f64]) -> bool {
        true
    }

    /// Typical length over which the field varies; sets finite-difference steps.
    fn length_scale(&self) -> f64 {
        1.0
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let h = FD_STEP_GRADIENT * self.length_scale();
        (0..self.dim())
            .map(|axis| central_first(|y| self.value(y), x, axis, h))
            .collect()
    }

    fn laplacian(&self, x: &[f64]) -> f64 {
        let h = FD_STEP_SECOND * self.length_scale();
        (0..self.dim())
            .map(|axis| central_second(|y| self.value(y), x, axis, h))
            .sum()
    }

    /// Gradient of the Laplacian, i.e. `-∇w` for `w = -Δv`.
    fn laplacian_gradient(&self, x: &[f64]) -> Vec<f64> {
        let h = FD_STEP_THIRD * self.length_scale();
        (0..self.dim())
            .map(|axis| central_first(|y| self.laplacian(y), x, axis, h))
            .collect()
    }
}

fn central_first(f: impl Fn(&[f64]) -> f64, x: &[f64], axis: usize, h: f64) -> f64 {
    let mut y = x.to_vec();
    let mut at = |t: f64| {
        y[axis] = x[axis] + t;
        f(&y)
    };
    (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h)
}

fn central_second(f: impl Fn(&[f64]) -> f64, x: &[f64], axis: usize, h: f64) -> f64 {
    let mut y = x.to_vec();
    let mut at = |t: f64| {
        y[axis] = x[axis] + t;
        f(&y)
    };
    (-at(-2.0 * h) + 16.0 * at(-h) - 30.0 * at(0.0) + 16.0 * at(h) - at(2.0 * h))
        / (12.0 * h * h)
}

impl<T: ScalarField + ?Sized> ScalarField for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
    fn contains(&self, x: &[f64]) -> bool {
        (**self).contains(x)
    }
    fn length_scale(&self) -> f64 {
        (**self).length_scale()
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (**self).gradient(x)
    }
    fn laplacian(&self, x: &[f64]) -> f64 {
        (**self).laplacian(x)
    }
    fn laplacian_gradient(&self, x: &[f64]) -> Vec<f64> {
        (**self).laplacian_gradient(x)
    }
}

/// Wraps a closure as a field; derivatives come from finite differences.
pub struct FnField<F> {
    dim: usize,
    scale: f64,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnField<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, scale: 1.0, f }
    }

    pub fn with_length_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> ScalarField for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
    fn length_scale(&self) -> f64 {
        self.scale
    }
}

/// JSON header shared by the grid and radial serializations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub n: usize,
    #[serde(rename = "box")]
    pub bounds: [f64; 2],
    pub m: usize,
    pub spacing: f64,
    pub margin: usize,
}

/// Scalar values on the uniform Cartesian grid `[lo, hi]^n` with `m` nodes per
/// axis, stored row-major (last axis fastest).
///
/// Nodes within `margin` of the boundary carry no valid value (NaN); operator
/// outputs widen the margin by the stencil half-width.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    n: usize,
    lo: f64,
    hi: f64,
    m: usize,
    margin: usize,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(n: usize, lo: f64, hi: f64, m: usize, values: Vec<f64>) -> Result<Self> {
        Self::with_margin(n, lo, hi, m, 0, values)
    }

    pub fn with_margin(
        n: usize,
        lo: f64,
        hi: f64,
        m: usize,
        margin: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(QlabError::InvalidInput("grid dimension must be positive".into()));
        }
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(QlabError::InvalidInput(format!("empty grid box [{lo}, {hi}]")));
        }
        if m < 2 {
            return Err(QlabError::GridTooSmall { nodes: m, required: 2 });
        }
        let len = checked_len(n, m)?;
        if values.len() != len {
            return Err(QlabError::InvalidInput(format!(
                "expected {len} grid values, got {}",
                values.len()
            )));
        }
        let field = Self { n, lo, hi, m, margin, values };
        if let Some(idx) = field
            .interior_indices()
            .into_iter()
            .find(|&i| !field.values[i].is_finite())
        {
            return Err(QlabError::InvalidInput(format!("non-finite grid value at node {idx}")));
        }
        Ok(field)
    }

    /// Samples `f` at every node.
    pub fn sample(n: usize, lo: f64, hi: f64, m: usize, f: &dyn ScalarField) -> Result<Self> {
        if f.dim() != n {
            return Err(QlabError::DimensionMismatch { expected: n, found: f.dim() });
        }
        Self::from_fn(n, lo, hi, m, |x| f.value(x))
    }

    pub fn from_fn(
        n: usize,
        lo: f64,
        hi: f64,
        m: usize,
        f: impl Fn(&[f64]) -> f64 + Sync,
    ) -> Result<Self> {
        let len = checked_len(n, m)?;
        let skeleton = Self { n, lo, hi, m, margin: 0, values: Vec::new() };
        let values: Vec<f64> = (0..len)
            .into_par_iter()
            .map_init(
                || vec![0.0; n],
                |x, idx| {
                    skeleton.coords_into(idx, x);
                    f(x)
                },
            )
            .collect();
        Self::new(n, lo, hi, m, values)
    }

    pub(crate) fn from_parts(
        n: usize,
        lo: f64,
        hi: f64,
        m: usize,
        margin: usize,
        values: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(values.len(), m.pow(n as u32));
        Self { n, lo, hi, m, margin, values }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.m
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.m - 1) as f64
    }

    pub fn margin(&self) -> usize {
        self.margin
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Flat-index strides per axis.
    pub fn strides(&self) -> Vec<usize> {
        (0..self.n).map(|d| self.m.pow((self.n - 1 - d) as u32)).collect()
    }

    pub fn coords(&self, idx: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        self.coords_into(idx, &mut x);
        x
    }

    fn coords_into(&self, mut idx: usize, x: &mut [f64]) {
        let h = self.spacing();
        for d in (0..self.n).rev() {
            x[d] = self.lo + (idx % self.m) as f64 * h;
            idx /= self.m;
        }
    }

    /// Whether node `idx` lies outside the invalid margin.
    pub fn is_interior(&self, mut idx: usize) -> bool {
        for _ in 0..self.n {
            let i = idx % self.m;
            if i < self.margin || i + self.margin >= self.m {
                return false;
            }
            idx /= self.m;
        }
        true
    }

    /// Flat indices of all interior nodes, in increasing order.
    pub fn interior_indices(&self) -> Vec<usize> {
        interior_indices(self.n, self.m, self.margin)
    }

    pub fn value_at(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    /// Applies `f(value, coords)` on interior nodes, keeping the margin invalid.
    pub fn map_interior(&self, f: impl Fn(f64, &[f64]) -> f64 + Sync) -> GridField {
        let interior = self.interior_indices();
        let mapped: Vec<f64> = interior
            .par_iter()
            .map(|&i| f(self.values[i], &self.coords(i)))
            .collect();
        let mut values = vec![f64::NAN; self.values.len()];
        for (i, v) in interior.into_iter().zip(mapped) {
            values[i] = v;
        }
        Self::from_parts(self.n, self.lo, self.hi, self.m, self.margin, values)
    }

    /// Largest absolute value over the interior.
    pub fn max_abs_interior(&self) -> f64 {
        self.interior_indices()
            .into_iter()
            .map(|i| self.values[i].abs())
            .fold(0.0, f64::max)
    }

    pub fn header(&self) -> GridHeader {
        GridHeader {
            n: self.n,
            bounds: [self.lo, self.hi],
            m: self.m,
            spacing: self.spacing(),
            margin: self.margin,
        }
    }

    /// Writes `index,value` rows in row-major node order.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "index,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(out, "{i},{v:?}")?;
        }
        Ok(())
    }

    /// Writes the values as little-endian `f64`.
    pub fn write_binary<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(header: &GridHeader, mut input: R) -> Result<Self> {
        let mut text = String::new();
        input
            .read_to_string(&mut text)
            .map_err(|e| QlabError::InvalidInput(e.to_string()))?;
        let mut lines = text.lines();
        if lines.next() != Some("index,value") {
            return Err(QlabError::InvalidInput("missing CSV header".into()));
        }
        let mut values = Vec::new();
        for (row, line) in lines.enumerate() {
            let (idx, v) = line
                .split_once(',')
                .ok_or_else(|| QlabError::InvalidInput(format!("bad CSV row {row}")))?;
            if idx.parse::<usize>().ok() != Some(row) {
                return Err(QlabError::InvalidInput(format!("CSV row {row} out of order")));
            }
            values.push(
                v.parse::<f64>()
                    .map_err(|e| QlabError::InvalidInput(e.to_string()))?,
            );
        }
        Self::from_header(header, values)
    }

    pub fn read_binary<R: Read>(header: &GridHeader, mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input
            .read_to_end(&mut bytes)
            .map_err(|e| QlabError::InvalidInput(e.to_string()))?;
        if bytes.len() % 8 != 0 {
            return Err(QlabError::InvalidInput("binary payload not a multiple of 8".into()));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Self::from_header(header, values)
    }

    fn from_header(header: &GridHeader, values: Vec<f64>) -> Result<Self> {
        let [lo, hi] = header.bounds;
        Self::with_margin(header.n, lo, hi, header.m, header.margin, values)
    }
}

/// Multilinear interpolation inside the box.
impl ScalarField for GridField {
    fn dim(&self) -> usize {
        self.n
    }

    fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.n && x.iter().all(|&xi| xi >= self.lo && xi <= self.hi)
    }

    fn length_scale(&self) -> f64 {
        self.spacing()
    }

    fn value(&self, x: &[f64]) -> f64 {
        if !self.contains(x) {
            return f64::NAN;
        }
        let h = self.spacing();
        let strides = self.strides();
        let mut base = 0usize;
        let mut frac = vec![0.0; self.n];
        for d in 0..self.n {
            let t = (x[d] - self.lo) / h;
            let i = (t.floor() as usize).min(self.m - 2);
            frac[d] = t - i as f64;
            base += i * strides[d];
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << self.n) {
            let mut w = 1.0;
            let mut idx = base;
            for d in 0..self.n {
                if corner >> d & 1 == 1 {
                    w *= frac[d];
                    idx += strides[d];
                } else {
                    w *= 1.0 - frac[d];
                }
            }
            if w != 0.0 {
                acc += w * self.values[idx];
            }
        }
        acc
    }
}

fn checked_len(n: usize, m: usize) -> Result<usize> {
    (0..n)
        .try_fold(1usize, |acc, _| acc.checked_mul(m))
        .ok_or_else(|| QlabError::InvalidInput(format!("grid {m}^{n} is too large")))
}

pub(crate) fn interior_indices(n: usize, m: usize, margin: usize) -> Vec<usize> {
    if 2 * margin >= m {
        return Vec::new();
    }
    let width = m - 2 * margin;
    let count = width.pow(n as u32);
    let mut out = Vec::with_capacity(count);
    let mut multi = vec![margin; n];
    for _ in 0..count {
        let flat = multi.iter().fold(0usize, |acc, &i| acc * m + i);
        out.push(flat);
        for d in (0..n).rev() {
            multi[d] += 1;
            if multi[d] < m - margin {
                break;
            }
            multi[d] = margin;
        }
    }
    out
}

/// Radial profile on a grid of radii starting at 0.
///
/// The last `margin` nodes carry no valid value (NaN) after an operator has
/// been applied.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialField {
    radii: Vec<f64>,
    values: Vec<f64>,
    margin: usize,
}

impl RadialField {
    pub fn new(radii: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::with_margin(radii, values, 0)
    }

    pub fn with_margin(radii: Vec<f64>, values: Vec<f64>, margin: usize) -> Result<Self> {
        validate_radii(&radii)?;
        if values.len() != radii.len() {
            return Err(QlabError::InvalidInput(format!(
                "{} radii but {} values",
                radii.len(),
                values.len()
            )));
        }
        if margin >= radii.len() {
            return Err(QlabError::GridTooSmall { nodes: radii.len(), required: margin + 1 });
        }
        if let Some(i) = (0..radii.len() - margin).find(|&i| !values[i].is_finite()) {
            return Err(QlabError::InvalidInput(format!("non-finite radial value at node {i}")));
        }
        Ok(Self { radii, values, margin })
    }

    /// `count` equally spaced radii on `[0, r_max]`.
    pub fn uniform_radii(r_max: f64, count: usize) -> Vec<f64> {
        let h = r_max / (count - 1) as f64;
        (0..count).map(|i| i as f64 * h).collect()
    }

    pub fn sample(radii: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = radii.iter().map(|&r| f(r)).collect();
        Self::new(radii, values)
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn margin(&self) -> usize {
        self.margin
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    /// Number of leading nodes carrying valid values.
    pub fn valid_len(&self) -> usize {
        self.radii.len() - self.margin
    }

    /// Uniform spacing, if the radii are equally spaced.
    pub fn spacing(&self) -> Option<f64> {
        let h = self.radii[1] - self.radii[0];
        let uniform = self
            .radii
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h);
        uniform.then_some(h)
    }

    pub fn header(&self, n: usize) -> GridHeader {
        GridHeader {
            n,
            bounds: [0.0, *self.radii.last().expect("nonempty")],
            m: self.radii.len(),
            spacing: self.spacing().unwrap_or(f64::NAN),
            margin: self.margin,
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "r,value")?;
        for (r, v) in self.radii.iter().zip(&self.values) {
            writeln!(out, "{r:?},{v:?}")?;
        }
        Ok(())
    }
}

fn validate_radii(radii: &[f64]) -> Result<()> {
    if radii.len() < 2 {
        return Err(QlabError::GridTooSmall { nodes: radii.len(), required: 2 });
    }
    if radii[0] != 0.0 {
        return Err(QlabError::InvalidInput("radial grid must start at 0".into()));
    }
    if radii.windows(2).any(|w| !(w[1] > w[0])) || !radii.iter().all(|r| r.is_finite()) {
        return Err(QlabError::InvalidInput("radii must be finite and strictly increasing".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interior_indices_skip_margin() {
        let idx = interior_indices(2, 5, 1);
        assert_eq!(idx, vec![6, 7, 8, 11, 12, 13, 16, 17, 18]);
        assert!(interior_indices(3, 4, 2).is_empty());
    }

    #[test]
    fn coords_are_row_major() {
        let g = GridField::from_fn(2, -1.0, 1.0, 3, |x| x[0] * 10.0 + x[1]).unwrap();
        assert_eq!(g.coords(5), vec![0.0, 1.0]);
        assert_eq!(g.value_at(5), 1.0);
        assert_eq!(g.strides(), vec![3, 1]);
    }

    #[test]
    fn multilinear_interpolation_reproduces_affine_fields() {
        let g = GridField::from_fn(3, 0.0, 1.0, 5, |x| 1.0 + x[0] - 2.0 * x[1] + 0.5 * x[2])
            .unwrap();
        let x = [0.31, 0.77, 0.05];
        assert!((g.value(&x) - (1.0 + 0.31 - 1.54 + 0.025)).abs() < 1e-14);
        assert!(g.value(&[1.5, 0.0, 0.0]).is_nan());
    }

    #[test]
    fn rejects_bad_radii() {
        assert!(RadialField::new(vec![0.1, 0.2], vec![1.0, 1.0]).is_err());
        assert!(RadialField::new(vec![0.0, 0.2, 0.2], vec![1.0; 3]).is_err());
        assert!(RadialField::new(vec![0.0, 0.2], vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn csv_and_binary_round_trip() {
        let g = GridField::from_fn(2, -1.0, 2.0, 4, |x| x[0].sin() + x[1] * x[1]).unwrap();
        let header = g.header();
        let json = serde_json::to_string(&header).unwrap();
        assert!(json.contains("\"box\""));
        let header: GridHeader = serde_json::from_str(&json).unwrap();

        let mut csv = Vec::new();
        g.write_csv(&mut csv).unwrap();
        assert_eq!(GridField::read_csv(&header, csv.as_slice()).unwrap(), g);

        let mut bin = Vec::new();
        g.write_binary(&mut bin).unwrap();
        assert_eq!(GridField::read_binary(&header, bin.as_slice()).unwrap(), g);
    }

    #[test]
    fn fd_defaults_match_polynomials() {
        let f = FnField::new(3, |x| x[0].powi(3) + x[1] * x[2]);
        let x = [0.5, -1.0, 2.0];
        let g = f.gradient(&x);
        assert!((g[0] - 0.75).abs() < 1e-9 && (g[1] - 2.0).abs() < 1e-9);
        assert!((f.laplacian(&x) - 3.0).abs() < 1e-7);
        let lg = f.laplacian_gradient(&x);
        assert!((lg[0] - 6.0).abs() < 1e-5);
    }
}
