//! Fourth-order central-difference operators on Cartesian and radial grids.
//!
//! Outputs are interior-only: each application widens the invalid margin by
//! [`STENCIL_HALF_WIDTH`] nodes and no one-sided stencils are used.

use rayon::prelude::*;

use crate::error::{QlabError, Result};
use crate::field::{GridField, RadialField, ScalarField};

pub const STENCIL_HALF_WIDTH: usize = 2;

const SECOND: [f64; 5] = [-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0];
const FIRST: [f64; 5] = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];

fn widened(f: &GridField) -> Result<usize> {
    let margin = f.margin() + STENCIL_HALF_WIDTH;
    let required = 2 * margin + 1;
    if f.nodes_per_axis() < required {
        return Err(QlabError::GridTooSmall { nodes: f.nodes_per_axis(), required });
    }
    Ok(margin)
}

fn apply_axis_stencil(
    f: &GridField,
    weights: impl Fn(usize) -> Option<&'static [f64; 5]> + Sync,
    scale: f64,
) -> Result<GridField> {
    let margin = widened(f)?;
    let n = f.dim();
    let m = f.nodes_per_axis();
    let strides = f.strides();
    let src = f.values();
    let interior = crate::field::interior_indices(n, m, margin);
    let out: Vec<f64> = interior
        .par_iter()
        .map(|&idx| {
            let mut acc = 0.0;
            for (axis, &stride) in strides.iter().enumerate() {
                if let Some(w) = weights(axis) {
                    let base = idx - 2 * stride;
                    for (k, c) in w.iter().enumerate() {
                        if *c != 0.0 {
                            acc += c * src[base + k * stride];
                        }
                    }
                }
            }
            acc * scale
        })
        .collect();
    let mut values = vec![f64::NAN; f.len()];
    for (i, v) in interior.into_iter().zip(out) {
        values[i] = v;
    }
    Ok(GridField::from_parts(n, f.lo(), f.hi(), m, margin, values))
}

/// Discrete Laplacian `Δ_h f` on interior nodes.
pub fn laplacian(f: &GridField) -> Result<GridField> {
    let h = f.spacing();
    apply_axis_stencil(f, |_| Some(&SECOND), 1.0 / (h * h))
}

/// `(-Δ_h)^2 f = Δ_h(Δ_h f)`, valid on nodes at least two stencil widths inside.
pub fn bilaplacian(f: &GridField) -> Result<GridField> {
    let required = 2 * (f.margin() + 2 * STENCIL_HALF_WIDTH) + 1;
    if f.nodes_per_axis() < required {
        return Err(QlabError::GridTooSmall { nodes: f.nodes_per_axis(), required });
    }
    laplacian(&laplacian(f)?)
}

/// Partial derivative along `axis`.
pub fn gradient_component(f: &GridField, axis: usize) -> Result<GridField> {
    if axis >= f.dim() {
        return Err(QlabError::InvalidInput(format!("axis {axis} out of range")));
    }
    let h = f.spacing();
    apply_axis_stencil(f, |a| (a == axis).then_some(&FIRST), 1.0 / h)
}

/// `|∇_h f|^2` on interior nodes.
pub fn gradient_norm_sq(f: &GridField) -> Result<GridField> {
    let mut acc: Option<GridField> = None;
    for axis in 0..f.dim() {
        let g = gradient_component(f, axis)?;
        acc = Some(match acc {
            None => g.map_interior(|v, _| v * v),
            Some(prev) => {
                let vals: Vec<f64> = prev
                    .values()
                    .iter()
                    .zip(g.values())
                    .map(|(a, b)| a + b * b)
                    .collect();
                GridField::from_parts(f.dim(), f.lo(), f.hi(), f.nodes_per_axis(), g.margin(), vals)
            }
        });
    }
    acc.ok_or_else(|| QlabError::InvalidInput("zero-dimensional grid".into()))
}

/// The grid Laplacian evaluated directly at a single point `x` of a grid with
/// spacing `h`, reading the field at the stencil nodes. Agrees with
/// [`laplacian`] on sampled grids; used where a full grid would not fit in
/// memory.
pub fn laplacian_probe(field: &dyn ScalarField, x: &[f64], h: f64) -> f64 {
    let mut y = x.to_vec();
    let mut acc = 0.0;
    for axis in 0..x.len() {
        for (k, c) in SECOND.iter().enumerate() {
            y[axis] = x[axis] + (k as f64 - 2.0) * h;
            acc += c * field.value(&y);
        }
        y[axis] = x[axis];
    }
    acc / (h * h)
}

/// Pointwise counterpart of [`bilaplacian`].
pub fn bilaplacian_probe(field: &dyn ScalarField, x: &[f64], h: f64) -> f64 {
    let mut y = x.to_vec();
    let mut acc = 0.0;
    for axis in 0..x.len() {
        for (k, c) in SECOND.iter().enumerate() {
            y[axis] = x[axis] + (k as f64 - 2.0) * h;
            acc += c * laplacian_probe(field, &y, h);
        }
        y[axis] = x[axis];
    }
    acc / (h * h)
}

fn radial_spacing(f: &RadialField) -> Result<f64> {
    f.spacing()
        .ok_or_else(|| QlabError::InvalidInput("radial operators need uniform radii".into()))
}

/// Radial Laplacian `f'' + (n-1) f'/r`, with `n f''(0)` at the origin.
///
/// Radial profiles are even in `r`, so stencil nodes at negative radii read the
/// mirrored value.
pub fn radial_laplacian(f: &RadialField, n: usize) -> Result<RadialField> {
    let h = radial_spacing(f)?;
    let margin = f.margin() + STENCIL_HALF_WIDTH;
    if f.len() < margin + 3 {
        return Err(QlabError::GridTooSmall { nodes: f.len(), required: margin + 3 });
    }
    let v = f.values();
    let at = |i: isize| v[i.unsigned_abs()];
    let valid = f.len() - margin;
    let mut out = vec![f64::NAN; f.len()];
    for (i, slot) in out.iter_mut().enumerate().take(valid) {
        let ii = i as isize;
        let second: f64 = SECOND
            .iter()
            .enumerate()
            .map(|(k, c)| c * at(ii + k as isize - 2))
            .sum::<f64>()
            / (h * h);
        *slot = if i == 0 {
            // f'/r -> f''(0), approximated with the truncation error the FIRST
            // stencil has near the origin (-h^4 f^(6)/30 against -h^4 f^(6)/90
            // for SECOND), so the output stays smooth across r = 0.
            let sixth = (2.0 * at(3) - 12.0 * at(2) + 30.0 * at(1) - 20.0 * at(0)) / (h * h);
            second + (n as f64 - 1.0) * (second - sixth / 45.0)
        } else {
            let first: f64 = FIRST
                .iter()
                .enumerate()
                .map(|(k, c)| c * at(ii + k as isize - 2))
                .sum::<f64>()
                / h;
            second + (n as f64 - 1.0) * first / f.radii()[i]
        };
    }
    RadialField::with_margin(f.radii().to_vec(), out, margin)
}

pub fn radial_bilaplacian(f: &RadialField, n: usize) -> Result<RadialField> {
    radial_laplacian(&radial_laplacian(f, n)?, n)
}
