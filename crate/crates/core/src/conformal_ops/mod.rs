//! Conformal exponents, finite-difference operators and the curvature
//! evaluators for metrics `g_v = v^{4/(n-4)} g_0` on a flat background.

mod curvature;
mod exponents;
mod stencil;

pub use curvature::{
    bridge_terms, conformal_laplacian_flat, normalized_scalar_curvature, paneitz_functional,
    paneitz_functional_radial, q_curvature_flatbg, q_curvature_radial, q_curvature_tensorial,
    q_curvature_tensorial_exact, scalar_curvature_flatbg, scalar_curvature_radial, BridgeTerms,
    CurvatureData, ExactCurvatureData, QMode,
};
pub use exponents::{exponents, ConformalExponents};
pub use stencil::{
    bilaplacian, bilaplacian_probe, gradient_norm_sq, laplacian, laplacian_probe,
    radial_bilaplacian, radial_laplacian, STENCIL_HALF_WIDTH,
};
