//! Numerical laboratory for constant Q-curvature metrics on conformally flat
//! manifolds.
//!
//! The crate evaluates the Paneitz operator and Q-curvature of conformal
//! factors on flat backgrounds, works with Schottky groups of Möbius maps and
//! their Poincaré series, integrates the spherical-average system behind the
//! positivity argument, runs the moving-plane scan, and performs blow-up
//! rescaling against the bubble family.
//!
//! Fields come in two flavours: evaluable fields ([`ScalarField`]) built from
//! closed forms or compositions, and sampled fields ([`GridField`],
//! [`RadialField`]) on which the finite-difference operators act.

// `!(x > 0.0)` is used on purpose: it rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conformal_ops;
pub mod error;
pub mod field;
pub mod mobius;
pub mod moving_plane;
pub mod quadrature;
pub mod radial_blowup;
pub mod rescale;
pub mod stereographic;

pub use conformal_ops::{exponents, ConformalExponents, CurvatureData, QMode};
pub use error::{QlabError, Result};
pub use field::{FnField, GridField, RadialField, ScalarField};
pub use mobius::{MobiusMap, SchottkyConfig, SchottkyGroup};
pub use moving_plane::{FarFieldExpansion, MovingPlaneReport};
pub use radial_blowup::{IterationCertificate, RadialState};
pub use stereographic::{Bubble, StereoChart};
