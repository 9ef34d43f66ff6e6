//! Möbius maps, Schottky groups, Poincaré series and automorphic extension.

mod automorphic;
mod map;
mod poincare;
mod schottky;

pub use automorphic::{
    orbit_integral, transport, AutomorphicExtension, OrbitIntegralReport, OrbitParams,
    SeriesField, SingularSet, WordIntegral,
};
pub use map::{MobiusMap, Primitive, MAX_DIM};
pub use poincare::{
    estimate_poincare_exponent, exponent_gate, poincare_partial_sum, ExponentEstimate,
    ShellLogDerivatives, ShellSums,
};
pub use schottky::{
    word_count, GroupWord, SchottkyConfig, SchottkyGroup, Sphere, TileHit,
    DEFAULT_WORD_BUDGET,
};
