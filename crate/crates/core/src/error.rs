use thiserror::Error;

pub type Result<T> = std::result::Result<T, QlabError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QlabError {
    #[error("dimension {0} is too small: conformal exponents need n >= 5")]
    DimensionTooSmall(usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("grid too small: {nodes} nodes per axis, stencil needs at least {required}")]
    GridTooSmall { nodes: usize, required: usize },
    #[error("nonpositive conformal factor {value} at node {index}")]
    NonpositiveConformalFactor { index: usize, value: f64 },
    #[error("conformal volume is zero")]
    ZeroVolume,
    #[error("point maps to the point at infinity")]
    PointAtInfinity,
    #[error("scale must be positive, got {0}")]
    NonpositiveScale(f64),
    #[error("evaluation hit the pole of an inversion")]
    PoleHit,
    #[error("word enumeration needs {words} words, budget is {budget}")]
    DepthOverflow { words: u128, budget: u128 },
    #[error("shell ratio did not converge: {0}")]
    NonconvergentRatio(String),
    #[error("point is not in any tile of depth <= {depth}")]
    PointNotInTile { depth: usize },
    #[error("sampling failure: accepted {accepted} of {total} samples")]
    SamplingFailure { accepted: usize, total: usize },
    #[error("sphere of radius {radius} leaves the evaluable domain")]
    SphereExitsDomain { radius: f64 },
    #[error("negative source value {value} at radius index {index}")]
    NegativeSource { index: usize, value: f64 },
    #[error("negative sample {0}")]
    NegativeSample(f64),
    #[error("least-squares fit is ill-conditioned (condition {condition:e})")]
    IllConditionedFit { condition: f64 },
    #[error("leading far-field coefficient a0 = {0} is not positive")]
    NonpositiveLeadingCoefficient(f64),
    #[error("no plane in [{bottom}, {top}] satisfies the reflection inequalities")]
    ScanExhausted { bottom: f64, top: f64 },
    #[error("derivative sign check failed at {point:?}")]
    SignVerificationFailed { point: Vec<f64> },
    #[error("point lies outside the evaluable domain")]
    PointOutsideDomain,
    #[error("nonlinear fit did not converge after {iterations} iterations")]
    FitNonconvergent { iterations: usize },
    #[error("ball boundary leaves the evaluable domain")]
    BoundaryOutsideDomain,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}
