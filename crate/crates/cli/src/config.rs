//! Experiment configuration files.

use std::fmt;
use std::path::Path;

use qlab_core::SchottkyConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Experiment {
    BubbleCheck,
    QAudit,
    RadialBlowup,
    Poincare,
    OrbitIntegral,
    MovingPlane,
    Blowup,
    PaneitzFunctional,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Self::BubbleCheck => "bubble-check",
            Self::QAudit => "q-audit",
            Self::RadialBlowup => "radial-blowup",
            Self::Poincare => "poincare",
            Self::OrbitIntegral => "orbit-integral",
            Self::MovingPlane => "moving-plane",
            Self::Blowup => "blowup",
            Self::PaneitzFunctional => "paneitz-functional",
        }
    }
}

/// Invalid configuration: unreadable, malformed, or failing validation.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn check_name(name: &Option<String>, expected: Experiment) -> Result<(), ConfigError> {
    match name {
        Some(n) if n != expected.name() => Err(invalid(format!(
            "config is for experiment '{n}', not '{}'",
            expected.name()
        ))),
        _ => Ok(()),
    }
}

fn check_n(n: usize) -> Result<(), ConfigError> {
    if n < 5 {
        return Err(invalid(format!("n = {n}: dimension must be at least 5")));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<(), ConfigError> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(invalid(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

fn check_center(center: &Option<Vec<f64>>, n: usize) -> Result<(), ConfigError> {
    match center {
        Some(c) if c.len() != n => Err(invalid(format!("center has {} entries, expected {n}", c.len()))),
        Some(c) if c.iter().any(|v| !v.is_finite()) => Err(invalid("center must be finite")),
        _ => Ok(()),
    }
}

fn check_group(group: &SchottkyConfig) -> Result<(), ConfigError> {
    check_n(group.n)?;
    qlab_core::SchottkyGroup::new(group).map_err(|e| invalid(format!("group: {e}")))?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BubbleCheckConfig {
    pub experiment: Option<String>,
    pub n: usize,
    /// Nodes per axis of the Cartesian grid.
    pub m: usize,
    pub half_width: f64,
    pub radial_max: f64,
    pub radial_nodes: usize,
    pub radial_tolerance: f64,
    pub grid_tolerance: f64,
    pub min_order: f64,
}

impl Default for BubbleCheckConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            n: 6,
            m: 17,
            half_width: 1.0,
            radial_max: 3.0,
            radial_nodes: 601,
            radial_tolerance: 1e-6,
            grid_tolerance: 1e-2,
            min_order: 2.0,
        }
    }
}

impl BubbleCheckConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_name(&self.experiment, Experiment::BubbleCheck)?;
        if !(5..=6).contains(&self.n) {
            return Err(invalid("full grids are limited to n = 5 or 6"));
        }
        if !(9..=33).contains(&self.m) {
            return Err(invalid(format!("m = {} must lie in 9..=33", self.m)));
        }
        check_positive("half_width", self.half_width)?;
        check_positive("radial_max", self.radial_max)?;
        if self.radial_nodes < 16 {
            return Err(invalid("radial_nodes must be at least 16"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QAuditConfig {
    pub experiment: Option<String>,
    pub n: usize,
}

impl Default for QAuditConfig {
    fn default() -> Self {
        Self { experiment: None, n: 6 }
    }
}

impl QAuditConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_name(&self.experiment, Experiment::QAudit)?;
        check_n(self.n)?;
        if self.n > 1000 {
            return Err(invalid("n above 1000 overflows the exact arithmetic"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadialBlowupConfig {
    pub experiment: Option<String>,
    pub n: usize,
    pub u0: f64,
    pub w0: f64,
    pub r_max: f64,
    pub nodes: usize,
    pub k_max: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for RadialBlowupConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            n: 5,
            u0: -1.0,
            w0: 0.0,
            r_max: 3.0,
            nodes: 3001,
            k_max: 3,
            max_iter: 500,
            tol: 1e-13,
        }
    }
}

impl RadialBlowupConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_name(&self.experiment, Experiment::RadialBlowup)?;
        check_n(self.n)?;
        if !(self.u0 < 0.0 && self.u0.is_finite()) {
            return Err(invalid(format!("u0 must be negative, got {}", self.u0)));
        }
        if !(self.w0 >= 0.0 && self.w0.is_finite()) {
            return Err(invalid(format!("w0 must be nonnegative, got {}", self.w0)));
        }
        check_positive("r_max", self.r_max)?;
        check_positive("tol", self.tol)?;
        if self.nodes < 3 {
            return Err(invalid("nodes must be at least 3"));
        }
        if self.k_max == 0 || self.k_max > 50 {
            return Err(invalid("k_max must lie in 1..=50"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoincareConfig {
    pub experiment: Option<String>,
    pub group: SchottkyConfig,
    #[serde(default = "default_depth")]
    pub depth: usize,
    /// Exponent for the reported shell sums; `(n-4)/2` when absent.
    pub delta: Option<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Base point in the fundamental domain; the group's default when absent.
    pub point: Option<Vec<f64>>,
}

fn default_depth() -> usize {
    10
}

fn default_tol() -> f64 {
    1e-6
}

impl PoincareConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_name(&self.experiment, Experiment::Poincare)?;
        check_group(&self.group)?;
        if !(3..=16).contains(&self.depth) {
            return Err(invalid("depth must lie in 3..=16"));
        }
        if let Some(d) = self.delta {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(invalid("delta must be nonnegative"));
            }
        }
        check_positive("tol", self.tol)?;
        check_center(&self.point, self.group.n)?;
        if let Some(p) = &self.point {
            let g = qlab_core::SchottkyGroup::new(&self.group).map_err(|e| invalid(e.to_string()))?;
            if !g.in_fundamental_domain(p) {
                return Err(invalid("point is not in the fundamental domain"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BubbleParams {
    pub lambda: f64,
    pub center: Option<Vec<f64>>,
}

impl BubbleParams {
    fn validate(&self, n: usize) -> Result<(), ConfigError> {
        check_positive("lambda", self.lambda)?;
        check_center(&self.center, n)
    }

    pub fn center(&self, n: usize) -> Vec<f64> {
        self.center.clone().unwrap_or_else(|| vec![0.0; n])
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitIntegralConfig {
    pub experiment: Option<String>,
    pub group: SchottkyConfig,
    /// Bubble on the fundamental domain; the unit bubble when absent.
    pub field: Option<BubbleParams>,
    #[serde(default = "default_word_depth")]
    pub word_depth: usize,
    #[serde(default = "default_series_depth")]
    pub series_depth: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    pub seed: Option<u64>,
}

fn default_word_depth() -> usize {
    2
}

fn default_series_depth() -> usize {
    6
}

fn default_samples() -> usize {
    20_000
}

impl OrbitIntegralConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_name(&self.experiment, Experiment::OrbitIntegral)?;
        check_group(&self.group)?;
        if let Some(f) = &self.field {
            f.validate(self.group.n)?;
        }
        if self.word_depth > 6 || self.series_depth > 12 {
            return Err(invalid("word_depth must be <= 6 and series_depth <= 12"));
        }
        if self.samples < 2 {
            return Err(invalid("samples must be at least 2"));
        }
        if self.seed.is_none() {
            return Err(invalid("orbit-integral is Monte Carlo: a seed is required"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum FieldSource {
    Bubble(BubbleParams),
    Automorphic {
        group: SchottkyConfig,
        #[serde(default = "default_series_depth")]
        depth: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FarFieldConfig {
    pub annulus: [f64; 2],
    pub samples: usize,
}

impl Default for FarFieldConfig {
    fn default() -> Self {
        Self { annulus: [1e2, 1e3], samples: 400 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MovingPlaneConfig {
    pub experiment: Option<String>,
    pub n: usize,
    pub source: FieldSource,
    pub axis: Option<usize>,
    pub lambda_range: [f64; 2],
    pub step: f64,
    #[serde(default = "default_plane_samples")]
    pub samples: usize,
    #[serde(default = "default_check_radius")]
    pub check_radius: f64,
    #[serde(default = "default_derivative_samples")]
    pub plane_samples: usize,
    pub tolerance: Option<f64>,
    /// Margin around the limit-set balls.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub far_field: FarFieldConfig,
    #[serde(default = "default_region_samples")]
    pub region_samples: usize,
    pub seed: Option<u64>,
}

fn default_plane_samples() -> usize {
    2000
}

fn default_check_radius() -> f64 {
    4.0
}

fn default_derivative_samples() -> usize {
    200
}

fn default_epsilon() -> f64 {
    1e-3
}

fn default_region_samples() -> usize {
    300
}

impl MovingPlaneConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_name(&self.experiment, Experiment::MovingPlane)?;
        check_n(self.n)?;
        match &self.source {
            FieldSource::Bubble(b) => b.validate(self.n)?,
            FieldSource::Automorphic { group, depth } => {
                check_group(group)?;
                if group.n != self.n {
                    return Err(invalid("group dimension differs from n"));
                }
                if *depth > 8 {
                    return Err(invalid("automorphic depth must be <= 8"));
                }
            }
        }
        if self.axis.is_some_and(|a| a >= self.n) {
            return Err(invalid("axis out of range"));
        }
        let [lo, hi] = self.lambda_range;
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(invalid("lambda_range must be an increasing pair"));
        }
        check_positive("step", self.step)?;
        check_positive("check_radius", self.check_radius)?;
        check_positive("epsilon", self.epsilon)?;
        if let Some(t) = self.tolerance {
            check_positive("tolerance", t)?;
        }
        if self.samples == 0 || self.plane_samples == 0 || self.region_samples == 0 {
            return Err(invalid("sample budgets must be positive"));
        }
        let [r1, r2] = self.far_field.annulus;
        if !(0.0 < r1 && r1 < r2 && r2.is_finite()) {
            return Err(invalid("far_field.annulus must satisfy 0 < R1 < R2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchBox {
    pub center: Option<Vec<f64>>,
    pub half_width: f64,
    pub m: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBox {
    pub half_width: f64,
    pub m: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlowupThresholds {
    pub match_error: f64,
    pub residual: f64,
}

impl Default for BlowupThresholds {
    fn default() -> Self {
        Self { match_error: 1e-8, residual: 1e-2 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlowupConfig {
    pub experiment: Option<String>,
    pub n: usize,
    /// Unit-Q bubble, optionally scaled by `amplitude_factor`.
    pub source: BubbleParams,
    #[serde(default = "one")]
    pub amplitude_factor: f64,
    pub search: SearchBox,
    /// Radius `K` of the ball `B_K` whose convexity is reported.
    #[serde(default = "default_window")]
    pub window_radius: f64,
    #[serde(default = "default_match_window")]
    pub match_window: f64,
    #[serde(default = "default_match_samples")]
    pub match_samples: usize,
    #[serde(default = "default_residual_grid")]
    pub residual_grid: GridBox,
    #[serde(default = "default_convexity_samples")]
    pub convexity_samples: usize,
    #[serde(default)]
    pub thresholds: BlowupThresholds,
    pub seed: Option<u64>,
}

fn one() -> f64 {
    1.0
}

fn default_window() -> f64 {
    10.0
}

fn default_match_window() -> f64 {
    2.0
}

fn default_match_samples() -> usize {
    600
}

fn default_residual_grid() -> GridBox {
    GridBox { half_width: 1.0, m: 13 }
}

fn default_convexity_samples() -> usize {
    40
}

impl BlowupConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_name(&self.experiment, Experiment::Blowup)?;
        if !(5..=6).contains(&self.n) {
            return Err(invalid("the residual grid is limited to n = 5 or 6"));
        }
        self.source.validate(self.n)?;
        check_positive("amplitude_factor", self.amplitude_factor)?;
        check_center(&self.search.center, self.n)?;
        check_positive("search.half_width", self.search.half_width)?;
        if !(5..=21).contains(&self.search.m) {
            return Err(invalid("search.m must lie in 5..=21"));
        }
        check_positive("window_radius", self.window_radius)?;
        check_positive("match_window", self.match_window)?;
        check_positive("residual_grid.half_width", self.residual_grid.half_width)?;
        if !(9..=21).contains(&self.residual_grid.m) {
            return Err(invalid("residual_grid.m must lie in 9..=21"));
        }
        if self.match_samples < self.n + 2 || self.convexity_samples == 0 {
            return Err(invalid("sample budgets too small"));
        }
        check_positive("thresholds.match_error", self.thresholds.match_error)?;
        check_positive("thresholds.residual", self.thresholds.residual)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PaneitzConfig {
    pub experiment: Option<String>,
    pub n: usize,
    pub lambda: f64,
    pub r_max: f64,
    pub nodes: usize,
    pub tolerance: f64,
}

impl Default for PaneitzConfig {
    fn default() -> Self {
        Self { experiment: None, n: 6, lambda: 1.0, r_max: 50.0, nodes: 20_001, tolerance: 1e-2 }
    }
}

impl PaneitzConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_name(&self.experiment, Experiment::PaneitzFunctional)?;
        check_n(self.n)?;
        check_positive("lambda", self.lambda)?;
        check_positive("r_max", self.r_max)?;
        check_positive("tolerance", self.tolerance)?;
        if self.nodes < 16 {
            return Err(invalid("nodes must be at least 16"));
        }
        Ok(())
    }
}
