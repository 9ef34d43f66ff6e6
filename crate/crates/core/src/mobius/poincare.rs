use serde::Serialize;

use super::schottky::SchottkyGroup;
use crate::error::{QlabError, Result};

/// Per-length subtotals of a truncated Poincaré series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShellSums {
    pub delta: f64,
    /// `shells[k] = Σ_{|γ| = k} |γ'_{S^n}(x)|^δ`.
    pub shells: Vec<f64>,
}

impl ShellSums {
    pub fn total(&self) -> f64 {
        self.shells.iter().sum()
    }

    /// Running totals over word length.
    pub fn cumulative(&self) -> Vec<f64> {
        self.shells
            .iter()
            .scan(0.0, |acc, s| {
                *acc += s;
                Some(*acc)
            })
            .collect()
    }
}

/// Spherical log-derivatives of all words up to some depth at one point.
#[derive(Debug, Clone)]
pub struct ShellLogDerivatives {
    shells: Vec<Vec<f64>>,
}

impl ShellLogDerivatives {
    pub fn compute(group: &SchottkyGroup, x: &[f64], depth: usize) -> Result<Self> {
        if !group.in_fundamental_domain(x) {
            return Err(QlabError::InvalidInput(
                "base point must lie in the fundamental domain".into(),
            ));
        }
        Ok(Self { shells: group.shell_log_derivatives(x, depth)? })
    }

    pub fn depth(&self) -> usize {
        self.shells.len() - 1
    }

    pub fn sums(&self, delta: f64) -> ShellSums {
        let shells = self
            .shells
            .iter()
            .map(|s| s.iter().map(|l| (delta * l).exp()).sum())
            .collect();
        ShellSums { delta, shells }
    }

    /// `sqrt(S_L / S_{L-2})` on the deepest shells: the geometric mean of the
    /// last two shell-to-shell ratios.
    pub fn deep_ratio(&self, delta: f64) -> f64 {
        let l = self.depth();
        let s = |k: usize| self.shells[k].iter().map(|v| (delta * v).exp()).sum::<f64>();
        (s(l) / s(l - 2)).sqrt()
    }
}

/// `Σ_{|γ| <= depth} |γ'_{S^n}(x)|^δ` with its per-length subtotals.
pub fn poincare_partial_sum(
    group: &SchottkyGroup,
    delta: f64,
    depth: usize,
    x: &[f64],
) -> Result<ShellSums> {
    if !(delta >= 0.0) {
        return Err(QlabError::InvalidInput(format!("exponent {delta} must be >= 0")));
    }
    Ok(ShellLogDerivatives::compute(group, x, depth)?.sums(delta))
}

/// Heuristic estimate of the Poincaré exponent from the deepest shells.
#[derive(Debug, Clone, Serialize)]
pub struct ExponentEstimate {
    pub n: usize,
    pub delta_hat: f64,
    pub l_max: usize,
    /// Shell sums evaluated at `delta_hat`.
    pub shell_sums: Vec<f64>,
    /// `delta_hat < (n-4)/2`.
    pub gate: bool,
}

pub fn exponent_gate(delta_hat: f64, n: usize) -> bool {
    delta_hat < (n as f64 - 4.0) / 2.0
}

/// Bisection on `[0, n]` for the `δ` at which the deep-shell ratio equals one.
pub fn estimate_poincare_exponent(
    group: &SchottkyGroup,
    x: &[f64],
    l_max: usize,
    tol: f64,
) -> Result<ExponentEstimate> {
    if group.rank() == 0 {
        return Err(QlabError::NonconvergentRatio("trivial group has no shells".into()));
    }
    if l_max < 3 {
        return Err(QlabError::NonconvergentRatio(format!("depth {l_max} < 3")));
    }
    let logs = ShellLogDerivatives::compute(group, x, l_max)?;
    let n = group.dim();
    let (mut lo, mut hi) = (0.0, n as f64);
    if logs.deep_ratio(hi) >= 1.0 {
        return Err(QlabError::NonconvergentRatio(format!(
            "shell ratio still >= 1 at delta = {n}"
        )));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if logs.deep_ratio(mid) >= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let delta_hat = 0.5 * (lo + hi);
    Ok(ExponentEstimate {
        n,
        delta_hat,
        l_max,
        shell_sums: logs.sums(delta_hat).shells,
        gate: exponent_gate(delta_hat, n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mobius::{SchottkyConfig, Sphere};

    fn cyclic(n: usize) -> SchottkyGroup {
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        a[0] = 2.0;
        b[0] = -2.0;
        SchottkyGroup::new(&SchottkyConfig {
            n,
            spheres: vec![Sphere { center: a, radius: 1.0 }, Sphere { center: b, radius: 1.0 }],
            pairings: vec![[0, 1]],
            rotations: vec![],
        })
        .unwrap()
    }

    #[test]
    fn trivial_group_sum_is_one() {
        let g = SchottkyGroup::trivial(4);
        let s = poincare_partial_sum(&g, 1.0, 6, &[0.0; 4]).unwrap();
        assert_eq!(s.total(), 1.0);
        assert!(estimate_poincare_exponent(&g, &[0.0; 4], 6, 1e-6).is_err());
    }

    #[test]
    fn zero_exponent_counts_words() {
        let g = cyclic(3);
        let s = poincare_partial_sum(&g, 0.0, 5, &[0.0; 3]).unwrap();
        assert_eq!(s.shells, vec![1.0, 2.0, 2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn cyclic_group_has_small_exponent() {
        let g = cyclic(6);
        let e = estimate_poincare_exponent(&g, &[0.0; 6], 10, 1e-6).unwrap();
        assert!(e.delta_hat <= 0.05, "{}", e.delta_hat);
        assert!(e.gate);
    }

    #[test]
    fn gate_comparison() {
        assert!(exponent_gate(0.3, 6));
        assert!(!exponent_gate(1.0, 6));
    }

    #[test]
    fn shallow_depth_is_rejected() {
        let g = cyclic(3);
        assert!(matches!(
            estimate_poincare_exponent(&g, &[0.0; 3], 2, 1e-6),
            Err(QlabError::NonconvergentRatio(_))
        ));
    }
}
