use num_rational::Ratio;
use num_traits::ToPrimitive;
use serde::Serialize;

use crate::error::{QlabError, Result};

/// The exponent family attached to dimension `n`:
/// `a = 4/(n-4)` (metric), `q = (n+4)/(n-4)` (nonlinearity),
/// `p = 2n/(n-4)` (volume) and `s = (n-2)/(n-4)` (Yamabe bridge).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ConformalExponents {
    n: usize,
    #[serde(serialize_with = "ser_ratio")]
    metric: Ratio<i64>,
    #[serde(serialize_with = "ser_ratio")]
    nonlinearity: Ratio<i64>,
    #[serde(serialize_with = "ser_ratio")]
    volume: Ratio<i64>,
    #[serde(serialize_with = "ser_ratio")]
    yamabe: Ratio<i64>,
}

fn ser_ratio<S: serde::Serializer>(r: &Ratio<i64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&r.to_string())
}

pub fn exponents(n: usize) -> Result<ConformalExponents> {
    ConformalExponents::new(n)
}

impl ConformalExponents {
    pub fn new(n: usize) -> Result<Self> {
        if n < 5 {
            return Err(QlabError::DimensionTooSmall(n));
        }
        let ni = n as i64;
        let d = ni - 4;
        Ok(Self {
            n,
            metric: Ratio::new(4, d),
            nonlinearity: Ratio::new(ni + 4, d),
            volume: Ratio::new(2 * ni, d),
            yamabe: Ratio::new(ni - 2, d),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn metric_ratio(&self) -> Ratio<i64> {
        self.metric
    }

    pub fn nonlinearity_ratio(&self) -> Ratio<i64> {
        self.nonlinearity
    }

    pub fn volume_ratio(&self) -> Ratio<i64> {
        self.volume
    }

    pub fn yamabe_ratio(&self) -> Ratio<i64> {
        self.yamabe
    }

    /// `4/(n-4)`
    pub fn a(&self) -> f64 {
        to_f64(self.metric)
    }

    /// `(n+4)/(n-4)`
    pub fn q(&self) -> f64 {
        to_f64(self.nonlinearity)
    }

    /// `2n/(n-4)`
    pub fn p(&self) -> f64 {
        to_f64(self.volume)
    }

    /// `(n-2)/(n-4)`
    pub fn s(&self) -> f64 {
        to_f64(self.yamabe)
    }

    /// Conformal weight `(n-4)/2` of the Paneitz operator.
    pub fn weight(&self) -> f64 {
        (self.n as f64 - 4.0) / 2.0
    }

    /// `K_n = n(n-4)(n^2-4)/16`, the constant in `(-Δ)^2 U = K_n U^q` for the
    /// standard bubble, equal to the Q-curvature of the unit round sphere.
    pub fn bubble_constant(&self) -> f64 {
        let n = self.n as f64;
        n * (n - 4.0) * (n * n - 4.0) / 16.0
    }
}

fn to_f64(r: Ratio<i64>) -> f64 {
    r.to_f64().expect("small rationals convert")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spot_values() {
        let e5 = exponents(5).unwrap();
        assert_eq!((e5.a(), e5.q(), e5.p(), e5.s()), (4.0, 9.0, 10.0, 3.0));
        let e6 = exponents(6).unwrap();
        assert_eq!((e6.a(), e6.q(), e6.p(), e6.s()), (2.0, 5.0, 6.0, 2.0));
        let e8 = exponents(8).unwrap();
        assert_eq!((e8.a(), e8.q(), e8.p(), e8.s()), (1.0, 3.0, 4.0, 1.5));
        assert_eq!(e6.bubble_constant(), 24.0);
    }

    #[test]
    fn rejects_low_dimensions() {
        for n in 0..5 {
            assert_eq!(exponents(n), Err(QlabError::DimensionTooSmall(n)));
        }
    }

    #[test]
    fn rational_identities_are_exact() {
        for n in 5..40usize {
            let e = exponents(n).unwrap();
            let d = Ratio::from_integer(n as i64 - 4);
            let ni = n as i64;
            assert_eq!(e.nonlinearity_ratio() * d, Ratio::from_integer(ni + 4));
            assert_eq!(e.metric_ratio() * d, Ratio::from_integer(4));
            assert_eq!(e.volume_ratio() * d, Ratio::from_integer(2 * ni));
            assert_eq!(e.yamabe_ratio() * d, Ratio::from_integer(ni - 2));
            assert_eq!(e.nonlinearity_ratio(), e.metric_ratio() * 2 + 1);
            assert!(e.q() > 1.0);
        }
    }
}
