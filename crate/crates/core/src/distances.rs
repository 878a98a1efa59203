//! Total variation, Hellinger and L² distances between distributions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::chain::Distribution;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceKind {
    Tv,
    Hellinger,
    L2,
}

impl DistanceKind {
    /// Power that puts the product bounds on a common scale: 1 for TV, 2 for
    /// Hellinger, none for L².
    pub fn rho(self) -> Option<u32> {
        match self {
            DistanceKind::Tv => Some(1),
            DistanceKind::Hellinger => Some(2),
            DistanceKind::L2 => None,
        }
    }

    pub(crate) fn rho_or_err(self) -> Result<u32> {
        self.rho().ok_or(Error::InvalidKind(self.name()))
    }

    pub fn name(self) -> &'static str {
        match self {
            DistanceKind::Tv => "tv",
            DistanceKind::Hellinger => "hellinger",
            DistanceKind::L2 => "l2",
        }
    }

    /// Distance between `mu` and the reference `pi`.
    pub fn eval(self, mu: &[f64], pi: &[f64]) -> Result<f64> {
        check_dims(mu, pi)?;
        match self {
            DistanceKind::Tv => Ok(tv(mu, pi)),
            DistanceKind::Hellinger => Ok(hellinger_sq(mu, pi).sqrt()),
            DistanceKind::L2 => l2(mu, pi),
        }
    }
}

impl fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistanceKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tv" => Ok(DistanceKind::Tv),
            "hellinger" | "h" => Ok(DistanceKind::Hellinger),
            "l2" => Ok(DistanceKind::L2),
            other => Err(Error::InvalidParameter(format!("unknown distance kind `{other}`"))),
        }
    }
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    Ok(())
}

pub(crate) fn tv(mu: &[f64], nu: &[f64]) -> f64 {
    (0.5 * mu.iter().zip(nu).map(|(a, b)| (a - b).abs()).sum::<f64>()).min(1.0)
}

/// `1 − Σ√(μν)`, evaluated as `½Σ(√μ − √ν)²` so small distances keep their
/// relative precision, then clamped into `[0, 1]`.
pub(crate) fn hellinger_sq(mu: &[f64], nu: &[f64]) -> f64 {
    let s: f64 = mu
        .iter()
        .zip(nu)
        .map(|(a, b)| {
            let d = a.max(0.0).sqrt() - b.max(0.0).sqrt();
            d * d
        })
        .sum();
    (0.5 * s).clamp(0.0, 1.0)
}

fn l2(mu: &[f64], pi: &[f64]) -> Result<f64> {
    let mut s = 0.0;
    for (x, (m, p)) in mu.iter().zip(pi).enumerate() {
        if !(*p > 0.0) {
            return Err(Error::ZeroStationaryMass { state: x });
        }
        let d = m - p;
        s += d * d / p;
    }
    Ok(s.sqrt())
}

pub fn tv_distance(mu: &Distribution, nu: &Distribution) -> Result<f64> {
    DistanceKind::Tv.eval(mu.as_slice(), nu.as_slice())
}

pub fn hellinger_distance(mu: &Distribution, nu: &Distribution) -> Result<f64> {
    DistanceKind::Hellinger.eval(mu.as_slice(), nu.as_slice())
}

pub fn l2_distance(mu: &Distribution, pi: &Distribution) -> Result<f64> {
    DistanceKind::L2.eval(mu.as_slice(), pi.as_slice())
}

/// `1 − √(1 − x²)` without cancellation for small `x`.
pub fn one_minus_sqrt_one_minus_sq(x: f64) -> f64 {
    let x2 = x * x;
    x2 / (1.0 + (1.0 - x2).max(0.0).sqrt())
}

/// Gaps `(d_H² − (1 − √(1 − d_TV²)), d_TV − d_H²)`; both are nonnegative up to rounding.
pub fn sandwich_check(mu: &Distribution, nu: &Distribution) -> Result<(f64, f64)> {
    let t = tv_distance(mu, nu)?;
    let h2 = hellinger_sq(mu.as_slice(), nu.as_slice());
    Ok(sandwich_gaps(t, h2))
}

/// The same gaps from already-computed `d_TV` and `d_H²`.
pub fn sandwich_gaps(tv: f64, hellinger_sq: f64) -> (f64, f64) {
    (hellinger_sq - one_minus_sqrt_one_minus_sq(tv), tv - hellinger_sq)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(w: &[f64]) -> Distribution {
        Distribution::new(w.to_vec()).unwrap()
    }

    #[test]
    fn tv_examples() {
        let a = d(&[0.7, 0.3]);
        assert_eq!(tv_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(tv_distance(&d(&[1.0, 0.0]), &d(&[0.5, 0.5])).unwrap(), 0.5);
        assert!((tv_distance(&a, &d(&[0.25, 0.75])).unwrap() - 0.45).abs() < 1e-15);
        assert!(matches!(
            tv_distance(&a, &Distribution::uniform(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn hellinger_examples() {
        let a = d(&[0.2, 0.3, 0.5]);
        assert_eq!(hellinger_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(hellinger_distance(&d(&[1.0, 0.0]), &d(&[0.0, 1.0])).unwrap(), 1.0);
        let h = hellinger_distance(&d(&[1.0, 0.0]), &d(&[0.5, 0.5])).unwrap();
        assert!((h - 0.541_196_1).abs() < 1e-7);
        assert!((h - (1.0 - 0.5f64.sqrt()).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn l2_examples() {
        let pi = Distribution::uniform(2);
        assert_eq!(l2_distance(&pi, &pi).unwrap(), 0.0);
        assert!((l2_distance(&d(&[1.0, 0.0]), &pi).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            l2_distance(&pi, &d(&[1.0, 0.0])),
            Err(Error::ZeroStationaryMass { state: 1 })
        ));
    }

    #[test]
    fn sandwich_examples() {
        let a = d(&[0.4, 0.6]);
        assert_eq!(sandwich_check(&a, &a).unwrap(), (0.0, 0.0));
        let (lo, hi) = sandwich_check(&d(&[1.0, 0.0]), &d(&[0.0, 1.0])).unwrap();
        assert!(lo.abs() < 1e-15 && hi.abs() < 1e-15);
        let (lo, hi) = sandwich_check(&d(&[1.0, 0.0]), &d(&[0.5, 0.5])).unwrap();
        assert!(lo >= 0.0 && hi >= 0.0);
        assert!((0.5 - hi - 0.29289).abs() < 1e-5);
    }

    #[test]
    fn rho_values() {
        assert_eq!(DistanceKind::Tv.rho(), Some(1));
        assert_eq!(DistanceKind::Hellinger.rho(), Some(2));
        assert_eq!(DistanceKind::L2.rho(), None);
        assert_eq!("Hellinger".parse::<DistanceKind>().unwrap(), DistanceKind::Hellinger);
    }
}
