//! Weight schedules `p_{n,1..n}` and the shortcut mass `B_n(δ)`: the total
//! `b_{n,i}` over coordinates whose weight is within a factor `1+δ` of the
//! smallest weight.

use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum WeightSchedule {
    /// `1 + 2^{i−n}`
    Geometric2,
    /// `1 + (i/n)^α`
    PowerAlpha(f64),
    /// `1 + log i / log n` (all ones when `n = 1`)
    LogRatio,
    Custom(Vec<f64>),
}

impl WeightSchedule {
    pub fn weights(&self, n: usize) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::InvalidParameter("schedule needs n >= 1".into()));
        }
        let nf = n as f64;
        let w: Vec<f64> = match self {
            WeightSchedule::Geometric2 => (1..=n).map(|i| 1.0 + 2f64.powi(i as i32 - n as i32)).collect(),
            WeightSchedule::PowerAlpha(alpha) => {
                if !(*alpha > 0.0) {
                    return Err(Error::InvalidParameter(format!("power-alpha needs alpha > 0, got {alpha}")));
                }
                (1..=n).map(|i| 1.0 + (i as f64 / nf).powf(*alpha)).collect()
            }
            WeightSchedule::LogRatio => {
                if n == 1 {
                    vec![1.0]
                } else {
                    (1..=n).map(|i| 1.0 + (i as f64).ln() / nf.ln()).collect()
                }
            }
            WeightSchedule::Custom(v) => {
                if v.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, found: v.len() });
                }
                v.clone()
            }
        };
        if let Some(i) = w.iter().position(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err(Error::InvalidParameter(format!("weight {} is {}", i + 1, w[i])));
        }
        Ok(w)
    }

    /// `q_n = Σ_i p_{n,i}`.
    pub fn q(&self, n: usize) -> Result<f64> {
        Ok(self.weights(n)?.iter().sum())
    }
}

impl FromStr for WeightSchedule {
    type Err = Error;

    /// `geometric-2`, `power-alpha:<α>`, `log-ratio`, or `custom:<p1>,<p2>,…`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = s.split_once(':').map_or((s, None), |(a, b)| (a, Some(b)));
        match (name, arg) {
            ("geometric-2", None) => Ok(WeightSchedule::Geometric2),
            ("log-ratio", None) => Ok(WeightSchedule::LogRatio),
            ("power-alpha", Some(a)) => a
                .parse()
                .map(WeightSchedule::PowerAlpha)
                .map_err(|_| Error::UnknownSchedule(s.into())),
            ("custom", Some(v)) => v
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map(WeightSchedule::Custom)
                .map_err(|_| Error::UnknownSchedule(s.into())),
            _ => Err(Error::UnknownSchedule(s.into())),
        }
    }
}

/// One `(δ, B_n(δ))` evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThresholdEntry {
    pub delta: f64,
    pub b_value: f64,
    pub p_hat: f64,
    /// Number of coordinates with `p_i < (1+δ) p̂`.
    pub count: usize,
}

/// `B_n(δ) = Σ_{i : p_i < (1+δ) p̂} b_i` with `p̂ = min_i p_i`.
pub fn b_n_delta(weights: &[f64], b: &[f64], delta: f64) -> Result<ThresholdEntry> {
    if weights.is_empty() || weights.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: weights.len(), found: b.len() });
    }
    if weights.iter().any(|p| !(*p > 0.0)) {
        return Err(Error::InvalidParameter("weights must be positive".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {delta}")));
    }
    let p_hat = weights.iter().copied().fold(f64::INFINITY, f64::min);
    let cut = (1.0 + delta) * p_hat;
    let (mut b_value, mut count) = (0.0, 0);
    for (p, bi) in weights.iter().zip(b) {
        if *p < cut {
            b_value += bi;
            count += 1;
        }
    }
    Ok(ThresholdEntry { delta, b_value, p_hat, count })
}

/// `B_n(δ)` over a grid of `δ`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LacoinThresholds {
    pub delta_grid: Vec<f64>,
    pub b_values: Vec<f64>,
    pub p_hat: f64,
}

pub fn lacoin_thresholds(weights: &[f64], b: &[f64], delta_grid: &[f64]) -> Result<LacoinThresholds> {
    let entries = delta_grid.iter().map(|&d| b_n_delta(weights, b, d)).collect::<Result<Vec<_>>>()?;
    let p_hat = entries.first().map_or(f64::NAN, |e| e.p_hat);
    Ok(LacoinThresholds {
        delta_grid: delta_grid.to_vec(),
        b_values: entries.iter().map(|e| e.b_value).collect(),
        p_hat,
    })
}

/// Finite-range reading of how `B_n(δ)` behaves as `n` grows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GrowthTrend {
    Vanishing,
    Bounded,
    Diverging,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeltaThresholds {
    pub delta_grid: Vec<f64>,
    /// Least-squares slope of `log B_n(δ)` against `log n`, per `δ`.
    pub slopes: Vec<f64>,
    pub trends: Vec<GrowthTrend>,
    /// Largest grid `δ` read as vanishing (0 if none).
    pub delta_zero: f64,
    /// Smallest grid `δ` read as diverging (1 if none).
    pub delta_infinity: f64,
    pub slope_tol: f64,
}

/// Classifies `B_n(δ)` per `δ` from its log–log slope over `n_list` and reads off
/// the two thresholds. `b_table[k][j]` is `B_{n_list[k]}(delta_grid[j])`.
pub fn delta_thresholds(n_list: &[usize], b_table: &[Vec<f64>], delta_grid: &[f64], slope_tol: f64) -> Result<DeltaThresholds> {
    if n_list.len() < 2 || b_table.len() != n_list.len() {
        return Err(Error::InvalidParameter("need B values at two or more indices".into()));
    }
    let x: Vec<f64> = n_list.iter().map(|&n| (n as f64).ln()).collect();
    let mut slopes = Vec::with_capacity(delta_grid.len());
    let mut trends = Vec::with_capacity(delta_grid.len());
    for j in 0..delta_grid.len() {
        let y: Vec<f64> = b_table.iter().map(|row| row[j].ln()).collect();
        let s = if y.iter().all(|v| *v == f64::NEG_INFINITY) { f64::NEG_INFINITY } else { slope(&x, &y) };
        slopes.push(s);
        trends.push(if s < -slope_tol {
            GrowthTrend::Vanishing
        } else if s > slope_tol {
            GrowthTrend::Diverging
        } else {
            GrowthTrend::Bounded
        });
    }
    let delta_zero = delta_grid
        .iter()
        .zip(&trends)
        .filter(|(_, t)| **t == GrowthTrend::Vanishing)
        .map(|(d, _)| *d)
        .fold(0.0, f64::max);
    let delta_infinity = delta_grid
        .iter()
        .zip(&trends)
        .filter(|(_, t)| **t == GrowthTrend::Diverging)
        .map(|(d, _)| *d)
        .fold(1.0, f64::min);
    Ok(DeltaThresholds { delta_grid: delta_grid.to_vec(), slopes, trends, delta_zero, delta_infinity, slope_tol })
}

/// Ordinary least-squares slope.
pub(crate) fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_examples() {
        assert_eq!(WeightSchedule::Geometric2.weights(3).unwrap(), vec![1.25, 1.5, 2.0]);
        assert_eq!(WeightSchedule::PowerAlpha(1.0).weights(2).unwrap(), vec![1.5, 2.0]);
        let w = WeightSchedule::LogRatio.weights(4).unwrap();
        assert_eq!(w[0], 1.0);
        assert_eq!(w[3], 2.0);
        assert!(WeightSchedule::Custom(vec![1.0]).weights(2).is_err());
        assert!(matches!("zigzag".parse::<WeightSchedule>(), Err(Error::UnknownSchedule(_))));
        assert_eq!("power-alpha:2".parse::<WeightSchedule>().unwrap(), WeightSchedule::PowerAlpha(2.0));
    }

    #[test]
    fn log_ratio_total_weight_near_2n() {
        let r: Vec<f64> = [64usize, 1024, 16384]
            .iter()
            .map(|&n| WeightSchedule::LogRatio.q(n).unwrap() / (2.0 * n as f64))
            .collect();
        assert!(r.windows(2).all(|w| w[1] > w[0]) && r[2] < 1.0 && r[2] > 0.9);
    }

    #[test]
    fn equal_weights_take_everything() {
        let e = b_n_delta(&[1.0; 5], &[0.1, 0.2, 0.3, 0.4, 0.5], 0.99).unwrap();
        assert_eq!(e.count, 5);
        assert!((e.b_value - 1.5).abs() < 1e-15);
    }

    #[test]
    fn geometric_counts_all_but_a_few() {
        // Past n ≈ 50 the margin 2^{1−n} is below double resolution and i = n − 1 sits on the cut.
        for &n in &[8usize, 16, 32] {
            let w = WeightSchedule::Geometric2.weights(n).unwrap();
            let e = b_n_delta(&w, &vec![1.0; n], 0.5).unwrap();
            // 2^{i−n} < δ(1 + 2^{1−n}) + 2^{1−n} ⇔ i ≤ n − 1 for δ = ½.
            assert_eq!(e.count, n - 1);
        }
    }

    #[test]
    fn thresholds_monotone_in_delta() {
        let w = WeightSchedule::LogRatio.weights(200).unwrap();
        let b = vec![200f64.powf(-0.5); 200];
        let grid: Vec<f64> = (1..20).map(|k| k as f64 / 20.0).collect();
        let t = lacoin_thresholds(&w, &b, &grid).unwrap();
        assert!(t.b_values.windows(2).all(|v| v[0] <= v[1]));
    }
}
