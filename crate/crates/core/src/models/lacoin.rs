//! A birth–death chain on `{0..2n}` with a shortcut from `n` to `2n` and a
//! weak return edge from `2n` to `n`, plus the envelope bounds on its
//! maximum distances.
//!
//! Transitions (with `b' = b·n^{−β}`):
//! `j → j+1` w.p. `1−a` for `j ∉ {n, 2n}`; `j → j−1` w.p. `a` for `j ≥ 1`;
//! `0 → 0` w.p. `a`; `n → n+1` w.p. `b'`; `n → 2n` w.p. `1−a−b'`;
//! `2n → n` w.p. `c`; `2n → 2n` w.p. `1−a−c`. The return rate `c` is
//! the unique value making the chain reversible.

use serde::Serialize;

use crate::chain::{dense_stationary, Distribution, MarkovChain, StochasticMatrix};
use crate::error::{Error, Result};

/// Relative tolerance between the log-space stationary vector and the linear solve.
pub const STATIONARY_CROSS_CHECK: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LacoinParams {
    pub n: usize,
    pub a: f64,
    pub b: f64,
    pub beta_exp: f64,
    /// Derived return probability `2n → n`.
    pub c: f64,
}

impl LacoinParams {
    pub fn new(n: usize, a: f64, b: f64, beta_exp: f64) -> Result<Self> {
        if n < 1 {
            return Err(Error::InadmissibleParams("n must be >= 1".into()));
        }
        if !(beta_exp >= 0.0) || !beta_exp.is_finite() {
            return Err(Error::InadmissibleParams(format!("beta_exp = {beta_exp} must be >= 0")));
        }
        if !(a > 0.0 && a < b) {
            return Err(Error::InadmissibleParams(format!("need 0 < a < b, got a={a}, b={b}")));
        }
        let b_eff = b * (n as f64).powf(-beta_exp);
        if !(b_eff > 0.0 && a + b_eff <= 1.0) || a >= 1.0 {
            return Err(Error::InadmissibleParams(format!("transition out of [0,1]: a={a}, b·n^-β={b_eff}")));
        }
        // c = a^n (1−a−b') / (b' (1−a)^{n−1}), in logs.
        let nf = n as f64;
        let log_c = nf * a.ln() + (1.0 - a - b_eff).ln() - b_eff.ln() - (nf - 1.0) * (-a).ln_1p();
        let c = if 1.0 - a - b_eff > 0.0 { log_c.exp() } else { 0.0 };
        if !(c > 0.0) || a + c > 1.0 {
            return Err(Error::InadmissibleParams(format!("derived return probability c = {c} unusable")));
        }
        Ok(Self { n, a, b, beta_exp, c })
    }

    /// The actual transition probability `n → n+1`.
    pub fn b_eff(&self) -> f64 {
        self.b * (self.n as f64).powf(-self.beta_exp)
    }

    /// `a < b`, `a + b < ½` and `β = 0`: the regime of the envelope bounds.
    pub fn in_envelope_regime(&self) -> bool {
        self.beta_exp == 0.0 && self.a < self.b && self.a + self.b < 0.5
    }

    /// `log π(i) − log π(0)` from detailed balance along the path.
    pub fn log_stationary_ratios(&self) -> Vec<f64> {
        let (la, l1a) = (self.a.ln(), (-self.a).ln_1p());
        let lb = self.b_eff().ln();
        (0..=2 * self.n)
            .map(|i| {
                let fi = i as f64;
                if i <= self.n {
                    fi * (l1a - la)
                } else {
                    (fi - 1.0) * l1a + lb - fi * la
                }
            })
            .collect()
    }

    pub fn stationary(&self) -> Distribution {
        let lr = self.log_stationary_ratios();
        let m = lr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = lr.iter().map(|x| (x - m).exp()).collect();
        Distribution::from_unnormalized(w).expect("finite positive weights")
    }

    pub fn kernel(&self) -> StochasticMatrix {
        let n = self.n;
        let size = 2 * n + 1;
        let (a, bp, c) = (self.a, self.b_eff(), self.c);
        let mut k = vec![0.0; size * size];
        let mut add = |i: usize, j: usize, p: f64| k[i * size + j] += p;
        add(0, 0, a);
        for j in 0..2 * n {
            if j != n {
                add(j, j + 1, 1.0 - a);
            }
        }
        for j in 1..=2 * n {
            add(j, j - 1, a);
        }
        add(n, n + 1, bp);
        add(n, 2 * n, 1.0 - a - bp);
        add(2 * n, n, c);
        add(2 * n, 2 * n, 1.0 - a - c);
        StochasticMatrix::from_row_major(size, k).expect("square finite kernel")
    }
}

/// Builds the chain; the log-space stationary vector is cross-checked against
/// a dense linear solve in sup norm relative to its largest entry.
pub fn lacoin_chain(params: &LacoinParams) -> Result<MarkovChain> {
    let kernel = kernel_checked(params)?;
    let pi = params.stationary();
    let solved = dense_stationary(&kernel)?;
    let scale = pi.as_slice().iter().copied().fold(0.0, f64::max);
    let discrepancy = pi
        .as_slice()
        .iter()
        .zip(solved.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
        / scale;
    if discrepancy > STATIONARY_CROSS_CHECK {
        return Err(Error::StationaryMismatch { discrepancy });
    }
    let label = format!("lacoin(n={}, a={}, b={}, beta={})", params.n, params.a, params.b, params.beta_exp);
    MarkovChain::with_stationary(label, kernel, pi)
}

fn kernel_checked(params: &LacoinParams) -> Result<StochasticMatrix> {
    let k = params.kernel();
    if let Some(i) = k.as_row_major().iter().position(|p| !(0.0..=1.0).contains(p)) {
        let size = k.size();
        return Err(Error::InadmissibleParams(format!("K({}, {}) = {}", i / size, i % size, k.as_row_major()[i])));
    }
    Ok(k)
}

/// Right-hand sides of the four envelope inequalities at one time; `None`
/// outside a bound's time window (or outside the parameter regime).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct LacoinEnvelope {
    pub t: f64,
    /// Upper bound on max `d_H²`, for `t > (n+1)/(1−2a)`.
    pub hellinger_sq_upper_1: Option<f64>,
    /// Upper bound on max `d_H²`, for `t > 2n/(1−2a)`.
    pub hellinger_sq_upper_2: Option<f64>,
    /// Lower bound on max `d_H²`, for `n < t < 2n`.
    pub hellinger_sq_lower: Option<f64>,
    /// Lower bound on max `d_TV`, for `0 < t < n`.
    pub tv_lower: Option<f64>,
}

/// `e^{−t} (te/k)^k √k`, in logs.
fn poisson_tail_envelope(t: f64, k: f64) -> f64 {
    (-t + k * (t.ln() + 1.0 - k.ln()) + 0.5 * k.ln()).exp()
}

pub fn lacoin_bound_envelope(params: &LacoinParams, t: f64) -> LacoinEnvelope {
    let mut env = LacoinEnvelope { t, ..Default::default() };
    if !params.in_envelope_regime() || !(t > 0.0) {
        return env;
    }
    let (a, b) = (params.a, params.b);
    let n = params.n as f64;
    let gap = 1.0 - 2.0 * a;
    if t > (n + 1.0) / gap {
        env.hellinger_sq_upper_1 =
            Some(2.0 * a * t + b + poisson_tail_envelope(t, n + 1.0) / (gap * t - (n + 1.0)));
    }
    if t > 2.0 * n / gap {
        env.hellinger_sq_upper_2 = Some(2.0 * a * t + poisson_tail_envelope(t, 2.0 * n) / (gap * t - 2.0 * n));
    }
    if n < t && t < 2.0 * n {
        let x = 1.0 - poisson_tail_envelope(t, 2.0 * n) / (2.0 * n - t);
        // Past the point where the bracketed factor turns negative the bound has no real value.
        if x >= 0.0 {
            let p1 = (1.0 - a).powf(n);
            env.hellinger_sq_lower = Some(0.5 * (a + p1 * p1 * b * x) - (a * b).sqrt() * p1 * x.sqrt());
        }
    }
    if t < n {
        env.tv_lower = Some(1.0 - 2.0 * a - poisson_tail_envelope(t, n) / (n - t));
    }
    env
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn return_probability_small_case() {
        let p = LacoinParams::new(2, 0.1, 0.3, 0.0).unwrap();
        assert!((p.c - 0.01 * 0.6 / (0.3 * 0.9)).abs() < 1e-15);
        let lhs = p.b * p.c * (1.0 - p.a);
        let rhs = (1.0 - p.a - p.b) * p.a * p.a;
        assert!((lhs - rhs).abs() <= 1e-12 * rhs);
    }

    #[test]
    fn stationary_matches_solve_and_balances() {
        let p = LacoinParams::new(2, 0.1, 0.3, 0.0).unwrap();
        let c = lacoin_chain(&p).unwrap();
        let solved = dense_stationary(c.kernel()).unwrap();
        for (x, y) in c.stationary().as_slice().iter().zip(solved.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(c.reversible());
        let k = c.kernel();
        let pi = c.stationary();
        for x in 0..5 {
            for y in 0..5 {
                assert!((pi[x] * k.get(x, y) - pi[y] * k.get(y, x)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mass_at_far_end() {
        for &a in &[0.001, 0.01, 0.05] {
            for &n in &[3usize, 8, 20] {
                let p = LacoinParams::new(n, a, 10.0 * a, 0.0).unwrap();
                let pi = p.stationary();
                let top = pi[2 * n];
                assert!(1.0 - 2.0 * a < top && top < 1.0 - a, "n={n} a={a}: {top}");
            }
        }
    }

    #[test]
    fn inadmissible() {
        assert!(LacoinParams::new(3, 0.2, 0.1, 0.0).is_err());
        assert!(LacoinParams::new(3, 0.3, 0.8, 0.0).is_err());
        assert!(LacoinParams::new(0, 0.1, 0.2, 0.0).is_err());
    }

    #[test]
    fn tiny_a_does_not_overflow() {
        let p = LacoinParams::new(50, 1e-3, 1e-2, 0.0).unwrap();
        let pi = p.stationary();
        assert!(pi.as_slice().iter().all(|x| x.is_finite()));
        assert!(pi[100] > 0.99);
    }

    #[test]
    fn positive_exponent_scales_shortcut() {
        let p = LacoinParams::new(4, 0.01, 0.2, 1.0).unwrap();
        assert!((p.b_eff() - 0.05).abs() < 1e-15);
        let k = p.kernel();
        assert!((k.get(4, 5) - 0.05).abs() < 1e-15);
        assert!(lacoin_chain(&p).unwrap().reversible());
        assert_eq!(lacoin_bound_envelope(&p, 1.0), LacoinEnvelope { t: 1.0, ..Default::default() });
    }

    #[test]
    fn envelope_windows() {
        let p = LacoinParams::new(8, 0.005, 0.05, 0.0).unwrap();
        let e = lacoin_bound_envelope(&p, 4.0);
        assert!(e.tv_lower.is_some() && e.hellinger_sq_lower.is_none() && e.hellinger_sq_upper_2.is_none());
        let want = 1.0 - 0.01 - (-4.0f64).exp() * (4.0 * std::f64::consts::E / 8.0).powi(8) * 8f64.sqrt() / 4.0;
        assert!((e.tv_lower.unwrap() - want).abs() < 1e-12);
        let e = lacoin_bound_envelope(&p, 12.0);
        assert!(e.hellinger_sq_lower.is_some() && e.tv_lower.is_none());
        let e = lacoin_bound_envelope(&p, 40.0);
        assert!(e.hellinger_sq_upper_1.is_some() && e.hellinger_sq_upper_2.is_some());
    }
}
