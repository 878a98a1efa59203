//! The two-state chain `K = [[1−α, α], [β, 1−β]]` and its closed forms, started at state 0.

use serde::Serialize;

use crate::chain::{Distribution, MarkovChain, StochasticMatrix, SUPPORT_THRESHOLD};
use crate::distances::one_minus_sqrt_one_minus_sq;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TwoStateParams {
    pub alpha: f64,
    pub beta: f64,
}

impl TwoStateParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        // rates at or below the support threshold would read as a reducible chain
        if !(alpha > SUPPORT_THRESHOLD && alpha <= 1.0 && beta > SUPPORT_THRESHOLD && beta <= 1.0) {
            return Err(Error::InvalidParameter(format!("two-state rates must lie in (0, 1], got α={alpha}, β={beta}")));
        }
        Ok(Self { alpha, beta })
    }

    pub fn rate(&self) -> f64 {
        self.alpha + self.beta
    }

    /// `α/β`
    fn x(&self) -> f64 {
        self.alpha / self.beta
    }

    /// Stationary mass of state 1, `α/(α+β)`.
    pub fn pi1(&self) -> f64 {
        self.alpha / self.rate()
    }

    /// `d_H²` in terms of `u = e^{−(α+β)t}` (continuous) or `u = (1−α−β)^m` (discrete):
    /// `(α/β) u² / [(1+A)(1+B)(A+B)]`, `A = √(1 + (α/β)u)`, `B = √(1 − u)`.
    /// Free of cancellation as `u → 0`.
    fn hellinger_sq_of(&self, u: f64) -> f64 {
        let a = (1.0 + self.x() * u).max(0.0).sqrt();
        let b = (1.0 - u).max(0.0).sqrt();
        let r = (1.0 + a) * (1.0 + b) * (a + b);
        (self.x() * u * u / r).clamp(0.0, 1.0)
    }
}

/// Two-state chain together with its closed-form distances from `δ₀`.
#[derive(Clone, Debug)]
pub struct TwoState {
    pub params: TwoStateParams,
    pub chain: MarkovChain,
}

pub fn two_state_chain(params: TwoStateParams) -> TwoState {
    let TwoStateParams { alpha, beta } = params;
    let kernel = StochasticMatrix::from_rows(vec![vec![1.0 - alpha, alpha], vec![beta, 1.0 - beta]])
        .expect("two-state kernel is square and finite");
    let pi = Distribution::new(vec![beta / (alpha + beta), alpha / (alpha + beta)]).expect("closed-form stationary");
    let chain = MarkovChain::with_stationary(format!("two-state(alpha={alpha}, beta={beta})"), kernel, pi)
        .expect("two-state chain with positive rates is valid");
    TwoState { params, chain }
}

impl TwoState {
    fn u(&self, t: f64) -> f64 {
        (-self.params.rate() * t).exp()
    }

    /// `d₂(0,t)² = (α/β) e^{−2(α+β)t}`.
    pub fn l2_sq(&self, t: f64) -> f64 {
        self.params.x() * (-2.0 * self.params.rate() * t).exp()
    }

    pub fn hellinger_sq(&self, t: f64) -> f64 {
        self.params.hellinger_sq_of(self.u(t))
    }

    /// `d_TV(0,t) = α/(α+β) e^{−(α+β)t}`.
    pub fn tv(&self, t: f64) -> f64 {
        self.params.pi1() * self.u(t)
    }

    /// `d₂²/(4[2 + (α/β)u]) ≤ d_H² ≤ d₂²/(2 + (α/β)u)` with `u = e^{−(α+β)t}`.
    pub fn hellinger_sq_bracket(&self, t: f64) -> (f64, f64) {
        let d = 2.0 + self.params.x() * self.u(t);
        let l2 = self.l2_sq(t);
        (l2 / (4.0 * d), l2 / d)
    }

    /// Discrete time: `K^m(0,0) = β/(α+β) + α/(α+β)(1−α−β)^m`.
    pub fn discrete_k00(&self, m: u64) -> f64 {
        let lam = 1.0 - self.params.rate();
        self.params.beta / self.params.rate() + self.params.pi1() * lam.powf(m as f64)
    }

    pub fn discrete_tv(&self, m: u64) -> f64 {
        self.params.pi1() * (1.0 - self.params.rate()).powf(m as f64).abs()
    }

    pub fn discrete_hellinger_sq(&self, m: u64) -> f64 {
        self.params.hellinger_sq_of((1.0 - self.params.rate()).powf(m as f64))
    }

    /// `(1 − √(1 − d_TV²)) / d_H²` at discrete step `m`.
    pub fn discrete_tv_hellinger_ratio(&self, m: u64) -> f64 {
        one_minus_sqrt_one_minus_sq(self.discrete_tv(m)) / self.discrete_hellinger_sq(m)
    }
}

/// The limit `4αβ/(α+β)²` of [`TwoState::discrete_tv_hellinger_ratio`].
pub fn tv_hellinger_ratio_limit(p: TwoStateParams) -> f64 {
    4.0 * p.alpha * p.beta / (p.rate() * p.rate())
}

/// `f_n(c) = e^{−c} / ([2 + √(2 + 2√(1 − 1/(ne^c)))] [1 + √(1 − 1/(ne^c))])`.
pub fn ex2p_fn(n: u64, c: f64) -> Result<f64> {
    let y = n as f64 * c.exp();
    if !(y > 1.0) {
        return Err(Error::DomainError(format!("n e^c = {y} must exceed 1")));
    }
    let s = (1.0 - 1.0 / y).sqrt();
    Ok((-c).exp() / ((2.0 + (2.0 + 2.0 * s).sqrt()) * (1.0 + s)))
}

/// `f_n(c) = (n/2)(2 − √(1 + (ne^c)^{−1/2}) − √(1 − (ne^c)^{−1/2}))`, evaluated as written.
pub fn ex2p_fn_direct(n: u64, c: f64) -> Result<f64> {
    let y = n as f64 * c.exp();
    if !(y > 1.0) {
        return Err(Error::DomainError(format!("n e^c = {y} must exceed 1")));
    }
    let z = y.powf(-0.5);
    Ok(n as f64 / 2.0 * (2.0 - (1.0 + z).sqrt() - (1.0 - z).sqrt()))
}

/// Exact TV from stationarity of `copies` independent two-state chains, all
/// started at 0 and observed at the same local time `s`.
///
/// Each coordinate is a Bernoulli; the number of coordinates in state 1 is a
/// sufficient statistic, so the distance equals the TV between Binomial(n, x)
/// and Binomial(n, y), `x = π₁(1 − e^{−(α+β)s})`, `y = π₁`.
pub fn identical_product_tv_from_zero(p: TwoStateParams, copies: u64, s: f64) -> f64 {
    let y = p.pi1();
    let x = y * -(-p.rate() * s).exp_m1();
    binomial_tv(copies, x, y)
}

/// `d_H²` of the same identical product: `1 − (1 − h²)^n` with `h` the coordinate Hellinger.
pub fn identical_product_hellinger_sq_from_zero(p: TwoStateParams, copies: u64, s: f64) -> f64 {
    let h2 = two_state_chain(p).hellinger_sq(s);
    -(copies as f64 * (-h2).ln_1p()).exp_m1()
}

fn binomial_tv(n: u64, x: f64, y: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    let nf = n as f64;
    let ln_n_fact = ln_gamma(nf + 1.0);
    let log_pmf = |k: f64, p: f64| -> f64 {
        let lc = ln_n_fact - ln_gamma(k + 1.0) - ln_gamma(nf - k + 1.0);
        let a = if k == 0.0 { 0.0 } else if p <= 0.0 { f64::NEG_INFINITY } else { k * p.ln() };
        let b = if k == nf { 0.0 } else if p >= 1.0 { f64::NEG_INFINITY } else { (nf - k) * (-p).ln_1p() };
        lc + a + b
    };
    let s: f64 = (0..=n)
        .map(|k| {
            let k = k as f64;
            (log_pmf(k, x).exp() - log_pmf(k, y).exp()).abs()
        })
        .sum();
    (0.5 * s).min(1.0)
}
