//! Continuous-time kernels `H_t = e^{−t(I−K)}` by uniformization, distances
//! to stationarity along time, and mixing times in discrete and continuous time.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::chain::{power_distribution, Distribution, MarkovChain, StochasticMatrix};
use crate::distances::DistanceKind;
use crate::error::{Error, Result};
use crate::report::{fmt_f64, UNITS_LINE};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct UniformizationParams {
    /// Bound on the Poisson mass left out of the truncated series.
    pub tail_tol: f64,
    pub max_terms: usize,
}

impl Default for UniformizationParams {
    fn default() -> Self {
        Self { tail_tol: 1e-12, max_terms: 10_000_000 }
    }
}

impl UniformizationParams {
    pub fn new(tail_tol: f64, max_terms: usize) -> Result<Self> {
        let p = Self { tail_tol, max_terms };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tail_tol > 0.0 && self.tail_tol <= 1e-6) {
            return Err(Error::InvalidParameter(format!("tail_tol must lie in (0, 1e-6], got {}", self.tail_tol)));
        }
        if self.max_terms == 0 {
            return Err(Error::InvalidParameter("max_terms must be positive".into()));
        }
        Ok(())
    }
}

/// Poisson(λ) weights on `first..first + weights.len()`, covering all but
/// `tol` of the mass.
#[derive(Clone, Debug)]
pub(crate) struct PoissonWindow {
    pub first: usize,
    pub weights: Vec<f64>,
}

impl PoissonWindow {
    pub fn last(&self) -> usize {
        self.first + self.weights.len() - 1
    }
}

/// Walks outward from the mode with the ratio recurrences; each side stops once
/// the geometric remainder bound on its tail drops below `tol / 2`.
pub(crate) fn poisson_window(lambda: f64, tol: f64, max_terms: usize) -> Result<PoissonWindow> {
    if lambda == 0.0 {
        return Ok(PoissonWindow { first: 0, weights: vec![1.0] });
    }
    let estimate = lambda + 12.0 * lambda.sqrt() + 40.0;
    if estimate > max_terms as f64 {
        return Err(Error::BudgetExceeded { needed: estimate as usize, max_terms });
    }
    let half = 0.5 * tol;
    let mode = lambda.floor() as usize;
    let w_mode = (-lambda + mode as f64 * lambda.ln() - ln_gamma(mode as f64 + 1.0)).exp();

    let mut right = vec![w_mode];
    let mut r = mode;
    loop {
        let w = *right.last().unwrap();
        let ratio = lambda / (r as f64 + 1.0);
        if ratio < 1.0 && w * ratio / (1.0 - ratio) < half {
            break;
        }
        if r >= max_terms {
            return Err(Error::BudgetExceeded { needed: r + 1, max_terms });
        }
        right.push(w * ratio);
        r += 1;
    }

    let mut left = Vec::new();
    let mut l = mode;
    let mut w = w_mode;
    while l > 0 {
        let s = l as f64 / lambda;
        if s < 1.0 && w * s / (1.0 - s) < half {
            break;
        }
        w *= s;
        l -= 1;
        left.push(w);
    }
    left.reverse();
    left.extend(right);
    Ok(PoissonWindow { first: l, weights: left })
}

/// `μ H_t` by truncated uniformization, renormalized to unit mass.
pub fn heat_kernel_row(chain: &MarkovChain, start: &Distribution, t: f64, params: &UniformizationParams) -> Result<Distribution> {
    params.validate()?;
    check_time(t)?;
    if start.len() != chain.size() {
        return Err(Error::DimensionMismatch { expected: chain.size(), found: start.len() });
    }
    if t == 0.0 {
        return Ok(start.clone());
    }
    let window = poisson_window(t, params.tail_tol, params.max_terms)?;
    let k = chain.kernel();
    let n = chain.size();
    let mut v = start.as_slice().to_vec();
    let mut next = vec![0.0; n];
    let mut acc = vec![0.0; n];
    for m in 0..=window.last() {
        if m >= window.first {
            let w = window.weights[m - window.first];
            acc.iter_mut().zip(&v).for_each(|(a, x)| *a += w * x);
        }
        if m < window.last() {
            k.left_mul_into(&v, &mut next);
            std::mem::swap(&mut v, &mut next);
        }
    }
    Ok(Distribution::renormalized(acc))
}

/// The full matrix `H_t`, by uniformizing at `t/2^k ≤ 1` and squaring `k` times.
///
/// Squaring at most doubles the sup-norm error, so the short step is truncated
/// at `tail_tol / 2^k`. Rows are renormalized after every squaring.
pub fn heat_kernel_matrix(chain: &MarkovChain, t: f64, params: &UniformizationParams) -> Result<StochasticMatrix> {
    params.validate()?;
    check_time(t)?;
    Ok(StochasticMatrix::from_dmatrix(&heat_dmatrix(chain.kernel(), t, params)?))
}

pub(crate) fn heat_dmatrix(kernel: &StochasticMatrix, t: f64, params: &UniformizationParams) -> Result<DMatrix<f64>> {
    let n = kernel.size();
    if t == 0.0 {
        return Ok(DMatrix::identity(n, n));
    }
    let squarings = if t > 1.0 { t.log2().ceil() as i32 } else { 0 };
    let s = t / 2f64.powi(squarings);
    let tol = (params.tail_tol / 2f64.powi(squarings)).max(f64::MIN_POSITIVE);
    let window = poisson_window(s, tol, params.max_terms)?;
    let k = kernel.to_dmatrix();
    let mut power = DMatrix::<f64>::identity(n, n);
    let mut h = DMatrix::<f64>::zeros(n, n);
    for m in 0..=window.last() {
        if m >= window.first {
            h += &power * window.weights[m - window.first];
        }
        if m < window.last() {
            power = &power * &k;
        }
    }
    normalize_rows(&mut h);
    for _ in 0..squarings {
        h = &h * &h;
        normalize_rows(&mut h);
    }
    Ok(h)
}

fn normalize_rows(m: &mut DMatrix<f64>) {
    for mut row in m.row_iter_mut() {
        row.iter_mut().for_each(|x| *x = x.max(0.0));
        let s = row.sum();
        if s > 0.0 {
            row /= s;
        }
    }
}

/// `K^m` by binary powering.
pub(crate) fn discrete_power_dmatrix(kernel: &StochasticMatrix, m: u64) -> DMatrix<f64> {
    let n = kernel.size();
    let mut result = DMatrix::<f64>::identity(n, n);
    let mut base = kernel.to_dmatrix();
    let mut e = m;
    while e > 0 {
        if e & 1 == 1 {
            result = &result * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    result
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!("time must be finite and nonnegative, got {t}")));
    }
    Ok(())
}

/// Distance of `μ H_t` to the stationary distribution.
pub fn distance_at(chain: &MarkovChain, kind: DistanceKind, start: &Distribution, t: f64, params: &UniformizationParams) -> Result<f64> {
    let row = heat_kernel_row(chain, start, t, params)?;
    kind.eval(row.as_slice(), chain.stationary().as_slice())
}

/// Per-start distances `d(δ_x, t)` for every state `x`.
pub fn distances_from_all_starts(chain: &MarkovChain, kind: DistanceKind, t: f64, params: &UniformizationParams) -> Result<Vec<f64>> {
    params.validate()?;
    check_time(t)?;
    let h = heat_dmatrix(chain.kernel(), t, params)?;
    rows_to_distances(&h, kind, chain.stationary())
}

fn rows_to_distances(h: &DMatrix<f64>, kind: DistanceKind, pi: &Distribution) -> Result<Vec<f64>> {
    (0..h.nrows())
        .into_par_iter()
        .map(|x| {
            let row: Vec<f64> = h.row(x).iter().copied().collect();
            kind.eval(&row, pi.as_slice())
        })
        .collect()
}

/// `max_x d(δ_x, t)`.
pub fn max_distance_at(chain: &MarkovChain, kind: DistanceKind, t: f64, params: &UniformizationParams) -> Result<f64> {
    Ok(distances_from_all_starts(chain, kind, t, params)?.into_iter().fold(0.0, f64::max))
}

/// `d(μ K^m)` in discrete time.
pub fn discrete_distance_at(chain: &MarkovChain, kind: DistanceKind, start: &Distribution, m: u64) -> Result<f64> {
    let row = power_distribution(start, chain.kernel(), m)?;
    kind.eval(row.as_slice(), chain.stationary().as_slice())
}

/// `max_x d(δ_x K^m)`.
pub fn discrete_max_distance_at(chain: &MarkovChain, kind: DistanceKind, m: u64) -> Result<f64> {
    let p = discrete_power_dmatrix(chain.kernel(), m);
    Ok(rows_to_distances(&p, kind, chain.stationary())?.into_iter().fold(0.0, f64::max))
}

/// Starting point of a distance evaluation.
#[derive(Clone, Debug, PartialEq)]
pub enum Start {
    Dist(Distribution),
    /// Worst case over point-mass starts.
    Max,
}

impl Start {
    pub fn point(len: usize, state: usize) -> Self {
        Start::Dist(Distribution::point_mass(len, state))
    }

    /// Short text tag used in CSV output.
    pub fn label(&self) -> String {
        match self {
            Start::Max => "max".into(),
            Start::Dist(d) => {
                let w = d.as_slice();
                match w.iter().position(|&x| x == 1.0) {
                    Some(i) if w.iter().filter(|&&x| x != 0.0).count() == 1 => format!("delta{i}"),
                    _ => "custom".into(),
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeMode {
    Continuous,
    Discrete,
}

/// Distance at continuous time `t` from `start`.
pub fn distance_at_start(chain: &MarkovChain, kind: DistanceKind, start: &Start, t: f64, params: &UniformizationParams) -> Result<f64> {
    match start {
        Start::Dist(d) => distance_at(chain, kind, d, t, params),
        Start::Max => max_distance_at(chain, kind, t, params),
    }
}

/// Distance at discrete step `m` from `start`.
pub fn discrete_distance_at_start(chain: &MarkovChain, kind: DistanceKind, start: &Start, m: u64) -> Result<f64> {
    match start {
        Start::Dist(d) => discrete_distance_at(chain, kind, d, m),
        Start::Max => discrete_max_distance_at(chain, kind, m),
    }
}

/// Discrete-time distances at `⌊t⌋` and `⌈t⌉`.
pub fn discrete_floor_ceil(chain: &MarkovChain, kind: DistanceKind, start: &Start, t: f64) -> Result<(f64, f64)> {
    check_time(t)?;
    let lo = discrete_distance_at_start(chain, kind, start, t.floor() as u64)?;
    let hi = discrete_distance_at_start(chain, kind, start, t.ceil() as u64)?;
    Ok((lo, hi))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SearchOptions {
    pub params: UniformizationParams,
    /// Bisection stops once the bracket is narrower than this fraction of its right end.
    pub rel_resolution: f64,
    /// Doubling gives up beyond this time (or step count).
    pub horizon: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self { params: UniformizationParams::default(), rel_resolution: 1e-6, horizon: 1e7 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MixingTime {
    pub value: f64,
    pub kind: DistanceKind,
    pub epsilon: f64,
    /// Width of the final bracket; `value − resolution` is still above epsilon.
    pub resolution: f64,
    pub mode: TimeMode,
}

/// Smallest `t` (to relative resolution) with `d(t) ≤ eps`, for non-increasing `d`.
/// Returns `(value, resolution)`.
pub fn first_passage_continuous(mut d: impl FnMut(f64) -> Result<f64>, eps: f64, opts: &SearchOptions) -> Result<(f64, f64)> {
    if d(0.0)? <= eps {
        return Ok((0.0, 0.0));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while d(hi)? > eps {
        lo = hi;
        hi *= 2.0;
        if hi > opts.horizon {
            return Err(Error::NoUpperBracket { horizon: opts.horizon });
        }
    }
    while hi - lo > opts.rel_resolution * hi {
        let mid = 0.5 * (lo + hi);
        if d(mid)? <= eps {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((hi, hi - lo))
}

/// Smallest integer `m` with `d(m) ≤ eps`, for a non-increasing sequence.
pub fn first_passage_discrete(mut d: impl FnMut(u64) -> Result<f64>, eps: f64, horizon: f64) -> Result<u64> {
    if d(0)? <= eps {
        return Ok(0);
    }
    let (mut lo, mut hi) = (0u64, 1u64);
    while d(hi)? > eps {
        lo = hi;
        hi *= 2;
        if hi as f64 > horizon {
            return Err(Error::NoUpperBracket { horizon });
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if d(mid)? <= eps {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

pub(crate) fn check_epsilon(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon must lie in (0, 1), got {eps}")));
    }
    Ok(())
}

/// Mixing time `inf{t : d(t) ≤ ε}` from `start`.
pub fn mixing_time(
    chain: &MarkovChain,
    kind: DistanceKind,
    epsilon: f64,
    start: &Start,
    mode: TimeMode,
    opts: &SearchOptions,
) -> Result<MixingTime> {
    check_epsilon(epsilon)?;
    if let Start::Dist(d) = start {
        if d.len() != chain.size() {
            return Err(Error::DimensionMismatch { expected: chain.size(), found: d.len() });
        }
    }
    let (value, resolution) = match mode {
        TimeMode::Continuous => {
            first_passage_continuous(|t| distance_at_start(chain, kind, start, t, &opts.params), epsilon, opts)?
        }
        TimeMode::Discrete => {
            let m = first_passage_discrete(|m| discrete_distance_at_start(chain, kind, start, m), epsilon, opts.horizon)?;
            (m as f64, if m > 0 { 1.0 } else { 0.0 })
        }
    };
    Ok(MixingTime { value, kind, epsilon, resolution, mode })
}

/// `θI + (1−θ)K`, same stationary distribution.
pub fn lazify(chain: &MarkovChain, theta: f64) -> Result<MarkovChain> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidParameter(format!("theta must lie in (0, 1), got {theta}")));
    }
    let n = chain.size();
    let k = chain.kernel();
    let mut data: Vec<f64> = k.as_row_major().iter().map(|x| (1.0 - theta) * x).collect();
    for i in 0..n {
        data[i * n + i] += theta;
    }
    MarkovChain::with_stationary(
        format!("lazy({theta}, {})", chain.label()),
        StochasticMatrix::from_row_major(n, data)?,
        chain.stationary().clone(),
    )
}

/// Distance values on an ascending time grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistanceCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub kind: DistanceKind,
    pub start: String,
}

impl DistanceCurve {
    /// CSV with header `t,value,kind,start`, preceded by a units comment.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{UNITS_LINE}")?;
        writeln!(w, "t,value,kind,start")?;
        for (t, v) in self.times.iter().zip(&self.values) {
            writeln!(w, "{},{},{},{}", fmt_f64(*t), fmt_f64(*v), self.kind, self.start)?;
        }
        Ok(())
    }
}

/// Evaluates the distance curve of `chain` from `start` on `times` (ascending).
pub fn distance_curve(
    chain: &MarkovChain,
    kind: DistanceKind,
    start: &Start,
    times: &[f64],
    params: &UniformizationParams,
) -> Result<DistanceCurve> {
    if times.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::InvalidParameter("time grid must be ascending".into()));
    }
    let values = times
        .par_iter()
        .map(|&t| distance_at_start(chain, kind, start, t, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(DistanceCurve { times: times.to_vec(), values, kind, start: start.label() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state(a: f64, b: f64) -> MarkovChain {
        MarkovChain::new("2", StochasticMatrix::from_rows(vec![vec![1.0 - a, a], vec![b, 1.0 - b]]).unwrap()).unwrap()
    }

    fn p() -> UniformizationParams {
        UniformizationParams::default()
    }

    #[test]
    fn poisson_window_mass() {
        for &lambda in &[0.3, 1.0, 7.5, 120.0, 900.0, 5000.0] {
            let w = poisson_window(lambda, 1e-12, 1 << 24).unwrap();
            let s: f64 = w.weights.iter().sum();
            assert!((1.0 - s).abs() < 1e-11, "lambda {lambda}: mass {s}");
        }
    }

    #[test]
    fn poisson_budget() {
        assert!(matches!(poisson_window(1e6, 1e-12, 1000), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn params_range() {
        assert!(UniformizationParams::new(1e-5, 10).is_err());
        assert!(UniformizationParams::new(0.0, 10).is_err());
        assert!(UniformizationParams::new(1e-6, 10).is_ok());
    }

    #[test]
    fn zero_time_is_identity() {
        let c = two_state(0.3, 0.1);
        let d = Distribution::new(vec![0.6, 0.4]).unwrap();
        assert_eq!(heat_kernel_row(&c, &d, 0.0, &p()).unwrap(), d);
    }

    #[test]
    fn two_state_heat_row() {
        let c = two_state(0.5, 0.5);
        let d0 = Distribution::point_mass(2, 0);
        for &t in &[0.1, 1.0, 3.7, 12.0] {
            let r = heat_kernel_row(&c, &d0, t, &p()).unwrap();
            assert!((r[0] - (0.5 + 0.5 * (-t).exp())).abs() < 1e-11);
        }
    }

    #[test]
    fn heat_matrix_matches_rows_at_large_time() {
        let c = two_state(0.3, 0.1);
        for &t in &[0.5, 3.0, 40.0, 800.0] {
            let h = heat_kernel_matrix(&c, t, &p()).unwrap();
            for x in 0..2 {
                let r = heat_kernel_row(&c, &Distribution::point_mass(2, x), t, &p()).unwrap();
                for y in 0..2 {
                    assert!((h.get(x, y) - r[y]).abs() < 1e-10, "t={t}");
                }
            }
        }
    }

    #[test]
    fn two_state_tv_and_mixing_time() {
        let c = two_state(0.25, 0.25);
        let d0 = Distribution::point_mass(2, 0);
        for &t in &[0.0, 0.5, 2.0, 9.0] {
            let d = distance_at(&c, DistanceKind::Tv, &d0, t, &p()).unwrap();
            assert!((d - 0.5 * (-t / 2.0).exp()).abs() < 1e-11);
        }
        let c = two_state(0.5, 0.5);
        let m = mixing_time(&c, DistanceKind::Tv, 0.25, &Start::Dist(d0.clone()), TimeMode::Continuous, &SearchOptions::default())
            .unwrap();
        assert!((m.value - 2f64.ln()).abs() < 1e-5);
        assert!(distance_at(&c, DistanceKind::Tv, &d0, m.value, &p()).unwrap() <= 0.25);
        assert!(distance_at(&c, DistanceKind::Tv, &d0, m.value - m.resolution, &p()).unwrap() > 0.25);
    }

    #[test]
    fn already_mixed_gives_zero() {
        let c = two_state(0.5, 0.5);
        let m = mixing_time(&c, DistanceKind::Tv, 0.6, &Start::Max, TimeMode::Continuous, &SearchOptions::default()).unwrap();
        assert_eq!(m.value, 0.0);
        let m = mixing_time(&c, DistanceKind::Tv, 0.6, &Start::Max, TimeMode::Discrete, &SearchOptions::default()).unwrap();
        assert_eq!(m.value, 0.0);
    }

    #[test]
    fn max_distance_at_zero() {
        let c = two_state(0.3, 0.1);
        let d = max_distance_at(&c, DistanceKind::Tv, 0.0, &p()).unwrap();
        assert!((d - 0.75).abs() < 1e-15);
        let c = two_state(0.2, 0.2);
        for &t in &[0.3, 2.0] {
            let d = max_distance_at(&c, DistanceKind::Tv, t, &p()).unwrap();
            assert!((d - 0.5 * (-0.4 * t).exp()).abs() < 1e-11);
        }
    }

    #[test]
    fn discrete_mixing_time_two_state() {
        // d_TV(0, m) = ½·(½)^m with α = β = 1/4.
        let c = two_state(0.25, 0.25);
        let m = mixing_time(&c, DistanceKind::Tv, 0.01, &Start::point(2, 0), TimeMode::Discrete, &SearchOptions::default())
            .unwrap();
        assert_eq!(m.value, 6.0);
        let (lo, hi) = discrete_floor_ceil(&c, DistanceKind::Tv, &Start::point(2, 0), 2.5).unwrap();
        assert!((lo - 0.125).abs() < 1e-15 && (hi - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn lazify_examples() {
        let c = two_state(0.5, 0.5);
        let l = lazify(&c, 0.5).unwrap();
        assert_eq!(l.kernel(), two_state(0.25, 0.25).kernel());
        assert_eq!(l.stationary(), c.stationary());
        let g0 = crate::chain::spectral_gap(&two_state(0.3, 0.1)).unwrap();
        let g1 = crate::chain::spectral_gap(&lazify(&two_state(0.3, 0.1), 0.3).unwrap()).unwrap();
        assert!((g1 - 0.7 * g0).abs() < 1e-12);
    }

    #[test]
    fn no_upper_bracket() {
        let c = two_state(1e-9, 1e-9);
        let opts = SearchOptions { horizon: 1e3, ..Default::default() };
        assert!(matches!(
            mixing_time(&c, DistanceKind::Tv, 0.1, &Start::Max, TimeMode::Continuous, &opts),
            Err(Error::NoUpperBracket { .. })
        ));
    }

    #[test]
    fn curve_csv_shape() {
        let c = two_state(0.5, 0.5);
        let times: Vec<f64> = (0..=4).map(|i| i as f64).collect();
        let curve = distance_curve(&c, DistanceKind::Tv, &Start::point(2, 0), &times, &p()).unwrap();
        let mut out = Vec::new();
        curve.write_csv(&mut out).unwrap();
        let s = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[1], "t,value,kind,start");
        assert_eq!(lines.len(), 7);
        assert!(lines[2].ends_with(",tv,delta0"));
    }
}
