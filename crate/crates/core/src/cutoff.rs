//! Finite-index cutoff diagnostics over indexed families of chains and products.
//!
//! Limits in `n` are never decided here. Every diagnostic returns the raw
//! per-index numbers plus, where a verdict is asked for, a three-valued
//! reading under explicit, configurable thresholds.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::chain::MarkovChain;
use crate::distances::DistanceKind;
use crate::error::{Error, Result};
use crate::kernel::{self, first_passage_continuous, SearchOptions, Start, TimeMode};
use crate::models::{self, slope, TwoStateParams};
use crate::product::{self, ProductSpec, ProductStarts, DENSE_PRODUCT_LIMIT};

/// Closed-form distance `(kind, t) ↦ d(t)` for members that have one.
pub type DistanceFn = Arc<dyn Fn(DistanceKind, f64) -> Result<f64> + Send + Sync>;

/// What a family produces at one index.
#[derive(Clone)]
pub enum FamilyMember {
    Chain { chain: MarkovChain, start: Start },
    Product { spec: ProductSpec, starts: ProductStarts },
    Curve { label: String, distance: DistanceFn },
}

impl fmt::Debug for FamilyMember {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FamilyMember::Chain { chain, start } => write!(f, "Chain({}, {})", chain.label(), start.label()),
            FamilyMember::Product { spec, .. } => write!(f, "Product({} coords)", spec.len()),
            FamilyMember::Curve { label, .. } => write!(f, "Curve({label})"),
        }
    }
}

impl FamilyMember {
    pub fn chain(chain: MarkovChain) -> Self {
        FamilyMember::Chain { chain, start: Start::Max }
    }

    pub fn product(spec: ProductSpec) -> Self {
        FamilyMember::Product { spec, starts: ProductStarts::Max }
    }

    /// Continuous-time distance at `t`.
    ///
    /// Products are exact in Hellinger through the coordinates; other kinds
    /// go through the dense oracle and fail with `TooLarge` past its limit.
    pub fn distance(&self, kind: DistanceKind, t: f64, opts: &SearchOptions) -> Result<f64> {
        match self {
            FamilyMember::Chain { chain, start } => kernel::distance_at_start(chain, kind, start, t, &opts.params),
            FamilyMember::Product { spec, starts } => match kind {
                DistanceKind::Hellinger => product::product_hellinger_exact(spec, t, starts, &opts.params),
                _ => {
                    let (dense, start) = dense_member(spec, starts)?;
                    kernel::distance_at_start(&dense, kind, &start, t, &opts.params)
                }
            },
            FamilyMember::Curve { distance, .. } => distance(kind, t),
        }
    }

    /// Continuous-time mixing time `inf{t : d(t) ≤ ε}`.
    pub fn mixing_time(&self, kind: DistanceKind, eps: f64, opts: &SearchOptions) -> Result<kernel::MixingTime> {
        kernel::check_epsilon(eps)?;
        let (value, resolution) = match self {
            FamilyMember::Chain { chain, start } => {
                let m = kernel::mixing_time(chain, kind, eps, start, TimeMode::Continuous, opts)?;
                (m.value, m.resolution)
            }
            FamilyMember::Product { spec, starts } if kind != DistanceKind::Hellinger => {
                let (dense, start) = dense_member(spec, starts)?;
                let m = kernel::mixing_time(&dense, kind, eps, &start, TimeMode::Continuous, opts)?;
                (m.value, m.resolution)
            }
            _ => first_passage_continuous(|t| self.distance(kind, t, opts), eps, opts)?,
        };
        Ok(kernel::MixingTime { value, kind, epsilon: eps, resolution, mode: TimeMode::Continuous })
    }
}

fn dense_member(spec: &ProductSpec, starts: &ProductStarts) -> Result<(MarkovChain, Start)> {
    let size = spec.state_count().unwrap_or(usize::MAX);
    if size > DENSE_PRODUCT_LIMIT {
        return Err(Error::TooLarge { size, limit: DENSE_PRODUCT_LIMIT });
    }
    let dense = product::dense_product_chain(spec)?;
    let start = starts.product_measure().map_or(Start::Max, Start::Dist);
    Ok((dense, start))
}

type Generator = Arc<dyn Fn(usize) -> Result<FamilyMember> + Send + Sync>;
type Schedule = Arc<dyn Fn(usize) -> f64 + Send + Sync>;

/// Indexed family `n ↦ member`, with a per-index epsilon schedule.
#[derive(Clone)]
pub struct FamilySpec {
    pub label: String,
    generator: Generator,
    epsilon_schedule: Schedule,
}

impl fmt::Debug for FamilySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FamilySpec({})", self.label)
    }
}

impl FamilySpec {
    /// Epsilon schedule defaults to ¼.
    pub fn new(label: impl Into<String>, generator: impl Fn(usize) -> Result<FamilyMember> + Send + Sync + 'static) -> Self {
        Self { label: label.into(), generator: Arc::new(generator), epsilon_schedule: Arc::new(|_| 0.25) }
    }

    pub fn with_epsilon_schedule(mut self, schedule: impl Fn(usize) -> f64 + Send + Sync + 'static) -> Self {
        self.epsilon_schedule = Arc::new(schedule);
        self
    }

    pub fn member(&self, n: usize) -> Result<FamilyMember> {
        (self.generator)(n)
    }

    pub fn epsilon(&self, n: usize) -> f64 {
        (self.epsilon_schedule)(n)
    }

    /// Chains `n ↦ chain(n)` with max-over-start distances.
    pub fn of_chains(label: impl Into<String>, chain: impl Fn(usize) -> Result<MarkovChain> + Send + Sync + 'static) -> Self {
        Self::new(label, move |n| chain(n).map(FamilyMember::chain))
    }
}

pub fn ehrenfest_family() -> FamilySpec {
    FamilySpec::of_chains("ehrenfest", models::ehrenfest_chain)
}

pub fn lazy_path_family() -> FamilySpec {
    FamilySpec::of_chains("lazy-path", models::lazy_path_chain)
}

pub fn cycle_family() -> FamilySpec {
    FamilySpec::of_chains("cycle", models::cycle_chain)
}

/// The same two-state chain at every index.
pub fn two_state_constant_family(p: TwoStateParams) -> FamilySpec {
    let chain = models::two_state_chain(p).chain;
    FamilySpec::new("two-state", move |_| Ok(FamilyMember::chain(chain.clone())))
}

/// Member `n` is the product of `n` copies of the two-state chain with equal
/// weights, started from all zeros, evaluated in closed form.
pub fn two_state_product_family(p: TwoStateParams) -> FamilySpec {
    FamilySpec::new(format!("two-state-product(alpha={}, beta={})", p.alpha, p.beta), move |n| {
        if n == 0 {
            return Err(Error::InvalidParameter("indices start at 1".into()));
        }
        let copies = n as u64;
        let distance: DistanceFn = Arc::new(move |kind, t| {
            let s = t / n as f64;
            match kind {
                DistanceKind::Tv => Ok(models::identical_product_tv_from_zero(p, copies, s)),
                DistanceKind::Hellinger => Ok(models::identical_product_hellinger_sq_from_zero(p, copies, s).sqrt()),
                DistanceKind::L2 => Err(Error::InvalidKind("l2")),
            }
        });
        Ok(FamilyMember::Curve { label: format!("two-state^{n}"), distance })
    })
}

/// Member `n` is the product of the first `n` interleaved chains with their weights.
pub fn interleaved_product_family(r: f64) -> Result<FamilySpec> {
    let fam = models::InterleavedFamily::new(r)?;
    Ok(FamilySpec::new(format!("interleaved(r={r})"), move |n| fam.product(n).map(FamilyMember::product)))
}

/// A failed index in a sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IndexFailure {
    pub index: usize,
    pub message: String,
    pub numeric: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixingProfile {
    pub label: String,
    /// Indices that succeeded, ascending.
    pub indices: Vec<usize>,
    pub times: Vec<f64>,
    pub kind: DistanceKind,
    pub epsilon: f64,
    pub failures: Vec<IndexFailure>,
}

impl MixingProfile {
    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }

    pub fn time_at(&self, n: usize) -> Option<f64> {
        self.indices.iter().position(|&i| i == n).map(|k| self.times[k])
    }
}

/// Per-index maximum (or family-supplied start) mixing times. Indices run in
/// parallel; failures are collected rather than propagated.
pub fn mixing_profile(family: &FamilySpec, kind: DistanceKind, epsilon: f64, indices: &[usize], opts: &SearchOptions) -> Result<MixingProfile> {
    kernel::check_epsilon(epsilon)?;
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let results: Vec<(usize, Result<f64>)> = sorted
        .par_iter()
        .map(|&n| (n, family.member(n).and_then(|m| m.mixing_time(kind, epsilon, opts)).map(|m| m.value)))
        .collect();
    let mut profile = MixingProfile {
        label: family.label.clone(),
        indices: Vec::new(),
        times: Vec::new(),
        kind,
        epsilon,
        failures: Vec::new(),
    };
    for (n, r) in results {
        match r {
            Ok(t) => {
                profile.indices.push(n);
                profile.times.push(t);
            }
            Err(e) => profile.failures.push(IndexFailure { index: n, numeric: e.is_numeric(), message: e.to_string() }),
        }
    }
    Ok(profile)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    ConsistentWithCutoff,
    ConsistentWithNoCutoff,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::ConsistentWithCutoff => "consistent-with-cutoff",
            Verdict::ConsistentWithNoCutoff => "consistent-with-no-cutoff",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// Thresholds of the three-valued verdict.
///
/// With `r_n = max(T_n(ε), T_n(δ)) / min(…)` and the normalized window
/// `w_n = 1 − 1/r_n ∈ [0, 1]`, over the last three indices:
/// * cutoff-consistent if `r_n ≤ 1 + ratio_tol` and strictly decreasing, or
///   `w_n` strictly decreasing with total drop at least `window_drop`;
/// * no-cutoff-consistent if the last `r_n ≥ no_cutoff_ratio` and `w_n` moves
///   by at most `flat_tol`;
/// * inconclusive otherwise, and always with fewer than `min_indices` indices.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VerdictThresholds {
    pub min_indices: usize,
    pub ratio_tol: f64,
    pub window_drop: f64,
    pub no_cutoff_ratio: f64,
    pub flat_tol: f64,
}

impl Default for VerdictThresholds {
    fn default() -> Self {
        Self { min_indices: 4, ratio_tol: 0.05, window_drop: 0.05, no_cutoff_ratio: 1.25, flat_tol: 0.02 }
    }
}

impl VerdictThresholds {
    pub fn verdict(&self, ratios: &[f64]) -> Verdict {
        if ratios.len() < self.min_indices.max(3) {
            return Verdict::Inconclusive;
        }
        let r: Vec<f64> = ratios.iter().map(|&x| if x < 1.0 { 1.0 / x } else { x }).collect();
        let w: Vec<f64> = r.iter().map(|&x| normalized_window(x)).collect();
        let k = r.len();
        let (r3, w3) = (&r[k - 3..], &w[k - 3..]);
        let strictly_decreasing = |v: &[f64]| v.windows(2).all(|p| p[1] < p[0]);
        let near_one = r3.iter().all(|&x| x <= 1.0 + self.ratio_tol) && strictly_decreasing(r3);
        let shrinking = strictly_decreasing(w3) && w3[0] - w3[2] >= self.window_drop;
        if near_one || shrinking {
            Verdict::ConsistentWithCutoff
        } else if r3[2] >= self.no_cutoff_ratio && (w3[2] - w3[0]).abs() <= self.flat_tol {
            Verdict::ConsistentWithNoCutoff
        } else {
            Verdict::Inconclusive
        }
    }
}

/// `1 − 1/r` for a ratio `r ≥ 1` (1 when `r` is infinite).
fn normalized_window(r: f64) -> f64 {
    if r.is_infinite() {
        1.0
    } else if r.is_nan() {
        f64::NAN
    } else {
        1.0 - 1.0 / r
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrendSummary {
    /// Least-squares slope of the ratio against `log n` (finite ratios only).
    pub ratio_slope_vs_log_n: f64,
    /// Mean ratio over the last three indices.
    pub last3_ratio_mean: f64,
    pub last_ratio: f64,
    /// Least-squares slope of the normalized window against `log n`.
    pub normalized_window_slope_vs_log_n: f64,
    /// Log–log slope of the absolute window against `n`.
    pub window_growth_exponent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CutoffReport {
    pub label: String,
    pub kind: DistanceKind,
    pub epsilon: f64,
    pub delta: f64,
    pub indices: Vec<usize>,
    pub times_eps: Vec<f64>,
    pub times_delta: Vec<f64>,
    /// `T_n(ε) / T_n(δ)`; `inf` when the denominator is 0.
    pub ratios: Vec<f64>,
    /// `|T_n(ε) − T_n(δ)|`.
    pub windows: Vec<f64>,
    /// `1 − min/max` of the two times.
    pub normalized_windows: Vec<f64>,
    /// `window / T_n(ε)`.
    pub window_over_time: Vec<f64>,
    /// `√T_n(ε) / window`, the window-order check of lazy/continuous comparison.
    pub sqrt_time_over_window: Vec<f64>,
    /// `window / b_n` for a caller-supplied window scale.
    pub window_over_scale: Option<Vec<f64>>,
    pub trend: TrendSummary,
    pub verdict: Verdict,
    pub thresholds: VerdictThresholds,
    pub failures: Vec<IndexFailure>,
}

fn finite_slope(x: &[f64], y: &[f64]) -> f64 {
    let (fx, fy): (Vec<f64>, Vec<f64>) = x.iter().zip(y).filter(|(a, b)| a.is_finite() && b.is_finite()).map(|(a, b)| (*a, *b)).unzip();
    if fx.len() < 2 {
        f64::NAN
    } else {
        slope(&fx, &fy)
    }
}

/// Builds the report from two profiles over the same family.
pub fn compare_profiles(at_eps: &MixingProfile, at_delta: &MixingProfile, thresholds: VerdictThresholds) -> CutoffReport {
    let mut failures = at_eps.failures.clone();
    for f in &at_delta.failures {
        if !failures.iter().any(|g| g.index == f.index) {
            failures.push(f.clone());
        }
    }
    failures.sort_by_key(|f| f.index);
    let mut indices = Vec::new();
    let (mut te, mut td) = (Vec::new(), Vec::new());
    for (k, &n) in at_eps.indices.iter().enumerate() {
        if let Some(d) = at_delta.time_at(n) {
            indices.push(n);
            te.push(at_eps.times[k]);
            td.push(d);
        }
    }
    let ratios: Vec<f64> = te
        .iter()
        .zip(&td)
        .map(|(a, b)| if *b == 0.0 { if *a == 0.0 { 1.0 } else { f64::INFINITY } } else { a / b })
        .collect();
    let windows: Vec<f64> = te.iter().zip(&td).map(|(a, b)| (a - b).abs()).collect();
    let normalized_windows: Vec<f64> = te
        .iter()
        .zip(&td)
        .map(|(a, b)| {
            let (lo, hi) = (a.min(*b), a.max(*b));
            if hi == 0.0 {
                0.0
            } else {
                1.0 - lo / hi
            }
        })
        .collect();
    let window_over_time = windows.iter().zip(&te).map(|(w, t)| if *t == 0.0 { f64::NAN } else { w / t }).collect();
    let sqrt_time_over_window = windows.iter().zip(&te).map(|(w, t)| t.sqrt() / w).collect();
    let log_n: Vec<f64> = indices.iter().map(|&n| (n as f64).ln()).collect();
    let log_w: Vec<f64> = windows.iter().map(|w| w.ln()).collect();
    let k = ratios.len();
    let last3: Vec<f64> = ratios[k.saturating_sub(3)..].to_vec();
    let trend = TrendSummary {
        ratio_slope_vs_log_n: finite_slope(&log_n, &ratios),
        last3_ratio_mean: if last3.is_empty() { f64::NAN } else { last3.iter().sum::<f64>() / last3.len() as f64 },
        last_ratio: ratios.last().copied().unwrap_or(f64::NAN),
        normalized_window_slope_vs_log_n: finite_slope(&log_n, &normalized_windows),
        window_growth_exponent: finite_slope(&log_n, &log_w),
    };
    CutoffReport {
        label: at_eps.label.clone(),
        kind: at_eps.kind,
        epsilon: at_eps.epsilon,
        delta: at_delta.epsilon,
        verdict: thresholds.verdict(&ratios),
        indices,
        times_eps: te,
        times_delta: td,
        ratios,
        windows,
        normalized_windows,
        window_over_time,
        sqrt_time_over_window,
        window_over_scale: None,
        trend,
        thresholds,
        failures,
    }
}

/// Ratios `T_n(ε)/T_n(δ)` across indices with a three-valued verdict.
pub fn cutoff_ratio_diagnostic(
    family: &FamilySpec,
    kind: DistanceKind,
    eps: f64,
    delta: f64,
    indices: &[usize],
    opts: &SearchOptions,
    thresholds: VerdictThresholds,
) -> Result<CutoffReport> {
    if eps == delta {
        return Err(Error::InvalidParameter("eps and delta must differ".into()));
    }
    let a = mixing_profile(family, kind, eps, indices, opts)?;
    let b = mixing_profile(family, kind, delta, indices, opts)?;
    Ok(compare_profiles(&a, &b, thresholds))
}

/// Windows `|T_n(ε) − T_n(1−ε)|`, optionally relative to a caller-supplied scale `b_n`.
pub fn window_diagnostic(
    family: &FamilySpec,
    kind: DistanceKind,
    eps: f64,
    indices: &[usize],
    opts: &SearchOptions,
    thresholds: VerdictThresholds,
    scale: Option<&dyn Fn(usize) -> f64>,
) -> Result<CutoffReport> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::InvalidParameter(format!("window epsilon must lie in (0, 1/2), got {eps}")));
    }
    let mut report = cutoff_ratio_diagnostic(family, kind, eps, 1.0 - eps, indices, opts, thresholds)?;
    if let Some(b) = scale {
        report.window_over_scale = Some(report.indices.iter().zip(&report.windows).map(|(&n, w)| w / b(n)).collect());
    }
    Ok(report)
}

/// `F_n(t)`, which is `+∞` when some coordinate is at Hellinger distance 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FValue {
    Finite(f64),
    Infinite,
}

impl FValue {
    pub fn as_f64(self) -> f64 {
        match self {
            FValue::Finite(x) => x,
            FValue::Infinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for FValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FValue::Finite(x) => write!(f, "{}", crate::report::fmt_f64(*x)),
            FValue::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for FValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            FValue::Finite(x) => s.serialize_f64(*x),
            FValue::Infinite => s.serialize_str("inf"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FnGn {
    /// `Σ d_i² / (1 − max d_i²)`
    pub f: FValue,
    /// `max d_i`
    pub g: f64,
}

/// `F` and `G` from coordinate Hellinger distances.
pub fn f_n_from(coord_hellinger: &[f64]) -> FnGn {
    let sq: Vec<f64> = coord_hellinger.iter().map(|d| d * d).collect();
    let max_sq = sq.iter().copied().fold(0.0, f64::max);
    let g = coord_hellinger.iter().copied().fold(0.0, f64::max);
    let f = if max_sq >= 1.0 { FValue::Infinite } else { FValue::Finite(sq.iter().sum::<f64>() / (1.0 - max_sq)) };
    FnGn { f, g }
}

/// `F_n(t)`, `G_n(t)` of a product at time `t`.
pub fn f_n_evaluator(spec: &ProductSpec, t: f64, starts: &ProductStarts, opts: &SearchOptions) -> Result<FnGn> {
    let d = product::coordinate_distances(spec, DistanceKind::Hellinger, t, starts, &opts.params)?;
    Ok(f_n_from(&d))
}

/// One coordinate's contribution to the tail sums: log weight, mixing time, epsilon.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RTerm {
    pub log_weight: f64,
    pub mixing_time: f64,
    pub epsilon: f64,
}

/// The coordinates of the `n`-th product, in order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RRow {
    pub n: usize,
    pub terms: Vec<RTerm>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RDiagnostic {
    pub kind: DistanceKind,
    pub c: f64,
    pub n_list: Vec<usize>,
    pub m_list: Vec<usize>,
    /// `log s_n`, `s_n = max_i T_i/p_i` (kept in logs: weights may underflow).
    pub log_s_n: Vec<f64>,
    /// `S(n, m, c)`, rows by `n`, columns by `m`.
    pub grid: Vec<Vec<f64>>,
    /// `log S(n, m, c)`; `-inf` for empty sums.
    pub log_grid: Vec<Vec<f64>>,
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        hi
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

/// `S(n,m,c) = Σ_{i ≤ k_n − m} (2ϱε_i)^{cϱ s_n p_i / T_i}` from precomputed rows.
///
/// Prefix sums are accumulated with `log_add_exp`, so the grid is exactly
/// non-increasing in `m`.
pub fn r_diagnostic(kind: DistanceKind, c: f64, rows: &[RRow], m_list: &[usize]) -> Result<RDiagnostic> {
    let rho = kind.rho_or_err()? as f64;
    if !(c > 0.0) {
        return Err(Error::InvalidParameter(format!("c must be positive, got {c}")));
    }
    let mut log_s_n = Vec::with_capacity(rows.len());
    let mut grid = Vec::with_capacity(rows.len());
    let mut log_grid = Vec::with_capacity(rows.len());
    for row in rows {
        for (i, t) in row.terms.iter().enumerate() {
            if !(t.epsilon > 0.0 && t.epsilon < 1.0 / (2.0 * rho)) {
                return Err(Error::InvalidParameter(format!(
                    "epsilon {} at n={}, i={} outside (0, {})",
                    t.epsilon,
                    row.n,
                    i + 1,
                    1.0 / (2.0 * rho)
                )));
            }
            if !(t.mixing_time > 0.0) {
                return Err(Error::NonPositiveMixingTime { index: i + 1 });
            }
        }
        let log_ratio: Vec<f64> = row.terms.iter().map(|t| t.mixing_time.ln() - t.log_weight).collect();
        let ls = log_ratio.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let logs: Vec<f64> = row
            .terms
            .iter()
            .zip(&log_ratio)
            .map(|(t, lr)| ((c * rho) * (ls - lr).exp()) * (2.0 * rho * t.epsilon).ln())
            .collect();
        let mut prefix = Vec::with_capacity(logs.len() + 1);
        prefix.push(f64::NEG_INFINITY);
        for l in &logs {
            let last = *prefix.last().unwrap();
            prefix.push(log_add_exp(last, *l));
        }
        let k = row.terms.len();
        let lrow: Vec<f64> = m_list.iter().map(|&m| prefix[k.saturating_sub(m)]).collect();
        grid.push(lrow.iter().map(|l| l.exp()).collect());
        log_grid.push(lrow);
        log_s_n.push(ls);
    }
    Ok(RDiagnostic { kind, c, n_list: rows.iter().map(|r| r.n).collect(), m_list: m_list.to_vec(), log_s_n, grid, log_grid })
}

type ChainGen = Arc<dyn Fn(usize) -> Result<MarkovChain> + Send + Sync>;

/// A sequence of chains `i ↦ chain(i)` with log weights and epsilons; the
/// `n`-th product uses chains `1..=n`.
#[derive(Clone)]
pub struct SequenceFamily {
    pub label: String,
    chain: ChainGen,
    log_weight: Schedule,
    epsilon: Schedule,
}

impl fmt::Debug for SequenceFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SequenceFamily({})", self.label)
    }
}

impl SequenceFamily {
    pub fn new(
        label: impl Into<String>,
        chain: impl Fn(usize) -> Result<MarkovChain> + Send + Sync + 'static,
        log_weight: impl Fn(usize) -> f64 + Send + Sync + 'static,
        epsilon: impl Fn(usize) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { label: label.into(), chain: Arc::new(chain), log_weight: Arc::new(log_weight), epsilon: Arc::new(epsilon) }
    }

    pub fn chain(&self, i: usize) -> Result<MarkovChain> {
        (self.chain)(i)
    }

    pub fn log_weight(&self, i: usize) -> f64 {
        (self.log_weight)(i)
    }

    pub fn epsilon(&self, i: usize) -> f64 {
        (self.epsilon)(i)
    }

    /// Max mixing times `T_i(ε_i)` for `i = 1..=n`, in parallel.
    pub fn mixing_times(&self, kind: DistanceKind, n: usize, opts: &SearchOptions) -> Result<Vec<f64>> {
        (1..=n)
            .into_par_iter()
            .map(|i| {
                let c = self.chain(i)?;
                Ok(kernel::mixing_time(&c, kind, self.epsilon(i), &Start::Max, TimeMode::Continuous, opts)?.value)
            })
            .collect()
    }
}

/// Cycles `Z_{i+1}` with weights `i² e^{−i^γ}` and `ε = 1/(4ϱ)`... the caller picks `ε`.
pub fn psrw_family(gamma: f64, epsilon: f64) -> SequenceFamily {
    SequenceFamily::new(
        format!("cycles(gamma={gamma})"),
        models::cycle_chain,
        move |i| 2.0 * (i as f64).ln() - (i as f64).powf(gamma),
        move |_| epsilon,
    )
}

/// Tail sums of a sequence family with `k_n = n`.
pub fn r_estimator(family: &SequenceFamily, kind: DistanceKind, c: f64, n_list: &[usize], m_list: &[usize], opts: &SearchOptions) -> Result<RDiagnostic> {
    let n_max = n_list.iter().copied().max().unwrap_or(0);
    let times = family.mixing_times(kind, n_max, opts)?;
    let rows: Vec<RRow> = n_list
        .iter()
        .map(|&n| RRow {
            n,
            terms: (1..=n)
                .map(|i| RTerm { log_weight: family.log_weight(i), mixing_time: times[i - 1], epsilon: family.epsilon(i) })
                .collect(),
        })
        .collect();
    r_diagnostic(kind, c, &rows, m_list)
}

/// A proposed split `D_n = A_n n + B_n + C_n`, one entry per supplied index.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DnSplit {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    /// Bound `|C_n| ≤ c_bound` to test; omitted means report only.
    pub c_bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DnDecomposition {
    pub indices: Vec<usize>,
    /// `D_n = log(T_n / p_n)`
    pub d: Vec<f64>,
    /// `D_{n_{k+1}} − D_{n_k}`
    pub increments: Vec<f64>,
    pub d_nondecreasing: bool,
    /// `D_n − (A_n n + B_n + C_n)` for a supplied split.
    pub residuals: Option<Vec<f64>>,
    pub split: Option<DnSplit>,
    pub violations: Vec<String>,
}

impl DnDecomposition {
    /// Increments divided by `g(n_k)` — for comparing against a lower-bound profile.
    pub fn increment_ratios(&self, g: impl Fn(usize) -> f64) -> Vec<f64> {
        self.increments.iter().zip(&self.indices).map(|(inc, &n)| inc / g(n)).collect()
    }
}

/// `D_n` from mixing times and log weights, checked against an optional split.
pub fn dn_from_values(indices: &[usize], times: &[f64], log_weights: &[f64], split: Option<DnSplit>) -> Result<DnDecomposition> {
    if times.len() != indices.len() || log_weights.len() != indices.len() {
        return Err(Error::DimensionMismatch { expected: indices.len(), found: times.len().min(log_weights.len()) });
    }
    if let Some(k) = times.iter().position(|t| !(*t > 0.0)) {
        return Err(Error::NonPositiveMixingTime { index: indices[k] });
    }
    let d: Vec<f64> = times.iter().zip(log_weights).map(|(t, lw)| t.ln() - lw).collect();
    let increments: Vec<f64> = d.windows(2).map(|w| w[1] - w[0]).collect();
    let mut violations = Vec::new();
    for (k, inc) in increments.iter().enumerate() {
        if *inc < 0.0 {
            violations.push(format!("D decreases between n={} and n={}", indices[k], indices[k + 1]));
        }
    }
    let d_nondecreasing = violations.is_empty();
    let residuals = match &split {
        None => None,
        Some(s) => {
            let m = indices.len();
            if s.a.len() != m || s.b.len() != m || s.c.len() != m {
                return Err(Error::DimensionMismatch { expected: m, found: s.a.len().min(s.b.len()).min(s.c.len()) });
            }
            for k in 1..m {
                if s.b[k] < s.b[k - 1] {
                    violations.push(format!("B decreases between n={} and n={}", indices[k - 1], indices[k]));
                }
                if !(s.a[k - 1] > 0.0 && s.a[k - 1] <= s.a[k]) {
                    violations.push(format!("A is not positive nondecreasing between n={} and n={}", indices[k - 1], indices[k]));
                }
            }
            if let Some(bound) = s.c_bound {
                for (k, c) in s.c.iter().enumerate() {
                    if c.abs() > bound {
                        violations.push(format!("|C| = {} exceeds {bound} at n={}", c.abs(), indices[k]));
                    }
                }
            }
            Some(
                indices
                    .iter()
                    .enumerate()
                    .map(|(k, &n)| d[k] - (s.a[k] * n as f64 + s.b[k] + s.c[k]))
                    .collect(),
            )
        }
    };
    Ok(DnDecomposition { indices: indices.to_vec(), d, increments, d_nondecreasing, residuals, split, violations })
}

/// `D_n` for a sequence family, with `T_n = T_n(ε_n)` the max mixing time of chain `n`.
pub fn dn_decomposition(family: &SequenceFamily, kind: DistanceKind, indices: &[usize], split: Option<DnSplit>, opts: &SearchOptions) -> Result<DnDecomposition> {
    let times = indices
        .par_iter()
        .map(|&n| {
            let c = family.chain(n)?;
            Ok(kernel::mixing_time(&c, kind, family.epsilon(n), &Start::Max, TimeMode::Continuous, opts)?.value)
        })
        .collect::<Result<Vec<f64>>>()?;
    let lw: Vec<f64> = indices.iter().map(|&n| family.log_weight(n)).collect();
    dn_from_values(indices, &times, &lw, split)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TwoStatePrediction {
    /// Growth reading of `max_{j≤n} log(1+j)/p_j`.
    pub has_cutoff_criterion: bool,
    pub criterion_quantity: f64,
    /// `q_n max_{j≤n} log(1+j) / (2 p_j (α_j + β_j))`
    pub t_n: f64,
    /// `√(t_n q_n)`
    pub b_n: f64,
    pub q_n: f64,
}

/// Relative growth of the criterion quantity between `n/2` and `n` that counts as "still growing".
pub const CRITERION_GROWTH_TOL: f64 = 1e-9;

/// Cutoff time and window scale for a product of two-state chains with
/// nondecreasing weights. The flag reads the criterion quantity as unbounded
/// when it still grows between `⌊n/2⌋` and `n`.
pub fn two_state_product_cutoff_predictor(alphas: &[f64], betas: &[f64], weights: &[f64], n: usize) -> Result<TwoStatePrediction> {
    if n == 0 || alphas.len() < n || betas.len() < n || weights.len() < n {
        return Err(Error::InvalidParameter(format!("need at least n = {n} rates and weights")));
    }
    for j in 0..n {
        if !(alphas[j].min(betas[j]) > 0.0) {
            return Err(Error::DegenerateRates { index: j + 1 });
        }
        if !(weights[j] > 0.0) {
            return Err(Error::InvalidParameter(format!("weight {} must be positive", j + 1)));
        }
        if j > 0 && weights[j] < weights[j - 1] {
            return Err(Error::MonotonicityViolated { index: j + 1 });
        }
    }
    let crit = |m: usize| (1..=m).map(|j| ((1 + j) as f64).ln() / weights[j - 1]).fold(f64::NEG_INFINITY, f64::max);
    let criterion_quantity = crit(n);
    let has_cutoff_criterion = n >= 2 && criterion_quantity > crit(n / 2) * (1.0 + CRITERION_GROWTH_TOL);
    let q_n: f64 = weights[..n].iter().sum();
    let m = (1..=n)
        .map(|j| ((1 + j) as f64).ln() / (2.0 * weights[j - 1] * (alphas[j - 1] + betas[j - 1])))
        .fold(f64::NEG_INFINITY, f64::max);
    let t_n = q_n * m;
    Ok(TwoStatePrediction { has_cutoff_criterion, criterion_quantity, t_n, b_n: (t_n * q_n).sqrt(), q_n })
}
