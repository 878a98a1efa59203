//! Product chains: the dense oracle, structured evaluation through the tensor
//! factorization of `H_t`, and the product distance bounds.
//!
//! Coordinate `i` of a product with weights `p` runs at rate `p_i / q`,
//! `q = Σ p_i`, so at product time `t` it sits at local time `p_i t / q`.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::path::Path;
use std::sync::RwLock;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{ChainFile, Distribution, MarkovChain, StochasticMatrix};
use crate::distances::DistanceKind;
use crate::error::{Error, Result};
use crate::kernel::{self, heat_dmatrix, mixing_time, SearchOptions, Start, TimeMode, UniformizationParams};

/// Largest product state space the dense oracle will build.
pub const DENSE_PRODUCT_LIMIT: usize = 10_000;

#[derive(Clone, Debug)]
pub struct ProductSpec {
    coords: Vec<MarkovChain>,
    weights: Vec<f64>,
}

impl ProductSpec {
    /// Weights may be unnormalized; they must be positive and finite.
    pub fn new(coords: Vec<MarkovChain>, weights: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidProduct("no coordinates".into()));
        }
        if coords.len() != weights.len() {
            return Err(Error::DimensionMismatch { expected: coords.len(), found: weights.len() });
        }
        if let Some(i) = weights.iter().position(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidProduct(format!("weight {i} is {}", weights[i])));
        }
        Ok(Self { coords, weights })
    }

    pub fn coords(&self) -> &[MarkovChain] {
        &self.coords
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn q(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Local time `p_i t / q` of coordinate `i`.
    pub fn local_time(&self, i: usize, t: f64) -> f64 {
        self.weights[i] * t / self.q()
    }

    /// Size of the product state space, if it fits in `usize`.
    pub fn state_count(&self) -> Option<usize> {
        self.coords.iter().try_fold(1usize, |acc, c| acc.checked_mul(c.size()))
    }

    pub fn from_json_str(s: &str, base: Option<&Path>) -> Result<Self> {
        let file: ProductFile = serde_json::from_str(s)?;
        file.into_spec(base)
    }

    /// Chain references in the file are resolved relative to its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json_str(&std::fs::read_to_string(path)?, path.parent())
    }
}

/// On-disk product format.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProductFile {
    pub coords: Vec<CoordRef>,
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoordRef {
    Path(String),
    Inline(ChainFile),
}

impl ProductFile {
    pub fn into_spec(self, base: Option<&Path>) -> Result<ProductSpec> {
        let coords = self
            .coords
            .into_iter()
            .map(|c| match c {
                CoordRef::Inline(f) => f.into_chain(),
                CoordRef::Path(p) => {
                    let p = Path::new(&p);
                    match base {
                        Some(b) if p.is_relative() => MarkovChain::load(b.join(p)),
                        _ => MarkovChain::load(p),
                    }
                }
            })
            .collect::<Result<Vec<_>>>()?;
        ProductSpec::new(coords, self.weights)
    }
}

/// Per-coordinate starting points.
#[derive(Clone, Debug, PartialEq)]
pub enum ProductStarts {
    /// Worst case over point-mass starts of the product.
    Max,
    PerCoordinate(Vec<Distribution>),
}

impl ProductStarts {
    fn coord(&self, i: usize) -> Start {
        match self {
            ProductStarts::Max => Start::Max,
            ProductStarts::PerCoordinate(v) => Start::Dist(v[i].clone()),
        }
    }

    fn check(&self, spec: &ProductSpec) -> Result<()> {
        if let ProductStarts::PerCoordinate(v) = self {
            if v.len() != spec.len() {
                return Err(Error::DimensionMismatch { expected: spec.len(), found: v.len() });
            }
            for (d, c) in v.iter().zip(spec.coords()) {
                if d.len() != c.size() {
                    return Err(Error::DimensionMismatch { expected: c.size(), found: d.len() });
                }
            }
        }
        Ok(())
    }

    /// The product measure of the starts (fixed starts only).
    pub fn product_measure(&self) -> Option<Distribution> {
        match self {
            ProductStarts::Max => None,
            ProductStarts::PerCoordinate(v) => {
                let mut it = v.iter();
                let first = it.next()?.clone();
                Some(it.fold(first, |acc, d| acc.tensor(d)))
            }
        }
    }
}

/// Two-sided bound on a product distance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundBracket {
    pub lower: f64,
    pub upper: f64,
    pub kind: DistanceKind,
    pub source: &'static str,
}

/// Coordinate distances `d_i(μ_i, p_i t / q)`.
pub fn coordinate_distances(
    spec: &ProductSpec,
    kind: DistanceKind,
    t: f64,
    starts: &ProductStarts,
    params: &UniformizationParams,
) -> Result<Vec<f64>> {
    starts.check(spec)?;
    (0..spec.len())
        .into_par_iter()
        .map(|i| kernel::distance_at_start(&spec.coords[i], kind, &starts.coord(i), spec.local_time(i, t), params))
        .collect()
}

/// `1 − ∏(1 − x_i)` for `x_i ∈ [0, 1]`, accurate when every `x_i` is tiny.
pub fn one_minus_prod_complement(xs: &[f64]) -> f64 {
    if xs.iter().any(|&x| x >= 1.0) {
        return 1.0;
    }
    let s: f64 = xs.iter().map(|&x| (-x.max(0.0)).ln_1p()).sum();
    (-s.exp_m1()).clamp(0.0, 1.0)
}

/// `d_H²` of the product from the coordinate Hellinger distances.
pub fn product_hellinger_sq_from(coord_hellinger: &[f64]) -> f64 {
    let sq: Vec<f64> = coord_hellinger.iter().map(|d| d * d).collect();
    one_minus_prod_complement(&sq)
}

/// Exact product Hellinger distance through the coordinates.
///
/// For [`ProductStarts::Max`] each factor takes its own coordinate maximum:
/// point masses of the product are products of point masses, and
/// `1 − ∏(1 − x_i)` is increasing in every `x_i`, so the coordinatewise
/// maximizers jointly maximize the product distance.
pub fn product_hellinger_exact(spec: &ProductSpec, t: f64, starts: &ProductStarts, params: &UniformizationParams) -> Result<f64> {
    let d = coordinate_distances(spec, DistanceKind::Hellinger, t, starts, params)?;
    Ok(product_hellinger_sq_from(&d).sqrt())
}

/// TV bracket from coordinate TV distances.
pub fn tv_bracket_from(coord_tv: &[f64]) -> BoundBracket {
    let sq: Vec<f64> = coord_tv.iter().map(|d| d * d).collect();
    let hellinger_side = if sq.iter().any(|&x| x >= 1.0) {
        1.0
    } else {
        let s: f64 = sq.iter().map(|&x| (-x).ln_1p()).sum();
        -(0.5 * s).exp_m1()
    };
    let max = coord_tv.iter().copied().fold(0.0, f64::max);
    let upper = one_minus_prod_complement(coord_tv);
    BoundBracket {
        lower: hellinger_side.max(max).min(upper),
        upper,
        kind: DistanceKind::Tv,
        source: "1-prod sqrt(1-d_i^2) v max d_i <= d_TV <= 1-prod(1-d_i)",
    }
}

pub fn product_tv_bracket(spec: &ProductSpec, t: f64, starts: &ProductStarts, params: &UniformizationParams) -> Result<BoundBracket> {
    let d = coordinate_distances(spec, DistanceKind::Tv, t, starts, params)?;
    Ok(tv_bracket_from(&d))
}

/// Exponential product bounds on the power scale `d^ϱ` (ϱ = 1 for TV, 2 for Hellinger).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProdMixingBounds {
    /// Bracket on `d^ϱ`.
    pub bracket: BoundBracket,
    /// `1 − exp{−(ϱ/2) Σ d_i²}`.
    pub lower_exp_branch: f64,
    /// `max_i d_i^ϱ`.
    pub lower_max_branch: f64,
    pub rho: u32,
    /// Coordinate distances the bounds were built from.
    pub coordinate: Vec<f64>,
}

impl ProdMixingBounds {
    /// `1 − exp{−Σ d_i^ϱ / (1 − A)}`, valid once every `d_i^ϱ ≤ A`; `None` before that.
    pub fn simplified_upper(&self, a: f64) -> Option<f64> {
        if !(a > 0.0 && a < 1.0) {
            return None;
        }
        let pw: Vec<f64> = self.coordinate.iter().map(|d| d.powi(self.rho as i32)).collect();
        if pw.iter().any(|&x| x > a) {
            return None;
        }
        let s: f64 = pw.iter().sum();
        Some(-(-s / (1.0 - a)).exp_m1())
    }
}

pub fn prodmixing_from(kind: DistanceKind, coord: &[f64]) -> Result<ProdMixingBounds> {
    let rho = kind.rho_or_err()?;
    let pw: Vec<f64> = coord.iter().map(|d| d.powi(rho as i32)).collect();
    let upper = if pw.iter().any(|&x| x >= 1.0) {
        1.0
    } else {
        let s: f64 = pw.iter().map(|&x| x / (1.0 - x)).sum();
        -(-s).exp_m1()
    };
    let sq: f64 = coord.iter().map(|d| d * d).sum();
    let lower_exp_branch = -(-(rho as f64 / 2.0) * sq).exp_m1();
    let lower_max_branch = pw.iter().copied().fold(0.0, f64::max);
    Ok(ProdMixingBounds {
        bracket: BoundBracket {
            lower: lower_exp_branch.max(lower_max_branch).min(upper),
            upper,
            kind,
            source: "1-exp{-(rho/2) sum d_i^2} v max d_i^rho <= d^rho <= 1-exp{-sum d_i^rho/(1-d_i^rho)}",
        },
        lower_exp_branch,
        lower_max_branch,
        rho,
        coordinate: coord.to_vec(),
    })
}

pub fn prodmixing_bounds(
    spec: &ProductSpec,
    t: f64,
    kind: DistanceKind,
    starts: &ProductStarts,
    params: &UniformizationParams,
) -> Result<ProdMixingBounds> {
    kind.rho_or_err()?;
    let d = coordinate_distances(spec, kind, t, starts, params)?;
    prodmixing_from(kind, &d)
}

/// `Σ d_i²` (Hellinger, bounds `d_H²`) or `Σ d_i` (TV, bounds `d_TV`).
pub fn sum_bound(spec: &ProductSpec, t: f64, kind: DistanceKind, starts: &ProductStarts, params: &UniformizationParams) -> Result<f64> {
    let rho = kind.rho_or_err()?;
    let d = coordinate_distances(spec, kind, t, starts, params)?;
    Ok(d.iter().map(|x| x.powi(rho as i32)).sum())
}

/// Maximum continuous-time mixing times of coordinates, memoized by kernel
/// content, kind and epsilon. Safe to share between threads.
#[derive(Debug, Default)]
pub struct MixingTimeCache {
    map: RwLock<HashMap<(u64, DistanceKind, u64), f64>>,
    opts: SearchOptions,
}

impl MixingTimeCache {
    pub fn new(opts: SearchOptions) -> Self {
        Self { map: RwLock::default(), opts }
    }

    pub fn get_or_compute(&self, chain: &MarkovChain, kind: DistanceKind, eps: f64) -> Result<f64> {
        let key = (fingerprint(chain.kernel()), kind, eps.to_bits());
        if let Some(v) = self.map.read().expect("cache lock poisoned").get(&key) {
            return Ok(*v);
        }
        let v = mixing_time(chain, kind, eps, &Start::Max, TimeMode::Continuous, &self.opts)?.value;
        self.map.write().expect("cache lock poisoned").insert(key, v);
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn fingerprint(k: &StochasticMatrix) -> u64 {
    let mut h = DefaultHasher::new();
    k.size().hash(&mut h);
    for x in k.as_row_major() {
        x.to_bits().hash(&mut h);
    }
    h.finish()
}

/// Validates or computes the `u_i` of the tail bounds, then returns the floors
/// `⌊p_i t / (u_i q)⌋`.
fn tail_exponents(
    spec: &ProductSpec,
    t: f64,
    kind: DistanceKind,
    eps: &[f64],
    eps_max: f64,
    u: Option<&[f64]>,
    cache: &MixingTimeCache,
) -> Result<Vec<f64>> {
    if eps.len() != spec.len() {
        return Err(Error::DimensionMismatch { expected: spec.len(), found: eps.len() });
    }
    if let Some(i) = eps.iter().position(|e| !(*e > 0.0 && *e < eps_max)) {
        return Err(Error::InvalidParameter(format!("eps[{i}] = {} outside (0, {eps_max})", eps[i])));
    }
    let u: Vec<f64> = match u {
        Some(u) => {
            if u.len() != spec.len() {
                return Err(Error::DimensionMismatch { expected: spec.len(), found: u.len() });
            }
            for (i, (&ui, c)) in u.iter().zip(spec.coords()).enumerate() {
                let d = kernel::max_distance_at(c, kind, ui, &cache.opts.params)?;
                if !(ui > 0.0) || d > eps[i] {
                    return Err(Error::InvalidParameter(format!("u[{i}] = {ui} is below the coordinate mixing time")));
                }
            }
            u.to_vec()
        }
        None => spec
            .coords()
            .iter()
            .zip(eps)
            .map(|(c, &e)| cache.get_or_compute(c, kind, e))
            .collect::<Result<_>>()?,
    };
    let q = spec.q();
    let min = u.iter().zip(spec.weights()).map(|(ui, p)| ui * q / p).fold(0.0, f64::max);
    if t < min * (1.0 - 1e-12) {
        return Err(Error::TimeTooSmall { t, min });
    }
    // The relative nudge keeps t = u q / p from flooring to 0 through rounding.
    Ok(u.iter()
        .zip(spec.weights())
        .map(|(ui, p)| {
            let r = p * t / (ui * q);
            (r * (1.0 + 1e-12)).floor()
        })
        .collect())
}

/// `1 − exp{−Σ (2ε_i)^{⌊p_i t/(u_i q)⌋}}`, an upper bound on the product's max TV.
/// `u` defaults to the coordinate mixing times `T_i(ε_i)`.
pub fn tail_bound_tv(spec: &ProductSpec, t: f64, eps: &[f64], u: Option<&[f64]>, cache: &MixingTimeCache) -> Result<f64> {
    let k = tail_exponents(spec, t, DistanceKind::Tv, eps, 0.5, u, cache)?;
    let s: f64 = eps.iter().zip(&k).map(|(e, k)| (2.0 * e).powf(*k)).sum();
    Ok(-(-s).exp_m1())
}

/// `sqrt(1 − exp{−(1/8) Σ (4ε_i)^{2⌊p_i t/(u_i q)⌋}})`, an upper bound on the product's max Hellinger.
pub fn tail_bound_hellinger(spec: &ProductSpec, t: f64, eps: &[f64], u: Option<&[f64]>, cache: &MixingTimeCache) -> Result<f64> {
    let k = tail_exponents(spec, t, DistanceKind::Hellinger, eps, std::f64::consts::FRAC_1_SQRT_2, u, cache)?;
    let s: f64 = eps.iter().zip(&k).map(|(e, k)| (4.0 * e).powf(2.0 * k)).sum();
    Ok((-(-s / 8.0).exp_m1()).sqrt())
}

/// Mixed-radix digits of a product state, first coordinate most significant.
fn digits(mut x: usize, sizes: &[usize]) -> Vec<usize> {
    let mut d = vec![0; sizes.len()];
    for i in (0..sizes.len()).rev() {
        d[i] = x % sizes[i];
        x /= sizes[i];
    }
    d
}

/// The product chain `K = Σ (p_i/q) I⊗…⊗K_i⊗…⊗I` as a dense chain, for oracle use.
pub fn dense_product_chain(spec: &ProductSpec) -> Result<MarkovChain> {
    let size = spec.state_count().unwrap_or(usize::MAX);
    if size > DENSE_PRODUCT_LIMIT {
        return Err(Error::TooLarge { size, limit: DENSE_PRODUCT_LIMIT });
    }
    if spec.len() == 1 {
        return Ok(spec.coords[0].clone());
    }
    let sizes: Vec<usize> = spec.coords.iter().map(MarkovChain::size).collect();
    let strides: Vec<usize> = (0..sizes.len()).map(|i| sizes[i + 1..].iter().product()).collect();
    let q = spec.q();
    let mut data = vec![0.0; size * size];
    for x in 0..size {
        let dx = digits(x, &sizes);
        for (i, c) in spec.coords.iter().enumerate() {
            let w = spec.weights[i] / q;
            let base = x - dx[i] * strides[i];
            for (yi, k) in c.kernel().row(dx[i]).iter().enumerate() {
                data[x * size + base + yi * strides[i]] += w * k;
            }
        }
    }
    let pi = spec
        .coords
        .iter()
        .skip(1)
        .fold(spec.coords[0].stationary().clone(), |acc, c| acc.tensor(c.stationary()));
    let label = format!(
        "product({})",
        spec.coords.iter().map(MarkovChain::label).collect::<Vec<_>>().join(", ")
    );
    MarkovChain::with_stationary(label, StochasticMatrix::from_row_major(size, data)?, pi)
}

/// `H_{1,p_1 t/q} ⊗ … ⊗ H_{n,p_n t/q}` as a dense matrix, for oracle use.
pub fn tensor_heat_matrix(spec: &ProductSpec, t: f64, params: &UniformizationParams) -> Result<StochasticMatrix> {
    let size = spec.state_count().unwrap_or(usize::MAX);
    if size > DENSE_PRODUCT_LIMIT {
        return Err(Error::TooLarge { size, limit: DENSE_PRODUCT_LIMIT });
    }
    let mut acc = DMatrix::<f64>::identity(1, 1);
    for (i, c) in spec.coords.iter().enumerate() {
        let h = heat_dmatrix(c.kernel(), spec.local_time(i, t), params)?;
        acc = acc.kronecker(&h);
    }
    Ok(StochasticMatrix::from_row_major(size, acc.transpose().as_slice().to_vec())?)
}
