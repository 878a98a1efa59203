//! Finite Markov chains: distributions, row-stochastic kernels, validation,
//! stationary distributions, discrete powers and the spectral gap.

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on total mass and row sums.
pub const MASS_TOL: f64 = 1e-9;
/// Per-entry tolerance on `πK = π`.
pub const STATIONARY_TOL: f64 = 1e-8;
/// Per-pair tolerance on detailed balance.
pub const REVERSIBLE_TOL: f64 = 1e-10;
/// Entries at or below this are treated as absent edges of the support graph.
pub const SUPPORT_THRESHOLD: f64 = 1e-15;
/// Largest state count solved densely; above it power iteration takes over.
pub const DENSE_SOLVE_LIMIT: usize = 2000;
/// Residual the stationary solver must reach.
pub const SOLVER_RESIDUAL: f64 = 1e-10;

/// A probability vector over `0..len`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Distribution(Vec<f64>);

impl Distribution {
    /// Checks nonnegativity and unit mass (within [`MASS_TOL`]).
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("empty".into()));
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidDistribution(format!("entry {i} is {w}")));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidDistribution(format!("mass is {s}")));
        }
        Ok(Self(weights))
    }

    /// Normalizes nonnegative weights with positive total.
    pub fn from_unnormalized(mut weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidDistribution("negative or non-finite weight".into()));
        }
        let s: f64 = weights.iter().sum();
        if !(s > 0.0) {
            return Err(Error::InvalidDistribution("zero total weight".into()));
        }
        weights.iter_mut().for_each(|w| *w /= s);
        Ok(Self(weights))
    }

    pub fn point_mass(len: usize, state: usize) -> Self {
        assert!(state < len, "state {state} out of range 0..{len}");
        let mut w = vec![0.0; len];
        w[state] = 1.0;
        Self(w)
    }

    pub fn uniform(len: usize) -> Self {
        assert!(len > 0);
        Self(vec![1.0 / len as f64; len])
    }

    /// Clamps rounding negatives to zero and rescales to unit mass.
    pub(crate) fn renormalized(mut weights: Vec<f64>) -> Self {
        for w in weights.iter_mut() {
            if *w < 0.0 {
                *w = 0.0;
            }
        }
        let s: f64 = weights.iter().sum();
        if s > 0.0 {
            weights.iter_mut().for_each(|w| *w /= s);
        }
        Self(weights)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Product measure, first factor most significant.
    pub fn tensor(&self, other: &Distribution) -> Distribution {
        let mut w = Vec::with_capacity(self.len() * other.len());
        for a in &self.0 {
            for b in &other.0 {
                w.push(a * b);
            }
        }
        Self(w)
    }
}

impl std::ops::Index<usize> for Distribution {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Dense square matrix stored row-major. Construction only checks shape and
/// finiteness; stochasticity is what [`validate_chain`] reports on.
#[derive(Clone, Debug, PartialEq)]
pub struct StochasticMatrix {
    n: usize,
    data: Vec<f64>,
}

impl StochasticMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidParameter("kernel has no states".into()));
        }
        let mut data = Vec::with_capacity(n * n);
        for (row, r) in rows.into_iter().enumerate() {
            if r.len() != n {
                return Err(Error::NotSquare { row, len: r.len(), expected: n });
            }
            data.extend(r);
        }
        Self::from_row_major(n, data)
    }

    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("kernel has no states".into()));
        }
        if data.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, found: data.len() });
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite entry at ({}, {})",
                i / n,
                i % n
            )));
        }
        Ok(Self { n, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { n, data }
    }

    /// Number of states.
    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_row_major(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.data)
    }

    pub(crate) fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(m[(i, j)]);
            }
        }
        Self { n, data }
    }

    /// `out = v K`.
    pub fn left_mul_into(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, k) in out.iter_mut().zip(self.row(i)) {
                *o += vi * k;
            }
        }
    }

    pub fn left_mul(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.left_mul_into(v, &mut out);
        out
    }

    /// Strong connectivity of the support graph (entries above [`SUPPORT_THRESHOLD`]).
    pub fn is_irreducible(&self) -> bool {
        let reach = |forward: bool| {
            let mut seen = vec![false; self.n];
            let mut queue = VecDeque::from([0usize]);
            seen[0] = true;
            while let Some(x) = queue.pop_front() {
                for y in 0..self.n {
                    let w = if forward { self.get(x, y) } else { self.get(y, x) };
                    if w > SUPPORT_THRESHOLD && !seen[y] {
                        seen[y] = true;
                        queue.push_back(y);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach(true) && reach(false)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ViolationKind {
    NonStochasticRow,
    NegativeEntry,
    Reducible,
    NotStationary,
    DimensionMismatch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Location {
    Row(usize),
    Entry(usize, usize),
    State(usize),
    Whole,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub location: Location,
    pub magnitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    fn from_violations(violations: Vec<Violation>) -> Self {
        Self { ok: violations.is_empty(), violations }
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok {
            return write!(f, "ok");
        }
        let parts: Vec<String> = self
            .violations
            .iter()
            .map(|v| format!("{:?} at {:?} (magnitude {:e})", v.kind, v.location, v.magnitude))
            .collect();
        write!(f, "{}", parts.join("; "))
    }
}

/// Structural checks on `kernel`, plus stationarity of `stationary` when given.
/// Never fails: every problem is listed in the report.
pub fn validate_chain(kernel: &StochasticMatrix, stationary: Option<&Distribution>) -> ValidationReport {
    let n = kernel.size();
    let mut violations = Vec::new();
    for i in 0..n {
        let row = kernel.row(i);
        for (j, &k) in row.iter().enumerate() {
            if k < 0.0 {
                violations.push(Violation {
                    kind: ViolationKind::NegativeEntry,
                    location: Location::Entry(i, j),
                    magnitude: -k,
                });
            }
        }
        let defect = (row.iter().sum::<f64>() - 1.0).abs();
        if defect > MASS_TOL {
            violations.push(Violation {
                kind: ViolationKind::NonStochasticRow,
                location: Location::Row(i),
                magnitude: defect,
            });
        }
    }
    if !kernel.is_irreducible() {
        violations.push(Violation { kind: ViolationKind::Reducible, location: Location::Whole, magnitude: 1.0 });
    }
    if let Some(pi) = stationary {
        if pi.len() != n {
            violations.push(Violation {
                kind: ViolationKind::DimensionMismatch,
                location: Location::Whole,
                magnitude: (pi.len() as f64 - n as f64).abs(),
            });
        } else {
            let pk = kernel.left_mul(pi.as_slice());
            for (x, (a, b)) in pk.iter().zip(pi.as_slice()).enumerate() {
                let d = (a - b).abs();
                if d > STATIONARY_TOL {
                    violations.push(Violation {
                        kind: ViolationKind::NotStationary,
                        location: Location::State(x),
                        magnitude: d,
                    });
                }
            }
        }
    }
    ValidationReport::from_violations(violations)
}

fn residual(kernel: &StochasticMatrix, pi: &[f64]) -> f64 {
    kernel
        .left_mul(pi)
        .iter()
        .zip(pi)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// The unique stationary distribution of an irreducible kernel.
pub fn stationary_distribution(kernel: &StochasticMatrix) -> Result<Distribution> {
    if !kernel.is_irreducible() {
        return Err(Error::Reducible);
    }
    let n = kernel.size();
    let pi = if n <= DENSE_SOLVE_LIMIT { dense_stationary(kernel)? } else { cesaro_stationary(kernel)? };
    let res = residual(kernel, pi.as_slice());
    if !(res <= SOLVER_RESIDUAL) {
        return Err(Error::NoConvergence { residual: res });
    }
    Ok(pi)
}

/// Solves `(Kᵀ − I)π = 0` with the last equation replaced by `Σπ = 1`.
pub(crate) fn dense_stationary(kernel: &StochasticMatrix) -> Result<Distribution> {
    let n = kernel.size();
    let mut a = kernel.to_dmatrix().transpose();
    for i in 0..n {
        a[(i, i)] -= 1.0;
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let x = a.lu().solve(&b).ok_or(Error::NoConvergence { residual: f64::INFINITY })?;
    Ok(Distribution::renormalized(x.iter().copied().collect()))
}

fn cesaro_stationary(kernel: &StochasticMatrix) -> Result<Distribution> {
    const MAX_ITER: usize = 1_000_000;
    let n = kernel.size();
    let mut v = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut avg = v.clone();
    for m in 1..=MAX_ITER {
        kernel.left_mul_into(&v, &mut next);
        std::mem::swap(&mut v, &mut next);
        let w = 1.0 / (m as f64 + 1.0);
        for (a, x) in avg.iter_mut().zip(&v) {
            *a += w * (x - *a);
        }
        if m % 64 == 0 {
            // The running average is the estimate; stop once either it or the
            // iterate itself is stationary to solver precision.
            if residual(kernel, &v) <= SOLVER_RESIDUAL {
                return Ok(Distribution::renormalized(v));
            }
            if residual(kernel, &avg) <= SOLVER_RESIDUAL {
                return Ok(Distribution::renormalized(avg));
            }
        }
    }
    Err(Error::NoConvergence { residual: residual(kernel, &avg) })
}

/// `μK^m` by repeated vector-matrix products.
pub fn power_distribution(start: &Distribution, kernel: &StochasticMatrix, m: u64) -> Result<Distribution> {
    if start.len() != kernel.size() {
        return Err(Error::DimensionMismatch { expected: kernel.size(), found: start.len() });
    }
    let mut v = start.as_slice().to_vec();
    let mut next = vec![0.0; v.len()];
    for _ in 0..m {
        kernel.left_mul_into(&v, &mut next);
        std::mem::swap(&mut v, &mut next);
    }
    Ok(Distribution(v))
}

/// A validated triple of kernel, stationary distribution and reversibility flag.
#[derive(Clone, Debug)]
pub struct MarkovChain {
    kernel: StochasticMatrix,
    stationary: Distribution,
    reversible: bool,
    label: String,
}

impl MarkovChain {
    /// Validates `kernel` and solves for its stationary distribution.
    pub fn new(label: impl Into<String>, kernel: StochasticMatrix) -> Result<Self> {
        let report = validate_chain(&kernel, None);
        if !report.ok {
            return Err(Error::Validation(report));
        }
        let stationary = stationary_distribution(&kernel)?;
        Ok(Self::assemble(label.into(), kernel, stationary))
    }

    /// Uses a caller-supplied stationary distribution, which is validated.
    pub fn with_stationary(label: impl Into<String>, kernel: StochasticMatrix, stationary: Distribution) -> Result<Self> {
        let report = validate_chain(&kernel, Some(&stationary));
        if !report.ok {
            return Err(Error::Validation(report));
        }
        Ok(Self::assemble(label.into(), kernel, stationary))
    }

    fn assemble(label: String, kernel: StochasticMatrix, stationary: Distribution) -> Self {
        let reversible = is_reversible(&kernel, &stationary);
        Self { kernel, stationary, reversible, label }
    }

    pub fn kernel(&self) -> &StochasticMatrix {
        &self.kernel
    }

    pub fn stationary(&self) -> &Distribution {
        &self.stationary
    }

    pub fn reversible(&self) -> bool {
        self.reversible
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn size(&self) -> usize {
        self.kernel.size()
    }

    /// Reads a chain file and validates it.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: ChainFile = serde_json::from_str(s)?;
        file.into_chain()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_file(&self) -> ChainFile {
        ChainFile {
            label: self.label.clone(),
            matrix: self.kernel.to_rows(),
            stationary: Some(self.stationary.as_slice().to_vec()),
        }
    }
}

fn is_reversible(kernel: &StochasticMatrix, pi: &Distribution) -> bool {
    let n = kernel.size();
    (0..n).all(|x| (x + 1..n).all(|y| (pi[x] * kernel.get(x, y) - pi[y] * kernel.get(y, x)).abs() <= REVERSIBLE_TOL))
}

/// On-disk chain format.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainFile {
    pub label: String,
    pub matrix: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stationary: Option<Vec<f64>>,
}

impl ChainFile {
    /// Runs the full validation and rejects on any violation.
    pub fn into_chain(self) -> Result<MarkovChain> {
        let kernel = StochasticMatrix::from_rows(self.matrix)?;
        match self.stationary {
            Some(pi) => {
                if pi.len() != kernel.size() {
                    return Err(Error::DimensionMismatch { expected: kernel.size(), found: pi.len() });
                }
                MarkovChain::with_stationary(self.label, kernel, Distribution::new(pi)?)
            }
            None => MarkovChain::new(self.label, kernel),
        }
    }
}

/// Smallest nonzero eigenvalue of `I − K` for a reversible chain.
///
/// Uses the symmetric matrix `S(x,y) = sqrt(K(x,y) K(y,x))`, which equals
/// `D^{1/2} K D^{-1/2}` under detailed balance but never divides by `π`.
pub fn spectral_gap(chain: &MarkovChain) -> Result<f64> {
    if !chain.reversible() {
        return Err(Error::NotReversible);
    }
    let n = chain.size();
    if n < 2 {
        return Err(Error::DomainError("spectral gap needs at least two states".into()));
    }
    let k = chain.kernel();
    let m = DMatrix::from_fn(n, n, |x, y| {
        let s = if x == y { k.get(x, x) } else { (k.get(x, y) * k.get(y, x)).sqrt() };
        if x == y {
            1.0 - s
        } else {
            -s
        }
    });
    let eig = nalgebra::SymmetricEigen::try_new(m, 1e-15, 100_000).ok_or(Error::EigenFailure)?;
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev[1])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state(a: f64, b: f64) -> StochasticMatrix {
        StochasticMatrix::from_rows(vec![vec![1.0 - a, a], vec![b, 1.0 - b]]).unwrap()
    }

    #[test]
    fn identity_is_reducible() {
        let r = validate_chain(&StochasticMatrix::identity(2), None);
        assert!(!r.ok);
        assert!(r.has(ViolationKind::Reducible));
    }

    #[test]
    fn symmetric_two_state_validates() {
        let pi = Distribution::new(vec![0.5, 0.5]).unwrap();
        assert!(validate_chain(&two_state(0.5, 0.5), Some(&pi)).ok);
    }

    #[test]
    fn short_row_reported_with_defect() {
        let k = StochasticMatrix::from_rows(vec![vec![0.5, 0.4], vec![0.5, 0.5]]).unwrap();
        let r = validate_chain(&k, None);
        let v = r.violations.iter().find(|v| v.kind == ViolationKind::NonStochasticRow).unwrap();
        assert_eq!(v.location, Location::Row(0));
        assert!((v.magnitude - 0.1).abs() < 1e-12);
    }

    #[test]
    fn two_state_stationary() {
        let pi = stationary_distribution(&two_state(0.3, 0.1)).unwrap();
        assert!((pi[0] - 0.25).abs() < 1e-12);
        assert!((pi[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn reducible_stationary_errors() {
        assert!(matches!(stationary_distribution(&StochasticMatrix::identity(3)), Err(Error::Reducible)));
    }

    #[test]
    fn power_examples() {
        let k = two_state(0.25, 0.25);
        let d0 = Distribution::point_mass(2, 0);
        assert_eq!(power_distribution(&d0, &k, 0).unwrap(), d0);
        assert!((power_distribution(&d0, &k, 2).unwrap()[0] - 0.625).abs() < 1e-15);
        let half = power_distribution(&d0, &two_state(0.5, 0.5), 1).unwrap();
        assert_eq!(half.as_slice(), &[0.5, 0.5]);
        assert!(matches!(
            power_distribution(&Distribution::uniform(3), &k, 1),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn gap_of_two_state() {
        let c = MarkovChain::new("2", two_state(0.3, 0.1)).unwrap();
        assert!((spectral_gap(&c).unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn gap_needs_reversibility() {
        // Biased 3-cycle: doubly stochastic, uniform π, not reversible.
        let k = StochasticMatrix::from_rows(vec![
            vec![0.0, 0.7, 0.3],
            vec![0.3, 0.0, 0.7],
            vec![0.7, 0.3, 0.0],
        ])
        .unwrap();
        let c = MarkovChain::new("biased", k).unwrap();
        assert!(!c.reversible());
        assert!(matches!(spectral_gap(&c), Err(Error::NotReversible)));
    }

    #[test]
    fn chain_file_round_trip() {
        let c = MarkovChain::new("x", two_state(0.3, 0.1)).unwrap();
        let s = serde_json::to_string(&c.to_file()).unwrap();
        let back = MarkovChain::from_json_str(&s).unwrap();
        assert_eq!(back.kernel(), c.kernel());
        assert_eq!(back.label(), "x");
    }

    #[test]
    fn loader_rejects_bad_stationary() {
        let s = r#"{"label":"x","matrix":[[0.7,0.3],[0.1,0.9]],"stationary":[0.5,0.5]}"#;
        match MarkovChain::from_json_str(s) {
            Err(Error::Validation(r)) => assert!(r.has(ViolationKind::NotStationary)),
            other => panic!("expected validation failure, got {other:?}"),
        }
    }
}
