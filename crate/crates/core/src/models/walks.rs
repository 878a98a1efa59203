//! Nearest-neighbour walks: the cycle, the Ehrenfest urn, the lazy path, and
//! the family that interleaves the last two with geometric weights.

use statrs::function::gamma::ln_gamma;

use crate::chain::{Distribution, MarkovChain, StochasticMatrix};
use crate::error::{Error, Result};
use crate::product::ProductSpec;

fn build(label: String, n: usize, entries: impl IntoIterator<Item = (usize, usize, f64)>, pi: Vec<f64>) -> MarkovChain {
    let mut data = vec![0.0; n * n];
    for (i, j, p) in entries {
        data[i * n + j] += p;
    }
    let kernel = StochasticMatrix::from_row_major(n, data).expect("square finite kernel");
    MarkovChain::with_stationary(label, kernel, Distribution::new(pi).expect("closed-form stationary"))
        .expect("closed-form chain validates")
}

/// Simple random walk on `Z_{n+1}`, probability ½ to each neighbour.
/// For `n = 1` both neighbours coincide and the walk alternates.
pub fn cycle_chain(n: usize) -> Result<MarkovChain> {
    if n < 1 {
        return Err(Error::InvalidParameter("cycle needs n >= 1".into()));
    }
    let m = n + 1;
    let entries = (0..m).flat_map(|x| [(x, (x + 1) % m, 0.5), (x, (x + m - 1) % m, 0.5)]);
    Ok(build(format!("cycle(n={n})"), m, entries, vec![1.0 / m as f64; m]))
}

/// Ehrenfest urn on `{0..n}`: `K(j, j+1) = (n−j)/n`, `K(j+1, j) = (j+1)/n`;
/// stationary Binomial(n, ½).
pub fn ehrenfest_chain(n: usize) -> Result<MarkovChain> {
    if n < 1 {
        return Err(Error::InvalidParameter("ehrenfest needs n >= 1".into()));
    }
    let nf = n as f64;
    let entries = (0..n).flat_map(|j| [(j, j + 1, (nf - j as f64) / nf), (j + 1, j, (j as f64 + 1.0) / nf)]);
    let ln_n = ln_gamma(nf + 1.0);
    let pi: Vec<f64> = (0..=n)
        .map(|j| (ln_n - ln_gamma(j as f64 + 1.0) - ln_gamma(nf - j as f64 + 1.0) - nf * std::f64::consts::LN_2).exp())
        .collect();
    let pi = Distribution::renormalized(pi).into_vec();
    Ok(build(format!("ehrenfest(n={n})"), n + 1, entries, pi))
}

/// Path `{0..n}` with ½ to each neighbour and holding ½ at both ends; uniform stationary.
pub fn lazy_path_chain(n: usize) -> Result<MarkovChain> {
    if n < 1 {
        return Err(Error::InvalidParameter("lazy path needs n >= 1".into()));
    }
    let entries = (0..n)
        .flat_map(|j| [(j, j + 1, 0.5), (j + 1, j, 0.5)])
        .chain([(0, 0, 0.5), (n, n, 0.5)]);
    Ok(build(format!("lazy-path(n={n})"), n + 1, entries, vec![1.0 / (n as f64 + 1.0); n + 1]))
}

/// Odd index `2k−1` is Ehrenfest(k) with weight `r^{k−1}`; even index `2k` is
/// lazy-path(k) with weight 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterleavedFamily {
    pub r: f64,
}

impl InterleavedFamily {
    pub fn new(r: f64) -> Result<Self> {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::InvalidParameter(format!("r must lie in (0, 1), got {r}")));
        }
        Ok(Self { r })
    }

    /// The `i`-th chain of the sequence (1-based).
    pub fn member(&self, i: usize) -> Result<MarkovChain> {
        match i {
            0 => Err(Error::InvalidParameter("indices start at 1".into())),
            i if i % 2 == 1 => ehrenfest_chain(i.div_ceil(2)),
            i => lazy_path_chain(i / 2),
        }
    }

    pub fn weight(&self, i: usize) -> f64 {
        if i % 2 == 1 {
            self.r.powi((i.div_ceil(2) - 1) as i32)
        } else {
            1.0
        }
    }

    /// `q⁽¹⁾_n = Σ_{k≤n} r^{k−1}`, the total weight of the first `n` Ehrenfest chains.
    pub fn q1(&self, n: usize) -> f64 {
        (0..n).map(|k| self.r.powi(k as i32)).sum()
    }

    /// `q⁽²⁾_n = n`, the total weight of the first `n` lazy paths.
    pub fn q2(&self, n: usize) -> f64 {
        n as f64
    }

    /// Total weight of the first `index` members.
    pub fn q(&self, index: usize) -> f64 {
        self.q1(index.div_ceil(2)) + self.q2(index / 2)
    }

    /// Product of the first `index` members with their weights.
    pub fn product(&self, index: usize) -> Result<ProductSpec> {
        let coords = (1..=index).map(|i| self.member(i)).collect::<Result<Vec<_>>>()?;
        ProductSpec::new(coords, (1..=index).map(|i| self.weight(i)).collect())
    }

    /// Product of Ehrenfest(1..n) with weights `r^{k−1}`.
    pub fn odd_product(&self, n: usize) -> Result<ProductSpec> {
        let coords = (1..=n).map(ehrenfest_chain).collect::<Result<Vec<_>>>()?;
        ProductSpec::new(coords, (0..n).map(|k| self.r.powi(k as i32)).collect())
    }

    /// Predicted cutoff time `¼ q⁽¹⁾_n r^{1−n} n log n` of [`Self::odd_product`].
    pub fn odd_product_cutoff_time(&self, n: usize) -> f64 {
        let nf = n as f64;
        0.25 * self.q1(n) * self.r.powi(1 - n as i32) * nf * nf.ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_cycle() {
        let c = cycle_chain(2).unwrap();
        for x in 0..3 {
            for y in 0..3 {
                let want = if x == y { 0.0 } else { 0.5 };
                assert_eq!(c.kernel().get(x, y), want);
            }
        }
        assert_eq!(c.stationary().as_slice(), &[1.0 / 3.0; 3]);
        let two = cycle_chain(1).unwrap();
        assert_eq!(two.kernel().get(0, 1), 1.0);
    }

    #[test]
    fn ehrenfest_two() {
        let c = ehrenfest_chain(2).unwrap();
        let pi = c.stationary().as_slice();
        for (a, b) in pi.iter().zip([0.25, 0.5, 0.25]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(c.reversible());
    }

    #[test]
    fn lazy_path_loops() {
        let c = lazy_path_chain(5).unwrap();
        assert_eq!(c.kernel().get(0, 0), 0.5);
        assert_eq!(c.kernel().get(5, 5), 0.5);
        assert!(c.reversible());
    }

    #[test]
    fn interleaving() {
        let f = InterleavedFamily::new(0.5).unwrap();
        assert_eq!(f.member(1).unwrap().label(), "ehrenfest(n=1)");
        assert_eq!(f.member(2).unwrap().label(), "lazy-path(n=1)");
        assert_eq!(f.member(5).unwrap().label(), "ehrenfest(n=3)");
        assert_eq!(f.weight(5), 0.25);
        assert_eq!(f.weight(6), 1.0);
        for n in 1..8 {
            assert!((f.q(2 * n) - (f.q1(n) + f.q2(n))).abs() < 1e-12);
            let direct: f64 = (1..=2 * n).map(|i| f.weight(i)).sum();
            assert!((f.q(2 * n) - direct).abs() < 1e-12);
        }
        assert!(InterleavedFamily::new(1.0).is_err());
    }
}
