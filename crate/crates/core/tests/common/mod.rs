#![allow(dead_code)]

use mixcut::{Distribution, MarkovChain, StochasticMatrix};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random point of the simplex (flat Dirichlet), with occasional exact zeros.
pub fn random_distribution(rng: &mut impl Rng, n: usize) -> Distribution {
    let mut w: Vec<f64> = (0..n).map(|_| -rng.gen_range(f64::MIN_POSITIVE..1.0f64).ln()).collect();
    if n > 2 && rng.gen_bool(0.2) {
        w[rng.gen_range(0..n)] = 0.0;
    }
    Distribution::from_unnormalized(w).unwrap()
}

/// Irreducible chain with every entry positive.
pub fn random_chain(rng: &mut impl Rng, n: usize) -> MarkovChain {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
            let s: f64 = w.iter().sum();
            w.iter().map(|x| x / s).collect()
        })
        .collect();
    MarkovChain::new("random", StochasticMatrix::from_rows(rows).unwrap()).unwrap()
}

/// Reversible chain from symmetric edge weights: `K(x,y) = w(x,y) / Σ_z w(x,z)`.
pub fn random_reversible_chain(rng: &mut impl Rng, n: usize) -> MarkovChain {
    let mut w = vec![vec![0.0; n]; n];
    for x in 0..n {
        for y in x..n {
            let v = rng.gen_range(0.05..1.0);
            w[x][y] = v;
            w[y][x] = v;
        }
    }
    let rows: Vec<Vec<f64>> = w
        .iter()
        .map(|r| {
            let s: f64 = r.iter().sum();
            r.iter().map(|x| x / s).collect()
        })
        .collect();
    MarkovChain::new("reversible", StochasticMatrix::from_rows(rows).unwrap()).unwrap()
}
