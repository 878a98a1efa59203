//! Mixing times, distance profiles and cutoff diagnostics for finite Markov
//! chains and their weighted products.

pub mod chain;
pub mod cli;
pub mod cutoff;
pub mod distances;
pub mod error;
pub mod kernel;
pub mod models;
pub mod product;
pub mod report;

pub use chain::{spectral_gap, stationary_distribution, validate_chain, Distribution, MarkovChain, StochasticMatrix};
pub use distances::{hellinger_distance, l2_distance, tv_distance, DistanceKind};
pub use error::{Error, Result};
pub use kernel::{heat_kernel_matrix, heat_kernel_row, mixing_time, SearchOptions, Start, TimeMode, UniformizationParams};
pub use product::{ProductSpec, ProductStarts};
