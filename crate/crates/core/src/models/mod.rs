//! Builders and closed forms for the example chains.

mod lacoin;
mod registry;
mod two_state;
mod walks;
mod weights;

pub use lacoin::{lacoin_bound_envelope, lacoin_chain, LacoinEnvelope, LacoinParams, STATIONARY_CROSS_CHECK};
pub use registry::{parse_params, Model};
pub use two_state::{
    ex2p_fn, ex2p_fn_direct, identical_product_hellinger_sq_from_zero, identical_product_tv_from_zero,
    tv_hellinger_ratio_limit, two_state_chain, TwoState, TwoStateParams,
};
pub use walks::{cycle_chain, ehrenfest_chain, lazy_path_chain, InterleavedFamily};
pub use weights::{
    b_n_delta, delta_thresholds, lacoin_thresholds, DeltaThresholds, GrowthTrend, LacoinThresholds, ThresholdEntry,
    WeightSchedule,
};
pub(crate) use weights::slope;
