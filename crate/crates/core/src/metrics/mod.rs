//! Numerical kernels shared by the probes.

pub mod cca;
pub mod cka;
pub mod distance;
pub mod resample;

pub use cca::{cca, pwcca, pwcca_weights, CcaParams, CcaResult, DEFAULT_EPS, DEFAULT_VAR_KEEP};
pub use cka::{
    baseline_permutations, center_columns, cka_permutation_delta, linear_cka, CkaResult, DEFAULT_PERMUTATIONS,
};
pub use distance::{
    euclidean, mean_std, normalize_against_random, pair_distance_stats, PairDistanceStats, PooledFeatures,
};
pub use resample::resample_linear;
