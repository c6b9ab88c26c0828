//! Dynamic linear model primitives.

mod filter;
mod spec;
mod tiling;
mod weighted;

pub use filter::{
    backward_sample, backward_smooth_mode, discount_evolution_variance, forward_filter,
    forward_filter_dense, FilterOutput, StatePath, StatePrior, TimeObs, DIFFUSE_SCALE,
};
pub use spec::{structural_sets, DlmSpec, Family, StateBlock, StructuralTag};
pub use tiling::{
    scaled_prior, tile_replicates, DiagonalPrecision, Tiling, WeightedObservations, Weights,
    DEFAULT_EPSILON_W,
};
pub use weighted::{fit_weighted_dlm, moment_precision, weighted_objective, FitSettings, WeightedFit};
