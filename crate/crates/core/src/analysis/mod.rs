//! The experiments: temperature sweeps, residual analyses by linguistic
//! factor and numerical checks of the entropy results.

mod corpus;
mod factors;
mod grid;
mod sweep;
mod theorems;

pub use corpus::{Corpus, ModelVariant, Observations, Scope, SurprisalTable, ZONE_COLUMNS};
pub use factors::{
    delta_mse, delta_mse_residuals, direction, factor_partition, factor_table, histogram, mse_over,
    normalized_delta_mse, per_word_report, Direction, FactorPartition, FactorRow, FactorSubset, Sufficiency,
    WordRow, SCARCE_RATIO, SPARSE_RATIO,
};
pub use grid::{GridMode, TemperatureGrid};
pub use sweep::{
    fit_table, selective_sweep, sweep, sweep_with_specs, token_stream, CalibrationAt, SweepCalibration, SweepOptions, SweepPoint,
    SweepReport, SURPRISAL_COLUMNS,
};
pub use theorems::{
    entropy_alignment, sparsity_gaps, flat_dirichlet, verify_theorems, EntropyAlignment, GoldChoice, SurprisalKernel, TheoremCheck,
    TheoremOptions, TheoremReport, Violation, RENYI_ORDERS,
};
