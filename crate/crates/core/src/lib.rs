//! Temperature-scaled surprisal for reading-time modelling.
//!
//! * [`distrib`]: softmax, surprisal, Shannon and Rényi entropy, KL divergence
//! * [`calibration`]: ECE, classwise ECE and HCE under equal and log binning
//! * [`lme`]: mixed-effects regression by profiled maximum likelihood
//! * [`store`]: logit archive, word table and reading-time table formats
//! * [`analysis`]: temperature sweeps, residual analyses, theorem checks
//! * [`cli`]: the `tempsurp` command line
//! * [`synth`]: seeded synthetic corpora with a known generating temperature

// NaN-rejecting guards are written as `!(x > 0.0)` on purpose, and the
// triangular solves read best with explicit indices.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod calibration;
pub mod cli;
pub mod distrib;
pub mod error;
pub mod lme;
pub mod store;
pub mod synth;

pub use error::{Error, Result};
