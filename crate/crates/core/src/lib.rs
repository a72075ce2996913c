//! Evolutionary hyperparameter search for regression neural networks, with a
//! fit-to-median objective standing in for the usual l1/l2/dropout regularisers.
//!
//! The crate is organised around the experiment pipeline:
//!
//! - [`data`]: record cleaning, normalization, 70/15/15 splitting, per-network
//!   subsampling, CSV ingestion and a synthetic heteroscedastic generator that
//!   mimics ship shaft-power telemetry.
//! - [`nn`]: a from-scratch feed-forward MLP with eight activations, seven
//!   optimizers, inverted dropout and early-stopped minibatch training.
//! - [`metrics`]: Minkowski-r and relative error measures, conditional-median
//!   tables and the Mean Fit to Median Error (MFME).
//! - [`evo`]: a collective multi-level GA (IBEA / simplified immune selection,
//!   SBX / DE / polynomial-mutation variation, periodic collective elimination)
//!   over a 10-gene real-coded hyperparameter genome.
//! - [`interpret`]: learnt input-output curve extraction and cross-network
//!   spread diagnostics.
//! - [`harness`]: run orchestration for the four GA approaches, reporting and
//!   SVG plot emission.
//!
//! Everything is deterministic given a master seed: parallel evaluation uses
//! per-individual seed streams derived from (seed, generation, index).

// Negated comparisons on floats are deliberate NaN-rejecting guards here;
// index loops in the numeric kernels read better than iterator chains.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod data;
pub mod error;
pub mod evo;
pub mod harness;
pub mod interpret;
pub mod metrics;
pub mod nn;

pub(crate) mod seeds;

pub use error::{Error, Result};
