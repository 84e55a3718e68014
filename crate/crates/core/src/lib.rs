//! Hawkes processes with a heterogeneous (fluctuating) background.
//!
//! Simulation by thinning, a modified maximum-likelihood estimator that adds a
//! smoothed copy of the source train as a nuisance regressor, the standard MHP
//! estimator, jitter cross-correlograms, closed-form bias/variance theory for a
//! linear-Cox background, and goodness-of-fit / Bayesian tooling.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod ccg;
pub mod error;
pub mod estimate;
pub mod events;
pub mod experiments;
pub mod inference;
pub mod io;
pub mod rng;
pub mod simulate;
pub mod stats;
pub mod theory;

pub use error::{Error, Result};
pub use events::{EventSequence, TrialSet};
