//! Particle filtering and smoothing for state-space models, with independent
//! and particle marginal Metropolis-Hastings samplers built on top.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod commands;
pub mod error;
pub mod filter;
pub mod io;
pub mod mcmc;
pub mod model;
pub mod rng;
pub mod smoother;
pub mod weights;

pub use error::{Error, Result};
pub use filter::{run_filter, FilterTrace, ParticleCloud};
pub use model::{ObservationRecord, ProposalKind, StateSpaceModel, StateValue};
