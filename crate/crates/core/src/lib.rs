//! Optimistic follow-the-regularized-leader dynamics for finite-horizon
//! general-sum Markov games, together with exact evaluation of the
//! correlated policies they certify.
//!
//! The crate is `no_std` and only needs `alloc`. Everything that touches the
//! filesystem, the command line or a text format lives in the companion
//! `markov-oftrl-cli` crate.
//!
//! Layout:
//!
//! - [`game`]: game tensors, joint-action indexing, validation, the built-in toy game.
//! - [`schedules`]: smooth step sizes, mixture coefficients, OFTRL weights, stage lengths.
//! - [`simplex`]: log-barrier and entropy OFTRL argmax kernels, stationary distributions.
//! - [`policy`]: product policies, trajectories, Q-tables and the full-information oracle.
//! - [`ce`]: BM-OFTRL with smooth value updates (correlated equilibria).
//! - [`cce`]: stage-based optimistic Hedge and the smooth optimistic Hedge variant.
//! - [`eval`]: certified values, CE/CCE gaps and regret diagnostics.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod cce;
pub mod ce;
mod error;
pub mod eval;
pub mod game;
pub mod policy;
pub mod schedules;
pub mod simplex;

pub use error::{Error, Result};
pub use game::{JointActionSpace, MarkovGame, Violation};
pub use policy::{PolicyTrajectory, ProductPolicy, QTable};
