//! Thermodynamic decision-making on finite Markov decision processes.
//!
//! Everything here is computed exactly by enumeration at desk scale:
//!
//! | Module | What it computes |
//! |--------|------------------|
//! | [`mdp`] | finite MDPs, Markov chains, exact path measures, the classical Bellman recursion |
//! | [`kl_control`] | linearly-solvable (KL-control) value recursion, desirability, optimal control laws |
//! | [`maxent`] | tilted Gibbs solutions of constrained maximum-entropy programs |
//! | [`thermo`] | heat/work ledgers, backward chains, entropy production, fluctuation theorems |
//! | [`info`] | Shannon quantities, coupled system/decision-maker ensembles, information exchange |
//! | [`info_mdp`] | information-regularized policy optimization, Bayesian parameter models, temperature calibration |
//!
//! All probabilities are multiplied in the natural-log domain; a structural zero
//! is represented by `f64::NEG_INFINITY` and never by a large negative float.
//! Information quantities are reported in nats.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod error;
pub mod info;
pub mod info_mdp;
pub mod kl_control;
pub mod math;
pub mod maxent;
pub mod mdp;
pub mod thermo;

pub use error::{Error, ErrorKind, Result};
pub use math::{ConditionalKernel, StochasticMatrix};
pub use mdp::{FiniteMdp, MarkovChain, Trajectory, TrajectoryEnsemble, ValueTable};
