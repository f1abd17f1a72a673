//! Learning dynamics for large anonymous games.
//!
//! An anonymous game is one where an agent's payoff depends only on its own
//! action and on the fraction of the population playing each action. This
//! crate provides:
//!
//! * [`game`]: the game model (action distributions, payoff channels,
//!   expected utility, L1 distance, Lipschitz estimation);
//! * [`games`]: the contribution game and generic symmetric matrix games;
//! * [`dynamics`]: η-best replies, best-reply sequences, η-Nash checks and
//!   the (e, ε)-closeness machinery;
//! * [`learners`]: ε-stage learners, a regret-matching baseline and
//!   fixed-strategy agents;
//! * [`sim`]: a deterministic round loop over a finite population.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, configuration
//! and the command line runner live in the `stagelearn` crate.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod dynamics;
pub mod error;
pub mod game;
pub mod games;
pub mod learners;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
pub use game::{
    l1_distance, matching_utility, utility, ActionDistribution, ActionSet, AnonymousGame,
    Lipschitz, MixedAction, PayoffDistribution, PayoffMatrix, PayoffSet,
};
pub use games::{ContributionGame, Game, MatrixGame, PayoffMode};
