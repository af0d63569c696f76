//! Bayes-optimal information filtering with periodic user visits.
//!
//! Items from `k` categories queue between a user's visits; at each visit
//! the filter chooses how many queued items of each category to forward
//! and learns from the user's relevance feedback through Beta posteriors.
//! The crate solves the single-category problem with certified value
//! brackets ([`dp`]), turns the solutions into Lagrange-multiplier indices
//! and the MDP-IF ranked list ([`index`]), bounds the budget-constrained
//! problem by Lagrangian relaxation ([`lagrangian`]), and compares MDP-IF
//! with UCB and pure exploitation by Monte Carlo ([`policy`], [`sim`]).

pub mod dp;
pub mod index;
pub mod lagrangian;
pub mod error;
pub mod model;
pub mod policy;
pub mod rng;
pub mod scenarios;
pub mod sim;

pub use error::{Error, Result};
