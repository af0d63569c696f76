//! Keyed random streams for reproducible parallel simulation.
//!
//! Every draw in a simulation comes from a ChaCha stream selected by
//! `(seed, user, purpose, category)`, so a user's randomness does not depend
//! on which thread simulates it or on what other users consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Purpose {
    /// Relevance probabilities `theta_x`, one stream per user.
    Theta = 1,
    /// Visit count `N`, one stream per user.
    Visits = 2,
    /// Queue lengths, one stream per user and category.
    Queue = 3,
    /// Item relevance, one stream per user and category.
    Feedback = 4,
    /// Inter-visit gaps for correlated queues, one stream per user.
    Gap = 5,
}

/// Largest category index a stream id can carry.
pub const MAX_CATEGORIES: usize = 1 << 20;
/// Largest user index a stream id can carry.
pub const MAX_USERS: u64 = 1 << 40;

/// The stream for `(seed, user, purpose, category)`.
///
/// Panics if `user >= MAX_USERS` or `category >= MAX_CATEGORIES`; scenario
/// validation rejects such sizes first.
pub fn stream(seed: u64, user: u64, purpose: Purpose, category: usize) -> ChaCha8Rng {
    assert!(user < MAX_USERS, "user index {user} exceeds stream capacity");
    assert!(category < MAX_CATEGORIES, "category index {category} exceeds stream capacity");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(user << 24 | (purpose as u64) << 20 | category as u64);
    rng
}
