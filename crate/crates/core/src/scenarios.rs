//! Preset experiment settings.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CategoryParams, ModelParams, PosteriorState};
use crate::sim::{RewardMode, ScenarioConfig};

/// Category counts swept in the policy comparison.
pub const K_SWEEP: [usize; 5] = [5, 10, 30, 50, 100];

/// Homogeneous comparison scenarios: `M = 5`, `c = 0.49`, per-visit budget `M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// `gamma = 0.95`, `xi = 0.1`, prior `(1, 1)`.
    A,
    /// `gamma = 0.99`, `xi = 0.1`, prior `(1, 1)`.
    B,
    /// `gamma = 0.99`, `xi = 0.2`, prior `(1, 1)`.
    C,
    /// `gamma = 0.99`, `xi = 0.1`, prior `(5, 5)`.
    D,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::A, Scenario::B, Scenario::C, Scenario::D];
    pub const MAX_FORWARD: u32 = 5;
    pub const COST: f64 = 0.49;

    /// `(gamma, xi, alpha0, beta0)`.
    pub fn parameters(&self) -> (f64, f64, f64, f64) {
        match self {
            Self::A => (0.95, 0.1, 1.0, 1.0),
            Self::B => (0.99, 0.1, 1.0, 1.0),
            Self::C => (0.99, 0.2, 1.0, 1.0),
            Self::D => (0.99, 0.1, 5.0, 5.0),
        }
    }

    pub fn category(&self) -> CategoryParams {
        let (gamma, xi, a, b) = self.parameters();
        CategoryParams { gamma, xi, alpha0: a, beta0: b }
    }

    pub fn model(&self, k: usize) -> ModelParams {
        ModelParams {
            categories: vec![self.category(); k],
            cost: Some(Self::COST),
            max_forward: Self::MAX_FORWARD,
            budget: true,
        }
    }

    pub fn config(&self, k: usize, num_users: u64, seed: u64, reward_mode: RewardMode) -> ScenarioConfig {
        ScenarioConfig {
            model: self.model(k),
            num_users,
            seed,
            reward_mode,
            correlated_queues: false,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::A => "a",
            Self::B => "b",
            Self::C => "c",
            Self::D => "d",
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Self::A),
            "b" => Ok(Self::B),
            "c" => Ok(Self::C),
            "d" => Ok(Self::D),
            other => Err(Error::Config(format!("unknown scenario '{other}' (expected a, b, c, or d)"))),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The two-category ranking example: category O at `(2, 1)` and category
/// Δ at `(2, 2)`, `gamma = 0.99`, `xi = 0.2`, `M = 10`.
pub mod ranking_example {
    use super::*;

    pub const GAMMA: f64 = 0.99;
    pub const XI: f64 = 0.2;
    pub const MAX_FORWARD: u32 = 10;
    pub const BUDGET: u32 = 5;
    pub const COST: f64 = 0.75;
    /// Category labels in order.
    pub const LABELS: [&str; 2] = ["O", "Δ"];

    pub fn states() -> [PosteriorState; 2] {
        [
            PosteriorState { alpha: 2.0, beta: 1.0 },
            PosteriorState { alpha: 2.0, beta: 2.0 },
        ]
    }

    /// Categories rooted at the example states.
    pub fn categories() -> [CategoryParams; 2] {
        states().map(|s| CategoryParams {
            gamma: GAMMA,
            xi: XI,
            alpha0: s.alpha,
            beta0: s.beta,
        })
    }
}
