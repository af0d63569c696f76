use thiserror::Error;

/// Errors raised by the model, solver, index, and simulation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter lies outside its mathematical domain.
    #[error("parameter out of domain: {0}")]
    Domain(String),

    /// Solver or simulation configuration is invalid.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A posterior state is not on the solved grid.
    #[error("state ({alpha}, {beta}) is off the grid: {reason}")]
    OffGrid {
        alpha: f64,
        beta: f64,
        reason: String,
    },

    /// A simulated user reached a state deeper than the index tables cover.
    #[error("table coverage exceeded: state depth {depth} > covered depth {covered}")]
    Coverage { depth: usize, covered: usize },

    /// A value needed by a recursion was not available yet.
    #[error("internal evaluation order violated: {0}")]
    Order(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
