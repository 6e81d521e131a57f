//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Errors surfaced by model construction, filtering, loss evaluation,
/// strategies and the evaluation harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row} is not stochastic (sum = {sum})")]
    NonStochasticRow { row: usize, sum: f64 },

    #[error("matrix entry ({row}, {col}) is negative: {value}")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error("matrix is not square: {rows} rows, {cols} columns")]
    NotSquare { rows: usize, cols: usize },

    #[error("reducible chain: stationary distribution is not unique")]
    ReducibleChain,

    #[error("stationary solver did not reach tolerance {tol} within {cap} iterations")]
    StationaryNoConvergence { tol: f64, cap: usize },

    #[error("bit depth must be in 1..=63, got {0}")]
    InvalidBitDepth(u32),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("horizon must be >= 1")]
    InvalidHorizon,

    #[error("degenerate observation at step {step}: zero likelihood under the predicted law")]
    DegenerateObservation { step: usize },

    #[error("particle degeneracy at step {step}: all weights are zero")]
    ParticleDegeneracy { step: usize },

    #[error("degenerate window: zero likelihood for the observed window")]
    DegenerateWindow,

    #[error("observation symbol {symbol} outside alphabet of size {alphabet}")]
    SymbolOutOfAlphabet { symbol: u32, alphabet: usize },

    #[error("belief is not a probability vector: {0}")]
    InvalidBelief(String),

    #[error("lag {lag} exceeds window length {window}")]
    LagExceedsWindow { lag: usize, window: usize },

    #[error("loss window out of path range at time {k}: touches index {index}")]
    WindowOutOfRange { k: i64, index: i64 },

    #[error("decision outside the loss grid: {0}")]
    DecisionOutsideGrid(String),

    #[error("decision grid is empty")]
    EmptyGrid,

    #[error("operation requires a state-only loss; {loss} reads other coordinates")]
    StateOnlyRequired { loss: String },

    #[error("loss {loss} is incompatible with model {model}")]
    LossModelMismatch { loss: String, model: String },

    #[error("model {0} has no finite hidden-state representation")]
    NoFiniteRepresentation(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("strategy {strategy} cannot run on model {model}: {reason}")]
    StrategyUnsupported {
        strategy: String,
        model: String,
        reason: String,
    },

    #[error("trajectory mismatch: {0}")]
    TrajectoryMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
