//! Structure learning for discrete pairwise Markov random fields.
//!
//! The library grows a sparse MRF edge set incrementally: a group-ℓ1
//! regularized objective yields a per-edge activation test, and learners
//! alternate between activating violating edges and re-optimizing the
//! active parameters. Three learners are provided:
//!
//! - [`learners::edge_grafting`]: exhaustive scoring of every candidate
//!   edge each round, activating the worst violator.
//! - [`learners::best_choice_edge_grafting`]: streaming candidate tests
//!   fed by a prioritized search space, with a bounded reservoir of
//!   violating edges from which activations are drawn.
//! - [`learners::first_hit`]: the degenerate size-one-reservoir variant
//!   that activates the first violating edge it sees.
//!
//! Supporting pieces: exact-enumeration and loopy-BP inference engines,
//! pseudolikelihood quantities, a synthetic data pipeline (scale-free
//! graph generation, parameter sampling, Gibbs sampling), and work-counter
//! instrumentation for comparing the learners' sufficient-statistics cost.

pub mod data;
pub mod heap;
pub mod inference;
pub mod learners;
pub mod model;
pub mod objective;
pub mod search;
pub mod synthetic;

pub use data::{DiscreteDataset, SufficientStatsStore};
pub use inference::{Beliefs, EngineConfig, EngineKind};
pub use learners::{LearnerConfig, Method, RunTrace};
pub use model::{EdgeId, MrfModel, VariableSpec};
pub use objective::{OptimizerConfig, RegularizationParams};

/// Library-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid variable spec: {0}")]
    InvalidSpec(String),
    #[error("self-loop edge on variable {0}")]
    SelfLoop(usize),
    #[error("edge {0} is already active")]
    DuplicateActivation(EdgeId),
    #[error("operation requires at least two variables")]
    TooFewVariables,
    #[error("invalid dataset: {0}")]
    InvalidData(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("joint state space of {0} configurations exceeds the exact-inference cap of {1}")]
    StateSpaceTooLarge(u128, u64),
    #[error("line-search step underflow at inner iteration {0}")]
    StepUnderflow(usize),
    #[error("search space exhausted")]
    SearchExhausted,
    #[error("priority-queue refill requires an empty queue")]
    RefillNonEmptyHeap,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
