//! Contextual bandits whose expected payoff decomposes over a known
//! interaction graph.
//!
//! The library plans near-optimal joint actions by dynamic programming over a
//! tree decomposition of the action subgraph, using only a global payoff
//! oracle ([`bestact`]); learns payoffs through selective prediction — a
//! deterministic span learner or a KWIK-style ridge regressor over indicator
//! coefficient vectors ([`payest`]); composes the two into an online
//! no-regret loop ([`bandit`]); and measures regret against exact optima
//! computed by a seeded simulator ([`env`]). Rank diagnostics and regret
//! summaries live in [`analysis`], the batch experiment runner in [`cli`].
//!
//! The numeric core is generic over [`scalar::Scalar`], so the same
//! algorithms run in `f64`/`f32` and, where tests demand exactness, in
//! arbitrary-precision rationals. The aliases below fix the concrete types
//! used by the simulator and CLI.

pub mod analysis;
pub mod bandit;
pub mod bestact;
pub mod cli;
pub mod env;
pub mod linalg;
pub mod model;
pub mod payest;
pub mod scalar;
pub mod treedecomp;

pub use model::{
    ActionSubgraph, CoefficientVector, DecomposableModel, InteractionGraph, JointAssignment,
    ModelError, Scope, VariableKind, VariableSpec,
};
pub use treedecomp::{decompose, validate, TreeDecomposition, Violation};

/// Exact scalar used by the deterministic estimator and authoritative tests.
pub type Exact = num_rational::BigRational;

/// Ground truth in the simulator's default scalar.
pub type GroundTruth = env::GroundTruth<f64>;
/// Simulation environment in the default scalar.
pub type Environment = env::Environment<f64>;
/// Span learner in the default scalar (tolerance-based elimination).
pub type SpanLearner = payest::SpanLearner<f64>;
/// Span learner in exact rational arithmetic.
pub type ExactSpanLearner = payest::SpanLearner<Exact>;
/// KWIK learner in the default scalar.
pub type KwikLearner = payest::KwikLearner<f64>;
