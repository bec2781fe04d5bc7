//! PayEst: selective payoff prediction over coefficient vectors.
//!
//! Two estimators back the same protocol — on each query, either emit a
//! payoff estimate or abstain, and receive an observation only after
//! abstaining:
//!
//! * [`SpanLearner`] for deterministic payoffs: predicts exactly when the
//!   query lies in the linear span of previously observed coefficient
//!   vectors, so its abstention count is bounded by the rank of the
//!   coefficient matrix.
//! * [`KwikLearner`] for noisy payoffs: ridge regression with a confidence
//!   width test, predicting only when the width is below a threshold
//!   proportional to the target accuracy.
//!
//! Both states serialize to versioned JSON snapshots that reproduce
//! subsequent predictions bit for bit.

mod kwik;
mod span;

pub use kwik::{KwikConfig, KwikLearner};
pub use span::SpanLearner;

use thiserror::Error;

/// A selective prediction: a value or the abstention symbol.
#[derive(Debug, Clone, PartialEq)]
pub enum Prediction<T> {
    Value(T),
    Abstain,
}

impl<T> Prediction<T> {
    pub fn value(&self) -> Option<&T> {
        match self {
            Prediction::Value(v) => Some(v),
            Prediction::Abstain => None,
        }
    }

    pub fn is_abstain(&self) -> bool {
        matches!(self, Prediction::Abstain)
    }
}

#[derive(Debug, Error)]
pub enum PayEstError {
    #[error("coefficient dimension {found} does not match learner dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("observation for a vector already in the span")]
    ObservationInSpan,
    #[error("payoff {payoff} outside [0, 1]")]
    PayoffOutOfRange { payoff: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("snapshot format {found:?} unsupported (expected {expected:?})")]
    SnapshotFormat { expected: String, found: String },
    #[error("snapshot parse error: {0}")]
    SnapshotParse(#[from] serde_json::Error),
}
