//! Simulated Nature: hidden ground-truth potentials, context generation,
//! payoff noise, and exact optimum computation for regret scoring.
//!
//! Reproducibility: every random draw comes from a ChaCha12 generator seeded
//! from the run (or model) seed, with one stream per role — stream 0 for
//! model generation, stream 1 for contexts, stream 2 for noise.

mod exact;
mod generate;

pub use exact::{induced_graph, optimize, optimize_on, Direction};
pub use generate::{generate, GeneratorSpec, GraphFamily};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Rref;
use crate::model::{DecomposableModel, JointAssignment};
use crate::scalar::Scalar;
use crate::treedecomp::{decompose, TreeDecomposition};

/// RNG stream ids, one per randomness role.
pub mod streams {
    pub const MODEL: u64 = 0;
    pub const CONTEXT: u64 = 1;
    pub const NOISE: u64 = 2;
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("table for scope {scope} has {found} entries, expected {expected}")]
    TableShape { scope: usize, expected: usize, found: usize },
    #[error("expected {expected} tables, found {found}")]
    TableCount { expected: usize, found: usize },
    #[error("payoff range [{min}, {max}] escapes [0, 1]")]
    RangeEscapes { min: f64, max: f64 },
    #[error("replay sequence has {len} contexts but the horizon is {horizon}")]
    ReplayTooShort { len: usize, horizon: usize },
    #[error("replay context {index} is invalid: {reason}")]
    BadReplayContext { index: usize, reason: String },
    #[error("probabilities for variable {variable} sum to {sum}, expected 1")]
    BadProbabilitySum { variable: usize, sum: f64 },
    #[error("negative probability for variable {variable}")]
    NegativeProbability { variable: usize },
    #[error("probability row count {found} does not match context variable count {expected}")]
    ProbabilityRows { expected: usize, found: usize },
    #[error("probability row for variable {variable} has {found} entries, expected {expected}")]
    ProbabilityRowLen { variable: usize, expected: usize, found: usize },
    #[error("support is empty")]
    EmptySupport,
    #[error("support weights sum to {sum}, expected 1")]
    BadSupportSum { sum: f64 },
    #[error("support atom {index} is invalid: {reason}")]
    BadSupportAtom { index: usize, reason: String },
    #[error("infeasible generator spec: {reason}")]
    InfeasibleSpec { reason: String },
    #[error("target width {width} is below the arity bound {arity}")]
    WidthBelowArity { width: usize, arity: usize },
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

/// Hidden potential tables, one per scope, in the model's block layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth<T> {
    tables: Vec<Vec<T>>,
}

impl<T: Scalar> GroundTruth<T> {
    /// Shape-checked tables. The payoff range is not certified; use
    /// [`GroundTruth::certified`] when the `[0, 1]` invariant is required.
    pub fn from_tables(model: &DecomposableModel, tables: Vec<Vec<T>>) -> Result<Self, EnvError> {
        if tables.len() != model.scopes().len() {
            return Err(EnvError::TableCount {
                expected: model.scopes().len(),
                found: tables.len(),
            });
        }
        for (s, table) in tables.iter().enumerate() {
            if table.len() != model.block_size(s) {
                return Err(EnvError::TableShape {
                    scope: s,
                    expected: model.block_size(s),
                    found: table.len(),
                });
            }
        }
        Ok(Self { tables })
    }

    /// Shape-checked tables whose payoff range is certified to lie in
    /// `[0, 1]` by an exact sweep over the full interaction graph.
    pub fn certified(model: &DecomposableModel, tables: Vec<Vec<T>>) -> Result<Self, EnvError> {
        let gt = Self::from_tables(model, tables)?;
        let (min, max) = gt.payoff_range(model);
        let zero = T::zero();
        let one = T::one();
        if min < zero || max > one {
            return Err(EnvError::RangeEscapes {
                min: min.to_f64().unwrap_or(f64::NAN),
                max: max.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(gt)
    }

    pub fn tables(&self) -> &[Vec<T>] {
        &self.tables
    }

    /// F(x): sum of table entries selected by the complete assignment.
    pub fn payoff(&self, model: &DecomposableModel, x: &JointAssignment) -> T {
        let mut total = T::zero();
        for s in 0..self.tables.len() {
            total = total + self.tables[s][model.scope_assignment_index(s, x)].clone();
        }
        total
    }

    /// The flattened payoff vector `f`; `F(x)` is the sum of its entries at
    /// the positions of `v(x)`.
    pub fn payoff_vector(&self) -> Vec<T> {
        self.tables.iter().flatten().cloned().collect()
    }

    /// Exact (min, max) of F over all complete assignments.
    pub fn payoff_range(&self, model: &DecomposableModel) -> (T, T) {
        let all: Vec<usize> = (0..model.n_variables()).collect();
        let empty = JointAssignment::unassigned(model.n_variables());
        let (_, min) = optimize(model, &self.tables, &empty, &all, Direction::Min);
        let (_, max) = optimize(model, &self.tables, &empty, &all, Direction::Max);
        (min, max)
    }

    /// Exact best joint action for a context, with its optimal value.
    pub fn exact_best_action(
        &self,
        model: &DecomposableModel,
        context: &JointAssignment,
    ) -> (JointAssignment, T) {
        model.check_assigned(context, &model.context_ids()).expect("context must be complete");
        optimize(model, &self.tables, context, &model.action_ids(), Direction::Max)
    }

    /// Draws a payoff with expectation F(x) under the given noise model.
    pub fn sample_payoff<R: Rng>(
        &self,
        model: &DecomposableModel,
        x: &JointAssignment,
        noise: &NoiseModel,
        rng: &mut R,
    ) -> T {
        noise.sample(self.payoff(model, x), rng)
    }
}

/// Reusable exact optimizer: decomposes the action subgraph once.
pub struct ExactOptimizer<'a, T> {
    model: &'a DecomposableModel,
    gt: &'a GroundTruth<T>,
    td: TreeDecomposition,
}

impl<'a, T: Scalar> ExactOptimizer<'a, T> {
    pub fn new(model: &'a DecomposableModel, gt: &'a GroundTruth<T>) -> Self {
        let graph = induced_graph(model, &model.action_ids());
        Self { model, gt, td: decompose(&graph) }
    }

    pub fn best_action(&self, context: &JointAssignment) -> (JointAssignment, T) {
        self.model
            .check_assigned(context, &self.model.context_ids())
            .expect("context must be complete");
        optimize_on(self.model, &self.gt.tables, context, &self.td, Direction::Max)
    }
}

/// Payoff noise applied to F(x).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseModel {
    /// Observations equal F(x) exactly.
    Noiseless,
    /// 0/1 draw with mean F(x); requires F(x) in [0, 1].
    Bernoulli,
    /// F(x) + Uniform(-half_width, half_width), falling back to a Bernoulli
    /// draw near the boundary so the mean is always preserved.
    TruncatedAdditive { half_width: f64 },
}

impl NoiseModel {
    pub fn sample<T: Scalar, R: Rng>(&self, mean: T, rng: &mut R) -> T {
        match self {
            NoiseModel::Noiseless => mean,
            NoiseModel::Bernoulli => {
                let p = mean.to_f64().expect("payoff must convert to f64");
                if rng.random_bool(p) {
                    T::one()
                } else {
                    T::zero()
                }
            }
            NoiseModel::TruncatedAdditive { half_width } => {
                let m = mean.to_f64().expect("payoff must convert to f64");
                if m >= *half_width && m <= 1.0 - *half_width {
                    let u: f64 = rng.random_range(-*half_width..=*half_width);
                    mean + T::from_f64(u).expect("uniform draw converts")
                } else if rng.random_bool(m) {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }
}

/// Weighted joint context for a finite-support distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedContext {
    /// Values over the context variables, ascending by id.
    pub values: Vec<usize>,
    pub weight: f64,
}

/// Distribution over joint contexts for i.i.d. mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ContextDistribution {
    /// Independent categorical per context variable; rows ascending by id.
    PerVariable { probs: Vec<Vec<f64>> },
    /// Weighted finite support over joint contexts.
    Support { support: Vec<WeightedContext> },
}

/// Where contexts come from: replayed verbatim or sampled i.i.d.
#[derive(Debug, Clone, PartialEq)]
pub enum ContextSource {
    Replay(Vec<JointAssignment>),
    Iid(ContextDistribution),
}

const PROB_SUM_TOLERANCE: f64 = 1e-12;

impl ContextSource {
    pub fn validate(&self, model: &DecomposableModel, horizon: usize) -> Result<(), EnvError> {
        let context_ids = model.context_ids();
        match self {
            ContextSource::Replay(contexts) => {
                if contexts.len() < horizon {
                    return Err(EnvError::ReplayTooShort { len: contexts.len(), horizon });
                }
                for (index, ctx) in contexts.iter().enumerate() {
                    if let Err(e) = model.check_assigned(ctx, &context_ids) {
                        return Err(EnvError::BadReplayContext { index, reason: e.to_string() });
                    }
                }
                Ok(())
            }
            ContextSource::Iid(ContextDistribution::PerVariable { probs }) => {
                if probs.len() != context_ids.len() {
                    return Err(EnvError::ProbabilityRows {
                        expected: context_ids.len(),
                        found: probs.len(),
                    });
                }
                for (row, &id) in probs.iter().zip(&context_ids) {
                    if row.len() != model.domain_size(id) {
                        return Err(EnvError::ProbabilityRowLen {
                            variable: id,
                            expected: model.domain_size(id),
                            found: row.len(),
                        });
                    }
                    if row.iter().any(|&p| p < 0.0) {
                        return Err(EnvError::NegativeProbability { variable: id });
                    }
                    let sum: f64 = row.iter().sum();
                    if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
                        return Err(EnvError::BadProbabilitySum { variable: id, sum });
                    }
                }
                Ok(())
            }
            ContextSource::Iid(ContextDistribution::Support { support }) => {
                if support.is_empty() {
                    return Err(EnvError::EmptySupport);
                }
                let sum: f64 = support.iter().map(|a| a.weight).sum();
                if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
                    return Err(EnvError::BadSupportSum { sum });
                }
                for (index, atom) in support.iter().enumerate() {
                    if atom.weight < 0.0 {
                        return Err(EnvError::BadSupportAtom {
                            index,
                            reason: "negative weight".into(),
                        });
                    }
                    if atom.values.len() != context_ids.len() {
                        return Err(EnvError::BadSupportAtom {
                            index,
                            reason: format!(
                                "expected {} values, found {}",
                                context_ids.len(),
                                atom.values.len()
                            ),
                        });
                    }
                    for (&id, &v) in context_ids.iter().zip(&atom.values) {
                        if v >= model.domain_size(id) {
                            return Err(EnvError::BadSupportAtom {
                                index,
                                reason: format!("value {v} out of range for variable {id}"),
                            });
                        }
                    }
                }
                Ok(())
            }
        }
    }

    /// Context for round `t`. Replay indexes the stored sequence; i.i.d.
    /// modes draw from `rng` (one draw sequence per run, so `t` is unused).
    pub fn context<R: Rng>(
        &self,
        model: &DecomposableModel,
        t: usize,
        rng: &mut R,
    ) -> JointAssignment {
        match self {
            ContextSource::Replay(contexts) => contexts[t].clone(),
            ContextSource::Iid(ContextDistribution::PerVariable { probs }) => {
                let mut ctx = JointAssignment::unassigned(model.n_variables());
                for (row, id) in probs.iter().zip(model.context_ids()) {
                    ctx.set(id, categorical(row, rng));
                }
                ctx
            }
            ContextSource::Iid(ContextDistribution::Support { support }) => {
                let weights: Vec<f64> = support.iter().map(|a| a.weight).collect();
                let atom = &support[categorical(&weights, rng)];
                let mut ctx = JointAssignment::unassigned(model.n_variables());
                for (id, &v) in model.context_ids().into_iter().zip(&atom.values) {
                    ctx.set(id, v);
                }
                ctx
            }
        }
    }
}

fn categorical<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Everything Nature controls for one experiment.
#[derive(Debug, Clone)]
pub struct Environment<T = f64> {
    pub ground_truth: GroundTruth<T>,
    pub contexts: ContextSource,
    pub noise: NoiseModel,
}

impl<T: Scalar> Environment<T> {
    pub fn validate(&self, model: &DecomposableModel, horizon: usize) -> Result<(), EnvError> {
        self.contexts.validate(model, horizon)
    }
}

/// Orders all joint contexts so that earlier contexts expose as much new
/// coefficient rank as possible (greedy; desk scale only).
pub fn rank_greedy_context_order(model: &DecomposableModel) -> Vec<JointAssignment> {
    let contexts = model.joint_contexts();
    let actions = model.joint_actions();
    let mut span = Rref::<f64>::new(model.coeff_dim());
    let mut remaining: Vec<JointAssignment> = contexts;
    let mut order = Vec::with_capacity(remaining.len());
    while !remaining.is_empty() {
        let mut best: Option<(usize, usize)> = None; // (gain, position)
        for (pos, ctx) in remaining.iter().enumerate() {
            let mut probe = span.clone();
            let mut gain = 0usize;
            for action in &actions {
                let mut x = ctx.clone();
                x.overlay(action);
                let phi = model.coefficient_vector(&x).expect("assignment is complete");
                if probe.insert(&phi.to_dense::<f64>(), 0.0) {
                    gain += 1;
                }
            }
            if best.is_none_or(|(bg, _)| gain > bg) {
                best = Some((gain, pos));
            }
        }
        let (_, pos) = best.unwrap();
        let ctx = remaining.remove(pos);
        for action in &actions {
            let mut x = ctx.clone();
            x.overlay(action);
            let phi = model.coefficient_vector(&x).expect("assignment is complete");
            span.insert(&phi.to_dense::<f64>(), 0.0);
        }
        order.push(ctx);
    }
    order
}
