//! GraphicalBandits: the online loop composing the planner and the selective
//! payoff estimator.
//!
//! Each round, the planner runs against the estimator as its oracle. If the
//! estimator abstains, the planner stops immediately, the abstaining query's
//! action part is played, and the observed payoff is fed back — exactly one
//! observation per abstention, and only then. Otherwise the planner's action
//! is played and the estimator learns nothing.
//!
//! Rounds are strictly sequential; independent seeded runs can execute in
//! parallel via [`run_many`].

use std::collections::HashMap;

use num_rational::BigRational;
use num_traits::{FromPrimitive, ToPrimitive};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bestact::{best_action, BestActOutcome, OracleReply, PayoffOracle};
use crate::env::{streams, EnvError, Environment, ExactOptimizer};
use crate::model::{CoefficientVector, DecomposableModel, JointAssignment, ModelError};
use crate::payest::{KwikConfig, KwikLearner, PayEstError, Prediction, SpanLearner};
use crate::treedecomp::TreeDecomposition;

#[derive(Debug, Error)]
pub enum BanditError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("estimator error in round {round}: {source}")]
    Estimator { round: usize, source: PayEstError },
    #[error(transparent)]
    Config(PayEstError),
}

/// Which estimator backs the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMode {
    /// Exact span learner (rational arithmetic); for deterministic payoffs.
    Deterministic,
    /// Ridge-regression KWIK learner; for noisy payoffs.
    Kwik,
}

/// Accuracy/confidence choice: explicit, or tuned to the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamSpec {
    /// epsilon = delta = T^(-1/3), clamped into (0, 1).
    Auto,
    Explicit { epsilon: f64, delta: f64 },
}

impl ParamSpec {
    pub fn resolve(&self, horizon: usize) -> (f64, f64) {
        match *self {
            ParamSpec::Explicit { epsilon, delta } => (epsilon, delta),
            ParamSpec::Auto => {
                let raw = (horizon.max(1) as f64).powf(-1.0 / 3.0);
                let v = raw.clamp(1e-6, 0.5);
                (v, v)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub horizon: usize,
    pub estimator: EstimatorMode,
    pub params: ParamSpec,
    pub seed: u64,
    /// Default joint action used to complete partial queries; `None` means
    /// value 0 for every action variable. Fixed for the whole run.
    #[serde(default)]
    pub defaults: Option<JointAssignment>,
    /// Width threshold multiplier for the KWIK estimator.
    #[serde(default = "default_width_scale")]
    pub kwik_width_scale: f64,
}

fn default_width_scale() -> f64 {
    1.0
}

impl RunConfig {
    pub fn new(horizon: usize, estimator: EstimatorMode, params: ParamSpec, seed: u64) -> Self {
        Self {
            horizon,
            estimator,
            params,
            seed,
            defaults: None,
            kwik_width_scale: default_width_scale(),
        }
    }
}

/// One round of the protocol, as recorded by the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: usize,
    pub context: JointAssignment,
    pub played_action: JointAssignment,
    /// Present exactly when the round was interrupted: only abstention rounds
    /// feed an observation back.
    pub observed_payoff: Option<f64>,
    pub interrupted: bool,
    pub oracle_calls: usize,
    pub instantaneous_regret: f64,
}

/// Counters describing the estimator's run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorStats {
    pub epsilon: f64,
    pub delta: f64,
    pub abstentions: u64,
    pub observations: u64,
    /// Final span dimension (deterministic mode only).
    pub span_dimension: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BanditRun {
    pub records: Vec<RoundRecord>,
    pub stats: EstimatorStats,
}

trait Estimator {
    fn predict(&mut self, phi: &CoefficientVector) -> Prediction<f64>;
    fn observe(&mut self, phi: &CoefficientVector, payoff: f64) -> Result<(), PayEstError>;
    fn abstentions(&self) -> u64;
    fn observations(&self) -> u64;
    fn span_dimension(&self) -> Option<usize>;
}

/// Span learner in exact rational arithmetic behind an f64 interface. Every
/// f64 payoff embeds exactly into a rational, so emitted predictions carry no
/// elimination roundoff at all.
struct ExactSpanEstimator {
    inner: SpanLearner<BigRational>,
    observations: u64,
}

impl Estimator for ExactSpanEstimator {
    fn predict(&mut self, phi: &CoefficientVector) -> Prediction<f64> {
        match self.inner.predict(phi).expect("dimension validated at construction") {
            Prediction::Value(v) => {
                Prediction::Value(v.to_f64().expect("prediction converts to f64"))
            }
            Prediction::Abstain => Prediction::Abstain,
        }
    }

    fn observe(&mut self, phi: &CoefficientVector, payoff: f64) -> Result<(), PayEstError> {
        let exact = BigRational::from_f64(payoff)
            .ok_or_else(|| PayEstError::InvalidParameter(format!("payoff {payoff} not finite")))?;
        self.inner.observe(phi, exact)?;
        self.observations += 1;
        Ok(())
    }

    fn abstentions(&self) -> u64 {
        self.inner.abstain_count()
    }

    fn observations(&self) -> u64 {
        self.observations
    }

    fn span_dimension(&self) -> Option<usize> {
        Some(self.inner.dimension())
    }
}

struct KwikEstimator {
    inner: KwikLearner<f64>,
}

impl Estimator for KwikEstimator {
    fn predict(&mut self, phi: &CoefficientVector) -> Prediction<f64> {
        self.inner.predict(phi).expect("dimension validated at construction")
    }

    fn observe(&mut self, phi: &CoefficientVector, payoff: f64) -> Result<(), PayEstError> {
        self.inner.observe(phi, payoff)
    }

    fn abstentions(&self) -> u64 {
        self.inner.abstain_count()
    }

    fn observations(&self) -> u64 {
        self.inner.observation_count()
    }

    fn span_dimension(&self) -> Option<usize> {
        None
    }
}

struct EstimatorOracle<'a> {
    estimator: &'a mut dyn Estimator,
    model: &'a DecomposableModel,
    abstained: Option<CoefficientVector>,
}

impl PayoffOracle<f64> for EstimatorOracle<'_> {
    fn query(&mut self, x: &JointAssignment) -> OracleReply<f64> {
        let phi = self.model.coefficient_vector(x).expect("oracle queries are complete");
        match self.estimator.predict(&phi) {
            Prediction::Value(v) => OracleReply::Value(v),
            Prediction::Abstain => {
                self.abstained = Some(phi);
                OracleReply::Abstain
            }
        }
    }
}

/// Runs the full protocol for `config.horizon` rounds.
pub fn run(
    model: &DecomposableModel,
    td: &TreeDecomposition,
    env: &Environment<f64>,
    config: &RunConfig,
) -> Result<BanditRun, BanditError> {
    env.validate(model, config.horizon)?;
    let defaults = match &config.defaults {
        Some(d) => {
            model.check_assigned(d, &model.action_ids())?;
            d.clone()
        }
        None => model.zero_defaults(),
    };
    let (epsilon, delta) = config.params.resolve(config.horizon);
    let mut estimator: Box<dyn Estimator> = match config.estimator {
        EstimatorMode::Deterministic => Box::new(ExactSpanEstimator {
            inner: SpanLearner::new(model.coeff_dim()),
            observations: 0,
        }),
        EstimatorMode::Kwik => {
            let kwik_config = KwikConfig {
                epsilon,
                delta,
                width_scale: config.kwik_width_scale,
                ..KwikConfig::new(epsilon, delta)
            };
            Box::new(KwikEstimator {
                inner: KwikLearner::new(model.coeff_dim(), kwik_config)
                    .map_err(BanditError::Config)?,
            })
        }
    };

    let mut context_rng = ChaCha12Rng::seed_from_u64(config.seed);
    context_rng.set_stream(streams::CONTEXT);
    let mut noise_rng = ChaCha12Rng::seed_from_u64(config.seed);
    noise_rng.set_stream(streams::NOISE);

    let optimizer = ExactOptimizer::new(model, &env.ground_truth);
    let context_ids = model.context_ids();
    let mut optima: HashMap<Vec<usize>, f64> = HashMap::new();

    let mut records = Vec::with_capacity(config.horizon);
    for t in 0..config.horizon {
        let context = env.contexts.context(model, t, &mut context_rng);
        let (sweep, abstained) = {
            let mut oracle =
                EstimatorOracle { estimator: estimator.as_mut(), model, abstained: None };
            let sweep = best_action(model, td, &context, &defaults, &mut oracle);
            (sweep, oracle.abstained)
        };
        let (played, interrupted, observed_payoff) = match sweep.outcome {
            BestActOutcome::Completed { action, .. } => (action, false, None),
            BestActOutcome::Interrupted { played } => {
                let mut full = context.clone();
                full.overlay(&played);
                let payoff =
                    env.ground_truth.sample_payoff(model, &full, &env.noise, &mut noise_rng);
                let phi = abstained.expect("interrupted sweep records the abstaining query");
                estimator
                    .observe(&phi, payoff)
                    .map_err(|source| BanditError::Estimator { round: t, source })?;
                (played, true, Some(payoff))
            }
        };

        let key = context.values_over(&context_ids).expect("context is complete");
        let optimum = *optima
            .entry(key)
            .or_insert_with(|| optimizer.best_action(&context).1);
        let mut full = context.clone();
        full.overlay(&played);
        let instantaneous_regret = optimum - env.ground_truth.payoff(model, &full);
        debug_assert!(instantaneous_regret >= 0.0);

        records.push(RoundRecord {
            t,
            context,
            played_action: played,
            observed_payoff,
            interrupted,
            oracle_calls: sweep.oracle_calls,
            instantaneous_regret,
        });
    }

    let stats = EstimatorStats {
        epsilon,
        delta,
        abstentions: estimator.abstentions(),
        observations: estimator.observations(),
        span_dimension: estimator.span_dimension(),
    };
    Ok(BanditRun { records, stats })
}

/// Prefix sums of instantaneous regret.
pub fn cumulative_regret(records: &[RoundRecord]) -> Vec<f64> {
    let mut total = 0.0;
    records
        .iter()
        .map(|r| {
            total += r.instantaneous_regret;
            total
        })
        .collect()
}

/// Runs one config across several seeds on a bounded worker pool. Results
/// are in seed order and identical to sequential execution.
pub fn run_many(
    model: &DecomposableModel,
    td: &TreeDecomposition,
    env: &Environment<f64>,
    base: &RunConfig,
    seeds: &[u64],
    workers: usize,
) -> Result<Vec<BanditRun>, BanditError> {
    let workers = workers.max(1).min(seeds.len().max(1));
    if workers <= 1 || seeds.len() <= 1 {
        return seeds
            .iter()
            .map(|&seed| run(model, td, env, &RunConfig { seed, ..base.clone() }))
            .collect();
    }
    let mut results: Vec<Option<Result<BanditRun, BanditError>>> =
        (0..seeds.len()).map(|_| None).collect();
    let slots: Vec<std::sync::Mutex<&mut Option<Result<BanditRun, BanditError>>>> =
        results.iter_mut().map(std::sync::Mutex::new).collect();
    std::thread::scope(|scope| {
        for worker in 0..workers {
            let slots = &slots;
            let base = base.clone();
            scope.spawn(move || {
                for (i, &seed) in seeds.iter().enumerate() {
                    if i % workers != worker {
                        continue;
                    }
                    let outcome = run(model, td, env, &RunConfig { seed, ..base.clone() });
                    **slots[i].lock().unwrap() = Some(outcome);
                }
            });
        }
    });
    results.into_iter().map(|r| r.expect("every seed slot is filled")).collect()
}
