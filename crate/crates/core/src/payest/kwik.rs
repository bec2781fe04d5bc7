//! KWIK-style noisy payoff estimator: online ridge regression with a
//! confidence-width abstention test.
//!
//! The state is the inverse regularized Gram matrix `A^-1` with
//! `A = lambda*I + sum phi phi^T`, the moment vector `b = sum y*phi`, and the
//! fitted weights `A^-1 b`. A query's width is `sqrt(phi^T A^-1 phi)`; the
//! learner predicts (clamped to [0, 1]) only when the width is at most
//! `width_scale * epsilon`. Coefficient vectors are 0/1 with one indicator
//! per scope block, so width evaluation touches only the submatrix indexed by
//! the query's nonzeros and observations are Sherman-Morrison rank-one
//! updates.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{PayEstError, Prediction};
use crate::model::CoefficientVector;
use crate::scalar::Real;

const SNAPSHOT_FORMAT: &str = "graphbandit-kwik-v1";

fn default_lambda() -> f64 {
    1.0
}

fn default_width_scale() -> f64 {
    1.0
}

/// Accuracy, confidence, and regularization parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KwikConfig {
    /// Target prediction accuracy.
    pub epsilon: f64,
    /// Target failure probability over a run (validated empirically).
    pub delta: f64,
    /// Ridge regularizer.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Width threshold as a multiple of `epsilon`.
    #[serde(default = "default_width_scale")]
    pub width_scale: f64,
}

impl KwikConfig {
    pub fn new(epsilon: f64, delta: f64) -> Self {
        Self { epsilon, delta, lambda: default_lambda(), width_scale: default_width_scale() }
    }

    pub fn validate(&self) -> Result<(), PayEstError> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(PayEstError::InvalidParameter(format!(
                "epsilon {} not in (0, 1)",
                self.epsilon
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(PayEstError::InvalidParameter(format!(
                "delta {} not in (0, 1)",
                self.delta
            )));
        }
        if !self.lambda.is_finite() || self.lambda <= 0.0 {
            return Err(PayEstError::InvalidParameter(format!(
                "lambda {} must be positive",
                self.lambda
            )));
        }
        if !self.width_scale.is_finite() || self.width_scale <= 0.0 {
            return Err(PayEstError::InvalidParameter(format!(
                "width_scale {} must be positive",
                self.width_scale
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KwikLearner<T> {
    config: KwikConfig,
    dim: usize,
    /// A^-1, row-major, symmetric positive definite.
    gram_inv: Vec<T>,
    /// b = sum of payoff-weighted coefficient vectors.
    moment: Vec<T>,
    /// Cached A^-1 b, refreshed on every observation.
    weights: Vec<T>,
    query_count: u64,
    abstain_count: u64,
    observation_count: u64,
}

impl<T: Real> KwikLearner<T> {
    pub fn new(dim: usize, config: KwikConfig) -> Result<Self, PayEstError> {
        config.validate()?;
        let mut gram_inv = vec![T::zero(); dim * dim];
        let inv_lambda = T::one() / T::from_f64(config.lambda).unwrap();
        for i in 0..dim {
            gram_inv[i * dim + i] = inv_lambda;
        }
        Ok(Self {
            config,
            dim,
            gram_inv,
            moment: vec![T::zero(); dim],
            weights: vec![T::zero(); dim],
            query_count: 0,
            abstain_count: 0,
            observation_count: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn config(&self) -> &KwikConfig {
        &self.config
    }

    pub fn query_count(&self) -> u64 {
        self.query_count
    }

    pub fn abstain_count(&self) -> u64 {
        self.abstain_count
    }

    pub fn observation_count(&self) -> u64 {
        self.observation_count
    }

    /// Width threshold below which the learner predicts.
    pub fn threshold(&self) -> T {
        T::from_f64(self.config.width_scale * self.config.epsilon).unwrap()
    }

    fn check_dim(&self, phi: &CoefficientVector) -> Result<(), PayEstError> {
        if phi.dim() != self.dim {
            return Err(PayEstError::DimensionMismatch { expected: self.dim, found: phi.dim() });
        }
        Ok(())
    }

    /// Confidence width sqrt(phi^T A^-1 phi).
    pub fn width(&self, phi: &CoefficientVector) -> T {
        let mut acc = T::zero();
        for &i in phi.indices() {
            for &j in phi.indices() {
                acc = acc + self.gram_inv[i * self.dim + j];
            }
        }
        acc.max(T::zero()).sqrt()
    }

    pub fn predict(&mut self, phi: &CoefficientVector) -> Result<Prediction<T>, PayEstError> {
        self.check_dim(phi)?;
        self.query_count += 1;
        if self.width(phi) <= self.threshold() {
            let mut estimate = T::zero();
            for &i in phi.indices() {
                estimate = estimate + self.weights[i];
            }
            Ok(Prediction::Value(estimate.max(T::zero()).min(T::one())))
        } else {
            self.abstain_count += 1;
            Ok(Prediction::Abstain)
        }
    }

    /// Rank-one update with the observation that follows an abstention.
    pub fn observe(&mut self, phi: &CoefficientVector, payoff: T) -> Result<(), PayEstError> {
        self.check_dim(phi)?;
        if payoff < T::zero() || payoff > T::one() {
            return Err(PayEstError::PayoffOutOfRange {
                payoff: payoff.to_f64().unwrap_or(f64::NAN),
            });
        }
        let n = self.dim;
        // u = A^-1 phi: sum of the indicator columns.
        let u: Vec<T> = (0..n)
            .map(|row| {
                phi.indices()
                    .iter()
                    .fold(T::zero(), |acc, &j| acc + self.gram_inv[row * n + j])
            })
            .collect();
        let mut denom = T::one();
        for &i in phi.indices() {
            denom = denom + u[i];
        }
        for (row, ur) in u.iter().enumerate() {
            if ur.is_zero() {
                continue;
            }
            let scaled = *ur / denom;
            for (slot, uc) in self.gram_inv[row * n..(row + 1) * n].iter_mut().zip(&u) {
                *slot = *slot - scaled * *uc;
            }
        }
        for &i in phi.indices() {
            self.moment[i] = self.moment[i] + payoff;
        }
        // Refresh the cached weights.
        for (row, w) in self.weights.iter_mut().enumerate() {
            *w = self.gram_inv[row * n..(row + 1) * n]
                .iter()
                .zip(&self.moment)
                .fold(T::zero(), |acc, (a, b)| acc + *a * *b);
        }
        self.observation_count += 1;
        Ok(())
    }
}

impl<T: Real + Serialize> KwikLearner<T> {
    pub fn to_snapshot(&self) -> String {
        serde_json::to_string(&Snapshot { format: SNAPSHOT_FORMAT.to_string(), state: self })
            .expect("kwik state serializes")
    }
}

impl<T: Real + DeserializeOwned> KwikLearner<T> {
    pub fn from_snapshot(json: &str) -> Result<Self, PayEstError> {
        let snap: Snapshot<KwikLearner<T>> = serde_json::from_str(json)?;
        if snap.format != SNAPSHOT_FORMAT {
            return Err(PayEstError::SnapshotFormat {
                expected: SNAPSHOT_FORMAT.to_string(),
                found: snap.format,
            });
        }
        Ok(snap.state)
    }
}

#[derive(Serialize, Deserialize)]
struct Snapshot<S> {
    format: String,
    state: S,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn phi(indices: Vec<usize>, dim: usize) -> CoefficientVector {
        CoefficientVector::new(indices, dim)
    }

    #[test]
    fn fresh_state_width_is_root_of_ones() {
        let learner = KwikLearner::<f64>::new(16, KwikConfig::new(0.1, 0.1)).unwrap();
        let q = phi(vec![0, 4, 8, 12], 16);
        assert_eq!(learner.width(&q), 2.0);
    }

    #[test]
    fn fresh_state_abstains() {
        let mut learner = KwikLearner::<f64>::new(16, KwikConfig::new(0.2, 0.1)).unwrap();
        let q = phi(vec![0, 4, 8, 12], 16);
        assert!(learner.predict(&q).unwrap().is_abstain());
        assert_eq!(learner.abstain_count(), 1);
        assert_eq!(learner.query_count(), 1);
    }

    #[test]
    fn repeated_noiseless_observations_converge() {
        // Closed form: after n observations of the same phi with q ones,
        // width^2 = q / (lambda + n q) and the estimate is y * nq/(lambda + nq).
        let eps = 0.1;
        let config = KwikConfig::new(eps, 0.1);
        let mut learner = KwikLearner::<f64>::new(8, config).unwrap();
        let q = phi(vec![1, 3, 5, 7], 8);
        let y = 0.625;
        let ones = 4.0;
        let n = 10 * ((ones / (eps * eps)).ceil() as usize);
        for _ in 0..n {
            learner.observe(&q, y).unwrap();
        }
        let expected_width = (ones / (1.0 + n as f64 * ones)).sqrt();
        assert!((learner.width(&q) - expected_width).abs() < 1e-9);
        match learner.predict(&q).unwrap() {
            Prediction::Value(v) => {
                let expected = y * (n as f64 * ones) / (1.0 + n as f64 * ones);
                assert!((v - expected).abs() < 1e-9);
                assert!((v - y).abs() <= eps);
            }
            Prediction::Abstain => panic!("width {} <= {}", learner.width(&q), eps),
        }
    }

    #[test]
    fn width_shrinks_on_observation_and_is_monotone() {
        let mut learner = KwikLearner::<f64>::new(8, KwikConfig::new(0.1, 0.1)).unwrap();
        let q = phi(vec![0, 2], 8);
        let mut last = learner.width(&q);
        for _ in 0..50 {
            learner.observe(&q, 0.5).unwrap();
            let now = learner.width(&q);
            assert!(now < last);
            last = now;
        }
    }

    #[test]
    fn orthogonal_width_is_unchanged() {
        let mut learner = KwikLearner::<f64>::new(8, KwikConfig::new(0.1, 0.1)).unwrap();
        let q = phi(vec![0, 2], 8);
        let orthogonal = phi(vec![1, 3], 8);
        let before = learner.width(&orthogonal);
        learner.observe(&q, 0.5).unwrap();
        assert_eq!(learner.width(&orthogonal), before);
    }

    #[test]
    fn cross_width_shrinks_for_overlapping_queries() {
        let mut learner = KwikLearner::<f64>::new(8, KwikConfig::new(0.1, 0.1)).unwrap();
        let q = phi(vec![0, 2], 8);
        let overlapping = phi(vec![0, 3], 8);
        let before = learner.width(&overlapping);
        learner.observe(&q, 0.5).unwrap();
        assert!(learner.width(&overlapping) < before);
    }

    #[test]
    fn payoff_out_of_range_rejected() {
        let mut learner = KwikLearner::<f64>::new(4, KwikConfig::new(0.1, 0.1)).unwrap();
        let q = phi(vec![0, 1], 4);
        assert!(matches!(
            learner.observe(&q, 1.5),
            Err(PayEstError::PayoffOutOfRange { .. })
        ));
        assert!(matches!(
            learner.observe(&q, -0.1),
            Err(PayEstError::PayoffOutOfRange { .. })
        ));
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(KwikLearner::<f64>::new(4, KwikConfig::new(0.0, 0.1)).is_err());
        assert!(KwikLearner::<f64>::new(4, KwikConfig::new(0.1, 1.0)).is_err());
        let bad = KwikConfig { lambda: 0.0, ..KwikConfig::new(0.1, 0.1) };
        assert!(KwikLearner::<f64>::new(4, bad).is_err());
    }

    #[test]
    fn gram_inverse_stays_symmetric() {
        let mut learner = KwikLearner::<f64>::new(6, KwikConfig::new(0.1, 0.1)).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..200 {
            let a = rng.random_range(0..3);
            let b = 3 + rng.random_range(0..3);
            learner.observe(&phi(vec![a, b], 6), rng.random::<f64>()).unwrap();
        }
        for i in 0..6 {
            for j in 0..6 {
                let d = (learner.gram_inv[i * 6 + j] - learner.gram_inv[j * 6 + i]).abs();
                assert!(d < 1e-9);
            }
        }
    }

    #[test]
    fn snapshot_roundtrip_is_bit_exact() {
        let mut learner = KwikLearner::<f64>::new(6, KwikConfig::new(0.1, 0.1)).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..40 {
            let a = rng.random_range(0..3);
            let b = 3 + rng.random_range(0..3);
            learner.observe(&phi(vec![a, b], 6), rng.random::<f64>()).unwrap();
        }
        let snapshot = learner.to_snapshot();
        let mut restored = KwikLearner::<f64>::from_snapshot(&snapshot).unwrap();
        assert_eq!(learner, restored);
        let q = phi(vec![0, 3], 6);
        for _ in 0..20 {
            assert_eq!(learner.predict(&q).unwrap(), restored.predict(&q).unwrap());
            learner.observe(&q, 0.25).unwrap();
            restored.observe(&q, 0.25).unwrap();
        }
        assert_eq!(learner, restored);
    }

    /// Abstain counts roughly quadruple when epsilon halves.
    #[test]
    fn abstain_scaling_tracks_inverse_epsilon_squared() {
        let dim = 8usize;
        let family: Vec<CoefficientVector> =
            (0..4).map(|i| phi(vec![2 * i, 2 * i + 1], dim)).collect();
        let mut counts = Vec::new();
        for &eps in &[0.2f64, 0.1] {
            let mut total = 0u64;
            for seed in 0..10u64 {
                let mut learner =
                    KwikLearner::<f64>::new(dim, KwikConfig::new(eps, 0.1)).unwrap();
                let mut rng = ChaCha12Rng::seed_from_u64(seed);
                let horizon = (40.0 / (eps * eps)) as usize;
                for _ in 0..horizon {
                    let q = &family[rng.random_range(0..family.len())];
                    if learner.predict(q).unwrap().is_abstain() {
                        let draw = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
                        learner.observe(q, draw).unwrap();
                    }
                }
                total += learner.abstain_count();
            }
            counts.push(total as f64 / 10.0);
        }
        let ratio = counts[1] / counts[0];
        assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}, counts {counts:?}");
    }
}
