//! Deterministic span learner: predict iff the query's coefficient vector is
//! in the span of previously observed ones.
//!
//! The basis is kept in reduced row-echelon form; observed payoffs ride along
//! as an augmented column through the same elimination operations, so the
//! estimate for an in-span query is the payoff combination of its (value-wise
//! unique) representation. In exact arithmetic every emitted prediction
//! equals the true payoff; in floating point the elimination uses the
//! scalar's relative pivot tolerance.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{PayEstError, Prediction};
use crate::linalg::Rref;
use crate::model::CoefficientVector;
use crate::scalar::Scalar;

const SNAPSHOT_FORMAT: &str = "graphbandit-span-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanLearner<T> {
    basis: Rref<T>,
    abstain_count: u64,
}

impl<T: Scalar> SpanLearner<T> {
    pub fn new(dim: usize) -> Self {
        Self { basis: Rref::new(dim), abstain_count: 0 }
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Current span dimension (= number of observations accepted).
    pub fn dimension(&self) -> usize {
        self.basis.rank()
    }

    pub fn abstain_count(&self) -> u64 {
        self.abstain_count
    }

    fn check_dim(&self, phi: &CoefficientVector) -> Result<(), PayEstError> {
        if phi.dim() != self.basis.dim() {
            return Err(PayEstError::DimensionMismatch {
                expected: self.basis.dim(),
                found: phi.dim(),
            });
        }
        Ok(())
    }

    pub fn predict(&mut self, phi: &CoefficientVector) -> Result<Prediction<T>, PayEstError> {
        self.check_dim(phi)?;
        let red = self.basis.reduce(&phi.to_dense::<T>(), T::zero());
        if red.in_span {
            Ok(Prediction::Value(-red.aug))
        } else {
            self.abstain_count += 1;
            Ok(Prediction::Abstain)
        }
    }

    /// Accepts the observation that must follow an abstention on `phi`.
    pub fn observe(&mut self, phi: &CoefficientVector, payoff: T) -> Result<(), PayEstError> {
        self.check_dim(phi)?;
        if !self.basis.insert(&phi.to_dense::<T>(), payoff) {
            return Err(PayEstError::ObservationInSpan);
        }
        Ok(())
    }
}

impl<T: Scalar + Serialize> SpanLearner<T> {
    pub fn to_snapshot(&self) -> String {
        serde_json::to_string(&Snapshot { format: SNAPSHOT_FORMAT.to_string(), state: self })
            .expect("span state serializes")
    }
}

impl<T: Scalar + DeserializeOwned> SpanLearner<T> {
    pub fn from_snapshot(json: &str) -> Result<Self, PayEstError> {
        let snap: Snapshot<SpanLearner<T>> = serde_json::from_str(json)?;
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
    use crate::env::{generate, GeneratorSpec, GraphFamily};
    use crate::linalg::Rref;
    use crate::model::DecomposableModel;
    use num_rational::BigRational;
    use num_traits::FromPrimitive;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn small_model(seed: u64) -> (DecomposableModel, crate::env::GroundTruth<f64>) {
        let spec = GeneratorSpec {
            n_action: 3,
            n_context: 2,
            arity: 2,
            domain_size: 2,
            domain_sizes: None,
            graph: GraphFamily::RandomTree,
            seed,
        };
        generate(&spec).unwrap()
    }

    /// Independent rank oracle: lead-indexed elimination basis, one row per
    /// leading position.
    fn brute_rank(columns: &[Vec<f64>]) -> usize {
        let dim = columns[0].len();
        let mut by_lead: Vec<Option<Vec<f64>>> = vec![None; dim];
        let mut rank = 0usize;
        for col in columns {
            let mut v = col.clone();
            for lead in 0..dim {
                if v[lead].abs() <= 1e-9 {
                    continue;
                }
                match &by_lead[lead] {
                    Some(row) => {
                        let factor = v[lead] / row[lead];
                        for (a, b) in v.iter_mut().zip(row) {
                            *a -= factor * b;
                        }
                    }
                    None => {
                        by_lead[lead] = Some(v);
                        rank += 1;
                        break;
                    }
                }
            }
        }
        rank
    }

    #[test]
    fn empty_state_abstains() {
        let mut learner = SpanLearner::<f64>::new(8);
        let phi = CoefficientVector::new(vec![1, 6], 8);
        assert!(learner.predict(&phi).unwrap().is_abstain());
        assert_eq!(learner.abstain_count(), 1);
    }

    #[test]
    fn recalls_observed_vector_exactly() {
        let mut learner = SpanLearner::<f64>::new(8);
        let phi = CoefficientVector::new(vec![1, 6], 8);
        assert!(learner.predict(&phi).unwrap().is_abstain());
        learner.observe(&phi, 0.625).unwrap();
        assert_eq!(learner.predict(&phi).unwrap(), Prediction::Value(0.625));
        assert_eq!(learner.dimension(), 1);
    }

    #[test]
    fn observe_in_span_is_a_protocol_violation() {
        let mut learner = SpanLearner::<f64>::new(4);
        let phi = CoefficientVector::new(vec![0, 2], 4);
        learner.observe(&phi, 0.5).unwrap();
        assert!(matches!(
            learner.observe(&phi, 0.5),
            Err(PayEstError::ObservationInSpan)
        ));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let mut learner = SpanLearner::<f64>::new(4);
        let phi = CoefficientVector::new(vec![0], 3);
        assert!(matches!(
            learner.predict(&phi),
            Err(PayEstError::DimensionMismatch { expected: 4, found: 3 })
        ));
    }

    #[test]
    fn two_observations_make_dimension_two() {
        let mut learner = SpanLearner::<f64>::new(4);
        learner.observe(&CoefficientVector::new(vec![0, 2], 4), 0.25).unwrap();
        learner.observe(&CoefficientVector::new(vec![1, 3], 4), 0.75).unwrap();
        assert_eq!(learner.dimension(), 2);
    }

    #[test]
    fn full_stream_predictions_match_truth_and_rank() {
        for seed in 0..30u64 {
            let (model, gt) = small_model(seed);
            let mut xs = model.complete_assignments();
            let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0xabcd);
            xs.shuffle(&mut rng);

            let columns: Vec<Vec<f64>> = xs
                .iter()
                .map(|x| model.coefficient_vector(x).unwrap().to_dense())
                .collect();
            let rank = brute_rank(&columns);

            let mut learner = SpanLearner::<f64>::new(model.coeff_dim());
            let mut abstains = 0usize;
            for x in &xs {
                let phi = model.coefficient_vector(x).unwrap();
                match learner.predict(&phi).unwrap() {
                    Prediction::Value(v) => {
                        assert!((v - gt.payoff(&model, x)).abs() <= 1e-9, "seed {seed}");
                    }
                    Prediction::Abstain => {
                        abstains += 1;
                        learner.observe(&phi, gt.payoff(&model, x)).unwrap();
                    }
                }
            }
            assert_eq!(abstains, rank, "seed {seed}");
            assert_eq!(learner.dimension(), rank);
            assert_eq!(learner.abstain_count() as usize, rank);
        }
    }

    #[test]
    fn exact_mode_predictions_are_exact() {
        let (model, gt) = small_model(3);
        let q = |v: f64| BigRational::from_f64(v).unwrap();
        let mut learner = SpanLearner::<BigRational>::new(model.coeff_dim());
        for x in model.complete_assignments() {
            let phi = model.coefficient_vector(&x).unwrap();
            match learner.predict(&phi).unwrap() {
                Prediction::Value(v) => assert_eq!(v, q(gt.payoff(&model, &x))),
                Prediction::Abstain => learner.observe(&phi, q(gt.payoff(&model, &x))).unwrap(),
            }
        }
        // Dyadic ground truth converts back to f64 without rounding.
        let x = &model.complete_assignments()[0];
        let phi = model.coefficient_vector(x).unwrap();
        let Prediction::Value(v) = learner.predict(&phi).unwrap() else { unreachable!() };
        assert_eq!(num_traits::ToPrimitive::to_f64(&v).unwrap(), gt.payoff(&model, x));
    }

    #[test]
    fn snapshot_roundtrip_reproduces_predictions() {
        let (model, gt) = small_model(7);
        let mut learner = SpanLearner::<f64>::new(model.coeff_dim());
        let xs = model.complete_assignments();
        for x in xs.iter().take(6) {
            let phi = model.coefficient_vector(x).unwrap();
            if learner.predict(&phi).unwrap().is_abstain() {
                learner.observe(&phi, gt.payoff(&model, x)).unwrap();
            }
        }
        let snapshot = learner.to_snapshot();
        let mut restored = SpanLearner::<f64>::from_snapshot(&snapshot).unwrap();
        for x in &xs {
            let phi = model.coefficient_vector(x).unwrap();
            assert_eq!(learner.predict(&phi).unwrap(), restored.predict(&phi).unwrap());
        }
        assert_eq!(learner, restored);
    }

    #[test]
    fn rejects_foreign_snapshot() {
        let json = r#"{"format":"something-else","state":{"basis":{"dim":1,"rows":[]},"abstain_count":0}}"#;
        assert!(matches!(
            SpanLearner::<f64>::from_snapshot(json),
            Err(PayEstError::SnapshotFormat { .. })
        ));
    }

    #[test]
    fn total_observations_bounded_by_rank_on_adversarial_order() {
        let (model, gt) = small_model(9);
        let order = crate::env::rank_greedy_context_order(&model);
        let actions = model.joint_actions();
        let columns: Vec<Vec<f64>> = model
            .complete_assignments()
            .iter()
            .map(|x| model.coefficient_vector(x).unwrap().to_dense())
            .collect();
        let rank = brute_rank(&columns);
        let mut learner = SpanLearner::<f64>::new(model.coeff_dim());
        let mut observations = 0usize;
        for ctx in &order {
            for action in &actions {
                let mut x = ctx.clone();
                x.overlay(action);
                let phi = model.coefficient_vector(&x).unwrap();
                if learner.predict(&phi).unwrap().is_abstain() {
                    learner.observe(&phi, gt.payoff(&model, &x)).unwrap();
                    observations += 1;
                }
            }
        }
        assert_eq!(observations, rank);

        let mut rref = Rref::<f64>::new(model.coeff_dim());
        for col in &columns {
            rref.insert(col, 0.0);
        }
        assert_eq!(rref.rank(), rank, "production elimination agrees with the oracle");
    }
}
