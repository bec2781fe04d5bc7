//! Rank diagnostics and regret summaries.
//!
//! The coefficient matrix has one column per complete joint assignment; its
//! rank bounds the deterministic learner's abstentions, and restricting the
//! columns to likely contexts trades excluded probability mass against a
//! smaller rank term in the regret bound.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bandit::BanditRun;
use crate::env::{ContextDistribution, ContextSource};
use crate::linalg::Rref;
use crate::model::{DecomposableModel, JointAssignment};
use crate::scalar::Scalar;
use crate::treedecomp::TreeDecomposition;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("exhaustive enumeration needs {needed} columns, above the cap of {cap}; use sampled mode")]
    CapExceeded { needed: usize, cap: usize },
    #[error("matching bound requires scopes of at most two variables; scope {index} has {size}")]
    NonBinaryScope { index: usize, size: usize },
    #[error("tradeoff table requires an i.i.d. context distribution, not replay")]
    ReplayDistribution,
    #[error("curve has {len} rounds, need at least {min}")]
    CurveTooShort { len: usize, min: usize },
}

const DEFAULT_COLUMN_CAP: usize = 1_000_000;

/// A view of the coefficient matrix: all columns, optionally with some joint
/// contexts' columns removed.
pub struct CoefficientMatrixView<'a> {
    model: &'a DecomposableModel,
    excluded: Vec<Vec<usize>>,
    cap: usize,
}

impl<'a> CoefficientMatrixView<'a> {
    pub fn full(model: &'a DecomposableModel) -> Self {
        Self { model, excluded: Vec::new(), cap: DEFAULT_COLUMN_CAP }
    }

    /// Restricts to columns whose context part is *not* in `contexts`.
    pub fn excluding(model: &'a DecomposableModel, contexts: &[JointAssignment]) -> Self {
        let ids = model.context_ids();
        let mut excluded: Vec<Vec<usize>> = contexts
            .iter()
            .map(|c| c.values_over(&ids).expect("excluded contexts must be complete"))
            .collect();
        excluded.sort();
        excluded.dedup();
        Self { model, excluded, cap: DEFAULT_COLUMN_CAP }
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    fn contexts(&self) -> Vec<JointAssignment> {
        let ids = self.model.context_ids();
        self.model
            .joint_contexts()
            .into_iter()
            .filter(|c| !self.excluded.contains(&c.values_over(&ids).unwrap()))
            .collect()
    }
}

/// Exact rank of the viewed coefficient matrix by exhaustive elimination.
pub fn rank<T: Scalar>(view: &CoefficientMatrixView) -> Result<usize, AnalysisError> {
    let needed = view.model.n_complete_assignments().unwrap_or(usize::MAX);
    if needed > view.cap {
        return Err(AnalysisError::CapExceeded { needed, cap: view.cap });
    }
    let mut basis = Rref::<T>::new(view.model.coeff_dim());
    let action_ids = view.model.action_ids();
    for context in view.contexts() {
        view.model.for_each_assignment(&context, &action_ids, |x| {
            if basis.rank() < view.model.coeff_dim() {
                let phi = view.model.coefficient_vector(x).expect("assignment is complete");
                basis.insert(&phi.to_dense::<T>(), T::zero());
            }
        });
        if basis.rank() == view.model.coeff_dim() {
            break;
        }
    }
    Ok(basis.rank())
}

/// Rank of a random column subset: a certified lower bound on the full rank.
pub fn rank_sampled<T: Scalar>(
    view: &CoefficientMatrixView,
    samples: usize,
    seed: u64,
) -> usize {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let model = view.model;
    let ids = model.context_ids();
    let mut basis = Rref::<T>::new(model.coeff_dim());
    let mut drawn = 0usize;
    let mut attempts = 0usize;
    while drawn < samples && attempts < samples.saturating_mul(16) {
        attempts += 1;
        let mut x = JointAssignment::unassigned(model.n_variables());
        for v in 0..model.n_variables() {
            x.set(v, rng.random_range(0..model.domain_size(v)));
        }
        if view.excluded.contains(&x.values_over(&ids).unwrap()) {
            continue;
        }
        drawn += 1;
        let phi = model.coefficient_vector(&x).expect("assignment is complete");
        basis.insert(&phi.to_dense::<T>(), T::zero());
    }
    basis.rank()
}

/// Certified rank lower bound for models with scopes of at most two
/// variables, from a greedy matching and a greedy private-scope independent
/// set over the interaction graph.
pub fn matching_lower_bound(model: &DecomposableModel) -> Result<usize, AnalysisError> {
    for (index, scope) in model.scopes().iter().enumerate() {
        if scope.len() > 2 {
            return Err(AnalysisError::NonBinaryScope { index, size: scope.len() });
        }
    }
    let graph = model.interaction_graph();
    let n = model.n_variables();

    // Greedy maximal matching over the edge scopes, in declaration order.
    let mut matched = vec![false; n];
    let mut matching = 0usize;
    for scope in model.scopes() {
        if let [a, b] = scope.members() {
            if !matched[*a] && !matched[*b] {
                matched[*a] = true;
                matched[*b] = true;
                matching += 1;
            }
        }
    }

    // Greedy independent set, lowest degree first, then prune members
    // without a private scope (one containing no other member).
    let degree = |v: usize| graph.edges().iter().filter(|&&(a, b)| a == v || b == v).count();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&v| (degree(v), v));
    let mut in_set = vec![false; n];
    for &v in &order {
        let adjacent = (0..n).any(|u| in_set[u] && graph.has_edge(u, v));
        if !adjacent {
            in_set[v] = true;
        }
    }
    loop {
        let violator = (0..n).find(|&v| {
            in_set[v]
                && !model.scopes().iter().any(|scope| {
                    scope.contains(v)
                        && scope.members().iter().all(|&u| u == v || !in_set[u])
                })
        });
        match violator {
            Some(v) => in_set[v] = false,
            None => break,
        }
    }
    let independent = in_set.iter().filter(|&&b| b).count();

    Ok(matching.max(independent))
}

/// Parameters of the reported tradeoff bound, taken from the decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub horizon: usize,
    pub width: usize,
    pub n_bags: usize,
    pub tree_edges: usize,
}

impl BoundParams {
    pub fn from_decomposition(td: &TreeDecomposition, horizon: usize) -> Self {
        Self {
            horizon,
            width: td.width(),
            n_bags: td.n_bags(),
            tree_edges: td.tree_edges().len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    /// Number of distinct excluded joint contexts.
    pub excluded_contexts: usize,
    /// Probability mass of the excluded contexts under the distribution.
    pub excluded_mass: f64,
    pub restricted_rank: usize,
    /// horizon * mass + rank * width * bags * horizon^(2/3) * log term.
    pub bound_value: f64,
}

/// Scores each candidate exclusion set: its exact excluded mass, the rank of
/// the restricted coefficient matrix, and the resulting bound value.
pub fn restricted_rank_tradeoff<T: Scalar>(
    model: &DecomposableModel,
    source: &ContextSource,
    candidates: &[Vec<JointAssignment>],
    params: &BoundParams,
) -> Result<Vec<TradeoffRow>, AnalysisError> {
    let ContextSource::Iid(dist) = source else {
        return Err(AnalysisError::ReplayDistribution);
    };
    let ids = model.context_ids();
    let horizon = params.horizon as f64;
    let m = model.max_domain_size() as f64;
    let log_term = (horizon * m * params.tree_edges.max(1) as f64).ln().max(1.0);
    let rank_factor = params.width as f64 * params.n_bags as f64 * horizon.powf(2.0 / 3.0) * log_term;

    let mut rows = Vec::with_capacity(candidates.len());
    for excluded in candidates {
        let mut keys: Vec<Vec<usize>> = excluded
            .iter()
            .map(|c| c.values_over(&ids).expect("candidate contexts must be complete"))
            .collect();
        keys.sort();
        keys.dedup();
        let mass: f64 = keys.iter().map(|k| context_probability(model, dist, k)).sum();
        let restricted_rank = rank::<T>(&CoefficientMatrixView::excluding(model, excluded))?;
        rows.push(TradeoffRow {
            excluded_contexts: keys.len(),
            excluded_mass: mass,
            restricted_rank,
            bound_value: horizon * mass + restricted_rank as f64 * rank_factor,
        });
    }
    Ok(rows)
}

fn context_probability(
    model: &DecomposableModel,
    dist: &ContextDistribution,
    key: &[usize],
) -> f64 {
    match dist {
        ContextDistribution::PerVariable { probs } => {
            let _ = model;
            probs.iter().zip(key).map(|(row, &v)| row[v]).product()
        }
        ContextDistribution::Support { support } => support
            .iter()
            .filter(|atom| atom.values.as_slice() == key)
            .map(|atom| atom.weight)
            .sum(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    /// Set when the curve is identically zero (slope reported as 0).
    pub zero_regret: bool,
    /// Number of positive points used in the fit.
    pub points: usize,
}

const MIN_CURVE_LEN: usize = 100;

/// Least-squares slope of log cumulative regret against log round number
/// over the final decade of rounds.
pub fn fit_regret_exponent(curve: &[f64]) -> Result<ExponentFit, AnalysisError> {
    if curve.len() < MIN_CURVE_LEN {
        return Err(AnalysisError::CurveTooShort { len: curve.len(), min: MIN_CURVE_LEN });
    }
    let start = curve.len() / 10;
    let points: Vec<(f64, f64)> = (start..curve.len())
        .filter(|&i| curve[i] > 0.0)
        .map(|i| (((i + 1) as f64).ln(), curve[i].ln()))
        .collect();
    if points.is_empty() {
        return Ok(ExponentFit { slope: 0.0, zero_regret: *curve.last().unwrap() == 0.0, points: 0 });
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in &points {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    Ok(ExponentFit { slope, zero_regret: false, points: points.len() })
}

/// Per-seed regret curves with their pointwise mean and standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretSummary {
    pub curves: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub abstain_rounds: Vec<u64>,
    pub exponent: Option<ExponentFit>,
}

impl RegretSummary {
    pub fn from_runs(runs: &[BanditRun]) -> Self {
        let curves: Vec<Vec<f64>> =
            runs.iter().map(|r| crate::bandit::cumulative_regret(&r.records)).collect();
        let abstain_rounds = runs.iter().map(|r| r.stats.abstentions).collect();
        let horizon = curves.first().map_or(0, Vec::len);
        assert!(curves.iter().all(|c| c.len() == horizon), "curves must share a horizon");
        let n = curves.len().max(1) as f64;
        let mut mean = vec![0.0; horizon];
        let mut stderr = vec![0.0; horizon];
        for t in 0..horizon {
            let sum: f64 = curves.iter().map(|c| c[t]).sum();
            mean[t] = sum / n;
            if curves.len() > 1 {
                let var: f64 = curves.iter().map(|c| (c[t] - mean[t]).powi(2)).sum::<f64>()
                    / (n - 1.0);
                stderr[t] = (var / n).sqrt();
            }
        }
        let exponent = fit_regret_exponent(&mean).ok();
        Self { curves, mean, stderr, abstain_rounds, exponent }
    }
}
