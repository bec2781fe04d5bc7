//! BestAct: near-optimal joint action selection for a fixed context, by
//! dynamic programming over a tree decomposition of the action subgraph,
//! using only a *global* payoff oracle.
//!
//! The oracle may abstain; the first abstention terminates the sweep and
//! surfaces the abstaining query so the caller can play it (that is the
//! bandit loop's exploration step).
//!
//! With an oracle whose replies are within `eps` of the true payoff, the
//! returned action is `2|A|eps`-optimal. Queries are memoized for the
//! duration of one invocation, so the oracle sees each distinct completion at
//! most once and at most `m^2w * (|tree edges| + 1)` times overall, where `w`
//! is the maximum bag size.

use std::collections::HashMap;

use crate::model::{DecomposableModel, JointAssignment};
use crate::scalar::Scalar;
use crate::treedecomp::{RootedDecomposition, TreeDecomposition};

/// Oracle answer: an approximate payoff or an abstention.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleReply<T> {
    Value(T),
    Abstain,
}

/// Global approximate payoff oracle over complete joint assignments.
pub trait PayoffOracle<T> {
    fn query(&mut self, x: &JointAssignment) -> OracleReply<T>;
}

impl<T, F> PayoffOracle<T> for F
where
    F: FnMut(&JointAssignment) -> OracleReply<T>,
{
    fn query(&mut self, x: &JointAssignment) -> OracleReply<T> {
        self(x)
    }
}

/// Result of one BestAct sweep.
#[derive(Debug, Clone, PartialEq)]
pub enum BestActOutcome<T> {
    /// The oracle answered every query; `value` is the oracle's estimate of
    /// the returned action's payoff.
    Completed { action: JointAssignment, value: T },
    /// The oracle abstained; `played` is the abstaining query's action part
    /// (unqueried action variables hold their defaults).
    Interrupted { played: JointAssignment },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestActRun<T> {
    pub outcome: BestActOutcome<T>,
    /// Distinct queries forwarded to the oracle; within-run memoization
    /// collapses repeats.
    pub oracle_calls: usize,
}

impl<T> BestActRun<T> {
    pub fn oracle_call_count(&self) -> usize {
        self.oracle_calls
    }

    pub fn interrupted(&self) -> bool {
        matches!(self.outcome, BestActOutcome::Interrupted { .. })
    }
}

struct Interrupt {
    played: JointAssignment,
}

struct MemoOracle<'a, T, O> {
    oracle: &'a mut O,
    memo: HashMap<Vec<usize>, T>,
    calls: usize,
}

impl<'a, T: Clone, O: PayoffOracle<T>> MemoOracle<'a, T, O> {
    fn query(
        &mut self,
        x: &JointAssignment,
        action_ids: &[usize],
    ) -> Result<T, Interrupt> {
        let key = x.dense_key().expect("oracle queries must be complete");
        if let Some(v) = self.memo.get(&key) {
            return Ok(v.clone());
        }
        self.calls += 1;
        match self.oracle.query(x) {
            OracleReply::Value(v) => {
                self.memo.insert(key, v.clone());
                Ok(v)
            }
            OracleReply::Abstain => {
                let mut played = JointAssignment::unassigned(x.len());
                for &id in action_ids {
                    played.set(id, x.get(id).expect("action variable unassigned"));
                }
                Err(Interrupt { played })
            }
        }
    }
}

struct Entry<T> {
    value: T,
    /// Best assignment to the bag's subtree variables minus its separator.
    extension: JointAssignment,
}

/// Computes a joint action for `context` by sweeping the decomposition
/// bottom-up. Ties in each bag's argmax resolve to the first candidate in
/// lexicographic order (ascending variable id, ascending value).
pub fn best_action<T: Scalar, O: PayoffOracle<T>>(
    model: &DecomposableModel,
    td: &TreeDecomposition,
    context: &JointAssignment,
    defaults: &JointAssignment,
    oracle: &mut O,
) -> BestActRun<T> {
    model
        .check_assigned(context, &model.context_ids())
        .expect("context must be complete over the context variables");
    let base = model
        .complete_with_defaults(context, defaults)
        .expect("defaults must cover the action variables");
    let action_ids = model.action_ids();

    let rooted = td.rooted();
    let mut memo = MemoOracle { oracle, memo: HashMap::new(), calls: 0 };
    let mut dp: Vec<Vec<Entry<T>>> = Vec::with_capacity(td.n_bags());
    for _ in 0..td.n_bags() {
        dp.push(Vec::new());
    }

    let mut scratch = base.clone();
    let mut result = Ok(());
    for &bag in &rooted.postorder {
        match process_bag(model, &rooted, bag, &base, &mut scratch, &dp, &mut memo, &action_ids) {
            Ok(rows) => dp[bag] = rows,
            Err(stop) => {
                result = Err(stop);
                break;
            }
        }
    }

    match result {
        Err(Interrupt { played }) => {
            BestActRun { outcome: BestActOutcome::Interrupted { played }, oracle_calls: memo.calls }
        }
        Ok(()) => {
            let root = *rooted.postorder.last().unwrap();
            debug_assert_eq!(dp[root].len(), 1);
            let Entry { value, extension } = dp[root].pop().unwrap();
            let mut action = JointAssignment::unassigned(model.n_variables());
            for &id in &action_ids {
                action.set(id, extension.get(id).expect("root extension covers all actions"));
            }
            BestActRun {
                outcome: BestActOutcome::Completed { action, value },
                oracle_calls: memo.calls,
            }
        }
    }
}

/// Fills one bag's table: for every assignment to its separator, the
/// oracle-argmax over the bag's free variables with children's stored best
/// extensions substituted and every remaining action variable at defaults.
#[allow(clippy::too_many_arguments)]
fn process_bag<T: Scalar, O: PayoffOracle<T>>(
    model: &DecomposableModel,
    rooted: &RootedDecomposition,
    bag: usize,
    base: &JointAssignment,
    scratch: &mut JointAssignment,
    dp: &[Vec<Entry<T>>],
    memo: &mut MemoOracle<'_, T, O>,
    action_ids: &[usize],
) -> Result<Vec<Entry<T>>, Interrupt> {
    let sep = &rooted.separator[bag];
    let free = &rooted.free[bag];
    let children = &rooted.children[bag];
    let sep_count: usize = sep.iter().map(|&v| model.domain_size(v)).product();

    let mut rows: Vec<Entry<T>> = Vec::with_capacity(sep_count);
    let mut sep_values = vec![0usize; sep.len()];
    loop {
        for (&v, &val) in sep.iter().zip(&sep_values) {
            scratch.set(v, val);
        }
        let mut best: Option<(T, Vec<usize>, Vec<usize>)> = None; // value, tau, child row ids
        let mut free_values = vec![0usize; free.len()];
        let outcome = loop {
            for (&v, &val) in free.iter().zip(&free_values) {
                scratch.set(v, val);
            }
            // Substitute each child's best extension for the current interface.
            let mut child_rows = Vec::with_capacity(children.len());
            let mut touched: Vec<usize> = Vec::new();
            for &child in children {
                let idx = radix_index(model, &rooted.separator[child], scratch);
                child_rows.push(idx);
                for id in dp[child][idx].extension.assigned_ids() {
                    touched.push(id);
                    scratch.set(id, dp[child][idx].extension.get(id).unwrap());
                }
            }
            let reply = memo.query(scratch, action_ids);
            for id in touched {
                scratch.set(id, base.get(id).unwrap());
            }
            let value = match reply {
                Ok(v) => v,
                Err(stop) => break Err(stop),
            };
            if best.as_ref().is_none_or(|(bv, _, _)| value > *bv) {
                best = Some((value, free_values.clone(), child_rows));
            }
            if !advance(model, free, &mut free_values) {
                break Ok(());
            }
        };
        for &v in free {
            scratch.set(v, base.get(v).unwrap());
        }
        if let Err(stop) = outcome {
            for &v in sep {
                scratch.set(v, base.get(v).unwrap());
            }
            return Err(stop);
        }
        let (value, tau, child_rows) = best.expect("bag enumeration is nonempty");
        let mut extension = JointAssignment::unassigned(model.n_variables());
        for (&v, &val) in free.iter().zip(&tau) {
            extension.set(v, val);
        }
        for (&child, &row) in children.iter().zip(&child_rows) {
            extension.overlay(&dp[child][row].extension);
        }
        rows.push(Entry { value, extension });
        if !advance(model, sep, &mut sep_values) {
            break;
        }
    }
    for &v in sep {
        scratch.set(v, base.get(v).unwrap());
    }
    Ok(rows)
}

fn radix_index(model: &DecomposableModel, ids: &[usize], scratch: &JointAssignment) -> usize {
    let mut idx = 0usize;
    for &v in ids {
        idx = idx * model.domain_size(v) + scratch.get(v).expect("separator variable unassigned");
    }
    idx
}

fn advance(model: &DecomposableModel, ids: &[usize], values: &mut [usize]) -> bool {
    let mut pos = ids.len();
    loop {
        if pos == 0 {
            return false;
        }
        pos -= 1;
        values[pos] += 1;
        if values[pos] < model.domain_size(ids[pos]) {
            return true;
        }
        values[pos] = 0;
    }
}

/// Worst-case bound on distinct oracle queries for one sweep.
pub fn oracle_call_bound(model: &DecomposableModel, td: &TreeDecomposition) -> usize {
    let m = model.max_domain_size();
    m.pow(2 * td.width() as u32) * (td.tree_edges().len() + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{generate, GeneratorSpec, GraphFamily, GroundTruth};
    use crate::model::{Scope, VariableSpec};
    use crate::treedecomp::decompose;

    fn exact_oracle<'a>(
        model: &'a DecomposableModel,
        gt: &'a GroundTruth<f64>,
    ) -> impl FnMut(&JointAssignment) -> OracleReply<f64> + 'a {
        move |x: &JointAssignment| OracleReply::Value(gt.payoff(model, x))
    }

    fn brute_force_best(
        model: &DecomposableModel,
        gt: &GroundTruth<f64>,
        context: &JointAssignment,
    ) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for action in model.joint_actions() {
            let mut x = context.clone();
            x.overlay(&action);
            best = best.max(gt.payoff(model, &x));
        }
        best
    }

    fn tree_spec(seed: u64) -> GeneratorSpec {
        GeneratorSpec {
            n_action: 5,
            n_context: 2,
            arity: 2,
            domain_size: 3,
            domain_sizes: None,
            graph: GraphFamily::RandomTree,
            seed,
        }
    }

    #[test]
    fn single_variable_is_a_scan() {
        let model = DecomposableModel::new(
            vec![VariableSpec::action(0, 3)],
            vec![Scope::new([0])],
        )
        .unwrap();
        let gt = GroundTruth::from_tables(&model, vec![vec![0.25, 0.75, 0.5]]).unwrap();
        let td = decompose(model.interaction_graph().action_subgraph());
        let context = JointAssignment::unassigned(1);
        let defaults = model.zero_defaults();
        let run =
            best_action(&model, &td, &context, &defaults, &mut exact_oracle(&model, &gt));
        assert_eq!(run.oracle_calls, 3);
        match run.outcome {
            BestActOutcome::Completed { action, value } => {
                assert_eq!(action.get(0), Some(1));
                assert_eq!(value, 0.75);
            }
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn exact_oracle_achieves_brute_force_optimum_on_trees() {
        for seed in 0..100u64 {
            let (model, gt) = generate::<f64>(&tree_spec(seed)).unwrap();
            let td = decompose(model.interaction_graph().action_subgraph());
            let defaults = model.zero_defaults();
            for context in model.joint_contexts().into_iter().take(3) {
                let run =
                    best_action(&model, &td, &context, &defaults, &mut exact_oracle(&model, &gt));
                let BestActOutcome::Completed { action, value } = run.outcome else {
                    panic!("exact oracle never abstains");
                };
                let mut x = context.clone();
                x.overlay(&action);
                let achieved = gt.payoff(&model, &x);
                assert_eq!(achieved, value, "oracle value must be the true payoff");
                assert_eq!(achieved, brute_force_best(&model, &gt, &context), "seed {seed}");
            }
        }
    }

    /// Deterministic per-assignment sign flip, bounded by eps.
    fn perturbed_oracle<'a>(
        model: &'a DecomposableModel,
        gt: &'a GroundTruth<f64>,
        eps: f64,
        salt: u64,
    ) -> impl FnMut(&JointAssignment) -> OracleReply<f64> + 'a {
        move |x: &JointAssignment| {
            let mut h = salt ^ 0xcbf2_9ce4_8422_2325;
            for id in x.assigned_ids() {
                h ^= (x.get(id).unwrap() as u64).wrapping_add(id as u64).wrapping_mul(0x100_0000_01b3);
                h = h.rotate_left(17).wrapping_mul(0x9e37_79b9_7f4a_7c15);
            }
            let sign = if h & 1 == 0 { 1.0 } else { -1.0 };
            OracleReply::Value(gt.payoff(model, x) + sign * eps)
        }
    }

    #[test]
    fn perturbed_oracle_is_two_a_eps_optimal() {
        let eps = 0.05;
        for seed in 0..50u64 {
            let (model, gt) = generate::<f64>(&tree_spec(seed)).unwrap();
            let td = decompose(model.interaction_graph().action_subgraph());
            let defaults = model.zero_defaults();
            let slack = 2.0 * model.n_actions() as f64 * eps;
            for context in model.joint_contexts().into_iter().take(2) {
                let run = best_action(
                    &model,
                    &td,
                    &context,
                    &defaults,
                    &mut perturbed_oracle(&model, &gt, eps, seed),
                );
                let BestActOutcome::Completed { action, .. } = run.outcome else {
                    panic!("perturbed oracle never abstains");
                };
                let mut x = context.clone();
                x.overlay(&action);
                let achieved = gt.payoff(&model, &x);
                let optimum = brute_force_best(&model, &gt, &context);
                assert!(
                    achieved >= optimum - slack,
                    "seed {seed}: {achieved} < {optimum} - {slack}"
                );
            }
        }
    }

    #[test]
    fn first_query_abstention_interrupts_with_defaults() {
        let (model, _) = generate::<f64>(&tree_spec(1)).unwrap();
        let td = decompose(model.interaction_graph().action_subgraph());
        let defaults = model.zero_defaults();
        let context = model.joint_contexts()[0].clone();
        let mut always_abstain = |_: &JointAssignment| OracleReply::<f64>::Abstain;
        let run = best_action(&model, &td, &context, &defaults, &mut always_abstain);
        assert_eq!(run.oracle_calls, 1);
        let BestActOutcome::Interrupted { played } = run.outcome else {
            panic!("must interrupt");
        };
        model.check_assigned(&played, &model.action_ids()).unwrap();
    }

    #[test]
    fn oracle_calls_respect_complexity_bound() {
        for seed in 0..50u64 {
            let (model, gt) = generate::<f64>(&tree_spec(seed)).unwrap();
            let td = decompose(model.interaction_graph().action_subgraph());
            let defaults = model.zero_defaults();
            let bound = oracle_call_bound(&model, &td);
            let context = model.joint_contexts()[0].clone();
            let run =
                best_action(&model, &td, &context, &defaults, &mut exact_oracle(&model, &gt));
            assert!(run.oracle_calls <= bound, "{} > {bound}", run.oracle_calls);
        }
    }

    #[test]
    fn two_variable_path_call_count() {
        // Single bag {0, 1}, m = 2: four candidate completions, bound 16.
        let model = DecomposableModel::new(
            vec![VariableSpec::action(0, 2), VariableSpec::action(1, 2)],
            vec![Scope::new([0, 1])],
        )
        .unwrap();
        let gt = GroundTruth::from_tables(&model, vec![vec![0.1, 0.4, 0.3, 0.2]]).unwrap();
        let td = decompose(model.interaction_graph().action_subgraph());
        let context = JointAssignment::unassigned(2);
        let defaults = model.zero_defaults();
        let run =
            best_action(&model, &td, &context, &defaults, &mut exact_oracle(&model, &gt));
        assert_eq!(run.oracle_calls, 4);
        assert_eq!(oracle_call_bound(&model, &td), 16);
        let BestActOutcome::Completed { action, .. } = run.outcome else { unreachable!() };
        assert_eq!(action.values_over(&[0, 1]).unwrap(), vec![0, 1]);
    }

    #[test]
    fn no_duplicate_query_reaches_the_oracle() {
        let (model, gt) = generate::<f64>(&tree_spec(5)).unwrap();
        let td = decompose(model.interaction_graph().action_subgraph());
        let defaults = model.zero_defaults();
        let context = model.joint_contexts()[0].clone();
        let mut seen = std::collections::HashSet::new();
        let mut oracle = |x: &JointAssignment| {
            assert!(x.is_fully_assigned(), "every query must be complete");
            assert!(seen.insert(x.dense_key().unwrap()), "duplicate query {x:?}");
            OracleReply::Value(gt.payoff(&model, x))
        };
        best_action(&model, &td, &context, &defaults, &mut oracle);
    }

    #[test]
    fn deterministic_given_identical_inputs() {
        let (model, gt) = generate::<f64>(&tree_spec(6)).unwrap();
        let td = decompose(model.interaction_graph().action_subgraph());
        let defaults = model.zero_defaults();
        let context = model.joint_contexts()[1].clone();
        let r1 = best_action(&model, &td, &context, &defaults, &mut exact_oracle(&model, &gt));
        let r2 = best_action(&model, &td, &context, &defaults, &mut exact_oracle(&model, &gt));
        assert_eq!(r1, r2);
    }

    #[test]
    fn redundant_bag_with_empty_free_set_is_handled() {
        // Hand-built decomposition with a bag strictly inside its neighbor.
        let model = DecomposableModel::new(
            vec![VariableSpec::action(0, 2), VariableSpec::action(1, 2)],
            vec![Scope::new([0, 1])],
        )
        .unwrap();
        let gt = GroundTruth::from_tables(&model, vec![vec![0.1, 0.4, 0.3, 0.2]]).unwrap();
        let td = crate::treedecomp::TreeDecomposition::new(
            vec![vec![0, 1], vec![1]],
            vec![(0, 1)],
            0,
        );
        let context = JointAssignment::unassigned(2);
        let defaults = model.zero_defaults();
        let run =
            best_action(&model, &td, &context, &defaults, &mut exact_oracle(&model, &gt));
        let BestActOutcome::Completed { value, .. } = run.outcome else { unreachable!() };
        assert_eq!(value, 0.4);
    }

    #[test]
    fn wider_graphs_match_brute_force() {
        for seed in 0..50u64 {
            let spec = GeneratorSpec {
                n_action: 6,
                n_context: 2,
                arity: 3,
                domain_size: 2,
                domain_sizes: None,
                graph: GraphFamily::RandomWidth { width: 3 },
                seed,
            };
            let (model, gt) = generate::<f64>(&spec).unwrap();
            let td = decompose(model.interaction_graph().action_subgraph());
            let defaults = model.zero_defaults();
            let context = model.joint_contexts()[0].clone();
            let run =
                best_action(&model, &td, &context, &defaults, &mut exact_oracle(&model, &gt));
            let BestActOutcome::Completed { action, .. } = run.outcome else {
                panic!("exact oracle never abstains");
            };
            let mut x = context.clone();
            x.overlay(&action);
            assert_eq!(
                gt.payoff(&model, &x),
                brute_force_best(&model, &gt, &context),
                "seed {seed}"
            );
        }
    }
}
