//! Exact optimization of a decomposable payoff from its potential tables.
//!
//! This is the simulator's side of the fence: unlike the oracle-driven
//! planner, it reads the hidden tables directly and runs a standard
//! junction-tree sweep (max or min) over a tree decomposition of the graph
//! induced on the free variables.

use std::collections::BTreeSet;

use crate::model::{ActionSubgraph, DecomposableModel, JointAssignment};
use crate::scalar::Scalar;
use crate::treedecomp::{decompose, TreeDecomposition};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Max,
    Min,
}

/// Graph induced on `free_ids` by scopes containing at least two free members.
pub fn induced_graph(model: &DecomposableModel, free_ids: &[usize]) -> ActionSubgraph {
    let free: BTreeSet<usize> = free_ids.iter().copied().collect();
    let mut edges = BTreeSet::new();
    for scope in model.scopes() {
        let members: Vec<usize> =
            scope.members().iter().copied().filter(|v| free.contains(v)).collect();
        for (i, &a) in members.iter().enumerate() {
            for &b in &members[i + 1..] {
                edges.insert((a, b));
            }
        }
    }
    ActionSubgraph::new(free.into_iter().collect(), edges.into_iter().collect())
}

/// Optimizes the payoff over `free_ids`, all other referenced variables fixed
/// by `fixed`. Returns the optimizing complete assignment and its value.
/// Ties resolve to the lexicographically smallest assignment.
pub fn optimize<T: Scalar>(
    model: &DecomposableModel,
    tables: &[Vec<T>],
    fixed: &JointAssignment,
    free_ids: &[usize],
    direction: Direction,
) -> (JointAssignment, T) {
    if free_ids.is_empty() {
        let value = (0..model.scopes().len())
            .map(|s| tables[s][model.scope_assignment_index(s, fixed)].clone())
            .fold(T::zero(), |acc, v| acc + v);
        return (fixed.clone(), value);
    }
    let graph = induced_graph(model, free_ids);
    let td = decompose(&graph);
    optimize_on(model, tables, fixed, &td, direction)
}

/// Same as [`optimize`], over a caller-provided decomposition of the graph
/// induced on the free variables (which are exactly the decomposition's bag
/// members).
pub fn optimize_on<T: Scalar>(
    model: &DecomposableModel,
    tables: &[Vec<T>],
    fixed: &JointAssignment,
    td: &TreeDecomposition,
    direction: Direction,
) -> (JointAssignment, T) {
    let rooted = td.rooted();
    let free: BTreeSet<usize> = td.bags().iter().flatten().copied().collect();

    // Route each scope to the first postorder bag containing its free part;
    // scopes with no free member contribute a constant.
    let mut bag_scopes: Vec<Vec<usize>> = vec![Vec::new(); td.n_bags()];
    let mut constant = T::zero();
    for (s, scope) in model.scopes().iter().enumerate() {
        let free_part: Vec<usize> =
            scope.members().iter().copied().filter(|v| free.contains(v)).collect();
        if free_part.is_empty() {
            constant = constant + tables[s][model.scope_assignment_index(s, fixed)].clone();
        } else {
            let bag = rooted
                .postorder
                .iter()
                .copied()
                .find(|&b| free_part.iter().all(|v| td.bags()[b].contains(v)))
                .expect("scope's free part is a clique and must fit in some bag");
            bag_scopes[bag].push(s);
        }
    }

    struct Entry<T> {
        value: T,
        extension: JointAssignment,
    }
    let mut dp: Vec<Vec<Entry<T>>> = Vec::with_capacity(td.n_bags());
    for _ in 0..td.n_bags() {
        dp.push(Vec::new());
    }

    let better = |candidate: &T, incumbent: &T| match direction {
        Direction::Max => candidate > incumbent,
        Direction::Min => candidate < incumbent,
    };

    let mut scratch = fixed.clone();
    for &bag in &rooted.postorder {
        let sep = rooted.separator[bag].clone();
        let bag_free = rooted.free[bag].clone();
        let sep_count: usize = sep.iter().map(|&v| model.domain_size(v)).product();
        let mut rows: Vec<Entry<T>> = Vec::with_capacity(sep_count);
        let mut sep_values = vec![0usize; sep.len()];
        loop {
            for (&v, &val) in sep.iter().zip(&sep_values) {
                scratch.set(v, val);
            }
            let mut best: Option<Entry<T>> = None;
            let mut free_values = vec![0usize; bag_free.len()];
            loop {
                for (&v, &val) in bag_free.iter().zip(&free_values) {
                    scratch.set(v, val);
                }
                let mut value = T::zero();
                for &s in &bag_scopes[bag] {
                    value = value + tables[s][model.scope_assignment_index(s, &scratch)].clone();
                }
                let mut extension =
                    JointAssignment::from_pairs(model.n_variables(), &pairs(&bag_free, &free_values));
                for &child in &rooted.children[bag] {
                    let idx = radix_index(model, &rooted.separator[child], &scratch);
                    let entry = &dp[child][idx];
                    value = value + entry.value.clone();
                    extension.overlay(&entry.extension);
                }
                if best.as_ref().is_none_or(|b| better(&value, &b.value)) {
                    best = Some(Entry { value, extension });
                }
                if !advance(model, &bag_free, &mut free_values) {
                    break;
                }
            }
            for &v in &bag_free {
                scratch.clear(v);
            }
            rows.push(best.expect("bag enumeration is nonempty"));
            if !advance(model, &sep, &mut sep_values) {
                break;
            }
        }
        for &v in &sep {
            scratch.clear(v);
        }
        dp[bag] = rows;
    }

    let root = *rooted.postorder.last().unwrap();
    debug_assert_eq!(dp[root].len(), 1);
    let root_entry = &dp[root][0];
    let mut assignment = fixed.clone();
    assignment.overlay(&root_entry.extension);
    (assignment, root_entry.value.clone() + constant)
}

fn pairs(ids: &[usize], values: &[usize]) -> Vec<(usize, usize)> {
    ids.iter().copied().zip(values.iter().copied()).collect()
}

/// Row-major index of the current `scratch` values over `ids`.
fn radix_index(model: &DecomposableModel, ids: &[usize], scratch: &JointAssignment) -> usize {
    let mut idx = 0usize;
    for &v in ids {
        idx = idx * model.domain_size(v) + scratch.get(v).expect("separator variable unassigned");
    }
    idx
}

/// Odometer step in lexicographic order; `false` when wrapped around.
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
