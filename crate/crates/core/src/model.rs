//! Structural core: variables, joint assignments, payoff decomposition,
//! interaction graphs, and the linearization of decomposable payoffs into
//! indicator coefficient vectors.
//!
//! A payoff function over discrete variables is *decomposable* when it is a
//! sum of potentials, each depending on a small subset (a *scope*) of the
//! variables. Fixing an order over scopes and, within a scope, a row-major
//! order over its joint assignments, every complete assignment `x` maps to a
//! 0/1 coefficient vector `v(x)` with exactly one indicator per scope block,
//! and the payoff becomes the inner product of `v(x)` with the flattened
//! potential tables.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model has no variables")]
    NoVariables,
    #[error("variable ids must be contiguous: expected {expected}, found {found}")]
    NonContiguousId { expected: usize, found: usize },
    #[error("variable {id}: domain size {size} is below the minimum of 2")]
    DomainTooSmall { id: usize, size: usize },
    #[error("model has no scopes")]
    NoScopes,
    #[error("scope {index} is empty")]
    EmptyScope { index: usize },
    #[error("scope {index} references unknown variable {id}")]
    UnknownVariable { index: usize, id: usize },
    #[error("scopes {first} and {second} have identical members")]
    DuplicateScope { first: usize, second: usize },
    #[error("variable {id} appears in no scope")]
    UncoveredVariable { id: usize },
    #[error("assignment is missing variables {missing:?}")]
    MissingVariables { missing: Vec<usize> },
    #[error("value {value} out of range for variable {id} (domain size {size})")]
    ValueOutOfRange { id: usize, value: usize, size: usize },
    #[error("assignment length {found} does not match variable count {expected}")]
    LengthMismatch { expected: usize, found: usize },
}

/// Whether a variable is chosen by the learner or by Nature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableKind {
    Action,
    Context,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub id: usize,
    pub domain_size: usize,
    pub kind: VariableKind,
}

impl VariableSpec {
    pub fn action(id: usize, domain_size: usize) -> Self {
        Self { id, domain_size, kind: VariableKind::Action }
    }

    pub fn context(id: usize, domain_size: usize) -> Self {
        Self { id, domain_size, kind: VariableKind::Context }
    }
}

/// Sorted, deduplicated set of variable ids a potential depends on.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Scope {
    members: Vec<usize>,
}

impl Scope {
    pub fn new(members: impl IntoIterator<Item = usize>) -> Self {
        let set: BTreeSet<usize> = members.into_iter().collect();
        Self { members: set.into_iter().collect() }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, id: usize) -> bool {
        self.members.binary_search(&id).is_ok()
    }
}

/// Partial or complete mapping from variable ids to domain value indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointAssignment {
    values: Vec<Option<usize>>,
}

impl JointAssignment {
    /// Assignment over `n` variables with nothing assigned.
    pub fn unassigned(n: usize) -> Self {
        Self { values: vec![None; n] }
    }

    pub fn from_values(values: Vec<Option<usize>>) -> Self {
        Self { values }
    }

    /// Complete assignment from one value per variable.
    pub fn complete(values: &[usize]) -> Self {
        Self { values: values.iter().map(|&v| Some(v)).collect() }
    }

    /// Assignment over `n` variables setting only the given (id, value) pairs.
    pub fn from_pairs(n: usize, pairs: &[(usize, usize)]) -> Self {
        let mut a = Self::unassigned(n);
        for &(id, value) in pairs {
            a.set(id, value);
        }
        a
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<usize> {
        self.values.get(id).copied().flatten()
    }

    pub fn set(&mut self, id: usize, value: usize) {
        self.values[id] = Some(value);
    }

    pub fn clear(&mut self, id: usize) {
        self.values[id] = None;
    }

    /// Ids currently assigned, ascending.
    pub fn assigned_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.values.iter().enumerate().filter_map(|(i, v)| v.map(|_| i))
    }

    pub fn is_fully_assigned(&self) -> bool {
        self.values.iter().all(|v| v.is_some())
    }

    /// Copies every assigned value of `other` into `self`, overwriting.
    pub fn overlay(&mut self, other: &JointAssignment) {
        for (slot, v) in self.values.iter_mut().zip(&other.values) {
            if v.is_some() {
                *slot = *v;
            }
        }
    }

    /// Values over the given ids; `None` if any of them is unassigned.
    pub fn values_over(&self, ids: &[usize]) -> Option<Vec<usize>> {
        ids.iter().map(|&id| self.get(id)).collect()
    }

    /// Dense key for memoization; requires every variable assigned.
    pub fn dense_key(&self) -> Option<Vec<usize>> {
        self.values.iter().copied().collect()
    }
}

/// A decomposable payoff model: variables, scopes, and the induced block
/// layout of the coefficient space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecomposableModel {
    variables: Vec<VariableSpec>,
    scopes: Vec<Scope>,
    arity_bound: usize,
    /// Start offset of each scope's block, plus the total dimension at the end.
    block_offsets: Vec<usize>,
}

impl DecomposableModel {
    pub fn new(variables: Vec<VariableSpec>, scopes: Vec<Scope>) -> Result<Self, ModelError> {
        if variables.is_empty() {
            return Err(ModelError::NoVariables);
        }
        for (i, v) in variables.iter().enumerate() {
            if v.id != i {
                return Err(ModelError::NonContiguousId { expected: i, found: v.id });
            }
            if v.domain_size < 2 {
                return Err(ModelError::DomainTooSmall { id: v.id, size: v.domain_size });
            }
        }
        if scopes.is_empty() {
            return Err(ModelError::NoScopes);
        }
        for (index, scope) in scopes.iter().enumerate() {
            if scope.is_empty() {
                return Err(ModelError::EmptyScope { index });
            }
            for &id in scope.members() {
                if id >= variables.len() {
                    return Err(ModelError::UnknownVariable { index, id });
                }
            }
            for (earlier, other) in scopes[..index].iter().enumerate() {
                if other == scope {
                    return Err(ModelError::DuplicateScope { first: earlier, second: index });
                }
            }
        }
        let mut covered = vec![false; variables.len()];
        for scope in &scopes {
            for &id in scope.members() {
                covered[id] = true;
            }
        }
        if let Some(id) = covered.iter().position(|c| !c) {
            return Err(ModelError::UncoveredVariable { id });
        }

        let arity_bound = scopes.iter().map(Scope::len).max().unwrap_or(0);
        let mut block_offsets = Vec::with_capacity(scopes.len() + 1);
        let mut offset = 0usize;
        for scope in &scopes {
            block_offsets.push(offset);
            let size: usize =
                scope.members().iter().map(|&id| variables[id].domain_size).product();
            offset += size;
        }
        block_offsets.push(offset);

        Ok(Self { variables, scopes, arity_bound, block_offsets })
    }

    pub fn variables(&self) -> &[VariableSpec] {
        &self.variables
    }

    pub fn n_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn domain_size(&self, id: usize) -> usize {
        self.variables[id].domain_size
    }

    /// m = largest domain size.
    pub fn max_domain_size(&self) -> usize {
        self.variables.iter().map(|v| v.domain_size).max().unwrap_or(0)
    }

    pub fn scopes(&self) -> &[Scope] {
        &self.scopes
    }

    /// k = largest scope size.
    pub fn arity_bound(&self) -> usize {
        self.arity_bound
    }

    /// N = total coefficient dimension (sum of block sizes).
    pub fn coeff_dim(&self) -> usize {
        *self.block_offsets.last().unwrap()
    }

    pub fn block_offset(&self, scope_index: usize) -> usize {
        self.block_offsets[scope_index]
    }

    pub fn block_size(&self, scope_index: usize) -> usize {
        self.block_offsets[scope_index + 1] - self.block_offsets[scope_index]
    }

    pub fn action_ids(&self) -> Vec<usize> {
        self.ids_of_kind(VariableKind::Action)
    }

    pub fn context_ids(&self) -> Vec<usize> {
        self.ids_of_kind(VariableKind::Context)
    }

    fn ids_of_kind(&self, kind: VariableKind) -> Vec<usize> {
        self.variables.iter().filter(|v| v.kind == kind).map(|v| v.id).collect()
    }

    pub fn n_actions(&self) -> usize {
        self.variables.iter().filter(|v| v.kind == VariableKind::Action).count()
    }

    /// Total number of complete joint assignments, if it fits in a `usize`.
    pub fn n_complete_assignments(&self) -> Option<usize> {
        self.variables.iter().try_fold(1usize, |acc, v| acc.checked_mul(v.domain_size))
    }

    /// Validates that `x` covers the given ids with in-range values.
    pub fn check_assigned(&self, x: &JointAssignment, ids: &[usize]) -> Result<(), ModelError> {
        if x.len() != self.n_variables() {
            return Err(ModelError::LengthMismatch {
                expected: self.n_variables(),
                found: x.len(),
            });
        }
        let missing: Vec<usize> = ids.iter().copied().filter(|&id| x.get(id).is_none()).collect();
        if !missing.is_empty() {
            return Err(ModelError::MissingVariables { missing });
        }
        for &id in ids {
            let value = x.get(id).unwrap();
            if value >= self.domain_size(id) {
                return Err(ModelError::ValueOutOfRange {
                    id,
                    value,
                    size: self.domain_size(id),
                });
            }
        }
        Ok(())
    }

    pub fn check_complete(&self, x: &JointAssignment) -> Result<(), ModelError> {
        let all: Vec<usize> = (0..self.n_variables()).collect();
        self.check_assigned(x, &all)
    }

    /// Row-major index of `x` restricted to the scope's members (ascending id,
    /// ascending value), i.e. the position within the scope's block.
    pub fn scope_assignment_index(&self, scope_index: usize, x: &JointAssignment) -> usize {
        let scope = &self.scopes[scope_index];
        let mut idx = 0usize;
        for &id in scope.members() {
            let value = x.get(id).expect("scope variable unassigned");
            debug_assert!(value < self.domain_size(id));
            idx = idx * self.domain_size(id) + value;
        }
        idx
    }

    /// The binary coefficient vector of a complete joint assignment: one
    /// indicator per scope block.
    pub fn coefficient_vector(&self, x: &JointAssignment) -> Result<CoefficientVector, ModelError> {
        self.check_complete(x)?;
        let indices = self
            .scopes
            .iter()
            .enumerate()
            .map(|(s, _)| self.block_offsets[s] + self.scope_assignment_index(s, x))
            .collect();
        Ok(CoefficientVector { indices, dim: self.coeff_dim() })
    }

    /// Completes `partial` by filling unassigned action variables from
    /// `defaults`. Context variables must already be present in `partial`.
    pub fn complete_with_defaults(
        &self,
        partial: &JointAssignment,
        defaults: &JointAssignment,
    ) -> Result<JointAssignment, ModelError> {
        self.check_assigned(defaults, &self.action_ids())?;
        if partial.len() != self.n_variables() {
            return Err(ModelError::LengthMismatch {
                expected: self.n_variables(),
                found: partial.len(),
            });
        }
        let missing: Vec<usize> = self
            .context_ids()
            .into_iter()
            .filter(|&id| partial.get(id).is_none())
            .collect();
        if !missing.is_empty() {
            return Err(ModelError::MissingVariables { missing });
        }
        let mut out = partial.clone();
        for id in self.action_ids() {
            if out.get(id).is_none() {
                out.set(id, defaults.get(id).unwrap());
            }
        }
        self.check_complete(&out)?;
        Ok(out)
    }

    /// The fixed default joint action: value index 0 for every action variable.
    pub fn zero_defaults(&self) -> JointAssignment {
        let mut a = JointAssignment::unassigned(self.n_variables());
        for id in self.action_ids() {
            a.set(id, 0);
        }
        a
    }

    /// Interaction graph: an edge joins two variables iff they co-occur in
    /// some scope.
    pub fn interaction_graph(&self) -> InteractionGraph {
        let mut edges = BTreeSet::new();
        for scope in &self.scopes {
            let members = scope.members();
            for (i, &a) in members.iter().enumerate() {
                for &b in &members[i + 1..] {
                    edges.insert((a, b));
                }
            }
        }
        let action_ids: BTreeSet<usize> = self.action_ids().into_iter().collect();
        let action_edges = edges
            .iter()
            .copied()
            .filter(|(a, b)| action_ids.contains(a) && action_ids.contains(b))
            .collect();
        InteractionGraph {
            n: self.n_variables(),
            edges: edges.into_iter().collect(),
            action_subgraph: ActionSubgraph {
                vertices: action_ids.into_iter().collect(),
                edges: action_edges,
            },
        }
    }

    /// Visits complete assignments over `ids` in lexicographic order
    /// (ascending id is the most significant digit), applying each to `base`.
    pub fn for_each_assignment<F: FnMut(&JointAssignment)>(
        &self,
        base: &JointAssignment,
        ids: &[usize],
        mut visit: F,
    ) {
        let mut current = base.clone();
        let mut values = vec![0usize; ids.len()];
        loop {
            for (slot, &id) in values.iter().zip(ids) {
                current.set(id, *slot);
            }
            visit(&current);
            let mut pos = ids.len();
            loop {
                if pos == 0 {
                    return;
                }
                pos -= 1;
                values[pos] += 1;
                if values[pos] < self.domain_size(ids[pos]) {
                    break;
                }
                values[pos] = 0;
            }
        }
    }

    /// All complete joint assignments, lexicographic. Intended for desk-scale
    /// enumeration; prefer [`Self::for_each_assignment`] when streaming.
    pub fn complete_assignments(&self) -> Vec<JointAssignment> {
        let ids: Vec<usize> = (0..self.n_variables()).collect();
        let mut out = Vec::new();
        self.for_each_assignment(&JointAssignment::unassigned(self.n_variables()), &ids, |x| {
            out.push(x.clone())
        });
        out
    }

    /// All joint contexts, lexicographic over context ids.
    pub fn joint_contexts(&self) -> Vec<JointAssignment> {
        let ids = self.context_ids();
        let mut out = Vec::new();
        self.for_each_assignment(&JointAssignment::unassigned(self.n_variables()), &ids, |x| {
            out.push(x.clone())
        });
        out
    }

    /// All joint actions, lexicographic over action ids.
    pub fn joint_actions(&self) -> Vec<JointAssignment> {
        let ids = self.action_ids();
        let mut out = Vec::new();
        self.for_each_assignment(&JointAssignment::unassigned(self.n_variables()), &ids, |x| {
            out.push(x.clone())
        });
        out
    }
}

/// Binary coefficient vector `v(x)`: indicator positions, one per scope block.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CoefficientVector {
    indices: Vec<usize>,
    dim: usize,
}

impl CoefficientVector {
    pub fn new(indices: Vec<usize>, dim: usize) -> Self {
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(indices.iter().all(|&i| i < dim));
        Self { indices, dim }
    }

    /// Positions set to 1, ascending.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ones(&self) -> usize {
        self.indices.len()
    }

    pub fn to_dense<T: crate::scalar::Scalar>(&self) -> Vec<T> {
        let mut v = vec![T::zero(); self.dim];
        for &i in &self.indices {
            v[i] = T::one();
        }
        v
    }
}

/// Interaction graph over all variables plus its induced action subgraph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    action_subgraph: ActionSubgraph,
}

impl InteractionGraph {
    pub fn n_vertices(&self) -> usize {
        self.n
    }

    /// Edges as sorted pairs, lexicographic.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn action_subgraph(&self) -> &ActionSubgraph {
        &self.action_subgraph
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        let key = if a < b { (a, b) } else { (b, a) };
        self.edges.binary_search(&key).is_ok()
    }
}

/// Subgraph induced on the action variables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSubgraph {
    pub vertices: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
}

impl ActionSubgraph {
    pub fn new(vertices: Vec<usize>, edges: Vec<(usize, usize)>) -> Self {
        Self { vertices, edges }
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter_map(move |&(a, b)| {
            if a == v {
                Some(b)
            } else if b == v {
                Some(a)
            } else {
                None
            }
        })
    }
}
