//! Seeded instance generator: graph families, potential tables, and the
//! normalization that maps the exact payoff range into [0.05, 0.95].
//!
//! Table entries are drawn on a 2^-16 grid and the normalization scale and
//! shift are snapped to a 2^-20 grid, so at simulation sizes every payoff sum
//! is exact in f64. (Every grid value converts exactly into rationals too, so
//! the same seed produces the same numbers in either scalar type.)

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::{exact, streams, EnvError, GroundTruth};
use crate::model::{DecomposableModel, JointAssignment, Scope, VariableKind, VariableSpec};
use crate::scalar::Scalar;

const ENTRY_GRID: f64 = 65536.0; // 2^16
const SNAP_GRID: f64 = 1_048_576.0; // 2^20
const MAX_SCALE: f64 = 4.0;
const TARGET_LO: f64 = 0.05;
const TARGET_SPAN: f64 = 0.9;

/// Structure of the action side of a generated instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphFamily {
    /// Random tree over the action variables; binary scopes.
    RandomTree,
    /// Random scopes confined to windows of a random vertex order, keeping
    /// the heuristic decomposition width at or below `width`.
    RandomWidth { width: usize },
    /// The six-variable ad-serving topology: two ternary action scopes
    /// sharing two variables, plus one action–context pair per context
    /// variable.
    SponsoredSearch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub n_action: usize,
    pub n_context: usize,
    /// Largest scope size the family may emit.
    pub arity: usize,
    /// Domain size for every variable unless `domain_sizes` overrides it.
    pub domain_size: usize,
    #[serde(default)]
    pub domain_sizes: Option<Vec<usize>>,
    pub graph: GraphFamily,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn sponsored_search(domain_size: usize, seed: u64) -> Self {
        Self {
            n_action: 4,
            n_context: 2,
            arity: 3,
            domain_size,
            domain_sizes: None,
            graph: GraphFamily::SponsoredSearch,
            seed,
        }
    }

    fn domain_size_of(&self, id: usize) -> usize {
        self.domain_sizes.as_ref().map_or(self.domain_size, |sizes| sizes[id])
    }

    fn validate(&self) -> Result<(), EnvError> {
        let n = self.n_action + self.n_context;
        if self.n_action == 0 {
            return Err(EnvError::InfeasibleSpec { reason: "at least one action variable".into() });
        }
        if let Some(sizes) = &self.domain_sizes {
            if sizes.len() != n {
                return Err(EnvError::InfeasibleSpec {
                    reason: format!("domain_sizes has {} entries, expected {n}", sizes.len()),
                });
            }
        }
        for id in 0..n {
            if self.domain_size_of(id) < 2 {
                return Err(EnvError::InfeasibleSpec {
                    reason: format!("variable {id} has domain size below 2"),
                });
            }
        }
        if self.arity == 0 {
            return Err(EnvError::InfeasibleSpec { reason: "arity must be at least 1".into() });
        }
        if self.n_context > 0 && self.arity < 2 {
            return Err(EnvError::InfeasibleSpec {
                reason: "context attachment scopes need arity >= 2".into(),
            });
        }
        match self.graph {
            GraphFamily::RandomTree => {
                if self.n_action >= 2 && self.arity < 2 {
                    return Err(EnvError::InfeasibleSpec {
                        reason: "tree scopes need arity >= 2".into(),
                    });
                }
            }
            GraphFamily::RandomWidth { width } => {
                if width == 0 {
                    return Err(EnvError::InfeasibleSpec { reason: "width must be >= 1".into() });
                }
                if width < self.arity {
                    return Err(EnvError::WidthBelowArity { width, arity: self.arity });
                }
            }
            GraphFamily::SponsoredSearch => {
                if self.n_action != 4 || self.n_context != 2 || self.arity != 3 {
                    return Err(EnvError::InfeasibleSpec {
                        reason: "sponsored_search preset has 4 action variables, \
                                 2 context variables, and arity 3"
                            .into(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Generates a model and certified ground truth, deterministically in the seed.
pub fn generate<T: Scalar>(
    spec: &GeneratorSpec,
) -> Result<(DecomposableModel, GroundTruth<T>), EnvError> {
    spec.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    rng.set_stream(streams::MODEL);

    let n = spec.n_action + spec.n_context;
    let variables: Vec<VariableSpec> = (0..n)
        .map(|id| VariableSpec {
            id,
            domain_size: spec.domain_size_of(id),
            kind: if id < spec.n_action { VariableKind::Action } else { VariableKind::Context },
        })
        .collect();

    let mut scopes: Vec<Scope> = Vec::new();
    let push_unique = |scopes: &mut Vec<Scope>, scope: Scope| {
        if !scopes.contains(&scope) {
            scopes.push(scope);
        }
    };
    match spec.graph {
        GraphFamily::RandomTree => {
            if spec.n_action == 1 {
                push_unique(&mut scopes, Scope::new([0]));
            }
            for v in 1..spec.n_action {
                let parent = rng.random_range(0..v);
                push_unique(&mut scopes, Scope::new([parent, v]));
            }
        }
        GraphFamily::RandomWidth { width } => {
            let window = width.min(spec.n_action);
            let mut order: Vec<usize> = (0..spec.n_action).collect();
            for i in (1..order.len()).rev() {
                order.swap(i, rng.random_range(0..=i));
            }
            if window < 2 {
                for a in 0..spec.n_action {
                    push_unique(&mut scopes, Scope::new([a]));
                }
            } else {
                for start in 0..=(spec.n_action - window) {
                    let slice = &order[start..start + window];
                    let size = rng.random_range(2..=spec.arity.min(window));
                    let mut pool: Vec<usize> = slice.to_vec();
                    for i in (1..pool.len()).rev() {
                        pool.swap(i, rng.random_range(0..=i));
                    }
                    push_unique(&mut scopes, Scope::new(pool[..size].iter().copied()));
                }
                // Cover any action variable the random windows missed.
                for pos in 0..spec.n_action {
                    let a = order[pos];
                    if scopes.iter().any(|s| s.contains(a)) {
                        continue;
                    }
                    let buddy = if pos + 1 < spec.n_action { order[pos + 1] } else { order[pos - 1] };
                    push_unique(&mut scopes, Scope::new([a, buddy]));
                }
            }
        }
        GraphFamily::SponsoredSearch => {
            scopes.push(Scope::new([0, 1, 2]));
            scopes.push(Scope::new([1, 2, 3]));
            scopes.push(Scope::new([0, 4]));
            scopes.push(Scope::new([2, 5]));
        }
    }
    if !matches!(spec.graph, GraphFamily::SponsoredSearch) {
        for c in spec.n_action..n {
            let a = rng.random_range(0..spec.n_action);
            push_unique(&mut scopes, Scope::new([a, c]));
        }
    }

    let model = DecomposableModel::new(variables, scopes)?;

    let mut tables: Vec<Vec<T>> = Vec::with_capacity(model.scopes().len());
    for s in 0..model.scopes().len() {
        let table: Vec<T> = (0..model.block_size(s))
            .map(|_| {
                let grid = rng.random_range(0..=ENTRY_GRID as u64);
                T::from_f64(grid as f64 / ENTRY_GRID).expect("grid value converts")
            })
            .collect();
        tables.push(table);
    }

    let tables = normalize(&model, tables);
    let gt = GroundTruth::certified(&model, tables)?;
    Ok((model, gt))
}

/// Affine rescale of F into [TARGET_LO, TARGET_LO + TARGET_SPAN]: the scale
/// multiplies every table, the shift lands on scope 0's block.
fn normalize<T: Scalar>(model: &DecomposableModel, mut tables: Vec<Vec<T>>) -> Vec<Vec<T>> {
    let all: Vec<usize> = (0..model.n_variables()).collect();
    let empty = JointAssignment::unassigned(model.n_variables());
    let (_, min) = exact::optimize(model, &tables, &empty, &all, exact::Direction::Min);
    let (_, max) = exact::optimize(model, &tables, &empty, &all, exact::Direction::Max);
    let min_f = min.to_f64().expect("payoff converts");
    let span_f = max.to_f64().expect("payoff converts") - min_f;

    let raw_scale = if span_f > 0.0 { (TARGET_SPAN / span_f).min(MAX_SCALE) } else { 1.0 };
    let scale_f = (raw_scale * SNAP_GRID).floor().max(1.0) / SNAP_GRID;
    let shift_f = ((TARGET_LO - min_f * scale_f) * SNAP_GRID).round() / SNAP_GRID;
    let scale = T::from_f64(scale_f).expect("snapped scale converts");
    let shift = T::from_f64(shift_f).expect("snapped shift converts");

    for table in tables.iter_mut() {
        for entry in table.iter_mut() {
            *entry = entry.clone() * scale.clone();
        }
    }
    for entry in tables[0].iter_mut() {
        *entry = entry.clone() + shift.clone();
    }
    tables
}
