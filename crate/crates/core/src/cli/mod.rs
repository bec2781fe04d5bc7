//! Experiment runner: config ingestion, seeded execution, CSV emission, and
//! run comparison. Batch-style; all interaction is through config files and
//! emitted artifacts.
//!
//! See `docs/formats.md` for the config schema and every emitted file format.

mod compare;
mod runner;

pub use compare::{compare_runs, CompareReport};
pub use runner::{
    run_experiment, Manifest, Metrics, RunArtifacts, MANIFEST_FORMAT, MODEL_DUMP_FORMAT,
    ROUNDS_SCHEMA, RNG_SCHEME, SUMMARY_SCHEMA, WORKERS_ENV,
};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bandit::{BanditError, EstimatorMode, ParamSpec};
use crate::env::{
    generate, ContextDistribution, ContextSource, EnvError, Environment, GeneratorSpec, GroundTruth,
    NoiseModel, WeightedContext,
};
use crate::model::{
    DecomposableModel, JointAssignment, ModelError, Scope, VariableKind, VariableSpec,
};
use crate::treedecomp::{decompose, TreeDecomposition};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Bandit(#[from] BanditError),
    #[error("missing manifest: {0}")]
    MissingManifest(PathBuf),
    #[error("run failed for seeds {failed:?}; partial outputs flagged in the manifest")]
    PartialRun { failed: Vec<u64> },
}

/// Top-level experiment configuration. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub context: ContextSection,
    pub noise: NoiseModel,
    pub run: RunSection,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Named built-in: currently `sponsored_search`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Domain size used by the preset (default 2).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_size: Option<usize>,
    /// Potential-table seed for the preset (default 0).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explicit: Option<ExplicitModel>,
}

/// Fully spelled-out model and tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitModel {
    pub variables: Vec<ExplicitVariable>,
    pub scopes: Vec<Vec<usize>>,
    pub tables: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitVariable {
    pub domain_size: usize,
    pub kind: VariableKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ContextSection {
    /// Independent categorical per context variable.
    IidPerVariable { probs: Vec<Vec<f64>> },
    /// Weighted finite support of joint contexts.
    IidSupport { support: Vec<WeightedContext> },
    /// Fixed sequence, inline or from a file with one comma-separated joint
    /// context per line.
    Replay {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        file: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        contexts: Option<Vec<Vec<usize>>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub horizon: usize,
    pub estimator: EstimatorMode,
    #[serde(default = "default_params")]
    pub params: ParamSpec,
    #[serde(default = "default_width_scale")]
    pub kwik_width_scale: f64,
}

fn default_params() -> ParamSpec {
    ParamSpec::Auto
}

fn default_width_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    /// Compute the exact coefficient rank (exhaustive; desk scale).
    #[serde(default)]
    pub rank: bool,
    /// Fit the log-log regret exponent over the final decade.
    #[serde(default)]
    pub exponent_fit: bool,
    /// Candidate context exclusion sets for the tradeoff table, each a list
    /// of joint contexts as value indices over the context variables.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tradeoff_candidates: Option<Vec<Vec<Vec<usize>>>>,
}

/// A parsed, validated, fully materialized experiment.
#[derive(Debug, Clone)]
pub struct ResolvedExperiment {
    pub config: ExperimentConfig,
    pub model: DecomposableModel,
    pub ground_truth: GroundTruth<f64>,
    pub decomposition: TreeDecomposition,
    pub environment: Environment<f64>,
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| CliError::Read { path: path.to_path_buf(), source })?;
    Ok(serde_json::from_str(&text)?)
}

/// Validates the config and builds the model, tables, decomposition, and
/// environment. Nothing is run and nothing is written.
pub fn resolve(config: &ExperimentConfig, config_dir: &Path) -> Result<ResolvedExperiment, CliError> {
    if config.seeds.is_empty() {
        return Err(CliError::Invalid("seeds: at least one seed is required".into()));
    }
    let mut sorted = config.seeds.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != config.seeds.len() {
        return Err(CliError::Invalid("seeds: duplicate seeds".into()));
    }
    if let ParamSpec::Explicit { epsilon, delta } = config.run.params {
        for (name, v) in [("epsilon", epsilon), ("delta", delta)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(CliError::Invalid(format!("run.params.{name}: {v} not in (0, 1)")));
            }
        }
    }
    if !config.run.kwik_width_scale.is_finite() || config.run.kwik_width_scale <= 0.0 {
        return Err(CliError::Invalid(format!(
            "run.kwik_width_scale: {} must be positive",
            config.run.kwik_width_scale
        )));
    }
    if let NoiseModel::TruncatedAdditive { half_width } = config.noise {
        if !(half_width > 0.0 && half_width < 0.5) {
            return Err(CliError::Invalid(format!(
                "noise.half_width: {half_width} not in (0, 0.5)"
            )));
        }
    }

    let (model, ground_truth) = build_model(&config.model)?;
    let contexts = build_contexts(&config.context, &model, config_dir)?;
    let environment = Environment {
        ground_truth: ground_truth.clone(),
        contexts,
        noise: config.noise.clone(),
    };
    environment
        .validate(&model, config.run.horizon)
        .map_err(|e| CliError::Invalid(format!("context: {e}")))?;
    let decomposition = decompose(model.interaction_graph().action_subgraph());

    if let Some(candidates) = &config.analysis.tradeoff_candidates {
        if matches!(config.context, ContextSection::Replay { .. }) {
            return Err(CliError::Invalid(
                "analysis.tradeoff_candidates: requires an i.i.d. context mode".into(),
            ));
        }
        let ids = model.context_ids();
        for (ci, cand) in candidates.iter().enumerate() {
            for (ki, key) in cand.iter().enumerate() {
                if key.len() != ids.len() {
                    return Err(CliError::Invalid(format!(
                        "analysis.tradeoff_candidates[{ci}][{ki}]: expected {} values, found {}",
                        ids.len(),
                        key.len()
                    )));
                }
                for (&id, &v) in ids.iter().zip(key) {
                    if v >= model.domain_size(id) {
                        return Err(CliError::Invalid(format!(
                            "analysis.tradeoff_candidates[{ci}][{ki}]: value {v} out of range \
                             for variable {id}"
                        )));
                    }
                }
            }
        }
    }

    Ok(ResolvedExperiment {
        config: config.clone(),
        model,
        ground_truth,
        decomposition,
        environment,
    })
}

fn build_model(section: &ModelSection) -> Result<(DecomposableModel, GroundTruth<f64>), CliError> {
    let mut sources = 0;
    sources += section.preset.is_some() as usize;
    sources += section.generator.is_some() as usize;
    sources += section.explicit.is_some() as usize;
    if sources != 1 {
        return Err(CliError::Invalid(
            "model: exactly one of preset, generator, explicit is required".into(),
        ));
    }
    if let Some(name) = &section.preset {
        if name != "sponsored_search" {
            return Err(CliError::Invalid(format!(
                "model.preset: unknown preset {name:?} (available: sponsored_search)"
            )));
        }
        let spec = GeneratorSpec::sponsored_search(
            section.domain_size.unwrap_or(2),
            section.model_seed.unwrap_or(0),
        );
        return Ok(generate::<f64>(&spec)?);
    }
    if let Some(spec) = &section.generator {
        if section.domain_size.is_some() || section.model_seed.is_some() {
            return Err(CliError::Invalid(
                "model: domain_size and model_seed apply to presets only".into(),
            ));
        }
        return Ok(generate::<f64>(spec)?);
    }
    let explicit = section.explicit.as_ref().unwrap();
    let variables: Vec<VariableSpec> = explicit
        .variables
        .iter()
        .enumerate()
        .map(|(id, v)| VariableSpec { id, domain_size: v.domain_size, kind: v.kind })
        .collect();
    let scopes: Vec<Scope> =
        explicit.scopes.iter().map(|members| Scope::new(members.iter().copied())).collect();
    let model = DecomposableModel::new(variables, scopes)?;
    let gt = GroundTruth::certified(&model, explicit.tables.clone())?;
    Ok((model, gt))
}

fn build_contexts(
    section: &ContextSection,
    model: &DecomposableModel,
    config_dir: &Path,
) -> Result<ContextSource, CliError> {
    match section {
        ContextSection::IidPerVariable { probs } => {
            Ok(ContextSource::Iid(ContextDistribution::PerVariable { probs: probs.clone() }))
        }
        ContextSection::IidSupport { support } => {
            Ok(ContextSource::Iid(ContextDistribution::Support { support: support.clone() }))
        }
        ContextSection::Replay { file, contexts } => {
            let rows: Vec<Vec<usize>> = match (file, contexts) {
                (Some(_), Some(_)) | (None, None) => {
                    return Err(CliError::Invalid(
                        "context: replay needs exactly one of file, contexts".into(),
                    ))
                }
                (None, Some(rows)) => rows.clone(),
                (Some(path), None) => {
                    let full = if path.is_absolute() {
                        path.clone()
                    } else {
                        config_dir.join(path)
                    };
                    let text = std::fs::read_to_string(&full)
                        .map_err(|source| CliError::Read { path: full, source })?;
                    parse_replay_file(&text)?
                }
            };
            let ids = model.context_ids();
            let mut out = Vec::with_capacity(rows.len());
            for (line, row) in rows.iter().enumerate() {
                if row.len() != ids.len() {
                    return Err(CliError::Invalid(format!(
                        "context.replay[{line}]: expected {} values, found {}",
                        ids.len(),
                        row.len()
                    )));
                }
                let mut ctx = JointAssignment::unassigned(model.n_variables());
                for (&id, &v) in ids.iter().zip(row) {
                    ctx.set(id, v);
                }
                out.push(ctx);
            }
            Ok(ContextSource::Replay(out))
        }
    }
}

/// One joint context per line, comma-separated value indices over the
/// context variables in ascending id order. Blank lines are skipped.
fn parse_replay_file(text: &str) -> Result<Vec<Vec<usize>>, CliError> {
    let mut rows = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Result<Vec<usize>, _> =
            line.split(',').map(|cell| cell.trim().parse::<usize>()).collect();
        match row {
            Ok(values) => rows.push(values),
            Err(e) => {
                return Err(CliError::Invalid(format!(
                    "replay file line {}: {e}",
                    line_no + 1
                )))
            }
        }
    }
    Ok(rows)
}

/// Human-readable dump of the action-subgraph decomposition.
pub fn decomposition_report(model: &DecomposableModel, td: &TreeDecomposition) -> String {
    let mut out = String::new();
    out.push_str(&format!("action variables: {:?}\n", model.action_ids()));
    out.push_str(&format!("width: {}\n", td.width()));
    for (i, bag) in td.bags().iter().enumerate() {
        out.push_str(&format!("bag {i}: {bag:?}\n"));
    }
    for &(a, b) in td.tree_edges() {
        out.push_str(&format!("edge: {a} -- {b}\n"));
    }
    out.push_str(&format!("root: {}\n", td.root()));
    out
}
