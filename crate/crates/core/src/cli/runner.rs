//! Artifact emission: per-seed round CSVs, the summary table, the model dump,
//! and the manifest. Every file is written atomically (temp + rename) and is
//! byte-reproducible from the manifest's resolved config.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CliError, ExperimentConfig, ResolvedExperiment};
use crate::analysis::{
    rank, restricted_rank_tradeoff, BoundParams, CoefficientMatrixView, RegretSummary,
};
use crate::bandit::{run_many, BanditRun, RunConfig};
use crate::env::GroundTruth;
use crate::model::DecomposableModel;
use crate::treedecomp::TreeDecomposition;

pub const MANIFEST_FORMAT: &str = "graphbandit-manifest-v1";
pub const MODEL_DUMP_FORMAT: &str = "graphbandit-model-dump-v1";
pub const ROUNDS_SCHEMA: &str = "rounds-v1";
pub const SUMMARY_SCHEMA: &str = "summary-v1";
pub const RNG_SCHEME: &str = "chacha12/streams-v1";
pub const WORKERS_ENV: &str = "GRAPHBANDIT_WORKERS";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub library_version: String,
    pub rng_scheme: String,
    pub schemas: BTreeMap<String, String>,
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    /// Per-seed outcome: "complete" or an error description.
    pub status: BTreeMap<String, String>,
    pub complete: bool,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metrics {
    pub abstain_rounds_total: u64,
    pub final_mean_cum_regret: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regret_exponent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coefficient_rank: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelDump {
    format: String,
    model: DecomposableModel,
    ground_truth: GroundTruth<f64>,
    decomposition: TreeDecomposition,
}

pub struct RunArtifacts {
    pub output_dir: PathBuf,
    pub manifest: Manifest,
    pub runs: Vec<BanditRun>,
}

fn worker_count(seeds: usize) -> usize {
    if let Ok(raw) = std::env::var(WORKERS_ENV) {
        if let Ok(n) = raw.trim().parse::<usize>() {
            return n.clamp(1, seeds.max(1));
        }
    }
    std::thread::available_parallelism().map_or(1, |n| n.get()).clamp(1, seeds.max(1))
}

/// Executes the resolved experiment and writes all artifacts under its
/// output directory.
pub fn run_experiment(resolved: &ResolvedExperiment) -> Result<RunArtifacts, CliError> {
    let config = &resolved.config;
    let out_dir = &config.output_dir;
    std::fs::create_dir_all(out_dir)
        .map_err(|source| CliError::Write { path: out_dir.clone(), source })?;

    let base = RunConfig {
        horizon: config.run.horizon,
        estimator: config.run.estimator,
        params: config.run.params,
        seed: 0,
        defaults: None,
        kwik_width_scale: config.run.kwik_width_scale,
    };
    let workers = worker_count(config.seeds.len());
    let runs = run_many(
        &resolved.model,
        &resolved.decomposition,
        &resolved.environment,
        &base,
        &config.seeds,
        workers,
    )?;

    let mut status: BTreeMap<String, String> = BTreeMap::new();
    let mut failed: Vec<u64> = Vec::new();
    for (&seed, run) in config.seeds.iter().zip(&runs) {
        match write_rounds_csv(out_dir, seed, run) {
            Ok(()) => {
                status.insert(seed.to_string(), "complete".to_string());
            }
            Err(e) => {
                status.insert(seed.to_string(), format!("failed: {e}"));
                failed.push(seed);
            }
        }
    }

    let summary = RegretSummary::from_runs(&runs);
    write_atomic(&out_dir.join("summary.csv"), summary_csv(config, &summary).as_bytes())?;

    let dump = ModelDump {
        format: MODEL_DUMP_FORMAT.to_string(),
        model: resolved.model.clone(),
        ground_truth: resolved.ground_truth.clone(),
        decomposition: resolved.decomposition.clone(),
    };
    write_atomic(
        &out_dir.join("model.dump"),
        serde_json::to_string_pretty(&dump).expect("dump serializes").as_bytes(),
    )?;

    let coefficient_rank = if config.analysis.rank {
        Some(
            rank::<f64>(&CoefficientMatrixView::full(&resolved.model))
                .map_err(|e| CliError::Invalid(format!("analysis.rank: {e}")))?,
        )
    } else {
        None
    };
    if let Some(candidates) = &config.analysis.tradeoff_candidates {
        let table = tradeoff_csv(resolved, candidates)?;
        write_atomic(&out_dir.join("tradeoff.csv"), table.as_bytes())?;
    }

    let exponent = summary.exponent.as_ref().map(|e| e.slope);
    let manifest = Manifest {
        format: MANIFEST_FORMAT.to_string(),
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        rng_scheme: RNG_SCHEME.to_string(),
        schemas: BTreeMap::from([
            ("rounds".to_string(), ROUNDS_SCHEMA.to_string()),
            ("summary".to_string(), SUMMARY_SCHEMA.to_string()),
            ("model_dump".to_string(), MODEL_DUMP_FORMAT.to_string()),
        ]),
        config: config.clone(),
        seeds: config.seeds.clone(),
        status,
        complete: failed.is_empty(),
        metrics: Metrics {
            abstain_rounds_total: summary.abstain_rounds.iter().sum(),
            final_mean_cum_regret: summary.mean.last().copied().unwrap_or(0.0),
            regret_exponent: if config.analysis.exponent_fit { exponent } else { None },
            coefficient_rank,
        },
    };
    write_atomic(
        &out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes").as_bytes(),
    )?;

    if !failed.is_empty() {
        return Err(CliError::PartialRun { failed });
    }
    Ok(RunArtifacts { output_dir: out_dir.clone(), manifest, runs })
}

fn write_rounds_csv(out_dir: &Path, seed: u64, run: &BanditRun) -> Result<(), CliError> {
    let mut text = String::from("t,context,action,interrupted,payoff,inst_regret,cum_regret,oracle_calls\n");
    let mut cum = 0.0f64;
    for r in &run.records {
        cum += r.instantaneous_regret;
        let context = join_values(r.context.assigned_ids().map(|id| r.context.get(id).unwrap()));
        let action = join_values(
            r.played_action.assigned_ids().map(|id| r.played_action.get(id).unwrap()),
        );
        let payoff = r.observed_payoff.map(|p| p.to_string()).unwrap_or_default();
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{},{}",
            r.t, context, action, r.interrupted, payoff, r.instantaneous_regret, cum, r.oracle_calls
        );
    }
    write_atomic(&out_dir.join(format!("rounds_{seed}.csv")), text.as_bytes())
}

fn join_values(values: impl Iterator<Item = usize>) -> String {
    values.map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

/// Summary rows: `record,t,seed,value,stderr` with blanks where a column does
/// not apply. Curves are reported at geometric checkpoints plus the horizon.
fn summary_csv(config: &ExperimentConfig, summary: &RegretSummary) -> String {
    let mut text = String::from("record,t,seed,value,stderr\n");
    let horizon = summary.mean.len();
    for t in checkpoints(horizon) {
        let _ = writeln!(
            text,
            "curve,{t},,{},{}",
            summary.mean[t - 1],
            summary.stderr[t - 1]
        );
    }
    for (&seed, curve) in config.seeds.iter().zip(&summary.curves) {
        let _ = writeln!(text, "final_cum_regret,,{seed},{},", curve.last().unwrap_or(&0.0));
    }
    for (&seed, &abstains) in config.seeds.iter().zip(&summary.abstain_rounds) {
        let _ = writeln!(text, "abstain_rounds,,{seed},{abstains},");
    }
    if config.analysis.exponent_fit {
        match &summary.exponent {
            Some(fit) => {
                let _ = writeln!(text, "exponent,,,{},", fit.slope);
                let _ = writeln!(text, "exponent_zero_regret,,,{},", fit.zero_regret);
            }
            None => {
                let _ = writeln!(text, "exponent,,,,");
            }
        }
    }
    text
}

fn checkpoints(horizon: usize) -> Vec<usize> {
    if horizon == 0 {
        return Vec::new();
    }
    let mut points = Vec::new();
    let mut t = 1.0f64;
    while (t as usize) < horizon {
        points.push(t as usize);
        t = (t * 1.2).max(t + 1.0);
    }
    points.push(horizon);
    points.dedup();
    points
}

fn tradeoff_csv(
    resolved: &ResolvedExperiment,
    candidates: &[Vec<Vec<usize>>],
) -> Result<String, CliError> {
    let model = &resolved.model;
    let ids = model.context_ids();
    let materialized: Vec<Vec<crate::model::JointAssignment>> = candidates
        .iter()
        .map(|cand| {
            cand.iter()
                .map(|key| {
                    let mut ctx = crate::model::JointAssignment::unassigned(model.n_variables());
                    for (&id, &v) in ids.iter().zip(key) {
                        ctx.set(id, v);
                    }
                    ctx
                })
                .collect()
        })
        .collect();
    let params =
        BoundParams::from_decomposition(&resolved.decomposition, resolved.config.run.horizon);
    let rows = restricted_rank_tradeoff::<f64>(
        model,
        &resolved.environment.contexts,
        &materialized,
        &params,
    )
    .map_err(|e| CliError::Invalid(format!("analysis.tradeoff_candidates: {e}")))?;
    let mut text = String::from("candidate,excluded_contexts,excluded_mass,restricted_rank,bound_value\n");
    for (i, row) in rows.iter().enumerate() {
        let _ = writeln!(
            text,
            "{i},{},{},{},{}",
            row.excluded_contexts, row.excluded_mass, row.restricted_rank, row.bound_value
        );
    }
    Ok(text)
}

pub(super) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)
        .map_err(|source| CliError::Write { path: tmp.clone(), source })?;
    std::fs::rename(&tmp, path)
        .map_err(|source| CliError::Write { path: path.to_path_buf(), source })
}
