//! Comparison of two finished runs through their manifests.

use std::fmt;
use std::path::Path;

use super::runner::Manifest;
use super::CliError;

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub identical: bool,
    /// Set when the runs measured different instances (different models).
    pub non_comparable: Option<String>,
    pub differences: Vec<String>,
    /// (metric, value in A, value in B).
    pub metrics: Vec<(String, f64, f64)>,
}

impl fmt::Display for CompareReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.identical {
            return writeln!(f, "identical");
        }
        if let Some(reason) = &self.non_comparable {
            writeln!(f, "non-comparable: {reason}")?;
        }
        for d in &self.differences {
            writeln!(f, "config: {d}")?;
        }
        for (name, a, b) in &self.metrics {
            let ratio = if *a != 0.0 { b / a } else { f64::NAN };
            writeln!(f, "metric {name}: A={a} B={b} (B/A={ratio})")?;
        }
        Ok(())
    }
}

fn load_manifest(dir: &Path) -> Result<Manifest, CliError> {
    let path = dir.join("manifest.json");
    if !path.exists() {
        return Err(CliError::MissingManifest(path));
    }
    let text = std::fs::read_to_string(&path)
        .map_err(|source| CliError::Read { path: path.clone(), source })?;
    Ok(serde_json::from_str(&text)?)
}

pub fn compare_runs(dir_a: &Path, dir_b: &Path) -> Result<CompareReport, CliError> {
    let a = load_manifest(dir_a)?;
    let b = load_manifest(dir_b)?;

    let mut config_a = a.config.clone();
    let mut config_b = b.config.clone();
    config_a.output_dir = std::path::PathBuf::new();
    config_b.output_dir = std::path::PathBuf::new();
    if config_a == config_b {
        return Ok(CompareReport {
            identical: true,
            non_comparable: None,
            differences: Vec::new(),
            metrics: Vec::new(),
        });
    }

    let non_comparable = if config_a.model != config_b.model {
        Some("different model sections (instances are not the same)".to_string())
    } else {
        None
    };

    let mut differences = Vec::new();
    if config_a.run != config_b.run {
        differences.push(format!("run: {:?} vs {:?}", config_a.run, config_b.run));
    }
    if config_a.noise != config_b.noise {
        differences.push(format!("noise: {:?} vs {:?}", config_a.noise, config_b.noise));
    }
    if config_a.context != config_b.context {
        differences.push("context sections differ".to_string());
    }
    if config_a.seeds != config_b.seeds {
        differences.push(format!("seeds: {:?} vs {:?}", config_a.seeds, config_b.seeds));
    }

    let mut metrics = vec![
        (
            "abstain_rounds_total".to_string(),
            a.metrics.abstain_rounds_total as f64,
            b.metrics.abstain_rounds_total as f64,
        ),
        (
            "final_mean_cum_regret".to_string(),
            a.metrics.final_mean_cum_regret,
            b.metrics.final_mean_cum_regret,
        ),
    ];
    if let (Some(ea), Some(eb)) = (a.metrics.regret_exponent, b.metrics.regret_exponent) {
        metrics.push(("regret_exponent".to_string(), ea, eb));
    }

    Ok(CompareReport { identical: false, non_comparable, differences, metrics })
}
