//! End-to-end tests of the experiment runner: artifact layout, byte-level
//! reproducibility, validation diagnostics, and run comparison.

use std::fs;
use std::path::Path;

use graphbandit::cli::{compare_runs, decomposition_report, load_config, resolve, run_experiment};

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn preset_config(out_dir: &Path, horizon: usize, estimator: &str, seeds: &str) -> String {
    format!(
        r#"{{
  "model": {{"preset": "sponsored_search", "domain_size": 2, "model_seed": 5}},
  "context": {{"mode": "iid_per_variable", "probs": [[0.5, 0.5], [0.5, 0.5]]}},
  "noise": {{"kind": "bernoulli"}},
  "run": {{"horizon": {horizon}, "estimator": "{estimator}", "params": "auto"}},
  "seeds": {seeds},
  "output_dir": "{}"
}}"#,
        out_dir.display()
    )
}

#[test]
fn smoke_run_writes_all_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let config_path =
        write_config(tmp.path(), "exp.json", &preset_config(&out, 50, "kwik", "[1, 2, 3]"));
    let config = load_config(&config_path).unwrap();
    let resolved = resolve(&config, tmp.path()).unwrap();
    let artifacts = run_experiment(&resolved).unwrap();

    for seed in [1, 2, 3] {
        let rounds = fs::read_to_string(out.join(format!("rounds_{seed}.csv"))).unwrap();
        let mut lines = rounds.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,context,action,interrupted,payoff,inst_regret,cum_regret,oracle_calls"
        );
        assert_eq!(lines.count(), 50);
    }
    assert!(out.join("summary.csv").exists());
    assert!(out.join("model.dump").exists());
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("graphbandit-manifest-v1"));
    assert!(manifest.contains("chacha12/streams-v1"));
    assert!(manifest.contains("rounds-v1"));
    assert!(artifacts.manifest.complete);
    assert_eq!(artifacts.runs.len(), 3);
}

#[test]
fn rerun_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    for (name, out) in [("a.json", &out_a), ("b.json", &out_b)] {
        let config_path =
            write_config(tmp.path(), name, &preset_config(out, 80, "kwik", "[7, 11]"));
        let config = load_config(&config_path).unwrap();
        run_experiment(&resolve(&config, tmp.path()).unwrap()).unwrap();
    }
    for file in ["rounds_7.csv", "rounds_11.csv", "summary.csv", "model.dump"] {
        let a = fs::read(out_a.join(file)).unwrap();
        let b = fs::read(out_b.join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
}

#[test]
fn bad_probability_vector_names_the_variable() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!(
        r#"{{
  "model": {{"preset": "sponsored_search"}},
  "context": {{"mode": "iid_per_variable", "probs": [[0.5, 0.49], [0.5, 0.5]]}},
  "noise": {{"kind": "noiseless"}},
  "run": {{"horizon": 10, "estimator": "deterministic"}},
  "seeds": [1],
  "output_dir": "{}"
}}"#,
        tmp.path().join("out").display()
    );
    let config_path = write_config(tmp.path(), "bad.json", &body);
    let config = load_config(&config_path).unwrap();
    let err = resolve(&config, tmp.path()).unwrap_err().to_string();
    assert!(err.contains("variable 4"), "diagnostic must name the variable: {err}");
    assert!(err.contains("0.99"), "diagnostic must show the sum: {err}");
}

#[test]
fn unknown_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let body = r#"{
  "model": {"preset": "sponsored_search"},
  "context": {"mode": "iid_per_variable", "probs": [[0.5, 0.5], [0.5, 0.5]]},
  "noise": {"kind": "noiseless"},
  "run": {"horizon": 10, "estimator": "deterministic", "typo_key": 3},
  "seeds": [1],
  "output_dir": "out"
}"#;
    let config_path = write_config(tmp.path(), "unknown.json", body);
    let err = load_config(&config_path).unwrap_err().to_string();
    assert!(err.contains("typo_key"), "{err}");
}

#[test]
fn compare_identical_and_variant_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    let out_c = tmp.path().join("c");

    let base = |out: &Path, eps: f64| {
        format!(
            r#"{{
  "model": {{"preset": "sponsored_search", "domain_size": 2, "model_seed": 5}},
  "context": {{"mode": "iid_per_variable", "probs": [[0.5, 0.5], [0.5, 0.5]]}},
  "noise": {{"kind": "bernoulli"}},
  "run": {{"horizon": 60, "estimator": "kwik", "params": {{"explicit": {{"epsilon": {eps}, "delta": 0.1}}}}}},
  "seeds": [3],
  "output_dir": "{}"
}}"#,
            out.display()
        )
    };
    for (name, out, eps) in
        [("a.json", &out_a, 0.2), ("b.json", &out_b, 0.2), ("c.json", &out_c, 0.1)]
    {
        let path = write_config(tmp.path(), name, &base(out, eps));
        let config = load_config(&path).unwrap();
        run_experiment(&resolve(&config, tmp.path()).unwrap()).unwrap();
    }

    let same = compare_runs(&out_a, &out_b).unwrap();
    assert!(same.identical);
    assert_eq!(format!("{same}").trim(), "identical");

    let diff = compare_runs(&out_a, &out_c).unwrap();
    assert!(!diff.identical);
    assert!(diff.non_comparable.is_none());
    assert!(diff.differences.iter().any(|d| d.starts_with("run:")));
    let abstain = diff.metrics.iter().find(|(n, _, _)| n == "abstain_rounds_total").unwrap();
    assert!(abstain.2 >= abstain.1, "tighter epsilon should not abstain less: {diff}");
}

#[test]
fn compare_flags_different_models_as_non_comparable() {
    let tmp = tempfile::tempdir().unwrap();
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    for (name, out, model_seed) in [("a.json", &out_a, 5), ("b.json", &out_b, 6)] {
        let body = format!(
            r#"{{
  "model": {{"preset": "sponsored_search", "model_seed": {model_seed}}},
  "context": {{"mode": "iid_per_variable", "probs": [[0.5, 0.5], [0.5, 0.5]]}},
  "noise": {{"kind": "noiseless"}},
  "run": {{"horizon": 20, "estimator": "deterministic"}},
  "seeds": [1],
  "output_dir": "{}"
}}"#,
            out.display()
        );
        let path = write_config(tmp.path(), name, &body);
        let config = load_config(&path).unwrap();
        run_experiment(&resolve(&config, tmp.path()).unwrap()).unwrap();
    }
    let report = compare_runs(&out_a, &out_b).unwrap();
    assert!(report.non_comparable.is_some());
}

#[test]
fn compare_requires_manifests() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    let err = compare_runs(&empty, &empty).unwrap_err().to_string();
    assert!(err.contains("manifest"), "{err}");
}

#[test]
fn replay_file_contexts_are_parsed() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("contexts.txt"), "0,0\n1,0\n0,1\n1,1\n").unwrap();
    let body = format!(
        r#"{{
  "model": {{"preset": "sponsored_search"}},
  "context": {{"mode": "replay", "file": "contexts.txt"}},
  "noise": {{"kind": "noiseless"}},
  "run": {{"horizon": 4, "estimator": "deterministic"}},
  "seeds": [1],
  "output_dir": "{}"
}}"#,
        tmp.path().join("out").display()
    );
    let path = write_config(tmp.path(), "replay.json", &body);
    let config = load_config(&path).unwrap();
    let resolved = resolve(&config, tmp.path()).unwrap();
    let artifacts = run_experiment(&resolved).unwrap();
    let contexts: Vec<String> = artifacts.runs[0]
        .records
        .iter()
        .map(|r| {
            let v = r.context.values_over(&resolved.model.context_ids()).unwrap();
            format!("{};{}", v[0], v[1])
        })
        .collect();
    assert_eq!(contexts, vec!["0;0", "1;0", "0;1", "1;1"]);
}

#[test]
fn decomposition_report_lists_bags_and_width() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(
        tmp.path(),
        "exp.json",
        &preset_config(&tmp.path().join("out"), 10, "deterministic", "[1]"),
    );
    let config = load_config(&path).unwrap();
    let resolved = resolve(&config, tmp.path()).unwrap();
    let report = decomposition_report(&resolved.model, &resolved.decomposition);
    assert!(report.contains("width: 3"));
    assert!(report.contains("bag 0:"));
    assert!(report.contains("root: 0"));
}

/// The checked-in golden artifacts pin every emitted format byte for byte.
#[test]
fn golden_artifacts_are_stable() {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let mut config = load_config(&golden.join("experiment.json")).unwrap();
    config.output_dir = out.clone();
    let resolved = resolve(&config, &golden).unwrap();
    run_experiment(&resolved).unwrap();
    for file in ["rounds_1.csv", "rounds_2.csv", "summary.csv", "model.dump"] {
        let expected = fs::read(golden.join(file)).unwrap();
        let actual = fs::read(out.join(file)).unwrap();
        assert_eq!(actual, expected, "{file} drifted from the golden copy");
    }
}

#[test]
fn binary_runs_and_validates() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let path = write_config(
        tmp.path(),
        "exp.json",
        &preset_config(&out, 15, "deterministic", "[1, 2]"),
    );
    let bin = env!("CARGO_BIN_EXE_graphbandit");

    let status = std::process::Command::new(bin)
        .args(["validate", path.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());

    let status = std::process::Command::new(bin)
        .args(["run", path.to_str().unwrap(), "--seeds", "4,5"])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("rounds_4.csv").exists());
    assert!(out.join("rounds_5.csv").exists());
    assert!(!out.join("rounds_1.csv").exists(), "--seeds overrides the config");

    let status = std::process::Command::new(bin)
        .args(["decompose", path.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());

    let bad = write_config(tmp.path(), "bad.json", "{\"model\": 3}");
    let output = std::process::Command::new(bin)
        .args(["validate", bad.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(!output.stderr.is_empty());
}
