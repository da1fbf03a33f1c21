use std::path::Path;
use std::process::Command;

use broodsize::{ModelSpec, SampleSizeRule, TypedVector};
use broodsize_cli::config::ModelSource;
use broodsize_cli::runner::mean_sd;
use broodsize_cli::{
    emit_histograms, preset, run_experiment, Cell, CliError, EstimatorKind, ExperimentConfig, Histogram, Scale,
};

fn in_dir(mut config: ExperimentConfig, dir: &Path) -> ExperimentConfig {
    config.output_dir = dir.to_path_buf();
    config
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let j = reader.headers().unwrap().iter().position(|h| h == name).unwrap();
    reader
        .records()
        .map(|r| r.unwrap()[j].to_string())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().unwrap())
        .collect()
}

#[test]
fn summary_matches_recomputation_from_replicate_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = in_dir(preset("table1", Scale::Desk, 4).unwrap(), dir.path());
    config.replicates = 25;
    let summary = run_experiment(&config, 2).unwrap();
    assert!(summary.succeeded());
    assert_eq!(summary.cells.len(), 4);
    for cell in &summary.cells {
        assert_eq!(cell.replicates, 25);
        for e in &cell.estimands {
            let (mean, sd) = mean_sd(&column(&cell.replicate_csv, &e.estimand));
            assert!((mean - e.mean).abs() <= 1e-12, "{}", e.estimand);
            assert!((sd - e.sd).abs() <= 1e-12 && e.sd >= 0.0);
        }
    }
    // the summary file carries the same numbers at full precision
    let mut reader = csv::Reader::from_path(summary.output_dir.join("summary.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 4 * (8 + 1));
    let first = &summary.cells[0].estimands[1];
    assert_eq!(&rows[1][4], first.estimand.as_str());
    assert_eq!(rows[1][6].parse::<f64>().unwrap(), first.mean);
    for name in ["metadata.json", "runtime.json", "failures.csv"] {
        assert!(summary.output_dir.join(name).exists(), "{name}");
    }
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(summary.output_dir.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["sample_sizes"][0]["r"], 400);
}

#[test]
fn same_seed_same_files_and_distinct_cells_differ() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut config = preset("table2", Scale::Desk, 9).unwrap();
    config.replicates = 1;
    for (dir, workers) in dirs.iter().zip([1, 3]) {
        run_experiment(&in_dir(config.clone(), dir.path()), workers).unwrap();
    }
    for name in ["summary.csv", "replicates_rds.csv", "histogram_rds.csv"] {
        let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("table2").join(name)).unwrap();
        assert_eq!(read(&dirs[0]), read(&dirs[1]), "{name}");
    }

    let dir = tempfile::tempdir().unwrap();
    let mut grid = config.clone();
    grid.replicates = 3;
    grid.cells = vec![grid.cells[0].clone(), Cell { label: "again".into(), ..grid.cells[0].clone() }];
    let summary = run_experiment(&in_dir(grid, dir.path()), 1).unwrap();
    let a = column(&summary.cells[0].replicate_csv, "population");
    let b = column(&summary.cells[1].replicate_csv, "population");
    assert_ne!(a, b, "cells must use distinct streams");
}

#[test]
fn non_sibling_frequency_grows_along_the_trend_preset() {
    let dir = tempfile::tempdir().unwrap();
    let config = in_dir(preset("pdn-trend", Scale::Desk, 2).unwrap(), dir.path());
    let summary = run_experiment(&config, 2).unwrap();
    let k = config.replicates as f64;
    let freq: Vec<f64> = summary.cells.iter().map(|c| c.non_sibling_frequency).collect();
    for w in freq.windows(2) {
        let se = ((w[0] * (1.0 - w[0]) + w[1] * (1.0 - w[1])) / k).sqrt();
        assert!(w[1] >= w[0] - 3.0 * se, "{freq:?}");
    }
    // the indicator frequency estimates the same probability as the exact average
    for c in &summary.cells {
        let p = c.estimand("p_dn").unwrap().mean;
        let se = (p * (1.0 - p) / k).sqrt().max(1.0 / k);
        assert!((c.non_sibling_frequency - p).abs() <= 4.0 * se, "{}: {} vs {p}", c.label, c.non_sibling_frequency);
        assert!(c.estimand("p_dn_lower_bound").unwrap().mean <= p);
    }
}

#[test]
fn failed_replicates_are_listed_and_the_rest_flushed() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        name: "too-small".into(),
        cells: vec![Cell {
            label: "tiny".into(),
            model: ModelSource::Inline(ModelSpec::mitosis(0.8, 0.8)),
            z0: TypedVector::from([1, 1]),
            n: 3,
        }],
        sample_rule: SampleSizeRule::Fixed { r: 17 },
        replicates: 3,
        master_seed: 1,
        estimators: vec![EstimatorKind::Mom],
        ci_level: 0.95,
        output_dir: dir.path().to_path_buf(),
        histogram_bins: 10,
        notes: vec![],
    };
    // every mitosis generation three population has exactly 16 members
    let summary = run_experiment(&config, 1).unwrap();
    assert!(!summary.succeeded());
    assert_eq!(summary.failures.len(), 3);
    let manifest = std::fs::read_to_string(summary.output_dir.join("failures.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 4);
    assert!(summary.output_dir.join("summary.csv").exists());
    assert_eq!(summary.cells[0].replicates, 0);

    let path = dir.path().join("config.json");
    std::fs::write(&path, serde_json::to_string(&config).unwrap()).unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_broodsize"))
        .args(["experiment", "--config", path.to_str().unwrap(), "--workers", "1"])
        .env("BROODSIZE_OUT_DIR", dir.path().join("from-env"))
        .output()
        .unwrap();
    assert!(!status.status.success());
    assert!(dir.path().join("from-env/too-small/failures.csv").exists());
}

#[test]
fn histograms_of_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = in_dir(preset("table1", Scale::Desk, 3).unwrap(), dir.path());
    config.cells.truncate(1);
    config.replicates = 500;
    config.estimators = vec![EstimatorKind::MitosisClosedForm];
    let summary = run_experiment(&config, 2).unwrap();
    let hists = emit_histograms(&summary.cells[0].replicate_csv, 5).unwrap();
    let alpha = hists.iter().find(|h| h.column == "alpha_cf").unwrap();
    assert_eq!(alpha.total(), 500);
    let k = alpha.mode_bin();
    assert!(alpha.edges[k] <= 0.8 && 0.8 <= alpha.edges[k + 1], "{alpha:?}");
    let population = hists.iter().find(|h| h.column == "population").unwrap();
    assert_eq!(population.counts, vec![500]);
}

#[test]
fn histogram_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.csv");
    assert!(matches!(emit_histograms(&missing, 10), Err(CliError::FileNotFound(_))));
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    assert!(matches!(emit_histograms(&empty, 10), Err(CliError::MalformedCsv { .. })));
    let header_only = dir.path().join("header.csv");
    std::fs::write(&header_only, "replicate,x\n").unwrap();
    assert!(matches!(emit_histograms(&header_only, 10), Err(CliError::MalformedCsv { .. })));
    let text = dir.path().join("text.csv");
    std::fs::write(&text, "replicate,x\n0,1.5\n1,abc\n").unwrap();
    assert!(matches!(emit_histograms(&text, 10), Err(CliError::MalformedCsv { .. })));
    let constant = dir.path().join("constant.csv");
    std::fs::write(&constant, "replicate,x\n0,2\n1,2\n2,2\n").unwrap();
    let h = emit_histograms(&constant, 10).unwrap();
    assert_eq!(h, vec![Histogram { column: "x".into(), edges: vec![2.0, 2.0], counts: vec![3] }]);
}

#[test]
fn command_line_round_trip() {
    let bin = env!("CARGO_BIN_EXE_broodsize");
    let run = |args: &[&str]| Command::new(bin).args(args).output().unwrap();
    let out = run(&["oracle", "prob-distinct", "--sizes", "2,2,2,2,2,2,2,2", "-r", "2"]);
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("14/15\t"));
    assert!(!run(&["preset", "table3"]).status.success());
    assert!(!run(&["validate", "-m", "mitosis(0.8)"]).status.success());

    let dir = tempfile::tempdir().unwrap();
    let sample = dir.path().join("s.csv");
    let out = run(&["sample", "-m", "mitosis(0.8,0.8)", "--z0", "1,1", "-n", "12", "--out", sample.to_str().unwrap()]);
    assert!(out.status.success());
    let mom = run(&["estimate", "-i", sample.to_str().unwrap(), "--model", "mitosis(0.8,0.8)"]);
    let mom: serde_json::Value = serde_json::from_slice(&mom.stdout).unwrap();
    assert_eq!(mom["r"], 144);
    assert_eq!(mom["rho_hat"], 2.0);
    let cf = run(&["estimate", "-i", sample.to_str().unwrap(), "--estimator", "mitosis-closed-form"]);
    let cf: serde_json::Value = serde_json::from_slice(&cf.stdout).unwrap();
    assert_eq!(cf["estimate"]["b1_hat"], mom["u_n"][0]);

    let cfg = run(&["preset", "pdn-trend", "--scale", "paper"]);
    let cfg = ExperimentConfig::from_json(std::str::from_utf8(&cfg.stdout).unwrap()).unwrap();
    assert_eq!(cfg.replicates, 1000);
    let spectral: serde_json::Value = serde_json::from_slice(&run(&["spectral", "-m", "rds"]).stdout).unwrap();
    assert!((spectral["rho"].as_f64().unwrap() - 2.328872).abs() < 1e-5);
}
