//! Replication harness: simulate, sample and estimate for every replicate of
//! every cell, then aggregate into long-format summaries.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use broodsize::{
    amle_fit, asymptotic_variances, draw_family_sample, is_non_sibling, mitosis_closed_form,
    mitosis_model, mom_confidence, mom_estimates, perron, reproduction_matrix, sampling,
    simulate_to_families, Bounds, MitosisCounts, ModelF64, PerronPairF64, SeedSpec, SimOptions,
    VariancesF64,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{EstimatorKind, ExperimentConfig, ResolvedCell};
use crate::error::{CliError, Result};
use crate::histogram::{emit_histograms, write_histograms};

/// Box for the mitosis likelihood, kept off the reducible edges.
const MITOSIS_EDGE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimandSummary {
    pub estimand: String,
    pub theoretical: Option<f64>,
    pub mean: f64,
    pub sd: f64,
    /// Fraction of replicates whose interval covered the theoretical value.
    pub coverage: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellSummary {
    pub label: String,
    pub n: usize,
    pub r: u64,
    pub replicates: usize,
    pub estimands: Vec<EstimandSummary>,
    pub non_sibling_frequency: f64,
    pub replicate_csv: PathBuf,
}

impl CellSummary {
    pub fn estimand(&self, name: &str) -> Option<&EstimandSummary> {
        self.estimands.iter().find(|e| e.estimand == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Failure {
    pub cell: String,
    pub replicate: usize,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RuntimeStats {
    pub workers: usize,
    pub wall_seconds: f64,
    pub cell_seconds: Vec<(String, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplicationSummary {
    pub name: String,
    pub replicates_requested: usize,
    pub cells: Vec<CellSummary>,
    pub failures: Vec<Failure>,
    pub runtime: RuntimeStats,
    pub output_dir: PathBuf,
}

impl ReplicationSummary {
    pub fn succeeded(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn cell(&self, label: &str) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.label == label)
    }
}

/// Quantities fixed by the cell's model and used for every replicate.
struct CellContext<'a> {
    resolved: &'a ResolvedCell,
    index: usize,
    r: u64,
    pair: PerronPairF64,
    variances: VariancesF64,
    columns: Vec<Column>,
}

/// One per-replicate output column and the theoretical value it estimates.
#[derive(Clone, Debug)]
struct Column {
    name: String,
    theoretical: Option<f64>,
    /// Name of the 0/1 column recording interval coverage for this estimand.
    coverage: Option<String>,
    summarize: bool,
}

impl Column {
    fn estimand(name: impl Into<String>, theoretical: Option<f64>) -> Self {
        Column { name: name.into(), theoretical, coverage: None, summarize: true }
    }

    fn auxiliary(name: impl Into<String>) -> Self {
        Column { name: name.into(), theoretical: None, coverage: None, summarize: false }
    }
}

/// Values are written in column order; `None` is an empty field.
type Row = Vec<Option<f64>>;

impl<'a> CellContext<'a> {
    fn new(config: &ExperimentConfig, resolved: &'a ResolvedCell, index: usize) -> Result<Self> {
        let model = &resolved.model;
        let pair = perron(&reproduction_matrix(model))?;
        let variances = asymptotic_variances(model, &pair);
        let r = config.sample_rule.r_for(resolved.cell.n)?;
        let mut columns = vec![
            Column::auxiliary("population_prev"),
            Column::auxiliary("population"),
            Column::auxiliary("non_sibling"),
        ];
        for kind in &config.estimators {
            match kind {
                EstimatorKind::Mom => {
                    let mut rho = Column::estimand("rho_hat", Some(pair.rho));
                    rho.coverage = Some("covers_rho".into());
                    columns.push(rho);
                    for (i, b) in pair.b.iter().enumerate() {
                        let mut col = Column::estimand(format!("b{}_hat", i + 1), Some(*b));
                        col.coverage = Some(format!("covers_b{}", i + 1));
                        columns.push(col);
                    }
                    columns.push(Column::auxiliary("covers_rho"));
                    for i in 0..model.dim() {
                        columns.push(Column::auxiliary(format!("covers_b{}", i + 1)));
                    }
                }
                EstimatorKind::MitosisClosedForm => {
                    let (alpha, theta) = resolved.mitosis.expect("checked in resolve");
                    columns.push(Column::estimand("alpha_cf", Some(alpha)));
                    columns.push(Column::estimand("theta_cf", Some(theta)));
                    columns.push(Column::estimand("b1_cf", Some(pair.b[0])));
                    columns.push(Column::auxiliary("cf_sign"));
                    columns.push(Column::auxiliary("cf_interior"));
                }
                EstimatorKind::Amle => {
                    let (alpha, theta) = resolved.mitosis.expect("checked in resolve");
                    columns.push(Column::estimand("alpha_amle", Some(alpha)));
                    columns.push(Column::estimand("theta_amle", Some(theta)));
                    columns.push(Column::auxiliary("amle_loglik"));
                    columns.push(Column::auxiliary("amle_converged"));
                }
                EstimatorKind::ProbDistinct => {
                    columns.push(Column::estimand("p_dn", None));
                    columns.push(Column::estimand("p_dn_lower_bound", None));
                }
            }
        }
        Ok(CellContext { resolved, index, r, pair, variances, columns })
    }

    fn run_replicate(&self, config: &ExperimentConfig, replicate: usize) -> Result<Row> {
        let model = &self.resolved.model;
        let cell = &self.resolved.cell;
        let seed = SeedSpec::new(config.master_seed).with_cell(self.index as u64).with_replicate(replicate as u64);
        let (_, stream) = simulate_to_families(model, &cell.z0, cell.n, seed, &SimOptions::default())?;
        let sample = draw_family_sample(&stream, self.r, seed.sampling_key(cell.n))?;
        let broods = sample.broods();
        let flag = |b: bool| Some(if b { 1.0 } else { 0.0 });
        let mut row: Row = vec![
            Some(stream.family_count() as f64),
            Some(sample.population_total as f64),
            flag(is_non_sibling(&sample)),
        ];
        for kind in &config.estimators {
            match kind {
                EstimatorKind::Mom => {
                    let est = mom_confidence(&mom_estimates::<f64>(&broods)?, &self.variances, config.ci_level)?;
                    row.push(Some(est.rho_hat));
                    row.extend(est.u_n.iter().map(|&u| Some(u)));
                    // a degenerate interval is a point and coverage is not meaningful
                    let covers = |ci: (f64, f64), truth: f64| flag(ci.0 <= truth && truth <= ci.1);
                    row.push(match (est.rho_degenerate, est.ci_rho) {
                        (false, Some(ci)) => covers(ci, self.pair.rho),
                        _ => None,
                    });
                    let ci_b = est.ci_b.unwrap_or_default();
                    for (i, &b) in self.pair.b.iter().enumerate() {
                        row.push(ci_b.get(i).and_then(|&ci| covers(ci, b)));
                    }
                }
                EstimatorKind::MitosisClosedForm => {
                    let c = MitosisCounts::from_sample(&broods)?;
                    let est = mitosis_closed_form(c.n1, c.nb, c.n2, c.r())?;
                    row.extend([
                        Some(est.alpha_hat),
                        Some(est.theta_hat),
                        Some(est.b1_hat),
                        Some(est.sign as f64),
                        flag(est.status == broodsize::ClosedFormStatus::Interior),
                    ]);
                }
                EstimatorKind::Amle => {
                    let fit = fit_mitosis(&broods)?;
                    row.extend([
                        Some(fit.theta_hat[0]),
                        Some(fit.theta_hat[1]),
                        Some(fit.loglik),
                        flag(fit.converged),
                    ]);
                }
                EstimatorKind::ProbDistinct => {
                    let hist = sampling::size_histogram(&stream);
                    let p: f64 = sampling::prob_distinct_from_histogram(&hist, self.r)?;
                    let m = stream.family_count() as f64;
                    let r = self.r as f64;
                    row.push(Some(p));
                    row.push(Some(1.0 - r * (r - 1.0) / m));
                }
            }
        }
        debug_assert_eq!(row.len(), self.columns.len());
        Ok(row)
    }
}

/// Asymptotic MLE of `(alpha, theta)` for the mitosis model.
///
/// The optimizer starts from the closed-form root when it lies inside the box
/// and from the center otherwise; the multi-start jitter covers the rest.
pub fn fit_mitosis(broods: &[broodsize::TypedVector]) -> Result<broodsize::MleFit> {
    let bounds = Bounds::new(vec![MITOSIS_EDGE; 2], vec![1.0 - MITOSIS_EDGE; 2])?;
    let c = MitosisCounts::from_sample(broods)?;
    let cf = mitosis_closed_form(c.n1, c.nb, c.n2, c.r())?;
    let clamp = |x: f64| x.clamp(MITOSIS_EDGE, 1.0 - MITOSIS_EDGE);
    let start = if cf.alpha_hat.is_finite() && cf.theta_hat.is_finite() {
        vec![clamp(cf.alpha_hat), clamp(cf.theta_hat)]
    } else {
        vec![0.5, 0.5]
    };
    let family = |t: &[f64]| -> broodsize::Result<ModelF64> { mitosis_model(t[0], t[1]) };
    Ok(amle_fit(family, broods, &start, &bounds)?)
}

/// Mean and sample standard deviation, accumulated in index order.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// Shortest representation that parses back to the same float.
fn fmt_value(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Runs every replicate of every cell on a pool of `workers` threads and
/// writes the outputs under `output_dir/name`.
///
/// Files written:
/// - `replicates_<label>.csv`: one row per successful replicate, ordered by
///   replicate index; columns `replicate`, `population_prev` (families at
///   generation `n-1`), `population` (`|Z_n|`), `non_sibling`, then the
///   estimator columns.
/// - `histogram_<label>.csv`: binned per-replicate columns.
/// - `summary.csv`: `cell,label,n,r,estimand,theoretical,mean,sd,coverage,replicates`.
/// - `failures.csv`: `cell,replicate,error`.
/// - `metadata.json`: the configuration and protocol notes.
/// - `runtime.json`: timings, kept apart so the rest is reproducible.
pub fn run_experiment(config: &ExperimentConfig, workers: usize) -> Result<ReplicationSummary> {
    let started = Instant::now();
    let resolved = config.resolve()?;
    let dir = config.output_dir.join(&config.name);
    fs::create_dir_all(&dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::InvalidConfig(format!("thread pool: {e}")))?;

    let mut cells = Vec::new();
    let mut failures = Vec::new();
    let mut cell_seconds = Vec::new();
    for (index, cell) in resolved.iter().enumerate() {
        let cell_start = Instant::now();
        let ctx = CellContext::new(config, cell, index)?;
        let outcomes: Vec<Result<Row>> =
            pool.install(|| (0..config.replicates).into_par_iter().map(|rep| ctx.run_replicate(config, rep)).collect());
        let mut rows = Vec::new();
        for (rep, outcome) in outcomes.into_iter().enumerate() {
            match outcome {
                Ok(row) => rows.push((rep, row)),
                Err(e) => failures.push(Failure { cell: cell.cell.label.clone(), replicate: rep, error: e.to_string() }),
            }
        }
        let csv_path = dir.join(format!("replicates_{}.csv", cell.cell.label));
        write_replicates(&csv_path, &ctx.columns, &rows)?;
        if !rows.is_empty() {
            let histograms = emit_histograms(&csv_path, config.histogram_bins)?;
            write_histograms(&histograms, &dir.join(format!("histogram_{}.csv", cell.cell.label)))?;
        }
        cells.push(summarize(&ctx, &rows, csv_path));
        cell_seconds.push((cell.cell.label.clone(), cell_start.elapsed().as_secs_f64()));
    }

    write_summary(&dir.join("summary.csv"), &cells)?;
    write_failures(&dir.join("failures.csv"), &failures)?;
    let metadata = serde_json::json!({
        "config": config,
        "sample_sizes": cells.iter().map(|c| serde_json::json!({"label": c.label, "n": c.n, "r": c.r})).collect::<Vec<_>>(),
        "seeding": "replicate k of cell c uses SeedSpec(master_seed).with_cell(c).with_replicate(k)",
    });
    fs::write(dir.join("metadata.json"), serde_json::to_string_pretty(&metadata)? + "\n")?;
    let runtime = RuntimeStats { workers: workers.max(1), wall_seconds: started.elapsed().as_secs_f64(), cell_seconds };
    fs::write(dir.join("runtime.json"), serde_json::to_string_pretty(&runtime)? + "\n")?;

    Ok(ReplicationSummary {
        name: config.name.clone(),
        replicates_requested: config.replicates,
        cells,
        failures,
        runtime,
        output_dir: dir,
    })
}

fn write_replicates(path: &Path, columns: &[Column], rows: &[(usize, Row)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["replicate".to_string()];
    header.extend(columns.iter().map(|c| c.name.clone()));
    w.write_record(&header)?;
    for (rep, row) in rows {
        let mut record = vec![rep.to_string()];
        record.extend(row.iter().map(|v| fmt_value(*v)));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

fn summarize(ctx: &CellContext, rows: &[(usize, Row)], replicate_csv: PathBuf) -> CellSummary {
    let column_values = |j: usize| -> Vec<f64> { rows.iter().filter_map(|(_, row)| row[j]).collect() };
    let position = |name: &str| ctx.columns.iter().position(|c| c.name == name);
    let estimands = ctx
        .columns
        .iter()
        .enumerate()
        .filter(|(_, c)| c.summarize)
        .map(|(j, c)| {
            let (mean, sd) = mean_sd(&column_values(j));
            let coverage = c
                .coverage
                .as_deref()
                .and_then(position)
                .map(&column_values)
                .filter(|v| !v.is_empty())
                .map(|v| mean_sd(&v).0);
            EstimandSummary { estimand: c.name.clone(), theoretical: c.theoretical, mean, sd, coverage }
        })
        .collect();
    let non_sibling = position("non_sibling").map(|j| mean_sd(&column_values(j)).0).unwrap_or(f64::NAN);
    CellSummary {
        label: ctx.resolved.cell.label.clone(),
        n: ctx.resolved.cell.n,
        r: ctx.r,
        replicates: rows.len(),
        estimands,
        non_sibling_frequency: non_sibling,
        replicate_csv,
    }
}

fn write_summary(path: &Path, cells: &[CellSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["cell", "label", "n", "r", "estimand", "theoretical", "mean", "sd", "coverage", "replicates"])?;
    for (i, cell) in cells.iter().enumerate() {
        let mut emit = |estimand: &str, theoretical: Option<f64>, mean: f64, sd: Option<f64>, coverage: Option<f64>| {
            w.write_record([
                i.to_string(),
                cell.label.clone(),
                cell.n.to_string(),
                cell.r.to_string(),
                estimand.to_string(),
                fmt_value(theoretical),
                fmt_value(Some(mean)),
                fmt_value(sd),
                fmt_value(coverage),
                cell.replicates.to_string(),
            ])
        };
        for e in &cell.estimands {
            emit(&e.estimand, e.theoretical, e.mean, Some(e.sd), e.coverage)?;
        }
        emit("non_sibling", None, cell.non_sibling_frequency, None, None)?;
    }
    w.flush()?;
    Ok(())
}

fn write_failures(path: &Path, failures: &[Failure]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["cell", "replicate", "error"])?;
    for f in failures {
        w.write_record([f.cell.clone(), f.replicate.to_string(), f.error.clone()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `text` to stdout or to `path` if given.
pub fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            fs::write(p, text)?;
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_sd_of_small_samples() {
        assert_eq!(mean_sd(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn floats_round_trip_through_text() {
        for x in [0.1, 1.0 / 3.0, 2.328872e-7, 123456.789] {
            assert_eq!(fmt_value(Some(x)).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_value(None), "");
    }
}
