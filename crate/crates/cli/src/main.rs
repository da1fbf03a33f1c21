use std::path::{Path, PathBuf};
use std::process::ExitCode;

use broodsize::{
    asymptotic_variances, draw_family_sample, mom_confidence, mom_estimates, pair_pmf_exact, perron,
    prob_distinct_exact, reproduction_matrix, simulate_aggregate, size_biased_pmf, validate_model,
    ModelF64, Rational, SampleSizeRule, SeedSpec, SimOptions, TypedVector,
};
use broodsize_cli::config::{parse_model_arg, parse_vector};
use broodsize_cli::runner::{fit_mitosis, write_output};
use broodsize_cli::histogram::write_histograms_to;
use broodsize_cli::{emit_histograms, preset, run_experiment, write_histograms, CliError, ExperimentConfig, Result, Scale};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "broodsize", version, about = "Family-size sampling from multi-type branching processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// `mitosis(ALPHA,THETA)`, `rds`, or a JSON model file.
    #[arg(long, short)]
    model: String,
}

#[derive(Args, Clone)]
struct TreeArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Initial population, e.g. `1,1`; defaults to one individual of type 1.
    #[arg(long)]
    z0: Option<String>,
    /// Generation to reach.
    #[arg(long, short)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Replicate index inside the seed space.
    #[arg(long, default_value_t = 0)]
    replicate: u64,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Worker threads for replicates.
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
    /// Output root; overrides the configuration.
    #[arg(long, env = "BROODSIZE_OUT_DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model against the standing assumptions.
    Validate {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Reproduction matrix, Perron pair, size-biased law and limit variances.
    Spectral {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Simulate generation counts; CSV `generation,type,count,children`.
    Simulate {
        #[command(flatten)]
        tree: TreeArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate to generation n and sample r individuals; CSV
    /// `draw,parent_type,parent_index,x1..xl`.
    Sample {
        #[command(flatten)]
        tree: TreeArgs,
        /// Sample size; defaults to n^2.
        #[arg(long, short)]
        r: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate from a sample CSV as written by `sample`.
    Estimate {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = EstimatorArg::Mom)]
        estimator: EstimatorArg,
        /// Model whose limit variances set the intervals; plug-in variances otherwise.
        #[arg(long)]
        model: Option<String>,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
    },
    /// Exact combinatorial oracles.
    Oracle {
        #[command(subcommand)]
        which: OracleCommand,
    },
    /// Run an experiment from a JSON configuration.
    Experiment {
        #[arg(long, short)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Print a preset configuration, or run it with `--run`.
    Preset {
        name: String,
        #[arg(long, value_enum, default_value_t = Scale::Desk)]
        scale: Scale,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        run: bool,
        #[command(flatten)]
        run_args: RunArgs,
    },
    /// Bin the columns of a per-replicate CSV.
    Histogram {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, default_value_t = 30)]
        bins: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum OracleCommand {
    /// P(no two of r draws share a family), as an exact fraction.
    ProbDistinct {
        /// Family sizes, e.g. `2,1,3`.
        #[arg(long)]
        sizes: String,
        #[arg(long, short)]
        r: u64,
    },
    /// Joint law of two sampled broods given the parent generation; CSV `u,v,p`.
    PairPmf {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        z_prev: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Mom,
    Amle,
    MitosisClosedForm,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_model(arg: &str) -> Result<ModelF64> {
    Ok(parse_model_arg(arg)?.build()?)
}

fn json(value: &impl serde::Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn brood_string(v: &TypedVector) -> String {
    v.as_slice().iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";")
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Validate { model } => {
            let report = validate_model(&load_model(&model.model)?);
            print!("{}", json(&report)?);
            Ok(if report.assumption1_ok && report.assumption2_ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Spectral { model } => {
            let model = load_model(&model.model)?;
            let m = reproduction_matrix(&model);
            let pair = perron(&m)?;
            let ps = size_biased_pmf(&model, &pair);
            let var = asymptotic_variances(&model, &pair);
            let out = serde_json::json!({
                "type_names": model.type_names(),
                "matrix": m.rows(),
                "rho": pair.rho,
                "b": pair.b,
                "size_biased": ps.iter().map(|(v, p)| serde_json::json!({"brood": v, "p": p})).collect::<Vec<_>>(),
                "sigma_t_sq": var.sigma_t_sq,
                "sigma": var.sigma,
            });
            print!("{}", json(&out)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate { tree, out } => {
            let (model, z0, seed) = tree_setup(&tree)?;
            let trace = simulate_aggregate(&model, &z0, tree.n, seed)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["generation", "type", "count", "children"])?;
            for (k, z) in trace.z.iter().enumerate() {
                for (t, &c) in z.as_slice().iter().enumerate() {
                    let children = trace.s.get(k).map(|s| s[t].to_string()).unwrap_or_default();
                    w.write_record([k.to_string(), (t + 1).to_string(), c.to_string(), children])?;
                }
            }
            write_csv(w, out.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Sample { tree, r, out } => {
            let (model, z0, seed) = tree_setup(&tree)?;
            let r = match r {
                Some(r) => r,
                None => SampleSizeRule::default().r_for(tree.n)?,
            };
            let (_, stream) = broodsize::simulate_to_families(&model, &z0, tree.n, seed, &SimOptions::default())?;
            let sample = draw_family_sample(&stream, r, seed.sampling_key(tree.n))?;
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["draw".to_string(), "parent_type".into(), "parent_index".into()];
            header.extend((1..=model.dim()).map(|i| format!("x{i}")));
            w.write_record(&header)?;
            for (d, rec) in sample.records.iter().enumerate() {
                let mut row = vec![d.to_string(), (rec.parent_type + 1).to_string(), rec.parent_index.to_string()];
                row.extend(rec.brood.as_slice().iter().map(|c| c.to_string()));
                w.write_record(&row)?;
            }
            write_csv(w, out.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Estimate { input, estimator, model, level } => {
            let sample = read_sample(&input)?;
            let out = match estimator {
                EstimatorArg::Mom => {
                    let est = mom_estimates::<f64>(&sample)?;
                    let var = match model {
                        Some(m) => {
                            let model = load_model(&m)?;
                            asymptotic_variances(&model, &perron(&reproduction_matrix(&model))?)
                        }
                        None => broodsize::plugin_variances(&sample)?,
                    };
                    serde_json::to_value(mom_confidence(&est, &var, level)?)?
                }
                EstimatorArg::MitosisClosedForm => {
                    let c = broodsize::MitosisCounts::from_sample(&sample)?;
                    serde_json::json!({
                        "counts": c,
                        "estimate": broodsize::mitosis_closed_form(c.n1, c.nb, c.n2, c.r())?,
                    })
                }
                EstimatorArg::Amle => serde_json::to_value(fit_mitosis(&sample)?)?,
            };
            print!("{}", json(&out)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle { which } => match which {
            OracleCommand::ProbDistinct { sizes, r } => {
                let sizes = parse_vector(&sizes)?.into_inner();
                let p: Rational = prob_distinct_exact(&sizes, r)?;
                let approx: f64 = prob_distinct_exact(&sizes, r)?;
                println!("{p}\t{approx}");
                Ok(ExitCode::SUCCESS)
            }
            OracleCommand::PairPmf { model, z_prev } => {
                let model = load_model(&model.model)?;
                let pmf = pair_pmf_exact(&model, &parse_vector(&z_prev)?)?;
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(["u", "v", "p"])?;
                for (i, u) in pmf.support.iter().enumerate() {
                    for (j, v) in pmf.support.iter().enumerate() {
                        let p = pmf.probs[i][j];
                        if p > 0.0 {
                            w.write_record([brood_string(u), brood_string(v), format!("{p}")])?;
                        }
                    }
                }
                write_csv(w, None)?;
                Ok(ExitCode::SUCCESS)
            }
        },
        Command::Experiment { config, seed, run } => {
            let mut config = ExperimentConfig::load(&config)?;
            if let Some(seed) = seed {
                config.master_seed = seed;
            }
            execute(config, &run)
        }
        Command::Preset { name, scale, seed, replicates, run, run_args } => {
            let mut config = preset(&name, scale, seed)?;
            if let Some(k) = replicates {
                config.replicates = k;
            }
            if run {
                execute(config, &run_args)
            } else {
                print!("{}", json(&config)?);
                Ok(ExitCode::SUCCESS)
            }
        }
        Command::Histogram { input, bins, out } => {
            let histograms = emit_histograms(&input, bins)?;
            match out {
                Some(path) => write_histograms(&histograms, &path)?,
                None => write_histograms_to(&histograms, std::io::stdout().lock())?,
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn tree_setup(tree: &TreeArgs) -> Result<(ModelF64, TypedVector, SeedSpec)> {
    let model = load_model(&tree.model.model)?;
    let z0 = match &tree.z0 {
        Some(s) => parse_vector(s)?,
        None => TypedVector::unit(model.dim(), 0),
    };
    Ok((model, z0, SeedSpec::new(tree.seed).with_replicate(tree.replicate)))
}

fn write_csv(w: csv::Writer<Vec<u8>>, out: Option<&Path>) -> Result<()> {
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
    write_output(out, &String::from_utf8_lossy(&bytes))
}

/// Reads the `x1..xl` columns of a sample CSV.
fn read_sample(path: &Path) -> Result<Vec<TypedVector>> {
    if !path.exists() {
        return Err(CliError::FileNotFound(path.to_path_buf()));
    }
    let malformed = |reason: String| CliError::MalformedCsv { path: path.to_path_buf(), reason };
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let cols: Vec<usize> = (1..)
        .map_while(|i| headers.iter().position(|h| h == format!("x{i}")))
        .collect();
    if cols.is_empty() {
        return Err(malformed("no x1.. columns".into()));
    }
    let mut sample = Vec::new();
    for record in reader.records() {
        let record = record?;
        let counts = cols
            .iter()
            .map(|&j| record.get(j).unwrap_or("").parse::<u64>().map_err(|e| malformed(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        sample.push(TypedVector::new(counts));
    }
    if sample.is_empty() {
        return Err(malformed("no rows".into()));
    }
    Ok(sample)
}

fn execute(mut config: ExperimentConfig, run: &RunArgs) -> Result<ExitCode> {
    if let Some(out) = &run.out {
        config.output_dir = out.clone();
    }
    let summary = run_experiment(&config, run.workers)?;
    for cell in &summary.cells {
        println!("{} (n = {}, r = {}, {} replicates)", cell.label, cell.n, cell.r, cell.replicates);
        for e in &cell.estimands {
            let theo = e.theoretical.map(|t| format!("{t:.6}")).unwrap_or_else(|| "-".into());
            let cov = e.coverage.map(|c| format!("  coverage {c:.3}")).unwrap_or_default();
            println!("  {:<18} theoretical {theo:>10}  mean {:.6}  sd {:.6}{cov}", e.estimand, e.mean, e.sd);
        }
        println!("  non_sibling frequency {:.3}", cell.non_sibling_frequency);
    }
    println!("outputs in {}", summary.output_dir.display());
    if summary.succeeded() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("{} replicate(s) failed; see failures.csv", summary.failures.len());
        Ok(ExitCode::FAILURE)
    }
}
