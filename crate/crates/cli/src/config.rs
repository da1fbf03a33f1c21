//! Experiment configuration and the built-in presets.

use std::path::{Path, PathBuf};

use broodsize::model_file::BuiltinModel;
use broodsize::{ModelF64, ModelSpec, SampleSizeRule, TypedVector};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// A model given inline or as a path to a JSON model file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSource {
    File { path: PathBuf },
    Inline(ModelSpec),
}

impl ModelSource {
    pub fn spec(&self) -> Result<ModelSpec> {
        match self {
            ModelSource::Inline(spec) => Ok(spec.clone()),
            ModelSource::File { path } => read_model_file(path),
        }
    }
}

pub fn read_model_file(path: &Path) -> Result<ModelSpec> {
    if !path.exists() {
        return Err(CliError::FileNotFound(path.to_path_buf()));
    }
    Ok(ModelSpec::from_json(&std::fs::read_to_string(path)?)?)
}

/// Parses `mitosis(0.8,0.8)`, `mitosis:0.8,0.8`, `rds`, or a model file path.
pub fn parse_model_arg(arg: &str) -> Result<ModelSpec> {
    let s = arg.trim();
    if s.eq_ignore_ascii_case("rds") {
        return Ok(ModelSpec::rds());
    }
    if let Some(rest) = s.strip_prefix("mitosis") {
        let inner = rest.trim_start_matches([':', '(']).trim_end_matches(')');
        let parts = parse_floats(inner)?;
        return match parts.as_slice() {
            [alpha, theta] => Ok(ModelSpec::mitosis(*alpha, *theta)),
            _ => Err(CliError::InvalidConfig(format!("mitosis needs two parameters, got {arg:?}"))),
        };
    }
    read_model_file(Path::new(s))
}

fn parse_floats(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| CliError::InvalidConfig(format!("{p:?}: {e}"))))
        .collect()
}

/// Parses a comma-separated count vector such as `1,1`.
pub fn parse_vector(s: &str) -> Result<TypedVector> {
    s.split(',')
        .map(|p| p.trim().parse::<u64>().map_err(|e| CliError::InvalidConfig(format!("{p:?}: {e}"))))
        .collect::<Result<Vec<_>>>()
        .map(TypedVector::new)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Mom,
    Amle,
    MitosisClosedForm,
    ProbDistinct,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// Reduced depth and replicate counts that run in minutes.
    #[default]
    Desk,
    /// The full protocol of the reference study.
    Paper,
}

/// One parameter combination of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub label: String,
    pub model: ModelSource,
    pub z0: TypedVector,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub cells: Vec<Cell>,
    #[serde(default)]
    pub sample_rule: SampleSizeRule,
    pub replicates: usize,
    pub master_seed: u64,
    pub estimators: Vec<EstimatorKind>,
    #[serde(default = "default_level")]
    pub ci_level: f64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    /// Free-form notes copied into the run metadata.
    #[serde(default)]
    pub notes: Vec<String>,
}

fn default_level() -> f64 {
    0.95
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_bins() -> usize {
    30
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(CliError::FileNotFound(path.to_path_buf()));
        }
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Builds every cell's model and checks the configuration as a whole.
    pub fn resolve(&self) -> Result<Vec<ResolvedCell>> {
        if self.replicates == 0 {
            return Err(CliError::InvalidConfig("replicates must be at least 1".into()));
        }
        if self.cells.is_empty() {
            return Err(CliError::InvalidConfig("no cells".into()));
        }
        if self.estimators.is_empty() {
            return Err(CliError::InvalidConfig("no estimators selected".into()));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(CliError::InvalidConfig(format!("ci_level {} outside (0, 1)", self.ci_level)));
        }
        if self.histogram_bins == 0 {
            return Err(CliError::InvalidConfig("histogram_bins must be positive".into()));
        }
        let mut labels = std::collections::HashSet::new();
        self.cells
            .iter()
            .map(|cell| {
                if !labels.insert(cell.label.as_str()) {
                    return Err(CliError::InvalidConfig(format!("duplicate cell label {:?}", cell.label)));
                }
                if cell.label.is_empty() || !cell.label.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
                    return Err(CliError::InvalidConfig(format!(
                        "cell label {:?} must be nonempty and use only letters, digits, '-', '_' or '.'",
                        cell.label
                    )));
                }
                let spec = cell.model.spec()?;
                let model: ModelF64 = spec.build()?;
                let report = broodsize::validate_model(&model);
                if !(report.assumption1_ok && report.assumption2_ok) {
                    return Err(CliError::InvalidConfig(format!(
                        "cell {}: model violates the standing assumptions: {}",
                        cell.label,
                        report.messages.join("; ")
                    )));
                }
                if cell.z0.dim() != model.dim() || cell.z0.total() == 0 {
                    return Err(CliError::InvalidConfig(format!(
                        "cell {}: z0 {} does not fit a {}-type model",
                        cell.label,
                        cell.z0,
                        model.dim()
                    )));
                }
                if cell.n == 0 {
                    return Err(CliError::InvalidConfig(format!("cell {}: n must be at least 1", cell.label)));
                }
                self.sample_rule.r_for(cell.n)?;
                let mitosis = match &spec {
                    ModelSpec::Builtin { builtin: BuiltinModel::Mitosis { alpha, theta } } => Some((*alpha, *theta)),
                    _ => None,
                };
                let needs_mitosis = self
                    .estimators
                    .iter()
                    .any(|e| matches!(e, EstimatorKind::Amle | EstimatorKind::MitosisClosedForm));
                if needs_mitosis && mitosis.is_none() {
                    return Err(CliError::InvalidConfig(format!(
                        "cell {}: amle and mitosis_closed_form need the built-in mitosis model",
                        cell.label
                    )));
                }
                Ok(ResolvedCell { cell: cell.clone(), model, mitosis })
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct ResolvedCell {
    pub cell: Cell,
    pub model: ModelF64,
    /// `(alpha, theta)` when the cell uses the built-in mitosis model.
    pub mitosis: Option<(f64, f64)>,
}

pub const PRESETS: [&str; 3] = ["table1", "table2", "pdn-trend"];

/// Configurations reproducing the reference simulation studies.
///
/// | preset    | desk                    | paper                   |
/// |-----------|-------------------------|-------------------------|
/// | table1    | n = 20, 200 replicates  | n = 20, 1000 replicates |
/// | table2    | n = 14, 200 replicates  | n = 20, 1000 replicates |
/// | pdn-trend | n = 8..14, 200 replicates | same, 1000 replicates |
///
/// All presets sample `r_n = n^2` individuals.
pub fn preset(name: &str, scale: Scale, master_seed: u64) -> Result<ExperimentConfig> {
    let replicates = match scale {
        Scale::Desk => 200,
        Scale::Paper => 1000,
    };
    let mitosis_cell = |alpha: f64, theta: f64, n: usize, label: String| Cell {
        label,
        model: ModelSource::Inline(ModelSpec::mitosis(alpha, theta)),
        z0: TypedVector::from([1, 1]),
        n,
    };
    let config = match name {
        "table1" => ExperimentConfig {
            name: "table1".into(),
            cells: [(0.8, 0.8), (0.8, 0.9), (0.9, 0.7), (0.9, 0.9)]
                .into_iter()
                .map(|(a, t)| mitosis_cell(a, t, 20, format!("alpha{a}_theta{t}")))
                .collect(),
            sample_rule: SampleSizeRule::default(),
            replicates,
            master_seed,
            estimators: vec![EstimatorKind::Mom, EstimatorKind::MitosisClosedForm, EstimatorKind::Amle],
            ci_level: 0.95,
            output_dir: default_output_dir(),
            histogram_bins: default_bins(),
            notes: vec!["mitosis model started from one cell of each type".into()],
        },
        "table2" => ExperimentConfig {
            name: "table2".into(),
            cells: vec![Cell {
                label: "rds".into(),
                model: ModelSource::Inline(ModelSpec::rds()),
                z0: TypedVector::unit(4, 0),
                n: match scale {
                    Scale::Desk => 14,
                    Scale::Paper => 20,
                },
            }],
            sample_rule: SampleSizeRule::default(),
            replicates,
            master_seed,
            estimators: vec![EstimatorKind::Mom],
            ci_level: 0.95,
            output_dir: default_output_dir(),
            histogram_bins: default_bins(),
            notes: vec![
                "sample size r_n = n^2 (not stated for this study; follows the mitosis protocol)".into(),
                "tree started from a single seed respondent of type A".into(),
            ],
        },
        "pdn-trend" => ExperimentConfig {
            name: "pdn-trend".into(),
            cells: [8, 10, 12, 14].into_iter().map(|n| mitosis_cell(0.8, 0.8, n, format!("n{n}"))).collect(),
            sample_rule: SampleSizeRule::default(),
            replicates,
            master_seed,
            estimators: vec![EstimatorKind::ProbDistinct],
            ci_level: 0.95,
            output_dir: default_output_dir(),
            histogram_bins: default_bins(),
            notes: vec!["P(D_n) averaged as the exact conditional probability per tree".into()],
        },
        other => return Err(CliError::UnknownPreset(other.to_string())),
    };
    Ok(config)
}
