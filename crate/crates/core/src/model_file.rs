//! Serializable model descriptions, as read from JSON model files.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    mitosis_model, rds_model, BranchingModel, OffspringLaw, RdsConfig, TypedVector,
};
use crate::scalar::{lit, Real};

/// Either a built-in model or explicit offspring laws.
///
/// ```json
/// {"builtin": {"name": "mitosis", "alpha": 0.8, "theta": 0.8}}
/// {"type_names": ["a", "b"], "laws": [{"support": [{"brood": [1, 1], "p": 1.0}]}, ...]}
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSpec {
    Builtin {
        builtin: BuiltinModel,
    },
    Explicit {
        #[serde(default)]
        type_names: Option<Vec<String>>,
        laws: Vec<LawSpec>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum BuiltinModel {
    Mitosis {
        alpha: f64,
        theta: f64,
    },
    Rds {
        #[serde(default)]
        config: Option<RdsConfig<f64>>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LawSpec {
    pub support: Vec<WeightedBrood>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedBrood {
    pub brood: Vec<u64>,
    pub p: f64,
}

impl ModelSpec {
    pub fn mitosis(alpha: f64, theta: f64) -> Self {
        ModelSpec::Builtin {
            builtin: BuiltinModel::Mitosis { alpha, theta },
        }
    }

    pub fn rds() -> Self {
        ModelSpec::Builtin {
            builtin: BuiltinModel::Rds { config: None },
        }
    }

    pub fn build<T: Real>(&self) -> Result<BranchingModel<T>> {
        match self {
            ModelSpec::Builtin {
                builtin: BuiltinModel::Mitosis { alpha, theta },
            } => mitosis_model(lit::<T>(*alpha), lit::<T>(*theta)),
            ModelSpec::Builtin {
                builtin: BuiltinModel::Rds { config },
            } => {
                let config: RdsConfig<T> = match config {
                    None => RdsConfig::default(),
                    Some(c) => RdsConfig {
                        type_names: c.type_names.clone(),
                        pop_props: c.pop_props.iter().map(|&x| lit(x)).collect(),
                        max_surveys: c.max_surveys.clone(),
                        weights: c
                            .weights
                            .iter()
                            .map(|row| row.iter().map(|&x| lit(x)).collect())
                            .collect(),
                    },
                };
                rds_model(&config)
            }
            ModelSpec::Explicit { type_names, laws } => {
                let dim = laws.len();
                let laws = laws
                    .iter()
                    .map(|law| {
                        let entries = law
                            .support
                            .iter()
                            .map(|w| (TypedVector::new(w.brood.clone()), lit::<T>(w.p)))
                            .collect();
                        OffspringLaw::new(dim, entries)
                    })
                    .collect::<Result<Vec<_>>>()?;
                match type_names {
                    Some(names) => BranchingModel::new(names.clone(), laws),
                    None => BranchingModel::from_laws(laws),
                }
            }
        }
    }

    /// Explicit description of an existing model.
    pub fn from_model<T: Real>(model: &BranchingModel<T>) -> Self {
        ModelSpec::Explicit {
            type_names: Some(model.type_names().to_vec()),
            laws: model
                .laws()
                .iter()
                .map(|law| LawSpec {
                    support: law
                        .iter()
                        .map(|(v, p)| WeightedBrood {
                            brood: v.as_slice().to_vec(),
                            p: p.to_f64().unwrap(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::ModelConstructionFailed(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_builtin_and_explicit() {
        let m =
            ModelSpec::from_json(r#"{"builtin": {"name": "mitosis", "alpha": 0.9, "theta": 0.7}}"#)
                .unwrap();
        assert_eq!(m, ModelSpec::mitosis(0.9, 0.7));
        assert_eq!(m.build::<f64>().unwrap().dim(), 2);
        let r = ModelSpec::from_json(r#"{"builtin": {"name": "rds"}}"#).unwrap();
        assert_eq!(r.build::<f64>().unwrap().dim(), 4);
        let e = ModelSpec::from_json(
            r#"{"laws": [{"support": [{"brood": [1, 1], "p": 1.0}]},
                         {"support": [{"brood": [2, 0], "p": 0.5}, {"brood": [0, 3], "p": 0.5}]}]}"#,
        )
        .unwrap();
        let model = e.build::<f64>().unwrap();
        assert_eq!(ModelSpec::from_model(&model).build::<f64>().unwrap(), model);
    }

    #[test]
    fn rejects_invalid_models() {
        let zero = ModelSpec::from_json(r#"{"laws": [{"support": [{"brood": [0, 0], "p": 1.0}]}, {"support": [{"brood": [1, 1], "p": 1.0}]}]}"#)
            .unwrap();
        assert_eq!(zero.build::<f64>(), Err(Error::ZeroVectorInSupport));
        assert!(ModelSpec::from_json("{\"nonsense\": 1}").is_err());
    }
}
