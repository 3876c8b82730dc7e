//! Model names, fitted-model persistence and prediction from raw sequences.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{catalog_indices, extract, FeatureSet, Standardizer};
use crate::learn::{bic_predict, LinearModel, MlpArch, MlpModel, TreeHyper, TreeModel};
use crate::SCHEMA_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Bic,
    Linear,
    Mmit,
    Mlp,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Self::Bic => "BIC",
            Self::Linear => "linear",
            Self::Mmit => "mmit",
            Self::Mlp => "mlp",
        }
    }
}

/// A model family paired with a feature set, written like `mlp.4` or `BIC.1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModelSpec {
    pub family: Family,
    pub features: FeatureSet,
}

impl ModelSpec {
    /// The thirteen models compared in the benchmark, in reporting order.
    pub fn all() -> Vec<ModelSpec> {
        let mut specs = vec![ModelSpec {
            family: Family::Bic,
            features: FeatureSet::F1,
        }];
        for family in [Family::Linear, Family::Mmit, Family::Mlp] {
            for features in FeatureSet::ALL {
                specs.push(ModelSpec { family, features });
            }
        }
        specs
    }

    pub fn parse(name: &str) -> Result<Self> {
        let (family, set) = name.split_once('.').ok_or_else(|| {
            Error::Config(format!("model name `{name}` lacks a feature-set suffix"))
        })?;
        let family = match family {
            "BIC" | "bic" => Family::Bic,
            "linear" => Family::Linear,
            "mmit" => Family::Mmit,
            "mlp" => Family::Mlp,
            other => return Err(Error::Config(format!("unknown model family `{other}`"))),
        };
        let features = FeatureSet::parse(set)?;
        if family == Family::Bic && features != FeatureSet::F1 {
            return Err(Error::Config("BIC is only defined as BIC.1".into()));
        }
        Ok(Self { family, features })
    }
}

impl std::fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}.{}", self.family.name(), self.features.suffix())
    }
}

impl Serialize for ModelSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ModelSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let name = String::deserialize(d)?;
        ModelSpec::parse(&name).map_err(serde::de::Error::custom)
    }
}

/// Hyperparameters picked for a fitted model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hyperparameters {
    None,
    L1 { strength: f64 },
    Tree(TreeHyper),
    Mlp(MlpArch),
}

impl std::fmt::Display for Hyperparameters {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::None => Ok(()),
            Self::L1 { strength } => write!(f, "l1={strength}"),
            Self::Tree(h) => write!(f, "{h}"),
            Self::Mlp(a) => write!(f, "{a}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Parameters {
    Bic,
    Linear(LinearModel),
    Tree(TreeModel),
    Mlp(MlpModel),
}

/// A trained model together with everything needed to apply it to a raw sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub model_type: ModelSpec,
    /// Catalog features the model consumes, in input order.
    pub feature_names: Vec<String>,
    /// Fitted on training rows; its means also impute non-finite test values.
    pub standardizer: Standardizer,
    pub parameters: Parameters,
    pub hyperparameters: Hyperparameters,
    pub seed: u64,
    pub margin: f64,
    #[serde(default = "schema_version")]
    pub schema_version: u32,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

impl FittedModel {
    /// Predict from a standardized feature row.
    pub fn predict_standardized(&self, x: &[f64]) -> f64 {
        match &self.parameters {
            Parameters::Bic => unreachable!("BIC predicts from the sequence length"),
            Parameters::Linear(m) => m.predict(x),
            Parameters::Tree(m) => m.predict(x),
            Parameters::Mlp(m) => m.predict(x),
        }
    }

    /// Predict from a full catalog row and the sequence length.
    ///
    /// Returns the prediction and whether any feature had to be imputed.
    pub fn predict_catalog(&self, catalog: &[f64], length: usize) -> Result<(f64, bool)> {
        if matches!(self.parameters, Parameters::Bic) {
            return Ok((bic_predict(length)?, false));
        }
        let indices = catalog_indices(&self.feature_names)?;
        let raw: Vec<f64> = indices.iter().map(|&i| catalog[i]).collect();
        let (x, imputed) = self.standardizer.apply_row(&raw);
        Ok((self.predict_standardized(&x), imputed))
    }

    pub fn predict_values(&self, values: &[f64]) -> Result<(f64, bool)> {
        self.predict_catalog(&extract(values), values.len())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: Self = serde_json::from_str(&text)?;
        if model.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "model schema version {} is not supported (expected {SCHEMA_VERSION})",
                model.schema_version
            )));
        }
        Ok(model)
    }
}
