//! JSON run configuration.
//!
//! Every field except `dataset` has a default, so the smallest valid file is
//!
//! ```json
//! { "dataset": { "path": "post-operative.data", "preset": "post_operative" } }
//! ```
//!
//! Relative dataset paths are resolved against the configuration file's
//! directory. Unknown keys are rejected at every level.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::AugmentParams;
use crate::bicluster::MiningParams;
use crate::dataset::{load_table, FeatureMatrix, TableSchema};
use crate::error::{Error, Result};
use crate::kgraph::TripleOptions;
use crate::tucker::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Original attribute triples only.
    Baseline,
    /// Original triples fused with bicluster-feature triples.
    Augmented,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Augmented => "augmented",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantSelection {
    Baseline,
    Augmented,
    #[default]
    Both,
}

impl VariantSelection {
    pub fn variants(self) -> Vec<Variant> {
        match self {
            VariantSelection::Baseline => vec![Variant::Baseline],
            VariantSelection::Augmented => vec![Variant::Augmented],
            VariantSelection::Both => vec![Variant::Baseline, Variant::Augmented],
        }
    }
}

impl FromStr for VariantSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(VariantSelection::Baseline),
            "augmented" => Ok(VariantSelection::Augmented),
            "both" => Ok(VariantSelection::Both),
            other => Err(Error::Config(format!(
                "unknown variant `{other}` (expected baseline, augmented or both)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    PostOperative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    /// Name written to the `dataset` column of metric tables; defaults to
    /// the file stem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<TableSchema>,
}

impl DatasetConfig {
    pub fn schema(&self) -> Result<TableSchema> {
        match (&self.preset, &self.schema) {
            (Some(Preset::PostOperative), None) => Ok(TableSchema::post_operative()),
            (None, Some(schema)) => Ok(schema.clone()),
            _ => Err(Error::Config("dataset needs exactly one of `preset` and `schema`".into())),
        }
    }

    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            self.path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into())
        })
    }

    pub fn load(&self) -> Result<FeatureMatrix> {
        let matrix = load_table(&self.path, &self.schema()?)?;
        if matrix.labels.is_none() {
            return Err(Error::Config("dataset schema declares no label column".into()));
        }
        Ok(matrix)
    }
}

/// Evaluation protocol switches; all off reproduces the default setting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Protocol {
    /// Fit normalization statistics and mine biclusters on training rows
    /// only (test rows still receive augmented features).
    #[serde(default)]
    pub train_only_preprocessing: bool,
    /// Drop every triple of test patients from the training graph instead of
    /// only their diagnoses.
    #[serde(default)]
    pub strict: bool,
    /// ROC score `p_m / (p_m + p_b)` instead of the raw malignant score.
    #[serde(default)]
    pub renormalized_roc: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub mining: MiningParams,
    #[serde(default = "RunConfig::default_bins")]
    pub n_bins: usize,
    #[serde(default)]
    pub triples: TripleOptions,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "RunConfig::default_ratios")]
    pub ratios: Vec<f64>,
    #[serde(default = "RunConfig::default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub variant: VariantSelection,
    #[serde(default = "RunConfig::default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub protocol: Protocol,
}

impl RunConfig {
    fn default_bins() -> usize {
        AugmentParams::default().n_bins
    }

    fn default_ratios() -> Vec<f64> {
        vec![0.1, 0.3, 0.5, 0.7, 0.9]
    }

    fn default_seeds() -> Vec<u64> {
        (0..10).collect()
    }

    fn default_output_dir() -> PathBuf {
        PathBuf::from("kgda-out")
    }

    /// Configuration with every default and the given dataset.
    pub fn for_dataset(dataset: DatasetConfig) -> Self {
        serde_json::from_value(serde_json::json!({ "dataset": dataset }))
            .expect("defaults form a valid configuration")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses, resolves the dataset path against the file's directory and
    /// validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_json(&text)?;
        if config.dataset.path.is_relative() {
            if let Some(dir) = path.parent() {
                config.dataset.path = dir.join(&config.dataset.path);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn augment_params(&self) -> AugmentParams {
        AugmentParams {
            mining: self.mining.clone(),
            n_bins: self.n_bins,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.schema()?;
        self.mining.validate()?;
        self.train.validate()?;
        if self.n_bins < 2 {
            return Err(Error::Config("n_bins must be at least 2".into()));
        }
        if self.triples.numeric_bins < 2 {
            return Err(Error::Config("triples.numeric_bins must be at least 2".into()));
        }
        if self.ratios.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("ratios and seeds must be non-empty".into()));
        }
        if let Some(r) = self.ratios.iter().find(|r| !(r.is_finite() && **r > 0.0 && **r < 1.0)) {
            return Err(Error::Config(format!("ratio {r} is outside (0, 1)")));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, without the output directory so
    /// that runs into different directories can be compared.
    pub fn canonical_hash(&self) -> String {
        let mut copy = self.clone();
        copy.output_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&copy).expect("serializable configuration");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{ "dataset": { "path": "pop.data", "preset": "post_operative" } }"#
    }

    #[test]
    fn defaults_fill_everything_but_the_dataset() {
        let c = RunConfig::from_json(minimal()).unwrap();
        c.validate().unwrap();
        assert_eq!(c.ratios, vec![0.1, 0.3, 0.5, 0.7, 0.9]);
        assert_eq!(c.seeds.len(), 10);
        assert_eq!(c.train, TrainConfig::default());
        assert_eq!(c.mining, MiningParams::default());
        assert_eq!(c.n_bins, 5);
        assert_eq!(c.variant, VariantSelection::Both);
        assert_eq!(c.protocol, Protocol::default());
        assert_eq!(c.dataset.display_name(), "pop");
    }

    #[test]
    fn for_dataset_matches_minimal_file() {
        let c = RunConfig::from_json(minimal()).unwrap();
        assert_eq!(RunConfig::for_dataset(c.dataset.clone()), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = r#"{ "dataset": { "path": "x", "preset": "post_operative" }, "epochs": 3 }"#;
        assert!(RunConfig::from_json(bad).is_err());
        let nested = r#"{ "dataset": { "path": "x", "preset": "post_operative" }, "train": { "lr": 1 } }"#;
        assert!(RunConfig::from_json(nested).is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        let mut c = RunConfig::from_json(minimal()).unwrap();
        c.ratios = vec![1.0];
        assert!(c.validate().is_err());
        let mut c = RunConfig::from_json(minimal()).unwrap();
        c.dataset.preset = None;
        assert!(c.validate().is_err());
        let mut c = RunConfig::from_json(minimal()).unwrap();
        c.train.input_dropout = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = RunConfig::from_json(minimal()).unwrap();
        let mut b = a.clone();
        b.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.canonical_hash(), b.canonical_hash());
        b.seeds = vec![3];
        assert_ne!(a.canonical_hash(), b.canonical_hash());
    }

    #[test]
    fn variant_selection_parses() {
        assert_eq!("both".parse::<VariantSelection>().unwrap().variants().len(), 2);
        assert_eq!("baseline".parse::<VariantSelection>().unwrap().variants(), vec![Variant::Baseline]);
        assert!("neither".parse::<VariantSelection>().is_err());
    }
}
