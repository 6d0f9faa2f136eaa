use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_versioned_json, sha256_hex, write_versioned_json};

pub const SCHEMA_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalFeature {
    pub name: String,
    pub vocabulary: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericFeature {
    pub name: String,
    pub bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceFeature {
    pub name: String,
    pub length: usize,
    pub bins: usize,
}

/// Column layout of a dataset and the prediction horizons (in days).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    #[serde(default)]
    pub categorical: Vec<CategoricalFeature>,
    #[serde(default)]
    pub numeric: Vec<NumericFeature>,
    #[serde(default)]
    pub sequence: Vec<SequenceFeature>,
    pub horizons: Vec<u32>,
}

impl FeatureSchema {
    pub fn validate(&self) -> Result<()> {
        if self.horizons.is_empty() {
            return Err(Error::Config("schema needs at least one horizon".into()));
        }
        if self.horizons.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "horizons must be strictly increasing, got {:?}",
                self.horizons
            )));
        }
        let mut seen = HashSet::new();
        for name in self.feature_names() {
            if !seen.insert(name) {
                return Err(Error::Config(format!("duplicate feature name `{name}`")));
            }
        }
        for f in &self.numeric {
            if f.bins < 2 {
                return Err(Error::Config(format!(
                    "numeric `{}` needs bins >= 2",
                    f.name
                )));
            }
        }
        for f in &self.sequence {
            if f.bins < 2 || f.length == 0 {
                return Err(Error::Config(format!(
                    "sequence `{}` needs bins >= 2 and length >= 1",
                    f.name
                )));
            }
        }
        Ok(())
    }

    pub fn num_tasks(&self) -> usize {
        self.horizons.len()
    }

    pub fn feature_names(&self) -> impl Iterator<Item = &str> {
        self.categorical
            .iter()
            .map(|f| f.name.as_str())
            .chain(self.numeric.iter().map(|f| f.name.as_str()))
            .chain(self.sequence.iter().map(|f| f.name.as_str()))
    }

    pub fn label_columns(&self) -> Vec<String> {
        self.horizons.iter().map(|n| format!("ltv{n}")).collect()
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("schema serializes"))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_versioned_json(path, SCHEMA_FORMAT_VERSION, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let schema: Self = read_versioned_json(path, SCHEMA_FORMAT_VERSION)?;
        schema.validate()?;
        Ok(schema)
    }
}

/// One user: raw feature values plus one LTV label per horizon.
///
/// `labels` is empty for feature-only files used at prediction time.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub categorical: Vec<String>,
    pub numeric: Vec<f64>,
    pub sequences: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub rows: Vec<FeatureRow>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Labels of task `t` across all rows.
    pub fn task_labels(&self, t: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.labels[t]).collect()
    }

    pub fn has_labels(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.labels.len() == self.schema.num_tasks())
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }
}
