use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::schema::{FeatureRow, FeatureSchema};
use crate::error::{Error, Result};

/// Nearest-rank `k/bins` quantiles of `values`, `k = 1..bins-1`.
///
/// Duplicate cut points collapse and a cut equal to the maximum is dropped,
/// so every resulting bin `(c_{k-1}, c_k]` holds at least one value.
pub fn equal_frequency_cuts(values: &[f64], bins: usize) -> Vec<f64> {
    if values.is_empty() || bins < 2 {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let max = sorted[n - 1];
    let mut cuts: Vec<f64> = Vec::with_capacity(bins - 1);
    for k in 1..bins {
        let rank = (k * n).div_ceil(bins);
        let cut = sorted[rank.max(1) - 1];
        if cut < max && cuts.last().is_none_or(|&last| cut > last) {
            cuts.push(cut);
        }
    }
    cuts
}

/// Bin index of `value`: the number of cut points strictly below it.
#[inline]
pub fn bin_index(cuts: &[f64], value: f64) -> usize {
    cuts.partition_point(|&c| c < value)
}

/// Equal-frequency cut points for every numeric and sequence feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    pub numeric: Vec<Vec<f64>>,
    pub sequence: Vec<Vec<f64>>,
}

impl Discretizer {
    /// Fits cut points; sequence features pool all of their elements.
    ///
    /// Returns a warning for every feature that ends up with a single bin.
    pub fn fit(rows: &[FeatureRow], schema: &FeatureSchema) -> Result<(Self, Vec<String>)> {
        if rows.is_empty() {
            return Err(Error::Config(
                "cannot fit a discretizer on zero rows".into(),
            ));
        }
        let mut warnings = Vec::new();
        let mut numeric = Vec::with_capacity(schema.numeric.len());
        for (j, f) in schema.numeric.iter().enumerate() {
            let values: Vec<f64> = rows.iter().map(|r| r.numeric[j]).collect();
            let cuts = equal_frequency_cuts(&values, f.bins);
            if cuts.is_empty() {
                warnings.push(format!(
                    "numeric feature `{}` is constant: single bin",
                    f.name
                ));
            }
            numeric.push(cuts);
        }
        let mut sequence = Vec::with_capacity(schema.sequence.len());
        for (j, f) in schema.sequence.iter().enumerate() {
            let values: Vec<f64> = rows
                .iter()
                .flat_map(|r| r.sequences[j].iter().copied())
                .collect();
            let cuts = equal_frequency_cuts(&values, f.bins);
            if cuts.is_empty() {
                warnings.push(format!(
                    "sequence feature `{}` is constant: single bin",
                    f.name
                ));
            }
            sequence.push(cuts);
        }
        for w in &warnings {
            log::warn!("{w}");
        }
        Ok((Self { numeric, sequence }, warnings))
    }

    pub fn hash(&self) -> String {
        crate::io::sha256_hex(&serde_json::to_vec(self).expect("discretizer serializes"))
    }
}

/// One embedding slot: a feature (or one element of a sequence feature)
/// with its own id space `0..vocab`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub name: String,
    pub vocab: usize,
}

/// Maps raw rows to per-slot integer ids.
///
/// Slot order: categorical features, numeric features, then every element
/// of every sequence feature. Unknown categorical values map to the last id
/// of their slot.
#[derive(Debug, Clone)]
pub struct FeatureEncoder {
    slots: Vec<Slot>,
    lookups: Vec<HashMap<String, usize>>,
    discretizer: Discretizer,
}

impl FeatureEncoder {
    pub fn new(schema: &FeatureSchema, discretizer: &Discretizer) -> Result<Self> {
        if discretizer.numeric.len() != schema.numeric.len()
            || discretizer.sequence.len() != schema.sequence.len()
        {
            return Err(Error::Dimension {
                op: "feature encoder",
                left: format!(
                    "schema {} numeric / {} sequence",
                    schema.numeric.len(),
                    schema.sequence.len()
                ),
                right: format!(
                    "discretizer {} / {}",
                    discretizer.numeric.len(),
                    discretizer.sequence.len()
                ),
            });
        }
        let mut slots = Vec::new();
        let mut lookups = Vec::new();
        for f in &schema.categorical {
            slots.push(Slot {
                name: f.name.clone(),
                vocab: f.vocabulary.len() + 1,
            });
            lookups.push(
                f.vocabulary
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (v.clone(), i))
                    .collect(),
            );
        }
        for (f, cuts) in schema.numeric.iter().zip(&discretizer.numeric) {
            slots.push(Slot {
                name: f.name.clone(),
                vocab: cuts.len() + 1,
            });
        }
        for (f, cuts) in schema.sequence.iter().zip(&discretizer.sequence) {
            for e in 0..f.length {
                slots.push(Slot {
                    name: format!("{}[{e}]", f.name),
                    vocab: cuts.len() + 1,
                });
            }
        }
        Ok(Self {
            slots,
            lookups,
            discretizer: discretizer.clone(),
        })
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn encode(&self, row: &FeatureRow) -> Vec<usize> {
        let mut ids = Vec::with_capacity(self.slots.len());
        for (j, value) in row.categorical.iter().enumerate() {
            let unknown = self.slots[j].vocab - 1;
            ids.push(self.lookups[j].get(value).copied().unwrap_or(unknown));
        }
        for (cuts, &v) in self.discretizer.numeric.iter().zip(&row.numeric) {
            ids.push(bin_index(cuts, v));
        }
        for (cuts, seq) in self.discretizer.sequence.iter().zip(&row.sequences) {
            ids.extend(seq.iter().map(|&v| bin_index(cuts, v)));
        }
        ids
    }
}

/// Encodes one row; builds a throwaway [`FeatureEncoder`].
pub fn encode_features(
    row: &FeatureRow,
    discretizer: &Discretizer,
    schema: &FeatureSchema,
) -> Result<Vec<usize>> {
    Ok(FeatureEncoder::new(schema, discretizer)?.encode(row))
}
