//! Dataset ingestion, the synthetic generator, and feature encoding.

pub mod delimited;
pub mod discretize;
pub mod schema;
pub mod synthetic;

pub use delimited::{load_delimited, load_delimited_with, write_delimited, Labels};
pub use discretize::{
    bin_index, encode_features, equal_frequency_cuts, Discretizer, FeatureEncoder, Slot,
};
pub use schema::{
    CategoricalFeature, Dataset, FeatureRow, FeatureSchema, NumericFeature, SequenceFeature,
};
pub use synthetic::{generate_synthetic, SyntheticConfig};
