use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tensor::Tensor2;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Learning-rate group a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamGroup {
    Embedding,
    Network,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Tensor2,
    pub group: ParamGroup,
    /// Projected onto `>= 0` after every optimizer step.
    pub nonnegative: bool,
}

/// Flat registry of every learnable tensor of a model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(
        &mut self,
        name: impl Into<String>,
        value: Tensor2,
        group: ParamGroup,
        nonnegative: bool,
    ) -> Result<ParamId> {
        let name = name.into();
        if self.params.iter().any(|p| p.name == name) {
            return Err(Error::Config(format!("duplicate parameter name `{name}`")));
        }
        if !value.is_finite() {
            return Err(Error::NonFinite(name));
        }
        self.params.push(Param {
            name,
            value,
            group,
            nonnegative,
        });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor2 {
        &self.params[id.0].value
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut Param)> {
        self.params
            .iter_mut()
            .enumerate()
            .map(|(i, p)| (ParamId(i), p))
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.data().len()).sum()
    }

    /// Overwrites values from another store with identical names and shapes.
    pub fn copy_values_from(&mut self, other: &ParamStore) -> Result<()> {
        if self.params.len() != other.params.len() {
            return Err(Error::Dimension {
                op: "copy_values_from",
                left: format!("{} params", self.params.len()),
                right: format!("{} params", other.params.len()),
            });
        }
        for (dst, src) in self.params.iter_mut().zip(&other.params) {
            if dst.name != src.name || !dst.value.same_shape(&src.value) {
                return Err(Error::Dimension {
                    op: "copy_values_from",
                    left: format!("{} {}", dst.name, dst.value.shape_str()),
                    right: format!("{} {}", src.name, src.value.shape_str()),
                });
            }
            dst.value = src.value.clone();
        }
        Ok(())
    }
}

/// RNG for one named parameter.
///
/// Keyed by name so adding or removing unrelated parameters leaves every
/// other initial value untouched.
pub fn param_rng(seed: u64, name: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(name.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}
