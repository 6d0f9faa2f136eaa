use serde::{Deserialize, Serialize};

use super::params::{ParamGroup, ParamStore};
use super::tape::Gradients;
use super::tensor::Tensor2;
use crate::error::{Error, Result};

/// Step sizes for the two parameter groups.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningRates {
    pub embedding: f64,
    pub network: f64,
}

impl LearningRates {
    pub fn uniform(lr: f64) -> Self {
        Self {
            embedding: lr,
            network: lr,
        }
    }

    pub fn for_group(&self, group: ParamGroup) -> f64 {
        match group {
            ParamGroup::Embedding => self.embedding,
            ParamGroup::Network => self.network,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    first: Vec<Tensor2>,
    second: Vec<Tensor2>,
}

impl AdamState {
    /// Fresh state with `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
    pub fn new(store: &ParamStore) -> Self {
        Self::with_betas(store, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(store: &ParamStore, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let zeros: Vec<Tensor2> = store
            .iter()
            .map(|(_, p)| Tensor2::zeros(p.value.rows(), p.value.cols()))
            .collect();
        Self {
            step: 0,
            beta1,
            beta2,
            epsilon,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn first_moments(&self) -> &[Tensor2] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Tensor2] {
        &self.second
    }

    fn check_congruent(&self, store: &ParamStore) -> Result<()> {
        if self.first.len() != store.len() {
            return Err(Error::Dimension {
                op: "adam_step",
                left: format!("{} moment tensors", self.first.len()),
                right: format!("{} parameters", store.len()),
            });
        }
        for ((_, p), m) in store.iter().zip(&self.first) {
            if !p.value.same_shape(m) {
                return Err(Error::Dimension {
                    op: "adam_step",
                    left: format!("{} {}", p.name, p.value.shape_str()),
                    right: format!("moment {}", m.shape_str()),
                });
            }
        }
        Ok(())
    }
}

/// One bias-corrected Adam update followed by projection of every
/// non-negative flagged tensor onto `>= 0`.
///
/// Gradients are validated before anything is mutated, so a non-finite
/// gradient leaves parameters and state untouched.
pub fn adam_step(
    store: &mut ParamStore,
    grads: &Gradients,
    state: &mut AdamState,
    lr: &LearningRates,
) -> Result<()> {
    state.check_congruent(store)?;
    for (id, p) in store.iter() {
        if let Some(g) = grads.get(id) {
            if !g.same_shape(&p.value) {
                return Err(Error::Dimension {
                    op: "adam_step",
                    left: format!("{} {}", p.name, p.value.shape_str()),
                    right: format!("gradient {}", g.shape_str()),
                });
            }
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient of {}", p.name)));
            }
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);

    for (id, p) in store.iter_mut() {
        let m = &mut state.first[id.0];
        let v = &mut state.second[id.0];
        let step = lr.for_group(p.group);
        match grads.get(id) {
            Some(g) => {
                for (((w, mi), vi), &gi) in p
                    .value
                    .data_mut()
                    .iter_mut()
                    .zip(m.data_mut())
                    .zip(v.data_mut())
                    .zip(g.data())
                {
                    *mi = b1 * *mi + (1.0 - b1) * gi;
                    *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                    let mhat = *mi / bc1;
                    let vhat = *vi / bc2;
                    *w -= step * mhat / (vhat.sqrt() + eps);
                }
            }
            None => {
                // zero gradient: moments decay, parameters still move on momentum
                for ((w, mi), vi) in p
                    .value
                    .data_mut()
                    .iter_mut()
                    .zip(m.data_mut())
                    .zip(v.data_mut())
                {
                    *mi *= b1;
                    *vi *= b2;
                    if *mi != 0.0 {
                        *w -= step * (*mi / bc1) / ((*vi / bc2).sqrt() + eps);
                    }
                }
            }
        }
        if p.nonnegative {
            for w in p.value.data_mut() {
                if *w < 0.0 {
                    *w = 0.0;
                }
            }
        }
    }
    Ok(())
}
