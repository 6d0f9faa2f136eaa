use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::params::{param_rng, ParamGroup, ParamId, ParamStore};
use super::tape::{Tape, Var};
use super::tensor::Tensor2;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Softmax,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Relu => tape.relu(x),
            Activation::Sigmoid => tape.sigmoid(x),
            Activation::Softmax => tape.softmax(x),
        }
    }
}

/// Affine map followed by an activation: `act(x·W + b)`.
///
/// The weight matrix is `in_dim x out_dim`. When `nonnegative` is set the
/// weight (not the bias) is flagged for projection onto `>= 0` by the
/// optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weight: ParamId,
    pub bias: ParamId,
    pub activation: Activation,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl DenseLayer {
    /// Registers a layer with Glorot-uniform weights and zero biases.
    ///
    /// Non-negative layers draw weights from `[0, limit)` instead of
    /// `[-limit, limit)`.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        nonnegative: bool,
        seed: u64,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Config(format!(
                "layer `{name}` needs positive dims, got {in_dim}x{out_dim}"
            )));
        }
        let wname = format!("{name}.w");
        let mut rng = param_rng(seed, &wname);
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let lo = if nonnegative { 0.0 } else { -limit };
        let data = (0..in_dim * out_dim)
            .map(|_| rng.gen_range(lo..limit))
            .collect();
        let weight = store.add(
            wname,
            Tensor2::from_vec(in_dim, out_dim, data)?,
            ParamGroup::Network,
            nonnegative,
        )?;
        let bias = store.add(
            format!("{name}.b"),
            Tensor2::zeros(1, out_dim),
            ParamGroup::Network,
            false,
        )?;
        Ok(Self {
            weight,
            bias,
            activation,
            in_dim,
            out_dim,
        })
    }

    /// Records the layer on a tape.
    pub fn apply(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let xv = tape.value(x);
        if xv.cols() != self.in_dim {
            return Err(Error::Dimension {
                op: "dense forward",
                left: format!("input {}", xv.shape_str()),
                right: format!("layer {}x{}", self.in_dim, self.out_dim),
            });
        }
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let z = tape.matmul(x, w)?;
        let z = tape.add_bias(z, b)?;
        Ok(self.activation.apply(tape, z))
    }

    /// Untaped forward pass.
    pub fn forward(&self, store: &ParamStore, input: &Tensor2) -> Result<Tensor2> {
        let mut tape = Tape::new();
        let x = tape.constant(input.clone());
        let y = self.apply(&mut tape, store, x)?;
        Ok(tape.value(y).clone())
    }
}

/// Registers an embedding table initialized from `N(0, std²)`.
pub fn embedding_table(
    store: &mut ParamStore,
    name: &str,
    vocab: usize,
    dim: usize,
    std: f64,
    seed: u64,
) -> Result<ParamId> {
    if vocab == 0 || dim == 0 {
        return Err(Error::Config(format!(
            "embedding `{name}` needs positive vocab and dim"
        )));
    }
    let mut rng = param_rng(seed, name);
    let normal = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
    let data = (0..vocab * dim).map(|_| normal.sample(&mut rng)).collect();
    store.add(
        name,
        Tensor2::from_vec(vocab, dim, data)?,
        ParamGroup::Embedding,
        false,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer_with(
        weights: Tensor2,
        bias: Vec<f64>,
        activation: Activation,
    ) -> (ParamStore, DenseLayer) {
        let mut store = ParamStore::new();
        let layer = DenseLayer::new(
            &mut store,
            "l",
            weights.rows(),
            weights.cols(),
            activation,
            false,
            0,
        )
        .unwrap();
        store.get_mut(layer.weight).value = weights;
        store.get_mut(layer.bias).value = Tensor2::row_vector(bias);
        (store, layer)
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let eye = Tensor2::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let (store, layer) = layer_with(eye, vec![0.0, 0.0], Activation::Identity);
        let out = layer
            .forward(&store, &Tensor2::from_rows(&[vec![1.0, 2.0]]).unwrap())
            .unwrap();
        assert_eq!(out.data(), &[1.0, 2.0]);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let (store, layer) = layer_with(Tensor2::zeros(1, 3), vec![0.0; 3], Activation::Softmax);
        let out = layer.forward(&store, &Tensor2::scalar(5.0)).unwrap();
        for &p in out.data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn sigmoid_of_zero_is_half() {
        let (store, layer) = layer_with(Tensor2::zeros(1, 1), vec![0.0], Activation::Sigmoid);
        let out = layer.forward(&store, &Tensor2::scalar(7.0)).unwrap();
        assert_eq!(out.item(), 0.5);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let (store, layer) = layer_with(Tensor2::zeros(2, 3), vec![0.0; 3], Activation::Relu);
        let err = layer
            .forward(&store, &Tensor2::zeros(4, 5))
            .unwrap_err()
            .to_string();
        assert!(err.contains("4x5") && err.contains("2x3"), "{err}");
    }

    #[test]
    fn nonnegative_init_and_flag() {
        let mut store = ParamStore::new();
        let layer = DenseLayer::new(&mut store, "mono", 6, 5, Activation::Relu, true, 3).unwrap();
        let w = store.get(layer.weight);
        assert!(w.nonnegative);
        assert!(w.value.data().iter().all(|&v| v >= 0.0));
        assert!(!store.get(layer.bias).nonnegative);
    }
}
