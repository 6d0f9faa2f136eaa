use crate::data::Slot;
use crate::error::Result;
use crate::nn::{Activation, DenseLayer, ParamStore, Tape, Var};

use super::odmn::{ModelConfig, SharedBottom};

/// Shared bottom with one linear regression head per task, fitted with
/// plain MSE on raw labels.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineNet {
    pub bottom: SharedBottom,
    pub heads: Vec<DenseLayer>,
}

impl BaselineNet {
    pub fn new(
        store: &mut ParamStore,
        slots: &[Slot],
        num_tasks: usize,
        config: &ModelConfig,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let bottom = SharedBottom::new(store, slots, config, seed)?;
        let heads = (0..num_tasks)
            .map(|t| {
                DenseLayer::new(
                    store,
                    &format!("head{t}"),
                    bottom.output_dim(),
                    1,
                    Activation::Identity,
                    false,
                    seed,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { bottom, heads })
    }

    /// One `B x 1` estimate per task.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        ids: &[Vec<usize>],
    ) -> Result<Vec<Var>> {
        let v = self.bottom.represent(tape, store, ids)?;
        self.heads.iter().map(|h| h.apply(tape, store, v)).collect()
    }

    pub fn predict(&self, store: &ParamStore, ids: &[Vec<usize>]) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::new();
        let heads = self.forward(&mut tape, store, ids)?;
        Ok((0..ids.len())
            .map(|i| heads.iter().map(|&h| tape.value(h).get(i, 0)).collect())
            .collect())
    }
}
