//! Network definitions: the ordered multi-task model and the MSE baseline.

mod baseline;
mod odmn;

pub use baseline::BaselineNet;
pub use odmn::{
    normalized_bucket_distribution, Components, ForwardVars, ModelConfig, MonoUnit, OdmnNet,
    SharedBottom, SubDistTowers, TaskOutputs, TaskTowers, TaskVars, Tower,
};

#[cfg(test)]
mod tests;
