//! Small dense-network numerics: tensors, a gradient tape, affine layers,
//! Adam with non-negativity projection, and a finite-difference checker.

pub mod adam;
pub mod gradcheck;
pub mod layer;
pub mod params;
pub mod tape;
pub mod tensor;

pub use adam::{adam_step, AdamState, LearningRates};
pub use gradcheck::{finite_diff_check, finite_diff_check_terms, GradCheckReport, TensorCheck};
pub use layer::{embedding_table, Activation, DenseLayer};
pub use params::{param_rng, Param, ParamGroup, ParamId, ParamStore};
pub use tape::{sigmoid, softmax_in_place, Function, Gradients, Tape, Var};
pub use tensor::Tensor2;
