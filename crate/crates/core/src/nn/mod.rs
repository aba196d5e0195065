//! Minimal 64-bit differentiable kernel.
//!
//! Forward passes build an explicit tape ([`Graph`]) of primitive ops over
//! 2-D tensors; [`Graph::backward`] walks the tape in reverse and accumulates
//! gradients. Layers (dense, GRU, multi-head attention) are builders that
//! compose primitives, so backprop-through-time and attention gradients fall
//! out of the tape with no special cases. Everything is `f64`.

mod adam;
mod checkpoint;
mod gradcheck;
mod graph;
mod layers;
mod tensor;

pub use adam::{AdamConfig, GradAccum, ParamId, ParamStore};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use gradcheck::{finite_diff_check, GradCheckReport, FD_STEP};
pub use graph::{Gradients, Graph, NodeId};
pub use layers::{multi_head_attention, xavier_uniform, FcParams, GruParams, MhaParams};
pub use tensor::Tensor;
