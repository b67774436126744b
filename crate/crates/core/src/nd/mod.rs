//! Dense tensors and reverse-mode differentiation.
//!
//! Forward passes are recorded on a [`Tape`]; every op stores just enough to
//! evaluate its local gradient rule. [`Tape::backward`] walks the nodes in
//! reverse insertion order, which is a reverse topological order because a
//! node is only ever appended after its parents.
//!
//! Training math is 64-bit. Checkpoints are stored as 32-bit floats.

mod checkpoint;
mod gemm;
mod layers;
mod params;
mod tape;
mod tensor;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, CHECKPOINT_MAGIC};
pub use layers::{Conv1d, GroupNorm, Linear};
pub use params::{AdamConfig, Bound, Param, ParamId, ParamStore};
pub use tape::{Grads, Tape, Var};
pub use tensor::Tensor;
