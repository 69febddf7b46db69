//! The permutation-invariant set encoder and the reverse-mode machinery
//! used to train it.

pub mod autodiff;
mod checkpoint;
mod encoder;
pub mod tensor;

pub use autodiff::{Tape, Var};
pub use checkpoint::{AdamState, Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use encoder::{
    canonical_points, euclidean, Activation, ArchConfig, Dense, EncoderParams, InitMode, ParamVars, Pooling,
};
pub use tensor::Tensor;
