//! Recurrent soft-attention model that predicts which grid region of the next
//! video frame a viewer attends to, trained from eye-fixation labels.
//!
//! Everything runs in `f64` with hand-written backward passes:
//!
//! - [`tensor`]: dense matrices, softmax, activations and their VJPs.
//! - [`model`]: stacked LSTM, attention, feature blending and the unroll.
//! - [`train`]: loss, BPTT, Adam, finite-difference checks, training loop.
//! - [`data`]: fixation preprocessing, synthetic sequences, the GZDS container.
//! - [`eval`]: KL divergence and top-1 accuracy against smoothed fixations.
//! - [`cli`]: the `gazeattn` command.

mod binio;
pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod tensor;
pub mod train;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use data::LabeledSequence;
pub use error::{Error, Result};
pub use eval::{evaluate, groundtruth_map, kl_divergence, EvalOptions, EvalReport};
pub use model::{
    forward_sequence, predict, AttentionMap, FeatureCube, Mode, ModelConfig, ModelParams,
};
pub use train::{train, TrainConfig, TrainCurve};
