//! Loss, backpropagation through time, Adam, the finite-difference oracle and
//! the iteration-capped training loop.

pub mod adam;
pub mod backward;
mod curve;
pub mod gradcheck;
pub mod loss;
mod run;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use backward::{backward, Gradients};
pub use curve::{moving_average, CurveRecord, TrainCurve};
pub use gradcheck::{check_gradients, finite_diff_grad, relative_error, GradCheckReport};
pub use loss::{loss, LossBreakdown, PROB_FLOOR};
pub use run::{train, train_with_validation, TrainConfig, DEFAULT_BPTT_WINDOW, DEFAULT_GAMMA};
