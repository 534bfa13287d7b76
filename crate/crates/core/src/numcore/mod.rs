//! Dense tensors, tape-based reverse-mode differentiation, initialization,
//! dropout and the Adam optimizer.

mod adam;
mod gradcheck;
mod init;
mod params;
mod rng;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{finite_difference_check, relative_error, GradCheckReport};
pub use init::{dropout, dropout_mask, xavier_init};
pub use params::{Gradients, ParamId, ParamSet};
pub use rng::SeedTree;
pub use tape::{Axis, Tape, Var};
pub use tensor::{softmax, Tensor};
