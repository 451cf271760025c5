//! Dense matrices, reverse-mode differentiation and the Adam optimizer.

mod adam;
pub mod gradcheck;
mod matrix;
mod params;
mod sparse;
mod tape;

pub use adam::{Adam, AdamConfig};
pub use matrix::{softmax_rows, Matrix};
pub use params::{glorot_uniform, Param, ParamGroup, ParamId, ParamStore};
pub use sparse::SparseAdj;
pub use tape::{bce_loss, sigmoid, Activation, Tape, Var, PROB_CLAMP};
