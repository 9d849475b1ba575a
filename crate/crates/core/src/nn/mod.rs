//! Dense network substrate shared by every model in the crate.

mod adam;
pub mod checkpoint;
pub mod loss;
mod mlp;

pub use adam::{adam_step, AdamState};
pub use loss::{argmax, cosine_similarity, l2_normalize, nll_loss, normalized_mse, softmax};
pub use mlp::{Activation, DropoutMask, ForwardCache, Mlp};
