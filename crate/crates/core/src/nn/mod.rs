//! Small dense networks with hand-written reverse mode, Adam, gradient
//! clipping, and a flat binary checkpoint format.

pub mod checkpoint;
pub mod functional;
mod mlp;
mod optim;
mod tensor;

pub use mlp::{Activation, MlpNet};
pub use optim::{clip_grad_norm, AdamState};
pub use tensor::Tensor2;
