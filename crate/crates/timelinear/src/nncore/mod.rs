//! A minimal dense-tensor neural-network core with exact reverse-mode
//! gradients.
//!
//! Everything is `f64` and row-major. There is no tape: each layer caches
//! the input of its latest `forward` call and its `backward` consumes that
//! cache, so a layer instance is single-threaded during a forward/backward
//! pair while independent clones may run concurrently. Parameter tensors
//! carry accumulated-gradient buffers that optimizers consume.

pub mod adam;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod serialize;
pub mod tensor;

pub use adam::Adam;
pub use gradcheck::gradient_check;
pub use layers::{Conv1d, LayerNorm, LinearLayer, ReluLayer};
pub use loss::mse_loss;
pub use tensor::Tensor;
