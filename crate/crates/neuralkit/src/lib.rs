//! Minimal tensor and layer kernel with hand-written backward passes.
//!
//! Everything is generic over [`Scalar`] so that the same network code runs
//! in `f32` for training and inference and in `f64` for gradient checking.
//! Layers cache what they need during [`Layer::forward`] and accumulate
//! parameter gradients in [`Layer::backward`]; [`Layer::infer`] is the
//! cache-free path used by frozen models shared across threads.

pub mod adam;
pub mod blob;
pub mod error;
pub mod init;
pub mod kernels;
pub mod layers;
pub mod scalar;
pub mod sequential;
pub mod tensor;

pub use adam::Adam;
pub use error::NnError;
pub use layers::{
    Activation, ActivationKind, Conv2d, Dense, Layer, LayerKind, LayerNorm, MultiHeadAttention, Reshape, Upsample2x,
};
pub use scalar::Scalar;
pub use sequential::Sequential;
pub use tensor::Tensor;

pub type Result<T> = std::result::Result<T, NnError>;

pub type TensorF32 = Tensor<f32>;
pub type TensorF64 = Tensor<f64>;
