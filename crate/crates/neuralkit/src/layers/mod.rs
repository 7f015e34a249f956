mod activation;
mod attention;
mod conv;
mod dense;
mod norm;
mod shape;

pub use activation::{sigmoid, Activation, ActivationKind};
pub use attention::MultiHeadAttention;
pub use conv::Conv2d;
pub use dense::Dense;
pub use norm::LayerNorm;
pub use shape::{Reshape, Upsample2x};

use crate::{Result, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Dense,
    Conv2D,
    LayerNorm,
    MultiHeadAttention,
    Activation,
    Upsample,
    Reshape,
}

/// A differentiable layer.
///
/// `forward` caches activations for one subsequent `backward`, which
/// accumulates into the parameter gradient buffers and returns the gradient
/// with respect to the input. `infer` is the cache-free evaluation path.
pub trait Layer<T: Scalar>: Send + Sync {
    fn kind(&self) -> LayerKind;
    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>>;
    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>>;
    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>>;
    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>>;

    fn params(&self) -> Vec<&Tensor<T>> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        Vec::new()
    }

    fn name(&self) -> String {
        format!("{:?}", self.kind())
    }
}
