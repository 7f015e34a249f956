use crate::error::{shape_err, NnError};
use crate::{Layer, LayerKind, Result, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationKind {
    Relu,
    Silu,
    Tanh,
    Sigmoid,
}

impl ActivationKind {
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            ActivationKind::Relu => x.max(T::zero()),
            ActivationKind::Silu => x * sigmoid(x),
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative with respect to the input, evaluated at input `x`.
    pub fn derivative<T: Scalar>(self, x: T) -> T {
        match self {
            ActivationKind::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            ActivationKind::Silu => {
                let s = sigmoid(x);
                s * (T::one() + x * (T::one() - s))
            }
            ActivationKind::Tanh => {
                let t = x.tanh();
                T::one() - t * t
            }
            ActivationKind::Sigmoid => {
                let s = sigmoid(x);
                s * (T::one() - s)
            }
        }
    }
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[derive(Debug, Clone)]
pub struct Activation<T> {
    pub f: ActivationKind,
    cache: Option<Tensor<T>>,
}

impl<T: Scalar> Activation<T> {
    pub fn new(f: ActivationKind) -> Self {
        Self { f, cache: None }
    }
}

impl<T: Scalar> Layer<T> for Activation<T> {
    fn kind(&self) -> LayerKind {
        LayerKind::Activation
    }

    fn name(&self) -> String {
        format!("Activation({:?})", self.f)
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Ok(input.to_vec())
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let f = self.f;
        Ok(x.map(|v| f.apply(v)))
    }

    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.cache = Some(x.clone());
        self.infer(x)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self
            .cache
            .take()
            .ok_or(NnError::NoForwardCache { layer: self.name() })?;
        if dy.len() != x.len() {
            return Err(shape_err("Activation", "gradient shape does not match output"));
        }
        let mut dx = Tensor::zeros(x.shape());
        for ((o, &xi), &g) in dx.data_mut().iter_mut().zip(x.data()).zip(dy.data()) {
            *o = g * self.f.derivative(xi);
        }
        Ok(dx)
    }
}
