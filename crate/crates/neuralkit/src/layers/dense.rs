use crate::error::{shape_err, NnError};
use crate::init::Init;
use crate::kernels::{matmul_acc, matmul_nt_acc, matmul_tn_acc};
use crate::{Layer, LayerKind, Result, Scalar, Tensor};

/// Affine map over the last axis: `y = x W + b`, `W` stored `[in, out]`.
#[derive(Debug, Clone)]
pub struct Dense<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(input: usize, output: usize, init: &mut Init) -> Self {
        Self {
            weight: init.he(&[input, output], input),
            bias: Tensor::zeros(&[output]),
            cache: None,
        }
    }

    pub fn from_parts(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if weight.shape().len() != 2 || bias.shape() != [weight.shape()[1]] {
            return Err(shape_err(
                "Dense",
                format!("weight {:?} bias {:?}", weight.shape(), bias.shape()),
            ));
        }
        Ok(Self {
            weight,
            bias,
            cache: None,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[1]
    }
}

impl<T: Scalar> Layer<T> for Dense<T> {
    fn kind(&self) -> LayerKind {
        LayerKind::Dense
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match input.last() {
            Some(&d) if d == self.in_dim() => {
                let mut s = input.to_vec();
                *s.last_mut().unwrap() = self.out_dim();
                Ok(s)
            }
            _ => Err(shape_err(
                "Dense",
                format!("expected last dim {}, got shape {:?}", self.in_dim(), input),
            )),
        }
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self.output_shape(x.shape())?;
        let (rows, din, dout) = (x.rows(), self.in_dim(), self.out_dim());
        let mut out = Tensor::zeros(&shape);
        let o = out.data_mut();
        let b = self.bias.data();
        for r in 0..rows {
            o[r * dout..(r + 1) * dout].copy_from_slice(b);
        }
        matmul_acc(x.data(), self.weight.data(), o, rows, din, dout);
        Ok(out)
    }

    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.infer(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self
            .cache
            .take()
            .ok_or(NnError::NoForwardCache { layer: "Dense".into() })?;
        let (rows, din, dout) = (x.rows(), self.in_dim(), self.out_dim());
        if dy.len() != rows * dout {
            return Err(shape_err("Dense", "gradient shape does not match output"));
        }
        matmul_tn_acc(x.data(), dy.data(), self.weight.grad_mut(), rows, din, dout);
        let db = self.bias.grad_mut();
        for r in 0..rows {
            for (g, &d) in db.iter_mut().zip(&dy.data()[r * dout..(r + 1) * dout]) {
                *g += d;
            }
        }
        let mut dx = Tensor::zeros(x.shape());
        matmul_nt_acc(dy.data(), self.weight.data(), dx.data_mut(), rows, dout, din);
        Ok(dx)
    }

    fn params(&self) -> Vec<&Tensor<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}
