use crate::error::{shape_err, NnError};
use crate::{Layer, LayerKind, Result, Scalar, Tensor};

/// Nearest-neighbour 2x upsampling of a `[C, H, W]` image.
#[derive(Debug, Clone, Default)]
pub struct Upsample2x {
    cache: Option<Vec<usize>>,
}

impl Upsample2x {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<T: Scalar> Layer<T> for Upsample2x {
    fn kind(&self) -> LayerKind {
        LayerKind::Upsample
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input.len() != 3 {
            return Err(shape_err("Upsample", format!("expected [C, H, W], got {:?}", input)));
        }
        Ok(vec![input[0], input[1] * 2, input[2] * 2])
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let s = <Self as Layer<T>>::output_shape(self, x.shape())?;
        let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let mut y = Tensor::zeros(&s);
        let yd = y.data_mut();
        let xd = x.data();
        for ci in 0..c {
            for yy in 0..2 * h {
                for xx in 0..2 * w {
                    yd[(ci * 2 * h + yy) * 2 * w + xx] = xd[(ci * h + yy / 2) * w + xx / 2];
                }
            }
        }
        Ok(y)
    }

    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.infer(x)?;
        self.cache = Some(x.shape().to_vec());
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let s = self.cache.take().ok_or(NnError::NoForwardCache {
            layer: "Upsample".into(),
        })?;
        let (c, h, w) = (s[0], s[1], s[2]);
        if dy.len() != c * h * w * 4 {
            return Err(shape_err("Upsample", "gradient shape does not match output"));
        }
        let mut dx = Tensor::zeros(&s);
        let dd = dx.data_mut();
        for ci in 0..c {
            for yy in 0..2 * h {
                for xx in 0..2 * w {
                    dd[(ci * h + yy / 2) * w + xx / 2] += dy.data()[(ci * 2 * h + yy) * 2 * w + xx];
                }
            }
        }
        Ok(dx)
    }
}

/// Reinterprets the input with a fixed target shape (e.g. flattening a feature map).
#[derive(Debug, Clone)]
pub struct Reshape {
    pub target: Vec<usize>,
    cache: Option<Vec<usize>>,
}

impl Reshape {
    pub fn new(target: &[usize]) -> Self {
        Self {
            target: target.to_vec(),
            cache: None,
        }
    }
}

impl<T: Scalar> Layer<T> for Reshape {
    fn kind(&self) -> LayerKind {
        LayerKind::Reshape
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input.iter().product::<usize>() != self.target.iter().product::<usize>() {
            return Err(shape_err(
                "Reshape",
                format!("cannot view {:?} as {:?}", input, self.target),
            ));
        }
        Ok(self.target.clone())
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        <Self as Layer<T>>::output_shape(self, x.shape())?;
        x.clone().reshape(&self.target)
    }

    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.infer(x)?;
        self.cache = Some(x.shape().to_vec());
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let s = self.cache.take().ok_or(NnError::NoForwardCache {
            layer: "Reshape".into(),
        })?;
        dy.clone().reshape(&s)
    }
}
