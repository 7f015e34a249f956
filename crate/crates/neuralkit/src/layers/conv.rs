use crate::error::{shape_err, NnError};
use crate::init::Init;
use crate::kernels::{matmul_acc, matmul_nt_acc, matmul_tn_acc};
use crate::{Layer, LayerKind, Result, Scalar, Tensor};

/// 2-D convolution over a single `[C, H, W]` image with square kernels and
/// zero padding `k / 2`. Weight `[out, in, k, k]`.
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: usize,
    cache: Option<(Vec<usize>, Vec<T>)>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(cin: usize, cout: usize, k: usize, stride: usize, init: &mut Init) -> Self {
        assert!(stride >= 1 && k >= 1);
        Self {
            weight: init.he(&[cout, cin, k, k], cin * k * k),
            bias: Tensor::zeros(&[cout]),
            stride,
            cache: None,
        }
    }

    pub fn cin(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn cout(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn k(&self) -> usize {
        self.weight.shape()[2]
    }

    fn geometry(&self, input: &[usize]) -> Result<(usize, usize, usize, usize)> {
        if input.len() != 3 || input[0] != self.cin() {
            return Err(shape_err(
                "Conv2D",
                format!("expected [{}, H, W], got {:?}", self.cin(), input),
            ));
        }
        let (h, w, k, p) = (input[1], input[2], self.k(), self.k() / 2);
        if h + 2 * p < k || w + 2 * p < k {
            return Err(shape_err("Conv2D", format!("input {:?} smaller than kernel", input)));
        }
        let ho = (h + 2 * p - k) / self.stride + 1;
        let wo = (w + 2 * p - k) / self.stride + 1;
        Ok((h, w, ho, wo))
    }

    fn im2col(&self, x: &[T], h: usize, w: usize, ho: usize, wo: usize) -> Vec<T> {
        let (c, k, s) = (self.cin(), self.k(), self.stride);
        let p = k / 2;
        let plane = ho * wo;
        let mut col = vec![T::zero(); c * k * k * plane];
        for ci in 0..c {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let dst = &mut col[row * plane..(row + 1) * plane];
                    for oy in 0..ho {
                        let iy = (oy * s + ky) as isize - p as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src = &x[ci * h * w + iy as usize * w..];
                        for ox in 0..wo {
                            let ix = (ox * s + kx) as isize - p as isize;
                            if ix >= 0 && ix < w as isize {
                                dst[oy * wo + ox] = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
        col
    }

    fn col2im(&self, dcol: &[T], h: usize, w: usize, ho: usize, wo: usize) -> Vec<T> {
        let (c, k, s) = (self.cin(), self.k(), self.stride);
        let p = k / 2;
        let plane = ho * wo;
        let mut dx = vec![T::zero(); c * h * w];
        for ci in 0..c {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let src = &dcol[row * plane..(row + 1) * plane];
                    for oy in 0..ho {
                        let iy = (oy * s + ky) as isize - p as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let base = ci * h * w + iy as usize * w;
                        for ox in 0..wo {
                            let ix = (ox * s + kx) as isize - p as isize;
                            if ix >= 0 && ix < w as isize {
                                dx[base + ix as usize] += src[oy * wo + ox];
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    fn run(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Vec<T>)> {
        let (h, w, ho, wo) = self.geometry(x.shape())?;
        let col = self.im2col(x.data(), h, w, ho, wo);
        let (o, r, plane) = (self.cout(), self.cin() * self.k() * self.k(), ho * wo);
        let mut out = Tensor::zeros(&[o, ho, wo]);
        {
            let od = out.data_mut();
            for (oi, &b) in self.bias.data().iter().enumerate() {
                od[oi * plane..(oi + 1) * plane].iter_mut().for_each(|v| *v = b);
            }
            matmul_acc(self.weight.data(), &col, od, o, r, plane);
        }
        Ok((out, col))
    }
}

impl<T: Scalar> Layer<T> for Conv2d<T> {
    fn kind(&self) -> LayerKind {
        LayerKind::Conv2D
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let (_, _, ho, wo) = self.geometry(input)?;
        Ok(vec![self.cout(), ho, wo])
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.run(x)?.0)
    }

    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (y, col) = self.run(x)?;
        self.cache = Some((x.shape().to_vec(), col));
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let (in_shape, col) = self
            .cache
            .take()
            .ok_or(NnError::NoForwardCache { layer: "Conv2D".into() })?;
        let (h, w, ho, wo) = self.geometry(&in_shape)?;
        let (o, r, plane) = (self.cout(), self.cin() * self.k() * self.k(), ho * wo);
        if dy.len() != o * plane {
            return Err(shape_err("Conv2D", "gradient shape does not match output"));
        }
        matmul_nt_acc(dy.data(), &col, self.weight.grad_mut(), o, plane, r);
        let db = self.bias.grad_mut();
        for oi in 0..o {
            db[oi] += dy.data()[oi * plane..(oi + 1) * plane].iter().copied().sum::<T>();
        }
        let mut dcol = vec![T::zero(); r * plane];
        matmul_tn_acc(self.weight.data(), dy.data(), &mut dcol, o, r, plane);
        Tensor::from_vec(&in_shape, self.col2im(&dcol, h, w, ho, wo))
    }

    fn params(&self) -> Vec<&Tensor<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}
