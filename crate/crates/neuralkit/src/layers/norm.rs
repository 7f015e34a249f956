use crate::error::{shape_err, NnError};
use crate::{Layer, LayerKind, Result, Scalar, Tensor};

const EPS: f64 = 1e-5;

/// Normalization over the last axis with learned scale and shift.
#[derive(Debug, Clone)]
pub struct LayerNorm<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    cache: Option<(Tensor<T>, Vec<T>)>,
}

impl<T: Scalar> LayerNorm<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: Tensor::full(&[dim], T::one()),
            beta: Tensor::zeros(&[dim]),
            cache: None,
        }
    }

    fn dim(&self) -> usize {
        self.gamma.len()
    }

    /// Returns (normalized input, per-row inverse std).
    fn normalize(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Vec<T>)> {
        let d = self.dim();
        if x.last_dim() != d {
            return Err(shape_err(
                "LayerNorm",
                format!("expected last dim {d}, got {:?}", x.shape()),
            ));
        }
        let mut xhat = x.clone();
        let rows = x.rows();
        let mut inv = Vec::with_capacity(rows);
        let n = T::of_usize(d);
        for r in 0..rows {
            let row = &mut xhat.data_mut()[r * d..(r + 1) * d];
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let is = T::one() / (var + T::of(EPS)).sqrt();
            row.iter_mut().for_each(|v| *v = (*v - mean) * is);
            inv.push(is);
        }
        Ok((xhat, inv))
    }

    fn affine(&self, xhat: &Tensor<T>) -> Tensor<T> {
        let d = self.dim();
        let mut y = xhat.clone();
        for row in y.data_mut().chunks_mut(d) {
            for ((v, &g), &b) in row.iter_mut().zip(self.gamma.data()).zip(self.beta.data()) {
                *v = *v * g + b;
            }
        }
        y
    }
}

impl<T: Scalar> Layer<T> for LayerNorm<T> {
    fn kind(&self) -> LayerKind {
        LayerKind::LayerNorm
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input.last() != Some(&self.dim()) {
            return Err(shape_err("LayerNorm", format!("bad input {:?}", input)));
        }
        Ok(input.to_vec())
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (xhat, _) = self.normalize(x)?;
        Ok(self.affine(&xhat))
    }

    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (xhat, inv) = self.normalize(x)?;
        let y = self.affine(&xhat);
        self.cache = Some((xhat, inv));
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let (xhat, inv) = self.cache.take().ok_or(NnError::NoForwardCache {
            layer: "LayerNorm".into(),
        })?;
        let d = self.dim();
        if dy.len() != xhat.len() {
            return Err(shape_err("LayerNorm", "gradient shape does not match output"));
        }
        let n = T::of_usize(d);
        let mut dx = Tensor::zeros(xhat.shape());
        for r in 0..xhat.rows() {
            let xr = &xhat.data()[r * d..(r + 1) * d];
            let dr = &dy.data()[r * d..(r + 1) * d];
            {
                let dg = self.gamma.grad_mut();
                for i in 0..d {
                    dg[i] += dr[i] * xr[i];
                }
            }
            {
                let dbeta = self.beta.grad_mut();
                for i in 0..d {
                    dbeta[i] += dr[i];
                }
            }
            let g = self.gamma.data();
            let mut mean_dxh = T::zero();
            let mut mean_dxh_x = T::zero();
            for i in 0..d {
                let dxh = dr[i] * g[i];
                mean_dxh += dxh;
                mean_dxh_x += dxh * xr[i];
            }
            mean_dxh /= n;
            mean_dxh_x /= n;
            let out = &mut dx.data_mut()[r * d..(r + 1) * d];
            for i in 0..d {
                out[i] = inv[r] * (dr[i] * g[i] - mean_dxh - xr[i] * mean_dxh_x);
            }
        }
        Ok(dx)
    }

    fn params(&self) -> Vec<&Tensor<T>> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.gamma, &mut self.beta]
    }
}
