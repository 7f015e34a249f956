use crate::error::NnError;
use crate::{Result, Scalar, Tensor};

/// Adam with bias-corrected moments. Gradients are read from each
/// parameter's gradient buffer (missing buffers count as zero).
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn with_lr(lr: f64) -> Self {
        Self::new(lr, 0.9, 0.999)
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [&mut Tensor<T>]) -> Result<()> {
        for (i, p) in params.iter().enumerate() {
            if let Some(g) = p.grad() {
                if g.iter().any(|x| !x.is_finite()) {
                    return Err(NnError::NonFiniteGradient { index: i });
                }
            }
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() || self.m.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len()) {
            return Err(NnError::StateMismatch {
                expected: self.m.len(),
                got: params.len(),
            });
        }
        self.t += 1;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let c1 = T::one() - T::of(self.beta1.powi(self.t as i32));
        let c2 = T::one() - T::of(self.beta2.powi(self.t as i32));
        let (lr, eps) = (T::of(self.lr), T::of(self.eps));
        for (i, p) in params.iter_mut().enumerate() {
            let g: Vec<T> = match p.grad() {
                Some(g) => g.to_vec(),
                None => vec![T::zero(); p.len()],
            };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, w) in p.data_mut().iter_mut().enumerate() {
                m[j] = b1 * m[j] + (T::one() - b1) * g[j];
                v[j] = b2 * v[j] + (T::one() - b2) * g[j] * g[j];
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                *w -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Scales all gradients so that their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<T: Scalar>(params: &mut [&mut Tensor<T>], max_norm: f64) -> f64 {
    let mut sq = 0.0f64;
    for p in params.iter() {
        if let Some(g) = p.grad() {
            sq += g.iter().map(|x| x.as_f64() * x.as_f64()).sum::<f64>();
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = T::of(max_norm / norm);
        for p in params.iter_mut() {
            if p.grad().is_some() {
                p.grad_mut().iter_mut().for_each(|x| *x *= s);
            }
        }
    }
    norm
}
