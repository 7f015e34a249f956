use crate::error::{shape_err, NnError};
use crate::init::Init;
use crate::kernels::{matmul_acc, matmul_nt_acc, matmul_tn_acc};
use crate::{Layer, LayerKind, Result, Scalar, Tensor};

/// Multi-head scaled dot-product self-attention over a `[N, d]` token set.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention<T> {
    pub heads: usize,
    pub wq: Tensor<T>,
    pub wk: Tensor<T>,
    pub wv: Tensor<T>,
    pub wo: Tensor<T>,
    pub bq: Tensor<T>,
    pub bk: Tensor<T>,
    pub bv: Tensor<T>,
    pub bo: Tensor<T>,
    cache: Option<AttnCache<T>>,
}

#[derive(Debug, Clone)]
struct AttnCache<T> {
    x: Vec<T>,
    // per head, row-major [N, dh]
    q: Vec<Vec<T>>,
    k: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    // per head attention weights [N, N]
    p: Vec<Vec<T>>,
    // concatenated head outputs [N, d]
    o: Vec<T>,
    n: usize,
}

fn affine<T: Scalar>(x: &[T], w: &[T], b: &[T], n: usize, d: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(n * d);
    for _ in 0..n {
        out.extend_from_slice(b);
    }
    matmul_acc(x, w, &mut out, n, d, d);
    out
}

fn split_heads<T: Scalar>(m: &[T], n: usize, d: usize, heads: usize) -> Vec<Vec<T>> {
    let dh = d / heads;
    (0..heads)
        .map(|h| {
            let mut out = Vec::with_capacity(n * dh);
            for r in 0..n {
                out.extend_from_slice(&m[r * d + h * dh..r * d + (h + 1) * dh]);
            }
            out
        })
        .collect()
}

impl<T: Scalar> MultiHeadAttention<T> {
    pub fn new(d: usize, heads: usize, init: &mut Init) -> Self {
        assert!(
            heads >= 1 && d % heads == 0,
            "model width {d} not divisible by {heads} heads"
        );
        Self {
            heads,
            wq: init.xavier(&[d, d], d, d),
            wk: init.xavier(&[d, d], d, d),
            wv: init.xavier(&[d, d], d, d),
            wo: init.xavier(&[d, d], d, d),
            bq: Tensor::zeros(&[d]),
            bk: Tensor::zeros(&[d]),
            bv: Tensor::zeros(&[d]),
            bo: Tensor::zeros(&[d]),
            cache: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.wq.shape()[0]
    }

    fn check(&self, x: &Tensor<T>) -> Result<usize> {
        if x.shape().len() != 2 || x.shape()[1] != self.dim() {
            return Err(shape_err(
                "MultiHeadAttention",
                format!("expected [N, {}], got {:?}", self.dim(), x.shape()),
            ));
        }
        Ok(x.shape()[0])
    }

    fn run(&self, x: &Tensor<T>) -> Result<(Tensor<T>, AttnCache<T>)> {
        let n = self.check(x)?;
        let d = self.dim();
        let dh = d / self.heads;
        let scale = T::one() / T::of_usize(dh).sqrt();
        let q = split_heads(
            &affine(x.data(), self.wq.data(), self.bq.data(), n, d),
            n,
            d,
            self.heads,
        );
        let k = split_heads(
            &affine(x.data(), self.wk.data(), self.bk.data(), n, d),
            n,
            d,
            self.heads,
        );
        let v = split_heads(
            &affine(x.data(), self.wv.data(), self.bv.data(), n, d),
            n,
            d,
            self.heads,
        );
        let mut o = vec![T::zero(); n * d];
        let mut ps = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let mut s = vec![T::zero(); n * n];
            matmul_nt_acc(&q[h], &k[h], &mut s, n, dh, n);
            for row in s.chunks_mut(n) {
                let mut mx = T::neg_infinity();
                for v in row.iter_mut() {
                    *v *= scale;
                    mx = mx.max(*v);
                }
                let mut z = T::zero();
                for v in row.iter_mut() {
                    *v = (*v - mx).exp();
                    z += *v;
                }
                row.iter_mut().for_each(|v| *v /= z);
            }
            let mut oh = vec![T::zero(); n * dh];
            matmul_acc(&s, &v[h], &mut oh, n, n, dh);
            for r in 0..n {
                o[r * d + h * dh..r * d + (h + 1) * dh].copy_from_slice(&oh[r * dh..(r + 1) * dh]);
            }
            ps.push(s);
        }
        let y = affine(&o, self.wo.data(), self.bo.data(), n, d);
        let cache = AttnCache {
            x: x.data().to_vec(),
            q,
            k,
            v,
            p: ps,
            o,
            n,
        };
        Ok((Tensor::from_vec(&[n, d], y)?, cache))
    }
}

impl<T: Scalar> Layer<T> for MultiHeadAttention<T> {
    fn kind(&self) -> LayerKind {
        LayerKind::MultiHeadAttention
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input.len() != 2 || input[1] != self.dim() {
            return Err(shape_err("MultiHeadAttention", format!("bad input {:?}", input)));
        }
        Ok(input.to_vec())
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.run(x)?.0)
    }

    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (y, c) = self.run(x)?;
        self.cache = Some(c);
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let c = self.cache.take().ok_or(NnError::NoForwardCache {
            layer: "MultiHeadAttention".into(),
        })?;
        let (n, d) = (c.n, self.dim());
        let dh = d / self.heads;
        if dy.len() != n * d {
            return Err(shape_err("MultiHeadAttention", "gradient shape does not match output"));
        }
        let scale = T::one() / T::of_usize(dh).sqrt();
        let dyd = dy.data();

        matmul_tn_acc(&c.o, dyd, self.wo.grad_mut(), n, d, d);
        accumulate_rows(self.bo.grad_mut(), dyd, d);
        let mut d_o = vec![T::zero(); n * d];
        matmul_nt_acc(dyd, self.wo.data(), &mut d_o, n, d, d);

        let mut dq = vec![T::zero(); n * d];
        let mut dk = vec![T::zero(); n * d];
        let mut dv = vec![T::zero(); n * d];
        for h in 0..self.heads {
            let mut doh = Vec::with_capacity(n * dh);
            for r in 0..n {
                doh.extend_from_slice(&d_o[r * d + h * dh..r * d + (h + 1) * dh]);
            }
            let p = &c.p[h];
            let mut dp = vec![T::zero(); n * n];
            matmul_nt_acc(&doh, &c.v[h], &mut dp, n, dh, n);
            let mut dvh = vec![T::zero(); n * dh];
            matmul_tn_acc(p, &doh, &mut dvh, n, n, dh);
            // softmax backward, then the 1/sqrt(dh) scale
            let mut ds = vec![T::zero(); n * n];
            for r in 0..n {
                let pr = &p[r * n..(r + 1) * n];
                let dpr = &dp[r * n..(r + 1) * n];
                let inner: T = pr.iter().zip(dpr).map(|(&a, &b)| a * b).sum();
                for j in 0..n {
                    ds[r * n + j] = pr[j] * (dpr[j] - inner) * scale;
                }
            }
            let mut dqh = vec![T::zero(); n * dh];
            matmul_acc(&ds, &c.k[h], &mut dqh, n, n, dh);
            let mut dkh = vec![T::zero(); n * dh];
            matmul_tn_acc(&ds, &c.q[h], &mut dkh, n, n, dh);
            for r in 0..n {
                let dst = r * d + h * dh..r * d + (h + 1) * dh;
                dq[dst.clone()].copy_from_slice(&dqh[r * dh..(r + 1) * dh]);
                dk[dst.clone()].copy_from_slice(&dkh[r * dh..(r + 1) * dh]);
                dv[dst].copy_from_slice(&dvh[r * dh..(r + 1) * dh]);
            }
        }

        let mut dx = vec![T::zero(); n * d];
        for (g, w, b) in [
            (&dq, &mut self.wq, &mut self.bq),
            (&dk, &mut self.wk, &mut self.bk),
            (&dv, &mut self.wv, &mut self.bv),
        ] {
            matmul_tn_acc(&c.x, g, w.grad_mut(), n, d, d);
            accumulate_rows(b.grad_mut(), g, d);
            matmul_nt_acc(g, w.data(), &mut dx, n, d, d);
        }
        Tensor::from_vec(&[n, d], dx)
    }

    fn params(&self) -> Vec<&Tensor<T>> {
        vec![
            &self.wq, &self.bq, &self.wk, &self.bk, &self.wv, &self.bv, &self.wo, &self.bo,
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![
            &mut self.wq,
            &mut self.bq,
            &mut self.wk,
            &mut self.bk,
            &mut self.wv,
            &mut self.bv,
            &mut self.wo,
            &mut self.bo,
        ]
    }
}

fn accumulate_rows<T: Scalar>(acc: &mut [T], m: &[T], d: usize) {
    for row in m.chunks(d) {
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
}
