use std::io::{Read, Write};

use guide_neuralkit::blob::{load_into, read_blob, write_blob};
use guide_neuralkit::init::Init;
use guide_neuralkit::{
    Activation, ActivationKind, Conv2d, Dense, Layer, LayerNorm, MultiHeadAttention, NnError, Reshape, Scalar,
    Sequential, Tensor,
};

use super::features::{PolicyInput, CROP_CHANNELS, NODE_FEATURES};
use super::{DiffusionError, PolicyConfig};

pub const GDIFF_MAGIC: &[u8; 6] = b"GDIFF1";
pub const TIME_FEATURES: usize = 16;

type NnResult<T> = Result<T, NnError>;

fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let mut out = a.clone();
    for (x, &y) in out.data_mut().iter_mut().zip(b.data()) {
        *x += y;
    }
    out
}

/// Sinusoidal features of the continuous diffusion time `t = k / K`.
pub fn time_embedding<T: Scalar>(t: f64) -> [T; TIME_FEATURES] {
    let mut out = [T::zero(); TIME_FEATURES];
    for i in 0..TIME_FEATURES / 2 {
        let w = std::f64::consts::PI * (1u64 << i) as f64;
        out[2 * i] = T::of((w * t).sin());
        out[2 * i + 1] = T::of((w * t).cos());
    }
    out
}

/// Pre-norm transformer block: attention then a two-layer feed-forward, each
/// wrapped in a residual connection.
struct EncoderBlock<T: Scalar> {
    ln1: LayerNorm<T>,
    attn: MultiHeadAttention<T>,
    ln2: LayerNorm<T>,
    ff1: Dense<T>,
    act: Activation<T>,
    ff2: Dense<T>,
}

impl<T: Scalar> EncoderBlock<T> {
    fn new(d: usize, heads: usize, ffn: usize, init: &mut Init) -> Self {
        Self {
            ln1: LayerNorm::new(d),
            attn: MultiHeadAttention::new(d, heads, init),
            ln2: LayerNorm::new(d),
            ff1: Dense::new(d, ffn, init),
            act: Activation::new(ActivationKind::Relu),
            ff2: Dense::new(ffn, d, init),
        }
    }

    fn infer(&self, x: &Tensor<T>) -> NnResult<Tensor<T>> {
        let h = add(x, &self.attn.infer(&self.ln1.infer(x)?)?);
        let f = self
            .ff2
            .infer(&self.act.infer(&self.ff1.infer(&self.ln2.infer(&h)?)?)?)?;
        Ok(add(&h, &f))
    }

    fn forward(&mut self, x: &Tensor<T>) -> NnResult<Tensor<T>> {
        let a = self.ln1.forward(x)?;
        let h = add(x, &self.attn.forward(&a)?);
        let b = self.ln2.forward(&h)?;
        let f = self.ff2.forward(&self.act.forward(&self.ff1.forward(&b)?)?)?;
        Ok(add(&h, &f))
    }

    fn backward(&mut self, dy: &Tensor<T>) -> NnResult<Tensor<T>> {
        let df = self.ff2.backward(dy)?;
        let df = self.ff1.backward(&self.act.backward(&df)?)?;
        let dh = add(dy, &self.ln2.backward(&df)?);
        let da = self.ln1.backward(&self.attn.backward(&dh)?)?;
        Ok(add(&dh, &da))
    }

    fn params(&self) -> Vec<&Tensor<T>> {
        let mut p = self.ln1.params();
        p.extend(self.attn.params());
        p.extend(self.ln2.params());
        p.extend(self.ff1.params());
        p.extend(self.ff2.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut p = self.ln1.params_mut();
        p.extend(self.attn.params_mut());
        p.extend(self.ln2.params_mut());
        p.extend(self.ff1.params_mut());
        p.extend(self.ff2.params_mut());
        p
    }
}

/// Node-set encoder: per-node embedding, attention blocks, final norm and a
/// mean over nodes.
struct GraphEncoder<T: Scalar> {
    embed: Dense<T>,
    blocks: Vec<EncoderBlock<T>>,
    ln: LayerNorm<T>,
    rows: usize,
    robot_row: usize,
}

impl<T: Scalar> GraphEncoder<T> {
    fn new(cfg: &PolicyConfig, init: &mut Init) -> Self {
        Self {
            embed: Dense::new(NODE_FEATURES, cfg.d_model, init),
            blocks: (0..cfg.blocks)
                .map(|_| EncoderBlock::new(cfg.d_model, cfg.heads, cfg.ffn, init))
                .collect(),
            ln: LayerNorm::new(cfg.d_model),
            rows: 0,
            robot_row: 0,
        }
    }

    /// First row carrying the robot flag, or row 0.
    fn robot_row(x: &Tensor<T>) -> usize {
        x.data()
            .chunks(NODE_FEATURES)
            .position(|r| r[NODE_FEATURES - 1] > T::of(0.5))
            .unwrap_or(0)
    }

    /// Mean over all rows followed by the robot row.
    fn pool(h: &Tensor<T>, robot: usize) -> Vec<T> {
        let (n, d) = (h.rows(), h.last_dim());
        let mut z = vec![T::zero(); d];
        for row in h.data().chunks(d) {
            for (a, &b) in z.iter_mut().zip(row) {
                *a += b;
            }
        }
        let inv = T::one() / T::of_usize(n);
        z.iter_mut().for_each(|v| *v *= inv);
        z.extend_from_slice(&h.data()[robot * d..(robot + 1) * d]);
        z
    }

    fn infer(&self, x: &Tensor<T>) -> NnResult<Vec<T>> {
        let mut h = self.embed.infer(x)?;
        for b in &self.blocks {
            h = b.infer(&h)?;
        }
        Ok(Self::pool(&self.ln.infer(&h)?, Self::robot_row(x)))
    }

    fn forward(&mut self, x: &Tensor<T>) -> NnResult<Vec<T>> {
        self.rows = x.rows();
        self.robot_row = Self::robot_row(x);
        let mut h = self.embed.forward(x)?;
        for b in &mut self.blocks {
            h = b.forward(&h)?;
        }
        Ok(Self::pool(&self.ln.forward(&h)?, self.robot_row))
    }

    fn backward(&mut self, dz: &[T]) -> NnResult<()> {
        let n = self.rows;
        let d = dz.len() / 2;
        let inv = T::one() / T::of_usize(n);
        let row: Vec<T> = dz[..d].iter().map(|&g| g * inv).collect();
        let mut g = Tensor::from_vec(&[n, d], row.repeat(n))?;
        let r = self.robot_row;
        for (a, &b) in g.data_mut()[r * d..(r + 1) * d].iter_mut().zip(&dz[d..]) {
            *a += b;
        }
        g = self.ln.backward(&g)?;
        for b in self.blocks.iter_mut().rev() {
            g = b.backward(&g)?;
        }
        self.embed.backward(&g)?;
        Ok(())
    }

    fn params(&self) -> Vec<&Tensor<T>> {
        let mut p = self.embed.params();
        for b in &self.blocks {
            p.extend(b.params());
        }
        p.extend(self.ln.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut p = self.embed.params_mut();
        for b in &mut self.blocks {
            p.extend(b.params_mut());
        }
        p.extend(self.ln.params_mut());
        p
    }
}

fn obs_encoder<T: Scalar>(cfg: &PolicyConfig, init: &mut Init) -> Sequential<T> {
    let mut side = cfg.crop_px;
    let mut s = Sequential::new();
    let mut cin = CROP_CHANNELS;
    for cout in [8, 16, 16] {
        s = s
            .push(Conv2d::new(cin, cout, 3, 2, init))
            .push(Activation::new(ActivationKind::Relu));
        side = (side - 1) / 2 + 1;
        cin = cout;
    }
    let flat = cin * side * side;
    s.push(Reshape::new(&[flat])).push(Dense::new(flat, cfg.obs_dim, init))
}

struct ResBlock<T: Scalar> {
    ln: LayerNorm<T>,
    d1: Dense<T>,
    act: Activation<T>,
    d2: Dense<T>,
}

/// Residual MLP noise predictor over `[condition, noisy actions, time]` rows.
struct EpsNet<T: Scalar> {
    input: Dense<T>,
    blocks: Vec<ResBlock<T>>,
    ln: LayerNorm<T>,
    act: Activation<T>,
    out: Dense<T>,
}

impl<T: Scalar> EpsNet<T> {
    fn new(cfg: &PolicyConfig, init: &mut Init) -> Self {
        let w = cfg.eps_width;
        Self {
            input: Dense::new(cfg.eps_input_dim(), w, init),
            blocks: (0..cfg.eps_blocks)
                .map(|_| ResBlock {
                    ln: LayerNorm::new(w),
                    d1: Dense::new(w, w, init),
                    act: Activation::new(ActivationKind::Silu),
                    d2: Dense::from_parts(init.normal(&[w, w], 0.1 / (w as f64).sqrt()), Tensor::zeros(&[w]))
                        .expect("square layer"),
                })
                .collect(),
            ln: LayerNorm::new(w),
            act: Activation::new(ActivationKind::Silu),
            out: Dense::from_parts(
                init.xavier(&[w, cfg.action_dim()], w, cfg.action_dim()),
                Tensor::zeros(&[cfg.action_dim()]),
            )
            .expect("output layer"),
        }
    }

    fn infer(&self, x: &Tensor<T>) -> NnResult<Tensor<T>> {
        let mut h = self.input.infer(x)?;
        for b in &self.blocks {
            let f = b.d2.infer(&b.act.infer(&b.d1.infer(&b.ln.infer(&h)?)?)?)?;
            h = add(&h, &f);
        }
        self.out.infer(&self.act.infer(&self.ln.infer(&h)?)?)
    }

    fn forward(&mut self, x: &Tensor<T>) -> NnResult<Tensor<T>> {
        let mut h = self.input.forward(x)?;
        for b in &mut self.blocks {
            let f = b.d2.forward(&b.act.forward(&b.d1.forward(&b.ln.forward(&h)?)?)?)?;
            h = add(&h, &f);
        }
        self.out.forward(&self.act.forward(&self.ln.forward(&h)?)?)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> NnResult<Tensor<T>> {
        let mut g = self.ln.backward(&self.act.backward(&self.out.backward(dy)?)?)?;
        for b in self.blocks.iter_mut().rev() {
            let df = b.ln.backward(&b.d1.backward(&b.act.backward(&b.d2.backward(&g)?)?)?)?;
            g = add(&g, &df);
        }
        self.input.backward(&g)
    }

    fn params(&self) -> Vec<&Tensor<T>> {
        let mut p = self.input.params();
        for b in &self.blocks {
            p.extend(b.ln.params());
            p.extend(b.d1.params());
            p.extend(b.d2.params());
        }
        p.extend(self.ln.params());
        p.extend(self.out.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut p = self.input.params_mut();
        for b in &mut self.blocks {
            p.extend(b.ln.params_mut());
            p.extend(b.d1.params_mut());
            p.extend(b.d2.params_mut());
        }
        p.extend(self.ln.params_mut());
        p.extend(self.out.params_mut());
        p
    }
}

/// Graph encoder, observation encoder and noise predictor trained jointly.
pub struct DiffusionPolicy<T: Scalar> {
    cfg: PolicyConfig,
    graph: GraphEncoder<T>,
    obs: Sequential<T>,
    eps: EpsNet<T>,
}

impl<T: Scalar> std::fmt::Debug for DiffusionPolicy<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiffusionPolicy")
            .field("cfg", &self.cfg)
            .field("params", &self.param_count())
            .finish()
    }
}

impl<T: Scalar> Clone for DiffusionPolicy<T> {
    fn clone(&self) -> Self {
        self.cast()
    }
}

impl<T: Scalar> DiffusionPolicy<T> {
    pub fn new(cfg: PolicyConfig, seed: u64) -> Self {
        let mut init = Init::new(seed);
        Self {
            graph: GraphEncoder::new(&cfg, &mut init),
            obs: obs_encoder(&cfg, &mut init),
            eps: EpsNet::new(&cfg, &mut init),
            cfg,
        }
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.cfg
    }

    /// Same weights in another scalar type.
    pub fn cast<U: Scalar>(&self) -> DiffusionPolicy<U> {
        let mut n = DiffusionPolicy::<U>::new(self.cfg.clone(), 0);
        for (d, s) in n.params_mut().into_iter().zip(self.params()) {
            *d = s.cast();
        }
        n
    }

    /// Zeroes the output layer so the predicted noise is identically zero.
    pub fn zero_head(&mut self) {
        for p in self.eps.out.params_mut() {
            p.data_mut().iter_mut().for_each(|v| *v = T::zero());
        }
    }

    /// Encoding of one step's inputs: pooled graph embedding, robot token, then
    /// crop embedding.
    pub fn embed(&self, inp: &PolicyInput<T>) -> Result<Vec<T>, DiffusionError> {
        let mut z = self.graph.infer(&inp.nodes)?;
        z.extend_from_slice(self.obs.infer(&inp.crop)?.data());
        Ok(z)
    }

    pub(crate) fn embed_forward(&mut self, inp: &PolicyInput<T>) -> NnResult<Vec<T>> {
        let mut z = self.graph.forward(&inp.nodes)?;
        z.extend_from_slice(self.obs.forward(&inp.crop)?.data());
        Ok(z)
    }

    pub(crate) fn embed_backward(&mut self, dz: &[T]) -> NnResult<()> {
        let d = 2 * self.cfg.d_model;
        self.graph.backward(&dz[..d])?;
        self.obs
            .backward(&Tensor::from_vec(&[self.cfg.obs_dim], dz[d..].to_vec())?)?;
        Ok(())
    }

    /// Input row of the noise predictor.
    pub fn eps_row(&self, cond: &[T], a: &[T], t: f64) -> Vec<T> {
        let mut row = Vec::with_capacity(self.cfg.eps_input_dim());
        row.extend_from_slice(cond);
        row.extend_from_slice(a);
        row.extend_from_slice(&time_embedding::<T>(t));
        row
    }

    /// Predicted noise for a normalized action vector at time `t = k / K`.
    pub fn predict_noise(&self, cond: &[T], a: &[T], t: f64) -> Result<Vec<T>, DiffusionError> {
        if cond.len() != self.cfg.cond_dim() || a.len() != self.cfg.action_dim() {
            return Err(DiffusionError::Shape(format!(
                "condition {} / actions {}, expected {} / {}",
                cond.len(),
                a.len(),
                self.cfg.cond_dim(),
                self.cfg.action_dim()
            )));
        }
        let x = Tensor::from_vec(&[1, self.cfg.eps_input_dim()], self.eps_row(cond, a, t))?;
        Ok(self.eps.infer(&x)?.into_data())
    }

    pub(crate) fn eps_forward(&mut self, rows: &Tensor<T>) -> NnResult<Tensor<T>> {
        self.eps.forward(rows)
    }

    pub(crate) fn eps_backward(&mut self, d: &Tensor<T>) -> NnResult<Tensor<T>> {
        self.eps.backward(d)
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        let mut p = self.graph.params();
        p.extend(self.obs.params());
        p.extend(self.eps.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut p = self.graph.params_mut();
        p.extend(self.obs.params_mut());
        p.extend(self.eps.params_mut());
        p
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), DiffusionError> {
        Ok(write_blob(w, GDIFF_MAGIC, &self.cfg.header(), &self.params())?)
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, DiffusionError> {
        let (header, tensors) = read_blob::<T>(r, GDIFF_MAGIC)?;
        let cfg = PolicyConfig::from_header(&header)?;
        let mut net = Self::new(cfg, 0);
        load_into(net.params_mut(), tensors)?;
        Ok(net)
    }
}
