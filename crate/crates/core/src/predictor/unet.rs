use std::io::{Read, Write};

use guide_neuralkit::blob::{load_into, read_blob, write_blob};
use guide_neuralkit::init::Init;
use guide_neuralkit::layers::sigmoid;
use guide_neuralkit::{Activation, ActivationKind, Conv2d, Layer, NnError, Scalar, Sequential, Tensor, Upsample2x};

use super::{NodeImage, PredictError, FREE, OCCUPIED};

pub const GPRED_MAGIC: &[u8; 6] = b"GPRED1";
const IN_CHANNELS: usize = 3;

fn conv_relu<T: Scalar>(s: Sequential<T>, cin: usize, cout: usize, stride: usize, init: &mut Init) -> Sequential<T> {
    s.push(Conv2d::new(cin, cout, 3, stride, init))
        .push(Activation::new(ActivationKind::Relu))
}

fn concat<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    let (sa, sb) = (a.shape(), b.shape());
    let mut data = Vec::with_capacity(a.len() + b.len());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Tensor::from_vec(&[sa[0] + sb[0], sa[1], sa[2]], data)
}

fn split<T: Scalar>(g: &Tensor<T>, first: usize) -> Result<(Tensor<T>, Tensor<T>), NnError> {
    let s = g.shape();
    let plane = s[1] * s[2];
    let (a, b) = g.data().split_at(first * plane);
    Ok((
        Tensor::from_vec(&[first, s[1], s[2]], a.to_vec())?,
        Tensor::from_vec(&[s[0] - first, s[1], s[2]], b.to_vec())?,
    ))
}

fn add_into<T: Scalar>(acc: &mut Tensor<T>, g: &Tensor<T>) {
    for (a, &b) in acc.data_mut().iter_mut().zip(g.data()) {
        *a += b;
    }
}

/// Three-level encoder-decoder with skip connections. Input channels are
/// known-free, known-occupied and inside-the-world indicators; the output is
/// one free-probability logit per pixel.
pub struct InpaintNet<T: Scalar> {
    widths: [usize; 4],
    enc: Vec<Sequential<T>>,
    dec: Vec<Sequential<T>>,
    up: Vec<Upsample2x>,
    head: Conv2d<T>,
}

impl<T: Scalar> std::fmt::Debug for InpaintNet<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InpaintNet")
            .field("widths", &self.widths)
            .field("params", &self.param_count())
            .finish()
    }
}

impl<T: Scalar> Clone for InpaintNet<T> {
    fn clone(&self) -> Self {
        let mut n = Self::with_widths(self.widths, 0);
        let src = self.params();
        for (d, s) in n.params_mut().into_iter().zip(src) {
            d.data_mut().copy_from_slice(s.data());
        }
        n
    }
}

impl<T: Scalar> InpaintNet<T> {
    pub fn new(seed: u64) -> Self {
        Self::with_widths([8, 16, 24, 32], seed)
    }

    pub fn with_widths(widths: [usize; 4], seed: u64) -> Self {
        let mut init = Init::new(seed);
        let w = widths;
        let mut enc = Vec::new();
        let mut cin = IN_CHANNELS;
        for (level, &c) in w.iter().enumerate() {
            let stride = if level == 0 { 1 } else { 2 };
            let s = conv_relu(Sequential::new(), cin, c, stride, &mut init);
            enc.push(conv_relu(s, c, c, 1, &mut init));
            cin = c;
        }
        let mut dec = Vec::new();
        for level in (0..3).rev() {
            dec.push(conv_relu(
                Sequential::new(),
                w[level + 1] + w[level],
                w[level],
                1,
                &mut init,
            ));
        }
        let head = {
            let mut h = Conv2d::new(w[0], 1, 1, 1, &mut init);
            h.weight = init.xavier(&[1, w[0], 1, 1], w[0], 1);
            h
        };
        Self {
            widths,
            enc,
            dec,
            up: (0..3).map(|_| Upsample2x::new()).collect(),
            head,
        }
    }

    pub fn widths(&self) -> [usize; 4] {
        self.widths
    }

    pub fn input_tensor(img: &NodeImage) -> Tensor<T> {
        let s = img.size;
        let mut t = Tensor::zeros(&[IN_CHANNELS, s, s]);
        let d = t.data_mut();
        for y in 0..s {
            for x in 0..s {
                let i = y * s + x;
                match img.pixels[i] {
                    FREE => d[i] = T::one(),
                    OCCUPIED => d[s * s + i] = T::one(),
                    _ => {}
                }
                if img.in_extent(x, y) {
                    d[2 * s * s + i] = T::one();
                }
            }
        }
        t
    }

    fn check(&self, x: &Tensor<T>) -> Result<(), PredictError> {
        let s = x.shape();
        if s.len() != 3 || s[0] != IN_CHANNELS || s[1] != s[2] || s[1] % 8 != 0 {
            return Err(PredictError::UnsupportedShape(s.get(1).copied().unwrap_or(0)));
        }
        Ok(())
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>, PredictError> {
        self.check(x)?;
        let mut skips = Vec::with_capacity(4);
        let mut h = x.clone();
        for e in &self.enc {
            h = e.infer(&h)?;
            skips.push(h.clone());
        }
        for (k, d) in self.dec.iter().enumerate() {
            let u = <Upsample2x as Layer<T>>::infer(&self.up[k], &h)?;
            h = d.infer(&concat(&u, &skips[2 - k])?)?;
        }
        Ok(self.head.infer(&h)?)
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>, PredictError> {
        self.check(x)?;
        let mut skips = Vec::with_capacity(4);
        let mut h = x.clone();
        for e in &mut self.enc {
            h = e.forward(&h)?;
            skips.push(h.clone());
        }
        for (k, d) in self.dec.iter_mut().enumerate() {
            let u = self.up[k].forward(&h)?;
            h = d.forward(&concat(&u, &skips[2 - k])?)?;
        }
        Ok(self.head.forward(&h)?)
    }

    /// Backpropagates a gradient on the logits, accumulating parameter grads.
    pub fn backward(&mut self, dlogits: &Tensor<T>) -> Result<(), PredictError> {
        let mut g = self.head.backward(dlogits)?;
        let mut skip_grads: Vec<Option<Tensor<T>>> = vec![None, None, None];
        for k in (0..3).rev() {
            let level = 2 - k;
            let dcat = self.dec[k].backward(&g)?;
            let (du, dskip) = split(&dcat, self.widths[level + 1])?;
            skip_grads[level] = Some(dskip);
            g = <Upsample2x as Layer<T>>::backward(&mut self.up[k], &du)?;
        }
        for level in (0..4).rev() {
            if level < 3 {
                if let Some(s) = &skip_grads[level] {
                    add_into(&mut g, s);
                }
            }
            g = self.enc[level].backward(&g)?;
        }
        Ok(())
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        let mut p: Vec<&Tensor<T>> = Vec::new();
        for s in self.enc.iter().chain(&self.dec) {
            p.extend(s.params());
        }
        p.extend(self.head.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut p: Vec<&mut Tensor<T>> = Vec::new();
        for s in self.enc.iter_mut().chain(self.dec.iter_mut()) {
            p.extend(s.params_mut());
        }
        p.extend(self.head.params_mut());
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

    /// Per-pixel free probabilities.
    pub fn predict(&self, img: &NodeImage) -> Result<Vec<f32>, PredictError> {
        let logits = self.infer(&Self::input_tensor(img))?;
        Ok(logits.data().iter().map(|&z| sigmoid(z).as_f64() as f32).collect())
    }

    fn header(&self) -> String {
        let w = self.widths;
        format!(
            "inpaint-unet in={IN_CHANNELS} widths={},{},{},{}",
            w[0], w[1], w[2], w[3]
        )
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), PredictError> {
        Ok(write_blob(w, GPRED_MAGIC, &self.header(), &self.params())?)
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, PredictError> {
        let (header, tensors) = read_blob::<T>(r, GPRED_MAGIC)?;
        let widths = header
            .split_whitespace()
            .find_map(|kv| kv.strip_prefix("widths="))
            .and_then(|v| {
                let w: Vec<usize> = v.split(',').filter_map(|x| x.parse().ok()).collect();
                <[usize; 4]>::try_from(w).ok()
            })
            .ok_or_else(|| PredictError::Format(format!("unrecognised predictor header {header:?}")))?;
        let mut net = Self::with_widths(widths, 0);
        load_into(net.params_mut(), tensors)?;
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_budget_is_about_fifty_thousand() {
        let n = InpaintNet::<f32>::new(0).param_count();
        assert!((40_000..60_000).contains(&n), "{n}");
    }

    #[test]
    fn output_shape_matches_input_for_supported_sizes() {
        let net = InpaintNet::<f32>::new(1);
        for s in super::super::SUPPORTED_SIZES {
            let img = NodeImage::blank(s, s - 3, s - 5);
            assert_eq!(net.predict(&img).unwrap().len(), s * s);
        }
        assert!(net.infer(&Tensor::zeros(&[3, 30, 30])).is_err());
    }

    #[test]
    fn blob_round_trip() {
        let net = InpaintNet::<f32>::new(5);
        let mut buf = Vec::new();
        net.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..6], b"GPRED1");
        let back = InpaintNet::<f32>::read_from(&mut buf.as_slice()).unwrap();
        let img = NodeImage::blank(32, 25, 25);
        assert_eq!(net.predict(&img).unwrap(), back.predict(&img).unwrap());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut net = InpaintNet::<f64>::with_widths([2, 3, 3, 4], 3);
        // Nonzero biases keep pre-activations of all-zero padding off the ReLU kink.
        for (pi, p) in net.params_mut().into_iter().enumerate() {
            if p.shape().len() == 1 {
                for (k, b) in p.data_mut().iter_mut().enumerate() {
                    *b = 0.05 + 0.01 * ((pi * 7 + k * 3) % 5) as f64;
                }
            }
        }
        let mut img = NodeImage::blank(8, 7, 8);
        img.set(1, 1, FREE);
        img.set(2, 5, OCCUPIED);
        let x = InpaintNet::<f64>::input_tensor(&img);
        let wts: Vec<f64> = (0..64).map(|i| ((i * 37) % 11) as f64 / 11.0 - 0.5).collect();
        let loss =
            |n: &InpaintNet<f64>| -> f64 { n.infer(&x).unwrap().data().iter().zip(&wts).map(|(a, b)| a * b).sum() };
        net.zero_grad();
        net.forward(&x).unwrap();
        net.backward(&Tensor::from_vec(&[1, 8, 8], wts.clone()).unwrap())
            .unwrap();
        let grads: Vec<Vec<f64>> = net.params().iter().map(|p| p.grad().unwrap().to_vec()).collect();
        let h = 1e-5;
        for (pi, g) in grads.iter().enumerate() {
            for k in (0..g.len()).step_by(3) {
                let orig = net.params()[pi].data()[k];
                net.params_mut()[pi].data_mut()[k] = orig + h;
                let lp = loss(&net);
                net.params_mut()[pi].data_mut()[k] = orig - h;
                let lm = loss(&net);
                net.params_mut()[pi].data_mut()[k] = orig;
                let fd = (lp - lm) / (2.0 * h);
                let err = (fd - g[k]).abs() / fd.abs().max(g[k].abs()).max(1e-6);
                assert!(err < 1e-3, "param {pi}[{k}]: fd {fd} vs {}", g[k]);
            }
        }
    }
}
