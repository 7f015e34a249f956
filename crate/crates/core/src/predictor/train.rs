use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use guide_neuralkit::adam::clip_grad_norm;
use guide_neuralkit::{Adam, Tensor};

use super::{InpaintNet, NodeImage, PredictError, PredictionRecord, PredictorModel, FREE, MASKED};

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub batch: usize,
    /// Fraction of records, taken from the end, held out for validation.
    pub val_fraction: f64,
    /// Random dihedral transforms of square world extents.
    pub augment: bool,
    pub min_records: usize,
}

impl Default for PredictorTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            lr: 2e-3,
            seed: 1,
            batch: 8,
            val_fraction: 0.1,
            augment: true,
            min_records: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean training loss per epoch.
    pub train_loss: Vec<f64>,
    /// Validation loss before training, then after each epoch.
    pub val_loss: Vec<f64>,
    pub steps: usize,
}

/// Masked binary cross-entropy over unknown in-world pixels and its
/// gradient with respect to the logits.
fn masked_bce(logits: &Tensor<f32>, rec_in: &NodeImage, target: &NodeImage) -> (f64, Tensor<f32>, usize) {
    let mut grad = Tensor::zeros(logits.shape());
    let mut n = 0usize;
    for (i, &p) in rec_in.pixels.iter().enumerate() {
        if p == MASKED && target.pixels[i] != MASKED {
            n += 1;
        }
    }
    if n == 0 {
        return (0.0, grad, 0);
    }
    let mut loss = 0.0f64;
    let gd = grad.data_mut();
    for (i, &z) in logits.data().iter().enumerate() {
        if rec_in.pixels[i] != MASKED || target.pixels[i] == MASKED {
            continue;
        }
        let y = if target.pixels[i] == FREE { 1.0 } else { 0.0 };
        let z64 = z as f64;
        loss += z64.max(0.0) - z64 * y + (-z64.abs()).exp().ln_1p();
        let s = 1.0 / (1.0 + (-z64).exp());
        gd[i] = ((s - y) / n as f64) as f32;
    }
    (loss / n as f64, grad, n)
}

fn transform(img: &NodeImage, t: usize) -> NodeImage {
    let e = img.extent_w;
    let mut out = img.clone();
    for y in 0..e {
        for x in 0..e {
            let (mut sx, mut sy) = (x, y);
            if t & 1 != 0 {
                sx = e - 1 - sx;
            }
            if t & 2 != 0 {
                sy = e - 1 - sy;
            }
            if t & 4 != 0 {
                std::mem::swap(&mut sx, &mut sy);
            }
            out.set(x, y, img.get(sx, sy));
        }
    }
    out
}

/// Validation loss of a network over records.
pub fn validation_loss(net: &InpaintNet<f32>, records: &[PredictionRecord]) -> Result<f64, PredictError> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for r in records {
        let logits = net.infer(&InpaintNet::input_tensor(&r.input))?;
        let (l, _, n) = masked_bce(&logits, &r.input, &r.target);
        if n > 0 {
            sum += l;
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// Trains the encoder-decoder predictor with masked binary cross-entropy.
pub fn train_predictor(
    records: &[PredictionRecord],
    cfg: &PredictorTrainConfig,
) -> Result<(PredictorModel, TrainReport), PredictError> {
    if records.len() < cfg.min_records {
        return Err(PredictError::DatasetTooSmall {
            need: cfg.min_records,
            got: records.len(),
        });
    }
    let n_val = ((records.len() as f64 * cfg.val_fraction).ceil() as usize).min(records.len() - 1);
    let (train, val) = records.split_at(records.len() - n_val);
    let val = if val.is_empty() { train } else { val };
    let mut net = InpaintNet::<f32>::new(cfg.seed);
    let mut opt = Adam::with_lr(cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut report = TrainReport {
        train_loss: Vec::new(),
        val_loss: vec![validation_loss(&net, val)?],
        steps: 0,
    };
    let mut order: Vec<usize> = (0..train.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut in_batch = 0;
        net.zero_grad();
        for (k, &idx) in order.iter().enumerate() {
            let rec = &train[idx];
            let t = if cfg.augment && rec.input.extent_w == rec.input.extent_h {
                rng.gen_range(0..8)
            } else {
                0
            };
            let (input, target) = if t == 0 {
                (rec.input.clone(), rec.target.clone())
            } else {
                (transform(&rec.input, t), transform(&rec.target, t))
            };
            let logits = net.forward(&InpaintNet::input_tensor(&input))?;
            let (loss, mut grad, _) = masked_bce(&logits, &input, &target);
            if !loss.is_finite() {
                return Err(PredictError::Diverged {
                    step: report.steps,
                    loss,
                });
            }
            epoch_loss += loss;
            let scale = 1.0 / cfg.batch as f32;
            grad.data_mut().iter_mut().for_each(|g| *g *= scale);
            net.backward(&grad)?;
            in_batch += 1;
            if in_batch == cfg.batch || k + 1 == order.len() {
                let mut params = net.params_mut();
                clip_grad_norm(&mut params, 5.0);
                opt.step(&mut params).map_err(|_| PredictError::Diverged {
                    step: report.steps,
                    loss,
                })?;
                report.steps += 1;
                in_batch = 0;
                net.zero_grad();
            }
        }
        report.train_loss.push(epoch_loss / order.len() as f64);
        report.val_loss.push(validation_loss(&net, val)?);
    }
    Ok((PredictorModel::Learned(Box::new(net)), report))
}
