use guide_neuralkit::adam::clip_grad_norm;
use guide_neuralkit::{Adam, Scalar, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{
    bc_loss, make_schedule, Conditioning, DiffusionError, DiffusionPolicy, ExpertSample, NoiseSchedule, PolicyConfig,
    PolicyInput, COSINE_OFFSET,
};

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTrainConfig {
    pub steps: usize,
    pub batch: usize,
    /// `(k, eps)` draws per sample; the encoders run once per sample.
    pub draws: usize,
    pub lr: f64,
    pub warmup: usize,
    pub clip: f64,
    pub k_train: usize,
    pub ema: f64,
    pub seed: u64,
    pub min_samples: usize,
    pub eval_samples: usize,
    /// Evaluate the fixed-draw loss every this many steps (0 disables).
    pub eval_every: usize,
    /// Stop once the evaluated loss falls to this fraction of the initial one.
    pub stop_ratio: Option<f64>,
}

impl Default for PolicyTrainConfig {
    fn default() -> Self {
        Self {
            steps: 4000,
            batch: 8,
            draws: 8,
            lr: 1e-3,
            warmup: 100,
            clip: 1.0,
            k_train: 100,
            ema: 0.995,
            seed: 1,
            min_samples: 16,
            eval_samples: 64,
            eval_every: 0,
            stop_ratio: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTrainReport {
    /// Mean training loss per block of 100 optimizer steps.
    pub train_loss: Vec<f64>,
    /// Fixed-draw loss on the evaluation subset before and after training.
    pub initial_eval: f64,
    pub final_eval: f64,
    /// `(step, loss)` of the periodic evaluations of the averaged weights.
    pub eval_curve: Vec<(usize, f64)>,
    pub steps: usize,
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n)
        .map(|_| {
            let v: f64 = StandardNormal.sample(rng);
            v as f32
        })
        .collect()
}

/// Encodings of the previous `t_o - 1` steps of sample `i`, most recent first.
pub fn history<T: Scalar>(
    model: &DiffusionPolicy<T>,
    samples: &[ExpertSample],
    i: usize,
) -> Result<Vec<Vec<T>>, DiffusionError> {
    let mut out = Vec::new();
    let mut cur = samples[i].prev;
    while out.len() + 1 < model.config().t_o {
        let Some(p) = cur else { break };
        out.push(model.embed(&samples[p].input.cast())?);
        cur = samples[p].prev;
    }
    Ok(out)
}

/// Mean noise-prediction loss over `draws`, accumulating `scale` times its
/// gradient into the model. History encodings are constants.
pub fn bc_loss_backward<T: Scalar>(
    model: &mut DiffusionPolicy<T>,
    input: &PolicyInput<T>,
    previous: &[Vec<T>],
    a0: &[T],
    sched: &NoiseSchedule<T>,
    draws: &[(usize, Vec<T>)],
    scale: T,
) -> Result<T, DiffusionError> {
    let cfg = model.config().clone();
    let z = model.embed_forward(input)?;
    let cond = Conditioning::new(z, previous, cfg.t_o).flat();
    let (ad, width) = (cfg.action_dim(), cfg.eps_input_dim());
    let mut rows = Vec::with_capacity(draws.len() * width);
    for (k, eps) in draws {
        let ab = sched.a_bar(*k);
        let (sa, sn) = (ab.sqrt(), (T::one() - ab).sqrt());
        let a_k: Vec<T> = a0.iter().zip(eps).map(|(&a, &e)| sa * a + sn * e).collect();
        rows.extend(model.eps_row(&cond, &a_k, *k as f64 / sched.k as f64));
    }
    let x = Tensor::from_vec(&[draws.len(), width], rows)?;
    let pred = model.eps_forward(&x)?;
    let norm = T::of_usize(draws.len() * ad);
    let mut loss = T::zero();
    let mut d = vec![T::zero(); draws.len() * ad];
    for (r, (_, eps)) in draws.iter().enumerate() {
        for j in 0..ad {
            let diff = pred.data()[r * ad + j] - eps[j];
            loss += diff * diff;
            d[r * ad + j] = T::of(2.0) * diff / norm * scale;
        }
    }
    let dx = model.eps_backward(&Tensor::from_vec(&[draws.len(), ad], d)?)?;
    let e = cfg.embed_dim();
    let mut dz = vec![T::zero(); e];
    for row in dx.data().chunks(width) {
        for (a, &b) in dz.iter_mut().zip(&row[..e]) {
            *a += b;
        }
    }
    model.embed_backward(&dz)?;
    Ok(loss / norm)
}

fn eval_loss(
    model: &DiffusionPolicy<f32>,
    samples: &[ExpertSample],
    picks: &[(usize, usize, Vec<f32>)],
    sched: &NoiseSchedule<f32>,
) -> Result<f64, DiffusionError> {
    let mut total = 0.0;
    for (i, k, eps) in picks {
        let z = model.embed(&samples[*i].input)?;
        let cond = Conditioning::new(z, &history(model, samples, *i)?, model.config().t_o).flat();
        total += bc_loss(model, &cond, &samples[*i].actions, sched, *k, eps)? as f64;
    }
    Ok(total / picks.len().max(1) as f64)
}

fn swap_weights(model: &mut DiffusionPolicy<f32>, other: &mut [Vec<f32>]) {
    for (p, e) in model.params_mut().into_iter().zip(other) {
        p.data_mut().swap_with_slice(e);
    }
}

/// Behavior cloning with Adam, warmup then cosine decay, gradient clipping
/// and an exponential moving average of the weights, which is what gets
/// returned.
pub fn train_policy(
    samples: &[ExpertSample],
    pcfg: PolicyConfig,
    cfg: &PolicyTrainConfig,
) -> Result<(DiffusionPolicy<f32>, PolicyTrainReport), DiffusionError> {
    if samples.len() < cfg.min_samples {
        return Err(DiffusionError::DatasetTooSmall {
            got: samples.len(),
            need: cfg.min_samples,
        });
    }
    let ad = pcfg.action_dim();
    if let Some(s) = samples.iter().find(|s| s.actions.len() != ad) {
        return Err(DiffusionError::Shape(format!(
            "sample {}/{} has {} action values, expected {ad}",
            s.episode,
            s.step,
            s.actions.len()
        )));
    }
    let mut model = DiffusionPolicy::<f32>::new(pcfg, cfg.seed);
    let sched = make_schedule::<f32>(cfg.k_train, COSINE_OFFSET);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9);
    let picks: Vec<(usize, usize, Vec<f32>)> = (0..cfg.eval_samples.min(samples.len()))
        .map(|j| {
            let i = j * samples.len() / cfg.eval_samples.min(samples.len());
            (i, rng.gen_range(1..=cfg.k_train), gaussian(&mut rng, ad))
        })
        .collect();
    let initial_eval = eval_loss(&model, samples, &picks, &sched)?;

    let mut opt = Adam::<f32>::with_lr(cfg.lr);
    let mut ema: Vec<Vec<f32>> = model.params().iter().map(|p| p.data().to_vec()).collect();
    let mut train_loss = Vec::new();
    let mut block = 0.0;
    let mut eval_curve = Vec::new();
    let mut steps_run = 0;
    let scale = 1.0 / cfg.batch as f32;
    for step in 0..cfg.steps {
        steps_run = step + 1;
        model.zero_grad();
        let mut batch_loss = 0.0;
        for _ in 0..cfg.batch {
            let i = rng.gen_range(0..samples.len());
            let prev = history(&model, samples, i)?;
            let draws: Vec<(usize, Vec<f32>)> = (0..cfg.draws)
                .map(|_| (rng.gen_range(1..=cfg.k_train), gaussian(&mut rng, ad)))
                .collect();
            let s = &samples[i];
            batch_loss += bc_loss_backward(&mut model, &s.input, &prev, &s.actions, &sched, &draws, scale)? as f64;
        }
        batch_loss /= cfg.batch as f64;
        if !batch_loss.is_finite() {
            return Err(DiffusionError::Diverged { step, loss: batch_loss });
        }
        let warm = ((step + 1) as f64 / cfg.warmup.max(1) as f64).min(1.0);
        let decay = 0.1 + 0.45 * (1.0 + (std::f64::consts::PI * step as f64 / cfg.steps as f64).cos());
        opt.lr = cfg.lr * warm * decay;
        let mut params = model.params_mut();
        clip_grad_norm(&mut params, cfg.clip);
        opt.step(&mut params)?;
        let beta = cfg.ema.min(1.0 - 1.0 / (step as f64 + 2.0)) as f32;
        for (e, p) in ema.iter_mut().zip(model.params()) {
            for (a, &b) in e.iter_mut().zip(p.data()) {
                *a = beta * *a + (1.0 - beta) * b;
            }
        }
        block += batch_loss;
        if (step + 1) % 100 == 0 || step + 1 == cfg.steps {
            let n = (step % 100 + 1) as f64;
            train_loss.push(block / n);
            block = 0.0;
        }
        if cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0 {
            swap_weights(&mut model, &mut ema);
            let l = eval_loss(&model, samples, &picks, &sched);
            swap_weights(&mut model, &mut ema);
            let l = l?;
            eval_curve.push((step + 1, l));
            if cfg.stop_ratio.is_some_and(|r| l <= r * initial_eval) {
                break;
            }
        }
    }
    swap_weights(&mut model, &mut ema);
    let final_eval = eval_loss(&model, samples, &picks, &sched)?;
    Ok((
        model,
        PolicyTrainReport {
            train_loss,
            initial_eval,
            final_eval,
            eval_curve,
            steps: steps_run,
        },
    ))
}
