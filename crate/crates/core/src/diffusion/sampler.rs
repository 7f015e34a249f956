use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::Scalar;

use super::{ActionSequence, DiffusionError, DiffusionPolicy, NoiseSchedule};

/// Anything that predicts the noise in a normalized action vector at
/// diffusion time `t = k / K`.
pub trait NoiseModel<T: Scalar> {
    fn predict_noise(&self, cond: &[T], a: &[T], t: f64) -> Result<Vec<T>, DiffusionError>;

    /// Flattened action length, `2 * T_p`.
    fn action_dim(&self) -> usize;

    fn max_step(&self) -> f64 {
        2.0
    }

    /// Bound on the implied clean sample during denoising, if any.
    fn clip_sample(&self) -> Option<f64> {
        None
    }
}

impl<T: Scalar> NoiseModel<T> for DiffusionPolicy<T> {
    fn predict_noise(&self, cond: &[T], a: &[T], t: f64) -> Result<Vec<T>, DiffusionError> {
        DiffusionPolicy::predict_noise(self, cond, a, t)
    }

    fn action_dim(&self) -> usize {
        self.config().action_dim()
    }

    fn max_step(&self) -> f64 {
        self.config().max_step
    }

    fn clip_sample(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// `A_{k-1} = alpha_k (A_k - gamma_k eps(A_k, k)) + sigma_k z`.
///
/// When the model sets a clip bound, the predicted noise is first replaced by
/// the noise implied by the clean sample estimate clamped to that bound.
pub fn denoise_step<T: Scalar, M: NoiseModel<T> + ?Sized>(
    a_k: &[T],
    k: usize,
    cond: &[T],
    sched: &NoiseSchedule<T>,
    model: &M,
    noise: &[T],
) -> Result<Vec<T>, DiffusionError> {
    if k == 0 || k > sched.k {
        return Err(DiffusionError::Shape(format!("step {k} outside 1..={}", sched.k)));
    }
    let mut eps = model.predict_noise(cond, a_k, k as f64 / sched.k as f64)?;
    if let Some(c) = model.clip_sample() {
        let ab = sched.a_bar(k);
        let (sa, sn) = (ab.sqrt(), (T::one() - ab).sqrt());
        let c = T::of(c);
        for (e, &a) in eps.iter_mut().zip(a_k).filter(|(e, _)| e.is_finite()) {
            let x0 = ((a - sn * *e) / sa).max(-c).min(c);
            *e = (a - sa * x0) / sn;
        }
    }
    let (alpha, gamma, sigma) = sched.coeffs(k);
    let out: Vec<T> = a_k
        .iter()
        .zip(&eps)
        .zip(noise)
        .map(|((&a, &e), &z)| alpha * (a - gamma * e) + sigma * z)
        .collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(DiffusionError::NonFinite { k });
    }
    Ok(out)
}

fn gaussian<T: Scalar>(rng: &mut ChaCha8Rng, n: usize) -> Vec<T> {
    (0..n)
        .map(|_| {
            let v: f64 = StandardNormal.sample(rng);
            T::of(v)
        })
        .collect()
}

/// Runs the full reverse chain from a seeded unit-Gaussian draw and returns
/// the de-normalized waypoints.
pub fn sample_actions<T: Scalar, M: NoiseModel<T> + ?Sized>(
    model: &M,
    cond: &[T],
    sched: &NoiseSchedule<T>,
    seed: u64,
) -> Result<ActionSequence<T>, DiffusionError> {
    let dim = model.action_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = gaussian::<T>(&mut rng, dim);
    for k in (1..=sched.k).rev() {
        let z = gaussian::<T>(&mut rng, dim);
        a = denoise_step(&a, k, cond, sched, model, &z)?;
    }
    Ok(ActionSequence::from_normalized(&a, model.max_step()))
}

/// Noise-prediction error for one `(k, eps)` draw on a normalized expert
/// action vector.
pub fn bc_loss<T: Scalar, M: NoiseModel<T> + ?Sized>(
    model: &M,
    cond: &[T],
    a0: &[T],
    sched: &NoiseSchedule<T>,
    k: usize,
    eps: &[T],
) -> Result<T, DiffusionError> {
    if k == 0 || k > sched.k {
        return Err(DiffusionError::Shape(format!("step {k} outside 1..={}", sched.k)));
    }
    let ab = sched.a_bar(k);
    let (sa, sn) = (ab.sqrt(), (T::one() - ab).sqrt());
    let a_k: Vec<T> = a0.iter().zip(eps).map(|(&a, &e)| sa * a + sn * e).collect();
    let pred = model.predict_noise(cond, &a_k, k as f64 / sched.k as f64)?;
    let n = T::of_usize(eps.len());
    Ok(pred.iter().zip(eps).map(|(&p, &e)| (p - e) * (p - e)).sum::<T>() / n)
}
