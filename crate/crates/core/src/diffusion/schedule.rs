use crate::Scalar;

pub const COSINE_OFFSET: f64 = 0.008;
const BETA_MIN: f64 = 1e-5;
const BETA_MAX: f64 = 0.999;

/// Squared-cosine noise schedule with the ancestral-sampler coefficients.
/// Step `k` runs from 1 to K; vectors are indexed by `k - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule<T> {
    pub k: usize,
    pub beta: Vec<T>,
    pub a: Vec<T>,
    pub a_bar: Vec<T>,
    pub alpha: Vec<T>,
    pub gamma: Vec<T>,
    pub sigma: Vec<T>,
}

/// `f(t) = cos^2(((t + s) / (1 + s)) * pi / 2)` for `t = k / K`.
pub fn cosine_f(t: f64, s: f64) -> f64 {
    (((t + s) / (1.0 + s)) * std::f64::consts::FRAC_PI_2).cos().powi(2)
}

/// Betas follow `1 - a_bar_k / a_bar_{k-1}` of the cosine curve, clipped to
/// `[1e-5, 0.999]`; `a_bar` is then the running product of `1 - beta`, so it
/// matches the curve wherever no clipping happened.
pub fn make_schedule<T: Scalar>(k_steps: usize, s: f64) -> NoiseSchedule<T> {
    assert!(k_steps >= 1, "schedule needs at least one step");
    let kf = k_steps as f64;
    let f0 = cosine_f(0.0, s);
    let mut beta = Vec::with_capacity(k_steps);
    let mut a_bar = Vec::with_capacity(k_steps);
    let mut prev_curve = 1.0;
    let mut prod = 1.0;
    for k in 1..=k_steps {
        let curve = cosine_f(k as f64 / kf, s) / f0;
        let b = (1.0 - curve / prev_curve).clamp(BETA_MIN, BETA_MAX);
        prev_curve = curve;
        prod *= 1.0 - b;
        beta.push(b);
        a_bar.push(prod);
    }
    let mut out = NoiseSchedule {
        k: k_steps,
        beta: Vec::with_capacity(k_steps),
        a: Vec::with_capacity(k_steps),
        a_bar: Vec::with_capacity(k_steps),
        alpha: Vec::with_capacity(k_steps),
        gamma: Vec::with_capacity(k_steps),
        sigma: Vec::with_capacity(k_steps),
    };
    for i in 0..k_steps {
        let b = beta[i];
        let ab = a_bar[i];
        let ab_prev = if i == 0 { 1.0 } else { a_bar[i - 1] };
        out.beta.push(T::of(b));
        out.a.push(T::of(1.0 - b));
        out.a_bar.push(T::of(ab));
        out.alpha.push(T::of(1.0 / (1.0 - b).sqrt()));
        out.gamma.push(T::of(b / (1.0 - ab).sqrt()));
        out.sigma.push(T::of((b * (1.0 - ab_prev) / (1.0 - ab)).sqrt()));
    }
    out
}

impl<T: Scalar> NoiseSchedule<T> {
    /// Coefficients `(alpha_k, gamma_k, sigma_k)` for step `k` in `1..=K`.
    pub fn coeffs(&self, k: usize) -> (T, T, T) {
        (self.alpha[k - 1], self.gamma[k - 1], self.sigma[k - 1])
    }

    pub fn a_bar(&self, k: usize) -> T {
        self.a_bar[k - 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_schedule_is_clipped_to_the_max_beta() {
        let s = make_schedule::<f64>(1, COSINE_OFFSET);
        assert_eq!(s.beta, vec![BETA_MAX]);
        assert!((s.a_bar[0] - (1.0 - BETA_MAX)).abs() < 1e-15);
        assert_eq!(s.sigma[0], 0.0);
    }

    #[test]
    fn final_denoising_step_has_no_noise() {
        for k in [1, 10, 30, 100] {
            let s = make_schedule::<f32>(k, COSINE_OFFSET);
            assert_eq!(s.sigma[0], 0.0);
            assert!(s.sigma.iter().all(|x| x.is_finite()));
        }
    }
}
