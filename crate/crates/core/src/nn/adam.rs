use crate::error::{check_dim, Result};
use crate::nn::{MlpGrads, MlpParams};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for one [`MlpParams`], one buffer per parameter slice.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<S> {
    pub config: AdamConfig,
    first: Vec<Vec<S>>,
    second: Vec<Vec<S>>,
    step: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(params: &MlpParams<S>, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<S>> = params
            .slices()
            .iter()
            .map(|s| vec![S::zero(); s.len()])
            .collect();
        Self {
            config,
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<S>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<S>] {
        &self.second
    }

    /// One bias-corrected update at the configured learning rate.
    pub fn update(&mut self, params: &mut MlpParams<S>, grads: &MlpGrads<S>) -> Result<()> {
        self.update_with_lr(params, grads, self.config.lr)
    }

    /// Same as [`update`](Self::update) with an explicit learning rate, for schedules.
    pub fn update_with_lr(
        &mut self,
        params: &mut MlpParams<S>,
        grads: &MlpGrads<S>,
        lr: f64,
    ) -> Result<()> {
        let g_slices = grads.slices();
        let mut p_slices = params.slices_mut();
        check_dim("adam parameter slices", self.first.len(), p_slices.len())?;
        check_dim("adam gradient slices", self.first.len(), g_slices.len())?;
        for (k, (p, g)) in p_slices.iter().zip(&g_slices).enumerate() {
            check_dim("adam slice length", self.first[k].len(), p.len())?;
            check_dim("adam gradient length", self.first[k].len(), g.len())?;
        }

        self.step += 1;
        let c = &self.config;
        let b1 = S::lit(c.beta1);
        let b2 = S::lit(c.beta2);
        let one = S::one();
        let correction1 = S::lit(1.0 - c.beta1.powi(self.step as i32));
        let correction2 = S::lit(1.0 - c.beta2.powi(self.step as i32));
        let lr = S::lit(lr);
        let eps = S::lit(c.eps);

        for (k, (p, g)) in p_slices.iter_mut().zip(&g_slices).enumerate() {
            let m = &mut self.first[k];
            let v = &mut self.second[k];
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (one - b1) * gi;
                v[i] = b2 * v[i] + (one - b2) * gi * gi;
                let m_hat = m[i] / correction1;
                let v_hat = v[i] / correction2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Cosine annealing from `base` to zero over `total` steps.
pub fn cosine_lr(base: f64, step: u64, total: u64) -> f64 {
    if total == 0 {
        return base;
    }
    let frac = (step.min(total) as f64) / total as f64;
    0.5 * base * (1.0 + (std::f64::consts::PI * frac).cos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Layer, Matrix};
    use crate::rng::SeededRng;

    fn scalar_params(p: f64) -> MlpParams<f64> {
        let layer = Layer {
            weight: Matrix::from_vec(1, 1, vec![p]).unwrap(),
            bias: vec![0.0],
        };
        MlpParams::from_layers(vec![layer], Activation::Silu).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = MlpParams::<f64>::init(&[2, 3, 1], Activation::Silu, &mut SeededRng::new(0)).unwrap();
        let before = p.clone();
        let mut state = AdamState::new(&p, AdamConfig::default());
        state.update(&mut p, &MlpGrads::zeros_like(&before)).unwrap();
        assert_eq!(p, before);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = scalar_params(0.0);
        let mut g = MlpGrads::zeros_like(&p);
        g.layers[0].weight[(0, 0)] = 1.0;
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        let mut state = AdamState::new(&p, cfg);
        state.update(&mut p, &g).unwrap();
        let w = p.layers()[0].weight[(0, 0)];
        assert!((w + 0.1).abs() < 1e-6, "w = {w}");
    }

    #[test]
    fn moments_mirror_parameter_shapes() {
        let p = MlpParams::<f64>::init(&[3, 5, 2], Activation::Silu, &mut SeededRng::new(0)).unwrap();
        let state = AdamState::new(&p, AdamConfig::default());
        let lens: Vec<usize> = p.slices().iter().map(|s| s.len()).collect();
        let m: Vec<usize> = state.first_moments().iter().map(Vec::len).collect();
        let v: Vec<usize> = state.second_moments().iter().map(Vec::len).collect();
        assert_eq!(lens, m);
        assert_eq!(lens, v);
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let mut rng = SeededRng::new(11);
            let mut p = MlpParams::<f64>::init(&[2, 4, 1], Activation::Silu, &mut rng).unwrap();
            let mut state = AdamState::new(&p, AdamConfig::default());
            let mut traj = Vec::new();
            for _ in 0..20 {
                let mut g = MlpGrads::zeros_like(&p);
                for s in g.slices_mut() {
                    for v in s.iter_mut() {
                        *v = rng.normal();
                    }
                }
                state.update(&mut p, &g).unwrap();
                traj.extend(p.to_flat().iter().map(|v| v.to_bits()));
            }
            traj
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn cosine_schedule_endpoints() {
        assert_eq!(cosine_lr(1e-3, 0, 100), 1e-3);
        assert!(cosine_lr(1e-3, 100, 100).abs() < 1e-18);
        assert!((cosine_lr(1e-3, 50, 100) - 5e-4).abs() < 1e-15);
    }
}
