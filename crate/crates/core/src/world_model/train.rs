//! Optimisation: global-norm clipping, pluggable optimisers, the critic's
//! TD(0) update.

use serde::{Deserialize, Serialize};

use super::loss::{loss_and_grad, LossBreakdown, LossConfig, Noise, Window};
use super::nn::l2_norm;
use super::params::ModelParams;
use super::rssm::{concat, scalar_head, scalar_head_backward, ScalarHead};
use crate::error::{Error, Result};

pub const DEFAULT_LR: f64 = 4e-5;
pub const DESK_LR: f64 = 1e-3;
pub const CLIP_RATIO: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    /// Clip bound as a fraction of the parameter norm.
    pub clip_ratio: f64,
    pub loss: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { lr: DESK_LR, clip_ratio: CLIP_RATIO, loss: LossConfig::default() }
    }
}

/// `ratio * max(|theta|, 1e-3)`.
pub fn clip_bound(theta: &[f64], ratio: f64) -> f64 {
    ratio * l2_norm(theta).max(1e-3)
}

/// Rescales `grad` in place so its norm is at most `bound`; returns the scale used.
pub fn clip_gradient(grad: &mut [f64], bound: f64) -> f64 {
    let norm = l2_norm(grad);
    if norm > bound && norm > 0.0 {
        let s = bound / norm;
        grad.iter_mut().for_each(|g| *g *= s);
        s
    } else {
        1.0
    }
}

pub trait Optimizer: Send {
    fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64);
}

/// Plain gradient descent.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sgd;

impl Optimizer for Sgd {
    fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) {
        for (t, g) in theta.iter_mut().zip(grad) {
            *t -= lr * g;
        }
    }
}

/// RMS-normalised update with momentum applied after normalisation.
#[derive(Clone, Debug)]
pub struct LaProp {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl LaProp {
    pub fn new(n: usize) -> Self {
        LaProp { beta1: 0.9, beta2: 0.999, eps: 1e-20, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

impl Optimizer for LaProp {
    fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        for i in 0..theta.len() {
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let u = grad[i] / ((self.v[i] / bc2).sqrt() + self.eps);
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * u;
            theta[i] -= lr * self.m[i] / bc1;
        }
    }
}

/// One clipped optimisation step on the world-model loss.
pub fn train_step(
    params: &mut ModelParams,
    batch: &[Window],
    cfg: &TrainConfig,
    opt: &mut dyn Optimizer,
    noise: Noise,
) -> Result<LossBreakdown> {
    let (breakdown, mut grad) = loss_and_grad(params, batch, &cfg.loss, noise)?;
    apply_gradient(params, &mut grad, cfg, opt);
    Ok(breakdown)
}

/// Clips `grad` against the current parameter norm and hands it to `opt`.
pub fn apply_gradient(params: &mut ModelParams, grad: &mut [f64], cfg: &TrainConfig, opt: &mut dyn Optimizer) {
    let bound = clip_bound(&params.theta, cfg.clip_ratio);
    clip_gradient(grad, bound);
    opt.step(&mut params.theta, grad, cfg.lr);
}

/// A latent transition for the critic.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticSample {
    pub h: Vec<f64>,
    pub z: Vec<f64>,
    pub reward: f64,
    pub h_next: Vec<f64>,
    pub z_next: Vec<f64>,
    pub done: bool,
}

/// TD(0) errors `r + gamma (1 - done) V(s') - V(s)`.
pub fn td_errors(params: &ModelParams, samples: &[CriticSample], gamma: f64) -> Vec<f64> {
    samples
        .iter()
        .map(|s| {
            let v = scalar_head(params, ScalarHead::Critic, &concat(&[&s.h, &s.z]));
            let v_next = scalar_head(params, ScalarHead::Critic, &concat(&[&s.h_next, &s.z_next]));
            let cont = if s.done { 0.0 } else { 1.0 };
            s.reward + gamma * cont * v_next - v
        })
        .collect()
}

/// One gradient step on the mean squared TD error with targets held fixed.
/// Returns the mean squared error before the step.
pub fn critic_update(params: &mut ModelParams, samples: &[CriticSample], gamma: f64, lr: f64) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let d = params.dims;
    for s in samples {
        if s.h.len() != d.deter || s.h_next.len() != d.deter || s.z.len() != d.stoch || s.z_next.len() != d.stoch {
            return Err(Error::Shape("critic sample has wrong latent dimensions".into()));
        }
    }
    let deltas = td_errors(params, samples, gamma);
    let mse = deltas.iter().map(|d| d * d).sum::<f64>() / samples.len() as f64;
    if !mse.is_finite() {
        return Err(Error::Numeric { term: "critic".into() });
    }
    let mut grad = vec![0.0; params.theta.len()];
    let scale = 1.0 / samples.len() as f64;
    for (s, delta) in samples.iter().zip(&deltas) {
        let latent = concat(&[&s.h, &s.z]);
        scalar_head_backward(params, ScalarHead::Critic, &latent, -2.0 * delta * scale, &mut grad, None);
    }
    let range = params.layout.head_range("critic").expect("critic head");
    for i in range {
        params.theta[i] -= lr * grad[i];
    }
    Ok(mse)
}
