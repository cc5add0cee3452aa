//! Sequence loss of the world model and its reverse-mode gradient.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::nn::{gaussian_kl, gaussian_kl_backward, logistic, softplus};
use super::params::ModelParams;
use super::rssm::{
    concat, decoder_backward, decoder_cache, gaussian_head, gaussian_head_backward, sample_with_eps,
    scalar_head, scalar_head_backward, sequence_backward, sequence_cache, DecoderCache, GaussianCache,
    Head, ScalarHead, SequenceCache,
};
use crate::error::{Error, Result};
use crate::rng;

/// Loss scales and the free-nats floor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub beta_pred: f64,
    pub beta_dyn: f64,
    pub beta_rep: f64,
    /// Per-step KL values below this are clipped up to it (and carry no gradient).
    pub free_nats: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { beta_pred: 1.0, beta_dyn: 1.0, beta_rep: 0.1, free_nats: 1.0 }
    }
}

impl LossConfig {
    /// Only the prediction terms (reconstruction, reward, continue).
    pub fn prediction_only() -> Self {
        LossConfig { beta_pred: 1.0, beta_dyn: 0.0, beta_rep: 0.0, free_nats: 0.0 }
    }
}

/// Per-term means over every predicted step in a batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub recon: f64,
    pub reward_nll: f64,
    pub continue_nll: f64,
    pub kl_dyn: f64,
    pub kl_rep: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn prediction(&self) -> f64 {
        self.recon + self.reward_nll + self.continue_nll
    }

    fn check(&self) -> Result<()> {
        for (term, v) in [
            ("recon", self.recon),
            ("reward_nll", self.reward_nll),
            ("continue_nll", self.continue_nll),
            ("kl_dyn", self.kl_dyn),
            ("kl_rep", self.kl_rep),
            ("total", self.total),
        ] {
            if !v.is_finite() {
                return Err(Error::Numeric { term: term.to_string() });
            }
        }
        Ok(())
    }
}

/// One environment transition as feature vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
    pub episode: u64,
    pub t: u64,
}

/// A contiguous run of transitions. With a `context`, the unroll starts from
/// that `(h, z)` instead of encoding the first observation from a zero state.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub context: Option<(Vec<f64>, Vec<f64>)>,
    pub steps: Vec<Transition>,
}

impl Window {
    pub fn new(steps: Vec<Transition>) -> Self {
        Window { context: None, steps }
    }

    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        let d = &params.dims;
        if self.steps.is_empty() {
            return Err(Error::Batch("empty window".into()));
        }
        for w in self.steps.windows(2) {
            if w[0].episode != w[1].episode {
                return Err(Error::Batch(format!(
                    "window crosses episodes {} and {}",
                    w[0].episode, w[1].episode
                )));
            }
            if w[1].t != w[0].t + 1 {
                return Err(Error::Batch(format!("window is not contiguous at t={}", w[0].t)));
            }
        }
        for s in &self.steps {
            if s.obs.len() != d.obs || s.next_obs.len() != d.obs {
                return Err(Error::Shape(format!("observation length differs from {}", d.obs)));
            }
            if s.action >= d.action {
                return Err(Error::Shape(format!("action {} outside 0..{}", s.action, d.action)));
            }
        }
        if let Some((h, z)) = &self.context {
            if h.len() != d.deter || z.len() != d.stoch {
                return Err(Error::Shape("context has wrong dimensions".into()));
            }
        }
        Ok(())
    }
}

/// Source of the reparameterisation noise.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Noise {
    /// Standard normal draws from a stream derived from the seed and window index.
    Seeded(u64),
    /// `z` equals the posterior mean.
    Mean,
}

#[derive(Clone, Copy, Debug, Default)]
struct Sums {
    recon: f64,
    reward: f64,
    cont: f64,
    kl: f64,
    steps: usize,
}

struct StepCache {
    seq: SequenceCache,
    prior: GaussianCache,
    post: GaussianCache,
    eps: Vec<f64>,
    latent: Vec<f64>,
    dec: DecoderCache,
    reward_pre: f64,
    cont_pre: f64,
    kl: f64,
}

fn draw_eps(noise: Noise, window: usize, n_steps: usize, stoch: usize) -> Vec<Vec<f64>> {
    match noise {
        Noise::Mean => vec![vec![0.0; stoch]; n_steps + 1],
        Noise::Seeded(seed) => {
            let mut r = rng::stream(seed, &[rng::label::POSTERIOR, window as u64]);
            (0..=n_steps)
                .map(|_| (0..stoch).map(|_| r.sample(StandardNormal)).collect())
                .collect()
        }
    }
}

/// Forward and (optionally) backward pass over one window.
fn window_pass(
    params: &ModelParams,
    window: &Window,
    cfg: &LossConfig,
    eps: &[Vec<f64>],
    scale: f64,
    grad: Option<&mut [f64]>,
) -> Sums {
    let d = &params.dims;
    let first = &window.steps[0];
    let (h0, z0, post0) = match &window.context {
        Some((h, z)) => (h.clone(), z.clone(), None),
        None => {
            let h = vec![0.0; d.deter];
            let post = gaussian_head(params, Head::Encoder, &concat(&[&h, &first.obs]));
            let z = sample_with_eps(&post, &eps[0]);
            (h, z, Some(post))
        }
    };
    let mut sums = Sums::default();
    let mut caches: Vec<StepCache> = Vec::with_capacity(window.steps.len());
    let (mut h, mut z) = (h0, z0);
    for (i, tr) in window.steps.iter().enumerate() {
        let seq = sequence_cache(params, &h, &z, tr.action);
        let prior = gaussian_head(params, Head::Dynamics, &seq.h);
        let post = gaussian_head(params, Head::Encoder, &concat(&[&seq.h, &tr.next_obs]));
        let e = eps[i + 1].clone();
        let z_new = sample_with_eps(&post, &e);
        let latent = concat(&[&seq.h, &z_new]);
        let dec = decoder_cache(params, &latent);
        let reward_pre = scalar_head(params, ScalarHead::Reward, &latent);
        let cont_pre = scalar_head(params, ScalarHead::Continue, &latent);
        let c = if tr.done { 0.0 } else { 1.0 };
        sums.recon += dec.out.iter().zip(&tr.next_obs).map(|(y, o)| (y - o) * (y - o)).sum::<f64>();
        sums.reward += (reward_pre - tr.reward).powi(2);
        sums.cont += softplus(cont_pre) - c * cont_pre;
        let kl = gaussian_kl(&post.mu, &post.sigma, &prior.mu, &prior.sigma);
        sums.kl += kl.max(cfg.free_nats);
        sums.steps += 1;
        h = seq.h.clone();
        z = z_new;
        caches.push(StepCache { seq, prior, post, eps: e, latent, dec, reward_pre, cont_pre, kl });
    }
    let Some(grad) = grad else { return sums };

    let deter = d.deter;
    let stoch = d.stoch;
    let mut dh_next = vec![0.0; deter];
    let mut dz_next = vec![0.0; stoch];
    for (i, c) in caches.iter().enumerate().rev() {
        let tr = &window.steps[i];
        let mut dh = std::mem::take(&mut dh_next);
        let mut dz = std::mem::take(&mut dz_next);
        let bp = cfg.beta_pred * scale;
        if bp != 0.0 {
            let d_out: Vec<f64> = c.dec.out.iter().zip(&tr.next_obs).map(|(y, o)| 2.0 * bp * (y - o)).collect();
            let mut d_lat = decoder_backward(params, &c.dec, &d_out, grad);
            let d_rew = 2.0 * bp * (c.reward_pre - tr.reward);
            scalar_head_backward(params, ScalarHead::Reward, &c.latent, d_rew, grad, Some(&mut d_lat));
            let label = if tr.done { 0.0 } else { 1.0 };
            let d_con = bp * (logistic(c.cont_pre) - label);
            scalar_head_backward(params, ScalarHead::Continue, &c.latent, d_con, grad, Some(&mut d_lat));
            for k in 0..deter {
                dh[k] += d_lat[k];
            }
            for k in 0..stoch {
                dz[k] += d_lat[deter + k];
            }
        }
        let mut d_mu_q = dz.clone();
        let mut d_sigma_q: Vec<f64> = dz.iter().zip(&c.eps).map(|(g, e)| g * e).collect();
        let mut d_mu_p = vec![0.0; stoch];
        let mut d_sigma_p = vec![0.0; stoch];
        if c.kl > cfg.free_nats {
            let (q, p) = (&c.post, &c.prior);
            if cfg.beta_rep != 0.0 {
                gaussian_kl_backward(
                    &q.mu, &q.sigma, &p.mu, &p.sigma, cfg.beta_rep * scale,
                    Some(&mut d_mu_q), Some(&mut d_sigma_q), None, None,
                );
            }
            if cfg.beta_dyn != 0.0 {
                gaussian_kl_backward(
                    &q.mu, &q.sigma, &p.mu, &p.sigma, cfg.beta_dyn * scale,
                    None, None, Some(&mut d_mu_p), Some(&mut d_sigma_p),
                );
            }
        }
        let dx_post = gaussian_head_backward(params, Head::Encoder, &c.post, &d_mu_q, &d_sigma_q, grad);
        for k in 0..deter {
            dh[k] += dx_post[k];
        }
        if d_mu_p.iter().chain(&d_sigma_p).any(|v| *v != 0.0) {
            let dx_prior = gaussian_head_backward(params, Head::Dynamics, &c.prior, &d_mu_p, &d_sigma_p, grad);
            for k in 0..deter {
                dh[k] += dx_prior[k];
            }
        }
        let (dh_prev, dz_prev) = sequence_backward(params, &c.seq, &dh, grad);
        dh_next = dh_prev;
        dz_next = dz_prev;
    }
    if let Some(post0) = post0 {
        let d_sigma: Vec<f64> = dz_next.iter().zip(&eps[0]).map(|(g, e)| g * e).collect();
        gaussian_head_backward(params, Head::Encoder, &post0, &dz_next, &d_sigma, grad);
    }
    sums
}

fn breakdown(total: Sums, cfg: &LossConfig) -> LossBreakdown {
    let n = total.steps.max(1) as f64;
    let recon = total.recon / n;
    let reward_nll = total.reward / n;
    let continue_nll = total.cont / n;
    let kl = total.kl / n;
    LossBreakdown {
        recon,
        reward_nll,
        continue_nll,
        kl_dyn: kl,
        kl_rep: kl,
        total: cfg.beta_pred * (recon + reward_nll + continue_nll) + (cfg.beta_dyn + cfg.beta_rep) * kl,
    }
}

fn add(a: Sums, b: Sums) -> Sums {
    Sums {
        recon: a.recon + b.recon,
        reward: a.reward + b.reward,
        cont: a.cont + b.cont,
        kl: a.kl + b.kl,
        steps: a.steps + b.steps,
    }
}

fn validate_batch(params: &ModelParams, batch: &[Window]) -> Result<usize> {
    if batch.is_empty() {
        return Err(Error::Batch("empty batch".into()));
    }
    for w in batch {
        w.validate(params)?;
    }
    Ok(batch.iter().map(|w| w.steps.len()).sum())
}

/// Loss of a batch without gradients.
pub fn loss(params: &ModelParams, batch: &[Window], cfg: &LossConfig, noise: Noise) -> Result<LossBreakdown> {
    validate_batch(params, batch)?;
    let stoch = params.dims.stoch;
    let sums: Vec<Sums> = batch
        .par_iter()
        .enumerate()
        .map(|(i, w)| window_pass(params, w, cfg, &draw_eps(noise, i, w.steps.len(), stoch), 0.0, None))
        .collect();
    let b = breakdown(sums.into_iter().fold(Sums::default(), add), cfg);
    b.check()?;
    Ok(b)
}

/// Loss and its gradient with respect to `theta`.
pub fn loss_and_grad(
    params: &ModelParams,
    batch: &[Window],
    cfg: &LossConfig,
    noise: Noise,
) -> Result<(LossBreakdown, Vec<f64>)> {
    let n_steps = validate_batch(params, batch)?;
    let scale = 1.0 / n_steps as f64;
    let stoch = params.dims.stoch;
    let n = params.theta.len();
    let parts: Vec<(Sums, Vec<f64>)> = batch
        .par_iter()
        .enumerate()
        .map(|(i, w)| {
            let mut g = vec![0.0; n];
            let eps = draw_eps(noise, i, w.steps.len(), stoch);
            let s = window_pass(params, w, cfg, &eps, scale, Some(&mut g));
            (s, g)
        })
        .collect();
    let mut grad = vec![0.0; n];
    let mut sums = Sums::default();
    for (s, g) in parts {
        sums = add(sums, s);
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    let b = breakdown(sums, cfg);
    b.check()?;
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        let head = params
            .layout
            .tensors
            .iter()
            .find(|t| t.range().contains(&i))
            .map_or("theta", |t| t.name);
        return Err(Error::Numeric { term: format!("gradient of {head}") });
    }
    Ok((b, grad))
}

pub fn grad(params: &ModelParams, batch: &[Window], cfg: &LossConfig, noise: Noise) -> Result<Vec<f64>> {
    loss_and_grad(params, batch, cfg, noise).map(|(_, g)| g)
}
