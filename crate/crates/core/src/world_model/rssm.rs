//! Forward pass of the six world-model heads plus the critic, one step at a
//! time. Each forward function returns a cache that the loss module walks
//! backwards.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use super::nn::{affine, affine_backward, affine_rows, logistic, softplus, SIGMA_MIN};
use super::params::ModelParams;
use crate::error::{Error, Result};

/// Recurrent state `h`, stochastic latent `z`, and the Gaussians behind `z`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentState {
    pub h: Vec<f64>,
    pub z: Vec<f64>,
    pub post_mu: Vec<f64>,
    pub post_sigma: Vec<f64>,
    pub prior_mu: Vec<f64>,
    pub prior_sigma: Vec<f64>,
}

impl LatentState {
    /// Concatenation `[h, z]` fed to the decoder and scalar heads.
    pub fn features(&self) -> Vec<f64> {
        concat(&[&self.h, &self.z])
    }

    /// Filter start: zero recurrent state, posterior from the first observation.
    pub fn initial(params: &ModelParams, obs: &[f64], rng: Option<&mut dyn RngCore>) -> Result<Self> {
        let h = vec![0.0; params.dims.deter];
        let post = encode(params, &h, obs, rng)?;
        let prior = gaussian_head(params, Head::Dynamics, &h);
        Ok(LatentState {
            h,
            z: post.z,
            post_mu: post.mu,
            post_sigma: post.sigma,
            prior_mu: prior.mu,
            prior_sigma: prior.sigma,
        })
    }

    /// Filter update after taking `action` and observing `next_obs`.
    pub fn advance(
        &self,
        params: &ModelParams,
        action: usize,
        next_obs: &[f64],
        rng: Option<&mut dyn RngCore>,
    ) -> Result<Self> {
        check_len("observation", next_obs.len(), params.dims.obs)?;
        let h = sequence_cache(params, &self.h, &self.z, action).h;
        let prior = gaussian_head(params, Head::Dynamics, &h);
        let post = encode(params, &h, next_obs, rng)?;
        Ok(LatentState {
            h,
            z: post.z,
            post_mu: post.mu,
            post_sigma: post.sigma,
            prior_mu: prior.mu,
            prior_sigma: prior.sigma,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianSample {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub z: Vec<f64>,
}

pub(crate) fn concat(parts: &[&[f64]]) -> Vec<f64> {
    let mut v = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
    for p in parts {
        v.extend_from_slice(p);
    }
    v
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Shape(format!("{what} has length {got}, expected {want}")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Head {
    Encoder,
    Dynamics,
}

/// Cache of a two-layer Gaussian perceptron (`tanh` hidden layer, mean and
/// softplus-floored scale outputs).
#[derive(Clone, Debug)]
pub(crate) struct GaussianCache {
    pub x: Vec<f64>,
    pub a1: Vec<f64>,
    pub raw_sigma: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

fn gaussian_offsets(params: &ModelParams, head: Head) -> (usize, usize, usize, usize) {
    let o = params.offsets();
    match head {
        Head::Encoder => (o.enc_w1, o.enc_b1, o.enc_w2, o.enc_b2),
        Head::Dynamics => (o.dyn_w1, o.dyn_b1, o.dyn_w2, o.dyn_b2),
    }
}

pub(crate) fn gaussian_head(params: &ModelParams, head: Head, x: &[f64]) -> GaussianCache {
    let d = &params.dims;
    let th = &params.theta;
    let (w1, b1, w2, b2) = gaussian_offsets(params, head);
    let mut a1 = vec![0.0; d.hidden];
    affine(&th[w1..w1 + d.hidden * x.len()], &th[b1..b1 + d.hidden], x, &mut a1);
    a1.iter_mut().for_each(|v| *v = v.tanh());
    let mut out = vec![0.0; 2 * d.stoch];
    affine(&th[w2..w2 + 2 * d.stoch * d.hidden], &th[b2..b2 + 2 * d.stoch], &a1, &mut out);
    let raw_sigma = out.split_off(d.stoch);
    let sigma = raw_sigma.iter().map(|&r| softplus(r) + SIGMA_MIN).collect();
    GaussianCache { x: x.to_vec(), a1, raw_sigma, mu: out, sigma }
}

/// Backward through a Gaussian head. Returns the gradient w.r.t. its input.
pub(crate) fn gaussian_head_backward(
    params: &ModelParams,
    head: Head,
    cache: &GaussianCache,
    d_mu: &[f64],
    d_sigma: &[f64],
    grad: &mut [f64],
) -> Vec<f64> {
    let d = &params.dims;
    let th = &params.theta;
    let (w1, b1, w2, b2) = gaussian_offsets(params, head);
    let mut d_out = Vec::with_capacity(2 * d.stoch);
    d_out.extend_from_slice(d_mu);
    d_out.extend(d_sigma.iter().zip(&cache.raw_sigma).map(|(g, r)| g * logistic(*r)));
    let mut d_a1 = vec![0.0; d.hidden];
    {
        let (lo, hi) = grad.split_at_mut(b2);
        affine_backward(
            &th[w2..w2 + 2 * d.stoch * d.hidden],
            &cache.a1,
            &d_out,
            &mut lo[w2..w2 + 2 * d.stoch * d.hidden],
            &mut hi[..2 * d.stoch],
            Some(&mut d_a1),
        );
    }
    for (g, a) in d_a1.iter_mut().zip(&cache.a1) {
        *g *= 1.0 - a * a;
    }
    let n_in = cache.x.len();
    let mut dx = vec![0.0; n_in];
    let (lo, hi) = grad.split_at_mut(b1);
    affine_backward(
        &th[w1..w1 + d.hidden * n_in],
        &cache.x,
        &d_a1,
        &mut lo[w1..w1 + d.hidden * n_in],
        &mut hi[..d.hidden],
        Some(&mut dx),
    );
    dx
}

fn sample(cache: &GaussianCache, rng: Option<&mut dyn RngCore>) -> (Vec<f64>, Vec<f64>) {
    match rng {
        Some(rng) => {
            let eps: Vec<f64> = (0..cache.mu.len()).map(|_| rng.sample(StandardNormal)).collect();
            let z = cache.mu.iter().zip(&cache.sigma).zip(&eps).map(|((m, s), e)| m + s * e).collect();
            (z, eps)
        }
        None => (cache.mu.clone(), vec![0.0; cache.mu.len()]),
    }
}

/// Posterior `q(z | h, o)`. Without an RNG the mean is returned as the sample.
pub fn encode(params: &ModelParams, h: &[f64], obs: &[f64], rng: Option<&mut dyn RngCore>) -> Result<GaussianSample> {
    check_len("h", h.len(), params.dims.deter)?;
    check_len("observation", obs.len(), params.dims.obs)?;
    let cache = gaussian_head(params, Head::Encoder, &concat(&[h, obs]));
    let (z, _) = sample(&cache, rng);
    Ok(GaussianSample { mu: cache.mu, sigma: cache.sigma, z })
}

/// Prior `p(z | h)`.
pub fn prior(params: &ModelParams, h: &[f64], rng: Option<&mut dyn RngCore>) -> Result<GaussianSample> {
    check_len("h", h.len(), params.dims.deter)?;
    let cache = gaussian_head(params, Head::Dynamics, h);
    let (z, _) = sample(&cache, rng);
    Ok(GaussianSample { mu: cache.mu, sigma: cache.sigma, z })
}

pub(crate) fn sample_with_eps(cache: &GaussianCache, eps: &[f64]) -> Vec<f64> {
    cache.mu.iter().zip(&cache.sigma).zip(eps).map(|((m, s), e)| m + s * e).collect()
}

#[derive(Clone, Debug)]
pub(crate) struct SequenceCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c: Vec<f64>,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

pub(crate) fn sequence_cache(params: &ModelParams, h: &[f64], z: &[f64], action: usize) -> SequenceCache {
    let d = &params.dims;
    let mut a = vec![0.0; d.action];
    a[action] = 1.0;
    sequence_cache_vec(params, h, z, &a)
}

pub(crate) fn sequence_cache_vec(params: &ModelParams, h: &[f64], z: &[f64], a: &[f64]) -> SequenceCache {
    let d = &params.dims;
    let o = params.offsets();
    let th = &params.theta;
    let x = concat(&[h, z, a]);
    let n_in = x.len();
    let mut c = vec![0.0; d.deter];
    let mut g = vec![0.0; d.deter];
    affine(&th[o.seq_wc..o.seq_wc + d.deter * n_in], &th[o.seq_bc..o.seq_bc + d.deter], &x, &mut c);
    affine(&th[o.seq_wg..o.seq_wg + d.deter * n_in], &th[o.seq_bg..o.seq_bg + d.deter], &x, &mut g);
    c.iter_mut().for_each(|v| *v = v.tanh());
    g.iter_mut().for_each(|v| *v = logistic(*v));
    let h_new = (0..d.deter).map(|i| (1.0 - g[i]) * h[i] + g[i] * c[i]).collect();
    SequenceCache { x, h_prev: h.to_vec(), c, g, h: h_new }
}

/// Returns `(dh_prev, dz_prev)`.
pub(crate) fn sequence_backward(
    params: &ModelParams,
    cache: &SequenceCache,
    dh: &[f64],
    grad: &mut [f64],
) -> (Vec<f64>, Vec<f64>) {
    let d = &params.dims;
    let o = params.offsets();
    let th = &params.theta;
    let n_in = cache.x.len();
    let mut dh_prev: Vec<f64> = (0..d.deter).map(|i| dh[i] * (1.0 - cache.g[i])).collect();
    let d_pre_c: Vec<f64> = (0..d.deter)
        .map(|i| dh[i] * cache.g[i] * (1.0 - cache.c[i] * cache.c[i]))
        .collect();
    let d_pre_g: Vec<f64> = (0..d.deter)
        .map(|i| dh[i] * (cache.c[i] - cache.h_prev[i]) * cache.g[i] * (1.0 - cache.g[i]))
        .collect();
    let mut dx = vec![0.0; n_in];
    {
        let (lo, hi) = grad.split_at_mut(o.seq_bc);
        affine_backward(
            &th[o.seq_wc..o.seq_wc + d.deter * n_in],
            &cache.x,
            &d_pre_c,
            &mut lo[o.seq_wc..o.seq_wc + d.deter * n_in],
            &mut hi[..d.deter],
            Some(&mut dx),
        );
    }
    {
        let (lo, hi) = grad.split_at_mut(o.seq_bg);
        affine_backward(
            &th[o.seq_wg..o.seq_wg + d.deter * n_in],
            &cache.x,
            &d_pre_g,
            &mut lo[o.seq_wg..o.seq_wg + d.deter * n_in],
            &mut hi[..d.deter],
            Some(&mut dx),
        );
    }
    for (a, b) in dh_prev.iter_mut().zip(&dx[..d.deter]) {
        *a += b;
    }
    let dz = dx[d.deter..d.deter + d.stoch].to_vec();
    (dh_prev, dz)
}

/// Gated recurrent update `h' = (1-g) h + g tanh(W[h,z,a] + b)`.
pub fn sequence_step(params: &ModelParams, h: &[f64], z: &[f64], a: &[f64]) -> Result<Vec<f64>> {
    let d = &params.dims;
    check_len("h", h.len(), d.deter)?;
    check_len("z", z.len(), d.stoch)?;
    check_len("action", a.len(), d.action)?;
    Ok(sequence_cache_vec(params, h, z, a).h)
}

#[derive(Clone, Debug)]
pub(crate) struct DecoderCache {
    pub x: Vec<f64>,
    pub a1: Vec<f64>,
    pub out: Vec<f64>,
}

pub(crate) fn decoder_cache(params: &ModelParams, x: &[f64]) -> DecoderCache {
    let d = &params.dims;
    let o = params.offsets();
    let th = &params.theta;
    let mut a1 = vec![0.0; d.hidden];
    affine(&th[o.dec_w1..o.dec_w1 + d.hidden * x.len()], &th[o.dec_b1..o.dec_b1 + d.hidden], x, &mut a1);
    a1.iter_mut().for_each(|v| *v = v.tanh());
    let mut out = vec![0.0; d.obs];
    affine(&th[o.dec_w2..o.dec_w2 + d.obs * d.hidden], &th[o.dec_b2..o.dec_b2 + d.obs], &a1, &mut out);
    out.iter_mut().for_each(|v| *v = logistic(*v));
    DecoderCache { x: x.to_vec(), a1, out }
}

/// Backward from `d_out` (gradient w.r.t. the squashed output) to the latent features.
pub(crate) fn decoder_backward(params: &ModelParams, cache: &DecoderCache, d_out: &[f64], grad: &mut [f64]) -> Vec<f64> {
    let d = &params.dims;
    let o = params.offsets();
    let th = &params.theta;
    let d_pre: Vec<f64> = d_out.iter().zip(&cache.out).map(|(g, y)| g * y * (1.0 - y)).collect();
    let mut d_a1 = vec![0.0; d.hidden];
    {
        let (lo, hi) = grad.split_at_mut(o.dec_b2);
        affine_backward(
            &th[o.dec_w2..o.dec_w2 + d.obs * d.hidden],
            &cache.a1,
            &d_pre,
            &mut lo[o.dec_w2..o.dec_w2 + d.obs * d.hidden],
            &mut hi[..d.obs],
            Some(&mut d_a1),
        );
    }
    for (g, a) in d_a1.iter_mut().zip(&cache.a1) {
        *g *= 1.0 - a * a;
    }
    let n_in = cache.x.len();
    let mut dx = vec![0.0; n_in];
    let (lo, hi) = grad.split_at_mut(o.dec_b1);
    affine_backward(
        &th[o.dec_w1..o.dec_w1 + d.hidden * n_in],
        &cache.x,
        &d_a1,
        &mut lo[o.dec_w1..o.dec_w1 + d.hidden * n_in],
        &mut hi[..d.hidden],
        Some(&mut dx),
    );
    dx
}

/// Reconstructed observation mean in [0, 1].
pub fn decode(params: &ModelParams, h: &[f64], z: &[f64]) -> Result<Vec<f64>> {
    check_len("h", h.len(), params.dims.deter)?;
    check_len("z", z.len(), params.dims.stoch)?;
    Ok(decoder_cache(params, &concat(&[h, z])).out)
}

/// Only the decoder outputs in `range`; used by the controller to read the
/// predicted inventory without reconstructing the whole patch.
pub fn decode_range(params: &ModelParams, latent: &[f64], range: std::ops::Range<usize>) -> Vec<f64> {
    let d = &params.dims;
    let o = params.offsets();
    let th = &params.theta;
    let mut a1 = vec![0.0; d.hidden];
    affine(&th[o.dec_w1..o.dec_w1 + d.hidden * latent.len()], &th[o.dec_b1..o.dec_b1 + d.hidden], latent, &mut a1);
    a1.iter_mut().for_each(|v| *v = v.tanh());
    let mut out = vec![0.0; range.len()];
    affine_rows(&th[o.dec_w2..o.dec_w2 + d.obs * d.hidden], &th[o.dec_b2..o.dec_b2 + d.obs], &a1, range, &mut out);
    out.iter_mut().for_each(|v| *v = logistic(*v));
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalarHead {
    Reward,
    Continue,
    Critic,
}

pub(crate) fn scalar_offsets(params: &ModelParams, head: ScalarHead) -> (usize, usize) {
    let o = params.offsets();
    match head {
        ScalarHead::Reward => (o.rew_w, o.rew_b),
        ScalarHead::Continue => (o.con_w, o.con_b),
        ScalarHead::Critic => (o.cri_w, o.cri_b),
    }
}

/// Pre-activation of a linear head on `[h, z]`.
pub(crate) fn scalar_head(params: &ModelParams, head: ScalarHead, latent: &[f64]) -> f64 {
    let (w, b) = scalar_offsets(params, head);
    let th = &params.theta;
    th[b] + super::nn::dot(&th[w..w + latent.len()], latent)
}

/// Accumulates parameter gradients for `d_pre` and the latent gradient into `d_latent`.
pub(crate) fn scalar_head_backward(
    params: &ModelParams,
    head: ScalarHead,
    latent: &[f64],
    d_pre: f64,
    grad: &mut [f64],
    d_latent: Option<&mut [f64]>,
) {
    let (w, b) = scalar_offsets(params, head);
    let n = latent.len();
    for (g, x) in grad[w..w + n].iter_mut().zip(latent) {
        *g += d_pre * x;
    }
    grad[b] += d_pre;
    if let Some(dl) = d_latent {
        for (g, wi) in dl.iter_mut().zip(&params.theta[w..w + n]) {
            *g += d_pre * wi;
        }
    }
}

fn latent_of(params: &ModelParams, h: &[f64], z: &[f64]) -> Result<Vec<f64>> {
    check_len("h", h.len(), params.dims.deter)?;
    check_len("z", z.len(), params.dims.stoch)?;
    Ok(concat(&[h, z]))
}

pub fn predict_reward(params: &ModelParams, h: &[f64], z: &[f64]) -> Result<f64> {
    Ok(scalar_head(params, ScalarHead::Reward, &latent_of(params, h, z)?))
}

/// Continuation probability.
pub fn predict_continue(params: &ModelParams, h: &[f64], z: &[f64]) -> Result<f64> {
    Ok(logistic(scalar_head(params, ScalarHead::Continue, &latent_of(params, h, z)?)))
}

pub fn critic_value(params: &ModelParams, h: &[f64], z: &[f64]) -> Result<f64> {
    Ok(scalar_head(params, ScalarHead::Critic, &latent_of(params, h, z)?))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImaginedStep {
    pub h: Vec<f64>,
    pub z: Vec<f64>,
    pub reward: f64,
    pub cont: f64,
}

/// Open-loop rollout through the sequence model and the prior. Without an
/// RNG the prior mean stands in for each sample.
pub fn imagine(
    params: &ModelParams,
    start: &LatentState,
    actions: &[usize],
    mut rng: Option<&mut dyn RngCore>,
) -> Result<Vec<ImaginedStep>> {
    if actions.is_empty() {
        return Err(Error::Validation("imagination horizon must be at least 1".into()));
    }
    check_len("h", start.h.len(), params.dims.deter)?;
    check_len("z", start.z.len(), params.dims.stoch)?;
    let mut h = start.h.clone();
    let mut z = start.z.clone();
    let mut out = Vec::with_capacity(actions.len());
    for &a in actions {
        if a >= params.dims.action {
            return Err(Error::Shape(format!("action {a} outside 0..{}", params.dims.action)));
        }
        h = sequence_cache(params, &h, &z, a).h;
        let p = gaussian_head(params, Head::Dynamics, &h);
        z = match rng {
            Some(ref mut r) => sample(&p, Some(&mut **r)).0,
            None => p.mu.clone(),
        };
        let latent = concat(&[&h, &z]);
        out.push(ImaginedStep {
            reward: scalar_head(params, ScalarHead::Reward, &latent),
            cont: logistic(scalar_head(params, ScalarHead::Continue, &latent)),
            h: h.clone(),
            z: z.clone(),
        });
    }
    Ok(out)
}
