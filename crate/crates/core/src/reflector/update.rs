use serde::{Deserialize, Serialize};

use super::ReflectorConfig;
use crate::error::{Error, Result};
use crate::world_model::{
    clip_bound, clip_gradient, loss_and_grad, LossBreakdown, LossConfig, ModelParams, Noise, Transition, Window, CLIP_RATIO,
};

/// Diagonal Fisher estimate: mean squared prediction-loss gradient per transition.
pub fn fisher_diag(params: &ModelParams, transitions: &[Transition]) -> Result<Vec<f64>> {
    let mut f = vec![0.0; params.theta.len()];
    if transitions.is_empty() {
        return Ok(f);
    }
    let cfg = LossConfig::prediction_only();
    for tr in transitions {
        let (_, g) = loss_and_grad(params, &[Window::new(vec![tr.clone()])], &cfg, Noise::Mean)?;
        for (fi, gi) in f.iter_mut().zip(&g) {
            *fi += gi * gi;
        }
    }
    let n = transitions.len() as f64;
    f.iter_mut().for_each(|x| *x /= n);
    Ok(f)
}

/// `mu * sum_i F_i (theta_i - theta_old_i)^2`.
pub fn ewc_penalty(params: &ModelParams, mu: f64) -> f64 {
    let s: f64 = params
        .fisher
        .iter()
        .zip(params.theta.iter().zip(&params.theta_old))
        .map(|(f, (t, o))| f * (t - o) * (t - o))
        .sum();
    mu * s
}

pub fn ewc_gradient(params: &ModelParams, mu: f64) -> Vec<f64> {
    params
        .fisher
        .iter()
        .zip(params.theta.iter().zip(&params.theta_old))
        .map(|(f, (t, o))| 2.0 * mu * f * (t - o))
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReflectLoss {
    /// Weighted mean of the per-transition prediction terms.
    pub prediction: LossBreakdown,
    /// Fisher penalty before the step.
    pub penalty: f64,
    /// Norm of the applied parameter change.
    pub step_norm: f64,
}

/// One step on the weighted prediction loss plus the Fisher penalty.
///
/// The prediction part is a clipped gradient step. The penalty part is taken
/// as its exact proximal map, which stays stable for any `lr * mu * F`.
/// Returns `None` (and leaves `params` untouched) when `selected` is empty.
pub fn reflect_update(
    params: &mut ModelParams,
    selected: &[(Transition, f64)],
    cfg: &ReflectorConfig,
) -> Result<Option<ReflectLoss>> {
    if selected.is_empty() {
        log::warn!("reflection selected no experiences; skipping update");
        return Ok(None);
    }
    let lcfg = LossConfig::prediction_only();
    let n = selected.len() as f64;
    let mut grad = vec![0.0; params.theta.len()];
    let mut pred = LossBreakdown::default();
    for (tr, w) in selected {
        if !(*w > 0.0 && *w <= 1.0) {
            return Err(Error::Validation(format!("experience weight {w} outside (0, 1]")));
        }
        let (l, g) = loss_and_grad(params, &[Window::new(vec![tr.clone()])], &lcfg, Noise::Mean)?;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += w * b / n;
        }
        pred.recon += w * l.recon / n;
        pred.reward_nll += w * l.reward_nll / n;
        pred.continue_nll += w * l.continue_nll / n;
        pred.total += w * l.total / n;
    }
    let penalty = ewc_penalty(params, cfg.mu);
    clip_gradient(&mut grad, clip_bound(&params.theta, CLIP_RATIO));
    let before = params.theta.clone();
    for (t, g) in params.theta.iter_mut().zip(&grad) {
        *t -= cfg.lr * g;
    }
    anchor_step(params, cfg.lr, cfg.mu);
    let sq: f64 = params.theta.iter().zip(&before).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(Some(ReflectLoss { prediction: pred, penalty, step_norm: sq.sqrt() }))
}

/// Proximal map of `lr * mu * sum_i F_i (theta_i - theta_old_i)^2` applied to
/// the current parameters: `theta <- (theta + k theta_old) / (1 + k)` with
/// `k = 2 lr mu F_i`. A no-op when `mu` is zero.
pub fn anchor_step(params: &mut ModelParams, lr: f64, mu: f64) {
    if mu == 0.0 {
        return;
    }
    for i in 0..params.theta.len() {
        let k = 2.0 * lr * mu * params.fisher[i];
        params.theta[i] = (params.theta[i] + k * params.theta_old[i]) / (1.0 + k);
    }
}
