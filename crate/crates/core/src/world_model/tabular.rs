//! Hand-built weights that make the sequence model and reward head reproduce
//! a finite deterministic MDP exactly. Used to check imagination and
//! planning against dynamic-programming answers.

use super::params::{ModelDims, ModelParams};
use super::rssm::LatentState;
use crate::error::{Error, Result};

/// Gain of the pair units; large enough that `tanh` saturates to exactly +-1 in `f64`.
const GAIN: f64 = 40.0;
const GATE_BIAS: f64 = 40.0;

/// Deterministic MDP with `next[s * n_actions + a]` and `reward[s * n_actions + a]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub next: Vec<usize>,
    pub reward: Vec<f64>,
}

impl TabularMdp {
    pub fn validate(&self) -> Result<()> {
        let n = self.n_states * self.n_actions;
        if n == 0 || self.next.len() != n || self.reward.len() != n {
            return Err(Error::Validation("tabular MDP tables have the wrong size".into()));
        }
        if self.next.iter().any(|&s| s >= self.n_states) {
            return Err(Error::Validation("transition to an unknown state".into()));
        }
        Ok(())
    }

    fn pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    /// Width of `h`: one unit per (state, action) pair plus one start unit per state.
    pub fn deter(&self) -> usize {
        self.pairs() + self.n_states
    }

    /// Model whose imagined rewards equal the MDP rewards along any action sequence.
    pub fn embed(&self, obs: usize, stoch: usize, hidden: usize) -> Result<ModelParams> {
        self.validate()?;
        let dims = ModelDims { obs, action: self.n_actions, deter: self.deter(), stoch, hidden };
        let mut p = ModelParams::zeros(dims);
        let o = *p.offsets();
        let n_in = dims.deter + dims.stoch + dims.action;
        let na = self.n_actions;
        let pairs = self.pairs();
        for s2 in 0..self.n_states {
            let into: Vec<usize> = (0..pairs).filter(|&p| self.next[p] == s2).collect();
            for a2 in 0..na {
                let row = s2 * na + a2;
                let w = &mut p.theta[o.seq_wc + row * n_in..o.seq_wc + (row + 1) * n_in];
                for &q in &into {
                    w[q] = GAIN / 2.0;
                }
                w[pairs + s2] = GAIN / 2.0;
                w[dims.deter + dims.stoch + a2] = GAIN;
                p.theta[o.seq_bc + row] = GAIN / 2.0 * (into.len() as f64 + 1.0) - 1.5 * GAIN;
            }
        }
        for s in 0..self.n_states {
            p.theta[o.seq_bc + pairs + s] = -GAIN;
        }
        for i in 0..dims.deter {
            p.theta[o.seq_bg + i] = GATE_BIAS;
        }
        for q in 0..pairs {
            p.theta[o.rew_w + q] = 0.5 * self.reward[q];
        }
        p.theta[o.rew_b] = 0.5 * self.reward.iter().sum::<f64>();
        p.theta[o.con_b] = GATE_BIAS;
        p.theta_old = p.theta.clone();
        Ok(p)
    }

    /// Latent state sitting in `s` before any action.
    pub fn start_state(&self, params: &ModelParams, s: usize) -> LatentState {
        let mut h = vec![-1.0; self.deter()];
        h[self.pairs() + s] = 1.0;
        let zeros = vec![0.0; params.dims.stoch];
        let sigma = vec![super::nn::softplus(0.0) + super::nn::SIGMA_MIN; params.dims.stoch];
        LatentState {
            h,
            z: zeros.clone(),
            post_mu: zeros.clone(),
            post_sigma: sigma.clone(),
            prior_mu: zeros,
            prior_sigma: sigma,
        }
    }

    /// State reached by the (state, action) pair active in `h`, if exactly one is active.
    pub fn state_of(&self, h: &[f64]) -> Option<usize> {
        let active: Vec<usize> = (0..h.len()).filter(|&i| h[i] > 0.0).collect();
        match active.as_slice() {
            [i] if *i < self.pairs() => Some(self.next[*i]),
            [i] => Some(*i - self.pairs()),
            _ => None,
        }
    }
}
