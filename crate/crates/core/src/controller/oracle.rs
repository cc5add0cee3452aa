//! Tabular MDPs and value iteration, used as a reference for the controller.

use crate::error::{Error, Result};

/// Finite MDP with stochastic transitions `p[s * n_actions + a][s']`.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularMDP {
    pub n_states: usize,
    pub n_actions: usize,
    pub p: Vec<Vec<f64>>,
    pub r: Vec<f64>,
    pub gamma: f64,
}

impl TabularMDP {
    pub fn validate(&self) -> Result<()> {
        let n = self.n_states * self.n_actions;
        if n == 0 || self.p.len() != n || self.r.len() != n {
            return Err(Error::Validation("MDP tables have the wrong size".into()));
        }
        for (i, row) in self.p.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.len() != self.n_states || row.iter().any(|&x| x < 0.0) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Validation(format!("transition row {i} is not a distribution")));
            }
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Validation(format!("gamma {} must lie in [0, 1)", self.gamma)));
        }
        Ok(())
    }

    pub fn q(&self, v: &[f64], s: usize, a: usize) -> f64 {
        let i = s * self.n_actions + a;
        self.r[i] + self.gamma * self.p[i].iter().zip(v).map(|(p, v)| p * v).sum::<f64>()
    }
}

/// Bellman iteration until the max-norm change is below `tol`. Returns the
/// values and the greedy policy (lowest action index on ties).
pub fn value_iteration(mdp: &TabularMDP, tol: f64) -> Result<(Vec<f64>, Vec<usize>)> {
    mdp.validate()?;
    let mut v = vec![0.0; mdp.n_states];
    loop {
        let next: Vec<f64> = (0..mdp.n_states)
            .map(|s| (0..mdp.n_actions).map(|a| mdp.q(&v, s, a)).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if delta < tol {
            break;
        }
    }
    let policy = (0..mdp.n_states)
        .map(|s| {
            let mut best = 0;
            for a in 1..mdp.n_actions {
                if mdp.q(&v, s, a) > mdp.q(&v, s, best) {
                    best = a;
                }
            }
            best
        })
        .collect();
    Ok((v, policy))
}
