use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Sizes of the recurrent state-space model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub obs: usize,
    pub action: usize,
    /// Deterministic recurrent state `h`.
    pub deter: usize,
    /// Stochastic latent `z`.
    pub stoch: usize,
    /// Width of the hidden layer in the two-layer perceptrons.
    pub hidden: usize,
}

impl ModelDims {
    pub fn latent(&self) -> usize {
        self.deter + self.stoch
    }
}

/// Head names in parameter order.
pub const HEADS: [&str; 7] = [
    "encoder", "sequence", "dynamics", "decoder", "reward", "continue", "critic",
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: &'static str,
    pub head: &'static str,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Offsets of every tensor inside the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Offsets {
    pub enc_w1: usize,
    pub enc_b1: usize,
    pub enc_w2: usize,
    pub enc_b2: usize,
    pub seq_wc: usize,
    pub seq_bc: usize,
    pub seq_wg: usize,
    pub seq_bg: usize,
    pub dyn_w1: usize,
    pub dyn_b1: usize,
    pub dyn_w2: usize,
    pub dyn_b2: usize,
    pub dec_w1: usize,
    pub dec_b1: usize,
    pub dec_w2: usize,
    pub dec_b2: usize,
    pub rew_w: usize,
    pub rew_b: usize,
    pub con_w: usize,
    pub con_b: usize,
    pub cri_w: usize,
    pub cri_b: usize,
    pub total: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub tensors: Vec<TensorSpec>,
    pub offsets: Offsets,
}

impl Layout {
    pub fn new(d: &ModelDims) -> Self {
        let seq_in = d.deter + d.stoch + d.action;
        let shapes: [(&'static str, &'static str, usize, usize); 22] = [
            ("enc.w1", "encoder", d.hidden, d.deter + d.obs),
            ("enc.b1", "encoder", d.hidden, 1),
            ("enc.w2", "encoder", 2 * d.stoch, d.hidden),
            ("enc.b2", "encoder", 2 * d.stoch, 1),
            ("seq.wc", "sequence", d.deter, seq_in),
            ("seq.bc", "sequence", d.deter, 1),
            ("seq.wg", "sequence", d.deter, seq_in),
            ("seq.bg", "sequence", d.deter, 1),
            ("dyn.w1", "dynamics", d.hidden, d.deter),
            ("dyn.b1", "dynamics", d.hidden, 1),
            ("dyn.w2", "dynamics", 2 * d.stoch, d.hidden),
            ("dyn.b2", "dynamics", 2 * d.stoch, 1),
            ("dec.w1", "decoder", d.hidden, d.latent()),
            ("dec.b1", "decoder", d.hidden, 1),
            ("dec.w2", "decoder", d.obs, d.hidden),
            ("dec.b2", "decoder", d.obs, 1),
            ("rew.w", "reward", 1, d.latent()),
            ("rew.b", "reward", 1, 1),
            ("con.w", "continue", 1, d.latent()),
            ("con.b", "continue", 1, 1),
            ("cri.w", "critic", 1, d.latent()),
            ("cri.b", "critic", 1, 1),
        ];
        let mut offset = 0;
        let tensors: Vec<TensorSpec> = shapes
            .iter()
            .map(|&(name, head, rows, cols)| {
                let t = TensorSpec { name, head, offset, rows, cols };
                offset += rows * cols;
                t
            })
            .collect();
        let o = |i: usize| tensors[i].offset;
        let offsets = Offsets {
            enc_w1: o(0),
            enc_b1: o(1),
            enc_w2: o(2),
            enc_b2: o(3),
            seq_wc: o(4),
            seq_bc: o(5),
            seq_wg: o(6),
            seq_bg: o(7),
            dyn_w1: o(8),
            dyn_b1: o(9),
            dyn_w2: o(10),
            dyn_b2: o(11),
            dec_w1: o(12),
            dec_b1: o(13),
            dec_w2: o(14),
            dec_b2: o(15),
            rew_w: o(16),
            rew_b: o(17),
            con_w: o(18),
            con_b: o(19),
            cri_w: o(20),
            cri_b: o(21),
            total: offset,
        };
        Layout { tensors, offsets }
    }

    pub fn len(&self) -> usize {
        self.offsets.total
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn tensor(&self, name: &str) -> Option<&TensorSpec> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Head name to `(offset, length)`; heads are contiguous and in [`HEADS`] order.
    pub fn heads(&self) -> BTreeMap<String, (usize, usize)> {
        let mut map: BTreeMap<String, (usize, usize)> = BTreeMap::new();
        for t in &self.tensors {
            map.entry(t.head.to_string())
                .and_modify(|(_, len)| *len += t.len())
                .or_insert((t.offset, t.len()));
        }
        map
    }

    pub fn head_range(&self, head: &str) -> Option<std::ops::Range<usize>> {
        self.heads().get(head).map(|&(o, l)| o..o + l)
    }
}

/// Flat parameters of all heads, with the Fisher diagonal and the archived anchor.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub layout: Layout,
    pub theta: Vec<f64>,
    pub fisher: Vec<f64>,
    pub theta_old: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(dims: ModelDims) -> Self {
        let layout = Layout::new(&dims);
        let n = layout.len();
        ModelParams {
            dims,
            layout,
            theta: vec![0.0; n],
            fisher: vec![0.0; n],
            theta_old: vec![0.0; n],
        }
    }

    /// Glorot-uniform weights, zero biases; `theta_old` starts equal to `theta`.
    pub fn init(dims: ModelDims, seed: u64) -> Self {
        let mut p = Self::zeros(dims);
        let mut rng = rng::stream(seed, &[rng::label::INIT]);
        for t in p.layout.tensors.clone() {
            if t.cols == 1 {
                continue;
            }
            let a = (6.0 / (t.rows + t.cols) as f64).sqrt();
            for v in &mut p.theta[t.range()] {
                *v = rng.random_range(-a..a);
            }
        }
        p.theta_old = p.theta.clone();
        p
    }

    pub fn offsets(&self) -> &Offsets {
        &self.layout.offsets
    }

    pub fn check(&self) -> Result<()> {
        let n = self.layout.len();
        if self.theta.len() != n || self.fisher.len() != n || self.theta_old.len() != n {
            return Err(Error::Shape(format!(
                "parameter vectors have lengths {}/{}/{} but layout needs {n}",
                self.theta.len(),
                self.fisher.len(),
                self.theta_old.len()
            )));
        }
        if self.fisher.iter().any(|f| *f < 0.0 || !f.is_finite()) {
            return Err(Error::Validation("Fisher diagonal must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Archives the current parameters as the regularisation anchor.
    pub fn archive(&mut self) {
        self.theta_old.clone_from(&self.theta);
    }
}
