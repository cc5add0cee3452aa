//! Recurrent state-space world model: posterior encoder, gated sequence
//! model, dynamics prior, decoder, reward/continue heads and a critic.

pub mod loss;
pub mod nn;
pub mod params;
pub mod rssm;
pub mod snapshot;
pub mod tabular;
pub mod train;

pub use loss::{grad, loss, loss_and_grad, LossBreakdown, LossConfig, Noise, Transition, Window};
pub use tabular::TabularMdp;
pub use params::{Layout, ModelDims, ModelParams, TensorSpec, HEADS};
pub use rssm::{
    critic_value, decode, decode_range, encode, imagine, predict_continue, predict_reward, prior,
    sequence_step, GaussianSample, ImaginedStep, LatentState,
};
pub use train::{
    apply_gradient, clip_bound, clip_gradient, critic_update, td_errors, train_step, CriticSample, LaProp,
    Optimizer, Sgd, TrainConfig, CLIP_RATIO, DEFAULT_LR, DESK_LR,
};
