//! Per-agent DDPG learner: actor and critic networks with target copies,
//! a replay buffer and the critic, actor and soft-update steps.

mod agent;
mod checkpoint;
mod mlp;
mod replay;

pub use agent::{
    actor_update, critic_action_gradients, critic_input, critic_update, policy_gradient, policy_gradient_step, select_action, sigmoid, Action, AgentBrain,
    StateNorm,
};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use mlp::{mlp_gradients, soft_update, Gradients, Init, Layer, MlpParams, Tape};
pub use replay::{Experience, ReplayBuffer};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DdpgError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("need at least {needed} samples, have {have}")]
    InsufficientSamples { needed: usize, have: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Weight initialisation selected in the config.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    /// Uniform in `[-init_range, init_range]`.
    #[default]
    Uniform,
    /// Uniform in `[1, 3]` for every parameter.
    Positive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DdpgHyper {
    /// Discount, default 0.95.
    pub gamma: f64,
    /// Critic step size, default 1e-3.
    pub critic_lr: f64,
    /// Actor step size, default 1e-3.
    pub actor_lr: f64,
    /// Weight kept on the old target critic per soft update, default 0.99.
    pub critic_tau: f64,
    /// Weight kept on the old target actor per soft update, default 0.99.
    pub actor_tau: f64,
    /// Replay capacity, default 10000.
    pub buffer_capacity: usize,
    /// Minibatch size, default 100.
    pub batch_size: usize,
    /// Two hidden widths, default [64, 64].
    pub hidden: Vec<usize>,
    /// Exploration noise on the bid head, decaying linearly; default 0.3 to 0.02.
    pub noise_start: f64,
    pub noise_end: f64,
    pub init: InitMode,
    /// Half-width of the default uniform init, default 0.1.
    pub init_range: f64,
    /// Rewards are multiplied by this before entering the critic, default 0.1.
    pub reward_scale: f64,
}

impl Default for DdpgHyper {
    fn default() -> Self {
        DdpgHyper {
            gamma: 0.95,
            critic_lr: 1e-3,
            actor_lr: 1e-3,
            critic_tau: 0.99,
            actor_tau: 0.99,
            buffer_capacity: 10_000,
            batch_size: 100,
            hidden: vec![64, 64],
            noise_start: 0.3,
            noise_end: 0.02,
            init: InitMode::Uniform,
            init_range: 0.1,
            reward_scale: 0.1,
        }
    }
}

impl DdpgHyper {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(0.0..1.0).contains(&self.gamma) {
            v.push("ddpg.gamma must be in [0, 1)".into());
        }
        for (name, tau) in [("critic_tau", self.critic_tau), ("actor_tau", self.actor_tau)] {
            if !(0.0..=1.0).contains(&tau) {
                v.push(format!("ddpg.{name} must be in [0, 1]"));
            }
        }
        if !(self.critic_lr > 0.0 && self.actor_lr > 0.0) {
            v.push("ddpg learning rates must be positive".into());
        }
        if self.batch_size < 1 || self.buffer_capacity < self.batch_size {
            v.push("ddpg: need 1 <= batch_size <= buffer_capacity".into());
        }
        if self.hidden.len() != 2 || self.hidden.contains(&0) {
            v.push("ddpg.hidden must list two positive widths".into());
        }
        if !(self.noise_start >= 0.0 && self.noise_end >= 0.0) {
            v.push("ddpg noise scales must be non-negative".into());
        }
        if !(self.init_range > 0.0) {
            v.push("ddpg.init_range must be positive".into());
        }
        if !(self.reward_scale > 0.0) {
            v.push("ddpg.reward_scale must be positive".into());
        }
        v
    }

    pub fn init_scheme(&self) -> Init {
        match self.init {
            InitMode::Uniform => Init::Uniform { range: self.init_range },
            InitMode::Positive => Init::UniformBetween { low: 1.0, high: 3.0 },
        }
    }

    /// Noise scale at training progress `p` in `[0, 1]`.
    pub fn noise_at(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        self.noise_start + (self.noise_end - self.noise_start) * p
    }
}

#[cfg(test)]
mod tests;
