use super::mlp::{soft_update, MlpParams};
use super::replay::{Experience, ReplayBuffer};
use super::{DdpgError, DdpgHyper, InitMode};
use crate::market::UnitParams;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Actor outputs: `[bid head, maintenance logit]`.
const ACTOR_OUT: usize = 2;
/// Critic inputs: `[price, demand, maintenance, bid]`.
const CRITIC_IN: usize = 4;

/// Scales the public state to O(1) network inputs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateNorm {
    pub price_scale: f64,
    pub demand_scale: f64,
}

impl StateNorm {
    /// Price over the highest possible offer, demand over total capacity.
    pub fn for_units(units: &[UnitParams]) -> Self {
        let price = units
            .iter()
            .map(|u| u.k_max * u.marginal_cost)
            .fold(0.0, f64::max);
        let demand: f64 = units.iter().map(|u| u.g_max).sum();
        StateNorm {
            price_scale: if price > 0.0 { price } else { 1.0 },
            demand_scale: if demand > 0.0 { demand } else { 1.0 },
        }
    }

    pub fn apply(&self, s: [f64; 2]) -> [f64; 2] {
        [s[0] / self.price_scale, s[1] / self.demand_scale]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Action {
    pub maint: bool,
    pub bid: f64,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn critic_input(norm: &StateNorm, s: [f64; 2], maint: f64, bid: f64) -> [f64; CRITIC_IN] {
    let n = norm.apply(s);
    [n[0], n[1], maint, bid]
}

/// Networks, targets and replay memory of one agent.
#[derive(Clone, Debug)]
pub struct AgentBrain {
    pub actor: MlpParams,
    pub target_actor: MlpParams,
    pub critic: MlpParams,
    pub target_critic: MlpParams,
    pub replay: ReplayBuffer,
    pub hyper: DdpgHyper,
    pub k_max: f64,
    pub norm: StateNorm,
    /// Current exploration noise scale on the bid head.
    pub sigma: f64,
}

impl AgentBrain {
    /// Fresh networks; targets start as copies of the behaviour networks.
    pub fn new<R: Rng>(hyper: &DdpgHyper, k_max: f64, norm: StateNorm, rng: &mut R) -> Self {
        let (h1, h2) = (hyper.hidden[0], hyper.hidden[1]);
        let init = hyper.init_scheme();
        let mut actor = MlpParams::init(&[2, h1, h2, ACTOR_OUT], init, rng);
        if hyper.init == InitMode::Uniform {
            // start the bid head inside the clip range so exploration noise
            // produces distinct bids
            actor.layers.last_mut().expect("output layer").biases[0] = 0.5 * (1.0 + k_max);
        }
        let critic = MlpParams::init(&[CRITIC_IN, h1, h2, 1], init, rng);
        AgentBrain {
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
            replay: ReplayBuffer::new(hyper.buffer_capacity),
            hyper: hyper.clone(),
            k_max,
            norm,
            sigma: hyper.noise_start,
        }
    }

    /// One replay sample followed by the critic, actor and both target
    /// updates. Does nothing until the buffer holds a full minibatch.
    pub fn learn<R: Rng>(&mut self, rng: &mut R) -> Result<Option<(f64, f64)>, DdpgError> {
        if self.replay.len() < self.hyper.batch_size {
            return Ok(None);
        }
        let batch = self.replay.sample(self.hyper.batch_size, rng)?;
        let critic_loss = critic_update(self, &batch)?;
        let actor_loss = actor_update(self, &batch)?;
        self.target_critic = soft_update(&self.critic, &self.target_critic, self.hyper.critic_tau)?;
        self.target_actor = soft_update(&self.actor, &self.target_actor, self.hyper.actor_tau)?;
        Ok(Some((critic_loss, actor_loss)))
    }
}

/// Bid clipped to `[1, k_max]`; maintenance sampled from the logistic head
/// when exploring, else thresholded at one half.
pub fn select_action<R: Rng>(brain: &AgentBrain, s: [f64; 2], explore: bool, rng: &mut R) -> Action {
    let n = brain.norm.apply(s);
    let out = brain.actor.forward(&n).expect("actor takes two inputs");
    let p = sigmoid(out[1]);
    let (raw, maint) = if explore {
        let z: f64 = StandardNormal.sample(rng);
        (out[0] + brain.sigma * z, rng.random::<f64>() < p)
    } else {
        (out[0], p > 0.5)
    };
    Action {
        maint,
        bid: raw.min(brain.k_max).max(1.0),
    }
}

fn check_batch(batch: &[Experience]) -> Result<(), DdpgError> {
    if batch.is_empty() {
        Err(DdpgError::InsufficientSamples { needed: 1, have: 0 })
    } else {
        Ok(())
    }
}

/// Mean squared error against bootstrapped targets from the target
/// networks, followed by one gradient step on the critic. Returns the loss
/// before the step.
pub fn critic_update(brain: &mut AgentBrain, batch: &[Experience]) -> Result<f64, DdpgError> {
    check_batch(batch)?;
    let b = batch.len();
    let h = &brain.hyper;
    let next: Vec<f64> = batch.iter().flat_map(|e| brain.norm.apply(e.next_state)).collect();
    let next_act = brain.target_actor.forward_batch(&next, b)?;
    let mut target_in = Vec::with_capacity(b * CRITIC_IN);
    for (i, e) in batch.iter().enumerate() {
        let o = &next_act.output()[i * ACTOR_OUT..(i + 1) * ACTOR_OUT];
        let k = o[0].min(brain.k_max).max(1.0);
        target_in.extend(critic_input(&brain.norm, e.next_state, sigmoid(o[1]), k));
    }
    let q_next = brain.target_critic.forward_batch(&target_in, b)?;

    let input: Vec<f64> = batch
        .iter()
        .flat_map(|e| critic_input(&brain.norm, e.state, e.maint as u8 as f64, e.bid))
        .collect();
    let tape = brain.critic.forward_batch(&input, b)?;
    let mut loss = 0.0;
    let mut upstream = Vec::with_capacity(b);
    for (i, e) in batch.iter().enumerate() {
        let y = h.reward_scale * e.reward + h.gamma * q_next.output()[i];
        let diff = tape.output()[i] - y;
        loss += diff * diff;
        upstream.push(2.0 * diff / b as f64);
    }
    let grads = brain.critic.backward(&tape, &upstream)?;
    brain.critic.descend(&grads.params, h.critic_lr);
    Ok(loss / b as f64)
}

/// Gradient of the actor loss `-mean(Q)` with respect to the actor.
///
/// `critic` maps a batch of `(bid, maintenance probability)` pairs to the
/// critic values and their gradients with respect to both coordinates. The
/// bid head enters unclipped. Returns the loss and the gradients.
pub fn policy_gradient<F>(
    actor: &MlpParams,
    states: &[f64],
    batch: usize,
    mut critic: F,
) -> Result<(f64, MlpParams), DdpgError>
where
    F: FnMut(&[f64]) -> Result<(Vec<f64>, Vec<f64>), DdpgError>,
{
    if batch == 0 {
        return Err(DdpgError::InsufficientSamples { needed: 1, have: 0 });
    }
    let tape = actor.forward_batch(states, batch)?;
    let mut acts = Vec::with_capacity(batch * 2);
    for o in tape.output().chunks(ACTOR_OUT) {
        acts.push(o[0]);
        acts.push(sigmoid(o[1]));
    }
    let (q, dq) = critic(&acts)?;
    if q.len() != batch || dq.len() != batch * 2 {
        return Err(DdpgError::ShapeMismatch("critic callback output".into()));
    }
    let scale = -1.0 / batch as f64;
    let mut upstream = Vec::with_capacity(batch * ACTOR_OUT);
    for i in 0..batch {
        let p = acts[2 * i + 1];
        upstream.push(scale * dq[2 * i]);
        upstream.push(scale * dq[2 * i + 1] * p * (1.0 - p));
    }
    let grads = actor.backward(&tape, &upstream)?;
    Ok((-q.iter().sum::<f64>() / batch as f64, grads.params))
}

/// One descent step along [`policy_gradient`]. Returns the loss before the step.
pub fn policy_gradient_step<F>(
    actor: &mut MlpParams,
    states: &[f64],
    batch: usize,
    lr: f64,
    critic: F,
) -> Result<f64, DdpgError>
where
    F: FnMut(&[f64]) -> Result<(Vec<f64>, Vec<f64>), DdpgError>,
{
    let (loss, grads) = policy_gradient(actor, states, batch, critic)?;
    actor.descend(&grads, lr);
    Ok(loss)
}

/// Critic values and action gradients at `(state, bid, probability)` rows.
pub fn critic_action_gradients(
    critic: &MlpParams,
    states: &[f64],
    acts: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), DdpgError> {
    let b = acts.len() / 2;
    let mut input = Vec::with_capacity(b * CRITIC_IN);
    for i in 0..b {
        input.extend([states[2 * i], states[2 * i + 1], acts[2 * i + 1], acts[2 * i]]);
    }
    let tape = critic.forward_batch(&input, b)?;
    let grads = critic.backward(&tape, &vec![1.0; b])?;
    let dq = grads.input.chunks(CRITIC_IN).flat_map(|g| [g[3], g[2]]).collect();
    Ok((tape.output().to_vec(), dq))
}

/// Actor step through the behaviour critic. Returns the loss before the step.
pub fn actor_update(brain: &mut AgentBrain, batch: &[Experience]) -> Result<f64, DdpgError> {
    check_batch(batch)?;
    let states: Vec<f64> = batch.iter().flat_map(|e| brain.norm.apply(e.state)).collect();
    let critic = &brain.critic;
    policy_gradient_step(&mut brain.actor, &states, batch.len(), brain.hyper.actor_lr, |acts| {
        critic_action_gradients(critic, &states, acts)
    })
}
