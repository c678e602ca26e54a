//! Binary checkpoint of one agent.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic      8 bytes  "SBDDPG\0\0"
//! version    u32      1
//! networks   4 x network, in the order actor, target actor, critic, target critic
//!   layers   u32
//!   per layer: inputs u32, outputs u32,
//!              weights f64 x (outputs * inputs), row-major,
//!              biases  f64 x outputs
//! replay     capacity u64, len u64, pushes u64
//! sigma      f64
//! ```
//!
//! Replay contents are not stored; a restored agent starts with an empty
//! buffer and the saved push counter.

use super::mlp::{Layer, MlpParams};
use super::replay::ReplayBuffer;
use super::{AgentBrain, DdpgError};
use std::io::{Read, Write};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SBDDPG\0\0";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Decoded checkpoint contents.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub actor: MlpParams,
    pub target_actor: MlpParams,
    pub critic: MlpParams,
    pub target_critic: MlpParams,
    pub replay_capacity: u64,
    pub replay_len: u64,
    pub replay_pushes: u64,
    pub sigma: f64,
}

impl Checkpoint {
    /// Copies the saved parameters into `brain`, which must have the same shapes.
    pub fn restore_into(&self, brain: &mut AgentBrain) -> Result<(), DdpgError> {
        let pairs = [
            (&brain.actor, &self.actor),
            (&brain.target_actor, &self.target_actor),
            (&brain.critic, &self.critic),
            (&brain.target_critic, &self.target_critic),
        ];
        if pairs.iter().any(|(a, b)| !a.same_shape(b)) {
            return Err(DdpgError::ShapeMismatch("checkpoint networks differ from the agent".into()));
        }
        brain.actor = self.actor.clone();
        brain.target_actor = self.target_actor.clone();
        brain.critic = self.critic.clone();
        brain.target_critic = self.target_critic.clone();
        brain.replay = ReplayBuffer::new(self.replay_capacity as usize);
        brain.replay.restore_counters(self.replay_pushes);
        brain.sigma = self.sigma;
        Ok(())
    }
}

fn write_net<W: Write>(w: &mut W, p: &MlpParams) -> std::io::Result<()> {
    w.write_all(&(p.layers.len() as u32).to_le_bytes())?;
    for l in &p.layers {
        w.write_all(&(l.inputs as u32).to_le_bytes())?;
        w.write_all(&(l.outputs as u32).to_le_bytes())?;
        for v in l.weights.iter().chain(&l.biases) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn save_checkpoint<W: Write>(brain: &AgentBrain, mut w: W) -> Result<(), DdpgError> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    for net in [&brain.actor, &brain.target_actor, &brain.critic, &brain.target_critic] {
        write_net(&mut w, net)?;
    }
    for v in [
        brain.replay.capacity() as u64,
        brain.replay.len() as u64,
        brain.replay.pushes(),
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&brain.sigma.to_le_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, DdpgError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, DdpgError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, DdpgError> {
    Ok(f64::from_bits(read_u64(r)?))
}

fn read_net<R: Read>(r: &mut R) -> Result<MlpParams, DdpgError> {
    let n = read_u32(r)? as usize;
    if n > 64 {
        return Err(DdpgError::Checkpoint(format!("implausible layer count {n}")));
    }
    let mut layers = Vec::with_capacity(n);
    for _ in 0..n {
        let inputs = read_u32(r)? as usize;
        let outputs = read_u32(r)? as usize;
        if inputs.saturating_mul(outputs) > 1 << 24 {
            return Err(DdpgError::Checkpoint(format!("implausible layer {inputs}x{outputs}")));
        }
        let weights = (0..inputs * outputs).map(|_| read_f64(r)).collect::<Result<_, _>>()?;
        let biases = (0..outputs).map(|_| read_f64(r)).collect::<Result<_, _>>()?;
        layers.push(Layer {
            inputs,
            outputs,
            weights,
            biases,
        });
    }
    if layers.windows(2).any(|w| w[0].outputs != w[1].inputs) {
        return Err(DdpgError::Checkpoint("layer shapes do not chain".into()));
    }
    Ok(MlpParams { layers })
}

pub fn load_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint, DdpgError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(DdpgError::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(DdpgError::Checkpoint(format!("unsupported version {version}")));
    }
    Ok(Checkpoint {
        actor: read_net(&mut r)?,
        target_actor: read_net(&mut r)?,
        critic: read_net(&mut r)?,
        target_critic: read_net(&mut r)?,
        replay_capacity: read_u64(&mut r)?,
        replay_len: read_u64(&mut r)?,
        replay_pushes: read_u64(&mut r)?,
        sigma: read_f64(&mut r)?,
    })
}
