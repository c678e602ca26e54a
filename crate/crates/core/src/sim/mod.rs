//! Training harness: demand model, environment step, episode loops and
//! CSV artifacts.

mod output;
mod run;

pub use output::{read_raster, write_artifacts, METRICS_FILE, RASTER_FILE, TRACE_FILE};
pub use run::{run_training, run_unsafe_ablation, smoothed, EpisodeMetrics, Learner, RunOutput};

use crate::config::{DemandConfig, ExperimentConfig};
use crate::ddpg::{Action, DdpgError};
use crate::market::{clear_market, MarketError, MarketInstance, UnitParams};
use crate::qlearn::QError;
use crate::safety::{advance_state, filter_project, FilterConfig, FilterError, SafetyState};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("demand band [{low}, {high}] leaves the feasible interval [{min}, {max}]")]
    BadBand { low: f64, high: f64, min: f64, max: f64 },
    #[error("step {step}: {source}")]
    Market { step: u64, source: MarketError },
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Ddpg(#[from] DdpgError),
    #[error(transparent)]
    Q(#[from] QError),
    #[error("expected {expected} actions, got {got}")]
    ActionCount { expected: usize, got: usize },
    #[error("writing artifacts: {0}")]
    Output(String),
}

/// Per-step profit `price * g - marginal_cost * g - maint_cost * u`.
pub fn compute_reward(price: f64, g: f64, unit: &UnitParams, maint: bool) -> f64 {
    price * g - unit.marginal_cost * g - unit.maint_cost * (maint as u8 as f64)
}

/// SplitMix64 finaliser; stateless mixing of seeds and step indices.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent sub-seed for the stream named `tag`.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    mix64(mix64(master) ^ mix64(tag.wrapping_add(0x5EED)))
}

const DEMAND_STREAM: u64 = 1;

/// Sinusoid around the band midpoint plus bounded uniform noise, clipped to
/// the band. Stateless in `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct DemandModel {
    cfg: DemandConfig,
    seed: u64,
}

impl DemandModel {
    pub fn new(cfg: &DemandConfig, feasible: (f64, f64), seed: u64) -> Result<Self, SimError> {
        if !(cfg.low <= cfg.high && cfg.low >= feasible.0 && cfg.high <= feasible.1) {
            return Err(SimError::BadBand {
                low: cfg.low,
                high: cfg.high,
                min: feasible.0,
                max: feasible.1,
            });
        }
        Ok(DemandModel {
            cfg: cfg.clone(),
            seed: derive_seed(seed, DEMAND_STREAM),
        })
    }

    pub fn at(&self, t: u64) -> f64 {
        let c = &self.cfg;
        let mid = 0.5 * (c.low + c.high);
        let phase = 2.0 * std::f64::consts::PI * t as f64 / c.period;
        let unit = (mix64(self.seed ^ mix64(t)) >> 11) as f64 / (1u64 << 53) as f64;
        let noise = c.noise * (2.0 * unit - 1.0);
        (mid + c.amplitude * phase.sin() + noise).clamp(c.low, c.high)
    }
}

pub fn demand_profile(t: u64, cfg: &ExperimentConfig, seed: u64) -> Result<f64, SimError> {
    Ok(DemandModel::new(&cfg.demand, cfg.feasible_band(), seed)?.at(t))
}

/// Whether maintenance requests pass through the safety filter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shield {
    Filtered,
    Bypass,
}

/// Environment shared by all agents.
#[derive(Clone, Debug)]
pub struct World {
    pub units: Vec<UnitParams>,
    pub filter: FilterConfig,
    pub safety: SafetyState,
    pub demand: DemandModel,
    pub ramps_enabled: bool,
    pub prev_gen: Option<Vec<f64>>,
    pub shield: Shield,
    /// Public state `(price, demand)` of the last cleared step.
    pub state: [f64; 2],
    pub episode: usize,
}

impl World {
    /// Clock at step 1; initial state is the cheapest marginal cost and the
    /// band midpoint.
    pub fn new(cfg: &ExperimentConfig, shield: Shield) -> Result<Self, SimError> {
        let demand = DemandModel::new(&cfg.demand, cfg.feasible_band(), cfg.seed)?;
        let price0 = cfg.units.iter().map(|u| u.marginal_cost).fold(f64::INFINITY, f64::min);
        Ok(World {
            units: cfg.units.clone(),
            filter: cfg.filter_config(),
            safety: SafetyState::new(cfg.units.len()),
            demand,
            ramps_enabled: cfg.ramps_enabled,
            prev_gen: None,
            shield,
            state: [price0, 0.5 * (cfg.demand.low + cfg.demand.high)],
            episode: 1,
        })
    }
}

/// Everything logged for one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub episode: usize,
    pub t: u64,
    pub bids: Vec<f64>,
    pub requested: Vec<bool>,
    pub applied: Vec<bool>,
    pub gen: Vec<f64>,
    pub rewards: Vec<f64>,
    pub price: f64,
    pub demand: f64,
    pub distance: usize,
    /// Demand not served because the bypassed schedule left too little
    /// capacity (negative: forced output above demand). Zero when filtered.
    pub unserved: f64,
}

pub struct StepOutcome {
    pub next_state: [f64; 2],
    pub rewards: Vec<f64>,
    pub record: StepRecord,
}

/// One market step: filter the maintenance requests, clear, pay out and
/// advance the maintenance bookkeeping.
pub fn env_step(world: &mut World, actions: &[Action]) -> Result<StepOutcome, SimError> {
    let n = world.units.len();
    if actions.len() != n {
        return Err(SimError::ActionCount {
            expected: n,
            got: actions.len(),
        });
    }
    let t = world.safety.t;
    let demand = world.demand.at(t);
    let requested: Vec<bool> = actions.iter().map(|a| a.maint).collect();
    let (applied, distance) = match world.shield {
        Shield::Filtered => {
            let d = filter_project(&requested, &world.safety, &world.filter)?;
            (d.u_f, d.distance)
        }
        Shield::Bypass => (requested.clone(), 0),
    };
    let mut inst = MarketInstance {
        units: world.units.clone(),
        bids: actions.iter().map(|a| a.bid).collect(),
        maintenance: applied.clone(),
        demand,
        prev_gen: world.prev_gen.clone(),
        ramps_enabled: world.ramps_enabled,
    };
    let mut unserved = 0.0;
    if world.shield == Shield::Bypass {
        let bounds = inst.bounds();
        let lo: f64 = bounds.iter().map(|b| b.0).sum();
        let hi: f64 = bounds.iter().map(|b| b.1).sum();
        if hi >= lo {
            inst.demand = demand.clamp(lo, hi);
            unserved = demand - inst.demand;
        }
    }
    let out = clear_market(&inst).map_err(|source| SimError::Market { step: t, source })?;
    let rewards: Vec<f64> = (0..n)
        .map(|i| compute_reward(out.price, out.gen[i], &world.units[i], applied[i]))
        .collect();
    world.safety = advance_state(&world.safety, &applied, &world.filter);
    world.prev_gen = Some(out.gen.clone());
    world.state = [out.price, demand];
    let record = StepRecord {
        episode: world.episode,
        t,
        bids: inst.bids,
        requested,
        applied,
        gen: out.gen,
        rewards: rewards.clone(),
        price: out.price,
        demand,
        distance,
        unserved,
    };
    Ok(StepOutcome {
        next_state: world.state,
        rewards,
        record,
    })
}

#[cfg(test)]
mod tests;
