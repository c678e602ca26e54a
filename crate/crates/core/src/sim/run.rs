use super::{derive_seed, env_step, Shield, SimError, StepRecord, World};
use crate::config::{ExperimentConfig, LearnerKind};
use crate::ddpg::{select_action, Action, AgentBrain, Experience, StateNorm};
use crate::qlearn::{epsilon_greedy_action, q_update, QAgent, StateGrid};
use crate::safety::{audit_schedule, ScheduleAudit};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const AGENT_STREAM: u64 = 100;

/// One agent's learner with its private random stream.
#[derive(Clone, Debug)]
pub enum Learner {
    Ddpg { brain: Box<AgentBrain>, rng: ChaCha8Rng },
    Q { agent: QAgent, rng: ChaCha8Rng },
}

impl Learner {
    pub fn build(cfg: &ExperimentConfig, i: usize) -> Result<Self, SimError> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, AGENT_STREAM + i as u64));
        Ok(match cfg.learner_for(i) {
            LearnerKind::Ddpg => {
                let norm = StateNorm::for_units(&cfg.units);
                let brain = AgentBrain::new(&cfg.ddpg, cfg.units[i].k_max, norm, &mut rng);
                Learner::Ddpg {
                    brain: Box::new(brain),
                    rng,
                }
            }
            LearnerKind::Qlearn => {
                let grid = StateGrid::for_case(&cfg.units, (cfg.demand.low, cfg.demand.high), &cfg.qlearn)?;
                Learner::Q {
                    agent: QAgent::new(&cfg.qlearn, grid),
                    rng,
                }
            }
        })
    }

    /// Exploring action at training progress `progress` in `[0, 1]`.
    pub fn act(&mut self, state: [f64; 2], progress: f64, cfg: &ExperimentConfig) -> Action {
        match self {
            Learner::Ddpg { brain, rng } => {
                brain.sigma = cfg.ddpg.noise_at(progress);
                select_action(brain, state, true, rng)
            }
            Learner::Q { agent, rng } => {
                agent.epsilon = cfg.qlearn.epsilon_at(progress);
                let a = epsilon_greedy_action(&agent.table, agent.state(state), agent.epsilon, rng);
                let (maint, bid) = agent.decode(a);
                Action { maint, bid }
            }
        }
    }

    /// Learns from the executed transition.
    pub fn learn(&mut self, e: Experience) -> Result<(), SimError> {
        match self {
            Learner::Ddpg { brain, rng } => {
                brain.replay.push(e);
                brain.learn(rng)?;
            }
            Learner::Q { agent, .. } => {
                let (s, s2) = (agent.state(e.state), agent.state(e.next_state));
                let a = agent.encode(e.maint, e.bid);
                q_update(&mut agent.table, s, a, e.reward, s2)?;
            }
        }
        Ok(())
    }
}

/// Per-episode summary.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeMetrics {
    pub episode: usize,
    /// Sum over agents of the per-agent average reward.
    pub sum_avg_reward: f64,
    pub avg_reward: Vec<f64>,
    pub mean_bid: Vec<f64>,
    /// Maintenance cost paid by all units over the episode.
    pub maint_cost: f64,
}

pub struct RunOutput {
    pub episodes: Vec<EpisodeMetrics>,
    pub records: Vec<StepRecord>,
    /// Audit of the executed maintenance schedule.
    pub audit: ScheduleAudit,
    /// Steps whose demand had to be trimmed to the available capacity.
    pub shortfall_steps: usize,
    pub learners: Vec<Learner>,
}

impl RunOutput {
    /// Executed maintenance, one row per step.
    pub fn raster(&self) -> Vec<Vec<bool>> {
        self.records.iter().map(|r| r.applied.clone()).collect()
    }

    pub fn sum_avg_rewards(&self) -> Vec<f64> {
        self.episodes.iter().map(|m| m.sum_avg_reward).collect()
    }
}

/// Trailing moving average over `window` points.
pub fn smoothed(xs: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    (0..xs.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            xs[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}

fn summarize(episode: usize, steps: &[StepRecord], cfg: &ExperimentConfig) -> EpisodeMetrics {
    let n = cfg.units.len();
    let len = steps.len() as f64;
    let avg_reward: Vec<f64> = (0..n)
        .map(|i| steps.iter().map(|r| r.rewards[i]).sum::<f64>() / len)
        .collect();
    let mean_bid = (0..n).map(|i| steps.iter().map(|r| r.bids[i]).sum::<f64>() / len).collect();
    let maint_cost = steps
        .iter()
        .map(|r| {
            (0..n)
                .filter(|&i| r.applied[i])
                .map(|i| cfg.units[i].maint_cost)
                .sum::<f64>()
        })
        .sum();
    EpisodeMetrics {
        episode,
        sum_avg_reward: avg_reward.iter().sum(),
        avg_reward,
        mean_bid,
        maint_cost,
    }
}

fn run(cfg: &ExperimentConfig, shield: Shield) -> Result<RunOutput, SimError> {
    let mut world = World::new(cfg, shield)?;
    let n = cfg.units.len();
    let mut learners = (0..n).map(|i| Learner::build(cfg, i)).collect::<Result<Vec<_>, _>>()?;
    let total = cfg.episodes * cfg.steps_per_episode;
    let span = total.saturating_sub(1).max(1) as f64;
    let mut records = Vec::with_capacity(total);
    let mut episodes = Vec::with_capacity(cfg.episodes);
    let mut step = 0usize;
    for ep in 1..=cfg.episodes {
        world.episode = ep;
        let mut state = world.state;
        for _ in 0..cfg.steps_per_episode {
            let progress = step as f64 / span;
            let actions: Vec<Action> = learners.iter_mut().map(|l| l.act(state, progress, cfg)).collect();
            let out = env_step(&mut world, &actions)?;
            for (i, l) in learners.iter_mut().enumerate() {
                l.learn(Experience {
                    state,
                    next_state: out.next_state,
                    maint: out.record.applied[i],
                    bid: out.record.bids[i],
                    reward: out.rewards[i],
                })?;
            }
            state = out.next_state;
            records.push(out.record);
            step += 1;
        }
        let start = records.len() - cfg.steps_per_episode;
        episodes.push(summarize(ep, &records[start..], cfg));
    }
    let trace: Vec<Vec<bool>> = records.iter().map(|r| r.applied.clone()).collect();
    Ok(RunOutput {
        audit: audit_schedule(&trace, &world.filter),
        shortfall_steps: records.iter().filter(|r| r.unserved != 0.0).count(),
        episodes,
        records,
        learners,
    })
}

/// Full training loop with the safety filter in place.
pub fn run_training(cfg: &ExperimentConfig) -> Result<RunOutput, SimError> {
    run(cfg, Shield::Filtered)
}

/// The same loop with maintenance requests executed unfiltered.
pub fn run_unsafe_ablation(cfg: &ExperimentConfig) -> Result<RunOutput, SimError> {
    run(cfg, Shield::Bypass)
}
