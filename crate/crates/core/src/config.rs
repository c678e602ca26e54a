//! Experiment configuration: strict JSON parsing, defaults and validation.
//!
//! Unknown keys anywhere in the file are rejected. Every omitted key falls
//! back to the default listed on its field; the bundled case-study file
//! (`configs/case_study.json`) spells all of them out.

use crate::ddpg::DdpgHyper;
use crate::market::UnitParams;
use crate::qlearn::QHyper;
use crate::safety::{FilterConfig, FilterMode};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// The bundled case-study configuration.
pub const CASE_STUDY_JSON: &str = include_str!("../../../configs/case_study.json");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnerKind {
    Ddpg,
    Qlearn,
}

/// Sinusoidal demand with bounded noise, clipped into `[low, high]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemandConfig {
    /// MW, default 60.
    pub low: f64,
    /// MW, default 160.
    pub high: f64,
    /// Steps per cycle, default 7.
    pub period: f64,
    /// MW, default 35.
    pub amplitude: f64,
    /// Half-width of the uniform noise in MW, default 15.
    pub noise: f64,
}

impl Default for DemandConfig {
    fn default() -> Self {
        DemandConfig {
            low: 60.0,
            high: 160.0,
            period: 7.0,
            amplitude: 35.0,
            noise: 15.0,
        }
    }
}

/// Safety-filter section of the config file. Per-unit block lengths and
/// requirements come from the unit list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSection {
    /// `intent` (default) or `literal`.
    pub mode: FilterMode,
    /// Maximum simultaneous maintenances, default 2.
    pub max_concurrent: usize,
    /// Coverage window length in steps, default 100.
    pub window: usize,
    /// Optional absolute end of the planning horizon.
    pub horizon: Option<u64>,
}

impl Default for FilterSection {
    fn default() -> Self {
        FilterSection {
            mode: FilterMode::Intent,
            max_concurrent: 2,
            window: 100,
            horizon: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Defaults to the six case-study units.
    pub units: Vec<UnitParams>,
    /// Number of episodes, default 100.
    pub episodes: usize,
    /// Steps (days) per episode, default 30.
    pub steps_per_episode: usize,
    pub demand: DemandConfig,
    pub filter: FilterSection,
    /// Default learner for every agent, default `ddpg`.
    pub learner: LearnerKind,
    /// Optional per-agent override of `learner`.
    pub learners: Option<Vec<LearnerKind>>,
    pub ddpg: DdpgHyper,
    pub qlearn: QHyper,
    /// Ramp constraints in the clearing, default off.
    pub ramps_enabled: bool,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            units: table1_units(),
            episodes: 100,
            steps_per_episode: 30,
            demand: DemandConfig::default(),
            filter: FilterSection::default(),
            learner: LearnerKind::Ddpg,
            learners: None,
            ddpg: DdpgHyper::default(),
            qlearn: QHyper::default(),
            ramps_enabled: false,
            seed: 0,
            output_dir: PathBuf::from("out"),
        }
    }
}

/// The six generation units of the case study.
pub fn table1_units() -> Vec<UnitParams> {
    let rows = [
        (2.0, 80.0, 5.0, 120.0),
        (1.75, 80.0, 5.0, 135.0),
        (1.0, 50.0, 5.0, 142.0),
        (3.25, 55.0, 5.0, 125.0),
        (3.0, 30.0, 5.0, 175.0),
        (3.0, 40.0, 5.0, 165.0),
    ];
    rows.iter()
        .enumerate()
        .map(|(i, &(mc, gmax, gmin, c))| UnitParams {
            id: i + 1,
            marginal_cost: mc,
            g_max: gmax,
            g_min: gmin,
            ramp_up: None,
            ramp_down: None,
            maint_cost: c,
            maint_block: 1,
            maint_required: 1,
            k_max: 2.0,
        })
        .collect()
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn case_study() -> Self {
        Self::from_json(CASE_STUDY_JSON).expect("bundled config is valid")
    }

    pub fn filter_config(&self) -> FilterConfig {
        FilterConfig {
            mode: self.filter.mode,
            max_concurrent: self.filter.max_concurrent,
            window: self.filter.window,
            blocks: self.units.iter().map(|u| u.maint_block).collect(),
            required: self.units.iter().map(|u| u.maint_required).collect(),
            horizon: self.filter.horizon,
        }
    }

    pub fn learner_for(&self, agent: usize) -> LearnerKind {
        self.learners
            .as_ref()
            .and_then(|l| l.get(agent).copied())
            .unwrap_or(self.learner)
    }

    /// Deliverable demand band with the cap's worth of the largest units out.
    pub fn feasible_band(&self) -> (f64, f64) {
        let lo: f64 = self.units.iter().map(|u| u.g_min).sum();
        let mut caps: Vec<f64> = self.units.iter().map(|u| u.g_max).collect();
        caps.sort_by(|a, b| b.total_cmp(a));
        let out: f64 = caps.iter().take(self.filter.max_concurrent).sum();
        (lo, caps.iter().sum::<f64>() - out)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut v = Vec::new();
        if self.units.is_empty() {
            v.push("at least one unit is required".to_string());
        }
        for (i, u) in self.units.iter().enumerate() {
            if u.id != i + 1 {
                v.push(format!("unit ids must be 1..N in order; found {} at position {}", u.id, i + 1));
            }
            v.extend(u.violations());
        }
        if self.episodes < 1 {
            v.push("episodes must be >= 1".into());
        }
        if self.steps_per_episode < 1 {
            v.push("steps_per_episode must be >= 1".into());
        }
        if let Err(e) = self.filter_config().validate(self.units.len()) {
            v.push(e.to_string());
        }
        let d = &self.demand;
        if !(d.low <= d.high) || !(d.period > 0.0) || !(d.amplitude >= 0.0) || !(d.noise >= 0.0) {
            v.push("demand: need low <= high, period > 0, amplitude >= 0, noise >= 0".into());
        } else if !self.units.is_empty() {
            let (lo, hi) = self.feasible_band();
            if d.low < lo || d.high > hi {
                v.push(format!(
                    "demand band [{}, {}] leaves the feasible interval [{lo}, {hi}]",
                    d.low, d.high
                ));
            }
        }
        if let Some(l) = &self.learners {
            if l.len() != self.units.len() {
                v.push(format!("learners has {} entries for {} units", l.len(), self.units.len()));
            }
        }
        v.extend(self.ddpg.violations());
        v.extend(self.qlearn.violations());
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Validation(v))
        }
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ExperimentConfig::from_json(&text)
}
