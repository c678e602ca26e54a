//! Predicted safety filter for maintenance decisions.
//!
//! At every step the agents' joint maintenance request is replaced by the
//! closest (Hamming) assignment that still admits a feasible completion of
//! the lookahead horizon under the concurrency cap, the minimum block
//! length and the coverage requirement.
//!
//! Two readings of the coverage requirement are supported:
//!
//! * [`FilterMode::Intent`]: every unit needs at least `H_i` maintenance
//!   steps in every sliding window of `W` steps (windows start at step 1).
//! * [`FilterMode::Literal`]: the counter recursion
//!   `x(t+1) = (1 - u(t)) x(t) + (1 - u(t))` with `x(E) >= H_i` at the end
//!   `E` of the lookahead.
//!
//! The lookahead runs from the current step `t` to
//! `E = min(t + W - 1, horizon)`. A maintenance block still open at `E` is
//! not required to reach its full length inside the lookahead.
//!
//! Unit masks are `u32` bitsets with unit `i` (0-based) at bit `i`.

mod audit;
mod milp;
mod oracle;
mod search;

pub use audit::{audit_schedule, ScheduleAudit};
pub use milp::{assignment_from_schedule, big_m_expand, default_big_m, linearize_product, MilpModel, Row, Sense, Var, VarKind};
pub use oracle::brute_force_filter_oracle;
pub use search::{feasible_completion, filter_project};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest supported unit count (masks are `u32`, candidates `2^N`).
pub const MAX_UNITS: usize = 16;
/// Longest supported coverage window (history is a `u128`).
pub const MAX_WINDOW: usize = 128;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterMode {
    #[default]
    Intent,
    Literal,
}

impl std::str::FromStr for FilterMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "intent" => Ok(FilterMode::Intent),
            "literal" => Ok(FilterMode::Literal),
            other => Err(format!("unknown filter mode `{other}` (expected intent|literal)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub mode: FilterMode,
    /// Maximum number of units in maintenance at one step.
    pub max_concurrent: usize,
    /// Coverage window length `W`.
    pub window: usize,
    /// Minimum block length `D_i` per unit.
    pub blocks: Vec<usize>,
    /// Required maintenance steps `H_i` per unit.
    pub required: Vec<usize>,
    /// Absolute last step of the planning horizon, if any.
    pub horizon: Option<u64>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("no maintenance assignment admits a feasible completion at step {step}")]
    NoFeasibleCompletion { step: u64 },
    #[error("instance too large for exhaustive search: {0}")]
    InstanceTooLarge(String),
    #[error("bad filter config: {0}")]
    BadConfig(String),
    #[error("big-M constant {big_m} is below the horizon end {horizon}")]
    BadBigM { big_m: f64, horizon: u64 },
    #[error("request has {got} entries, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

impl FilterConfig {
    pub fn n_units(&self) -> usize {
        self.blocks.len()
    }

    pub fn validate(&self, n_units: usize) -> Result<(), FilterError> {
        let bad = |m: String| Err(FilterError::BadConfig(m));
        if self.blocks.len() != n_units || self.required.len() != n_units {
            return bad(format!(
                "need one block length and requirement per unit ({n_units}), got {} and {}",
                self.blocks.len(),
                self.required.len()
            ));
        }
        if n_units > MAX_UNITS {
            return bad(format!("at most {MAX_UNITS} units are supported"));
        }
        if self.max_concurrent < 1 || self.max_concurrent > n_units.max(1) {
            return bad(format!("max_concurrent must be in 1..={n_units}"));
        }
        if self.window < 1 || self.window > MAX_WINDOW {
            return bad(format!("window must be in 1..={MAX_WINDOW}"));
        }
        for i in 0..n_units {
            if self.blocks[i] < 1 || self.blocks[i] > self.window {
                return bad(format!("unit {}: need 1 <= D <= W", i + 1));
            }
            if self.required[i] < 1 || self.required[i] > self.window {
                return bad(format!("unit {}: need 1 <= H <= W", i + 1));
            }
        }
        Ok(())
    }

    /// Last step of the lookahead that starts at `t`.
    pub fn lookahead_end(&self, t: u64) -> u64 {
        let end = t + self.window as u64 - 1;
        match self.horizon {
            Some(h) => end.min(h).max(t),
            None => end,
        }
    }
}

/// Maintenance bookkeeping for one unit.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UnitSafety {
    /// Steps since the last maintenance step; the counter `x_{f,i}`.
    pub since_maint: u64,
    /// Length of the maintenance run ending at the previous step.
    pub run: u64,
    /// Applied decisions, bit `k` is step `t - 1 - k`.
    pub history: u128,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafetyState {
    /// Next step to be decided, starting at 1.
    pub t: u64,
    pub units: Vec<UnitSafety>,
}

impl SafetyState {
    pub fn new(n_units: usize) -> Self {
        SafetyState {
            t: 1,
            units: vec![UnitSafety::default(); n_units],
        }
    }

    /// Steps completed of an open block shorter than `D_i`, else 0.
    pub fn block_progress(&self, unit: usize, cfg: &FilterConfig) -> u64 {
        let run = self.units[unit].run;
        if run > 0 && run < cfg.blocks[unit] as u64 {
            run
        } else {
            0
        }
    }

    /// Maintenance steps among the last `W` applied steps.
    pub fn window_coverage(&self, unit: usize, cfg: &FilterConfig) -> u32 {
        (self.units[unit].history & low_bits(cfg.window as u32)).count_ones()
    }

    /// Units forced to stay in maintenance by an open block.
    pub fn forced_mask(&self, cfg: &FilterConfig) -> u32 {
        (0..self.units.len())
            .filter(|&i| self.block_progress(i, cfg) > 0)
            .fold(0, |m, i| m | 1 << i)
    }

    /// Decision applied at the previous step.
    pub fn last_mask(&self) -> u32 {
        self.units
            .iter()
            .enumerate()
            .fold(0, |m, (i, u)| m | ((u.history & 1) as u32) << i)
    }
}

/// Result of projecting one request.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafeDecision {
    pub u_f: Vec<bool>,
    pub distance: usize,
    /// A feasible schedule for steps `t..=E`, first row equal to `u_f`.
    pub witness: Vec<Vec<bool>>,
}

pub(crate) fn low_bits(n: u32) -> u128 {
    if n >= 128 {
        u128::MAX
    } else {
        (1u128 << n) - 1
    }
}

pub fn to_mask(v: &[bool]) -> u32 {
    v.iter()
        .enumerate()
        .fold(0, |m, (i, &b)| if b { m | 1 << i } else { m })
}

pub fn from_mask(mask: u32, n: usize) -> Vec<bool> {
    (0..n).map(|i| mask >> i & 1 == 1).collect()
}

/// Records the executed decision and moves to the next step.
pub fn advance_state(state: &SafetyState, applied: &[bool], cfg: &FilterConfig) -> SafetyState {
    let units = state
        .units
        .iter()
        .zip(applied)
        .map(|(u, &a)| {
            let on = a as u64;
            let since_maint = match cfg.mode {
                FilterMode::Literal => (1 - on) * u.since_maint + (1 - on),
                FilterMode::Intent => {
                    if a {
                        0
                    } else {
                        u.since_maint + 1
                    }
                }
            };
            UnitSafety {
                since_maint,
                run: if a { u.run + 1 } else { 0 },
                history: u.history << 1 | on as u128,
            }
        })
        .collect();
    SafetyState {
        t: state.t + 1,
        units,
    }
}

#[cfg(test)]
mod tests;
