//! Tabular Q-learning baseline over a discretised `(price, demand)` grid.
//!
//! Actions `0..L` are the bid levels without a maintenance request and
//! `L..2L` the same levels with one.

use crate::market::UnitParams;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QError {
    #[error("bad binning: {0}")]
    BadBinning(String),
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("table file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QHyper {
    /// Price bins over the normalised price range, default 10.
    pub price_bins: usize,
    /// Demand bins over the normalised demand band, default 10.
    pub demand_bins: usize,
    /// Default [1.0, 1.25, 1.5, 1.75, 2.0].
    pub bid_levels: Vec<f64>,
    /// Default 0.1.
    pub alpha: f64,
    /// Default 0.95.
    pub gamma: f64,
    /// Exploration rate, decaying linearly; default 0.3 to 0.02.
    pub epsilon_start: f64,
    pub epsilon_end: f64,
}

impl Default for QHyper {
    fn default() -> Self {
        QHyper {
            price_bins: 10,
            demand_bins: 10,
            bid_levels: vec![1.0, 1.25, 1.5, 1.75, 2.0],
            alpha: 0.1,
            gamma: 0.95,
            epsilon_start: 0.3,
            epsilon_end: 0.02,
        }
    }
}

impl QHyper {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.price_bins < 2 || self.demand_bins < 2 {
            v.push("qlearn: need at least 2 bins per axis".into());
        }
        if self.bid_levels.is_empty() || self.bid_levels.iter().any(|k| !(*k >= 1.0)) {
            v.push("qlearn.bid_levels must be non-empty and >= 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            v.push("qlearn.alpha must be in (0, 1]".into());
        }
        if !(0.0..1.0).contains(&self.gamma) {
            v.push("qlearn.gamma must be in [0, 1)".into());
        }
        for e in [self.epsilon_start, self.epsilon_end] {
            if !(0.0..=1.0).contains(&e) {
                v.push("qlearn epsilons must be in [0, 1]".into());
            }
        }
        v
    }

    pub fn epsilon_at(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * p
    }
}

/// Interior bin edges; `edges.len() + 1` bins.
#[derive(Clone, Debug, PartialEq)]
pub struct Binning {
    edges: Vec<f64>,
}

impl Binning {
    pub fn new(edges: Vec<f64>) -> Result<Self, QError> {
        if edges.is_empty() {
            return Err(QError::BadBinning("need at least one interior edge".into()));
        }
        if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(QError::BadBinning(format!("edges must be finite and strictly increasing: {edges:?}")));
        }
        Ok(Binning { edges })
    }

    /// `bins` equal bins over `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, bins: usize) -> Result<Self, QError> {
        if bins < 2 || !(lo < hi) {
            return Err(QError::BadBinning(format!("{bins} bins over [{lo}, {hi}]")));
        }
        Self::new((1..bins).map(|j| lo + (hi - lo) * j as f64 / bins as f64).collect())
    }

    pub fn bins(&self) -> usize {
        self.edges.len() + 1
    }

    /// Values on an edge go to the upper bin; out-of-range values clamp.
    pub fn index(&self, x: f64) -> usize {
        self.edges.partition_point(|&e| e <= x)
    }
}

/// Binnings for both state coordinates, in normalised units.
#[derive(Clone, Debug, PartialEq)]
pub struct StateGrid {
    pub price: Binning,
    pub demand: Binning,
    pub price_scale: f64,
    pub demand_scale: f64,
}

impl StateGrid {
    /// Price over `[0, 1]` of the highest possible offer; demand over the
    /// configured band as a fraction of total capacity.
    pub fn for_case(units: &[UnitParams], demand_band: (f64, f64), hyper: &QHyper) -> Result<Self, QError> {
        let price_scale = units.iter().map(|u| u.k_max * u.marginal_cost).fold(0.0, f64::max);
        let demand_scale: f64 = units.iter().map(|u| u.g_max).sum();
        let (lo, hi) = (demand_band.0 / demand_scale, demand_band.1 / demand_scale);
        let demand = if hi > lo {
            Binning::uniform(lo, hi, hyper.demand_bins)?
        } else {
            Binning::uniform(0.0, 1.0, hyper.demand_bins)?
        };
        Ok(StateGrid {
            price: Binning::uniform(0.0, 1.0, hyper.price_bins)?,
            demand,
            price_scale,
            demand_scale,
        })
    }

    pub fn n_states(&self) -> usize {
        self.price.bins() * self.demand.bins()
    }
}

/// State index `price_bin * demand_bins + demand_bin`.
pub fn discretize_state(price: f64, demand: f64, grid: &StateGrid) -> usize {
    let p = grid.price.index(price / grid.price_scale);
    let d = grid.demand.index(demand / grid.demand_scale);
    p * grid.demand.bins() + d
}

#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
    visits: Vec<u64>,
    pub alpha: f64,
    pub gamma: f64,
}

impl QTable {
    pub fn new(n_states: usize, n_actions: usize, alpha: f64, gamma: f64) -> Self {
        QTable {
            n_states,
            n_actions,
            values: vec![0.0; n_states * n_actions],
            visits: vec![0; n_states * n_actions],
            alpha,
            gamma,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn cell(&self, s: usize, a: usize) -> Result<usize, QError> {
        if s >= self.n_states || a >= self.n_actions {
            return Err(QError::IndexOutOfRange(format!(
                "(state {s}, action {a}) in a {}x{} table",
                self.n_states, self.n_actions
            )));
        }
        Ok(s * self.n_actions + a)
    }

    pub fn get(&self, s: usize, a: usize) -> Result<f64, QError> {
        Ok(self.values[self.cell(s, a)?])
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) -> Result<(), QError> {
        let c = self.cell(s, a)?;
        self.values[c] = v;
        Ok(())
    }

    pub fn visits(&self, s: usize, a: usize) -> Result<u64, QError> {
        Ok(self.visits[self.cell(s, a)?])
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// Best action, lowest index on ties.
    pub fn greedy(&self, s: usize) -> usize {
        let row = self.row(s);
        let mut best = 0;
        for (a, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = a;
            }
        }
        best
    }

    pub fn max_value(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `Q(s,a) <- (1 - alpha) Q(s,a) + alpha (r + gamma max Q(s', .))`.
pub fn q_update(table: &mut QTable, s: usize, a: usize, r: f64, s_next: usize) -> Result<(), QError> {
    let c = table.cell(s, a)?;
    table.cell(s_next, 0)?;
    let target = r + table.gamma * table.max_value(s_next);
    table.values[c] = (1.0 - table.alpha) * table.values[c] + table.alpha * target;
    table.visits[c] += 1;
    Ok(())
}

pub fn epsilon_greedy_action<R: Rng>(table: &QTable, s: usize, epsilon: f64, rng: &mut R) -> usize {
    if rng.random::<f64>() < epsilon {
        rng.random_range(0..table.n_actions)
    } else {
        table.greedy(s)
    }
}

/// Plain-text table:
///
/// ```text
/// # qtable v1
/// # states <S> actions <A> alpha <a> gamma <g>
/// <A values>      one line per state, space separated
/// ```
pub fn save_table<W: Write>(table: &QTable, mut w: W) -> Result<(), QError> {
    writeln!(w, "# qtable v1")?;
    writeln!(
        w,
        "# states {} actions {} alpha {} gamma {}",
        table.n_states, table.n_actions, table.alpha, table.gamma
    )?;
    for s in 0..table.n_states {
        let line: Vec<String> = table.row(s).iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn load_table<R: BufRead>(r: R) -> Result<QTable, QError> {
    let bad = |m: &str| QError::Format(m.to_string());
    let mut lines = r.lines();
    if lines.next().transpose()?.as_deref() != Some("# qtable v1") {
        return Err(bad("missing `# qtable v1` header"));
    }
    let meta = lines.next().transpose()?.ok_or_else(|| bad("missing metadata line"))?;
    let f: Vec<&str> = meta.split_whitespace().collect();
    if f.len() != 9 || f[0] != "#" || f[1] != "states" || f[3] != "actions" || f[5] != "alpha" || f[7] != "gamma" {
        return Err(bad("malformed metadata line"));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number in metadata"));
    let states: usize = f[2].parse().map_err(|_| bad("bad state count"))?;
    let actions: usize = f[4].parse().map_err(|_| bad("bad action count"))?;
    let mut table = QTable::new(states, actions, num(f[6])?, num(f[8])?);
    for s in 0..states {
        let line = lines.next().transpose()?.ok_or_else(|| bad("too few rows"))?;
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|_| bad("bad value")))
            .collect::<Result<_, _>>()?;
        if row.len() != actions {
            return Err(bad("row length differs from action count"));
        }
        table.values[s * actions..(s + 1) * actions].copy_from_slice(&row);
    }
    Ok(table)
}

/// One Q-learning agent: table, grid and action decoding.
#[derive(Clone, Debug)]
pub struct QAgent {
    pub table: QTable,
    pub grid: StateGrid,
    pub bid_levels: Vec<f64>,
    pub epsilon: f64,
}

impl QAgent {
    pub fn new(hyper: &QHyper, grid: StateGrid) -> Self {
        QAgent {
            table: QTable::new(grid.n_states(), 2 * hyper.bid_levels.len(), hyper.alpha, hyper.gamma),
            grid,
            bid_levels: hyper.bid_levels.clone(),
            epsilon: hyper.epsilon_start,
        }
    }

    /// `(maintenance request, bid)` for a discrete action.
    pub fn decode(&self, a: usize) -> (bool, f64) {
        let l = self.bid_levels.len();
        (a >= l, self.bid_levels[a % l])
    }

    /// Action index of an executed `(maintenance, bid)` pair.
    pub fn encode(&self, maint: bool, bid: f64) -> usize {
        let level = self
            .bid_levels
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - bid).abs().total_cmp(&(b.1 - bid).abs()))
            .map_or(0, |(i, _)| i);
        level + if maint { self.bid_levels.len() } else { 0 }
    }

    pub fn state(&self, s: [f64; 2]) -> usize {
        discretize_state(s[0], s[1], &self.grid)
    }
}
