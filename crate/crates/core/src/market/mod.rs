//! Single-step ISO market clearing with a uniform price.
//!
//! The ISO minimises the bid-weighted generation cost subject to the demand
//! balance, the maintenance-masked capacity bounds and (optionally) ramp
//! limits. The clearing price is the dual multiplier of the balance row.

mod oracle;
mod simplex;

pub use oracle::lp_dispatch_oracle;
pub use simplex::{LinearProgram, LpError, LpSolution};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Static parameters of one generation unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitParams {
    /// 1-based unit index.
    pub id: usize,
    /// True marginal cost, money per MWh.
    pub marginal_cost: f64,
    pub g_max: f64,
    pub g_min: f64,
    /// MW per step; `None` means no ramp limit.
    #[serde(default)]
    pub ramp_up: Option<f64>,
    #[serde(default)]
    pub ramp_down: Option<f64>,
    /// Money charged per step spent in maintenance.
    pub maint_cost: f64,
    /// Minimum length of one maintenance block, in steps.
    #[serde(default = "one")]
    pub maint_block: usize,
    /// Maintenance steps required per coverage window.
    #[serde(default = "one")]
    pub maint_required: usize,
    /// Upper limit of the bidding multiplier.
    #[serde(default = "two")]
    pub k_max: f64,
}

fn one() -> usize {
    1
}
fn two() -> f64 {
    2.0
}

impl UnitParams {
    /// Structural violations of this unit's parameters.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let id = self.id;
        if !(self.g_min >= 0.0) {
            out.push(format!("unit {id}: g_min must be >= 0"));
        }
        if !(self.g_min <= self.g_max) || !self.g_max.is_finite() {
            out.push(format!("unit {id}: need g_min <= g_max < inf"));
        }
        if !(self.marginal_cost > 0.0) || !self.marginal_cost.is_finite() {
            out.push(format!("unit {id}: marginal cost must be positive"));
        }
        if !(self.maint_cost >= 0.0) || !self.maint_cost.is_finite() {
            out.push(format!("unit {id}: maintenance cost must be >= 0"));
        }
        if self.maint_block < 1 {
            out.push(format!("unit {id}: maintenance block must be >= 1"));
        }
        if self.maint_required < 1 {
            out.push(format!("unit {id}: required maintenance must be >= 1"));
        }
        if !(self.k_max >= 1.0) || !self.k_max.is_finite() {
            out.push(format!("unit {id}: k_max must be >= 1"));
        }
        if [self.ramp_up, self.ramp_down].iter().flatten().any(|r| !(*r >= 0.0)) {
            out.push(format!("unit {id}: ramp limits must be >= 0"));
        }
        out
    }
}

/// One clearing problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketInstance {
    pub units: Vec<UnitParams>,
    /// Bidding multipliers; unit i offers `bids[i] * marginal_cost`.
    pub bids: Vec<f64>,
    /// `true` means the unit is in maintenance this step.
    pub maintenance: Vec<bool>,
    pub demand: f64,
    #[serde(default)]
    pub prev_gen: Option<Vec<f64>>,
    #[serde(default)]
    pub ramps_enabled: bool,
}

impl MarketInstance {
    /// Effective offer price of unit `i`.
    pub fn offer(&self, i: usize) -> f64 {
        self.bids[i] * self.units[i].marginal_cost
    }

    /// Per-unit `(lower, upper)` generation bounds after the maintenance
    /// mask and, when enabled, the ramp window around `prev_gen`.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.units
            .iter()
            .enumerate()
            .map(|(i, u)| {
                let (mut lo, mut hi) = if self.maintenance[i] {
                    (0.0, 0.0)
                } else {
                    (u.g_min, u.g_max)
                };
                if let (true, Some(prev)) = (self.ramps_enabled, self.prev_gen.as_ref()) {
                    if let Some(down) = u.ramp_down {
                        lo = lo.max(prev[i] - down);
                    }
                    if let Some(up) = u.ramp_up {
                        hi = hi.min(prev[i] + up);
                    }
                }
                (lo, hi)
            })
            .collect()
    }
}

/// Result of a successful clear.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketOutcome {
    pub gen: Vec<f64>,
    pub price: f64,
    /// Bid-weighted cost, the ISO objective.
    pub total_cost: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error("infeasible demand {demand} MW: deliverable range is [{min}, {max}] MW")]
    InfeasibleDemand { demand: f64, min: f64, max: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid instance: {}", .0.join("; "))]
    InvalidInstance(Vec<String>),
    #[error("lp solver failed: {0}")]
    Solver(#[from] LpError),
}

/// Structural problems with an instance. An empty report means well formed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidityReport {
    pub dimension: Vec<String>,
    pub other: Vec<String>,
}

impl ValidityReport {
    pub fn is_empty(&self) -> bool {
        self.dimension.is_empty() && self.other.is_empty()
    }

    pub fn messages(&self) -> Vec<String> {
        self.dimension.iter().chain(&self.other).cloned().collect()
    }
}

pub fn validate_instance(inst: &MarketInstance) -> ValidityReport {
    let mut rep = ValidityReport::default();
    let n = inst.units.len();
    if n == 0 {
        rep.dimension.push("instance has no units".into());
    }
    if inst.bids.len() != n {
        rep.dimension
            .push(format!("bids has length {} but there are {n} units", inst.bids.len()));
    }
    if inst.maintenance.len() != n {
        rep.dimension.push(format!(
            "maintenance has length {} but there are {n} units",
            inst.maintenance.len()
        ));
    }
    if let Some(prev) = &inst.prev_gen {
        if prev.len() != n {
            rep.dimension
                .push(format!("prev_gen has length {} but there are {n} units", prev.len()));
        } else if prev.iter().any(|g| !g.is_finite()) {
            rep.other.push("prev_gen must be finite".into());
        }
    }
    for u in &inst.units {
        rep.other.extend(u.violations());
    }
    for (i, (&k, u)) in inst.bids.iter().zip(&inst.units).enumerate() {
        if !(k >= 1.0) {
            rep.other
                .push(format!("unit {}: bid multiplier {k} below 1", i + 1));
        } else if !(k <= u.k_max) {
            rep.other.push(format!(
                "unit {}: bid multiplier {k} above k_max {}",
                i + 1,
                u.k_max
            ));
        }
    }
    if !(inst.demand >= 0.0) || !inst.demand.is_finite() {
        rep.other.push(format!("demand {} must be finite and >= 0", inst.demand));
    }
    rep
}

fn check(inst: &MarketInstance) -> Result<Vec<(f64, f64)>, MarketError> {
    let rep = validate_instance(inst);
    if !rep.dimension.is_empty() {
        return Err(MarketError::DimensionMismatch(rep.dimension.join("; ")));
    }
    if !rep.other.is_empty() {
        return Err(MarketError::InvalidInstance(rep.other));
    }
    let bounds = inst.bounds();
    let min: f64 = bounds.iter().map(|b| b.0).sum();
    let max: f64 = bounds.iter().map(|b| b.1).sum();
    let ramp_conflict = bounds.iter().any(|(lo, hi)| lo > hi);
    if ramp_conflict || inst.demand < min || inst.demand > max {
        return Err(MarketError::InfeasibleDemand {
            demand: inst.demand,
            min,
            max: if ramp_conflict { f64::NAN } else { max },
        });
    }
    Ok(bounds)
}

/// Units in merit order: ascending offer, ties by ascending index.
fn merit_order(inst: &MarketInstance) -> Vec<usize> {
    let mut order: Vec<usize> = (0..inst.units.len()).collect();
    order.sort_by(|&a, &b| inst.offer(a).total_cmp(&inst.offer(b)).then(a.cmp(&b)));
    order
}

/// Fill `amount` MW above the lower bounds in merit order.
fn fill(order: &[usize], bounds: &[(f64, f64)], amount: f64) -> Vec<f64> {
    let mut gen: Vec<f64> = bounds.iter().map(|b| b.0).collect();
    let mut remaining = amount;
    for &i in order {
        if remaining <= 0.0 {
            break;
        }
        let take = (bounds[i].1 - bounds[i].0).min(remaining);
        gen[i] += take;
        remaining -= take;
    }
    gen
}

/// Uniform price from a cost-minimal dispatch.
///
/// The price is the highest offer among units dispatched above their lower
/// bound. When every unit sits at its lower bound the price is the cheapest
/// operating offer. Units whose bounds collapse to a point carry no price
/// information and are skipped.
pub fn uniform_price(inst: &MarketInstance, bounds: &[(f64, f64)], gen: &[f64]) -> f64 {
    let marginal = (0..gen.len())
        .filter(|&i| bounds[i].1 > bounds[i].0 && gen[i] > bounds[i].0)
        .map(|i| inst.offer(i))
        .fold(f64::NEG_INFINITY, f64::max);
    if marginal.is_finite() {
        return marginal;
    }
    let cheapest = (0..gen.len())
        .filter(|&i| !inst.maintenance[i])
        .map(|i| inst.offer(i))
        .fold(f64::INFINITY, f64::min);
    if cheapest.is_finite() {
        cheapest
    } else {
        0.0
    }
}

pub fn dispatch_cost(inst: &MarketInstance, gen: &[f64]) -> f64 {
    gen.iter().enumerate().map(|(i, g)| inst.offer(i) * g).sum()
}

/// Clears the market for one step.
///
/// Ramp-free instances use the merit-order fill; instances with active ramp
/// limits are solved by the dense simplex and then canonicalised so that
/// equal offers are filled in ascending unit order.
pub fn clear_market(inst: &MarketInstance) -> Result<MarketOutcome, MarketError> {
    let bounds = check(inst)?;
    let order = merit_order(inst);
    let floor: f64 = bounds.iter().map(|b| b.0).sum();
    let ramps_active = inst.ramps_enabled && inst.prev_gen.is_some();
    let gen = if ramps_active {
        let lp_gen = solve_with_simplex(inst, &bounds)?;
        canonicalize(inst, &order, &bounds, &lp_gen)
    } else {
        fill(&order, &bounds, inst.demand - floor)
    };
    let price = uniform_price(inst, &bounds, &gen);
    let total_cost = dispatch_cost(inst, &gen);
    Ok(MarketOutcome {
        gen,
        price,
        total_cost,
    })
}

/// Dispatch LP in shifted variables `y = g - lo`, with one slack per unit
/// for the upper bound and a single balance row.
fn solve_with_simplex(inst: &MarketInstance, bounds: &[(f64, f64)]) -> Result<Vec<f64>, MarketError> {
    let n = bounds.len();
    let floor: f64 = bounds.iter().map(|b| b.0).sum();
    let mut lp = LinearProgram::new(2 * n);
    for i in 0..n {
        lp.cost[i] = inst.offer(i);
    }
    let mut balance = vec![0.0; 2 * n];
    balance[..n].iter_mut().for_each(|c| *c = 1.0);
    lp.add_eq(balance, (inst.demand - floor).max(0.0));
    for (i, (lo, hi)) in bounds.iter().enumerate() {
        let mut row = vec![0.0; 2 * n];
        row[i] = 1.0;
        row[n + i] = 1.0;
        lp.add_eq(row, hi - lo);
    }
    let sol = lp.solve()?;
    Ok((0..n).map(|i| bounds[i].0 + sol.x[i]).collect())
}

/// Redistributes each group of equal offers in ascending index order so
/// that the simplex result matches the documented tie-break. Cost and
/// feasibility are preserved because a group shares one price.
fn canonicalize(
    inst: &MarketInstance,
    order: &[usize],
    bounds: &[(f64, f64)],
    lp_gen: &[f64],
) -> Vec<f64> {
    let floor: f64 = bounds.iter().map(|b| b.0).sum();
    let mut gen: Vec<f64> = bounds.iter().map(|b| b.0).collect();
    let mut remaining = inst.demand - floor;
    let mut start = 0;
    while start < order.len() {
        let offer = inst.offer(order[start]);
        let mut end = start;
        while end < order.len() && inst.offer(order[end]) == offer {
            end += 1;
        }
        let group = &order[start..end];
        let lifted: f64 = group
            .iter()
            .map(|&i| (lp_gen[i] - bounds[i].0).clamp(0.0, bounds[i].1 - bounds[i].0))
            .sum();
        let last_group = end == order.len();
        let mut budget = if last_group { remaining } else { lifted.min(remaining) };
        for &i in group {
            let take = (bounds[i].1 - bounds[i].0).min(budget).max(0.0);
            // Snap solver noise onto the bound.
            let take = if (bounds[i].1 - bounds[i].0 - take).abs() < 1e-9 {
                bounds[i].1 - bounds[i].0
            } else if take < 1e-9 {
                0.0
            } else {
                take
            };
            gen[i] += take;
            budget -= take;
            remaining -= take;
        }
        start = end;
    }
    // Absorb rounding in the highest-priced lifted unit that has room.
    let residual = inst.demand - gen.iter().sum::<f64>();
    if residual != 0.0 {
        if let Some(&i) = order
            .iter()
            .rev()
            .find(|&&i| gen[i] + residual >= bounds[i].0 && gen[i] + residual <= bounds[i].1 && gen[i] > bounds[i].0)
            .or_else(|| {
                order
                    .iter()
                    .find(|&&i| gen[i] + residual >= bounds[i].0 && gen[i] + residual <= bounds[i].1)
            })
        {
            gen[i] += residual;
        }
    }
    gen
}

/// KKT and feasibility violations of an outcome, for the ramp-free or
/// ramp-windowed box LP. Empty means the outcome is an optimal dispatch
/// with a valid dual price.
pub fn kkt_violations(inst: &MarketInstance, out: &MarketOutcome, tol: f64) -> Vec<String> {
    let mut v = Vec::new();
    let bounds = inst.bounds();
    let total: f64 = out.gen.iter().sum();
    if (total - inst.demand).abs() > tol {
        v.push(format!("balance: sum {total} vs demand {}", inst.demand));
    }
    for (i, (&g, &(lo, hi))) in out.gen.iter().zip(&bounds).enumerate() {
        if g < lo - tol || g > hi + tol {
            v.push(format!("unit {}: g = {g} outside [{lo}, {hi}]", i + 1));
        }
        if hi - lo <= tol {
            continue;
        }
        let offer = inst.offer(i);
        if offer < out.price && g < hi - tol {
            v.push(format!("unit {}: offer {offer} below price but not at max", i + 1));
        }
        if offer > out.price && g > lo + tol {
            v.push(format!("unit {}: offer {offer} above price but not at min", i + 1));
        }
    }
    let priced = (0..out.gen.len()).any(|i| !inst.maintenance[i] && inst.offer(i) == out.price);
    if !priced && inst.maintenance.iter().any(|m| !m) {
        v.push(format!("price {} is not an operating unit's offer", out.price));
    }
    v
}

#[cfg(test)]
mod tests;
