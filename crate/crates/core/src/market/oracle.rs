use super::{validate_instance, MarketError, MarketInstance, MarketOutcome};

const MAX_UNITS: usize = 12;

/// Solves the dispatch LP by enumerating basic solutions.
///
/// Every vertex of `{sum g = d, lo <= g <= hi}` has all units but at most
/// one at a bound. The oracle tries each choice of free unit with every
/// lower/upper assignment of the others and keeps the cheapest feasible
/// point. Independent of the merit-order and simplex paths; meant for
/// small instances in tests and the `verify` suite.
pub fn lp_dispatch_oracle(inst: &MarketInstance) -> Result<MarketOutcome, MarketError> {
    let rep = validate_instance(inst);
    if !rep.dimension.is_empty() {
        return Err(MarketError::DimensionMismatch(rep.dimension.join("; ")));
    }
    if !rep.other.is_empty() {
        return Err(MarketError::InvalidInstance(rep.other));
    }
    let n = inst.units.len();
    if n > MAX_UNITS {
        return Err(MarketError::InvalidInstance(vec![format!(
            "oracle supports at most {MAX_UNITS} units"
        )]));
    }
    let bounds = inst.bounds();
    let offers: Vec<f64> = (0..n).map(|i| inst.bids[i] * inst.units[i].marginal_cost).collect();
    let min: f64 = bounds.iter().map(|b| b.0).sum();
    let max: f64 = bounds.iter().map(|b| b.1).sum();
    let infeasible = || MarketError::InfeasibleDemand {
        demand: inst.demand,
        min,
        max,
    };
    if bounds.iter().any(|(lo, hi)| lo > hi) {
        return Err(infeasible());
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut consider = |gen: Vec<f64>| {
        let cost: f64 = gen.iter().zip(&offers).map(|(g, o)| g * o).sum();
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, gen));
        }
    };
    // `free == n` means no free unit: all at bounds.
    for free in 0..=n {
        let others: Vec<usize> = (0..n).filter(|&i| i != free).collect();
        for mask in 0u32..(1 << others.len()) {
            let mut gen = vec![0.0; n];
            for (bit, &i) in others.iter().enumerate() {
                gen[i] = if mask >> bit & 1 == 1 { bounds[i].1 } else { bounds[i].0 };
            }
            let placed: f64 = gen.iter().sum();
            if free < n {
                let g = inst.demand - placed;
                let (lo, hi) = bounds[free];
                if g < lo - 1e-9 || g > hi + 1e-9 {
                    continue;
                }
                gen[free] = g.clamp(lo, hi);
            } else if (placed - inst.demand).abs() > 1e-9 {
                continue;
            }
            consider(gen);
        }
    }
    let (total_cost, gen) = best.ok_or_else(infeasible)?;

    // Smallest dual in the optimal interval: the dearest offer that was
    // lifted off its lower bound, else the cheapest operating offer.
    let mut price = f64::NEG_INFINITY;
    for i in 0..n {
        if bounds[i].1 > bounds[i].0 && gen[i] > bounds[i].0 + 1e-9 {
            price = price.max(offers[i]);
        }
    }
    if price == f64::NEG_INFINITY {
        price = (0..n)
            .filter(|&i| !inst.maintenance[i])
            .map(|i| offers[i])
            .fold(f64::INFINITY, f64::min);
        if !price.is_finite() {
            price = 0.0;
        }
    }
    Ok(MarketOutcome {
        gen,
        price,
        total_cost,
    })
}
