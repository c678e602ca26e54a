use super::search::{check_inputs, flip_order};
use super::{from_mask, to_mask, FilterConfig, FilterError, FilterMode, SafeDecision, SafetyState};

const MAX_UNITS: usize = 3;
const MAX_STEPS: u64 = 8;

/// Exhaustive reference for [`super::filter_project`].
///
/// Enumerates every binary schedule of every unit over the lookahead,
/// keeps the per-unit schedules that satisfy the block and coverage rules,
/// then combines them under the concurrency cap. The set of first-step
/// assignments that occur in some joint schedule is exactly the set of
/// extendable decisions; the nearest one under the shared tie-break wins.
pub fn brute_force_filter_oracle(
    request: &[bool],
    state: &SafetyState,
    cfg: &FilterConfig,
) -> Result<SafeDecision, FilterError> {
    check_inputs(request.len(), state, cfg)?;
    let n = request.len();
    let t = state.t;
    let end = cfg.lookahead_end(t);
    let len = end - t + 1;
    if n > MAX_UNITS || len > MAX_STEPS {
        return Err(FilterError::InstanceTooLarge(format!(
            "{n} units over {len} steps (limits {MAX_UNITS} and {MAX_STEPS})"
        )));
    }
    let len = len as usize;

    let per_unit: Vec<Vec<u32>> = (0..n)
        .map(|i| {
            (0u32..1 << len)
                .filter(|&p| unit_schedule_ok(state, cfg, i, p, len, end))
                .collect()
        })
        .collect();

    // witness[first-step mask] = some joint schedule starting with it
    let mut witness: Vec<Option<Vec<u32>>> = vec![None; 1 << n];
    let mut pick = vec![0usize; n];
    'outer: loop {
        if per_unit.iter().all(|p| !p.is_empty()) {
            let steps: Vec<u32> = (0..len)
                .map(|s| (0..n).fold(0u32, |m, i| m | (per_unit[i][pick[i]] >> s & 1) << i))
                .collect();
            if steps.iter().all(|m| m.count_ones() as usize <= cfg.max_concurrent) {
                let first = steps[0] as usize;
                if witness[first].is_none() {
                    witness[first] = Some(steps);
                }
            }
        } else {
            break;
        }
        // odometer over the per-unit choices
        for i in 0..n {
            pick[i] += 1;
            if pick[i] < per_unit[i].len() {
                continue 'outer;
            }
            pick[i] = 0;
        }
        break;
    }

    let req = to_mask(request);
    for flip in flip_order(n) {
        let cand = req ^ flip;
        if let Some(steps) = &witness[cand as usize] {
            return Ok(SafeDecision {
                u_f: from_mask(cand, n),
                distance: flip.count_ones() as usize,
                witness: steps.iter().map(|&m| from_mask(m, n)).collect(),
            });
        }
    }
    Err(FilterError::NoFeasibleCompletion { step: t })
}

/// Checks one unit's schedule `pattern` (bit `s` = step `t + s`) against
/// the block and coverage rules, reading the past from `state`.
fn unit_schedule_ok(
    state: &SafetyState,
    cfg: &FilterConfig,
    unit: usize,
    pattern: u32,
    len: usize,
    end: u64,
) -> bool {
    let t = state.t;
    let us = &state.units[unit];
    let d = cfg.blocks[unit] as u64;
    let h = cfg.required[unit] as u64;
    let w = cfg.window as u64;
    // value at any global step up to `end`; steps before 1 read as 0
    let at = |step: u64| -> bool {
        if step >= t {
            pattern >> (step - t) & 1 == 1
        } else {
            let back = t - 1 - step;
            back < 128 && us.history >> back & 1 == 1
        }
    };

    // An open block must run to length d (or to the end of the lookahead).
    if us.run > 0 && us.run < d {
        let need = d - us.run;
        for s in t..(t + need).min(end + 1) {
            if !at(s) {
                return false;
            }
        }
    }
    // Every block that starts inside the lookahead.
    for s in t..=end {
        let prev = if s == t { us.run > 0 } else { at(s - 1) };
        if at(s) && !prev {
            for q in s..(s + d).min(end + 1) {
                if !at(q) {
                    return false;
                }
            }
        }
    }
    match cfg.mode {
        FilterMode::Intent => {
            for e in t..=end {
                if e < w {
                    continue;
                }
                let count = (e + 1 - w..=e).filter(|&s| at(s)).count() as u64;
                if count < h {
                    return false;
                }
            }
        }
        FilterMode::Literal => {
            let mut x = us.since_maint;
            for s in 0..len - 1 {
                let u = (pattern >> s & 1) as u64;
                x = (1 - u) * x + (1 - u);
            }
            if x < h {
                return false;
            }
        }
    }
    true
}
