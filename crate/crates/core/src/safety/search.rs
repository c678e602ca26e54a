use super::{
    from_mask, low_bits, to_mask, FilterConfig, FilterError, FilterMode, SafeDecision,
    SafetyState, UnitSafety,
};
use std::collections::HashSet;

type Key = (u64, Vec<(u128, u64, u64)>);

/// Depth-first search over the lookahead, one step per level.
///
/// At each step the subsets of free units are tried smallest first, and
/// among equal sizes the units closest to a coverage deadline first. A
/// counting bound on every future window prunes dead branches early, and
/// failed `(step, state)` pairs are memoised.
struct Search<'a> {
    cfg: &'a FilterConfig,
    n: usize,
    end: u64,
    failed: HashSet<Key>,
}

impl<'a> Search<'a> {
    fn new(cfg: &'a FilterConfig, t: u64) -> Self {
        Search {
            cfg,
            n: cfg.n_units(),
            end: cfg.lookahead_end(t),
            failed: HashSet::new(),
        }
    }

    /// Can `mask` be executed at step `tau` given the unit states?
    fn step_ok(&self, tau: u64, units: &[UnitSafety], mask: u32) -> bool {
        let cfg = self.cfg;
        if mask.count_ones() as usize > cfg.max_concurrent {
            return false;
        }
        let w = cfg.window as u64;
        for (i, u) in units.iter().enumerate() {
            let on = mask >> i & 1 == 1;
            let d = cfg.blocks[i] as u64;
            let h = cfg.required[i] as u64;
            if u.run > 0 && u.run < d && !on {
                return false;
            }
            match cfg.mode {
                FilterMode::Intent => {
                    if tau >= w {
                        let past = (u.history & low_bits(cfg.window as u32 - 1)).count_ones() as u64;
                        if past + on as u64 <= h - 1 {
                            return false;
                        }
                    }
                }
                FilterMode::Literal => {
                    if tau == self.end && u.since_maint < h {
                        return false;
                    }
                    if on && tau < self.end && self.end - tau - 1 < h {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Coverage still owed by unit `i` to the window ending at `e`, counting
    /// only steps before `tau`. `None` if that window starts before step 1.
    fn deficit(&self, tau: u64, u: &UnitSafety, i: usize, e: u64) -> Option<u64> {
        let w = self.cfg.window as u64;
        if e < w {
            return None;
        }
        let start = e + 1 - w;
        let known_steps = tau.saturating_sub(start) as u32;
        let known = (u.history & low_bits(known_steps)).count_ones() as u64;
        Some((self.cfg.required[i] as u64).saturating_sub(known))
    }

    /// Counting bound: every unit's owed coverage must fit in the steps left
    /// before each window closes, and all units together must fit under the
    /// concurrency cap.
    fn bound_ok(&self, tau: u64, units: &[UnitSafety]) -> bool {
        if self.cfg.mode != FilterMode::Intent {
            return true;
        }
        for e in tau..=self.end {
            let room = e - tau + 1;
            let mut total = 0;
            for (i, u) in units.iter().enumerate() {
                if let Some(d) = self.deficit(tau, u, i, e) {
                    if d > room {
                        return false;
                    }
                    total += d;
                }
            }
            if total > room * self.cfg.max_concurrent as u64 {
                return false;
            }
        }
        true
    }

    fn slack(&self, tau: u64, u: &UnitSafety, i: usize) -> u64 {
        if self.cfg.mode != FilterMode::Intent {
            return 0;
        }
        (tau..=self.end)
            .filter_map(|e| match self.deficit(tau, u, i, e) {
                Some(d) if d > 0 => Some(e - tau + 1 - d.min(e - tau + 1)),
                _ => None,
            })
            .min()
            .unwrap_or(u64::MAX / 64)
    }

    /// Candidate masks for step `tau`, in search order.
    fn choices(&self, tau: u64, units: &[UnitSafety]) -> Vec<u32> {
        let forced = units
            .iter()
            .enumerate()
            .filter(|(i, u)| u.run > 0 && u.run < self.cfg.blocks[*i] as u64)
            .fold(0u32, |m, (i, _)| m | 1 << i);
        let free: Vec<usize> = (0..self.n).filter(|i| forced >> i & 1 == 0).collect();
        let room = self.cfg.max_concurrent.saturating_sub(forced.count_ones() as usize);
        let slack: Vec<u64> = (0..self.n).map(|i| self.slack(tau, &units[i], i)).collect();
        let mut out = Vec::new();
        for size in 0..=room.min(free.len()) {
            let mut level: Vec<(u64, u32)> = Vec::new();
            combinations(&free, size, &mut |sub| {
                let mask = sub.iter().fold(0u32, |m, &i| m | 1 << i);
                let key = sub.iter().map(|&i| slack[i]).sum();
                level.push((key, mask));
            });
            level.sort();
            out.extend(level.into_iter().map(|(_, m)| forced | m));
        }
        out
    }

    fn key(&self, tau: u64, units: &[UnitSafety]) -> Key {
        let keep = low_bits(self.cfg.window as u32 - 1);
        (
            tau,
            units
                .iter()
                .enumerate()
                .map(|(i, u)| {
                    (
                        u.history & keep,
                        u.run.min(self.cfg.blocks[i] as u64),
                        u.since_maint.min(self.cfg.required[i] as u64),
                    )
                })
                .collect(),
        )
    }

    /// Schedule for steps `tau..=end`, or `None` if no completion exists.
    fn complete(&mut self, tau: u64, units: &[UnitSafety]) -> Option<Vec<u32>> {
        if tau > self.end {
            return Some(Vec::new());
        }
        let key = self.key(tau, units);
        if self.failed.contains(&key) || !self.bound_ok(tau, units) {
            return None;
        }
        for mask in self.choices(tau, units) {
            if !self.step_ok(tau, units, mask) {
                continue;
            }
            let next = apply(units, mask);
            if let Some(mut rest) = self.complete(tau + 1, &next) {
                rest.insert(0, mask);
                return Some(rest);
            }
        }
        self.failed.insert(key);
        None
    }

    fn extend(&mut self, state: &SafetyState, mask: u32) -> Option<Vec<u32>> {
        if !self.step_ok(state.t, &state.units, mask) {
            return None;
        }
        let next = apply(&state.units, mask);
        let mut rest = self.complete(state.t + 1, &next)?;
        rest.insert(0, mask);
        Some(rest)
    }
}

fn apply(units: &[UnitSafety], mask: u32) -> Vec<UnitSafety> {
    units
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let on = mask >> i & 1 == 1;
            UnitSafety {
                since_maint: if on { 0 } else { u.since_maint + 1 },
                run: if on { u.run + 1 } else { 0 },
                history: u.history << 1 | on as u128,
            }
        })
        .collect()
}

fn combinations(items: &[usize], k: usize, f: &mut impl FnMut(&[usize])) {
    fn go(items: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for j in start..items.len() {
            if items.len() - j < k - cur.len() {
                break;
            }
            cur.push(items[j]);
            go(items, k, j + 1, cur, f);
            cur.pop();
        }
    }
    go(items, k, 0, &mut Vec::with_capacity(k), f);
}

pub(crate) fn check_inputs(
    request_len: usize,
    state: &SafetyState,
    cfg: &FilterConfig,
) -> Result<(), FilterError> {
    cfg.validate(state.units.len())?;
    if request_len != state.units.len() {
        return Err(FilterError::DimensionMismatch {
            expected: state.units.len(),
            got: request_len,
        });
    }
    if state.t < 1 {
        return Err(FilterError::BadConfig("steps start at 1".into()));
    }
    Ok(())
}

/// Current-step flip masks in tie-break order: fewer flips first, then the
/// flip set with the highest unit indices.
pub(crate) fn flip_order(n: usize) -> Vec<u32> {
    let mut flips: Vec<u32> = (0..1u32 << n).collect();
    flips.sort_by(|a, b| a.count_ones().cmp(&b.count_ones()).then(b.cmp(a)));
    flips
}

fn rows(schedule: &[u32], n: usize) -> Vec<Vec<bool>> {
    schedule.iter().map(|&m| from_mask(m, n)).collect()
}

/// Projects `request` onto the nearest extendable assignment.
pub fn filter_project(
    request: &[bool],
    state: &SafetyState,
    cfg: &FilterConfig,
) -> Result<SafeDecision, FilterError> {
    check_inputs(request.len(), state, cfg)?;
    let n = request.len();
    let req = to_mask(request);
    let mut search = Search::new(cfg, state.t);
    for flip in flip_order(n) {
        let cand = req ^ flip;
        if let Some(schedule) = search.extend(state, cand) {
            return Ok(SafeDecision {
                u_f: from_mask(cand, n),
                distance: flip.count_ones() as usize,
                witness: rows(&schedule, n),
            });
        }
    }
    Err(FilterError::NoFeasibleCompletion { step: state.t })
}

/// A feasible schedule for the lookahead whose first step is `committed`.
pub fn feasible_completion(
    state: &SafetyState,
    committed: &[bool],
    cfg: &FilterConfig,
) -> Option<Vec<Vec<bool>>> {
    check_inputs(committed.len(), state, cfg).ok()?;
    let mut search = Search::new(cfg, state.t);
    search
        .extend(state, to_mask(committed))
        .map(|s| rows(&s, committed.len()))
}
