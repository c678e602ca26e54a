//! Seeded oracle-equivalence and invariant suites.
//!
//! Each suite draws its instances from a ChaCha stream and returns a
//! [`SuiteReport`] listing every failing case.

use crate::ddpg::{critic_action_gradients, mlp_gradients, policy_gradient, sigmoid, soft_update, Init, MlpParams};
use crate::market::{clear_market, kkt_violations, lp_dispatch_oracle, MarketInstance, UnitParams};
use crate::safety::{
    advance_state, big_m_expand, brute_force_filter_oracle, filter_project, linearize_product, FilterConfig,
    FilterError, FilterMode, MilpModel, SafetyState, VarKind,
};
use crate::config::ExperimentConfig;
use crate::sim::{compute_reward, run_training};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Relative tolerance of the dispatch cost comparison.
pub const DISPATCH_TOL: f64 = 1e-9;
/// Step of the central finite differences.
pub const FD_STEP: f64 = 1e-5;
/// Largest accepted relative error of an analytic gradient component.
pub const FD_TOL: f64 = 1e-5;
/// Denominator floor of the relative gradient error.
pub const FD_FLOOR: f64 = 1e-4;
/// Smallest hidden pre-activation magnitude accepted in gradient checks, so
/// that no finite-difference probe crosses a ReLU kink.
const KINK_MARGIN: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    pub failures: Vec<String>,
}

impl SuiteReport {
    fn new(name: &'static str) -> Self {
        SuiteReport {
            name,
            cases: 0,
            failures: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.cases > 0
    }

    pub fn summary(&self) -> String {
        format!(
            "{} {}: {} cases, {} failures",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.failures.len()
        )
    }
}

fn quarter<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let steps = ((hi - lo) * 4.0).round() as i64;
    lo + rng.random_range(0..=steps) as f64 * 0.25
}

/// A random clearing instance with demand inside the deliverable range.
/// Costs and bids sit on a quarter grid so ties are common.
pub fn random_market<R: Rng>(rng: &mut R, ramps: bool) -> MarketInstance {
    loop {
        let n = rng.random_range(1..=6);
        let units: Vec<UnitParams> = (0..n)
            .map(|i| {
                let g_min = quarter(rng, 0.0, 10.0);
                UnitParams {
                    id: i + 1,
                    marginal_cost: quarter(rng, 0.25, 4.0),
                    g_max: g_min + quarter(rng, 0.0, 80.0),
                    g_min,
                    ramp_up: ramps.then(|| quarter(rng, 1.0, 40.0)),
                    ramp_down: ramps.then(|| quarter(rng, 1.0, 40.0)),
                    maint_cost: 0.0,
                    maint_block: 1,
                    maint_required: 1,
                    k_max: 2.0,
                }
            })
            .collect();
        let bids = (0..n).map(|_| quarter(rng, 1.0, 2.0)).collect();
        let maintenance = (0..n).map(|_| rng.random_bool(0.2)).collect();
        let prev_gen = ramps.then(|| units.iter().map(|u| quarter(rng, 0.0, u.g_max)).collect());
        let mut inst = MarketInstance {
            units,
            bids,
            maintenance,
            demand: 0.0,
            prev_gen,
            ramps_enabled: ramps,
        };
        let bounds = inst.bounds();
        if bounds.iter().any(|(lo, hi)| lo > hi) {
            continue;
        }
        let lo: f64 = bounds.iter().map(|b| b.0).sum();
        let hi: f64 = bounds.iter().map(|b| b.1).sum();
        inst.demand = match rng.random_range(0..10) {
            0 => lo,
            1 => hi,
            _ => rng.random_range(lo..=hi),
        };
        return inst;
    }
}

/// Clearing cost against the vertex-enumeration oracle, plus the
/// merit-order optimality conditions.
pub fn dispatch_suite(cases: usize, seed: u64) -> SuiteReport {
    let mut rep = SuiteReport::new("dispatch vs oracle");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for c in 0..cases {
        let inst = random_market(&mut rng, c % 2 == 1);
        rep.cases += 1;
        match (clear_market(&inst), lp_dispatch_oracle(&inst)) {
            (Ok(a), Ok(b)) => {
                let diff = (a.total_cost - b.total_cost).abs();
                if diff > DISPATCH_TOL * b.total_cost.abs().max(1.0) {
                    rep.failures.push(format!("case {c}: cost {} vs oracle {}", a.total_cost, b.total_cost));
                }
                let kkt = kkt_violations(&inst, &a, DISPATCH_TOL);
                if !kkt.is_empty() {
                    rep.failures.push(format!("case {c}: {}", kkt.join("; ")));
                }
            }
            (a, b) => rep.failures.push(format!("case {c}: {a:?} vs {b:?}")),
        }
    }
    rep
}

/// A small filter instance: up to 3 units, lookahead at most 8 steps,
/// with a random executed history.
pub fn random_filter_case<R: Rng>(rng: &mut R) -> (FilterConfig, SafetyState, Vec<bool>) {
    let n = rng.random_range(1..=3);
    let w = rng.random_range(1..=8);
    let cfg = FilterConfig {
        mode: if rng.random_bool(0.5) { FilterMode::Intent } else { FilterMode::Literal },
        max_concurrent: rng.random_range(1..=n),
        window: w,
        blocks: (0..n).map(|_| rng.random_range(1..=w.min(3))).collect(),
        required: (0..n).map(|_| rng.random_range(1..=w.min(3))).collect(),
        horizon: None,
    };
    let past = rng.random_range(0..16);
    let mut state = SafetyState::new(n);
    for _ in 0..past {
        let req: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        let applied = filter_project(&req, &state, &cfg).map(|d| d.u_f).unwrap_or(req);
        state = advance_state(&state, &applied, &cfg);
    }
    let extra = rng.random_range(0..8u64);
    let cfg = FilterConfig {
        horizon: Some(state.t + extra),
        ..cfg
    };
    let request = (0..n).map(|_| rng.random_bool(0.5)).collect();
    (cfg, state, request)
}

/// Projection against exhaustive enumeration: same distance and decision.
/// Only cases with a feasible projection count toward `cases`.
pub fn filter_suite(cases: usize, seed: u64) -> SuiteReport {
    let mut rep = SuiteReport::new("filter vs brute force");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut drawn = 0;
    while rep.cases < cases && drawn < cases * 20 {
        drawn += 1;
        let (cfg, state, req) = random_filter_case(&mut rng);
        let fast = filter_project(&req, &state, &cfg);
        let slow = brute_force_filter_oracle(&req, &state, &cfg);
        match (fast, slow) {
            (Ok(a), Ok(b)) => {
                rep.cases += 1;
                if a.distance != b.distance || a.u_f != b.u_f {
                    rep.failures.push(format!(
                        "draw {drawn}: {:?}/{} vs oracle {:?}/{}",
                        a.u_f, a.distance, b.u_f, b.distance
                    ));
                }
            }
            (Err(FilterError::NoFeasibleCompletion { .. }), Err(FilterError::NoFeasibleCompletion { .. })) => {}
            (a, b) => rep.failures.push(format!("draw {drawn}: {a:?} vs {b:?}")),
        }
    }
    rep
}

/// Every `(u, x)` in `{0,1} x {0..=100}` with `M = 1000`: the three rows
/// admit exactly `z = u x`. The admissible `z` interval is computed from the
/// rows and must collapse to that single point.
pub fn big_m_suite() -> SuiteReport {
    let mut rep = SuiteReport::new("big-M exactness");
    let mut m = MilpModel::default();
    let u = m.add_var("u".into(), VarKind::Binary, 0.0, Some(1.0));
    let x = m.add_var("x".into(), VarKind::Continuous, 0.0, None);
    let z = m.add_var("z".into(), VarKind::Continuous, 0.0, None);
    m.rows = linearize_product(u, x, z, 1000.0, "p");
    for uv in 0..=1 {
        for xv in 0..=100 {
            rep.cases += 1;
            let vals = [uv as f64, xv as f64, 0.0];
            let (lo, hi) = m.feasible_interval(z, &vals);
            let want = (uv * xv) as f64;
            if lo != want || hi != want {
                rep.failures.push(format!("u={uv} x={xv}: z in [{lo}, {hi}]"));
            }
        }
    }
    // the expansion itself rejects a constant below the horizon
    let cfg = FilterConfig {
        mode: FilterMode::Literal,
        max_concurrent: 1,
        window: 4,
        blocks: vec![1],
        required: vec![1],
        horizon: None,
    };
    rep.cases += 1;
    if !matches!(
        big_m_expand(&cfg, &SafetyState::new(1), &[false], 2.0),
        Err(FilterError::BadBigM { .. })
    ) {
        rep.failures.push("small big-M accepted".into());
    }
    rep
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FD_FLOOR)
}

/// Smallest hidden pre-activation magnitude over a batch.
fn kink_distance(p: &MlpParams, xs: &[f64], batch: usize) -> f64 {
    let mut a = xs.to_vec();
    let mut min = f64::INFINITY;
    for (l, layer) in p.layers.iter().enumerate() {
        let mut next = vec![0.0; batch * layer.outputs];
        for b in 0..batch {
            for o in 0..layer.outputs {
                let mut s = layer.biases[o];
                for i in 0..layer.inputs {
                    s += layer.weights[o * layer.inputs + i] * a[b * layer.inputs + i];
                }
                if l + 1 < p.layers.len() {
                    min = min.min(s.abs());
                    s = s.max(0.0);
                }
                next[b * layer.outputs + o] = s;
            }
        }
        a = next;
    }
    min
}

fn with_param(p: &MlpParams, k: usize, delta: f64) -> MlpParams {
    let mut q = p.clone();
    *q.values_mut().nth(k).expect("index") += delta;
    q
}

fn central<F: Fn(&MlpParams) -> f64>(p: &MlpParams, k: usize, f: &F) -> f64 {
    (f(&with_param(p, k, FD_STEP)) - f(&with_param(p, k, -FD_STEP))) / (2.0 * FD_STEP)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Checks `output . upstream` gradients of one network with respect to
/// every parameter and input.
fn check_network<R: Rng>(rng: &mut R, sizes: &[usize], label: &str, rep: &mut SuiteReport) {
    let (p, x) = loop {
        let p = MlpParams::init(sizes, Init::Uniform { range: 0.5 }, rng);
        let x: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
        if kink_distance(&p, &x, 1) > KINK_MARGIN {
            break (p, x);
        }
    };
    let up: Vec<f64> = (0..*sizes.last().unwrap()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let g = mlp_gradients(&p, &x, &up).expect("shapes");
    let f = |q: &MlpParams| dot(&q.forward(&x).expect("shapes"), &up);
    let mut worst: f64 = 0.0;
    for (k, a) in g.params.values().enumerate() {
        worst = worst.max(rel_err(*a, central(&p, k, &f)));
    }
    for i in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += FD_STEP;
        xm[i] -= FD_STEP;
        let n = (dot(&p.forward(&xp).unwrap(), &up) - dot(&p.forward(&xm).unwrap(), &up)) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(g.input[i], n));
    }
    if worst > FD_TOL {
        rep.failures.push(format!("{label}: relative error {worst:e}"));
    }
}

/// Actor loss `-mean Q(s, [k, sigmoid(logit)])` through a fixed critic.
fn check_policy_path<R: Rng>(rng: &mut R, hidden: usize, rep: &mut SuiteReport) {
    let batch = 3;
    let (actor, critic, states) = loop {
        let actor = MlpParams::init(&[2, hidden, hidden, 2], Init::Uniform { range: 0.5 }, rng);
        let critic = MlpParams::init(&[4, hidden, hidden, 1], Init::Uniform { range: 0.5 }, rng);
        let states: Vec<f64> = (0..2 * batch).map(|_| rng.random_range(0.0..1.0)).collect();
        if kink_distance(&actor, &states, batch) <= KINK_MARGIN {
            continue;
        }
        let out = actor.forward_batch(&states, batch).unwrap();
        let mut cin = Vec::new();
        for b in 0..batch {
            let o = &out.output()[2 * b..2 * b + 2];
            cin.extend([states[2 * b], states[2 * b + 1], sigmoid(o[1]), o[0]]);
        }
        if kink_distance(&critic, &cin, batch) > KINK_MARGIN {
            break (actor, critic, states);
        }
    };
    let loss = |a: &MlpParams| {
        let out = a.forward_batch(&states, batch).unwrap();
        let acts: Vec<f64> = out.output().chunks(2).flat_map(|o| [o[0], sigmoid(o[1])]).collect();
        let (q, _) = critic_action_gradients(&critic, &states, &acts).unwrap();
        -q.iter().sum::<f64>() / batch as f64
    };
    let (_, g) = policy_gradient(&actor, &states, batch, |acts| critic_action_gradients(&critic, &states, acts))
        .expect("shapes");
    let worst = g
        .values()
        .enumerate()
        .map(|(k, a)| rel_err(*a, central(&actor, k, &loss)))
        .fold(0.0, f64::max);
    if worst > FD_TOL {
        rep.failures.push(format!("policy path: relative error {worst:e}"));
    }
}

/// Analytic against central finite differences: `cases` actor networks,
/// `cases` critic networks and `cases` actor-through-critic losses.
pub fn gradient_suite(cases: usize, seed: u64) -> SuiteReport {
    let mut rep = SuiteReport::new("gradients vs finite differences");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for c in 0..cases {
        let h = rng.random_range(2..=16);
        check_network(&mut rng, &[2, h, h, 2], &format!("actor case {c}"), &mut rep);
        check_network(&mut rng, &[4, h, h, 1], &format!("critic case {c}"), &mut rep);
        check_policy_path(&mut rng, h, &mut rep);
        rep.cases += 1;
    }
    rep
}

/// `tau` in {0, 0.25, 1}: copy, exact quarter blend, fixed point.
pub fn soft_update_suite(seed: u64) -> SuiteReport {
    let mut rep = SuiteReport::new("soft update algebra");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for c in 0..20 {
        let sizes = [4, 64, 64, 1];
        let b = MlpParams::init(&sizes, Init::Uniform { range: 2.0 }, &mut rng);
        let t = MlpParams::init(&sizes, Init::Uniform { range: 2.0 }, &mut rng);
        rep.cases += 1;
        if soft_update(&b, &t, 0.0).unwrap() != b {
            rep.failures.push(format!("case {c}: tau = 0 is not a copy"));
        }
        if soft_update(&b, &t, 1.0).unwrap() != t {
            rep.failures.push(format!("case {c}: tau = 1 moved the target"));
        }
        let q = soft_update(&b, &t, 0.25).unwrap();
        let exact = q
            .values()
            .zip(b.values().zip(t.values()))
            .all(|(q, (b, t))| *q == 0.75 * b + 0.25 * t);
        if !exact {
            rep.failures.push(format!("case {c}: tau = 0.25 blend inexact"));
        }
    }
    rep
}

/// Filtered training run: executed schedule audit and reward recomputation
/// at every step.
pub fn training_invariant_suite(cfg: &ExperimentConfig) -> SuiteReport {
    let mut rep = SuiteReport::new("training invariants");
    let out = match run_training(cfg) {
        Ok(out) => out,
        Err(e) => {
            rep.failures.push(e.to_string());
            return rep;
        }
    };
    rep.cases = out.records.len();
    if !out.audit.is_clean() {
        rep.failures.push(format!("schedule audit: {:?}", out.audit));
    }
    for r in &out.records {
        for (i, u) in cfg.units.iter().enumerate() {
            if r.rewards[i] != compute_reward(r.price, r.gen[i], u, r.applied[i]) {
                rep.failures.push(format!("step {} unit {}: reward mismatch", r.t, i + 1));
            }
        }
    }
    rep
}

/// All oracle suites at their acceptance sizes, then the invariant suite on
/// `cfg`.
pub fn run_all(seed: u64, cfg: &ExperimentConfig) -> Vec<SuiteReport> {
    vec![
        dispatch_suite(500, seed),
        filter_suite(200, seed),
        big_m_suite(),
        gradient_suite(100, seed),
        soft_update_suite(seed),
        training_invariant_suite(cfg),
    ]
}
