use super::*;
use crate::config::{table1_units, LearnerKind};
use crate::safety::audit_schedule;

fn small_cfg(episodes: usize, steps: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        episodes,
        steps_per_episode: steps,
        ..ExperimentConfig::default()
    };
    cfg.ddpg.hidden = vec![16, 16];
    cfg.ddpg.batch_size = 8;
    cfg
}

fn fixed(bid: f64, maint: [bool; 6]) -> Vec<Action> {
    maint.iter().map(|&m| Action { maint: m, bid }).collect()
}

#[test]
fn reward_examples() {
    let u = table1_units();
    assert_eq!(compute_reward(3.0, 0.0, &u[0], false), 0.0);
    assert_eq!(compute_reward(1.75, 5.0, &u[0], false), -1.25);
    assert_eq!(compute_reward(1.75, 50.0, &u[2], false), 37.5);
    assert_eq!(compute_reward(1.75, 0.0, &u[2], true), -142.0);
}

#[test]
fn demand_inside_band_and_stable() {
    let cfg = ExperimentConfig::default();
    for t in 1..5000 {
        let d = demand_profile(t, &cfg, 0).unwrap();
        assert!((60.0..=160.0).contains(&d), "{d}");
        assert_eq!(d, demand_profile(t, &cfg, 0).unwrap());
    }
    assert_ne!(demand_profile(3, &cfg, 0).unwrap(), demand_profile(3, &cfg, 1).unwrap());
}

#[test]
fn noiseless_demand_is_sinusoid() {
    let mut cfg = ExperimentConfig::default();
    cfg.demand.noise = 0.0;
    let mean: f64 = (1..=7).map(|t| demand_profile(t, &cfg, 5).unwrap()).sum::<f64>() / 7.0;
    assert!((mean - 110.0).abs() < 1e-9);
    let want = 110.0 + 35.0 * (2.0 * std::f64::consts::PI * 2.0 / 7.0).sin();
    assert!((demand_profile(2, &cfg, 9).unwrap() - want).abs() < 1e-12);
}

#[test]
fn band_outside_feasible_interval() {
    let mut cfg = ExperimentConfig::default();
    cfg.demand.high = 180.0;
    assert!(matches!(demand_profile(1, &cfg, 0), Err(SimError::BadBand { .. })));
}

#[test]
fn step_matches_dispatch_example() {
    let cfg = ExperimentConfig::default();
    let mut world = World::new(&cfg, Shield::Filtered).unwrap();
    // pin demand at 150 with a degenerate band
    world.demand = DemandModel::new(
        &crate::config::DemandConfig {
            low: 150.0,
            high: 150.0,
            ..Default::default()
        },
        cfg.feasible_band(),
        0,
    )
    .unwrap();
    let out = env_step(&mut world, &fixed(1.0, [false; 6])).unwrap();
    assert_eq!(out.record.gen, vec![5.0, 80.0, 50.0, 5.0, 5.0, 5.0]);
    assert_eq!(out.record.price, 1.75);
    let units = table1_units();
    let want: Vec<f64> = (0..6).map(|i| (1.75 - units[i].marginal_cost) * out.record.gen[i]).collect();
    assert_eq!(out.rewards, want);
    assert_eq!(out.next_state, [1.75, 150.0]);
    assert_eq!(world.safety.t, 2);
}

#[test]
fn cap_enforced_on_heavy_request() {
    let cfg = ExperimentConfig::default();
    let mut world = World::new(&cfg, Shield::Filtered).unwrap();
    let out = env_step(&mut world, &fixed(1.5, [true, true, true, true, false, false])).unwrap();
    assert!(out.record.applied.iter().filter(|&&b| b).count() <= 2);
    assert!(out.record.distance >= 2);
}

#[test]
fn steps_are_deterministic() {
    let cfg = ExperimentConfig::default();
    let actions = fixed(1.25, [true, false, false, true, false, true]);
    let mut a = World::new(&cfg, Shield::Filtered).unwrap();
    let mut b = World::new(&cfg, Shield::Filtered).unwrap();
    for _ in 0..2 {
        assert_eq!(env_step(&mut a, &actions).unwrap().record, env_step(&mut b, &actions).unwrap().record);
    }
}

#[test]
fn wrong_action_count() {
    let cfg = ExperimentConfig::default();
    let mut w = World::new(&cfg, Shield::Filtered).unwrap();
    assert!(matches!(
        env_step(&mut w, &[Action { maint: false, bid: 1.0 }]),
        Err(SimError::ActionCount { .. })
    ));
}

#[test]
fn bypass_without_requests_is_clean() {
    let cfg = ExperimentConfig::default();
    let mut w = World::new(&cfg, Shield::Bypass).unwrap();
    let trace: Vec<Vec<bool>> = (0..50)
        .map(|_| env_step(&mut w, &fixed(1.0, [false; 6])).unwrap().record.applied)
        .collect();
    let audit = audit_schedule(&trace, &cfg.filter_config());
    assert_eq!(audit.cap_violations, 0);
    assert_eq!(audit.coverage_violations, 0);
}

#[test]
fn bypass_executes_requests_and_trims_demand() {
    let cfg = ExperimentConfig::default();
    let mut w = World::new(&cfg, Shield::Bypass).unwrap();
    let out = env_step(&mut w, &fixed(1.0, [true; 6])).unwrap();
    assert_eq!(out.record.applied, vec![true; 6]);
    assert_eq!(out.record.gen, vec![0.0; 6]);
    assert_eq!(out.record.unserved, out.record.demand);
    assert_eq!(out.record.price, 0.0);
}

#[test]
fn smallest_run() {
    let out = run_training(&small_cfg(1, 2)).unwrap();
    assert_eq!(out.records.len(), 2);
    assert!(out.records.iter().all(|r| r.rewards.len() == 6));
    assert!(out.audit.is_clean());
    assert_eq!(out.episodes.len(), 1);
}

#[test]
fn episode_average_and_reward_audit() {
    let cfg = small_cfg(3, 10);
    let out = run_training(&cfg).unwrap();
    for m in &out.episodes {
        let steps: Vec<_> = out.records.iter().filter(|r| r.episode == m.episode).collect();
        assert_eq!(steps.len(), 10);
        for i in 0..6 {
            let mean = steps.iter().map(|r| r.rewards[i]).sum::<f64>() / 10.0;
            assert!((mean - m.avg_reward[i]).abs() < 1e-12);
        }
    }
    for r in &out.records {
        for i in 0..6 {
            assert_eq!(r.rewards[i], compute_reward(r.price, r.gen[i], &cfg.units[i], r.applied[i]));
            assert!((1.0..=2.0).contains(&r.bids[i]));
        }
    }
    // the clock keeps running across episodes
    let ts: Vec<u64> = out.records.iter().map(|r| r.t).collect();
    assert_eq!(ts, (1..=30).collect::<Vec<_>>());
}

#[test]
fn trace_replay_reproduces_prices() {
    let cfg = small_cfg(2, 10);
    let out = run_training(&cfg).unwrap();
    let mut w = World::new(&cfg, Shield::Filtered).unwrap();
    for r in &out.records {
        w.episode = r.episode;
        let actions: Vec<Action> = (0..6)
            .map(|i| Action {
                maint: r.requested[i],
                bid: r.bids[i],
            })
            .collect();
        assert_eq!(&env_step(&mut w, &actions).unwrap().record, r);
    }
}

#[test]
fn runs_are_deterministic_and_written() {
    let cfg = small_cfg(2, 15);
    let a = run_training(&cfg).unwrap();
    let b = run_training(&cfg).unwrap();
    assert_eq!(a.records, b.records);
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_artifacts(&a, 6, da.path()).unwrap();
    write_artifacts(&b, 6, db.path()).unwrap();
    for f in [METRICS_FILE, TRACE_FILE, RASTER_FILE] {
        let x = std::fs::read(da.path().join(f)).unwrap();
        assert_eq!(x, std::fs::read(db.path().join(f)).unwrap());
    }
    let trace = std::fs::read_to_string(da.path().join(TRACE_FILE)).unwrap();
    let header = trace.lines().next().unwrap();
    assert!(header.starts_with("episode,t,k_1,u_req_1,u_f_1,g_1,r_1,k_2"));
    assert!(header.ends_with("r_6,price,demand,filter_distance"));
    assert_eq!(trace.lines().count(), 31);
}

#[test]
fn ablation_shares_demand_trace() {
    let cfg = small_cfg(1, 20);
    let safe = run_training(&cfg).unwrap();
    let unsafe_run = run_unsafe_ablation(&cfg).unwrap();
    let d1: Vec<f64> = safe.records.iter().map(|r| r.demand).collect();
    let d2: Vec<f64> = unsafe_run.records.iter().map(|r| r.demand).collect();
    assert_eq!(d1, d2);
}

#[test]
fn q_learners_run() {
    let mut cfg = small_cfg(2, 10);
    cfg.learner = LearnerKind::Qlearn;
    let out = run_training(&cfg).unwrap();
    assert!(out.audit.is_clean());
    for r in &out.records {
        assert!(r.bids.iter().all(|k| [1.0, 1.25, 1.5, 1.75, 2.0].contains(k)));
    }
}

#[test]
fn smoothing() {
    assert_eq!(smoothed(&[1.0, 3.0, 5.0, 7.0], 2), vec![1.0, 2.0, 4.0, 6.0]);
}
