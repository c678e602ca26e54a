use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn norm() -> StateNorm {
    StateNorm {
        price_scale: 6.5,
        demand_scale: 335.0,
    }
}

fn small_hyper() -> DdpgHyper {
    DdpgHyper {
        hidden: vec![8, 8],
        batch_size: 4,
        buffer_capacity: 16,
        ..DdpgHyper::default()
    }
}

fn brain(seed: u64) -> AgentBrain {
    AgentBrain::new(&small_hyper(), 2.0, norm(), &mut rng(seed))
}

fn experience(r: &mut ChaCha8Rng) -> Experience {
    Experience {
        state: [r.random_range(1.0..6.5), r.random_range(60.0..160.0)],
        next_state: [r.random_range(1.0..6.5), r.random_range(60.0..160.0)],
        maint: r.random(),
        bid: r.random_range(1.0..2.0),
        reward: r.random_range(-150.0..150.0),
    }
}

/// Actor whose bid head is exactly `bias` and whose logit is zero.
fn constant_actor(brain: &mut AgentBrain, bias: f64) {
    for v in brain.actor.values_mut() {
        *v = 0.0;
    }
    brain.actor.layers.last_mut().unwrap().biases[0] = bias;
}

#[test]
fn bid_clipped_above() {
    let mut b = brain(1);
    constant_actor(&mut b, 5.0);
    let a = select_action(&b, [2.0, 100.0], false, &mut rng(0));
    assert_eq!(a.bid, 2.0);
}

#[test]
fn bid_clipped_below() {
    let mut b = brain(1);
    constant_actor(&mut b, 0.3);
    let a = select_action(&b, [2.0, 100.0], false, &mut rng(0));
    assert_eq!(a.bid, 1.0);
}

#[test]
fn greedy_action_is_repeatable() {
    let b = brain(2);
    let a1 = select_action(&b, [3.0, 120.0], false, &mut rng(5));
    let a2 = select_action(&b, [3.0, 120.0], false, &mut rng(6));
    assert_eq!(a1, a2);
}

#[test]
fn explored_actions_stay_in_bounds() {
    let mut b = brain(3);
    b.sigma = 5.0;
    let mut r = rng(7);
    for _ in 0..2000 {
        let a = select_action(&b, [r.random_range(0.0..7.0), 100.0], true, &mut r);
        assert!((1.0..=2.0).contains(&a.bid));
    }
}

#[test]
fn critic_at_target_is_fixed_point() {
    let mut b = brain(4);
    // zero critic and target critic: with zero reward the target is zero too
    for net in [&mut b.critic, &mut b.target_critic] {
        for v in net.values_mut() {
            *v = 0.0;
        }
    }
    let mut r = rng(8);
    let batch: Vec<_> = (0..4)
        .map(|_| Experience {
            reward: 0.0,
            ..experience(&mut r)
        })
        .collect();
    let before = b.critic.clone();
    let loss = critic_update(&mut b, &batch).unwrap();
    assert_eq!(loss, 0.0);
    assert_eq!(b.critic, before);
}

#[test]
fn zero_discount_targets_reward() {
    let mut b = brain(5);
    b.hyper.gamma = 0.0;
    let mut r = rng(9);
    let batch: Vec<_> = (0..4).map(|_| experience(&mut r)).collect();
    let q: Vec<f64> = batch
        .iter()
        .map(|e| b.critic.forward(&critic_input(&b.norm, e.state, e.maint as u8 as f64, e.bid)).unwrap()[0])
        .collect();
    let want: f64 = batch
        .iter()
        .zip(&q)
        .map(|(e, q)| (q - b.hyper.reward_scale * e.reward).powi(2))
        .sum::<f64>()
        / 4.0;
    let loss = critic_update(&mut b, &batch).unwrap();
    assert!((loss - want).abs() < 1e-12);
}

#[test]
fn single_sample_descent() {
    let hyper = DdpgHyper {
        hidden: vec![1, 1],
        batch_size: 1,
        buffer_capacity: 1,
        gamma: 0.0,
        critic_lr: 1e-2,
        ..DdpgHyper::default()
    };
    let mut b = AgentBrain::new(&hyper, 2.0, norm(), &mut rng(10));
    for net in [&mut b.critic] {
        for v in net.values_mut() {
            *v = 0.5;
        }
    }
    let e = Experience {
        state: [2.0, 100.0],
        next_state: [2.0, 100.0],
        maint: false,
        bid: 1.5,
        reward: 300.0,
    };
    let before = critic_update(&mut b, std::slice::from_ref(&e)).unwrap();
    let after = critic_update(&mut b, std::slice::from_ref(&e)).unwrap();
    assert!(after < before, "{after} !< {before}");
}

#[test]
fn targets_untouched_by_critic_update() {
    let mut b = brain(11);
    let (ta, tc) = (b.target_actor.clone(), b.target_critic.clone());
    let mut r = rng(12);
    let batch: Vec<_> = (0..4).map(|_| experience(&mut r)).collect();
    critic_update(&mut b, &batch).unwrap();
    actor_update(&mut b, &batch).unwrap();
    assert_eq!(b.target_actor, ta);
    assert_eq!(b.target_critic, tc);
    assert_ne!(b.critic, tc);
}

#[test]
fn constant_critic_leaves_actor() {
    let mut b = brain(13);
    for v in b.critic.values_mut() {
        *v = 0.0;
    }
    b.critic.layers.last_mut().unwrap().biases[0] = 3.0;
    let before = b.actor.clone();
    let mut r = rng(14);
    let batch: Vec<_> = (0..4).map(|_| experience(&mut r)).collect();
    let loss = actor_update(&mut b, &batch).unwrap();
    assert_eq!(loss, -3.0);
    assert_eq!(b.actor, before);
}

#[test]
fn actor_climbs_quadratic() {
    let mut actor = MlpParams::init(&[2, 8, 8, 2], Init::Uniform { range: 0.1 }, &mut rng(15));
    for v in actor.layers.last_mut().unwrap().weights.iter_mut() {
        *v = 0.0;
    }
    actor.layers.last_mut().unwrap().biases = vec![0.0, 0.0];
    let states = [0.3, 0.4];
    let head = |a: &MlpParams| a.forward(&states).unwrap()[0];
    assert_eq!(head(&actor), 0.0);
    let mut last = f64::INFINITY;
    for _ in 0..2000 {
        let loss = policy_gradient_step(&mut actor, &states, 1, 1e-2, |acts| {
            let k = acts[0];
            Ok((vec![-(k - 2.0).powi(2)], vec![-2.0 * (k - 2.0), 0.0]))
        })
        .unwrap();
        assert!(loss <= last + 1e-12);
        last = loss;
    }
    assert!((head(&actor) - 2.0).abs() < 1e-3, "{}", head(&actor));
}

#[test]
fn actor_loss_is_negated_mean_q() {
    let mut b = brain(16);
    let mut r = rng(17);
    let batch: Vec<_> = (0..4).map(|_| experience(&mut r)).collect();
    let want = -batch
        .iter()
        .map(|e| {
            let out = b.actor.forward(&b.norm.apply(e.state)).unwrap();
            b.critic
                .forward(&critic_input(&b.norm, e.state, sigmoid(out[1]), out[0]))
                .unwrap()[0]
        })
        .sum::<f64>()
        / 4.0;
    let loss = actor_update(&mut b, &batch).unwrap();
    assert!((loss - want).abs() < 1e-12);
}

#[test]
fn empty_batch_rejected() {
    let mut b = brain(18);
    assert!(matches!(critic_update(&mut b, &[]), Err(DdpgError::InsufficientSamples { .. })));
    assert!(matches!(actor_update(&mut b, &[]), Err(DdpgError::InsufficientSamples { .. })));
}

#[test]
fn soft_update_moves_toward_behaviour() {
    let mut r = rng(19);
    let a = MlpParams::init(&[3, 4, 2], Init::Uniform { range: 1.0 }, &mut r);
    let t = MlpParams::init(&[3, 4, 2], Init::Uniform { range: 1.0 }, &mut r);
    let s = soft_update(&a, &t, 0.3).unwrap();
    for ((a, t), s) in a.values().zip(t.values()).zip(s.values()) {
        if a != t {
            assert!((s - a).abs() < (t - a).abs());
        }
    }
}

#[test]
fn learn_waits_for_full_batch() {
    let mut b = brain(20);
    let mut r = rng(21);
    for _ in 0..3 {
        b.replay.push(experience(&mut r));
    }
    assert!(b.learn(&mut r).unwrap().is_none());
    b.replay.push(experience(&mut r));
    let before = b.target_critic.clone();
    assert!(b.learn(&mut r).unwrap().is_some());
    assert_ne!(b.target_critic, before);
}

#[test]
fn replay_fifo_eviction() {
    let mut buf = ReplayBuffer::new(2);
    let mut r = rng(22);
    let items: Vec<_> = (0..3).map(|_| experience(&mut r)).collect();
    for e in &items {
        buf.push(e.clone());
    }
    assert_eq!(buf.len(), 2);
    assert_eq!(buf.get(0), Some(&items[1]));
    assert_eq!(buf.get(1), Some(&items[2]));
    assert_eq!(buf.pushes(), 3);
}

#[test]
fn replay_sampling() {
    let mut buf = ReplayBuffer::new(10_000);
    let mut r = rng(23);
    for _ in 0..150 {
        buf.push(experience(&mut r));
    }
    let a = buf.sample_indices(100, &mut rng(1)).unwrap();
    let b = buf.sample_indices(100, &mut rng(1)).unwrap();
    assert_eq!(a, b);
    assert_eq!(buf.sample(100, &mut rng(2)).unwrap().len(), 100);
    assert!(buf.sample(151, &mut rng(2)).is_err());
}

#[test]
fn checkpoint_round_trip() {
    let mut b = brain(24);
    let mut r = rng(25);
    for _ in 0..6 {
        b.replay.push(experience(&mut r));
    }
    b.learn(&mut r).unwrap();
    b.sigma = 0.123;
    let mut bytes = Vec::new();
    save_checkpoint(&b, &mut bytes).unwrap();
    let ck = load_checkpoint(bytes.as_slice()).unwrap();
    let mut fresh = brain(99);
    ck.restore_into(&mut fresh).unwrap();
    for (x, y) in [
        (&fresh.actor, &b.actor),
        (&fresh.target_actor, &b.target_actor),
        (&fresh.critic, &b.critic),
        (&fresh.target_critic, &b.target_critic),
    ] {
        assert!(x.values().zip(y.values()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
    assert_eq!((ck.replay_len, ck.replay_pushes, ck.replay_capacity), (6, 6, 16));
    assert_eq!(fresh.sigma, 0.123);

    let mut again = Vec::new();
    save_checkpoint(&fresh, &mut again).unwrap();
    assert_eq!(&again[..again.len() - 32], &bytes[..bytes.len() - 32]);
}

#[test]
fn checkpoint_rejects_garbage() {
    assert!(load_checkpoint(&b"NOTMAGIC...."[..]).is_err());
    let mut bytes = Vec::new();
    save_checkpoint(&brain(1), &mut bytes).unwrap();
    bytes[8] = 9;
    assert!(matches!(load_checkpoint(bytes.as_slice()), Err(DdpgError::Checkpoint(_))));
    let mut bytes = Vec::new();
    save_checkpoint(&brain(1), &mut bytes).unwrap();
    assert!(load_checkpoint(&bytes[..bytes.len() - 3]).is_err());
}

#[test]
fn positive_init_range() {
    let hyper = DdpgHyper {
        init: InitMode::Positive,
        ..small_hyper()
    };
    let b = AgentBrain::new(&hyper, 2.0, norm(), &mut rng(26));
    assert!(b.actor.values().chain(b.critic.values()).all(|v| (1.0..=3.0).contains(v)));
}

#[test]
fn hyper_validation() {
    assert!(DdpgHyper::default().violations().is_empty());
    let bad = DdpgHyper {
        gamma: 1.0,
        hidden: vec![64],
        batch_size: 20_000,
        ..DdpgHyper::default()
    };
    assert_eq!(bad.violations().len(), 3);
    assert_eq!(DdpgHyper::default().noise_at(0.5), 0.16);
}
