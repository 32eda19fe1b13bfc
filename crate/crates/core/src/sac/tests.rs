use super::*;
use crate::env::WorkloadConfig;
use crate::model::RewardConfig;
use crate::ndiff::gradient_check;
use crate::policy::{make_actor, ActorVariant, NetDims};
use crate::rng::NET_INIT;
use rand::SeedableRng;

fn small_nets() -> NetDims {
    NetDims {
        hidden: 6,
        embed: 4,
        actor_head: vec![8, 5],
        critic_head: vec![6, 4],
    }
}

fn toy_dims() -> ObsDims {
    ObsDims {
        nodes: 3,
        node_state: 4,
        ms_state: 2,
    }
}

fn toy_obs(rng: &mut ChaCha8Rng, mask: Vec<bool>) -> SlotObservation {
    let d = toy_dims();
    SlotObservation {
        node_state: (0..d.node_state).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        ms_state: (0..d.ms_state).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        mask,
        slot_index: 0,
        task_index: 0,
    }
}

fn toy_transition(rng: &mut ChaCha8Rng, hidden: usize, reward: f64, done: bool) -> Transition {
    let obs = toy_obs(rng, vec![true, true, false]);
    let next_obs = toy_obs(rng, vec![true, false, true]);
    Transition {
        mask: obs.mask.clone(),
        obs,
        hidden: (0..hidden).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        action: 1,
        reward,
        next_mask: next_obs.mask.clone(),
        next_obs,
        next_hidden: vec![0.0; hidden],
        done,
    }
}

fn toy_nets(seed: u64) -> (Actor, CriticPair) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = make_actor(ActorVariant::Hybrid, toy_dims(), &small_nets(), &mut rng);
    let c = CriticPair::new(toy_dims(), &small_nets(), &mut rng);
    (a, c)
}

/// Sets every critic output to `q` regardless of input.
fn constant_critic(ps: &mut ParamSet, q: &[f64]) {
    let last = ps.len() - 1;
    for t in ps.tensors_mut() {
        t.data.fill(0.0);
    }
    ps.get_mut(last).data.copy_from_slice(q);
}

#[test]
fn soft_value_examples() {
    assert_eq!(soft_value(&[0.5, 0.5], &[0.5f64.ln(); 2], &[1.0, 3.0], 0.0), 2.0);
    let v = soft_value(&[0.5, 0.5], &[0.5f64.ln(); 2], &[2.0, 2.0], 1.0);
    assert!((v - (2.0 + 2f64.ln())).abs() < 1e-15);
    for beta in [0.0, 0.3, 7.0] {
        let v = soft_value(&[0.0, 1.0, 0.0], &[f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY], &[9.0, -4.0, 5.0], beta);
        assert_eq!(v, -4.0);
    }
}

#[test]
fn bootstrapped_target_arithmetic() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (a, mut c) = toy_nets(2);
    for t in &mut c.target {
        constant_critic(t, &[2.0, 2.0, 2.0]);
    }
    let live = toy_transition(&mut rng, a.hidden_dim(), 1.0, false);
    let done = toy_transition(&mut rng, a.hidden_dim(), -3.5, true);
    let batch = Minibatch::new(&[&live, &done]).unwrap();
    let y = critic_targets(&a, &c, &batch, 0.0, 0.98);
    assert!((y[0] - 2.96).abs() < 1e-12, "{}", y[0]);
    assert_eq!(y[1], -3.5);
}

#[test]
fn soft_target_uses_the_stored_next_mask() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (a, mut c) = toy_nets(4);
    for t in &mut c.target {
        // the masked-out middle action would dominate if it leaked in
        constant_critic(t, &[1.0, 100.0, 1.0]);
    }
    let t = toy_transition(&mut rng, a.hidden_dim(), 0.0, false);
    let batch = Minibatch::new(&[&t]).unwrap();
    let beta = 0.2;
    let (p, lp) = policy_batch(&a, &batch.next, &batch.next_hidden);
    assert_eq!(p.get(0, 1), 0.0);
    let want = 0.98 * (1.0 + beta * entropy(p.row_slice(0), lp.row_slice(0)));
    let y = critic_targets(&a, &c, &batch, beta, 0.98);
    assert!((y[0] - want).abs() < 1e-12);
}

#[test]
fn critic_loss_decreases_on_a_frozen_batch() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (a, mut c) = toy_nets(6);
    let t = toy_transition(&mut rng, a.hidden_dim(), 1.0, false);
    let batch = Minibatch::new(&[&t]).unwrap();
    let y = critic_targets(&a, &c, &batch, 0.01, 0.98);
    let mut prev = [f64::INFINITY; 2];
    for _ in 0..50 {
        let l = critic_update(&mut c, &batch, &y, 3e-4).unwrap();
        for j in 0..2 {
            assert!(l[j] < prev[j], "{} !< {}", l[j], prev[j]);
        }
        prev = l;
    }
}

#[test]
fn critic_update_leaves_targets_alone() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (a, mut c) = toy_nets(8);
    let before = c.target.clone();
    let t = toy_transition(&mut rng, a.hidden_dim(), 1.0, false);
    let batch = Minibatch::new(&[&t]).unwrap();
    critic_update(&mut c, &batch, &[1.0], 1e-2).unwrap();
    assert_eq!(c.target, before);
    assert_ne!(c.online[0].params, before[0]);
}

#[test]
fn actor_moves_toward_the_dominant_action() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut a, mut c) = toy_nets(10);
    for j in 0..2 {
        constant_critic(&mut c.online[j].params, &[0.0, 5.0, 0.0]);
    }
    let t = toy_transition(&mut rng, a.hidden_dim(), 0.0, false);
    let batch = Minibatch::new(&[&t]).unwrap();
    let before = policy_batch(&a, &batch.obs, &batch.hidden).0;
    let critics_before = c.clone();
    actor_update(&mut a, &c, &batch, 0.0, 1e-3).unwrap();
    let after = policy_batch(&a, &batch.obs, &batch.hidden).0;
    assert!(after.get(0, 1) > before.get(0, 1));
    assert_eq!(after.get(0, 2), 0.0);
    assert_eq!(c, critics_before);
}

#[test]
fn masked_actions_add_nothing_to_the_actor_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (a, c) = toy_nets(12);
    let t = toy_transition(&mut rng, a.hidden_dim(), 0.0, false);
    let batch = Minibatch::new(&[&t]).unwrap();
    let loss_with = |q: Tensor| {
        let mut tape = Tape::new();
        let p = bind(&mut tape, &a.params);
        let h = tape.constant(batch.hidden.clone());
        let qv = tape.constant(q);
        let (l, _, _) = actor_loss(&mut tape, &a, &p, &batch.obs, h, qv, 0.3);
        tape.value(l).scalar()
    };
    let q = c.online_min(&batch.obs.flat());
    let mut huge = q.clone();
    huge.set(0, 2, 1e9);
    assert_eq!(loss_with(q), loss_with(huge));
}

#[test]
fn actor_loss_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for v in ActorVariant::ALL {
        let a = make_actor(v, toy_dims(), &small_nets(), &mut rng);
        let obs: Vec<SlotObservation> = (0..4)
            .map(|i| {
                let mut m = vec![true; 3];
                m[i % 3] = i == 3;
                toy_obs(&mut rng, m)
            })
            .collect();
        let batch = ObsBatch::new(&obs).unwrap();
        let hidden = Tensor::from_vec(4, a.hidden_dim(), (0..4 * a.hidden_dim()).map(|_| rng.gen_range(-0.5..0.5)).collect()).unwrap();
        let q = Tensor::from_vec(4, 3, (0..12).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        let err = gradient_check(a.params.tensors(), 1e-6, 1e-6, |tape, p| {
            let h = tape.constant(hidden.clone());
            let qv = tape.constant(q.clone());
            actor_loss(tape, &a, p, &batch, h, qv, 0.4).0
        });
        assert!(err < 1e-4, "{v}: {err}");
    }
}

#[test]
fn temperature_gradient_sign() {
    let lb = 0.01f64.ln();
    // entropy above target: log beta is pushed down
    assert!(temperature_grad(lb, &[0.9, 1.1], -1.0) > 0.0);
    assert!(temperature_grad(lb, &[-2.0], -1.0) < 0.0);
    assert_eq!(temperature_grad(lb, &[-1.0, -1.0], -1.0), 0.0);
    let g = temperature_grad(lb, &[0.5], -1.0);
    assert!((g - 0.01 * 1.5).abs() < 1e-15);

    let mut ps = ParamSet::new();
    ps.add("log_beta", Tensor::row(&[lb]));
    temperature_update(&mut ps, &[1.0], -1.0, 1e-2).unwrap();
    assert!(ps.get(0).scalar() < lb);
}

#[test]
fn defaults_follow_the_hyperparameter_table() {
    let c = SACConfig::default();
    assert_eq!((c.gamma, c.tau), (0.98, 0.005));
    assert_eq!((c.lr_actor, c.lr_critic, c.lr_temp), (1e-5, 3e-4, 1e-4));
    assert!((c.init_log_beta.exp() - 0.01).abs() < 1e-15);
    assert_eq!(c.target_entropy, -1.0);
    assert_eq!((c.batch_size, c.min_buffer, c.buffer_capacity), (3000, 1500, 22_000));
    assert_eq!(c.update_threshold(), 3000);
    assert!(c.validate().is_ok());
    assert!(SACConfig::desk().validate().is_ok());
    for bad in [
        SACConfig { gamma: 1.0, ..c.clone() },
        SACConfig { tau: 0.0, ..c.clone() },
        SACConfig { lr_critic: -1.0, ..c.clone() },
        SACConfig { buffer_capacity: 100, ..c.clone() },
        SACConfig { batch_size: 0, ..c.clone() },
    ] {
        assert!(matches!(bad.validate(), Err(Error::Config { .. })));
    }
}

#[test]
fn target_gap_contracts_geometrically() {
    let (_, mut c) = toy_nets(14);
    for t in c.online[1].params.tensors_mut() {
        t.data.iter_mut().for_each(|v| *v -= 0.3);
    }
    let d0 = c.target[1].max_abs_diff(&c.online[1].params);
    let tau = 0.05;
    for k in 1..=20 {
        c.ema_update(tau).unwrap();
        let d = c.target[1].max_abs_diff(&c.online[1].params);
        assert!((d - d0 * (1.0 - tau).powi(k)).abs() < 1e-12);
    }
}

fn tiny_env(seed: u64) -> EdgeEnv {
    let cfg = WorkloadConfig {
        node_count: 3,
        tasks_per_slot: [2, 4],
        slots_per_episode: 6,
        ..WorkloadConfig::default()
    };
    EdgeEnv::new(cfg, RewardConfig::default(), seed).unwrap()
}

fn tiny_cfg() -> SACConfig {
    SACConfig {
        batch_size: 16,
        min_buffer: 32,
        buffer_capacity: 400,
        updates_per_episode: Some(3),
        episodes: 6,
        ..SACConfig::default()
    }
}

fn tiny_agent(env: &mut EdgeEnv, cfg: SACConfig, seed: u64) -> SacAgent {
    let dims = ObsDims::of(&env.reset(0).unwrap());
    let streams = SeedStreams::new(seed);
    let mut init = streams.stream(NET_INIT);
    let a = make_actor(ActorVariant::Hybrid, dims, &small_nets(), &mut init);
    let c = CriticPair::new(dims, &small_nets(), &mut init);
    SacAgent::new(a, c, cfg, &streams).unwrap()
}

#[test]
fn transitions_carry_settled_rewards_and_successors() {
    let mut env = tiny_env(3);
    let mut agent = tiny_agent(&mut env, tiny_cfg(), 1);
    let m = agent.collect_episode(&mut env, 0).unwrap();
    let n = agent.buffer.len();
    assert_eq!(n, m.tasks);
    let items: Vec<&Transition> = (0..n).map(|i| agent.buffer.get(i)).collect();

    let mut k = 0;
    for slot in env.outcomes() {
        let stored: f64 = items[k..k + slot.tasks.len()].iter().map(|t| t.reward).sum();
        let direct: f64 = slot.tasks.iter().map(|t| t.reward).sum();
        assert_eq!(stored, direct);
        assert_eq!(direct, slot.reward_sum);
        for (t, o) in items[k..].iter().zip(&slot.tasks) {
            assert_eq!(t.action, o.node);
            assert!(t.mask[t.action]);
        }
        k += slot.tasks.len();
    }

    for i in 0..n {
        let t = items[i];
        assert_eq!(t.done, i == n - 1);
        if i + 1 < n {
            let next = items[i + 1];
            assert_eq!(t.next_obs, next.obs);
            assert_eq!(t.next_mask, next.mask);
            assert_eq!(t.next_hidden, next.hidden);
        }
        // a slot opens from a zero state
        if t.obs.task_index == 0 {
            assert!(t.hidden.iter().all(|&h| h == 0.0));
        }
    }
    // replaying the stored hidden states reproduces the acting distribution
    for t in &items {
        let (_, h) = agent.actor.actor_forward(&t.obs, &t.hidden).unwrap();
        if !t.done && t.next_obs.task_index > 0 {
            assert_eq!(h, t.next_hidden);
        }
    }
}

#[test]
fn seeded_training_is_reproducible() {
    let run = || {
        let mut env = tiny_env(4);
        let mut agent = tiny_agent(&mut env, tiny_cfg(), 2);
        let r = agent.train(&mut env, 0).unwrap();
        (format!("{r:?}"), agent.to_checkpoint().to_text())
    };
    let (a, ca) = run();
    let (b, cb) = run();
    assert_eq!(a, b);
    assert_eq!(ca, cb);
}

#[test]
fn training_updates_once_the_buffer_is_warm() {
    let mut env = tiny_env(5);
    let mut agent = tiny_agent(&mut env, tiny_cfg(), 3);
    let before = agent.critics.target.clone();
    let r = agent.train(&mut env, 0).unwrap();
    assert_eq!(r.episodes.len(), 6);
    for e in &r.episodes {
        let warm = e.buffer_size >= 32;
        assert_eq!(e.updates, if warm { 3 } else { 0 });
        assert_eq!(e.critic_loss.is_nan(), !warm);
    }
    assert!(r.episodes.last().unwrap().updates > 0);
    assert_ne!(agent.critics.target, before);
    assert_ne!(agent.beta(), 0.01);
}

#[test]
fn zero_learning_rates_match_frozen_evaluation() {
    let cfg = SACConfig {
        lr_actor: 0.0,
        lr_critic: 0.0,
        lr_temp: 0.0,
        ..tiny_cfg()
    };
    let mut env = tiny_env(6);
    let mut agent = tiny_agent(&mut env, cfg, 4);
    let mut frozen = agent.actor.clone();
    let r = agent.train(&mut env, 10).unwrap();
    assert_eq!(agent.actor.params.tensors(), frozen.params.tensors());

    let mut rng = SeedStreams::new(4).stream(SAMPLING);
    let mut env2 = tiny_env(6);
    for (i, e) in r.episodes.iter().enumerate() {
        let m = run_actor_episode(&mut env2, &mut frozen, 10 + i as u64, ActMode::Sample, &mut rng).unwrap();
        assert_eq!(m.mean_reward, e.mean_reward);
        assert_eq!(m.total_energy, e.total_energy);
    }
}

#[test]
fn mismatched_environment_is_a_config_error() {
    let mut env = tiny_env(7);
    let mut agent = tiny_agent(&mut env, tiny_cfg(), 5);
    let cfg = WorkloadConfig {
        node_count: 4,
        ..env.config().clone()
    };
    let mut other = EdgeEnv::new(cfg, RewardConfig::default(), 7).unwrap();
    match agent.train(&mut other, 0) {
        Err(Error::Config { field, reason: message }) => {
            assert_eq!(field, "sac.actor");
            assert!(message.contains("N=4") && message.contains("N=3"), "{message}");
        }
        other => panic!("{other:?}"),
    }
}
