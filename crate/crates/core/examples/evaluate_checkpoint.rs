//! Saves an actor checkpoint, reloads it against the environment's
//! observation layout and runs it frozen, greedy and sampled.
//!
//! cargo run --release --example evaluate_checkpoint

use edgesched::env::{EdgeEnv, WorkloadConfig};
use edgesched::harness::fresh_nets;
use edgesched::model::RewardConfig;
use edgesched::ndiff::Checkpoint;
use edgesched::policy::{Actor, ActorVariant, NetDims, ObsDims};
use edgesched::rng::{SeedStreams, SAMPLING};
use edgesched::sac::{run_actor_episode, ActMode};

fn main() -> edgesched::Result<()> {
    let seed = 4;
    let mut env = EdgeEnv::new(WorkloadConfig::default(), RewardConfig::default(), seed)?;
    let dims = ObsDims::of(&env.reset(0)?);
    let (actor, _) = fresh_nets(ActorVariant::GruOnly, dims, &NetDims::default(), seed);

    let path = std::env::temp_dir().join("edgesched_actor.ckpt");
    actor.to_checkpoint().save(&path)?;
    let mut actor = Actor::from_checkpoint(&Checkpoint::load(&path)?, Some(dims))?;
    println!("reloaded a {} actor with {} parameters", actor.variant(), actor.params.count());

    let mut rng = SeedStreams::new(seed).stream(SAMPLING);
    for mode in [ActMode::Greedy, ActMode::Sample] {
        let m = run_actor_episode(&mut env, &mut actor, 0, mode, &mut rng)?;
        println!("{mode:?}: reward {:.4}, on-time {:.3}, violations {}", m.mean_reward, m.on_time_ratio, m.violations);
    }

    // the same checkpoint refuses an environment with a different node count
    let other = WorkloadConfig {
        node_count: 7,
        ..WorkloadConfig::default()
    };
    let mut env7 = EdgeEnv::new(other, RewardConfig::default(), seed)?;
    let dims7 = ObsDims::of(&env7.reset(0)?);
    match Actor::from_checkpoint(&Checkpoint::load(&path)?, Some(dims7)) {
        Err(e) => println!("7-node environment: {e}"),
        Ok(_) => unreachable!("dimension check"),
    }
    Ok(())
}
