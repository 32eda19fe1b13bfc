//! Saves a topology and a few generated episodes as a text trace, reloads
//! it and replays one episode under the expert, reproducing the original
//! metrics exactly.

use edgesched::env::trace::Trace;
use edgesched::env::{EdgeEnv, WorkloadConfig};
use edgesched::expert::{expert_step, run_expert_episode};
use edgesched::model::RewardConfig;

fn main() -> edgesched::Result<()> {
    let cfg = WorkloadConfig {
        slots_per_episode: 10,
        ..WorkloadConfig::default()
    };
    let mut env = EdgeEnv::new(cfg.clone(), RewardConfig::default(), 11)?;
    let trace = Trace {
        topology: env.topology().clone(),
        episodes: (0..3).map(|e| env.generate(e).map(|w| (e, w))).collect::<edgesched::Result<_>>()?,
    };
    let path = std::env::temp_dir().join("edgesched_trace.txt");
    trace.save(&path)?;
    let loaded = Trace::load(&path)?;
    println!("trace with {} episodes, {} tasks in the first", loaded.episodes.len(), loaded.episodes[0].1.task_count());

    let original = run_expert_episode(&mut env, 2)?;
    let mut replay = EdgeEnv::with_topology(cfg, RewardConfig::default(), 0, loaded.topology)?;
    replay.reset_with(loaded.episodes[2].1.clone())?;
    while !replay.is_done() {
        while !replay.slot_complete() {
            expert_step(&mut replay)?;
        }
        replay.settle_slot()?;
    }
    let again = replay.episode_metrics();
    println!("original reward {:.6}, replayed {:.6}", original.mean_reward, again.mean_reward);
    assert_eq!(original.total_reward, again.total_reward);
    Ok(())
}
