//! Behavior-clones an actor, then fine-tunes it with masked discrete SAC
//! and compares the final episodes with the expert on the same workloads.
//!
//! cargo run --release --example sac_finetune -- [seed] [episodes]

use edgesched::bc::bc_train;
use edgesched::env::EdgeEnv;
use edgesched::expert::{collect_demos, run_expert_episode};
use edgesched::harness::{fresh_nets, ExperimentConfig};
use edgesched::policy::ObsDims;
use edgesched::rng::SeedStreams;
use edgesched::sac::SacAgent;

fn main() -> edgesched::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));
    let episodes: usize = args.next().map_or(60, |s| s.parse().expect("episodes"));
    let cfg = ExperimentConfig {
        episodes,
        ..ExperimentConfig::desk()
    };

    let mut env = EdgeEnv::new(cfg.workload.clone(), cfg.reward, seed)?;
    let dims = ObsDims::of(&env.reset(0)?);
    let (mut actor, critics) = fresh_nets(cfg.variant, dims, &cfg.net, seed);
    let (demos, _) = collect_demos(&cfg.workload, &cfg.reward, seed, cfg.demo_episodes)?;
    let bc = bc_train(&mut actor, &demos, &cfg.bc_config(seed))?;
    println!("bc: loss {:.4} -> {:.4}", bc.initial_loss, bc.epochs.last().map_or(f64::NAN, |e| e.train_loss));

    let mut agent = SacAgent::new(actor, critics, cfg.sac_config(), &SeedStreams::new(seed))?;
    let report = agent.train_with(&mut env, 0, |agent, log| {
        if log.episode % 10 == 0 {
            println!(
                "episode {:>4}  reward {:>8.4}  on-time {:.3}  beta {:.2e}  buffer {}",
                log.episode,
                log.mean_reward,
                log.on_time_ratio,
                agent.beta(),
                log.buffer_size
            );
        }
        Ok(())
    })?;

    let tail = cfg.tail.min(episodes);
    let mut expert = 0.0;
    for e in episodes - tail..episodes {
        expert += run_expert_episode(&mut env, e as u64)?.mean_reward;
    }
    println!(
        "final {tail} episodes: bc+sac {:.4}, expert {:.4}",
        report.tail_mean(tail),
        expert / tail as f64
    );
    Ok(())
}
