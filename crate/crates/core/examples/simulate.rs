//! Rolls out the greedy expert and a uniform random policy on the same
//! desk-scale workloads and prints the four headline metrics.
//!
//! cargo run --release --example simulate -- [seed] [episodes]

use edgesched::env::{EdgeEnv, EpisodeMetrics, WorkloadConfig};
use edgesched::expert::run_expert_episode;
use edgesched::harness::run_random_episode;
use edgesched::model::RewardConfig;
use edgesched::rng::{SeedStreams, SAMPLING};

fn main() -> edgesched::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));
    let episodes: u64 = args.next().map_or(5, |s| s.parse().expect("episodes"));

    let mut env = EdgeEnv::new(WorkloadConfig::default(), RewardConfig::default(), seed)?;
    for n in &env.topology().nodes {
        println!(
            "node {}: {:.2} GHz, {:.0} GB, {:.0} Mb storage, {:.0} Mbps, comp {:.1} W",
            n.id, n.total_cpu, n.total_memory, n.total_storage, n.bandwidth, n.comp_power
        );
    }
    let mut rng = SeedStreams::new(seed).stream(SAMPLING);
    println!("{:>7} {:>8} {:>10} {:>10} {:>10} {:>8}", "episode", "policy", "reward", "time s", "energy J", "on-time");
    for e in 0..episodes {
        let expert = run_expert_episode(&mut env, e)?;
        let random = run_random_episode(&mut env, e, &mut rng)?;
        for (name, m) in [("expert", &expert), ("random", &random)] {
            row(e, name, m);
        }
    }
    Ok(())
}

fn row(e: u64, name: &str, m: &EpisodeMetrics) {
    println!(
        "{e:>7} {name:>8} {:>10.4} {:>10.2} {:>10.2} {:>8.3}",
        m.mean_reward, m.total_time, m.total_energy, m.on_time_ratio
    );
}
