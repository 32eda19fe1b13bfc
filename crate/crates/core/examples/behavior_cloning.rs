//! Pretrains the hybrid actor on expert demonstrations and reports the
//! training loss and held-out agreement with the expert per epoch.
//!
//! cargo run --release --example behavior_cloning -- [seed] [demo_episodes]

use edgesched::bc::{bc_train, BCConfig};
use edgesched::env::WorkloadConfig;
use edgesched::expert::collect_demos;
use edgesched::harness::fresh_nets;
use edgesched::model::RewardConfig;
use edgesched::policy::{ActorVariant, NetDims, ObsDims};

fn main() -> edgesched::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));
    let demo_episodes: usize = args.next().map_or(10, |s| s.parse().expect("demo episodes"));

    let cfg = WorkloadConfig::default();
    let (demos, summary) = collect_demos(&cfg, &RewardConfig::default(), seed, demo_episodes)?;
    println!("{} demonstration pairs from {} episodes", summary.pairs, summary.episodes);

    let dims = ObsDims {
        nodes: cfg.node_count,
        node_state: cfg.node_state_dim(),
        ms_state: cfg.ms_state_dim(),
    };
    let (mut actor, _) = fresh_nets(ActorVariant::Hybrid, dims, &NetDims::default(), seed);
    let report = bc_train(&mut actor, &demos, &BCConfig { seed, ..BCConfig::default() })?;

    println!("initial loss {:.4}", report.initial_loss);
    println!("{:>5} {:>10} {:>10} {:>10}", "epoch", "nll", "train agr", "held-out");
    for e in &report.epochs {
        println!("{:>5} {:>10.4} {:>10.3} {:>10.3}", e.epoch, e.train_loss, e.train_agreement, e.holdout_agreement);
    }
    println!("uniform baseline agreement {:.3}", 1.0 / cfg.node_count as f64);
    Ok(())
}
