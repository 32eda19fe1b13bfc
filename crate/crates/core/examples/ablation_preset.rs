//! Runs a preset experiment matrix on a shrunken configuration and prints
//! the group summary. Per-seed CSVs land under the output directory.
//!
//! cargo run --release --example ablation_preset -- [preset] [out_dir]

use std::path::PathBuf;

use edgesched::env::WorkloadConfig;
use edgesched::harness::{ablate, ExperimentConfig};
use edgesched::sac::SACConfig;

fn main() -> edgesched::Result<()> {
    let mut args = std::env::args().skip(1);
    let preset = args.next().unwrap_or_else(|| "demo_sweep".into());
    let out = args.next().map_or_else(|| std::env::temp_dir().join("edgesched_ablation"), PathBuf::from);

    let cfg = ExperimentConfig {
        preset: Some(preset),
        seeds: vec![0, 1],
        out_dir: out,
        episodes: 15,
        tail: 5,
        workload: WorkloadConfig {
            slots_per_episode: 15,
            ..WorkloadConfig::default()
        },
        sac: SACConfig {
            batch_size: 128,
            min_buffer: 256,
            updates_per_episode: Some(10),
            ..SACConfig::default()
        },
        ..ExperimentConfig::default()
    };
    let report = ablate(&cfg)?;
    println!("{:<16} {:>6} {:>10} {:>10} {:>10}", "group", "seeds", "reward", "energy J", "on-time");
    for g in &report.groups {
        println!(
            "{:<16} {:>6} {:>10.4} {:>10.2} {:>10.3}",
            g.group, g.seeds, g.mean_reward, g.total_energy, g.on_time_ratio
        );
    }
    println!("wrote {}", report.dir.display());
    Ok(())
}
