//! Records expert demonstrations, writes them in the text demo format and
//! reads them back.
//!
//! cargo run --release --example collect_demos -- [episodes] [path]

use std::path::PathBuf;

use edgesched::env::WorkloadConfig;
use edgesched::expert::{collect_demos, load_demos, save_demos};
use edgesched::model::RewardConfig;

fn main() -> edgesched::Result<()> {
    let mut args = std::env::args().skip(1);
    let episodes: usize = args.next().map_or(10, |s| s.parse().expect("episodes"));
    let path = args.next().map_or_else(|| std::env::temp_dir().join("edgesched_demos.txt"), PathBuf::from);

    let (demos, summary) = collect_demos(&WorkloadConfig::default(), &RewardConfig::default(), 0, episodes)?;
    println!(
        "{} episodes, {} state-action pairs, mean episode reward {:.4}",
        summary.episodes, summary.pairs, summary.mean_episode_reward
    );
    let mut counts = vec![0usize; demos.node_count()];
    for r in demos.slots().iter().flat_map(|s| s.iter()) {
        counts[r.action] += 1;
    }
    println!("expert choices per node: {counts:?}");

    save_demos(&demos, &path)?;
    let back = load_demos(&path)?;
    assert_eq!(back, demos);
    println!("wrote and re-read {}", path.display());
    Ok(())
}
