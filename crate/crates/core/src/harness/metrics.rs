use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::EpisodeMetrics;
use crate::error::Result;
use crate::sac::EpisodeLog;

/// One episode of one seeded run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub preset: String,
    pub seed: u64,
    pub episode: usize,
    pub mean_reward: f64,
    /// Seconds.
    pub total_time: f64,
    /// Joules.
    pub total_energy: f64,
    /// Seconds.
    pub image_download_time: f64,
    pub on_time_ratio: f64,
}

impl MetricsRow {
    pub fn from_metrics(preset: &str, seed: u64, episode: usize, m: &EpisodeMetrics) -> Self {
        MetricsRow {
            preset: preset.to_string(),
            seed,
            episode,
            mean_reward: m.mean_reward,
            total_time: m.total_time,
            total_energy: m.total_energy,
            image_download_time: m.total_download_time,
            on_time_ratio: m.on_time_ratio,
        }
    }

    pub fn from_log(preset: &str, seed: u64, log: &EpisodeLog) -> Self {
        MetricsRow {
            preset: preset.to_string(),
            seed,
            episode: log.episode,
            mean_reward: log.mean_reward,
            total_time: log.total_time,
            total_energy: log.total_energy,
            image_download_time: log.image_download_time,
            on_time_ratio: log.on_time_ratio,
        }
    }
}

/// Tail averages of one seeded run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub preset: String,
    pub group: String,
    pub seed: u64,
    pub episodes: usize,
    pub tail: usize,
    pub mean_reward: f64,
    pub total_time: f64,
    pub total_energy: f64,
    pub image_download_time: f64,
    pub on_time_ratio: f64,
}

impl RunSummary {
    /// Averages over the last `tail` rows.
    pub fn of(preset: &str, group: &str, seed: u64, rows: &[MetricsRow], tail: usize) -> Self {
        let last = &rows[rows.len().saturating_sub(tail)..];
        let k = last.len().max(1) as f64;
        let avg = |f: fn(&MetricsRow) -> f64| last.iter().map(f).sum::<f64>() / k;
        RunSummary {
            preset: preset.to_string(),
            group: group.to_string(),
            seed,
            episodes: rows.len(),
            tail: last.len(),
            mean_reward: avg(|r| r.mean_reward),
            total_time: avg(|r| r.total_time),
            total_energy: avg(|r| r.total_energy),
            image_download_time: avg(|r| r.image_download_time),
            on_time_ratio: avg(|r| r.on_time_ratio),
        }
    }
}

/// Across-seed means of the per-seed summaries of one group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub preset: String,
    pub group: String,
    pub seeds: usize,
    pub mean_reward: f64,
    pub total_time: f64,
    pub total_energy: f64,
    pub image_download_time: f64,
    pub on_time_ratio: f64,
}

impl GroupSummary {
    pub fn of(runs: &[RunSummary]) -> Self {
        let k = runs.len().max(1) as f64;
        let avg = |f: fn(&RunSummary) -> f64| runs.iter().map(f).sum::<f64>() / k;
        let first = runs.first();
        GroupSummary {
            preset: first.map(|r| r.preset.clone()).unwrap_or_default(),
            group: first.map(|r| r.group.clone()).unwrap_or_default(),
            seeds: runs.len(),
            mean_reward: avg(|r| r.mean_reward),
            total_time: avg(|r| r.total_time),
            total_energy: avg(|r| r.total_energy),
            image_download_time: avg(|r| r.image_download_time),
            on_time_ratio: avg(|r| r.on_time_ratio),
        }
    }
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}
