//! Defender-side analytics over public post metadata.
//!
//! The detector never opens an image. It groups posts by their unordered tag
//! set and flags the groups that behave like chain traffic: a large tag set
//! recurring in many distinct orderings, posted in bursts, often across
//! several services. Innocent posts rarely repeat a four-tag set in a dozen
//! orderings inside an hour; a chain does exactly that.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::osnfabric::FabricState;
use crate::permcode;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Codec(#[from] permcode::Error),
    #[error("fragment size must be at least 1")]
    ZeroFragmentSize,
    #[error("capacity {n}! x {m} overflows 128-bit arithmetic")]
    Overflow { n: u8, m: u64 },
}

/// Theoretical storage ceiling of one dictionary: `n!` posts of `m` bytes.
pub fn capacity(n: u8, m: u64) -> Result<u128, Error> {
    if m == 0 {
        return Err(Error::ZeroFragmentSize);
    }
    permcode::permutation_count(n)?
        .checked_mul(m as u128)
        .ok_or(Error::Overflow { n, m })
}

/// Render a byte count with its best-fit binary unit, two decimals.
pub fn format_bytes(bytes: u128) -> String {
    const UNITS: [&str; 6] = ["KiB", "MiB", "GiB", "TiB", "PiB", "EiB"];
    if bytes < 1024 {
        return format!("{bytes} B");
    }
    let mut value = bytes as f64 / 1024.0;
    let mut unit = 0;
    while value >= 1024.0 && unit < UNITS.len() - 1 {
        value /= 1024.0;
        unit += 1;
    }
    format!("{value:.2} {}", UNITS[unit])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DetectorConfig {
    /// Ignore tag sets smaller than this.
    pub min_tagset_size: usize,
    /// Flag only sets recurring in at least this many distinct orderings.
    pub min_repetitions: usize,
    /// Burst window, simulated seconds.
    pub window_secs: u64,
    /// Posts inside one window needed to count as a burst.
    pub burst_rate: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            min_tagset_size: 4,
            min_repetitions: 3,
            window_secs: 3600,
            burst_rate: 3,
        }
    }
}

/// One suspicious tag set and the evidence behind it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FlaggedGroup {
    /// The unordered tag set, sorted for stable output.
    pub tags: Vec<String>,
    pub post_ids: Vec<u64>,
    pub distinct_orderings: usize,
    pub services: Vec<String>,
    /// Highest post count seen in any one window.
    pub peak_window_posts: usize,
    /// distinct_orderings x services touched; reported, not thresholded.
    pub score: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AnomalyReport {
    pub config: DetectorConfig,
    pub groups: Vec<FlaggedGroup>,
}

/// Pure function of the fabric and thresholds; higher scores first.
pub fn detect(fabric: &FabricState, cfg: &DetectorConfig) -> AnomalyReport {
    let mut by_tagset: BTreeMap<Vec<String>, Vec<&crate::osnfabric::FabricPost>> = BTreeMap::new();
    for post in fabric.posts() {
        let mut set = post.hashtags.clone();
        set.sort();
        set.dedup();
        by_tagset.entry(set).or_default().push(post);
    }

    let mut groups = Vec::new();
    for (tags, posts) in by_tagset {
        if tags.len() < cfg.min_tagset_size {
            continue;
        }
        let mut orderings: Vec<&[String]> = posts.iter().map(|p| p.hashtags.as_slice()).collect();
        orderings.sort();
        orderings.dedup();
        if orderings.len() < cfg.min_repetitions {
            continue;
        }
        let timestamps: Vec<u64> = posts.iter().map(|p| p.timestamp).collect();
        let peak = peak_window_posts(&timestamps, cfg.window_secs);
        if peak < cfg.burst_rate {
            continue;
        }
        let mut services: Vec<String> = posts.iter().map(|p| p.service.clone()).collect();
        services.sort();
        services.dedup();
        groups.push(FlaggedGroup {
            score: (orderings.len() * services.len()) as u64,
            post_ids: posts.iter().map(|p| p.post_id).collect(),
            distinct_orderings: orderings.len(),
            services,
            peak_window_posts: peak,
            tags,
        });
    }
    groups.sort_by(|a, b| b.score.cmp(&a.score).then(a.post_ids.cmp(&b.post_ids)));
    AnomalyReport {
        config: cfg.clone(),
        groups,
    }
}

/// Most posts inside any half-open window `(t - window, t]`.
/// Timestamps arrive in post order, which is non-decreasing.
fn peak_window_posts(timestamps: &[u64], window: u64) -> usize {
    let mut best = 0;
    let mut start = 0;
    for (end, &t) in timestamps.iter().enumerate() {
        while timestamps[start] + window <= t {
            start += 1;
        }
        best = best.max(end - start + 1);
    }
    best
}
