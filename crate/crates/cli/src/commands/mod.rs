pub mod eval;
pub mod gen;
pub mod gradcheck;
pub mod sweep;
pub mod train;

use asi_core::env::{gen_dataset, read_dataset, EnvConfig, EnvId, Trajectory};
use asi_core::rng;
use asi_core::Result;
use std::path::Path;

/// Load a dataset from a path, or generate it procedurally from a master
/// seed stream when no path is given.
pub fn resolve_dataset(
    path: Option<&Path>,
    env_config: &EnvConfig,
    env: EnvId,
    n: usize,
    master_seed: u64,
    stream_tag: u64,
) -> Result<Vec<Trajectory>> {
    match path {
        Some(p) => read_dataset(p, env),
        None => gen_dataset(env_config, n, rng::derive_seed(master_seed, stream_tag, 0)),
    }
}

pub fn label_histogram(data: &[Trajectory]) -> Vec<(u32, usize)> {
    let mut counts = std::collections::BTreeMap::new();
    for t in data {
        *counts.entry(t.label).or_insert(0usize) += 1;
    }
    counts.into_iter().collect()
}

pub fn length_stats(data: &[Trajectory]) -> (usize, f64, usize) {
    let min = data.iter().map(Trajectory::len).min().unwrap_or(0);
    let max = data.iter().map(Trajectory::len).max().unwrap_or(0);
    let mean = data.iter().map(Trajectory::len).sum::<usize>() as f64 / data.len().max(1) as f64;
    (min, mean, max)
}
