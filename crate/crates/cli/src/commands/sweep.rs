//! `asi sweep`: error accumulation rate over fixed skip intervals.

use std::path::PathBuf;

use asi_core::train::skip_sweep;
use asi_core::{Error, Result};

use crate::config::ExperimentConfig;

use super::resolve_dataset;

#[derive(Debug, clap::Args)]
pub struct SweepArgs {
    /// Comma-separated skip intervals, e.g. 1,2,4,8
    #[arg(long)]
    pub dts: String,
    /// Dataset file; generated procedurally when absent
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "chain-world")]
    pub env: String,
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Training forward-pass budget per entry
    #[arg(long, default_value_t = 20_000)]
    pub budget: u64,
    #[arg(long, default_value_t = 8)]
    pub n_kernels: usize,
}

pub fn parse_dts(raw: &str) -> Result<Vec<usize>> {
    let dts: Vec<usize> = raw
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad dt value `{s}`")))
        })
        .collect::<Result<_>>()?;
    if dts.is_empty() || dts.iter().any(|&d| d == 0) {
        return Err(Error::Config("dts must be positive integers".into()));
    }
    Ok(dts)
}

pub fn run(args: &SweepArgs) -> Result<()> {
    let dts = parse_dts(&args.dts)?;
    let cfg = ExperimentConfig {
        env: args.env.clone(),
        seed: args.seed,
        n_kernels: args.n_kernels,
        max_training_steps: u64::MAX,
        ..ExperimentConfig::default()
    };
    let env = cfg.env_id()?;
    let env_config = cfg.env_config()?;
    let dataset = resolve_dataset(
        args.data.as_deref(),
        &env_config,
        env,
        args.n,
        args.seed,
        asi_core::rng::stream::DATASET_TRAIN,
    )?;
    let rows = skip_sweep(
        &dataset,
        &dts,
        &cfg.train_config()?,
        cfg.architecture()?,
        cfg.n_kernels,
        args.budget,
    )?;
    println!("dt,final_loss,rate");
    for row in rows {
        println!("{},{:.6},{:.6}", row.dt, row.final_loss, row.rate);
    }
    Ok(())
}
