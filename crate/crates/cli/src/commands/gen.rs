//! `asi gen`: write a trajectory dataset file.

use std::path::PathBuf;

use asi_core::env::{gen_dataset, write_dataset, ChainConfig, EnvConfig, EnvId, FunnelConfig};
use asi_core::{Error, Result};

use super::{label_histogram, length_stats};

#[derive(Debug, clap::Args)]
pub struct GenArgs {
    /// Environment: funnel-lite | chain-world (short: funnel | chain)
    #[arg(long)]
    pub env: String,
    /// Number of trajectories
    #[arg(long)]
    pub n: usize,
    /// Master seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output dataset path
    #[arg(long)]
    pub out: PathBuf,

    /// Funnel wall bounciness in [0,1]
    #[arg(long)]
    pub bounciness: Option<f64>,
    /// Funnel obstacle rows
    #[arg(long)]
    pub rows: Option<usize>,
    /// Funnel landing bins
    #[arg(long)]
    pub bins: Option<usize>,
    /// Chain segment count
    #[arg(long)]
    pub segments: Option<usize>,
    /// Chain terminal branches
    #[arg(long)]
    pub branches: Option<usize>,
    /// Chain per-frame position noise
    #[arg(long)]
    pub noise: Option<f64>,
}

impl GenArgs {
    pub fn env_config(&self) -> Result<EnvConfig> {
        let env = EnvId::parse(&self.env)?;
        let config = match env {
            EnvId::FunnelLite => {
                let mut c = FunnelConfig::default();
                if let Some(b) = self.bounciness {
                    c.bounciness = b;
                }
                if let Some(r) = self.rows {
                    c.obstacle_rows = r;
                }
                if let Some(b) = self.bins {
                    c.bins = b;
                }
                EnvConfig::FunnelLite(c)
            }
            EnvId::ChainWorld => {
                let mut c = ChainConfig::default();
                if let Some(s) = self.segments {
                    c.segments = s;
                }
                if let Some(b) = self.branches {
                    c.branches = b;
                }
                if let Some(n) = self.noise {
                    c.position_noise = n;
                }
                EnvConfig::ChainWorld(c)
            }
        };
        config.validate()?;
        Ok(config)
    }
}

pub fn run(args: &GenArgs) -> Result<()> {
    if args.n == 0 {
        return Err(Error::Config("--n must be >= 1".into()));
    }
    let config = args.env_config()?;
    let data = gen_dataset(&config, args.n, args.seed)?;
    write_dataset(&data, &args.out)?;
    let (min, mean, max) = length_stats(&data);
    println!("wrote {} trajectories to {}", data.len(), args.out.display());
    println!("lengths: min {min}, mean {mean:.1}, max {max}");
    for (label, count) in label_histogram(&data) {
        println!("label {label}: {count}");
    }
    Ok(())
}
