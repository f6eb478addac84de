//! `asi gradcheck`: central-difference audit of every backward rule.

use asi_core::gradcheck::op_suite;
use asi_core::{Error, Result};

#[derive(Debug, clap::Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of consecutive seeds to check
    #[arg(long, default_value_t = 1)]
    pub count: u64,
}

pub fn run(args: &GradcheckArgs) -> Result<()> {
    let mut worst_overall: f64 = 0.0;
    for seed in args.seed..args.seed + args.count.max(1) {
        for (name, err) in op_suite(seed)? {
            println!("seed {seed} {name}: max relative error {err:.3e}");
            worst_overall = worst_overall.max(err);
        }
    }
    if worst_overall >= 1e-4 {
        return Err(Error::Numeric(format!(
            "gradient check failed: worst relative error {worst_overall:.3e} >= 1e-4"
        )));
    }
    println!("all gradients within 1e-4 of central differences");
    Ok(())
}
