//! `asi eval`: label-prediction accuracy of a checkpoint on a dataset.

use std::path::PathBuf;

use asi_core::env::{read_dataset, EnvId};
use asi_core::model::DynamicsModel;
use asi_core::train::evaluate_accuracy;
use asi_core::{Error, Result};

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Environment the dataset came from (selects the classifier)
    #[arg(long)]
    pub env: String,
}

pub fn run(args: &EvalArgs) -> Result<()> {
    let env = EnvId::parse(&args.env)?;
    let dataset = read_dataset(&args.data, env)?;
    let shape = dataset[0].frames[0].shape().to_vec();
    let model = DynamicsModel::load(&args.checkpoint, (shape[1], shape[2]))?;
    let (mc, _, _) = model.input_shape();
    if mc != shape[0] {
        return Err(Error::dim(
            "eval",
            format!("checkpoint expects {mc} channels, dataset frames have {}", shape[0]),
        ));
    }
    let report = evaluate_accuracy(&model, &dataset, env)?;
    println!("trajectories: {}", dataset.len());
    println!("accuracy: {:.4}", report.accuracy);
    println!("mean rollout length: {:.2}", report.mean_rollout_len);
    println!("forward passes: {}", report.forward_passes);
    Ok(())
}
