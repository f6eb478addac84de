//! Skip-interval sweep: error accumulation rate as a function of a fixed
//! skip interval.

use rayon::prelude::*;

use super::trajectory::{fixed_train_trajectory, StepStreams};
use super::TrainConfig;
use crate::env::Trajectory;
use crate::error::{Error, Result};
use crate::model::{Architecture, DynamicsModel};
use crate::optim::{adam_step, AdamState};
use crate::rng::{self, stream};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub dt: usize,
    /// Converged per-step loss (mean over the final quarter of optimizer
    /// steps).
    pub final_loss: f64,
    /// Error accumulation rate: final_loss / dt.
    pub rate: f64,
}

/// Train one fixed-dt model per entry under an equal training forward-pass
/// budget and report each converged loss divided by its dt. Entries run in
/// parallel; every entry re-derives the same seed streams, so the table is
/// deterministic.
pub fn skip_sweep(
    dataset: &[Trajectory],
    dts: &[usize],
    config: &TrainConfig,
    arch: Architecture,
    n_kernels: usize,
    budget_fp: u64,
) -> Result<Vec<SweepRow>> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Contract("skip_sweep needs a non-empty dataset".into()));
    }
    if dts.is_empty() || dts.iter().any(|&dt| dt == 0) {
        return Err(Error::Config("sweep dts must be positive".into()));
    }
    dts.par_iter()
        .map(|&dt| sweep_entry(dataset, dt, config, arch, n_kernels, budget_fp))
        .collect()
}

fn sweep_entry(
    dataset: &[Trajectory],
    dt: usize,
    config: &TrainConfig,
    arch: Architecture,
    n_kernels: usize,
    budget_fp: u64,
) -> Result<SweepRow> {
    let shape = dataset[0].frames[0].shape();
    let mut model =
        DynamicsModel::new(arch, n_kernels, (shape[0], shape[1], shape[2]), config.master_seed)?;
    let mut adam = AdamState::new(model.parameters());

    let mut step_losses: Vec<f64> = Vec::new();
    let mut step: u64 = 0;
    let mut traj_counter: u64 = 0;
    let mut train_fp: u64 = 0;
    let mut epoch: u64 = 0;

    'outer: loop {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        use rand::seq::SliceRandom;
        let mut shuffle_rng = rng::stream_rng(config.master_seed, stream::SHUFFLE, epoch);
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(config.batch_trajectories) {
            model.zero_grad();
            let mut batch_loss = 0.0;
            for &idx in batch {
                let mut streams = StepStreams::for_trajectory(config.master_seed, traj_counter);
                traj_counter += 1;
                let report = fixed_train_trajectory(
                    &mut model,
                    &dataset[idx],
                    dt,
                    config,
                    step,
                    &mut streams,
                )?;
                train_fp += report.forward_passes;
                batch_loss += report.mean_loss;
            }
            let scale = 1.0 / batch.len() as f64;
            for p in model.parameters_mut() {
                if let Some(g) = p.grad.as_mut() {
                    g.iter_mut().for_each(|v| *v *= scale);
                }
            }
            adam_step(&mut adam, model.parameters_mut(), config.lr_schedule.lr_at(step))?;
            step += 1;
            step_losses.push(batch_loss / batch.len() as f64);
            if train_fp >= budget_fp || step >= config.max_training_steps {
                break 'outer;
            }
        }
        epoch += 1;
    }

    let tail = (step_losses.len() / 4).max(1);
    let final_loss =
        step_losses[step_losses.len() - tail..].iter().sum::<f64>() / tail as f64;
    if !final_loss.is_finite() {
        return Err(Error::Numeric(format!("sweep dt={dt} produced non-finite loss")));
    }
    Ok(SweepRow { dt, final_loss, rate: final_loss / dt as f64 })
}
