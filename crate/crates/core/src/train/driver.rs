//! The outer training loop: batching, optimization, validation cadence.

use std::time::Instant;

use rand::seq::SliceRandom;

use super::eval::evaluate_accuracy;
use super::trajectory::{asi_train_trajectory, fixed_train_trajectory, StepStreams};
use super::{Method, TrainConfig};
use crate::env::Trajectory;
use crate::error::{Error, Result};
use crate::model::DynamicsModel;
use crate::optim::{adam_step, AdamState};
use crate::rng::{self, stream};

/// Training data, with an optional mid-training dataset switch at an epoch
/// boundary (optimizer state keeps running across the switch).
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub initial: &'a [Trajectory],
    pub switch: Option<(u64, &'a [Trajectory])>,
}

impl<'a> TrainData<'a> {
    pub fn simple(initial: &'a [Trajectory]) -> Self {
        TrainData { initial, switch: None }
    }

    fn for_epoch(&self, epoch: u64) -> (&'a [Trajectory], usize) {
        match self.switch {
            Some((at, alt)) if epoch >= at => (alt, 1),
            _ => (self.initial, 0),
        }
    }
}

/// One validation measurement, emitted up to four times per epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationEvent {
    /// Fractional epoch (validation points fall inside epochs).
    pub epoch: f64,
    /// Optimizer steps completed so far.
    pub optimizer_step: u64,
    /// Cumulative *training* forward passes (evaluation passes excluded).
    pub forward_passes: u64,
    /// Mean trajectory loss since the previous event.
    pub train_loss: f64,
    pub val_accuracy: f64,
    /// Ground-truth frames consumed per validation forward pass:
    /// sum(T_i - 1) / sum(rollout passes).
    pub val_mean_skip: f64,
    /// Which training dataset was active (0 initial, 1 switched).
    pub dataset_index: usize,
    pub wall_ms: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub events: Vec<ValidationEvent>,
    pub optimizer_steps: u64,
    pub train_forward_passes: u64,
}

/// Run the full training procedure: seeded-shuffled trajectory order,
/// gradient accumulation over `batch_trajectories`, Adam with the step-decay
/// schedule, and validation four times per epoch (evenly spaced by optimizer
/// step). Stops at `max_training_steps` or when the forward-pass budget is
/// exhausted, emitting a final validation event either way.
pub fn train<F>(
    model: &mut DynamicsModel,
    data: TrainData<'_>,
    config: &TrainConfig,
    method: Method,
    validation: &[Trajectory],
    mut on_validation: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&ValidationEvent),
{
    config.validate()?;
    if data.initial.is_empty() || validation.is_empty() {
        return Err(Error::Contract("train and validation datasets must be non-empty".into()));
    }
    let env = validation[0].env;
    let val_gt_steps: f64 = validation.iter().map(|t| (t.len() - 1) as f64).sum();
    let start = Instant::now();

    let mut adam = AdamState::new(model.parameters());
    let mut events: Vec<ValidationEvent> = Vec::new();
    let mut step: u64 = 0;
    let mut traj_counter: u64 = 0;
    let mut train_fp: u64 = 0;
    let mut loss_sum = 0.0;
    let mut loss_count = 0usize;
    let mut epoch: u64 = 0;

    'training: loop {
        let (epoch_data, dataset_index) = data.for_epoch(epoch);
        let steps_per_epoch = epoch_data.len().div_ceil(config.batch_trajectories) as u64;
        let val_marks: Vec<u64> = {
            let mut marks: Vec<u64> =
                (1..=4).map(|k| (k * steps_per_epoch).div_ceil(4).max(1)).collect();
            marks.dedup();
            marks
        };

        let mut order: Vec<usize> = (0..epoch_data.len()).collect();
        let mut shuffle_rng = rng::stream_rng(config.master_seed, stream::SHUFFLE, epoch);
        order.shuffle(&mut shuffle_rng);

        for (batch_idx, batch) in order.chunks(config.batch_trajectories).enumerate() {
            model.zero_grad();
            for &traj_idx in batch {
                let traj = &epoch_data[traj_idx];
                let mut streams = StepStreams::for_trajectory(config.master_seed, traj_counter);
                traj_counter += 1;
                let report = match method {
                    Method::Fixed(dt) => {
                        fixed_train_trajectory(model, traj, dt, config, step, &mut streams)?
                    }
                    Method::Asi | Method::AsiNoExplore => {
                        let cfg;
                        let effective = if method == Method::AsiNoExplore {
                            cfg = TrainConfig { exploration_enabled: false, ..config.clone() };
                            &cfg
                        } else {
                            config
                        };
                        asi_train_trajectory(model, traj, effective, step, &mut streams)?
                    }
                };
                train_fp += report.forward_passes;
                loss_sum += report.mean_loss;
                loss_count += 1;
            }
            let scale = 1.0 / batch.len() as f64;
            for p in model.parameters_mut() {
                if let Some(g) = p.grad.as_mut() {
                    g.iter_mut().for_each(|v| *v *= scale);
                }
            }
            let lr = config.lr_schedule.lr_at(step);
            adam_step(&mut adam, model.parameters_mut(), lr)?;
            step += 1;

            let step_in_epoch = batch_idx as u64 + 1;
            let budget_done =
                config.max_forward_passes.map(|b| train_fp >= b).unwrap_or(false);
            let steps_done = step >= config.max_training_steps;
            if val_marks.contains(&step_in_epoch) || budget_done || steps_done {
                let event = run_validation(
                    model,
                    validation,
                    env,
                    epoch as f64 + step_in_epoch as f64 / steps_per_epoch as f64,
                    step,
                    train_fp,
                    &mut loss_sum,
                    &mut loss_count,
                    val_gt_steps,
                    dataset_index,
                    &start,
                )?;
                on_validation(&event);
                events.push(event);
            }
            if budget_done || steps_done {
                break 'training;
            }
        }
        epoch += 1;
    }

    Ok(TrainOutcome { events, optimizer_steps: step, train_forward_passes: train_fp })
}

#[allow(clippy::too_many_arguments)]
fn run_validation(
    model: &DynamicsModel,
    validation: &[Trajectory],
    env: crate::env::EnvId,
    epoch: f64,
    step: u64,
    train_fp: u64,
    loss_sum: &mut f64,
    loss_count: &mut usize,
    val_gt_steps: f64,
    dataset_index: usize,
    start: &Instant,
) -> Result<ValidationEvent> {
    let report = evaluate_accuracy(model, validation, env)?;
    let train_loss = if *loss_count > 0 { *loss_sum / *loss_count as f64 } else { f64::NAN };
    *loss_sum = 0.0;
    *loss_count = 0;
    Ok(ValidationEvent {
        epoch,
        optimizer_step: step,
        forward_passes: train_fp,
        train_loss,
        val_accuracy: report.accuracy,
        val_mean_skip: val_gt_steps / report.forward_passes as f64,
        dataset_index,
        wall_ms: start.elapsed().as_millis() as u64,
    })
}
