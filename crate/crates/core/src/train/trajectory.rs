//! The per-trajectory training loop, in adaptive and fixed-skip flavors.
//!
//! Both flavors share one implementation so the reduction identity holds
//! structurally: with horizon 1 and exploration off, the adaptive loop *is*
//! the fixed dt=1 loop. Exploration and scheduled sampling draw from
//! independent ChaCha streams, so disabling one curriculum never shifts the
//! other's draws.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::matching::temporal_match;
use super::{BpttMode, StepRecord, TrainConfig, TrajectoryLossReport};
use crate::env::Trajectory;
use crate::error::{Error, Result};
use crate::kernels;
use crate::model::DynamicsModel;
use crate::rng::{self, stream};
use crate::tape::Tape;

/// Per-trajectory random streams, split from the master seed by a global
/// trajectory index so batch order and parallelism cannot change results.
#[derive(Debug, Clone)]
pub struct StepStreams {
    explore: ChaCha8Rng,
    sample: ChaCha8Rng,
}

impl StepStreams {
    pub fn for_trajectory(master_seed: u64, trajectory_index: u64) -> Self {
        StepStreams {
            explore: rng::stream_rng(master_seed, stream::EXPLORE, trajectory_index),
            sample: rng::stream_rng(master_seed, stream::SAMPLE, trajectory_index),
        }
    }
}

enum SkipRule {
    /// Temporal matching within the horizon, exploring with probability mu.
    Adaptive { horizon: usize, mu: f64 },
    /// Forced skip of exactly dt (clamped at the trajectory end).
    Fixed { dt: usize },
}

impl SkipRule {
    fn max_skip(&self) -> usize {
        match self {
            SkipRule::Adaptive { horizon, .. } => *horizon,
            SkipRule::Fixed { dt } => *dt,
        }
    }
}

/// Adaptive-skip training on one trajectory. Runs the matching loop, then a
/// backward pass: gradients accumulate into the model parameters (the caller
/// owns `zero_grad` and the optimizer step). The exploration probability is
/// `config.mu`-style: computed from `exploration_k` unless exploration is
/// disabled, in which case the exploration stream is never touched.
pub fn asi_train_trajectory(
    model: &mut DynamicsModel,
    trajectory: &Trajectory,
    config: &TrainConfig,
    training_step: u64,
    streams: &mut StepStreams,
) -> Result<TrajectoryLossReport> {
    let mu = if config.exploration_enabled {
        super::exploration_prob(training_step, config.exploration_k)
    } else {
        0.0
    };
    run_trajectory(
        model,
        trajectory,
        config,
        training_step,
        streams,
        SkipRule::Adaptive { horizon: config.horizon, mu },
    )
}

/// Fixed-skip baseline: the matched index is forced to `min(t + dt, T)`;
/// scheduled sampling still applies and no matching search happens.
pub fn fixed_train_trajectory(
    model: &mut DynamicsModel,
    trajectory: &Trajectory,
    dt: usize,
    config: &TrainConfig,
    training_step: u64,
    streams: &mut StepStreams,
) -> Result<TrajectoryLossReport> {
    if dt == 0 {
        return Err(Error::Contract("fixed skip dt must be >= 1".into()));
    }
    run_trajectory(model, trajectory, config, training_step, streams, SkipRule::Fixed { dt })
}

fn run_trajectory(
    model: &mut DynamicsModel,
    trajectory: &Trajectory,
    config: &TrainConfig,
    training_step: u64,
    streams: &mut StepStreams,
    rule: SkipRule,
) -> Result<TrajectoryLossReport> {
    let len = trajectory.len();
    if len < 2 {
        return Err(Error::Contract(format!("trajectory length {len} < 2")));
    }
    let epsilon = config.epsilon(training_step);

    let mut tape = Tape::new();
    let param_ids = model.register_params(&mut tape);
    let first = &trajectory.frames[0];
    let mut input = tape.constant(first.data(), first.shape());

    let mut records: Vec<StepRecord> = Vec::new();
    let mut total_loss = None;
    let mut t = 1usize;
    let mut u = 1usize;

    while t < len {
        let pred = model.forward_on_tape(&mut tape, input, &param_ids)?;
        let upper = (t + rule.max_skip()).min(len);

        let (matched_t, step_loss, explored) = match &rule {
            SkipRule::Adaptive { horizon, mu } => {
                let explored = *mu > 0.0 && streams.explore.gen::<f64>() < *mu;
                if explored {
                    let m = streams.explore.gen_range(t + 1..=upper);
                    let loss = kernels::bce(tape.data(pred), trajectory.frames[m - 1].data());
                    (m, loss, true)
                } else {
                    let (m, loss) = temporal_match(tape.data(pred), trajectory, t, *horizon)?;
                    (m, loss, false)
                }
            }
            SkipRule::Fixed { .. } => {
                let loss = kernels::bce(tape.data(pred), trajectory.frames[upper - 1].data());
                (upper, loss, false)
            }
        };

        let skip = matched_t - t;
        assert!(skip >= 1 && skip <= rule.max_skip(), "skip {skip} out of bounds");
        assert!(matched_t <= len);

        let target = &trajectory.frames[matched_t - 1];
        let target_id = tape.constant(target.data(), target.shape());
        let loss_id = tape.bce(pred, target_id)?;
        debug_assert_eq!(tape.data(loss_id)[0], step_loss);
        total_loss = Some(match total_loss {
            None => loss_id,
            Some(acc) => tape.add(acc, loss_id)?,
        });

        let feed_ground_truth = streams.sample.gen::<f64>() < epsilon;
        input = if feed_ground_truth {
            target_id
        } else {
            match config.bptt {
                BpttMode::Full => pred,
                BpttMode::Detached => tape.detach(pred),
            }
        };

        records.push(StepRecord {
            abstract_step: u,
            source_t: t,
            matched_t,
            skip,
            step_loss,
            explored,
            fed_prediction: !feed_ground_truth,
        });
        t = matched_t;
        u += 1;
    }

    let n_steps = records.len();
    let mean_id = tape.scale(total_loss.expect("at least one step"), 1.0 / n_steps as f64);
    let mean_loss = tape.data(mean_id)[0];
    tape.backward(mean_id)?;
    let mut pairs: Vec<_> = param_ids
        .iter()
        .copied()
        .zip(model.parameters_mut().iter_mut())
        .collect();
    tape.accumulate_param_grads(&mut pairs);

    Ok(TrajectoryLossReport {
        mean_loss,
        step_records: records,
        forward_passes: n_steps as u64,
    })
}
