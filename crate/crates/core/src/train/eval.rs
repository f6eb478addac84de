//! Rollout evaluation through the hand-specified classifier.

use rayon::prelude::*;

use crate::env::{classify, EnvId, Trajectory, T_MAX};
use crate::error::{Error, Result};
use crate::model::DynamicsModel;
use crate::tensor::Tensor;

/// Default cap on abstract rollout steps.
pub const DEFAULT_MAX_ABSTRACT_STEPS: usize = 2 * T_MAX;

/// Anything that can advance a frame one abstract step. Lets tests drive the
/// rollout machinery with stub simulators.
pub trait Dynamics {
    fn step(&self, frame: &Tensor) -> Result<Tensor>;
}

impl Dynamics for DynamicsModel {
    fn step(&self, frame: &Tensor) -> Result<Tensor> {
        self.forward(frame)
    }
}

#[derive(Debug, Clone)]
pub struct Rollout {
    /// First classifier hit, or `None` if the cap was reached (counted as an
    /// incorrect prediction by accuracy).
    pub label: Option<u32>,
    /// Predicted frames, in order.
    pub frames: Vec<Tensor>,
    pub forward_passes: u64,
}

/// Unfold the dynamics from `initial`, feeding each prediction back as the
/// next input and applying the classifier after every step.
pub fn rollout_and_classify<D: Dynamics>(
    model: &D,
    initial: &Tensor,
    env: EnvId,
    max_abstract_steps: usize,
) -> Result<Rollout> {
    if max_abstract_steps == 0 {
        return Err(Error::Contract("max_abstract_steps must be >= 1".into()));
    }
    let mut frames = Vec::new();
    let mut current = initial.clone();
    let mut label = None;
    for _ in 0..max_abstract_steps {
        let next = model.step(&current)?;
        let hit = classify(env, &next);
        frames.push(next.clone());
        current = next;
        if hit.is_some() {
            label = hit;
            break;
        }
    }
    let forward_passes = frames.len() as u64;
    Ok(Rollout { label, frames, forward_passes })
}

/// Max-abs frame delta below which a rollout is considered frozen. The model
/// is a pure function of the frame, so a (near-)fixpoint can never produce a
/// new classification; cutting the rollout there changes pass counts for
/// degenerate models but never the predicted label.
const FIXPOINT_TOL: f64 = 1e-9;

fn rollout_label_fast<D: Dynamics>(
    model: &D,
    initial: &Tensor,
    env: EnvId,
    max_abstract_steps: usize,
) -> Result<(Option<u32>, u64)> {
    let mut current = initial.clone();
    for step in 1..=max_abstract_steps {
        let next = model.step(&current)?;
        if let Some(label) = classify(env, &next) {
            return Ok((Some(label), step as u64));
        }
        let frozen = next
            .data()
            .iter()
            .zip(current.data())
            .all(|(a, b)| (a - b).abs() < FIXPOINT_TOL);
        if frozen {
            return Ok((None, step as u64));
        }
        current = next;
    }
    Ok((None, max_abstract_steps as u64))
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub accuracy: f64,
    /// Predicted label per trajectory, dataset order.
    pub predictions: Vec<Option<u32>>,
    pub mean_rollout_len: f64,
    pub forward_passes: u64,
}

/// Accuracy of label prediction from each trajectory's first frame.
/// Rollouts are independent and run in parallel; results are keyed by
/// dataset order, so the report is deterministic.
pub fn evaluate_accuracy<D: Dynamics + Sync>(
    model: &D,
    dataset: &[Trajectory],
    env: EnvId,
) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(Error::Contract("evaluate_accuracy on an empty dataset".into()));
    }
    let rollouts: Vec<Rollout> = dataset
        .par_iter()
        .map(|traj| {
            let mut r = rollout_and_classify(
                model,
                &traj.frames[0],
                env,
                DEFAULT_MAX_ABSTRACT_STEPS,
            )?;
            r.frames.clear(); // only labels and pass counts are needed here
            Ok(r)
        })
        .collect::<Result<_>>()?;
    let correct = rollouts
        .iter()
        .zip(dataset)
        .filter(|(r, t)| r.label == Some(t.label))
        .count();
    let forward_passes: u64 = rollouts.iter().map(|r| r.forward_passes).sum();
    Ok(EvalReport {
        accuracy: correct as f64 / dataset.len() as f64,
        predictions: rollouts.iter().map(|r| r.label).collect(),
        mean_rollout_len: forward_passes as f64 / dataset.len() as f64,
        forward_passes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{gen_dataset, gen_trajectory, EnvConfig};
    use std::cell::Cell;
    use std::sync::Mutex;

    struct Identity;
    impl Dynamics for Identity {
        fn step(&self, frame: &Tensor) -> Result<Tensor> {
            Ok(frame.clone())
        }
    }

    struct AllZeros;
    impl Dynamics for AllZeros {
        fn step(&self, frame: &Tensor) -> Result<Tensor> {
            Ok(Tensor::zeros(frame.shape().to_vec()))
        }
    }

    /// Replays a fixed ground-truth sequence regardless of input.
    struct Replay {
        frames: Vec<Tensor>,
        cursor: Cell<usize>,
    }
    impl Dynamics for Replay {
        fn step(&self, _frame: &Tensor) -> Result<Tensor> {
            let i = (self.cursor.get() + 1).min(self.frames.len() - 1);
            self.cursor.set(i);
            Ok(self.frames[i].clone())
        }
    }

    #[test]
    fn classifiable_frame_hits_on_first_check_with_identity() {
        let traj = gen_trajectory(&EnvConfig::default_for(EnvId::ChainWorld), 5).unwrap();
        let terminal = traj.frames.last().unwrap();
        let r = rollout_and_classify(&Identity, terminal, EnvId::ChainWorld, 10).unwrap();
        assert_eq!(r.label, Some(traj.label));
        assert_eq!(r.forward_passes, 1);
    }

    #[test]
    fn zeros_model_runs_to_the_cap() {
        let traj = gen_trajectory(&EnvConfig::default_for(EnvId::ChainWorld), 5).unwrap();
        let r = rollout_and_classify(&AllZeros, &traj.frames[0], EnvId::ChainWorld, 17).unwrap();
        assert_eq!(r.label, None);
        assert_eq!(r.forward_passes, 17);
        assert_eq!(r.frames.len(), 17);
    }

    #[test]
    fn replaying_ground_truth_recovers_the_label() {
        for seed in 0..30 {
            let traj = gen_trajectory(&EnvConfig::default_for(EnvId::FunnelLite), seed).unwrap();
            let replay = Replay { frames: traj.frames.clone(), cursor: Cell::new(0) };
            let r = rollout_and_classify(
                &replay,
                &traj.frames[0],
                EnvId::FunnelLite,
                DEFAULT_MAX_ABSTRACT_STEPS,
            )
            .unwrap();
            assert_eq!(r.label, Some(traj.label), "seed {seed}");
        }
    }

    #[test]
    fn zeros_model_scores_zero_accuracy() {
        let data = gen_dataset(&EnvConfig::default_for(EnvId::ChainWorld), 10, 3).unwrap();
        struct SyncZeros;
        impl Dynamics for SyncZeros {
            fn step(&self, frame: &Tensor) -> Result<Tensor> {
                Ok(Tensor::zeros(frame.shape().to_vec()))
            }
        }
        let report = evaluate_accuracy(&SyncZeros, &data, EnvId::ChainWorld).unwrap();
        assert_eq!(report.accuracy, 0.0);
        assert_eq!(report.predictions.len(), 10);
        assert!(report.predictions.iter().all(Option::is_none));
    }

    /// Emits a frame with the blob parked on a seeded-random terminal.
    struct RandomTerminal {
        rng: Mutex<rand_chacha::ChaCha8Rng>,
    }
    impl Dynamics for RandomTerminal {
        fn step(&self, frame: &Tensor) -> Result<Tensor> {
            use rand::Rng;
            let branch: usize = self.rng.lock().unwrap().gen_range(0..3);
            let ys = [2.5f64, 8.0, 13.5];
            let mut data = vec![0.0; frame.numel()];
            let row = ys[branch].round() as usize;
            data[row * 16 + 14] = 1.0;
            Tensor::from_vec(frame.shape().to_vec(), data)
        }
    }

    #[test]
    fn random_labels_score_near_chance() {
        use rand_chacha::rand_core::SeedableRng;
        let data = gen_dataset(&EnvConfig::default_for(EnvId::ChainWorld), 1000, 8).unwrap();
        let stub = RandomTerminal {
            rng: Mutex::new(rand_chacha::ChaCha8Rng::seed_from_u64(99)),
        };
        // Serial on purpose: the stub consumes one stream.
        let mut correct = 0;
        for traj in &data {
            let r = rollout_and_classify(&stub, &traj.frames[0], EnvId::ChainWorld, 4).unwrap();
            if r.label == Some(traj.label) {
                correct += 1;
            }
        }
        let acc = correct as f64 / data.len() as f64;
        // Binomial around 1/3 at 6 sigma.
        assert!((0.23..=0.44).contains(&acc), "accuracy {acc}");
    }

    #[test]
    fn cap_contract() {
        let frame = Tensor::zeros(vec![1, 16, 16]);
        assert!(rollout_and_classify(&Identity, &frame, EnvId::ChainWorld, 0).is_err());
    }
}
