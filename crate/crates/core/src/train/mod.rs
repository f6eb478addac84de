//! The training supervisor: temporal matching, curricula, fixed-skip
//! baselines, rollout evaluation, and the skip-interval sweep.
//!
//! Ground-truth time indices `t` are 1-based throughout (frame `x_t` is
//! `trajectory.frames[t-1]`), matching the loop variables of the training
//! procedure; abstract steps `u` count model applications.

mod driver;
mod eval;
mod matching;
mod sweep;
mod trajectory;

pub use driver::{train, TrainData, TrainOutcome, ValidationEvent};
pub use eval::{
    evaluate_accuracy, rollout_and_classify, Dynamics, EvalReport, Rollout,
    DEFAULT_MAX_ABSTRACT_STEPS,
};
pub use matching::temporal_match;
pub use sweep::{skip_sweep, SweepRow};
pub use trajectory::{asi_train_trajectory, fixed_train_trajectory, StepStreams};

use crate::error::{Error, Result};
use crate::optim::LrSchedule;

/// Probability of replacing the matched frame with a uniformly random one;
/// anneals linearly to zero over `k` steps.
pub fn exploration_prob(step: u64, k: u64) -> f64 {
    debug_assert!(k >= 1);
    (1.0 - step as f64 / k as f64).max(0.0)
}

/// Probability of feeding the matched ground-truth frame (rather than the
/// model's own prediction) as the next input; same linear form.
pub fn sampling_prob(step: u64, k: u64) -> f64 {
    debug_assert!(k >= 1);
    (1.0 - step as f64 / k as f64).max(0.0)
}

/// Whether gradients flow through fed-back predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BpttMode {
    Full,
    Detached,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Asi,
    AsiNoExplore,
    Fixed(usize),
}

impl Method {
    pub fn parse(name: &str, dt: Option<usize>) -> Result<Self> {
        match name {
            "asi" => Ok(Method::Asi),
            "asi-no-explore" => Ok(Method::AsiNoExplore),
            "fixed" => Ok(Method::Fixed(dt.unwrap_or(1))),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Method::Asi => "asi".into(),
            Method::AsiNoExplore => "asi-no-explore".into(),
            Method::Fixed(dt) => format!("fixed-dt{dt}"),
        }
    }
}

/// Every knob of the training loop.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Matching horizon H: the farthest frame one prediction may bind to.
    pub horizon: usize,
    /// Steps until the exploration probability reaches zero.
    pub exploration_k: u64,
    /// Whether exploration happens at all (`false` for the no-explore arm).
    pub exploration_enabled: bool,
    /// Steps until scheduled sampling feeds only predictions.
    pub sampling_k: u64,
    /// Trajectories accumulated per optimizer step.
    pub batch_trajectories: usize,
    pub lr_schedule: LrSchedule,
    pub max_training_steps: u64,
    /// Optional training forward-pass budget; training stops once reached.
    pub max_forward_passes: Option<u64>,
    pub bptt: BpttMode,
    pub master_seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        if self.exploration_k == 0 || self.sampling_k == 0 {
            return Err(Error::Config("schedule constants must be >= 1".into()));
        }
        if self.batch_trajectories == 0 {
            return Err(Error::Config("batch_trajectories must be >= 1".into()));
        }
        Ok(())
    }

    /// Exploration probability for a method at a step.
    pub fn mu(&self, method: Method, step: u64) -> f64 {
        match method {
            Method::Asi if self.exploration_enabled => exploration_prob(step, self.exploration_k),
            _ => 0.0,
        }
    }

    pub fn epsilon(&self, step: u64) -> f64 {
        sampling_prob(step, self.sampling_k)
    }
}

/// One abstract step's matching decision.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// Abstract step index u, 1-based, strictly increasing.
    pub abstract_step: usize,
    /// Ground-truth index t before this step.
    pub source_t: usize,
    /// Ground-truth index the prediction was bound to.
    pub matched_t: usize,
    /// Skip interval tau = matched_t - source_t.
    pub skip: usize,
    pub step_loss: f64,
    pub explored: bool,
    /// Whether the *next* model input was the prediction (vs. ground truth).
    pub fed_prediction: bool,
}

/// Per-trajectory training outcome.
#[derive(Debug, Clone)]
pub struct TrajectoryLossReport {
    /// Mean of the step losses (the differentiable objective's value).
    pub mean_loss: f64,
    pub step_records: Vec<StepRecord>,
    pub forward_passes: u64,
}

impl TrajectoryLossReport {
    pub fn mean_skip(&self) -> f64 {
        if self.step_records.is_empty() {
            return 0.0;
        }
        self.step_records.iter().map(|r| r.skip as f64).sum::<f64>()
            / self.step_records.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exploration_schedule_exact_points() {
        assert_eq!(exploration_prob(0, 7500), 1.0);
        assert_eq!(exploration_prob(7500, 7500), 0.0);
        assert_eq!(exploration_prob(3750, 7500), 0.5);
        assert_eq!(exploration_prob(20000, 7500), 0.0);
    }

    #[test]
    fn sampling_schedule_exact_points() {
        assert_eq!(sampling_prob(0, 4000), 1.0);
        assert_eq!(sampling_prob(4000, 4000), 0.0);
        assert_eq!(sampling_prob(2000, 4000), 0.5);
    }

    #[test]
    fn method_parsing() {
        assert_eq!(Method::parse("asi", None).unwrap(), Method::Asi);
        assert_eq!(Method::parse("asi-no-explore", None).unwrap(), Method::AsiNoExplore);
        assert_eq!(Method::parse("fixed", Some(2)).unwrap(), Method::Fixed(2));
        assert!(Method::parse("adaptive", None).is_err());
    }
}
