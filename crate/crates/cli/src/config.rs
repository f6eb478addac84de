//! Experiment configuration: a flat JSON object, with CLI flags overriding
//! keys one for one.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use asi_core::env::{ChainConfig, EnvConfig, EnvId, FunnelConfig, FRAME_SIZE};
use asi_core::model::Architecture;
use asi_core::optim::LrSchedule;
use asi_core::train::{BpttMode, Method, TrainConfig};
use asi_core::Error;

/// Every experiment knob. Unknown keys are rejected by name.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    // Environment
    pub env: String,
    pub bounciness: f64,
    pub obstacle_rows: usize,
    pub bins: usize,
    pub jitter: f64,
    pub segments: usize,
    pub duration_min: usize,
    pub duration_max: usize,
    pub branches: usize,
    pub position_noise: f64,

    // Data
    pub n_train: usize,
    pub n_valid: usize,
    /// Optional pre-generated dataset paths; generated procedurally when
    /// absent.
    pub train_data: Option<PathBuf>,
    pub valid_data: Option<PathBuf>,
    /// Swap the training set at this epoch boundary.
    pub switch_epoch: Option<u64>,
    pub switch_data: Option<PathBuf>,
    /// Bounciness for the procedurally generated switch dataset (used when
    /// `switch_epoch` is set without `switch_data`).
    pub switch_bounciness: Option<f64>,

    // Model
    pub arch: String,
    pub n_kernels: usize,

    // Method + training
    pub method: String,
    pub dt: usize,
    pub horizon: usize,
    pub exploration_k: Option<u64>,
    pub sampling_k: Option<u64>,
    pub batch_trajectories: usize,
    pub learning_rate: f64,
    pub lr_decay_step: u64,
    pub max_training_steps: u64,
    pub max_forward_passes: Option<u64>,
    pub bptt: String,
    pub seed: u64,

    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let funnel = FunnelConfig::default();
        let chain = ChainConfig::default();
        ExperimentConfig {
            env: "chain-world".into(),
            bounciness: funnel.bounciness,
            obstacle_rows: funnel.obstacle_rows,
            bins: funnel.bins,
            jitter: funnel.jitter,
            segments: chain.segments,
            duration_min: chain.duration_range.0,
            duration_max: chain.duration_range.1,
            branches: chain.branches,
            position_noise: chain.position_noise,
            n_train: 200,
            n_valid: 200,
            train_data: None,
            valid_data: None,
            switch_epoch: None,
            switch_data: None,
            switch_bounciness: None,
            arch: "small-conv-3".into(),
            n_kernels: 8,
            method: "asi".into(),
            dt: 1,
            horizon: 8,
            exploration_k: None,
            sampling_k: None,
            batch_trajectories: 2,
            learning_rate: 5e-4,
            lr_decay_step: 15000,
            max_training_steps: 3000,
            max_forward_passes: None,
            bptt: "full".into(),
            seed: 1,
            out_dir: PathBuf::from("runs/default"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn env_id(&self) -> Result<EnvId, Error> {
        EnvId::parse(&self.env)
    }

    pub fn env_config(&self) -> Result<EnvConfig, Error> {
        let config = match self.env_id()? {
            EnvId::FunnelLite => EnvConfig::FunnelLite(FunnelConfig {
                obstacle_rows: self.obstacle_rows,
                bins: self.bins,
                bounciness: self.bounciness,
                jitter: self.jitter,
            }),
            EnvId::ChainWorld => EnvConfig::ChainWorld(ChainConfig {
                segments: self.segments,
                duration_range: (self.duration_min, self.duration_max),
                branches: self.branches,
                position_noise: self.position_noise,
            }),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn method(&self) -> Result<Method, Error> {
        Method::parse(&self.method, Some(self.dt))
    }

    pub fn architecture(&self) -> Result<Architecture, Error> {
        Architecture::parse(&self.arch)
    }

    /// Schedule constants default to a third of the step budget.
    pub fn train_config(&self) -> Result<TrainConfig, Error> {
        let third = (self.max_training_steps / 3).max(1);
        let bptt = match self.bptt.as_str() {
            "full" => BpttMode::Full,
            "detached" => BpttMode::Detached,
            other => return Err(Error::Config(format!("unknown bptt mode `{other}`"))),
        };
        let cfg = TrainConfig {
            horizon: self.horizon,
            exploration_k: self.exploration_k.unwrap_or(third),
            exploration_enabled: true,
            sampling_k: self.sampling_k.unwrap_or(third),
            batch_trajectories: self.batch_trajectories,
            lr_schedule: LrSchedule::new(self.learning_rate, self.lr_decay_step),
            max_training_steps: self.max_training_steps,
            max_forward_passes: self.max_forward_passes,
            bptt,
            master_seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn frame_shape(&self) -> (usize, usize, usize) {
        (1, FRAME_SIZE, FRAME_SIZE)
    }

    pub fn validate_paths(&self) -> Result<(), Error> {
        for path in [&self.train_data, &self.valid_data, &self.switch_data]
            .into_iter()
            .flatten()
        {
            if !path.exists() {
                return Err(Error::Config(format!("dataset path {} not found", path.display())));
            }
        }
        if self.switch_epoch.is_some()
            && self.switch_data.is_none()
            && self.switch_bounciness.is_none()
        {
            return Err(Error::Config(
                "switch_epoch requires switch_data or switch_bounciness".into(),
            ));
        }
        if self.n_train == 0 || self.n_valid == 0 {
            return Err(Error::Config("n_train and n_valid must be >= 1".into()));
        }
        Ok(())
    }
}
