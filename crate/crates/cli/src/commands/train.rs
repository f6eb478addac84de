//! `asi train`: run one training experiment, append metrics, write the final
//! checkpoint.

use std::path::PathBuf;

use asi_core::env::{encode_dataset, EnvConfig, FunnelConfig};
use asi_core::model::DynamicsModel;
use asi_core::rng;
use asi_core::train::{train, TrainData};
use asi_core::{Error, Result};

use crate::config::ExperimentConfig;
use crate::metrics::{fingerprint, MetricsRow, MetricsWriter};

use super::resolve_dataset;

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    /// Experiment config file (flat JSON); flags below override its keys
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub env: Option<String>,
    /// asi | asi-no-explore | fixed
    #[arg(long)]
    pub method: Option<String>,
    /// Skip interval for method=fixed
    #[arg(long)]
    pub dt: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_valid: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<u64>,
    /// Training forward-pass budget
    #[arg(long)]
    pub budget: Option<u64>,
    #[arg(long)]
    pub train_data: Option<PathBuf>,
    #[arg(long)]
    pub valid_data: Option<PathBuf>,
    #[arg(long)]
    pub switch_epoch: Option<u64>,
    #[arg(long)]
    pub switch_data: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub n_kernels: Option<usize>,
    #[arg(long)]
    pub arch: Option<String>,
}

impl TrainArgs {
    pub fn merged_config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! overlay {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field { cfg.$field = v.clone(); })*
            };
        }
        overlay!(env, method, seed, horizon, n_train, n_valid, n_kernels, arch, out_dir, dt);
        if let Some(v) = self.max_steps {
            cfg.max_training_steps = v;
        }
        if let Some(v) = self.budget {
            cfg.max_forward_passes = Some(v);
        }
        if let Some(v) = &self.train_data {
            cfg.train_data = Some(v.clone());
        }
        if let Some(v) = &self.valid_data {
            cfg.valid_data = Some(v.clone());
        }
        if let Some(v) = self.switch_epoch {
            cfg.switch_epoch = Some(v);
        }
        if let Some(v) = &self.switch_data {
            cfg.switch_data = Some(v.clone());
        }
        Ok(cfg)
    }
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let cfg = args.merged_config()?;
    run_experiment(&cfg)
}

/// The whole experiment given a resolved config. Also the entry point the
/// acceptance suite drives in-process.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate_paths()?;
    let env = cfg.env_id()?;
    let env_config = cfg.env_config()?;
    let method = cfg.method()?;
    let train_config = cfg.train_config()?;

    let train_set = resolve_dataset(
        cfg.train_data.as_deref(),
        &env_config,
        env,
        cfg.n_train,
        cfg.seed,
        rng::stream::DATASET_TRAIN,
    )?;
    let valid_set = resolve_dataset(
        cfg.valid_data.as_deref(),
        &env_config,
        env,
        cfg.n_valid,
        cfg.seed,
        rng::stream::DATASET_VALID,
    )?;

    // Optional switch dataset: a file, or the same seeds re-simulated under a
    // different wall bounciness.
    let switch_set = match (&cfg.switch_epoch, &cfg.switch_data, cfg.switch_bounciness) {
        (Some(_), Some(path), _) => Some(asi_core::env::read_dataset(path, env)?),
        (Some(_), None, Some(b)) => {
            let alt = match &env_config {
                EnvConfig::FunnelLite(f) => {
                    EnvConfig::FunnelLite(FunnelConfig { bounciness: b, ..f.clone() })
                }
                other => other.clone(),
            };
            Some(resolve_dataset(
                None,
                &alt,
                env,
                cfg.n_train,
                cfg.seed,
                rng::stream::DATASET_TRAIN,
            )?)
        }
        _ => None,
    };

    let (c, h, w) = cfg.frame_shape();
    let shape = train_set[0].frames[0].shape();
    if shape != [c, h, w] {
        return Err(Error::dim(
            "train",
            format!("dataset frames {shape:?}, expected {c}x{h}x{w}"),
        ));
    }

    let mut model =
        DynamicsModel::new(cfg.architecture()?, cfg.n_kernels, (c, h, w), cfg.seed)?;

    std::fs::create_dir_all(&cfg.out_dir)?;
    let metrics_path = cfg.out_dir.join("metrics.csv");
    let mut writer = MetricsWriter::create(&metrics_path)?;

    let fp_initial = fingerprint(&encode_dataset(&train_set)?);
    println!("training-set fingerprint: {fp_initial:016x} (dataset 0)");
    let fp_switch = switch_set
        .as_ref()
        .map(|s| encode_dataset(s).map(|b| fingerprint(&b)))
        .transpose()?;

    let data = TrainData {
        initial: &train_set,
        switch: cfg
            .switch_epoch
            .and_then(|e| switch_set.as_ref().map(|s| (e, s.as_slice()))),
    };

    let method_label = method.label();
    let mut last_dataset = 0usize;
    let mut write_err: Option<Error> = None;
    let outcome = train(&mut model, data, &train_config, method, &valid_set, |event| {
        if event.dataset_index != last_dataset {
            last_dataset = event.dataset_index;
            if let Some(fp) = fp_switch {
                println!(
                    "training-set fingerprint: {fp:016x} (dataset {}, switched at epoch {})",
                    event.dataset_index,
                    cfg.switch_epoch.unwrap_or_default()
                );
            }
        }
        let row = MetricsRow::from_event(&method_label, cfg.seed, event);
        if write_err.is_none() {
            if let Err(e) = writer.append(&row) {
                write_err = Some(e);
            }
        }
    })?;
    if let Some(e) = write_err {
        return Err(e);
    }

    let ckpt_path = cfg.out_dir.join("model.ckpt");
    model.save(&ckpt_path)?;

    let last = outcome.events.last();
    println!(
        "finished: {} optimizer steps, {} training forward passes, final val_accuracy {}",
        outcome.optimizer_steps,
        outcome.train_forward_passes,
        last.map(|e| format!("{:.4}", e.val_accuracy)).unwrap_or_else(|| "n/a".into()),
    );
    println!("metrics: {}", metrics_path.display());
    println!("checkpoint: {}", ckpt_path.display());
    Ok(())
}
