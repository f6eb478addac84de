//! Procedural trajectory environments.
//!
//! Both environments render 16x16 single-channel frames with a fixed
//! intensity code: static scene pixels at 0.25, the previous ball/agent
//! position ("trace") at 0.5, the current position at 1.0. All intensities
//! are powers of two so frames survive the f32 dataset format bit-exactly.
//!
//! Generation is a pure function of (config, seed): every random draw comes
//! from ChaCha streams derived from the trajectory seed, so datasets are
//! reproducible and generation can run in parallel.

mod chain;
mod dataset;
mod funnel;

pub use chain::ChainConfig;
pub use dataset::{encode_dataset, read_dataset, write_dataset};
pub use funnel::FunnelConfig;

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

/// Frames are square, single channel.
pub const FRAME_SIZE: usize = 16;
/// Hard cap on trajectory length; generation retries with a derived seed
/// when exceeded.
pub const T_MAX: usize = 64;
/// Retries before giving up on a seed.
pub const MAX_RETRIES: u32 = 8;

pub const BALL_INTENSITY: f64 = 1.0;
pub const TRACE_INTENSITY: f64 = 0.5;
pub const SCENE_INTENSITY: f64 = 0.25;
/// Pixels at or above this count as the blob when classifying; predicted
/// frames never reach exactly 1.0, the trace sits at 0.5.
pub const BLOB_THRESHOLD: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvId {
    FunnelLite,
    ChainWorld,
}

impl EnvId {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "funnel-lite" | "funnel" => Ok(EnvId::FunnelLite),
            "chain-world" | "chain" => Ok(EnvId::ChainWorld),
            other => Err(Error::Config(format!("unknown environment `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvId::FunnelLite => "funnel-lite",
            EnvId::ChainWorld => "chain-world",
        }
    }

    pub fn label_count(&self, config: &EnvConfig) -> usize {
        match (self, config) {
            (EnvId::FunnelLite, EnvConfig::FunnelLite(c)) => c.bins,
            (EnvId::ChainWorld, EnvConfig::ChainWorld(c)) => c.branches,
            (EnvId::FunnelLite, _) => FunnelConfig::default().bins,
            (EnvId::ChainWorld, _) => ChainConfig::default().branches,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnvConfig {
    FunnelLite(FunnelConfig),
    ChainWorld(ChainConfig),
}

impl EnvConfig {
    pub fn env_id(&self) -> EnvId {
        match self {
            EnvConfig::FunnelLite(_) => EnvId::FunnelLite,
            EnvConfig::ChainWorld(_) => EnvId::ChainWorld,
        }
    }

    pub fn default_for(env: EnvId) -> Self {
        match env {
            EnvId::FunnelLite => EnvConfig::FunnelLite(FunnelConfig::default()),
            EnvId::ChainWorld => EnvConfig::ChainWorld(ChainConfig::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EnvConfig::FunnelLite(c) => c.validate(),
            EnvConfig::ChainWorld(c) => c.validate(),
        }
    }
}

/// One frame sequence with its terminal label.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub frames: Vec<Tensor>,
    pub label: u32,
    pub env: EnvId,
    pub seed: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Generate one trajectory. Deterministic in (config, seed); retries with a
/// derived seed when the length cap is exceeded.
pub fn gen_trajectory(config: &EnvConfig, seed: u64) -> Result<Trajectory> {
    config.validate()?;
    let mut attempt_seed = seed;
    for attempt in 0..MAX_RETRIES {
        let traj = match config {
            EnvConfig::FunnelLite(c) => funnel::generate(c, attempt_seed),
            EnvConfig::ChainWorld(c) => chain::generate(c, attempt_seed),
        }?;
        if traj.len() <= T_MAX {
            debug_assert!(traj.len() >= 2);
            return Ok(Trajectory { seed, ..traj });
        }
        attempt_seed = rng::derive_seed(seed, rng::stream::RETRY, attempt as u64 + 1);
    }
    Err(Error::Generation(format!(
        "seed {seed}: trajectory exceeded T_MAX={T_MAX} after {MAX_RETRIES} retries"
    )))
}

/// Generate a dataset of `n` trajectories with per-trajectory seeds derived
/// from the master seed.
pub fn gen_dataset(config: &EnvConfig, n: usize, master_seed: u64) -> Result<Vec<Trajectory>> {
    (0..n)
        .map(|i| {
            let seed = rng::derive_seed(master_seed, rng::stream::TRAJECTORY, i as u64);
            gen_trajectory(config, seed)
        })
        .collect()
}

/// Hand-specified outcome classifier. Returns the label readable from the
/// frame, or `None` when no outcome is visible yet. Works on generated and
/// model-predicted frames alike (blob detection is a threshold, not equality).
pub fn classify(env: EnvId, frame: &Tensor) -> Option<u32> {
    let centroid = blob_centroid(frame)?;
    match env {
        EnvId::FunnelLite => funnel::classify_centroid(centroid),
        EnvId::ChainWorld => chain::classify_centroid(centroid),
    }
}

/// Centroid (row, col) of the pixels at or above [`BLOB_THRESHOLD`].
pub(crate) fn blob_centroid(frame: &Tensor) -> Option<(f64, f64)> {
    let shape = frame.shape();
    if shape.len() != 3 {
        return None;
    }
    let (h, w) = (shape[1], shape[2]);
    let data = frame.data();
    let mut mass = 0.0;
    let (mut ry, mut cx) = (0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            let v = data[y * w + x];
            if v >= BLOB_THRESHOLD {
                mass += v;
                ry += v * y as f64;
                cx += v * x as f64;
            }
        }
    }
    if mass == 0.0 {
        None
    } else {
        Some((ry / mass, cx / mass))
    }
}

/// Shared frame raster: scene at 0.25, optional trace at 0.5, ball at 1.0.
pub(crate) fn render_frame(
    scene: &[(usize, usize)],
    ball: (f64, f64),
    trace: Option<(usize, usize)>,
) -> (Tensor, (usize, usize)) {
    let mut data = vec![0.0; FRAME_SIZE * FRAME_SIZE];
    for &(row, col) in scene {
        if row < FRAME_SIZE && col < FRAME_SIZE {
            data[row * FRAME_SIZE + col] = SCENE_INTENSITY;
        }
    }
    if let Some((row, col)) = trace {
        data[row * FRAME_SIZE + col] = TRACE_INTENSITY;
    }
    let ball_px = to_pixel(ball);
    data[ball_px.0 * FRAME_SIZE + ball_px.1] = BALL_INTENSITY;
    let tensor = Tensor::from_vec(vec![1, FRAME_SIZE, FRAME_SIZE], data)
        .expect("rendered frames are well-formed");
    (tensor, ball_px)
}

pub(crate) fn to_pixel((y, x): (f64, f64)) -> (usize, usize) {
    let clamp = |v: f64| (v.round().max(0.0) as usize).min(FRAME_SIZE - 1);
    (clamp(y), clamp(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classify_empty_frame_is_none() {
        let frame = Tensor::zeros(vec![1, FRAME_SIZE, FRAME_SIZE]);
        assert_eq!(classify(EnvId::FunnelLite, &frame), None);
        assert_eq!(classify(EnvId::ChainWorld, &frame), None);
    }

    #[test]
    fn generation_is_deterministic() {
        for config in [
            EnvConfig::default_for(EnvId::FunnelLite),
            EnvConfig::default_for(EnvId::ChainWorld),
        ] {
            let a = gen_trajectory(&config, 12345).unwrap();
            let b = gen_trajectory(&config, 12345).unwrap();
            assert_eq!(a.label, b.label);
            assert_eq!(a.frames.len(), b.frames.len());
            for (fa, fb) in a.frames.iter().zip(&b.frames) {
                assert_eq!(fa.data(), fb.data());
            }
        }
    }

    #[test]
    fn first_frame_unclassifiable_last_frame_labeled() {
        for config in [
            EnvConfig::default_for(EnvId::FunnelLite),
            EnvConfig::default_for(EnvId::ChainWorld),
        ] {
            let env = config.env_id();
            for seed in 0..50 {
                let t = gen_trajectory(&config, seed).unwrap();
                assert!(t.len() >= 2, "{env:?} seed {seed} too short");
                assert_eq!(classify(env, &t.frames[0]), None, "{env:?} seed {seed}");
                assert_eq!(
                    classify(env, t.frames.last().unwrap()),
                    Some(t.label),
                    "{env:?} seed {seed}"
                );
            }
        }
    }

    #[test]
    fn frames_are_unit_interval_with_single_blob() {
        let config = EnvConfig::default_for(EnvId::FunnelLite);
        let t = gen_trajectory(&config, 7).unwrap();
        for frame in &t.frames {
            assert!(frame.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
            let full = frame.data().iter().filter(|&&v| v == BALL_INTENSITY).count();
            assert_eq!(full, 1, "exactly one full-intensity pixel");
        }
    }
}
