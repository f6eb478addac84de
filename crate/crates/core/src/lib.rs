//! Training supervisor for temporally abstract dynamics models.
//!
//! A recurrent convolutional model `f : frame -> frame` is trained to predict
//! *some* future frame of a trajectory rather than the very next one: each
//! prediction is matched to the best-fitting ground-truth frame within a
//! horizon, with an annealed exploration curriculum softening the
//! winner-takes-all matching and scheduled sampling shifting inputs from
//! ground truth to the model's own predictions. The crate also ships the
//! numerical stack this needs (a small reverse-mode autodiff tape, conv
//! models, Adam), two procedural trajectory environments with hand-specified
//! outcome classifiers, fixed-skip baselines, and a deterministic experiment
//! driver.

pub mod env;
pub mod error;
pub mod gradcheck;
pub mod kernels;
pub mod model;
pub mod optim;
pub mod rng;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
