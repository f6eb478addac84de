//! Temporal matching: bind a prediction to the best-fitting ground-truth
//! frame within the horizon.

use crate::env::Trajectory;
use crate::error::{Error, Result};
use crate::kernels;

/// Argmin of the BCE loss between `prediction` and the candidate frames
/// `x_{t+1} ..= x_min(t+horizon, T)` (1-based indices). Ties break toward the
/// smallest index, i.e. the least-skipping candidate. Returns the matched
/// index and the loss at it.
pub fn temporal_match(
    prediction: &[f64],
    trajectory: &Trajectory,
    t: usize,
    horizon: usize,
) -> Result<(usize, f64)> {
    let len = trajectory.len();
    if t >= len {
        return Err(Error::Contract(format!(
            "temporal_match at t={t} with trajectory length {len}: empty candidate set"
        )));
    }
    let upper = (t + horizon).min(len);
    let mut best_t = t + 1;
    let mut best_loss = kernels::bce(prediction, trajectory.frames[t].data());
    for cand in (t + 2)..=upper {
        let loss = kernels::bce(prediction, trajectory.frames[cand - 1].data());
        if loss < best_loss {
            best_loss = loss;
            best_t = cand;
        }
    }
    Ok((best_t, best_loss))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvId;
    use crate::tensor::Tensor;

    fn toy_trajectory(frames: Vec<Vec<f64>>) -> Trajectory {
        let frames = frames
            .into_iter()
            .map(|d| {
                let n = d.len();
                Tensor::from_vec(vec![1, 1, n], d).unwrap()
            })
            .collect();
        Trajectory { frames, label: 0, env: EnvId::ChainWorld, seed: 0 }
    }

    #[test]
    fn horizon_one_matches_next() {
        let traj = toy_trajectory(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]);
        let (m, _) = temporal_match(&[0.2, 0.8], &traj, 1, 1).unwrap();
        assert_eq!(m, 2);
    }

    #[test]
    fn picks_best_candidate_by_scalar_oracle() {
        // Prediction [0.9, 0.1]; candidates x_3=[0,1], x_4=[1,0], x_5=[0.5,0.5].
        let traj = toy_trajectory(vec![
            vec![0.0, 0.0],
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![0.5, 0.5],
        ]);
        let pred = [0.9, 0.1];
        let (m, loss) = temporal_match(&pred, &traj, 2, 3).unwrap();
        assert_eq!(m, 4);
        // Scalar BCE oracle for the winner.
        let oracle = -(0.9f64.ln() + 0.9f64.ln()) / 2.0;
        assert!((loss - oracle).abs() < 1e-12);
    }

    #[test]
    fn ties_break_to_smaller_index() {
        let traj = toy_trajectory(vec![
            vec![0.0],
            vec![0.5],
            vec![0.5],
            vec![0.5],
        ]);
        let (m, _) = temporal_match(&[0.3], &traj, 1, 3).unwrap();
        assert_eq!(m, 2);
    }

    #[test]
    fn horizon_clamps_at_trajectory_end() {
        let traj = toy_trajectory(vec![vec![0.0], vec![0.9], vec![0.1]]);
        let (m, _) = temporal_match(&[0.1], &traj, 2, 10).unwrap();
        assert_eq!(m, 3);
    }

    #[test]
    fn exhausted_trajectory_is_contract_error() {
        let traj = toy_trajectory(vec![vec![0.0], vec![1.0]]);
        assert!(temporal_match(&[0.5], &traj, 2, 3).is_err());
    }
}
