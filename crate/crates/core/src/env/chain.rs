//! Chain-world: a blob crosses a left-to-right chain of segments, then
//! branches to one of several terminals.
//!
//! Segment boundary positions are deterministic waypoints; the frames in
//! between are jittered and each segment consumes a seeded-random number of
//! frames, so the same mechanism ("cross one segment") takes different
//! amounts of time in different trajectories. The chosen terminal is marked
//! in every frame by a static bracket, which is what makes the outcome
//! inferable from the first frame.

use rand::Rng;

use super::{render_frame, EnvId, Trajectory, FRAME_SIZE};
use crate::error::{Error, Result};
use crate::rng::{self, stream};

/// Runway the blob travels along.
const RUNWAY_Y: f64 = 8.0;
const RUNWAY_X0: f64 = 1.5;
const RUNWAY_X1: f64 = 11.5;
/// Terminals sit in the rightmost column band. The band starts past the
/// rendered column of every mid-hop position, so only arrival frames (and
/// predictions centered on a terminal) classify.
const TERMINAL_X: f64 = 14.0;
const TERMINAL_BAND_X: f64 = 13.5;
/// Frames spent hopping from the last waypoint to the terminal.
const BRANCH_HOP: (usize, usize) = (2, 4);

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub segments: usize,
    pub duration_range: (usize, usize),
    pub branches: usize,
    pub position_noise: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig { segments: 4, duration_range: (2, 9), branches: 3, position_noise: 1.4 }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.branches < 2 {
            return Err(Error::Config("chain-world needs at least 2 branches".into()));
        }
        if self.segments == 0 {
            return Err(Error::Config("chain-world needs at least 1 segment".into()));
        }
        let (lo, hi) = self.duration_range;
        if lo == 0 || hi < lo {
            return Err(Error::Config(format!("empty duration range [{lo},{hi}]")));
        }
        Ok(())
    }
}

fn terminal_ys(branches: usize) -> Vec<f64> {
    (0..branches)
        .map(|b| 2.5 + 11.0 * b as f64 / (branches - 1) as f64)
        .collect()
}

pub(super) fn classify_centroid(centroid: (f64, f64)) -> Option<u32> {
    classify_centroid_with(ChainConfig::default().branches, centroid)
}

pub(super) fn classify_centroid_with(branches: usize, (row, col): (f64, f64)) -> Option<u32> {
    if col < TERMINAL_BAND_X {
        return None;
    }
    terminal_ys(branches)
        .iter()
        .enumerate()
        .find(|(_, &ty)| (row - ty).abs() <= 2.0)
        .map(|(i, _)| i as u32)
}

pub(super) fn generate(config: &ChainConfig, seed: u64) -> Result<Trajectory> {
    let mut rng = rng::stream_rng(seed, stream::LAYOUT, 0);
    let (d_lo, d_hi) = config.duration_range;
    let branch = rng.gen_range(0..config.branches);
    let terminal_y = terminal_ys(config.branches)[branch];

    // Static marker bracket beside the chosen terminal.
    let ty = terminal_y.round() as i64;
    let mut scene = Vec::new();
    for dy in -1i64..=1 {
        let y = ty + dy;
        if (0..FRAME_SIZE as i64).contains(&y) {
            scene.push((y as usize, FRAME_SIZE - 1));
        }
    }

    let waypoint_x = |r: usize| {
        RUNWAY_X0 + (RUNWAY_X1 - RUNWAY_X0) * r as f64 / config.segments as f64
    };

    let (first, mut prev_px) = render_frame(&scene, (RUNWAY_Y, waypoint_x(0)), None);
    let mut frames = vec![first];
    let mut push = |frames: &mut Vec<_>, pos: (f64, f64)| {
        let (frame, px) = render_frame(&scene, pos, Some(prev_px));
        frames.push(frame);
        prev_px = px;
    };

    for r in 0..config.segments {
        let duration = rng.gen_range(d_lo..=d_hi);
        let (xa, xb) = (waypoint_x(r), waypoint_x(r + 1));
        for k in 1..=duration {
            let frac = k as f64 / duration as f64;
            let x = xa + (xb - xa) * frac;
            let y = if k == duration {
                RUNWAY_Y
            } else {
                RUNWAY_Y + rng.gen_range(-1.0..1.0) * config.position_noise
            };
            push(&mut frames, (y, x));
        }
    }

    // Branch hop from the last waypoint to the terminal.
    let hop = rng.gen_range(BRANCH_HOP.0..=BRANCH_HOP.1);
    let (xa, ya) = (waypoint_x(config.segments), RUNWAY_Y);
    for k in 1..=hop {
        let frac = k as f64 / hop as f64;
        let x = xa + (TERMINAL_X - xa) * frac;
        let mut y = ya + (terminal_y - ya) * frac;
        if k < hop {
            y += rng.gen_range(-1.0..1.0) * config.position_noise * 0.5;
        }
        push(&mut frames, (y, x));
    }

    Ok(Trajectory { frames, label: branch as u32, env: EnvId::ChainWorld, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{classify, gen_trajectory, EnvConfig, T_MAX};

    fn default_config() -> EnvConfig {
        EnvConfig::ChainWorld(ChainConfig::default())
    }

    #[test]
    fn lengths_stay_in_constructed_bounds() {
        let config = default_config();
        let c = ChainConfig::default();
        let lo = 1 + c.segments * c.duration_range.0 + BRANCH_HOP.0;
        let hi = 1 + c.segments * c.duration_range.1 + BRANCH_HOP.1;
        assert!(hi <= T_MAX);
        for seed in 0..500 {
            let t = gen_trajectory(&config, seed).unwrap();
            assert!(
                (lo..=hi).contains(&t.len()),
                "seed {seed}: length {} outside [{lo},{hi}]",
                t.len()
            );
        }
    }

    #[test]
    fn segment_durations_actually_vary() {
        // Premise of temporal abstraction: the same mechanism takes
        // different amounts of time. Trajectory lengths are a proxy.
        let config = default_config();
        let mut lengths = std::collections::HashSet::new();
        for seed in 0..1000 {
            lengths.insert(gen_trajectory(&config, seed).unwrap().len());
        }
        assert!(lengths.len() >= 3, "only {} distinct lengths", lengths.len());
    }

    #[test]
    fn all_branches_reachable() {
        let config = default_config();
        let mut counts = [0usize; 3];
        for seed in 0..1000 {
            counts[gen_trajectory(&config, seed).unwrap().label as usize] += 1;
        }
        for (b, &c) in counts.iter().enumerate() {
            let freq = c as f64 / 1000.0;
            assert!((0.1..=0.9).contains(&freq), "branch {b} frequency {freq}");
        }
    }

    #[test]
    fn intermediate_classifications_match_label() {
        let config = default_config();
        for seed in 0..300 {
            let t = gen_trajectory(&config, seed).unwrap();
            for frame in &t.frames {
                if let Some(label) = classify(EnvId::ChainWorld, frame) {
                    assert_eq!(label, t.label, "seed {seed}");
                }
            }
        }
    }
}
