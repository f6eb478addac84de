//! Funnel-lite: a ball falls through rows of funnel-shaped obstacles onto one
//! of three landing bins.
//!
//! All outcome-relevant physics is deterministic given the layout visible in
//! the first frame: captures release the ball at the funnel mouth with zero
//! horizontal velocity, so the landing bin is a pure function of the scene
//! and the initial ball state. The only chaotic part is *inside* a funnel:
//! the ball bounces between the walls for a number of frames that depends on
//! capture speed and wall bounciness, with render-only jitter on top. That
//! sub-sequence is exactly the part a temporally abstract model can skip.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{render_frame, to_pixel, EnvId, Trajectory, FRAME_SIZE, T_MAX};
use crate::error::{Error, Result};
use crate::rng::{self, stream};

const GRAVITY: f64 = 0.25;
const VY_CAP: f64 = 1.6;
/// Horizontal capture range around a funnel center.
const CAPTURE_HW: f64 = 2.0;
/// Bounce walls inside a funnel.
const WALL_HW: f64 = 1.4;
/// Horizontal speed below which a captured ball snaps to the mouth.
const V_RELEASE: f64 = 0.3;
/// Captured balls slower than this get bumped up so every capture bounces.
const V_CAPTURE_FLOOR: f64 = 0.55;
const FLOOR_Y: f64 = 15.0;
/// Below this the ball is in a bin chute: horizontal motion stops, so the
/// first frame the classifier fires on always agrees with the landing bin.
const CHUTE_Y: f64 = 12.5;

#[derive(Debug, Clone, PartialEq)]
pub struct FunnelConfig {
    pub obstacle_rows: usize,
    pub bins: usize,
    pub bounciness: f64,
    pub jitter: f64,
}

impl Default for FunnelConfig {
    fn default() -> Self {
        FunnelConfig { obstacle_rows: 3, bins: 3, bounciness: 0.6, jitter: 0.3 }
    }
}

impl FunnelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 {
            return Err(Error::Config("funnel-lite needs at least 2 bins".into()));
        }
        if self.obstacle_rows == 0 || self.obstacle_rows > 3 {
            return Err(Error::Config("funnel-lite supports 1..=3 obstacle rows".into()));
        }
        if !(0.0..=1.0).contains(&self.bounciness) {
            return Err(Error::Config(format!("bounciness {} outside [0,1]", self.bounciness)));
        }
        Ok(())
    }

    fn row_ys(&self) -> Vec<f64> {
        match self.obstacle_rows {
            1 => vec![8.0],
            2 => vec![5.0, 11.0],
            _ => vec![4.0, 8.0, 12.0],
        }
    }
}

pub fn bin_of_col(col: usize, bins: usize) -> u32 {
    ((col * bins) / FRAME_SIZE).min(bins - 1) as u32
}

/// Classifier geometry for the default 3-bin board.
pub(super) fn classify_centroid((row, col): (f64, f64)) -> Option<u32> {
    classify_centroid_with(FunnelConfig::default().bins, (row, col))
}

pub(super) fn classify_centroid_with(bins: usize, (row, col): (f64, f64)) -> Option<u32> {
    if row >= 13.5 {
        Some(bin_of_col(col.round() as usize, bins))
    } else {
        None
    }
}

struct Layout {
    /// (row_y, funnel centers)
    rows: Vec<(f64, Vec<f64>)>,
    scene: Vec<(usize, usize)>,
    x0: f64,
    vx0: f64,
}

/// Every layout decision draws from the layout stream in a fixed order, so
/// the same seed yields the same board under any bounciness setting.
fn draw_layout(config: &FunnelConfig, layout_rng: &mut ChaCha8Rng) -> Layout {
    let mut rows = Vec::new();
    for row_y in config.row_ys() {
        let two: bool = layout_rng.gen_bool(0.5);
        let j1: f64 = layout_rng.gen_range(-1.5..1.5);
        let j2: f64 = layout_rng.gen_range(-1.5..1.5);
        let centers = if two {
            vec![4.5 + j1, 11.5 + j2]
        } else {
            vec![8.0 + 3.0 * j1]
        };
        rows.push((row_y, centers));
    }
    let x0 = layout_rng.gen_range(2.5..13.5);
    let sign = if layout_rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let vx0 = sign * layout_rng.gen_range(0.35..0.8);

    let mut scene = Vec::new();
    for (row_y, centers) in &rows {
        let ry = *row_y as usize;
        for &cx in centers {
            let c = cx.round() as i64;
            for (dy, dx) in [(-1i64, -2i64), (-1, 2), (0, -1), (0, 1)] {
                let (y, x) = (ry as i64 + dy, c + dx);
                if (0..FRAME_SIZE as i64).contains(&y) && (0..FRAME_SIZE as i64).contains(&x) {
                    scene.push((y as usize, x as usize));
                }
            }
        }
    }
    // Bin separators along the bottom band.
    for k in 1..config.bins {
        let col = (k * FRAME_SIZE) / config.bins;
        scene.push((14, col));
        scene.push((15, col));
    }
    Layout { rows, scene, x0, vx0 }
}

enum Mode {
    Falling,
    /// Bouncing inside the funnel centered at `cx` on the row at `row_y`.
    Captured { cx: f64, row_y: f64 },
    Landed,
}

pub(super) fn generate(config: &FunnelConfig, seed: u64) -> Result<Trajectory> {
    let mut layout_rng = rng::stream_rng(seed, stream::LAYOUT, 0);
    let mut chaos_rng = rng::stream_rng(seed, stream::CHAOS, 0);
    let layout = draw_layout(config, &mut layout_rng);

    let (mut x, mut y) = (layout.x0, 1.0);
    let (mut vx, mut vy) = (layout.vx0, 0.0);
    let mut next_row = 0usize;
    let mut mode = Mode::Falling;

    let (first, mut prev_px) = render_frame(&layout.scene, (y, x), None);
    let mut frames = vec![first];

    while frames.len() <= T_MAX + 1 {
        // Rendered position may carry chaos jitter; state never does.
        let mut render_pos = None;
        match mode {
            Mode::Falling => {
                let (x_old, y_old) = (x, y);
                vy = (vy + GRAVITY).min(VY_CAP);
                y += vy;
                x += vx;
                if x < 0.5 {
                    x = 1.0 - x;
                    vx = -vx;
                } else if x > 15.5 {
                    x = 31.0 - x;
                    vx = -vx;
                }
                if y >= CHUTE_Y {
                    vx = 0.0;
                }
                if y >= FLOOR_Y {
                    y = FLOOR_Y;
                    mode = Mode::Landed;
                } else if let Some(&(row_y, ref centers)) = layout.rows.get(next_row) {
                    if y_old < row_y && y >= row_y {
                        let t = (row_y - y_old) / (y - y_old);
                        let x_cross = x_old + t * (x - x_old);
                        next_row += 1;
                        if let Some(&cx) =
                            centers.iter().find(|&&cx| (x_cross - cx).abs() <= CAPTURE_HW)
                        {
                            x = x_cross.clamp(cx - WALL_HW, cx + WALL_HW);
                            y = row_y;
                            vy = 0.0;
                            if vx.abs() < V_CAPTURE_FLOOR {
                                vx = if x_cross <= cx { V_CAPTURE_FLOOR } else { -V_CAPTURE_FLOOR };
                            }
                            mode = Mode::Captured { cx, row_y };
                        }
                    }
                }
            }
            Mode::Captured { cx, row_y } => {
                if vx.abs() < V_RELEASE {
                    // Snap to the mouth and drop out.
                    x = cx;
                    y = row_y + 1.2;
                    vx = 0.0;
                    vy = 0.4;
                    mode = Mode::Falling;
                } else {
                    x += vx;
                    if x > cx + WALL_HW {
                        x = 2.0 * (cx + WALL_HW) - x;
                        vx = -config.bounciness * vx;
                    } else if x < cx - WALL_HW {
                        x = 2.0 * (cx - WALL_HW) - x;
                        vx = -config.bounciness * vx;
                    }
                    let jitter: f64 = chaos_rng.gen_range(-1.0..1.0) * config.jitter;
                    let jx = (x + jitter).clamp(cx - WALL_HW, cx + WALL_HW);
                    render_pos = Some((row_y, jx));
                }
            }
            Mode::Landed => {}
        }

        let pos = render_pos.unwrap_or((y, x));
        let (frame, px) = render_frame(&layout.scene, pos, Some(prev_px));
        frames.push(frame);
        prev_px = px;

        if matches!(mode, Mode::Landed) {
            break;
        }
    }

    if !matches!(mode, Mode::Landed) {
        // Over-long trajectory; the caller retries with a derived seed.
        return Ok(Trajectory {
            frames,
            label: 0,
            env: EnvId::FunnelLite,
            seed,
        });
    }

    // One more frame after landing, ball at rest.
    let final_px = to_pixel((y, x));
    let (rest, _) = render_frame(&layout.scene, (y, x), Some(prev_px));
    frames.push(rest);
    let label = bin_of_col(final_px.1, config.bins);
    Ok(Trajectory { frames, label, env: EnvId::FunnelLite, seed })
}
