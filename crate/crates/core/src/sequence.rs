//! Gesture-sequence assembly: turns generated Units of Movement into a
//! playable pose stream of a requested duration, with optional linear
//! blending at UM seams.

use std::path::Path;

use crate::dataset::{UnitOfMovement, UM_POSES};
use crate::error::{Error, Result};
use crate::retarget::{load_pose_stream, save_pose_stream, Channel, RobotPose, TimedPose, CHANNELS};

/// Default seconds per pose (4 poses per second).
pub const DEFAULT_FRAME_PERIOD: f64 = 0.25;

/// Default number of interpolated frames inserted at each UM boundary.
pub const DEFAULT_BLEND: usize = 2;

/// An ordered pose trajectory played at a fixed frame period.
#[derive(Debug, Clone, PartialEq)]
pub struct GestureSequence {
    pub poses: Vec<RobotPose>,
    pub frame_period: f64,
}

impl GestureSequence {
    pub fn duration(&self) -> f64 {
        self.poses.len() as f64 * self.frame_period
    }
}

/// Number of UMs needed to cover `duration` seconds: each UM spans 4
/// poses, and the count is rounded up so gesturing never ends before the
/// speech does.
pub fn ums_needed(duration: f64, frame_period: f64) -> Result<usize> {
    if !(duration >= 0.0) || !duration.is_finite() {
        return Err(Error::Validation(format!("bad duration {duration}")));
    }
    if !(frame_period > 0.0) || !frame_period.is_finite() {
        return Err(Error::Validation(format!(
            "frame period must be positive, got {frame_period}"
        )));
    }
    Ok((duration / (UM_POSES as f64 * frame_period)).ceil() as usize)
}

fn lerp_pose(a: &RobotPose, b: &RobotPose, t: f64) -> RobotPose {
    let mut q = [0.0; CHANNELS];
    for (i, slot) in q.iter_mut().enumerate() {
        *slot = a.q[i] + (b.q[i] - a.q[i]) * t;
    }
    RobotPose { q }
}

/// Unpacks UMs to poses, inserting `blend` linearly interpolated frames
/// between the last pose of one UM and the first pose of the next.
/// Resulting length: `4·n + blend·(n−1)`.
pub fn assemble(
    ums: &[UnitOfMovement],
    frame_period: f64,
    blend: usize,
) -> Result<GestureSequence> {
    if ums.is_empty() {
        return Err(Error::Validation(
            "cannot assemble a sequence from zero units of movement".into(),
        ));
    }
    if !(frame_period > 0.0) || !frame_period.is_finite() {
        return Err(Error::Validation(format!(
            "frame period must be positive, got {frame_period}"
        )));
    }
    let mut poses = Vec::with_capacity(UM_POSES * ums.len() + blend * (ums.len() - 1));
    for (i, um) in ums.iter().enumerate() {
        let unpacked = um.to_poses();
        if i > 0 && blend > 0 {
            let prev = *poses.last().expect("nonempty after first UM");
            for j in 1..=blend {
                let t = j as f64 / (blend + 1) as f64;
                poses.push(lerp_pose(&prev, &unpacked[0], t));
            }
        }
        poses.extend_from_slice(&unpacked);
    }
    Ok(GestureSequence {
        poses,
        frame_period,
    })
}

/// Writes the sequence in the pose-stream format with timestamps
/// `i · frame_period`.
pub fn export_sequence(seq: &GestureSequence, path: &Path) -> Result<()> {
    let timed: Vec<TimedPose> = seq
        .poses
        .iter()
        .enumerate()
        .map(|(i, &pose)| TimedPose {
            t: i as f64 * seq.frame_period,
            pose,
        })
        .collect();
    save_pose_stream(&timed, path)
}

/// Reads a sequence file back; the frame period is recovered from the
/// first timestamp gap (single-pose files get the default period).
pub fn load_sequence(path: &Path) -> Result<GestureSequence> {
    let timed = load_pose_stream(path)?;
    if timed.is_empty() {
        return Err(Error::Validation(format!(
            "sequence file {} contains no poses",
            path.display()
        )));
    }
    let frame_period = if timed.len() >= 2 {
        timed[1].t - timed[0].t
    } else {
        DEFAULT_FRAME_PERIOD
    };
    Ok(GestureSequence {
        poses: timed.into_iter().map(|tp| tp.pose).collect(),
        frame_period,
    })
}

const TIMELINE_GLYPHS: &[u8] = b" .:-=+*#%@";

/// Renders an ASCII timeline: one row per channel, columns sampling the
/// sequence left to right, glyph density proportional to the value's
/// position within that channel's range over the sequence.
pub fn render_timeline(seq: &GestureSequence, width: usize) -> String {
    let cols = width.clamp(1, seq.poses.len().max(1));
    let mut out = String::new();
    out.push_str(&format!(
        "{} poses, {:.2} s at {:.3} s/pose\n",
        seq.poses.len(),
        seq.duration(),
        seq.frame_period
    ));
    let name_w = Channel::ALL
        .iter()
        .map(|c| c.name().len())
        .max()
        .unwrap_or(0);
    for ch in Channel::ALL {
        let series: Vec<f64> = seq.poses.iter().map(|p| p.get(ch)).collect();
        let lo = series.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = series.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        out.push_str(&format!("{:>name_w$} |", ch.name()));
        for c in 0..cols {
            let idx = if cols == 1 {
                0
            } else {
                c * (series.len() - 1) / (cols - 1)
            };
            let v = series[idx];
            let level = if span <= 1e-12 {
                0
            } else {
                (((v - lo) / span) * (TIMELINE_GLYPHS.len() - 1) as f64).round() as usize
            };
            out.push(TIMELINE_GLYPHS[level.min(TIMELINE_GLYPHS.len() - 1)] as char);
        }
        out.push_str("|\n");
    }
    out
}
