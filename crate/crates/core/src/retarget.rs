//! Direct-kinematics retargeting from skeleton frames to 14-DoF robot poses.
//!
//! All angles are radians. The 14 channels, in stream order, are head yaw,
//! head pitch, then per arm (left first): shoulder pitch, shoulder roll,
//! elbow yaw, elbow roll, wrist yaw, hand open. Right-arm roll/yaw channels
//! use the mirrored sign convention; pitch channels do not mirror.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DegenerateGeometry, Error, Result};
use crate::glove::{wrist_yaw_from_reading, GloveReading};
use crate::skeleton::{normalize, vector_between, Joint, Recording, SkeletonFrame, DEGENERATE_EPS};

/// Number of scalar channels in a robot pose.
pub const CHANNELS: usize = 14;

/// Number of leading frames whose head–neck geometry defines the
/// zero-pitch calibration offset for a retargeting session.
pub const CALIBRATION_FRAMES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// Sign applied to roll/yaw channels: left +1, right −1.
    fn mirror(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }

    fn joints(self) -> (Joint, Joint, Joint, Joint) {
        match self {
            Side::Left => (
                Joint::LeftShoulder,
                Joint::RightShoulder,
                Joint::LeftElbow,
                Joint::LeftHand,
            ),
            Side::Right => (
                Joint::RightShoulder,
                Joint::LeftShoulder,
                Joint::RightElbow,
                Joint::RightHand,
            ),
        }
    }
}

/// Channel indices into [`RobotPose::q`], in stream order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[repr(usize)]
pub enum Channel {
    HeadYaw = 0,
    HeadPitch = 1,
    LShoulderPitch = 2,
    LShoulderRoll = 3,
    LElbowYaw = 4,
    LElbowRoll = 5,
    LWristYaw = 6,
    LHandOpen = 7,
    RShoulderPitch = 8,
    RShoulderRoll = 9,
    RElbowYaw = 10,
    RElbowRoll = 11,
    RWristYaw = 12,
    RHandOpen = 13,
}

impl Channel {
    pub const ALL: [Channel; CHANNELS] = [
        Channel::HeadYaw,
        Channel::HeadPitch,
        Channel::LShoulderPitch,
        Channel::LShoulderRoll,
        Channel::LElbowYaw,
        Channel::LElbowRoll,
        Channel::LWristYaw,
        Channel::LHandOpen,
        Channel::RShoulderPitch,
        Channel::RShoulderRoll,
        Channel::RElbowYaw,
        Channel::RElbowRoll,
        Channel::RWristYaw,
        Channel::RHandOpen,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Channel::HeadYaw => "head_yaw",
            Channel::HeadPitch => "head_pitch",
            Channel::LShoulderPitch => "l_shoulder_pitch",
            Channel::LShoulderRoll => "l_shoulder_roll",
            Channel::LElbowYaw => "l_elbow_yaw",
            Channel::LElbowRoll => "l_elbow_roll",
            Channel::LWristYaw => "l_wrist_yaw",
            Channel::LHandOpen => "l_hand_open",
            Channel::RShoulderPitch => "r_shoulder_pitch",
            Channel::RShoulderRoll => "r_shoulder_roll",
            Channel::RElbowYaw => "r_elbow_yaw",
            Channel::RElbowRoll => "r_elbow_roll",
            Channel::RWristYaw => "r_wrist_yaw",
            Channel::RHandOpen => "r_hand_open",
        }
    }

    fn arm(side: Side, part: ArmPart) -> Channel {
        use ArmPart::*;
        match (side, part) {
            (Side::Left, ShoulderPitch) => Channel::LShoulderPitch,
            (Side::Left, ShoulderRoll) => Channel::LShoulderRoll,
            (Side::Left, ElbowYaw) => Channel::LElbowYaw,
            (Side::Left, ElbowRoll) => Channel::LElbowRoll,
            (Side::Left, WristYaw) => Channel::LWristYaw,
            (Side::Right, ShoulderPitch) => Channel::RShoulderPitch,
            (Side::Right, ShoulderRoll) => Channel::RShoulderRoll,
            (Side::Right, ElbowYaw) => Channel::RElbowYaw,
            (Side::Right, ElbowRoll) => Channel::RElbowRoll,
            (Side::Right, WristYaw) => Channel::RWristYaw,
        }
    }
}

/// Hand-open channels are addressed directly (their rng draw order is
/// fixed left-then-right), so they are not part of this helper.
#[derive(Clone, Copy)]
enum ArmPart {
    ShoulderPitch,
    ShoulderRoll,
    ElbowYaw,
    ElbowRoll,
    WristYaw,
}

/// One 14-channel robot pose. Values are produced clamped to limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotPose {
    pub q: [f64; CHANNELS],
}

impl RobotPose {
    pub fn get(&self, ch: Channel) -> f64 {
        self.q[ch as usize]
    }

    pub fn set(&mut self, ch: Channel, v: f64) {
        self.q[ch as usize] = v;
    }

    /// The fallback pose when there is no previous frame: zero on every
    /// channel (half-open hands), clamped into limits.
    pub fn rest(limits: &JointLimits) -> RobotPose {
        let mut q = [0.0; CHANNELS];
        for ch in Channel::ALL {
            let neutral = match ch {
                Channel::LHandOpen | Channel::RHandOpen => 0.5,
                _ => 0.0,
            };
            q[ch as usize] = limits.clamp(ch, neutral);
        }
        RobotPose { q }
    }
}

/// Per-channel bounds plus the retargeting gains and glove calibration
/// constants that travel with them.
#[derive(Debug, Clone, PartialEq)]
pub struct JointLimits {
    /// Head-yaw gain.
    pub k1: f64,
    /// Head pitch/yaw coupling gain.
    pub k2: f64,
    /// Wrist-yaw magnitude reached when a glove fills the crop.
    pub max_wrist_yaw: f64,
    /// Glove pixel count treated as "hand fully visible"; must be > 0.
    pub glove_n: f64,
    /// Elbow yaw substituted (left side; negated on the right) when a
    /// glove reading is palm-only.
    pub palm_up_elbow_yaw: f64,
    bounds: [(f64, f64); CHANNELS],
}

impl JointLimits {
    pub fn new(
        k1: f64,
        k2: f64,
        max_wrist_yaw: f64,
        glove_n: f64,
        palm_up_elbow_yaw: f64,
        bounds: [(f64, f64); CHANNELS],
    ) -> Result<Self> {
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Config(format!(
                    "joint {}: invalid limit interval [{lo}, {hi}]",
                    Channel::ALL[i].name()
                )));
            }
        }
        if !(glove_n > 0.0) {
            return Err(Error::Config(format!(
                "glove_n must be positive, got {glove_n}"
            )));
        }
        if !(max_wrist_yaw > 0.0) {
            return Err(Error::Config(format!(
                "max_wrist_yaw must be positive, got {max_wrist_yaw}"
            )));
        }
        Ok(JointLimits {
            k1,
            k2,
            max_wrist_yaw,
            glove_n,
            palm_up_elbow_yaw,
            bounds,
        })
    }

    pub fn bound(&self, ch: Channel) -> (f64, f64) {
        self.bounds[ch as usize]
    }

    pub fn clamp(&self, ch: Channel, v: f64) -> f64 {
        let (lo, hi) = self.bounds[ch as usize];
        v.clamp(lo, hi)
    }

    pub fn contains(&self, pose: &RobotPose) -> bool {
        Channel::ALL.iter().all(|&ch| {
            let (lo, hi) = self.bound(ch);
            let v = pose.get(ch);
            v >= lo && v <= hi
        })
    }
}

impl Default for JointLimits {
    /// Documented Pepper ranges; see `config/limits.toml` for the same
    /// values in file form.
    fn default() -> Self {
        let mut bounds = [(0.0, 0.0); CHANNELS];
        for ch in Channel::ALL {
            bounds[ch as usize] = match ch {
                Channel::HeadYaw => (-2.0857, 2.0857),
                Channel::HeadPitch => (-0.7068, 0.6371),
                Channel::LShoulderPitch | Channel::RShoulderPitch => (-2.0857, 2.0857),
                Channel::LShoulderRoll => (0.0087, 1.5620),
                Channel::RShoulderRoll => (-1.5620, -0.0087),
                Channel::LElbowYaw | Channel::RElbowYaw => (-2.0857, 2.0857),
                Channel::LElbowRoll => (-1.5620, -0.0087),
                Channel::RElbowRoll => (0.0087, 1.5620),
                Channel::LWristYaw | Channel::RWristYaw => (-1.8239, 1.8239),
                Channel::LHandOpen | Channel::RHandOpen => (0.0, 1.0),
            };
        }
        JointLimits::new(1.0, 0.2, 1.8239, 450.0, -FRAC_PI_2, bounds)
            .expect("default limits are valid")
    }
}

fn unit_between(
    frame: &SkeletonFrame,
    from: Joint,
    to: Joint,
) -> std::result::Result<crate::skeleton::Vec3, DegenerateGeometry> {
    normalize(vector_between(frame, from, to))
}

/// Shoulder roll (pre-clamp): angle between the shoulder line (oriented
/// from the opposite shoulder toward this arm's shoulder, i.e. parallel to
/// a fully abducted arm) and the upper arm, minus π/2. Sign mirrored on
/// the right.
pub fn shoulder_roll(
    frame: &SkeletonFrame,
    side: Side,
) -> std::result::Result<f64, DegenerateGeometry> {
    let (own, opp, elbow, _) = side.joints();
    let lrs = unit_between(frame, opp, own)?;
    let se = unit_between(frame, own, elbow)?;
    let angle = lrs.dot(se).clamp(-1.0, 1.0).acos() - FRAC_PI_2;
    Ok(side.mirror() * angle)
}

/// Elbow roll (pre-clamp): angle between upper arm and forearm minus π, so
/// a fully extended arm reads −π and a right-angle bend −π/2 on the left.
pub fn elbow_roll(
    frame: &SkeletonFrame,
    side: Side,
) -> std::result::Result<f64, DegenerateGeometry> {
    let (own, _, elbow, hand) = side.joints();
    let se = unit_between(frame, own, elbow)?;
    let eh = unit_between(frame, elbow, hand)?;
    let angle = se.dot(eh).clamp(-1.0, 1.0).acos() - PI;
    Ok(side.mirror() * angle)
}

/// Piecewise range conversion for the raw elbow-yaw angle:
/// [π/2, π] maps affinely to [−π/2, 0] (θ − π), [−π, −π/2] maps affinely
/// to [0, π] (2(θ + π)), and (−π/2, π/2) passes through unchanged.
pub fn range_conv(theta: f64) -> f64 {
    let t = theta.clamp(-PI, PI);
    if t >= FRAC_PI_2 {
        t - PI
    } else if t <= -FRAC_PI_2 {
        2.0 * (t + PI)
    } else {
        t
    }
}

/// Elbow yaw (pre-clamp): forearm rotation read from the forearm's (y, z)
/// components, passed through [`range_conv`]. Sign mirrored on the right.
pub fn elbow_yaw(
    frame: &SkeletonFrame,
    side: Side,
) -> std::result::Result<f64, DegenerateGeometry> {
    let (_, _, elbow, hand) = side.joints();
    let eh = vector_between(frame, elbow, hand);
    if eh.z.hypot(eh.y) <= DEGENERATE_EPS {
        return Err(DegenerateGeometry);
    }
    let theta = eh.z.atan2(eh.y);
    Ok(side.mirror() * range_conv(theta))
}

/// Shoulder pitch (pre-clamp): elevation of the upper arm above
/// horizontal; an arm hanging straight down reads −π/2.
pub fn shoulder_pitch(
    frame: &SkeletonFrame,
    side: Side,
) -> std::result::Result<f64, DegenerateGeometry> {
    let (own, _, elbow, _) = side.joints();
    let se = unit_between(frame, own, elbow)?;
    Ok(se.z.clamp(-1.0, 1.0).asin())
}

/// Head yaw (pre-clamp): K1 times the head–neck tilt angle in the frontal
/// plane, rotated by −π/2 so an upright head reads 0.
pub fn head_yaw(
    frame: &SkeletonFrame,
    limits: &JointLimits,
) -> std::result::Result<f64, DegenerateGeometry> {
    let hn = vector_between(frame, Joint::Neck, Joint::Head);
    if hn.z.hypot(hn.x) <= DEGENERATE_EPS {
        return Err(DegenerateGeometry);
    }
    Ok(limits.k1 * (hn.z.atan2(hn.x) - FRAC_PI_2))
}

/// The arctan part of the head-pitch formula, before yaw coupling and
/// rest-pose calibration. Sessions average this over the first
/// [`CALIBRATION_FRAMES`] frames to define the zero-pitch offset.
pub fn head_pitch_raw(frame: &SkeletonFrame) -> std::result::Result<f64, DegenerateGeometry> {
    let hn = vector_between(frame, Joint::Neck, Joint::Head);
    if hn.z.hypot(hn.y) <= DEGENERATE_EPS {
        return Err(DegenerateGeometry);
    }
    Ok(hn.z.atan2(hn.y) - FRAC_PI_2)
}

/// Head pitch (pre-clamp, uncalibrated): the arctan term plus the
/// |K2 · head_yaw| coupling, with the robot head yaw already clamped.
pub fn head_pitch(
    frame: &SkeletonFrame,
    limits: &JointLimits,
) -> std::result::Result<f64, DegenerateGeometry> {
    let yaw = limits.clamp(Channel::HeadYaw, head_yaw(frame, limits)?);
    Ok(head_pitch_raw(frame)? + (limits.k2 * yaw).abs())
}

fn resolve(
    value: std::result::Result<f64, DegenerateGeometry>,
    ch: Channel,
    limits: &JointLimits,
    fallback: &RobotPose,
    holds: &mut usize,
) -> f64 {
    match value {
        Ok(v) => limits.clamp(ch, v),
        Err(DegenerateGeometry) => {
            *holds += 1;
            limits.clamp(ch, fallback.get(ch))
        }
    }
}

fn retarget_frame_inner(
    frame: &SkeletonFrame,
    left_glove: GloveReading,
    right_glove: GloveReading,
    limits: &JointLimits,
    prev: Option<&RobotPose>,
    rng: &mut ChaCha8Rng,
    pitch_offset: f64,
) -> (RobotPose, usize) {
    let rest = RobotPose::rest(limits);
    let fallback = prev.unwrap_or(&rest);
    let mut pose = RobotPose {
        q: [0.0; CHANNELS],
    };
    let mut holds = 0usize;

    let yaw = resolve(
        head_yaw(frame, limits),
        Channel::HeadYaw,
        limits,
        fallback,
        &mut holds,
    );
    pose.set(Channel::HeadYaw, yaw);
    let pitch = head_pitch_raw(frame).map(|raw| raw + (limits.k2 * yaw).abs() - pitch_offset);
    pose.set(
        Channel::HeadPitch,
        resolve(pitch, Channel::HeadPitch, limits, fallback, &mut holds),
    );

    for (side, reading) in [(Side::Left, left_glove), (Side::Right, right_glove)] {
        use ArmPart::*;
        pose.set(
            Channel::arm(side, ShoulderPitch),
            resolve(
                shoulder_pitch(frame, side),
                Channel::arm(side, ShoulderPitch),
                limits,
                fallback,
                &mut holds,
            ),
        );
        pose.set(
            Channel::arm(side, ShoulderRoll),
            resolve(
                shoulder_roll(frame, side),
                Channel::arm(side, ShoulderRoll),
                limits,
                fallback,
                &mut holds,
            ),
        );
        let ch_eyaw = Channel::arm(side, ElbowYaw);
        if reading.palm_only {
            // Palm facing the camera: force the forearm into the
            // configured palm-up rotation instead of the geometric value.
            pose.set(
                ch_eyaw,
                limits.clamp(ch_eyaw, side.mirror() * limits.palm_up_elbow_yaw),
            );
        } else {
            pose.set(
                ch_eyaw,
                resolve(elbow_yaw(frame, side), ch_eyaw, limits, fallback, &mut holds),
            );
        }
        pose.set(
            Channel::arm(side, ElbowRoll),
            resolve(
                elbow_roll(frame, side),
                Channel::arm(side, ElbowRoll),
                limits,
                fallback,
                &mut holds,
            ),
        );
        // glove_n is validated positive wherever limits are constructed,
        // so the fallback value is unreachable.
        let wrist = wrist_yaw_from_reading(reading, limits.glove_n, limits.max_wrist_yaw)
            .unwrap_or(0.0);
        let ch_wrist = Channel::arm(side, WristYaw);
        pose.set(ch_wrist, limits.clamp(ch_wrist, side.mirror() * wrist));
    }

    // Fingers cannot be tracked; hand openings are resampled every frame.
    // Exactly two draws per frame (left then right) keeps the rng stream
    // aligned regardless of degeneracies.
    let left_open: f64 = rng.gen();
    let right_open: f64 = rng.gen();
    pose.set(Channel::LHandOpen, limits.clamp(Channel::LHandOpen, left_open));
    pose.set(
        Channel::RHandOpen,
        limits.clamp(Channel::RHandOpen, right_open),
    );

    (pose, holds)
}

/// Maps one skeleton frame to a clamped robot pose.
///
/// Degenerate geometry on a channel holds the previous pose's value (the
/// rest pose when `prev` is `None`). Head-pitch rest calibration is a
/// session concern; this stateless form uses a zero offset.
pub fn retarget_frame(
    frame: &SkeletonFrame,
    left_glove: GloveReading,
    right_glove: GloveReading,
    limits: &JointLimits,
    prev: Option<&RobotPose>,
    rng: &mut ChaCha8Rng,
) -> RobotPose {
    retarget_frame_inner(frame, left_glove, right_glove, limits, prev, rng, 0.0).0
}

/// Sequential retargeting over a recording: threads the previous pose,
/// counts degeneracy holds and calibrates the head-pitch zero against the
/// opening frames.
pub struct RetargetSession {
    limits: JointLimits,
    rng: ChaCha8Rng,
    prev: Option<RobotPose>,
    calib_sum: f64,
    calib_count: usize,
    /// Channel values that fell back to the previous pose so far.
    pub holds: usize,
}

impl RetargetSession {
    pub fn new(limits: JointLimits, seed: u64) -> Self {
        RetargetSession {
            limits,
            rng: ChaCha8Rng::seed_from_u64(seed),
            prev: None,
            calib_sum: 0.0,
            calib_count: 0,
            holds: 0,
        }
    }

    /// The current zero-pitch offset: mean raw head pitch over the first
    /// [`CALIBRATION_FRAMES`] frames seen, frozen afterwards.
    pub fn pitch_offset(&self) -> f64 {
        if self.calib_count == 0 {
            0.0
        } else {
            self.calib_sum / self.calib_count as f64
        }
    }

    pub fn step(
        &mut self,
        frame: &SkeletonFrame,
        left_glove: GloveReading,
        right_glove: GloveReading,
    ) -> RobotPose {
        if self.calib_count < CALIBRATION_FRAMES {
            if let Ok(raw) = head_pitch_raw(frame) {
                self.calib_sum += raw;
                self.calib_count += 1;
            }
        }
        let offset = self.pitch_offset();
        let (pose, holds) = retarget_frame_inner(
            frame,
            left_glove,
            right_glove,
            &self.limits,
            self.prev.as_ref(),
            &mut self.rng,
            offset,
        );
        self.holds += holds;
        self.prev = Some(pose);
        pose
    }
}

/// A robot pose with its capture timestamp, the pose-stream line unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedPose {
    pub t: f64,
    pub pose: RobotPose,
}

/// Retargets a whole recording. Glove readings are looked up per frame
/// index; frames without an entry get the neutral reading. Returns the
/// pose stream and the number of degeneracy holds.
pub fn retarget_recording(
    rec: &Recording,
    gloves: &std::collections::BTreeMap<usize, (GloveReading, GloveReading)>,
    limits: &JointLimits,
    seed: u64,
) -> (Vec<TimedPose>, usize) {
    let mut session = RetargetSession::new(limits.clone(), seed);
    let poses = rec
        .frames
        .iter()
        .enumerate()
        .map(|(i, frame)| {
            let (lg, rg) = gloves
                .get(&i)
                .copied()
                .unwrap_or((GloveReading::neutral(), GloveReading::neutral()));
            TimedPose {
                t: frame.timestamp,
                pose: session.step(frame, lg, rg),
            }
        })
        .collect();
    (poses, session.holds)
}

#[derive(Serialize, Deserialize)]
struct PoseLine {
    t: f64,
    q: [f64; CHANNELS],
}

/// Writes a pose stream as JSONL, one `{"t":…, "q":[14 floats]}` per line.
pub fn save_pose_stream(poses: &[TimedPose], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in poses {
        let line = serde_json::to_string(&PoseLine {
            t: p.t,
            q: p.pose.q,
        })
        .expect("pose serialization");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a pose stream written by [`save_pose_stream`].
pub fn load_pose_stream(path: &Path) -> Result<Vec<TimedPose>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut poses: Vec<TimedPose> = Vec::new();
    for (lineno0, line) in reader.lines().enumerate() {
        let lineno = lineno0 + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: PoseLine = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, lineno, format!("bad pose line: {e}")))?;
        if !parsed.t.is_finite() || parsed.q.iter().any(|v| !v.is_finite()) {
            return Err(Error::parse(path, lineno, "non-finite pose value"));
        }
        if let Some(last) = poses.last() {
            if parsed.t <= last.t {
                return Err(Error::Validation(format!(
                    "pose timestamps must be strictly increasing ({} then {})",
                    last.t, parsed.t
                )));
            }
        }
        poses.push(TimedPose {
            t: parsed.t,
            pose: RobotPose { q: parsed.q },
        });
    }
    Ok(poses)
}
