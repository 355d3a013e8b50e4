//! Human skeleton capture model and recording file ingestion.
//!
//! Capture space is a right-handed frame with x pointing to the subject's
//! left, y pointing from the subject toward the sensor and z up. All
//! coordinates are meters. A recording file is UTF-8 JSONL: a metadata
//! header line followed by one frame per line (see [`load_recording`]).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::{Add, Mul, Neg, Sub};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{DegenerateGeometry, Error, Result};

/// Vectors shorter than this are treated as degenerate geometry: below
/// sensor noise, above double rounding.
pub const DEGENERATE_EPS: f64 = 1e-9;

/// A position or displacement in capture space, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3 {
            x: self.y * other.z - self.z * other.y,
            y: self.z * other.x - self.x * other.z,
            z: self.x * other.y - self.y * other.x,
        }
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, k: f64) -> Vec3 {
        Vec3::new(self.x * k, self.y * k, self.z * k)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Returns `v / |v|`, or a degenerate-geometry error when `|v|` is below
/// [`DEGENERATE_EPS`]. Retargeting callers map the error to "hold the
/// previous joint value".
pub fn normalize(v: Vec3) -> std::result::Result<Vec3, DegenerateGeometry> {
    let n = v.norm();
    if !(n > DEGENERATE_EPS) {
        return Err(DegenerateGeometry);
    }
    Ok(v * (1.0 / n))
}

/// The 15 joints tracked by the capture device.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Joint {
    Head,
    Neck,
    Torso,
    LeftShoulder,
    LeftElbow,
    LeftHand,
    LeftHip,
    LeftKnee,
    LeftFoot,
    RightShoulder,
    RightElbow,
    RightHand,
    RightHip,
    RightKnee,
    RightFoot,
}

impl Joint {
    pub const ALL: [Joint; 15] = [
        Joint::Head,
        Joint::Neck,
        Joint::Torso,
        Joint::LeftShoulder,
        Joint::LeftElbow,
        Joint::LeftHand,
        Joint::LeftHip,
        Joint::LeftKnee,
        Joint::LeftFoot,
        Joint::RightShoulder,
        Joint::RightElbow,
        Joint::RightHand,
        Joint::RightHip,
        Joint::RightKnee,
        Joint::RightFoot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Joint::Head => "head",
            Joint::Neck => "neck",
            Joint::Torso => "torso",
            Joint::LeftShoulder => "left_shoulder",
            Joint::LeftElbow => "left_elbow",
            Joint::LeftHand => "left_hand",
            Joint::LeftHip => "left_hip",
            Joint::LeftKnee => "left_knee",
            Joint::LeftFoot => "left_foot",
            Joint::RightShoulder => "right_shoulder",
            Joint::RightElbow => "right_elbow",
            Joint::RightHand => "right_hand",
            Joint::RightHip => "right_hip",
            Joint::RightKnee => "right_knee",
            Joint::RightFoot => "right_foot",
        }
    }
}

/// One timestamped set of the 15 joint positions.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonFrame {
    /// Seconds; strictly increasing within a recording.
    pub timestamp: f64,
    joints: [Vec3; 15],
}

impl SkeletonFrame {
    /// Builds a frame from a complete joint map.
    pub fn new(timestamp: f64, joints: &BTreeMap<Joint, Vec3>) -> Result<Self> {
        if joints.len() != 15 {
            return Err(Error::Validation(format!(
                "frame must contain exactly 15 joints, found {}",
                joints.len()
            )));
        }
        let mut arr = [Vec3::ZERO; 15];
        for (i, j) in Joint::ALL.iter().enumerate() {
            let p = joints[j];
            if !p.is_finite() {
                return Err(Error::Validation(format!(
                    "joint {} has non-finite coordinates",
                    j.name()
                )));
            }
            arr[i] = p;
        }
        Ok(SkeletonFrame {
            timestamp,
            joints: arr,
        })
    }

    pub fn joint(&self, j: Joint) -> Vec3 {
        self.joints[j as usize]
    }

    pub fn set_joint(&mut self, j: Joint, p: Vec3) {
        self.joints[j as usize] = p;
    }
}

/// Unnormalized displacement `to − from` within a frame.
pub fn vector_between(frame: &SkeletonFrame, from: Joint, to: Joint) -> Vec3 {
    frame.joint(to) - frame.joint(from)
}

/// Recording metadata from the JSONL header line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingMeta {
    /// Capture frame rate in Hz.
    pub fps: f64,
    pub subject: String,
}

/// An ordered, validated skeleton capture session.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub meta: RecordingMeta,
    pub frames: Vec<SkeletonFrame>,
}

impl Recording {
    pub fn new(meta: RecordingMeta, frames: Vec<SkeletonFrame>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Validation("recording contains no frames".into()));
        }
        if !(meta.fps > 0.0) || !meta.fps.is_finite() {
            return Err(Error::Validation(format!(
                "frame rate must be positive, got {}",
                meta.fps
            )));
        }
        for w in frames.windows(2) {
            if !(w[1].timestamp > w[0].timestamp) {
                return Err(Error::Validation(format!(
                    "timestamps must be strictly increasing ({} then {})",
                    w[0].timestamp, w[1].timestamp
                )));
            }
        }
        Ok(Recording { meta, frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

// Wire form of one recording line. The header line carries only `meta`,
// frame lines carry `t` + `joints`; keys in the joint map are sorted, so
// saved files are byte-deterministic.
#[derive(Serialize, Deserialize)]
struct HeaderLine {
    meta: RecordingMeta,
}

#[derive(Serialize, Deserialize)]
struct FrameLine {
    t: f64,
    joints: BTreeMap<Joint, [f64; 3]>,
}

/// Loads a JSONL recording: a `{"meta":...}` header line followed by one
/// `{"t":..., "joints":{...}}` line per frame.
pub fn load_recording(path: &Path) -> Result<Recording> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);

    let mut meta: Option<RecordingMeta> = None;
    let mut frames = Vec::new();
    for (lineno0, line) in reader.lines().enumerate() {
        let lineno = lineno0 + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        if meta.is_none() {
            let header: HeaderLine = serde_json::from_str(&line)
                .map_err(|e| Error::parse(path, lineno, format!("bad header line: {e}")))?;
            meta = Some(header.meta);
            continue;
        }
        let frame_idx = frames.len();
        let wire: FrameLine = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, lineno, format!("bad frame line: {e}")))?;
        if wire.joints.len() != 15 {
            return Err(Error::Validation(format!(
                "frame {}: expected 15 joints, found {}",
                frame_idx,
                wire.joints.len()
            )));
        }
        let joints: BTreeMap<Joint, Vec3> = wire
            .joints
            .into_iter()
            .map(|(j, [x, y, z])| (j, Vec3::new(x, y, z)))
            .collect();
        let frame = SkeletonFrame::new(wire.t, &joints).map_err(|e| match e {
            Error::Validation(msg) => Error::Validation(format!("frame {frame_idx}: {msg}")),
            other => other,
        })?;
        frames.push(frame);
    }

    let meta = meta.ok_or_else(|| Error::parse(path, 1, "missing metadata header line"))?;
    Recording::new(meta, frames)
}

/// Writes a recording in the format accepted by [`load_recording`].
/// Coordinates are serialized in full round-trip precision, so
/// save-then-load reproduces the recording bit-exactly.
pub fn save_recording(rec: &Recording, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = serde_json::to_string(&HeaderLine {
        meta: rec.meta.clone(),
    })
    .expect("header serialization");
    writeln!(w, "{header}").map_err(|e| Error::io(path, e))?;
    for frame in &rec.frames {
        let joints: BTreeMap<Joint, [f64; 3]> = Joint::ALL
            .iter()
            .map(|&j| {
                let p = frame.joint(j);
                (j, [p.x, p.y, p.z])
            })
            .collect();
        let line = serde_json::to_string(&FrameLine {
            t: frame.timestamp,
            joints,
        })
        .expect("frame serialization");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
