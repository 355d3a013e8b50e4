//! Deterministic synthetic capture data: a procedurally animated skeleton
//! (sinusoidal arm and head trajectories inside comfortable human ranges)
//! plus matching colored-glove crops. Used as a test fixture and for
//! demos — the trajectories are constructed so that retargeting never
//! hits a degenerate-geometry hold.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::glove::{save_hands_sidecar, save_ppm, RgbImage};
use crate::skeleton::{save_recording, Joint, Recording, RecordingMeta, SkeletonFrame, Vec3};

/// Glove palette size: levels 0..=16 are green/red mixtures, level 17 is
/// the palm-only crop.
pub const GLOVE_LEVELS: usize = 18;
const PALM_LEVEL: usize = GLOVE_LEVELS - 1;

const GREEN: [u8; 3] = [0, 220, 0];
const RED: [u8; 3] = [220, 0, 0];
const NEUTRAL: [u8; 3] = [90, 90, 90];

struct Oscillator {
    omega: f64,
    phase: f64,
}

impl Oscillator {
    fn draw(rng: &mut ChaCha8Rng) -> Oscillator {
        Oscillator {
            omega: rng.gen_range(0.5..2.0),
            phase: rng.gen_range(0.0..TAU),
        }
    }

    fn at(&self, t: f64) -> f64 {
        (self.omega * t + self.phase).sin()
    }
}

struct ArmParams {
    u: [Oscillator; 3],
    v: [Oscillator; 3],
    glove: Oscillator,
    palm: Oscillator,
}

impl ArmParams {
    fn draw(rng: &mut ChaCha8Rng) -> ArmParams {
        ArmParams {
            u: [
                Oscillator::draw(rng),
                Oscillator::draw(rng),
                Oscillator::draw(rng),
            ],
            v: [
                Oscillator::draw(rng),
                Oscillator::draw(rng),
                Oscillator::draw(rng),
            ],
            glove: Oscillator::draw(rng),
            palm: Oscillator::draw(rng),
        }
    }
}

struct SynthParams {
    left: ArmParams,
    right: ArmParams,
    head: [Oscillator; 2],
}

impl SynthParams {
    /// All oscillators are drawn up front in a fixed order (left arm,
    /// right arm, head); the per-frame math is then pure in `t`.
    fn draw(seed: u64) -> SynthParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SynthParams {
            left: ArmParams::draw(&mut rng),
            right: ArmParams::draw(&mut rng),
            head: [Oscillator::draw(&mut rng), Oscillator::draw(&mut rng)],
        }
    }
}

fn unit(v: Vec3) -> Vec3 {
    v * (1.0 / v.norm())
}

/// Upper-arm direction: lateral sway, always some forward (+y)
/// component, mostly downward — the +y floor of 0.2 keeps every vector
/// used by retargeting far from degeneracy.
fn arm_dirs(p: &ArmParams, t: f64, mirror: f64) -> (Vec3, Vec3) {
    let u = Vec3::new(
        mirror * (0.25 + 0.45 * p.u[0].at(t)),
        0.45 + 0.25 * p.u[1].at(t),
        -0.3 + 0.5 * p.u[2].at(t),
    );
    let v = Vec3::new(
        mirror * 0.45 * p.v[0].at(t),
        0.55 + 0.35 * p.v[1].at(t),
        0.4 * p.v[2].at(t),
    );
    (unit(u), unit(v))
}

fn synth_frame(params: &SynthParams, t: f64) -> SkeletonFrame {
    let neck = Vec3::new(0.0, 0.0, 1.4);
    let l_shoulder = Vec3::new(0.2, 0.0, 1.4);
    let r_shoulder = Vec3::new(-0.2, 0.0, 1.4);

    let (lu, lv) = arm_dirs(&params.left, t, 1.0);
    let (ru, rv) = arm_dirs(&params.right, t, -1.0);
    let l_elbow = l_shoulder + lu * 0.25;
    let r_elbow = r_shoulder + ru * 0.25;

    let head_dir = unit(Vec3::new(
        0.25 * params.head[0].at(t),
        0.2 * params.head[1].at(t),
        1.0,
    ));

    let mut joints = BTreeMap::new();
    joints.insert(Joint::Torso, Vec3::new(0.0, 0.0, 1.0));
    joints.insert(Joint::Neck, neck);
    joints.insert(Joint::Head, neck + head_dir * 0.15);
    joints.insert(Joint::LeftShoulder, l_shoulder);
    joints.insert(Joint::RightShoulder, r_shoulder);
    joints.insert(Joint::LeftElbow, l_elbow);
    joints.insert(Joint::RightElbow, r_elbow);
    joints.insert(Joint::LeftHand, l_elbow + lv * 0.22);
    joints.insert(Joint::RightHand, r_elbow + rv * 0.22);
    joints.insert(Joint::LeftHip, Vec3::new(0.1, 0.0, 0.9));
    joints.insert(Joint::RightHip, Vec3::new(-0.1, 0.0, 0.9));
    joints.insert(Joint::LeftKnee, Vec3::new(0.1, 0.0, 0.5));
    joints.insert(Joint::RightKnee, Vec3::new(-0.1, 0.0, 0.5));
    joints.insert(Joint::LeftFoot, Vec3::new(0.1, 0.05, 0.05));
    joints.insert(Joint::RightFoot, Vec3::new(-0.1, 0.05, 0.05));
    SkeletonFrame::new(t, &joints).expect("synthetic frame is complete")
}

/// Builds a deterministic synthetic recording of `frames` frames at
/// `fps`.
pub fn synth_recording(frames: usize, fps: f64, seed: u64) -> Result<Recording> {
    if frames == 0 {
        return Err(Error::Validation("frame count must be positive".into()));
    }
    let params = SynthParams::draw(seed);
    let frames: Vec<SkeletonFrame> = (0..frames)
        .map(|i| synth_frame(&params, i as f64 / fps))
        .collect();
    Recording::new(
        RecordingMeta {
            fps,
            subject: "synthetic".into(),
        },
        frames,
    )
}

fn glove_level(arm: &ArmParams, t: f64) -> usize {
    if arm.palm.at(t) > 0.97 {
        return PALM_LEVEL;
    }
    let s = (arm.glove.at(t) + 1.0) / 2.0;
    (s * 16.0).round() as usize
}

/// Per-frame glove palette levels (left, right) for a recording made
/// with the same seed.
pub fn synth_glove_levels(frames: usize, fps: f64, seed: u64) -> Vec<(usize, usize)> {
    let params = SynthParams::draw(seed);
    (0..frames)
        .map(|i| {
            let t = i as f64 / fps;
            (
                glove_level(&params.left, t),
                glove_level(&params.right, t),
            )
        })
        .collect()
}

/// Renders palette entry `level` as a `window`×`window` crop. Mixture
/// levels fill 400·level/16 green and 450−that red pixels (the rest
/// neutral); the palm level is green-only.
pub fn glove_palette_crop(level: usize, window: usize) -> RgbImage {
    let total = window * window;
    let (green_px, red_px) = if level >= PALM_LEVEL {
        ((total * 2) / 3, 0)
    } else {
        let green = (400.0 * level as f64 / 16.0).round() as usize;
        (green, 450 - green)
    };
    let mut img = RgbImage::filled(window, window, NEUTRAL);
    for i in 0..total.min(green_px + red_px) {
        let (x, y) = (i % window, i / window);
        img.set_pixel(x, y, if i < green_px { GREEN } else { RED });
    }
    img
}

/// Everything [`write_synth_bundle`] puts on disk.
pub struct SynthBundle {
    pub recording: Recording,
    pub recording_path: PathBuf,
    pub hands_path: PathBuf,
}

/// Writes a synthetic capture bundle into `dir`: `recording.jsonl`, a
/// `hands.jsonl` sidecar and the small glove-crop palette it references.
pub fn write_synth_bundle(
    dir: &Path,
    frames: usize,
    fps: f64,
    seed: u64,
    window: usize,
) -> Result<SynthBundle> {
    let recording = synth_recording(frames, fps, seed)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let gloves_dir = dir.join("gloves");
    std::fs::create_dir_all(&gloves_dir).map_err(|e| Error::io(&gloves_dir, e))?;

    for level in 0..GLOVE_LEVELS {
        let crop = glove_palette_crop(level, window);
        save_ppm(&crop, &gloves_dir.join(format!("level_{level:02}.ppm")))?;
    }

    let levels = synth_glove_levels(frames, fps, seed);
    let entries: BTreeMap<usize, (String, String)> = levels
        .iter()
        .enumerate()
        .map(|(i, &(l, r))| {
            (
                i,
                (
                    format!("gloves/level_{l:02}.ppm"),
                    format!("gloves/level_{r:02}.ppm"),
                ),
            )
        })
        .collect();

    let recording_path = dir.join("recording.jsonl");
    let hands_path = dir.join("hands.jsonl");
    save_recording(&recording, &recording_path)?;
    save_hands_sidecar(&entries, &hands_path)?;
    Ok(SynthBundle {
        recording,
        recording_path,
        hands_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glove::{classify_glove_pixels, load_hands_sidecar, read_glove_crop};
    use crate::retarget::{retarget_recording, JointLimits};

    #[test]
    fn same_seed_same_recording() {
        let a = synth_recording(50, 4.0, 9).unwrap();
        let b = synth_recording(50, 4.0, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_seeds_differ() {
        let a = synth_recording(50, 4.0, 1).unwrap();
        let b = synth_recording(50, 4.0, 2).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn bundle_has_header_plus_frame_lines() {
        let dir = tempfile::tempdir().unwrap();
        write_synth_bundle(dir.path(), 100, 4.0, 3, 30).unwrap();
        let text = std::fs::read_to_string(dir.path().join("recording.jsonl")).unwrap();
        assert_eq!(text.lines().count(), 101);
    }

    #[test]
    fn bundle_is_byte_deterministic() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        write_synth_bundle(d1.path(), 40, 4.0, 5, 30).unwrap();
        write_synth_bundle(d2.path(), 40, 4.0, 5, 30).unwrap();
        for file in ["recording.jsonl", "hands.jsonl", "gloves/level_09.ppm"] {
            assert_eq!(
                std::fs::read(d1.path().join(file)).unwrap(),
                std::fs::read(d2.path().join(file)).unwrap(),
                "{file} differs"
            );
        }
    }

    #[test]
    fn retargeting_synthetic_data_never_holds() {
        let rec = synth_recording(400, 4.0, 11).unwrap();
        let limits = JointLimits::default();
        let (poses, holds) = retarget_recording(&rec, &BTreeMap::new(), &limits, 1);
        assert_eq!(holds, 0);
        assert_eq!(poses.len(), 400);
    }

    #[test]
    fn palette_mixture_counts_follow_the_level() {
        for level in 0..=16 {
            let crop = glove_palette_crop(level, 30);
            let r = classify_glove_pixels(&crop);
            let green = (400.0 * level as f64 / 16.0).round() as usize;
            assert_eq!(r.palm_pixels, green, "level {level}");
            assert_eq!(r.back_pixels, 450 - green, "level {level}");
            assert!(!r.palm_only);
        }
        let palm = classify_glove_pixels(&glove_palette_crop(17, 30));
        assert!(palm.palm_only);
    }

    #[test]
    fn sidecar_references_resolve_to_readable_crops() {
        let dir = tempfile::tempdir().unwrap();
        write_synth_bundle(dir.path(), 25, 4.0, 7, 30).unwrap();
        let map = load_hands_sidecar(&dir.path().join("hands.jsonl")).unwrap();
        assert_eq!(map.len(), 25);
        for (left, right) in map.values() {
            read_glove_crop(left).unwrap();
            read_glove_crop(right).unwrap();
        }
    }

    #[test]
    fn palm_events_occur_but_are_rare() {
        let levels = synth_glove_levels(2000, 4.0, 13);
        let palms = levels
            .iter()
            .filter(|&&(l, r)| l == PALM_LEVEL || r == PALM_LEVEL)
            .count();
        assert!(palms > 0, "no palm-up events in 2000 frames");
        assert!(palms < 400, "palm-up events too common: {palms}");
    }
}
