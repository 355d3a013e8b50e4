//! Training-corpus construction: windows pose streams into Units of
//! Movement and normalizes channels into [−1, 1].
//!
//! A Unit of Movement (UM) is 4 consecutive poses flattened pose-major to
//! a 56-float vector — the GAN's sample unit. `corpus.bin` is a one-line
//! JSON header followed by the raw little-endian f64 payload.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retarget::{Channel, JointLimits, RobotPose, CHANNELS};

/// Poses per Unit of Movement.
pub const UM_POSES: usize = 4;
/// Flattened UM dimension: 4 poses × 14 channels.
pub const UM_DIM: usize = UM_POSES * CHANNELS;

/// One flattened 4-pose window, pose-major: value for pose `p`, channel
/// `c` lives at index `p·14 + c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitOfMovement {
    pub values: [f64; UM_DIM],
}

impl UnitOfMovement {
    pub fn from_poses(poses: &[RobotPose; UM_POSES]) -> Self {
        let mut values = [0.0; UM_DIM];
        for (p, pose) in poses.iter().enumerate() {
            values[p * CHANNELS..(p + 1) * CHANNELS].copy_from_slice(&pose.q);
        }
        UnitOfMovement { values }
    }

    pub fn pose(&self, p: usize) -> RobotPose {
        let mut q = [0.0; CHANNELS];
        q.copy_from_slice(&self.values[p * CHANNELS..(p + 1) * CHANNELS]);
        RobotPose { q }
    }

    pub fn to_poses(&self) -> [RobotPose; UM_POSES] {
        [self.pose(0), self.pose(1), self.pose(2), self.pose(3)]
    }
}

/// Per-channel (lo, hi) bounds for the affine map onto [−1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationSpec {
    bounds: [(f64, f64); CHANNELS],
}

impl NormalizationSpec {
    pub fn new(bounds: [(f64, f64); CHANNELS]) -> Result<Self> {
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Validation(format!(
                    "normalization bounds for {}: invalid interval [{lo}, {hi}]",
                    Channel::ALL[i].name()
                )));
            }
        }
        Ok(NormalizationSpec { bounds })
    }

    /// The default spec: the joint limits themselves, so any generator
    /// output in [−1, 1] decodes to a legal pose.
    pub fn from_limits(limits: &JointLimits) -> Self {
        let mut bounds = [(0.0, 0.0); CHANNELS];
        for ch in Channel::ALL {
            bounds[ch as usize] = limits.bound(ch);
        }
        NormalizationSpec { bounds }
    }

    pub fn bound(&self, ch: Channel) -> (f64, f64) {
        self.bounds[ch as usize]
    }

    /// Affine map lo→−1, hi→+1; out-of-range inputs are clamped first.
    pub fn normalize_value(&self, ch: Channel, v: f64) -> f64 {
        let (lo, hi) = self.bounds[ch as usize];
        let v = v.clamp(lo, hi);
        2.0 * (v - lo) / (hi - lo) - 1.0
    }

    /// Inverse of [`Self::normalize_value`] on [−1, 1]. The convex
    /// combination hits `lo` and `hi` exactly at the endpoints, and the
    /// final clamp keeps rounding from ever leaving the bound, so
    /// decoded poses are always within limits.
    pub fn denormalize_value(&self, ch: Channel, v: f64) -> f64 {
        let (lo, hi) = self.bounds[ch as usize];
        let t = (v.clamp(-1.0, 1.0) + 1.0) / 2.0;
        (lo * (1.0 - t) + hi * t).clamp(lo, hi)
    }

    pub(crate) fn to_map(&self) -> BTreeMap<String, [f64; 2]> {
        Channel::ALL
            .iter()
            .map(|&ch| {
                let (lo, hi) = self.bound(ch);
                (ch.name().to_string(), [lo, hi])
            })
            .collect()
    }

    pub(crate) fn from_map(map: &BTreeMap<String, [f64; 2]>) -> Result<Self> {
        let mut bounds = [(0.0, 0.0); CHANNELS];
        for ch in Channel::ALL {
            let [lo, hi] = map.get(ch.name()).ok_or_else(|| {
                Error::Validation(format!("norm spec missing channel {}", ch.name()))
            })?;
            bounds[ch as usize] = (*lo, *hi);
        }
        if map.len() != CHANNELS {
            return Err(Error::Validation(format!(
                "norm spec has {} channels, expected {CHANNELS}",
                map.len()
            )));
        }
        NormalizationSpec::new(bounds)
    }
}

/// Slides a width-4 window over a pose list at the given stride. Fewer
/// than 4 poses yields an empty list; the result count is
/// `floor((len − 4)/stride) + 1` otherwise.
pub fn window_poses(poses: &[RobotPose], stride: usize) -> Result<Vec<UnitOfMovement>> {
    if stride == 0 {
        return Err(Error::Validation("stride must be at least 1".into()));
    }
    if poses.len() < UM_POSES {
        return Ok(Vec::new());
    }
    let count = (poses.len() - UM_POSES) / stride + 1;
    let mut ums = Vec::with_capacity(count);
    for i in 0..count {
        let start = i * stride;
        let window: &[RobotPose; UM_POSES] =
            poses[start..start + UM_POSES].try_into().expect("window width");
        ums.push(UnitOfMovement::from_poses(window));
    }
    Ok(ums)
}

/// Maps every value of a UM into [−1, 1] per its channel.
pub fn normalize_um(um: &UnitOfMovement, norm: &NormalizationSpec) -> UnitOfMovement {
    let mut values = [0.0; UM_DIM];
    for (i, &v) in um.values.iter().enumerate() {
        values[i] = norm.normalize_value(Channel::ALL[i % CHANNELS], v);
    }
    UnitOfMovement { values }
}

/// Inverse of [`normalize_um`] on [−1, 1]^56.
pub fn denormalize_um(um: &UnitOfMovement, norm: &NormalizationSpec) -> UnitOfMovement {
    let mut values = [0.0; UM_DIM];
    for (i, &v) in um.values.iter().enumerate() {
        values[i] = norm.denormalize_value(Channel::ALL[i % CHANNELS], v);
    }
    UnitOfMovement { values }
}

/// The normalized training corpus plus everything needed to decode
/// generator output back into joint space.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    /// Normalized UMs, every value in [−1, 1].
    pub ums: Vec<UnitOfMovement>,
    pub norm: NormalizationSpec,
    /// Source recording identifiers, in concatenation order.
    pub provenance: Vec<String>,
}

impl Corpus {
    /// Windows each pose stream separately (UMs never span recordings),
    /// concatenates in the given order and normalizes.
    pub fn build(
        streams: &[(String, Vec<RobotPose>)],
        stride: usize,
        norm: NormalizationSpec,
    ) -> Result<Corpus> {
        let mut ums = Vec::new();
        let mut provenance = Vec::new();
        let total_poses: usize = streams.iter().map(|(_, p)| p.len()).sum();
        for (id, poses) in streams {
            for um in window_poses(poses, stride)? {
                ums.push(normalize_um(&um, &norm));
            }
            provenance.push(id.clone());
        }
        if ums.is_empty() {
            return Err(Error::Validation(format!(
                "corpus is empty: {total_poses} pose(s) across {} stream(s), but at least \
                 {UM_POSES} consecutive poses in one stream are needed to form a unit of movement",
                streams.len()
            )));
        }
        Ok(Corpus {
            ums,
            norm,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.ums.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ums.is_empty()
    }
}

#[derive(Serialize, Deserialize)]
struct CorpusHeader {
    format: String,
    version: u32,
    count: usize,
    dim: usize,
    poses_per_um: usize,
    channels: Vec<String>,
    norm: BTreeMap<String, [f64; 2]>,
    provenance: Vec<String>,
}

/// Writes `corpus.bin`: one JSON header line, then `count × 56` f64
/// little-endian values.
pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    let header = CorpusHeader {
        format: "um-corpus".into(),
        version: 1,
        count: corpus.ums.len(),
        dim: UM_DIM,
        poses_per_um: UM_POSES,
        channels: Channel::ALL.iter().map(|c| c.name().to_string()).collect(),
        norm: corpus.norm.to_map(),
        provenance: corpus.provenance.clone(),
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let line = serde_json::to_string(&header).expect("corpus header serialization");
    writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    for um in &corpus.ums {
        for v in um.values {
            w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a `corpus.bin`, validating format, payload size and the
/// normalized-range invariant.
pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);

    let mut header_bytes = Vec::new();
    loop {
        let mut byte = [0u8; 1];
        reader
            .read_exact(&mut byte)
            .map_err(|e| Error::io(path, e))?;
        if byte[0] == b'\n' {
            break;
        }
        header_bytes.push(byte[0]);
    }
    let header_str = String::from_utf8(header_bytes)
        .map_err(|_| Error::parse(path, 1, "header is not UTF-8"))?;
    let header: CorpusHeader = serde_json::from_str(&header_str)
        .map_err(|e| Error::parse(path, 1, format!("bad corpus header: {e}")))?;

    if header.format != "um-corpus" || header.version != 1 {
        return Err(Error::Validation(format!(
            "unsupported corpus format {:?} version {}",
            header.format, header.version
        )));
    }
    if header.dim != UM_DIM || header.poses_per_um != UM_POSES {
        return Err(Error::Validation(format!(
            "corpus dim {}x{} does not match expected {UM_POSES}x{CHANNELS}",
            header.poses_per_um, header.dim
        )));
    }
    let expected_channels: Vec<String> =
        Channel::ALL.iter().map(|c| c.name().to_string()).collect();
    if header.channels != expected_channels {
        return Err(Error::Validation(
            "corpus channel order does not match this build".into(),
        ));
    }
    let norm = NormalizationSpec::from_map(&header.norm)?;

    let mut payload = Vec::new();
    reader
        .read_to_end(&mut payload)
        .map_err(|e| Error::io(path, e))?;
    let expected = header.count * UM_DIM * 8;
    if payload.len() != expected {
        return Err(Error::Validation(format!(
            "corpus payload is {} bytes, expected {expected} for {} UMs",
            payload.len(),
            header.count
        )));
    }
    let mut ums = Vec::with_capacity(header.count);
    for chunk in payload.chunks_exact(UM_DIM * 8) {
        let mut values = [0.0; UM_DIM];
        for (i, b) in chunk.chunks_exact(8).enumerate() {
            values[i] = f64::from_le_bytes(b.try_into().expect("8-byte chunk"));
        }
        if values.iter().any(|v| !v.is_finite() || v.abs() > 1.0) {
            return Err(Error::Validation(format!(
                "corpus UM {} breaks the [-1, 1] normalization invariant",
                ums.len()
            )));
        }
        ums.push(UnitOfMovement { values });
    }
    Ok(Corpus {
        ums,
        norm,
        provenance: header.provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pose_of(v: f64) -> RobotPose {
        RobotPose { q: [v; CHANNELS] }
    }

    fn indexed_poses(n: usize) -> Vec<RobotPose> {
        // Pose i has channel c value i + c/100, making provenance of
        // every windowed value recoverable.
        (0..n)
            .map(|i| {
                let mut q = [0.0; CHANNELS];
                for (c, slot) in q.iter_mut().enumerate() {
                    *slot = i as f64 + c as f64 / 100.0;
                }
                RobotPose { q }
            })
            .collect()
    }

    #[test]
    fn four_poses_make_one_um() {
        let ums = window_poses(&indexed_poses(4), 1).unwrap();
        assert_eq!(ums.len(), 1);
    }

    #[test]
    fn ten_poses_stride_one_make_seven_ums() {
        let ums = window_poses(&indexed_poses(10), 1).unwrap();
        assert_eq!(ums.len(), 7);
    }

    #[test]
    fn nine_minute_session_counts_bracket_the_expected_scale() {
        // 9 min at 4 poses/s = 2160 poses.
        let poses = indexed_poses(2160);
        assert_eq!(window_poses(&poses, 4).unwrap().len(), 540);
        assert_eq!(window_poses(&poses, 1).unwrap().len(), 2157);
    }

    #[test]
    fn short_streams_yield_empty_not_error() {
        assert!(window_poses(&indexed_poses(3), 1).unwrap().is_empty());
        assert!(window_poses(&[], 1).unwrap().is_empty());
    }

    #[test]
    fn zero_stride_is_rejected() {
        assert!(window_poses(&indexed_poses(8), 0).is_err());
    }

    #[test]
    fn windowing_preserves_values_exactly() {
        let poses = indexed_poses(23);
        for stride in 1..=5 {
            let ums = window_poses(&poses, stride).unwrap();
            assert_eq!(ums.len(), (poses.len() - UM_POSES) / stride + 1);
            for (i, um) in ums.iter().enumerate() {
                for p in 0..UM_POSES {
                    for c in 0..CHANNELS {
                        assert_eq!(
                            um.values[p * CHANNELS + c],
                            poses[i * stride + p].q[c],
                            "um {i} pose {p} channel {c} stride {stride}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn normalize_maps_bounds_to_unit_interval() {
        let norm = NormalizationSpec::from_limits(&JointLimits::default());
        for ch in Channel::ALL {
            let (lo, hi) = norm.bound(ch);
            assert_eq!(norm.normalize_value(ch, lo), -1.0);
            assert_eq!(norm.normalize_value(ch, hi), 1.0);
            assert!(norm.normalize_value(ch, (lo + hi) / 2.0).abs() < 1e-12);
            // Out-of-range values clamp to the boundary first.
            assert_eq!(norm.normalize_value(ch, lo - 10.0), -1.0);
            assert_eq!(norm.normalize_value(ch, hi + 10.0), 1.0);
        }
    }

    #[test]
    fn denormalize_maps_unit_interval_to_bounds() {
        let norm = NormalizationSpec::from_limits(&JointLimits::default());
        for ch in Channel::ALL {
            let (lo, hi) = norm.bound(ch);
            assert_eq!(norm.denormalize_value(ch, -1.0), lo);
            assert_eq!(norm.denormalize_value(ch, 1.0), hi);
            assert!((norm.denormalize_value(ch, 0.0) - (lo + hi) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn normalization_round_trip_is_tight() {
        let norm = NormalizationSpec::from_limits(&JointLimits::default());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let mut values = [0.0; UM_DIM];
            for (i, slot) in values.iter_mut().enumerate() {
                let (lo, hi) = norm.bound(Channel::ALL[i % CHANNELS]);
                *slot = rng.gen_range(lo..hi);
            }
            let um = UnitOfMovement { values };
            let back = denormalize_um(&normalize_um(&um, &norm), &norm);
            for i in 0..UM_DIM {
                assert!((back.values[i] - um.values[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn um_pose_round_trip() {
        let poses = [pose_of(0.1), pose_of(0.2), pose_of(0.3), pose_of(0.4)];
        let um = UnitOfMovement::from_poses(&poses);
        assert_eq!(um.to_poses(), poses);
    }

    fn sample_corpus(n_poses: usize) -> Corpus {
        let limits = JointLimits::default();
        let norm = NormalizationSpec::from_limits(&limits);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let poses: Vec<RobotPose> = (0..n_poses)
            .map(|_| {
                let mut q = [0.0; CHANNELS];
                for ch in Channel::ALL {
                    let (lo, hi) = limits.bound(ch);
                    q[ch as usize] = rng.gen_range(lo..hi);
                }
                RobotPose { q }
            })
            .collect();
        Corpus::build(&[("rec0".into(), poses)], 4, norm).unwrap()
    }

    #[test]
    fn corpus_values_stay_normalized() {
        let corpus = sample_corpus(100);
        for um in &corpus.ums {
            assert!(um.values.iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn corpus_file_round_trip_is_bit_exact() {
        let corpus = sample_corpus(137);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.bin");
        save_corpus(&corpus, &path).unwrap();
        let loaded = load_corpus(&path).unwrap();
        assert_eq!(corpus, loaded);

        let path2 = dir.path().join("corpus2.bin");
        save_corpus(&loaded, &path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn corpus_build_rejects_too_short_streams() {
        let norm = NormalizationSpec::from_limits(&JointLimits::default());
        let err = Corpus::build(&[("tiny".into(), indexed_poses(3))], 4, norm).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("corpus is empty"), "message was: {msg}");
        assert!(msg.contains("4"), "message was: {msg}");
    }

    #[test]
    fn corpus_load_rejects_out_of_range_payload() {
        let corpus = sample_corpus(20);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.bin");
        save_corpus(&corpus, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let header_end = bytes.iter().position(|&b| b == b'\n').unwrap() + 1;
        // Overwrite the first payload value with 2.0.
        bytes[header_end..header_end + 8].copy_from_slice(&2.0f64.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        let err = load_corpus(&path).unwrap_err();
        assert!(err.to_string().contains("normalization invariant"));
    }

    #[test]
    fn corpus_load_rejects_truncated_payload() {
        let corpus = sample_corpus(20);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.bin");
        save_corpus(&corpus, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(load_corpus(&path).is_err());
    }

    #[test]
    fn ums_never_span_streams() {
        let norm = NormalizationSpec::from_limits(&JointLimits::default());
        // Two streams of 5 poses each: stride 1 gives 2 windows per
        // stream, never one bridging them.
        let streams = vec![
            ("a".into(), indexed_poses(5)),
            ("b".into(), indexed_poses(5)),
        ];
        let corpus = Corpus::build(&streams, 1, norm).unwrap();
        assert_eq!(corpus.len(), 4);
        assert_eq!(corpus.provenance, vec!["a".to_string(), "b".to_string()]);
    }

    proptest! {
        #[test]
        fn window_count_formula_holds(len in 0usize..200, stride in 1usize..8) {
            let ums = window_poses(&indexed_poses(len), stride).unwrap();
            let expected = if len < UM_POSES { 0 } else { (len - UM_POSES) / stride + 1 };
            prop_assert_eq!(ums.len(), expected);
        }
    }
}
