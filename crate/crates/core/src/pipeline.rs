//! The end-to-end pipeline: ingest → glove classification → retarget →
//! dataset → train → generate → export. Each stage tags its errors with
//! the stage name so a failing run says where it died.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::Config;
use crate::dataset::{save_corpus, Corpus, NormalizationSpec};
use crate::error::{Error, Result};
use crate::gan::{self, GanConfig};
use crate::glove::{load_hands_sidecar, read_glove_crop, GloveReading};
use crate::neuralnet::{save_model, ModelMeta};
use crate::retarget::{retarget_recording, save_pose_stream, RobotPose};
use crate::sequence::{assemble, export_sequence, ums_needed};

pub struct PipelineOptions {
    pub recording: PathBuf,
    /// Glove sidecar. `None` means: use `hands.jsonl` next to the
    /// recording if it exists, otherwise neutral gloves throughout.
    pub hands: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub config: Config,
    /// Dataset windowing stride in poses.
    pub stride: usize,
    pub gan: GanConfig,
    /// Requested sequence duration in seconds.
    pub duration: f64,
    pub frame_period: f64,
    /// Interpolated poses inserted at each seam.
    pub blend: usize,
}

/// What a successful run produced, for reporting.
#[derive(Debug)]
pub struct PipelineReport {
    pub frames: usize,
    pub holds: usize,
    pub corpus_ums: usize,
    pub generated_ums: usize,
    pub sequence_poses: usize,
    pub sequence_path: PathBuf,
}

fn tag(stage: &str, e: Error) -> Error {
    match e {
        Error::Validation(m) => Error::Validation(format!("{stage} stage: {m}")),
        Error::Config(m) => Error::Config(format!("{stage} stage: {m}")),
        Error::Numeric(m) => Error::Numeric(format!("{stage} stage: {m}")),
        // Parse and I/O errors already carry their file context.
        other => other,
    }
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| tag(name, e))
}

/// Classifies every hand crop referenced by a sidecar. Images are read
/// once per distinct path.
pub fn classify_hands(
    rec_len: usize,
    sidecar: &Path,
) -> Result<BTreeMap<usize, (GloveReading, GloveReading)>> {
    let entries = load_hands_sidecar(sidecar)?;
    let mut cache: HashMap<PathBuf, GloveReading> = HashMap::new();
    let mut read = |path: &PathBuf| -> Result<GloveReading> {
        if let Some(&r) = cache.get(path) {
            return Ok(r);
        }
        let r = read_glove_crop(path)?;
        cache.insert(path.clone(), r);
        Ok(r)
    };
    let mut out = BTreeMap::new();
    for (&frame, (left, right)) in &entries {
        if frame >= rec_len {
            return Err(Error::Validation(format!(
                "hands sidecar references frame {frame} but the recording has {rec_len} frames"
            )));
        }
        out.insert(frame, (read(left)?, read(right)?));
    }
    Ok(out)
}

pub fn run_pipeline(opts: &PipelineOptions) -> Result<PipelineReport> {
    std::fs::create_dir_all(&opts.out_dir).map_err(|e| Error::io(&opts.out_dir, e))?;

    let rec = stage("ingest", crate::skeleton::load_recording(&opts.recording))?;

    let sidecar = opts.hands.clone().or_else(|| {
        let candidate = opts.recording.parent()?.join("hands.jsonl");
        candidate.is_file().then_some(candidate)
    });
    let gloves = match &sidecar {
        Some(path) => stage("glove", classify_hands(rec.len(), path))?,
        None => BTreeMap::new(),
    };

    let limits = &opts.config.limits;
    let (poses, holds) = retarget_recording(&rec, &gloves, limits, opts.config.seed);
    stage(
        "retarget",
        save_pose_stream(&poses, &opts.out_dir.join("poses.jsonl")),
    )?;

    let stream: Vec<RobotPose> = poses.iter().map(|p| p.pose).collect();
    let stream_id = opts.recording.display().to_string();
    let norm = NormalizationSpec::from_limits(limits);
    let corpus = stage(
        "dataset",
        Corpus::build(&[(stream_id, stream)], opts.stride, norm),
    )?;
    stage(
        "dataset",
        save_corpus(&corpus, &opts.out_dir.join("corpus.bin")),
    )?;

    let mut gan_cfg = opts.gan.clone();
    if gan_cfg.checkpoint_every > 0 && gan_cfg.checkpoint_dir.is_none() {
        gan_cfg.checkpoint_dir = Some(opts.out_dir.join("checkpoints"));
    }
    let (generator, discriminator, log) = stage("train", gan::train(&corpus, &gan_cfg))?;
    let meta = ModelMeta {
        seed: gan_cfg.seed,
        epoch: gan_cfg.epochs,
        norm: corpus.norm.clone(),
    };
    stage(
        "train",
        save_model(&generator, &meta, &opts.out_dir.join("generator.bin")),
    )?;
    stage(
        "train",
        save_model(&discriminator, &meta, &opts.out_dir.join("discriminator.bin")),
    )?;
    stage("train", log.save_csv(&opts.out_dir.join("trainlog.csv")))?;

    let n = stage("generate", ums_needed(opts.duration, opts.frame_period))?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.config.seed);
    let ums = stage("generate", gan::generate_ums(&generator, n, &mut rng, &corpus.norm))?;
    let seq = stage("generate", assemble(&ums, opts.frame_period, opts.blend))?;
    let sequence_path = opts.out_dir.join("seq.jsonl");
    stage("generate", export_sequence(&seq, &sequence_path))?;

    Ok(PipelineReport {
        frames: rec.len(),
        holds,
        corpus_ums: corpus.len(),
        generated_ums: n,
        sequence_poses: seq.poses.len(),
        sequence_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::load_sequence;
    use crate::synth::write_synth_bundle;

    fn quick_options(data: &Path, out: &Path) -> PipelineOptions {
        PipelineOptions {
            recording: data.join("recording.jsonl"),
            hands: None,
            out_dir: out.to_path_buf(),
            config: Config::default(),
            stride: 4,
            gan: GanConfig {
                epochs: 3,
                batch: 8,
                ..GanConfig::default()
            },
            duration: 10.0,
            frame_period: 0.25,
            blend: 2,
        }
    }

    #[test]
    fn smoke_run_produces_every_artifact() {
        let data = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        write_synth_bundle(data.path(), 160, 4.0, 21, 30).unwrap();
        let report = run_pipeline(&quick_options(data.path(), out.path())).unwrap();

        assert_eq!(report.frames, 160);
        assert_eq!(report.holds, 0);
        assert_eq!(report.corpus_ums, 40);
        assert_eq!(report.generated_ums, 10); // 10 s / (4 × 0.25 s)
        assert_eq!(report.sequence_poses, 4 * 10 + 2 * 9);

        for file in [
            "poses.jsonl",
            "corpus.bin",
            "generator.bin",
            "discriminator.bin",
            "trainlog.csv",
            "seq.jsonl",
        ] {
            assert!(out.path().join(file).is_file(), "{file} missing");
        }
        let seq = load_sequence(&report.sequence_path).unwrap();
        assert_eq!(seq.poses.len(), report.sequence_poses);
    }

    #[test]
    fn identical_seeds_give_byte_identical_outputs() {
        let data = tempfile::tempdir().unwrap();
        write_synth_bundle(data.path(), 120, 4.0, 33, 30).unwrap();
        let out1 = tempfile::tempdir().unwrap();
        let out2 = tempfile::tempdir().unwrap();
        run_pipeline(&quick_options(data.path(), out1.path())).unwrap();
        run_pipeline(&quick_options(data.path(), out2.path())).unwrap();
        for file in ["poses.jsonl", "corpus.bin", "generator.bin", "seq.jsonl"] {
            assert_eq!(
                std::fs::read(out1.path().join(file)).unwrap(),
                std::fs::read(out2.path().join(file)).unwrap(),
                "{file} differs between identical runs"
            );
        }
    }

    #[test]
    fn too_short_recording_fails_at_dataset_stage() {
        let data = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        write_synth_bundle(data.path(), 3, 4.0, 1, 30).unwrap();
        let err = run_pipeline(&quick_options(data.path(), out.path())).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("dataset stage"), "wrong stage: {msg}");
        assert!(msg.contains("corpus is empty"), "not actionable: {msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn missing_recording_is_an_io_error() {
        let out = tempfile::tempdir().unwrap();
        let mut opts = quick_options(Path::new("/nonexistent"), out.path());
        opts.recording = PathBuf::from("/nonexistent/recording.jsonl");
        let err = run_pipeline(&opts).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn sidecar_frame_out_of_range_is_rejected() {
        let data = tempfile::tempdir().unwrap();
        write_synth_bundle(data.path(), 30, 4.0, 2, 30).unwrap();
        let err = classify_hands(10, &data.path().join("hands.jsonl")).unwrap_err();
        assert!(err.to_string().contains("frame"), "{err}");
    }

    #[test]
    fn glove_sidecar_changes_wrist_channels_only_via_readings() {
        // With the sidecar removed, wrist yaw comes from neutral
        // readings (0 everywhere); retargeting must still succeed.
        let data = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        write_synth_bundle(data.path(), 60, 4.0, 8, 30).unwrap();
        std::fs::remove_file(data.path().join("hands.jsonl")).unwrap();
        let report = run_pipeline(&quick_options(data.path(), out.path())).unwrap();
        assert_eq!(report.frames, 60);
    }
}
