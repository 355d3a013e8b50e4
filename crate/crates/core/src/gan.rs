//! Vanilla GAN over Units of Movement: alternating discriminator /
//! generator updates with the non-saturating generator loss, plus the
//! sampling interface for trained generators.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{denormalize_um, Corpus, NormalizationSpec, UnitOfMovement, UM_DIM};
use crate::error::{Error, Result};
use crate::neuralnet::{
    save_model, Activation, AdamParams, AdamState, Mat, MlpNetwork, ModelMeta,
};

/// Probabilities are clamped to [ε, 1−ε] inside loss *values* so logged
/// losses stay finite; gradients use the unclamped (p − y) form.
const LOSS_P_EPS: f64 = 1e-7;

/// Metrics are computed on a fixed evaluation set of at most this many
/// corpus rows (plus as many fixed noise rows), so runs with lr = 0 log
/// identical numbers every epoch.
const EVAL_ROWS: usize = 128;

/// Training hyperparameters. Defaults follow the reference setup:
/// batch 16, lr 2·10⁻⁴, β₁ 0.5, β₂ 0.999, 2000 epochs, 100-dim noise.
#[derive(Debug, Clone, PartialEq)]
pub struct GanConfig {
    pub z_dim: usize,
    pub batch: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Checkpoint every this many epochs into `checkpoint_dir`; 0
    /// disables checkpointing.
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            z_dim: 100,
            batch: 16,
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            epochs: 2000,
            seed: 42,
            checkpoint_every: 0,
            checkpoint_dir: None,
        }
    }
}

impl GanConfig {
    pub fn validate(&self, corpus_len: usize) -> Result<()> {
        if self.z_dim == 0 || self.batch == 0 {
            return Err(Error::Config("z_dim and batch must be positive".into()));
        }
        if self.batch > corpus_len {
            return Err(Error::Config(format!(
                "batch size {} exceeds corpus size {corpus_len}",
                self.batch
            )));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("bad learning rate {}", self.lr)));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::Config(format!("{name} must be in [0,1), got {beta}")));
            }
        }
        Ok(())
    }
}

/// Generator shape: z_dim → 128 → 256 → 56, leaky-relu hidden layers and
/// a tanh output matching the [−1, 1] corpus normalization.
pub fn generator_arch(z_dim: usize) -> (Vec<usize>, Vec<Activation>) {
    (
        vec![z_dim, 128, 256, UM_DIM],
        vec![Activation::LeakyRelu, Activation::LeakyRelu, Activation::Tanh],
    )
}

/// Discriminator shape: 56 → 256 → 128 → 1, sigmoid output.
pub fn discriminator_arch() -> (Vec<usize>, Vec<Activation>) {
    (
        vec![UM_DIM, 256, 128, 1],
        vec![
            Activation::LeakyRelu,
            Activation::LeakyRelu,
            Activation::Sigmoid,
        ],
    )
}

/// n × z_dim matrix of i.i.d. uniform [−1, 1] noise.
pub fn sample_noise(n: usize, z_dim: usize, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_fn(n, z_dim, |_, _| rng.gen_range(-1.0..1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainLogEntry {
    pub epoch: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    pub d_acc_real: f64,
    pub d_acc_fake: f64,
}

/// Per-epoch metrics on the fixed evaluation set. Entry 0 is logged
/// before any update (the untrained networks).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub entries: Vec<TrainLogEntry>,
}

impl TrainLog {
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        writeln!(w, "epoch,d_loss,g_loss,d_acc_real,d_acc_fake").map_err(|e| Error::io(path, e))?;
        for e in &self.entries {
            writeln!(
                w,
                "{},{},{},{},{}",
                e.epoch, e.d_loss, e.g_loss, e.d_acc_real, e.d_acc_fake
            )
            .map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn clamped_neg_log(p: f64) -> f64 {
    -p.clamp(LOSS_P_EPS, 1.0 - LOSS_P_EPS).ln()
}

fn eval_metrics(
    g: &MlpNetwork,
    d: &MlpNetwork,
    epoch: usize,
    eval_real: &Mat,
    z_eval: &Mat,
) -> Result<TrainLogEntry> {
    let p_real = d.predict(eval_real)?;
    let fake = g.predict(z_eval)?;
    let p_fake = d.predict(&fake)?;

    let mut d_loss = 0.0;
    let mut acc_real = 0usize;
    for &p in &p_real.data {
        d_loss += clamped_neg_log(p);
        if p > 0.5 {
            acc_real += 1;
        }
    }
    let mut g_loss = 0.0;
    let mut acc_fake = 0usize;
    for &p in &p_fake.data {
        d_loss += clamped_neg_log(1.0 - p);
        g_loss += clamped_neg_log(p);
        if p < 0.5 {
            acc_fake += 1;
        }
    }
    Ok(TrainLogEntry {
        epoch,
        d_loss: d_loss / (p_real.data.len() + p_fake.data.len()) as f64,
        g_loss: g_loss / p_fake.data.len() as f64,
        d_acc_real: acc_real as f64 / p_real.data.len() as f64,
        d_acc_fake: acc_fake as f64 / p_fake.data.len() as f64,
    })
}

fn batch_from_corpus(corpus: &Corpus, indices: &[usize]) -> Mat {
    let mut m = Mat::zeros(indices.len(), UM_DIM);
    for (row, &idx) in indices.iter().enumerate() {
        m.row_mut(row).copy_from_slice(&corpus.ums[idx].values);
    }
    m
}

/// Continues adversarial training on existing networks. `rng` must carry
/// the stream the networks were initialized from for full determinism;
/// [`train`] is the usual entry point.
pub fn train_networks(
    g: &mut MlpNetwork,
    d: &mut MlpNetwork,
    corpus: &Corpus,
    cfg: &GanConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TrainLog> {
    cfg.validate(corpus.len())?;
    if g.input_dim() != cfg.z_dim || g.output_dim() != UM_DIM {
        return Err(Error::Validation(format!(
            "generator shape {}→{} does not fit z_dim {} / UM dim {UM_DIM}",
            g.input_dim(),
            g.output_dim(),
            cfg.z_dim
        )));
    }
    if d.input_dim() != UM_DIM || d.output_dim() != 1 {
        return Err(Error::Validation("discriminator shape does not fit".into()));
    }

    // Fixed evaluation set: the first rows of the corpus plus one noise
    // draw taken up front, so metric trajectories are comparable across
    // epochs (and constant when lr = 0).
    let n_eval = corpus.len().min(EVAL_ROWS);
    let eval_real = batch_from_corpus(corpus, &(0..n_eval).collect::<Vec<_>>());
    let z_eval = sample_noise(n_eval, cfg.z_dim, rng);

    let mut adam_g = AdamState::new(g, AdamParams::new(cfg.lr, cfg.beta1, cfg.beta2));
    let mut adam_d = AdamState::new(d, AdamParams::new(cfg.lr, cfg.beta1, cfg.beta2));

    let mut log = TrainLog::default();
    log.entries.push(eval_metrics(g, d, 0, &eval_real, &z_eval)?);

    let n_batches = corpus.len() / cfg.batch;
    let mut indices: Vec<usize> = (0..corpus.len()).collect();
    for epoch in 1..=cfg.epochs {
        indices.shuffle(rng);
        for chunk in indices.chunks_exact(cfg.batch).take(n_batches) {
            // Discriminator step: real batch labeled 1 stacked over a
            // generated batch labeled 0, mean binary cross-entropy.
            let real = batch_from_corpus(corpus, chunk);
            let z_d = sample_noise(cfg.batch, cfg.z_dim, rng);
            let fake = g.predict(&z_d)?;
            let x = real.vstack(&fake);
            let (p, tape_d) = d.forward(&x)?;
            let two_b = (2 * cfg.batch) as f64;
            let delta = Mat::from_fn(p.rows, 1, |i, _| {
                let y = if i < cfg.batch { 1.0 } else { 0.0 };
                (p.get(i, 0) - y) / two_b
            });
            let (d_grads, _) = d.backward_from_output_delta(&tape_d, &delta);
            adam_d.step(d, &d_grads);

            // Generator step: non-saturating loss −log D(G(z)); the
            // discriminator only provides gradients here.
            let z_g = sample_noise(cfg.batch, cfg.z_dim, rng);
            let (x_g, tape_g) = g.forward(&z_g)?;
            let (p_g, tape_d2) = d.forward(&x_g)?;
            let delta_g = Mat::from_fn(p_g.rows, 1, |i, _| {
                (p_g.get(i, 0) - 1.0) / cfg.batch as f64
            });
            let (_, dx) = d.backward_from_output_delta(&tape_d2, &delta_g);
            let (g_grads, _) = g.backward(&tape_g, &dx);
            adam_g.step(g, &g_grads);
        }

        let entry = eval_metrics(g, d, epoch, &eval_real, &z_eval)?;
        if !entry.d_loss.is_finite()
            || !entry.g_loss.is_finite()
            || !g.is_finite()
            || !d.is_finite()
        {
            return Err(Error::Numeric(format!(
                "non-finite state at epoch {epoch} (d_loss={}, g_loss={}); \
                 last checkpoint retained",
                entry.d_loss, entry.g_loss
            )));
        }
        log.entries.push(entry);

        if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 {
            if let Some(dir) = &cfg.checkpoint_dir {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                let meta = ModelMeta {
                    seed: cfg.seed,
                    epoch,
                    norm: corpus.norm.clone(),
                };
                save_model(g, &meta, &dir.join(format!("gen_{epoch:05}.bin")))?;
                save_model(d, &meta, &dir.join(format!("disc_{epoch:05}.bin")))?;
            }
        }
    }
    Ok(log)
}

/// Initializes G and D from the seed and trains for `cfg.epochs`. The
/// rng stream order — G init, D init, eval noise, then per-epoch
/// shuffles and batch noise — is fixed; identical (corpus, cfg) give
/// bit-identical weights.
pub fn train(corpus: &Corpus, cfg: &GanConfig) -> Result<(MlpNetwork, MlpNetwork, TrainLog)> {
    cfg.validate(corpus.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (g_dims, g_acts) = generator_arch(cfg.z_dim);
    let mut g = MlpNetwork::new(&g_dims, &g_acts, &mut rng)?;
    let (d_dims, d_acts) = discriminator_arch();
    let mut d = MlpNetwork::new(&d_dims, &d_acts, &mut rng)?;
    let log = train_networks(&mut g, &mut d, corpus, cfg, &mut rng)?;
    Ok((g, d, log))
}

/// Samples `n` UMs from a generator and decodes them to joint units.
/// The tanh output plus the normalization bounds guarantee every decoded
/// value lies within the joint limits backing `norm`.
pub fn generate_ums(
    generator: &MlpNetwork,
    n: usize,
    rng: &mut ChaCha8Rng,
    norm: &NormalizationSpec,
) -> Result<Vec<UnitOfMovement>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if generator.output_dim() != UM_DIM {
        return Err(Error::Validation(format!(
            "generator output dim {} is not a UM",
            generator.output_dim()
        )));
    }
    let z = sample_noise(n, generator.input_dim(), rng);
    let out = generator.predict(&z)?;
    let mut ums = Vec::with_capacity(n);
    for i in 0..n {
        let mut values = [0.0; UM_DIM];
        values.copy_from_slice(out.row(i));
        let normalized = UnitOfMovement { values };
        ums.push(denormalize_um(&normalized, norm));
    }
    Ok(ums)
}
