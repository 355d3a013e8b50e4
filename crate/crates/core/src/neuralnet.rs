//! Minimal fully connected network: hand-written forward/backward passes
//! and an Adam optimizer, in f64 throughout. This is the whole numerical
//! substrate for the GAN — no autodiff, no BLAS.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::NormalizationSpec;
use crate::error::{Error, Result};

/// Negative-side slope of the leaky ReLU.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Adam denominator guard.
pub const ADAM_EPS: f64 = 1e-8;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Mat {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Mat {
        let mut m = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `self · otherᵀ` — the forward-pass kernel (batch × in times
    /// out × in).
    pub fn mul_abt(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols, "mul_abt: inner dims");
        let mut out = Mat::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                let b = other.row(j);
                let mut acc = 0.0;
                for k in 0..self.cols {
                    acc += a[k] * b[k];
                }
                out.data[i * out.cols + j] = acc;
            }
        }
        out
    }

    /// `selfᵀ · other` — the weight-gradient kernel (both batch-major).
    pub fn mul_atb(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows, "mul_atb: batch dims");
        let mut out = Mat::zeros(self.cols, other.cols);
        for r in 0..self.rows {
            let a = self.row(r);
            let b = other.row(r);
            for i in 0..self.cols {
                let ai = a[i];
                if ai == 0.0 {
                    continue;
                }
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &bj) in dst.iter_mut().zip(b) {
                    *d += ai * bj;
                }
            }
        }
        out
    }

    /// Plain `self · other` — the input-gradient kernel.
    pub fn mul_ab(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "mul_ab: inner dims");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a = self.row(i);
            for (k, &aik) in a.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                let b = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &bkj) in dst.iter_mut().zip(b) {
                    *d += aik * bkj;
                }
            }
        }
        out
    }

    /// Stacks two matrices with equal column counts, `self` on top.
    pub fn vstack(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols, "vstack: column dims");
        let mut data = Vec::with_capacity((self.rows + other.rows) * self.cols);
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Mat {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }

    /// Derivative at `pre`, given `post = apply(pre)` (cheaper for tanh
    /// and sigmoid).
    fn derivative(self, pre: f64, post: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if pre > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Tanh => 1.0 - post * post,
            Activation::Sigmoid => post * (1.0 - post),
        }
    }
}

/// One dense layer: `post = act(x · wᵀ + b)`, weights out × in.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: Mat,
    pub b: Vec<f64>,
    pub act: Activation,
}

/// Gradient (or any parameter-shaped tensor pair) for one layer.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub dw: Mat,
    pub db: Vec<f64>,
}

/// Cached activations from a forward pass, consumed by backward.
/// `acts[l]` is the input to layer `l` (so `acts[0]` is the batch and
/// `acts.last()` the network output); `pres[l]` its pre-activation.
pub struct Tape {
    acts: Vec<Mat>,
    pres: Vec<Mat>,
}

impl Tape {
    pub fn output(&self) -> &Mat {
        self.acts.last().expect("tape has at least the input")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    pub layers: Vec<Layer>,
}

impl MlpNetwork {
    /// Builds a network with Glorot-uniform weights (limit
    /// √(6/(fan_in+fan_out))) and zero biases. Weight entries are drawn
    /// row-major, layer by layer — the draw order is part of the
    /// determinism contract.
    pub fn new(dims: &[usize], acts: &[Activation], rng: &mut ChaCha8Rng) -> Result<Self> {
        if dims.len() < 2 || acts.len() != dims.len() - 1 {
            return Err(Error::Validation(format!(
                "network needs n>=2 dims and n-1 activations, got {} and {}",
                dims.len(),
                acts.len()
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Validation("zero-width layer".into()));
        }
        let mut layers = Vec::with_capacity(acts.len());
        for (l, &act) in acts.iter().enumerate() {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = Mat::from_fn(fan_out, fan_in, |_, _| rng.gen_range(-limit..limit));
            layers.push(Layer {
                w,
                b: vec![0.0; fan_out],
                act,
            });
        }
        Ok(MlpNetwork { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.cols
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").w.rows
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(|l| l.w.rows));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.w.data.len() + l.b.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.is_finite() && l.b.iter().all(|v| v.is_finite()))
    }

    /// Forward pass over a batch (rows are samples).
    pub fn forward(&self, x: &Mat) -> Result<(Mat, Tape)> {
        if x.cols != self.input_dim() {
            return Err(Error::Validation(format!(
                "batch width {} does not match network input {}",
                x.cols,
                self.input_dim()
            )));
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut pres = Vec::with_capacity(self.layers.len());
        acts.push(x.clone());
        for layer in &self.layers {
            let input = acts.last().expect("at least the batch");
            let mut pre = input.mul_abt(&layer.w);
            for i in 0..pre.rows {
                for (p, &bj) in pre.row_mut(i).iter_mut().zip(&layer.b) {
                    *p += bj;
                }
            }
            let mut post = pre.clone();
            for v in &mut post.data {
                *v = layer.act.apply(*v);
            }
            pres.push(pre);
            acts.push(post);
        }
        let out = acts.last().expect("output").clone();
        Ok((out, Tape { acts, pres }))
    }

    /// Convenience forward that drops the tape.
    pub fn predict(&self, x: &Mat) -> Result<Mat> {
        Ok(self.forward(x)?.0)
    }

    fn backprop(&self, tape: &Tape, mut delta: Mat, first_is_pre: bool) -> (Vec<LayerGrads>, Mat) {
        let n = self.layers.len();
        assert_eq!(tape.pres.len(), n, "tape does not match network");
        let mut grads: Vec<Option<LayerGrads>> = (0..n).map(|_| None).collect();
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            let pre = &tape.pres[l];
            let post = &tape.acts[l + 1];
            assert_eq!(delta.rows, pre.rows, "delta batch size");
            assert_eq!(delta.cols, pre.cols, "delta width at layer");
            // delta arrives w.r.t. the layer output; convert to
            // pre-activation unless the caller already supplied it for
            // the last layer.
            if !(first_is_pre && l == n - 1) {
                for (i, d) in delta.data.iter_mut().enumerate() {
                    *d *= layer.act.derivative(pre.data[i], post.data[i]);
                }
            }
            let dw = delta.mul_atb(&tape.acts[l]);
            let mut db = vec![0.0; layer.b.len()];
            for r in 0..delta.rows {
                for (acc, &d) in db.iter_mut().zip(delta.row(r)) {
                    *acc += d;
                }
            }
            grads[l] = Some(LayerGrads { dw, db });
            delta = delta.mul_ab(&layer.w);
        }
        (
            grads.into_iter().map(|g| g.expect("filled")).collect(),
            delta,
        )
    }

    /// Reverse-mode gradients. `output_grad` is ∂loss/∂output, one row
    /// per sample; returns per-layer parameter gradients (summed over the
    /// batch) and ∂loss/∂input.
    pub fn backward(&self, tape: &Tape, output_grad: &Mat) -> (Vec<LayerGrads>, Mat) {
        self.backprop(tape, output_grad.clone(), false)
    }

    /// Like [`Self::backward`], but `delta` is ∂loss/∂pre-activation of
    /// the *last* layer. This is how cross-entropy losses skip the
    /// numerically hostile sigmoid-derivative product: for BCE the delta
    /// is simply `p − y`.
    pub fn backward_from_output_delta(&self, tape: &Tape, delta: &Mat) -> (Vec<LayerGrads>, Mat) {
        self.backprop(tape, delta.clone(), true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamParams {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> AdamParams {
        AdamParams {
            lr,
            beta1,
            beta2,
            eps: ADAM_EPS,
        }
    }
}

/// Adam with bias correction; one state per optimized network.
pub struct AdamState {
    pub params: AdamParams,
    pub t: u64,
    m: Vec<LayerGrads>,
    v: Vec<LayerGrads>,
}

impl AdamState {
    pub fn new(net: &MlpNetwork, params: AdamParams) -> AdamState {
        let zero = |l: &Layer| LayerGrads {
            dw: Mat::zeros(l.w.rows, l.w.cols),
            db: vec![0.0; l.b.len()],
        };
        AdamState {
            params,
            t: 0,
            m: net.layers.iter().map(zero).collect(),
            v: net.layers.iter().map(zero).collect(),
        }
    }

    pub fn step(&mut self, net: &mut MlpNetwork, grads: &[LayerGrads]) {
        assert_eq!(grads.len(), net.layers.len(), "gradient layer count");
        self.t += 1;
        let AdamParams {
            lr,
            beta1,
            beta2,
            eps,
        } = self.params;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        let update = |x: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *x -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for (l, layer) in net.layers.iter_mut().enumerate() {
            for i in 0..layer.w.data.len() {
                update(
                    &mut layer.w.data[i],
                    grads[l].dw.data[i],
                    &mut self.m[l].dw.data[i],
                    &mut self.v[l].dw.data[i],
                );
            }
            for i in 0..layer.b.len() {
                update(
                    &mut layer.b[i],
                    grads[l].db[i],
                    &mut self.m[l].db[i],
                    &mut self.v[l].db[i],
                );
            }
        }
    }
}

/// Sidecar data stored with a model's weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMeta {
    pub seed: u64,
    pub epoch: usize,
    pub norm: NormalizationSpec,
}

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    format: String,
    version: u32,
    dims: Vec<usize>,
    activations: Vec<Activation>,
    seed: u64,
    epoch: usize,
    norm: std::collections::BTreeMap<String, [f64; 2]>,
}

/// Writes a model file: one JSON header line, then all parameters as
/// little-endian f64 in layer order (weights row-major, then biases).
pub fn save_model(net: &MlpNetwork, meta: &ModelMeta, path: &Path) -> Result<()> {
    let header = ModelHeader {
        format: "mlp-model".into(),
        version: 1,
        dims: net.dims(),
        activations: net.layers.iter().map(|l| l.act).collect(),
        seed: meta.seed,
        epoch: meta.epoch,
        norm: meta.norm.to_map(),
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let line = serde_json::to_string(&header).expect("model header serialization");
    writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    for layer in &net.layers {
        for v in &layer.w.data {
            w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))?;
        }
        for v in &layer.b {
            w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a model file written by [`save_model`].
pub fn load_model(path: &Path) -> Result<(MlpNetwork, ModelMeta)> {
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
    let header: ModelHeader = serde_json::from_str(
        std::str::from_utf8(&header_bytes)
            .map_err(|_| Error::parse(path, 1, "header is not UTF-8"))?,
    )
    .map_err(|e| Error::parse(path, 1, format!("bad model header: {e}")))?;
    if header.format != "mlp-model" || header.version != 1 {
        return Err(Error::Validation(format!(
            "unsupported model format {:?} version {}",
            header.format, header.version
        )));
    }
    if header.dims.len() < 2 || header.activations.len() != header.dims.len() - 1 {
        return Err(Error::Validation("model header dims/activations mismatch".into()));
    }
    let norm = NormalizationSpec::from_map(&header.norm)?;

    let mut payload = Vec::new();
    reader
        .read_to_end(&mut payload)
        .map_err(|e| Error::io(path, e))?;
    let param_count: usize = header
        .dims
        .windows(2)
        .map(|d| d[0] * d[1] + d[1])
        .sum();
    if payload.len() != param_count * 8 {
        return Err(Error::Validation(format!(
            "model payload is {} bytes, expected {}",
            payload.len(),
            param_count * 8
        )));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")));
    let mut layers = Vec::new();
    for (l, &act) in header.activations.iter().enumerate() {
        let (fan_in, fan_out) = (header.dims[l], header.dims[l + 1]);
        let w = Mat {
            rows: fan_out,
            cols: fan_in,
            data: values.by_ref().take(fan_out * fan_in).collect(),
        };
        let b: Vec<f64> = values.by_ref().take(fan_out).collect();
        layers.push(Layer { w, b, act });
    }
    let net = MlpNetwork { layers };
    if !net.is_finite() {
        return Err(Error::Validation("model contains non-finite parameters".into()));
    }
    Ok((
        net,
        ModelMeta {
            seed: header.seed,
            epoch: header.epoch,
            norm,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retarget::JointLimits;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_mat(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> Mat {
        Mat::from_fn(rows, cols, |_, _| r.gen_range(-1.0..1.0))
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let net = MlpNetwork {
            layers: vec![Layer {
                w: Mat::from_fn(3, 3, |i, j| if i == j { 1.0 } else { 0.0 }),
                b: vec![0.0; 3],
                act: Activation::Identity,
            }],
        };
        let x = random_mat(5, 3, &mut rng(1));
        let (out, _) = net.forward(&x).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn zero_weights_give_activated_bias_rows() {
        let b = vec![-1.0, 0.0, 2.0];
        let net = MlpNetwork {
            layers: vec![Layer {
                w: Mat::zeros(3, 4),
                b: b.clone(),
                act: Activation::Sigmoid,
            }],
        };
        let x = random_mat(6, 4, &mut rng(2));
        let (out, _) = net.forward(&x).unwrap();
        for i in 0..out.rows {
            for j in 0..3 {
                assert_eq!(out.get(i, j), Activation::Sigmoid.apply(b[j]));
            }
        }
    }

    #[test]
    fn forward_matches_naive_oracle() {
        let mut r = rng(3);
        let net = MlpNetwork::new(
            &[3, 5, 2],
            &[Activation::LeakyRelu, Activation::Tanh],
            &mut r,
        )
        .unwrap();
        let x = random_mat(4, 3, &mut r);
        let (out, _) = net.forward(&x).unwrap();

        // Independent oracle: explicit per-sample loops.
        for s in 0..x.rows {
            let mut cur: Vec<f64> = x.row(s).to_vec();
            for layer in &net.layers {
                let mut next = vec![0.0; layer.w.rows];
                for (o, slot) in next.iter_mut().enumerate() {
                    let mut acc = layer.b[o];
                    for (i, &xi) in cur.iter().enumerate() {
                        acc += layer.w.get(o, i) * xi;
                    }
                    *slot = layer.act.apply(acc);
                }
                cur = next;
            }
            for (j, &want) in cur.iter().enumerate() {
                assert!((out.get(s, j) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let mut r = rng(4);
        let net = MlpNetwork::new(&[3, 2], &[Activation::Identity], &mut r).unwrap();
        assert!(net.forward(&Mat::zeros(4, 5)).is_err());
    }

    #[test]
    fn linear_net_input_grad_is_outgrad_times_w() {
        let mut r = rng(5);
        let net = MlpNetwork::new(&[4, 3], &[Activation::Identity], &mut r).unwrap();
        let x = random_mat(2, 4, &mut r);
        let (_, tape) = net.forward(&x).unwrap();
        let g = random_mat(2, 3, &mut r);
        let (_, input_grad) = net.backward(&tape, &g);
        let want = g.mul_ab(&net.layers[0].w);
        for (a, b) in input_grad.data.iter().zip(&want.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn bias_grad_of_output_sum_is_batch_count() {
        let mut r = rng(6);
        let net = MlpNetwork::new(&[4, 3], &[Activation::Identity], &mut r).unwrap();
        let x = random_mat(5, 4, &mut r);
        let (_, tape) = net.forward(&x).unwrap();
        // loss = sum of all outputs → output_grad = ones.
        let ones = Mat::from_fn(5, 3, |_, _| 1.0);
        let (grads, _) = net.backward(&tape, &ones);
        for &db in &grads[0].db {
            assert!((db - 5.0).abs() < 1e-12);
        }
    }

    /// Relative error used by every finite-difference check.
    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
    }

    /// Central finite-difference check of all parameter gradients under
    /// the loss `sum(c ⊙ output)` for a fixed random `c`.
    fn gradcheck(net: &mut MlpNetwork, batch: usize, seed: u64) -> f64 {
        let mut r = rng(seed);
        let x = random_mat(batch, net.input_dim(), &mut r);
        let c = random_mat(batch, net.output_dim(), &mut r);
        let loss = |net: &MlpNetwork| -> f64 {
            let (out, _) = net.forward(&x).unwrap();
            out.data.iter().zip(&c.data).map(|(o, ci)| o * ci).sum()
        };
        let (_, tape) = net.forward(&x).unwrap();
        let (grads, _) = net.backward(&tape, &c);

        let h = 1e-5;
        let mut worst = 0.0f64;
        for l in 0..net.layers.len() {
            for i in 0..net.layers[l].w.data.len() {
                let orig = net.layers[l].w.data[i];
                net.layers[l].w.data[i] = orig + h;
                let up = loss(net);
                net.layers[l].w.data[i] = orig - h;
                let down = loss(net);
                net.layers[l].w.data[i] = orig;
                worst = worst.max(rel_err((up - down) / (2.0 * h), grads[l].dw.data[i]));
            }
            for i in 0..net.layers[l].b.len() {
                let orig = net.layers[l].b[i];
                net.layers[l].b[i] = orig + h;
                let up = loss(net);
                net.layers[l].b[i] = orig - h;
                let down = loss(net);
                net.layers[l].b[i] = orig;
                worst = worst.max(rel_err((up - down) / (2.0 * h), grads[l].db[i]));
            }
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences_on_mixed_net() {
        let mut r = rng(7);
        let mut net = MlpNetwork::new(
            &[3, 5, 4, 2],
            &[Activation::LeakyRelu, Activation::Tanh, Activation::Sigmoid],
            &mut r,
        )
        .unwrap();
        let worst = gradcheck(&mut net, 3, 100);
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn gradients_match_finite_differences_for_every_activation() {
        for (i, act) in [
            Activation::Identity,
            Activation::Relu,
            Activation::LeakyRelu,
            Activation::Tanh,
            Activation::Sigmoid,
        ]
        .into_iter()
        .enumerate()
        {
            let mut r = rng(8 + i as u64);
            let mut net = MlpNetwork::new(&[4, 6, 3], &[act, act], &mut r).unwrap();
            let worst = gradcheck(&mut net, 4, 200 + i as u64);
            assert!(worst < 1e-4, "{act:?}: worst relative error {worst}");
        }
    }

    #[test]
    fn output_delta_backward_matches_composed_backward() {
        // For a sigmoid last layer, feeding delta_pre = g ⊙ σ'(pre)
        // through the delta entry point must equal backward with g.
        let mut r = rng(9);
        let net = MlpNetwork::new(
            &[3, 4, 2],
            &[Activation::Tanh, Activation::Sigmoid],
            &mut r,
        )
        .unwrap();
        let x = random_mat(5, 3, &mut r);
        let (out, tape) = net.forward(&x).unwrap();
        let g = random_mat(5, 2, &mut r);
        let (grads_a, input_a) = net.backward(&tape, &g);
        let mut delta = g.clone();
        for (i, d) in delta.data.iter_mut().enumerate() {
            let p = out.data[i];
            *d *= p * (1.0 - p);
        }
        let (grads_b, input_b) = net.backward_from_output_delta(&tape, &delta);
        for l in 0..net.layers.len() {
            for (a, b) in grads_a[l].dw.data.iter().zip(&grads_b[l].dw.data) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        for (a, b) in input_a.data.iter().zip(&input_b.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicated_batch_rows_get_duplicated_input_grads() {
        let mut r = rng(10);
        let net = MlpNetwork::new(
            &[4, 5, 3],
            &[Activation::LeakyRelu, Activation::Tanh],
            &mut r,
        )
        .unwrap();
        let row = random_mat(1, 4, &mut r);
        let x = row.vstack(&row);
        let (_, tape) = net.forward(&x).unwrap();
        let grow = random_mat(1, 3, &mut r);
        let g = grow.vstack(&grow);
        let (_, input_grad) = net.backward(&tape, &g);
        assert_eq!(input_grad.row(0), input_grad.row(1));
    }

    #[test]
    fn adam_zero_grad_leaves_params_unchanged() {
        let mut r = rng(11);
        let mut net = MlpNetwork::new(&[3, 2], &[Activation::Identity], &mut r).unwrap();
        let before = net.clone();
        let mut adam = AdamState::new(&net, AdamParams::new(0.01, 0.5, 0.999));
        let zero = vec![LayerGrads {
            dw: Mat::zeros(2, 3),
            db: vec![0.0; 2],
        }];
        adam.step(&mut net, &zero);
        assert_eq!(net, before);
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn adam_first_step_has_lr_magnitude() {
        let mut net = MlpNetwork {
            layers: vec![Layer {
                w: Mat::from_fn(1, 1, |_, _| 0.7),
                b: vec![0.0],
                act: Activation::Identity,
            }],
        };
        let lr = 0.003;
        let mut adam = AdamState::new(&net, AdamParams::new(lr, 0.5, 0.999));
        let grads = vec![LayerGrads {
            dw: Mat::from_fn(1, 1, |_, _| 0.5),
            db: vec![0.0],
        }];
        adam.step(&mut net, &grads);
        let delta = net.layers[0].w.data[0] - 0.7;
        assert!((delta + lr).abs() < 1e-9, "delta {delta}");
    }

    #[test]
    fn adam_descends_a_quadratic() {
        // Single scalar parameter x, loss x², gradient 2x.
        let mut net = MlpNetwork {
            layers: vec![Layer {
                w: Mat::from_fn(1, 1, |_, _| 1.0),
                b: vec![0.0],
                act: Activation::Identity,
            }],
        };
        let mut adam = AdamState::new(&net, AdamParams::new(0.05, 0.5, 0.999));
        let mut prev = 1.0f64;
        for _ in 0..10 {
            let x = net.layers[0].w.data[0];
            let grads = vec![LayerGrads {
                dw: Mat::from_fn(1, 1, |_, _| 2.0 * x),
                db: vec![0.0],
            }];
            adam.step(&mut net, &grads);
            let fx = net.layers[0].w.data[0].powi(2);
            assert!(fx < prev, "f did not decrease: {fx} >= {prev}");
            prev = fx;
        }
    }

    #[test]
    fn adam_lr_zero_is_identity() {
        let mut r = rng(12);
        let mut net = MlpNetwork::new(&[4, 4], &[Activation::Tanh], &mut r).unwrap();
        let before = net.clone();
        let mut adam = AdamState::new(&net, AdamParams::new(0.0, 0.5, 0.999));
        let grads = vec![LayerGrads {
            dw: random_mat(4, 4, &mut r),
            db: vec![1.0; 4],
        }];
        for _ in 0..5 {
            adam.step(&mut net, &grads);
        }
        assert_eq!(net, before);
    }

    #[test]
    fn glorot_init_is_seed_deterministic_and_bounded() {
        let dims = [10, 20, 5];
        let acts = [Activation::LeakyRelu, Activation::Tanh];
        let a = MlpNetwork::new(&dims, &acts, &mut rng(33)).unwrap();
        let b = MlpNetwork::new(&dims, &acts, &mut rng(33)).unwrap();
        assert_eq!(a, b);
        for (l, layer) in a.layers.iter().enumerate() {
            let limit = (6.0 / (dims[l] + dims[l + 1]) as f64).sqrt();
            assert!(layer.w.data.iter().all(|v| v.abs() < limit));
            assert!(layer.b.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn finite_inputs_never_produce_nan() {
        let mut r = rng(13);
        let net = MlpNetwork::new(
            &[4, 8, 4],
            &[Activation::Sigmoid, Activation::Tanh],
            &mut r,
        )
        .unwrap();
        let x = Mat::from_fn(6, 4, |i, j| ((i * 7 + j) as f64 - 10.0) * 1e3);
        let (out, tape) = net.forward(&x).unwrap();
        assert!(out.is_finite());
        let g = Mat::from_fn(6, 4, |_, _| 1e3);
        let (grads, input_grad) = net.backward(&tape, &g);
        assert!(input_grad.is_finite());
        assert!(grads.iter().all(|g| g.dw.is_finite() && g.db.iter().all(|v| v.is_finite())));
    }

    #[test]
    fn model_file_round_trip_is_bit_exact() {
        let mut r = rng(14);
        let net = MlpNetwork::new(
            &[5, 7, 3],
            &[Activation::LeakyRelu, Activation::Tanh],
            &mut r,
        )
        .unwrap();
        let meta = ModelMeta {
            seed: 99,
            epoch: 123,
            norm: NormalizationSpec::from_limits(&JointLimits::default()),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        save_model(&net, &meta, &path).unwrap();
        let (loaded, loaded_meta) = load_model(&path).unwrap();
        assert_eq!(net, loaded);
        assert_eq!(meta, loaded_meta);

        let path2 = dir.path().join("model2.bin");
        save_model(&loaded, &loaded_meta, &path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn model_load_rejects_truncated_payload() {
        let mut r = rng(15);
        let net = MlpNetwork::new(&[3, 2], &[Activation::Tanh], &mut r).unwrap();
        let meta = ModelMeta {
            seed: 1,
            epoch: 0,
            norm: NormalizationSpec::from_limits(&JointLimits::default()),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        save_model(&net, &meta, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(load_model(&path).is_err());
    }
}
