//! A small masking extractor conditioned on an enrollment utterance.
//!
//! ```text
//! mixture -> frames (F) -> encoder (D x F) -> f
//! enrollment -> log-spectrum stats z -> c = spk_encoder z + spk_bias
//! h = relu(W1 (f * c) + b1); m = sigmoid(W2 h + b2)
//! estimate frame = decoder (F x D) (m * f); frames are overlap-added
//! ```
//!
//! Frames do not overlap (hop = F), so overlap-add reduces to concatenation
//! and the final partial frame is zero-padded then trimmed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Waveform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Frame length F in samples.
    pub frame: usize,
    /// Feature dimension D.
    pub feature: usize,
    /// Hidden width of the mask network.
    pub hidden: usize,
    /// FFT length used for enrollment statistics.
    pub stat_fft: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            frame: 64,
            feature: 64,
            hidden: 64,
            stat_fft: 256,
        }
    }
}

impl ModelDims {
    pub fn stat_bins(&self) -> usize {
        self.stat_fft / 2 + 1
    }
}

/// Trainable parameters, all row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyExtractorParams {
    pub dims: ModelDims,
    /// D x F
    pub encoder: Vec<f64>,
    /// D x S
    pub spk_encoder: Vec<f64>,
    /// D
    pub spk_bias: Vec<f64>,
    /// H x D
    pub mask_w1: Vec<f64>,
    pub mask_b1: Vec<f64>,
    /// D x H
    pub mask_w2: Vec<f64>,
    pub mask_b2: Vec<f64>,
    /// F x D
    pub decoder: Vec<f64>,
}

pub const PARAM_NAMES: [&str; 8] = [
    "encoder",
    "spk_encoder",
    "spk_bias",
    "mask_w1",
    "mask_b1",
    "mask_w2",
    "mask_b2",
    "decoder",
];

impl ToyExtractorParams {
    pub fn zeros(dims: ModelDims) -> Self {
        let (f, d, h, s) = (dims.frame, dims.feature, dims.hidden, dims.stat_bins());
        Self {
            dims,
            encoder: vec![0.0; d * f],
            spk_encoder: vec![0.0; d * s],
            spk_bias: vec![0.0; d],
            mask_w1: vec![0.0; h * d],
            mask_b1: vec![0.0; h],
            mask_w2: vec![0.0; d * h],
            mask_b2: vec![0.0; d],
            decoder: vec![0.0; f * d],
        }
    }

    /// Seeded initialisation. The encoder is a uniform draw in
    /// `(-1/sqrt(F), 1/sqrt(F))` orthonormalised row by row, and the decoder
    /// starts as its transpose, so decode(encode(x)) = x when `D >= F`.
    /// Mask weights are small, biases zero, and the conditioning starts near
    /// the all-ones vector.
    pub fn init(dims: ModelDims, seed: u64) -> Result<Self> {
        if dims.feature < dims.frame {
            return Err(Error::DimensionMismatch(format!(
                "feature dim {} must be >= frame {} for an orthonormal encoder",
                dims.feature, dims.frame
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(dims);
        let (f, d, h) = (dims.frame, dims.feature, dims.hidden);

        let a = 1.0 / (f as f64).sqrt();
        // D x F with orthonormal columns: orthonormalise F columns of length D.
        let mut cols: Vec<Vec<f64>> = (0..f)
            .map(|_| (0..d).map(|_| rng.gen_range(-a..a)).collect())
            .collect();
        for j in 0..f {
            for k in 0..j {
                let proj: f64 = cols[j].iter().zip(&cols[k]).map(|(x, y)| x * y).sum();
                let (head, tail) = cols.split_at_mut(j);
                tail[0]
                    .iter_mut()
                    .zip(&head[k])
                    .for_each(|(x, y)| *x -= proj * y);
            }
            let norm = cols[j].iter().map(|x| x * x).sum::<f64>().sqrt();
            cols[j].iter_mut().for_each(|x| *x /= norm);
        }
        for (j, col) in cols.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                p.encoder[i * f + j] = v;
                p.decoder[j * d + i] = v;
            }
        }

        let s = dims.stat_bins();
        let ws = 0.1 / (s as f64).sqrt();
        p.spk_encoder
            .iter_mut()
            .for_each(|v| *v = rng.gen_range(-ws..ws));
        p.spk_bias.fill(1.0);
        let w1 = 1.0 / (d as f64).sqrt();
        p.mask_w1
            .iter_mut()
            .for_each(|v| *v = rng.gen_range(-w1..w1));
        let w2 = 1.0 / (h as f64).sqrt();
        p.mask_w2
            .iter_mut()
            .for_each(|v| *v = rng.gen_range(-w2..w2));
        Ok(p)
    }

    pub fn tensors(&self) -> [(&'static str, &Vec<f64>); 8] {
        [
            ("encoder", &self.encoder),
            ("spk_encoder", &self.spk_encoder),
            ("spk_bias", &self.spk_bias),
            ("mask_w1", &self.mask_w1),
            ("mask_b1", &self.mask_b1),
            ("mask_w2", &self.mask_w2),
            ("mask_b2", &self.mask_b2),
            ("decoder", &self.decoder),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Vec<f64>); 8] {
        [
            ("encoder", &mut self.encoder),
            ("spk_encoder", &mut self.spk_encoder),
            ("spk_bias", &mut self.spk_bias),
            ("mask_w1", &mut self.mask_w1),
            ("mask_b1", &mut self.mask_b1),
            ("mask_w2", &mut self.mask_w2),
            ("mask_b2", &mut self.mask_b2),
            ("decoder", &mut self.decoder),
        ]
    }

    pub fn shapes(&self) -> [(&'static str, Vec<usize>); 8] {
        let (f, d, h, s) = (
            self.dims.frame,
            self.dims.feature,
            self.dims.hidden,
            self.dims.stat_bins(),
        );
        [
            ("encoder", vec![d, f]),
            ("spk_encoder", vec![d, s]),
            ("spk_bias", vec![d]),
            ("mask_w1", vec![h, d]),
            ("mask_b1", vec![h]),
            ("mask_w2", vec![d, h]),
            ("mask_b2", vec![d]),
            ("decoder", vec![f, d]),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        for ((name, t), (_, shape)) in self.tensors().iter().zip(self.shapes()) {
            let want: usize = shape.iter().product();
            if t.len() != want {
                return Err(Error::DimensionMismatch(format!(
                    "{name}: expected {want} values for shape {shape:?}, found {}",
                    t.len()
                )));
            }
        }
        Ok(())
    }

    pub fn flat(&self) -> Vec<f64> {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter().copied())
            .collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} values, got {}",
                self.param_count(),
                values.len()
            )));
        }
        let mut offset = 0;
        for (_, t) in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn norm_sq(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .map(|v| v * v)
            .sum()
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &Self, scale: f64) {
        for ((_, dst), (_, src)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            dst.iter_mut()
                .zip(src.iter())
                .for_each(|(d, s)| *d += scale * s);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

/// On-disk checkpoint: named arrays with shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub dims: ModelDims,
    pub arrays: Vec<NamedArray>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

pub const CHECKPOINT_FORMAT: &str = "tse-sc/toy-extractor";

impl From<&ToyExtractorParams> for Checkpoint {
    fn from(p: &ToyExtractorParams) -> Self {
        let arrays = p
            .tensors()
            .iter()
            .zip(p.shapes())
            .map(|((name, t), (_, shape))| NamedArray {
                name: name.to_string(),
                shape,
                data: t.to_vec(),
            })
            .collect();
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: 1,
            dims: p.dims,
            arrays,
        }
    }
}

impl TryFrom<Checkpoint> for ToyExtractorParams {
    type Error = Error;

    fn try_from(c: Checkpoint) -> Result<Self> {
        if c.format != CHECKPOINT_FORMAT {
            return Err(Error::DimensionMismatch(format!(
                "unknown checkpoint format '{}'",
                c.format
            )));
        }
        let mut p = ToyExtractorParams::zeros(c.dims);
        let shapes = p.shapes();
        for ((name, t), (_, shape)) in p.tensors_mut().into_iter().zip(shapes) {
            let arr =
                c.arrays.iter().find(|a| a.name == name).ok_or_else(|| {
                    Error::DimensionMismatch(format!("checkpoint lacks '{name}'"))
                })?;
            if arr.shape != shape || arr.data.len() != t.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{name}: expected shape {shape:?}, found {:?}",
                    arr.shape
                )));
            }
            t.copy_from_slice(&arr.data);
        }
        Ok(p)
    }
}

impl ToyExtractorParams {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Checkpoint::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(s)?;
        c.try_into()
    }
}

/// Standardised log power spectrum of the enrollment, averaged over
/// Hann-windowed frames of `stat_fft` samples with 50% overlap.
pub fn enrollment_stats(enrollment: &[f64], dims: &ModelDims) -> Vec<f64> {
    let n = dims.stat_fft;
    let bins = dims.stat_bins();
    let hop = (n / 2).max(1);
    let fft = FftPlanner::new().plan_fft_forward(n);
    let window: Vec<f64> = (0..n)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos())
        .collect();
    let mut power = vec![0.0; bins];
    let mut frames = 0usize;
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let mut start = 0;
    loop {
        for (i, b) in buf.iter_mut().enumerate() {
            let x = enrollment.get(start + i).copied().unwrap_or(0.0);
            *b = Complex::new(x * window[i], 0.0);
        }
        fft.process(&mut buf);
        for (p, b) in power.iter_mut().zip(&buf) {
            *p += b.norm_sqr();
        }
        frames += 1;
        start += hop;
        if start + n > enrollment.len() {
            break;
        }
    }
    let mut z: Vec<f64> = power
        .iter()
        .map(|p| (p / frames as f64 + 1e-10).log10())
        .collect();
    let mean = z.iter().sum::<f64>() / bins as f64;
    let std = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / bins as f64).sqrt();
    let std = if std > 1e-12 { std } else { 1.0 };
    z.iter_mut().for_each(|v| *v = (*v - mean) / std);
    z
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

// y = W x (+ b), W is rows x cols row-major
fn matvec(w: &[f64], x: &[f64], rows: usize, out: &mut [f64]) {
    let cols = x.len();
    for r in 0..rows {
        out[r] = w[r * cols..(r + 1) * cols]
            .iter()
            .zip(x)
            .map(|(a, b)| a * b)
            .sum();
    }
}

// y += W^T x
fn matvec_t_acc(w: &[f64], x: &[f64], cols: usize, out: &mut [f64]) {
    for (r, &xr) in x.iter().enumerate() {
        if xr == 0.0 {
            continue;
        }
        for (o, a) in out.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
            *o += a * xr;
        }
    }
}

// G += a b^T
fn outer_acc(g: &mut [f64], a: &[f64], b: &[f64]) {
    let cols = b.len();
    for (r, &ar) in a.iter().enumerate() {
        if ar == 0.0 {
            continue;
        }
        for (gv, bv) in g[r * cols..(r + 1) * cols].iter_mut().zip(b) {
            *gv += ar * bv;
        }
    }
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub estimate: Vec<f64>,
    stats: Vec<f64>,
    cond: Vec<f64>,
    frames: usize,
    // per frame, concatenated
    feat: Vec<f64>,
    cond_feat: Vec<f64>,
    pre_hidden: Vec<f64>,
    hidden: Vec<f64>,
    mask: Vec<f64>,
    masked: Vec<f64>,
}

impl ForwardCache {
    pub fn mask(&self) -> &[f64] {
        &self.mask
    }

    /// Which hidden units passed the ReLU, frame by frame.
    pub fn relu_pattern(&self) -> impl Iterator<Item = bool> + '_ {
        self.pre_hidden.iter().map(|&v| v > 0.0)
    }
}

/// Overrides the mask network output; used to probe the pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaskOverride {
    None,
    Constant(f64),
}

pub fn forward(
    params: &ToyExtractorParams,
    mixture: &Waveform,
    enrollment: &Waveform,
) -> Result<Waveform> {
    let stats = enrollment_stats(enrollment.samples(), &params.dims);
    let cache = forward_cached(params, mixture.samples(), &stats, MaskOverride::None)?;
    Waveform::new(cache.estimate, mixture.sample_rate())
}

pub fn forward_cached(
    params: &ToyExtractorParams,
    mixture: &[f64],
    stats: &[f64],
    mask_override: MaskOverride,
) -> Result<ForwardCache> {
    params.validate()?;
    let dims = params.dims;
    let (f, d, h) = (dims.frame, dims.feature, dims.hidden);
    if stats.len() != dims.stat_bins() {
        return Err(Error::DimensionMismatch(format!(
            "enrollment stats have {} bins, expected {}",
            stats.len(),
            dims.stat_bins()
        )));
    }
    if mixture.is_empty() {
        return Err(Error::EmptySignal);
    }
    let frames = mixture.len().div_ceil(f);

    let mut cond = vec![0.0; d];
    matvec(&params.spk_encoder, stats, d, &mut cond);
    cond.iter_mut()
        .zip(&params.spk_bias)
        .for_each(|(c, b)| *c += b);

    let mut cache = ForwardCache {
        estimate: vec![0.0; frames * f],
        stats: stats.to_vec(),
        cond,
        frames,
        feat: vec![0.0; frames * d],
        cond_feat: vec![0.0; frames * d],
        pre_hidden: vec![0.0; frames * h],
        hidden: vec![0.0; frames * h],
        mask: vec![0.0; frames * d],
        masked: vec![0.0; frames * d],
    };
    let mut frame = vec![0.0; f];
    let mut logits = vec![0.0; d];
    for i in 0..frames {
        frame.fill(0.0);
        let end = ((i + 1) * f).min(mixture.len());
        frame[..end - i * f].copy_from_slice(&mixture[i * f..end]);

        let feat = &mut cache.feat[i * d..(i + 1) * d];
        matvec(&params.encoder, &frame, d, feat);
        let cf = &mut cache.cond_feat[i * d..(i + 1) * d];
        for k in 0..d {
            cf[k] = feat[k] * cache.cond[k];
        }
        let pre = &mut cache.pre_hidden[i * h..(i + 1) * h];
        matvec(&params.mask_w1, cf, h, pre);
        let hid = &mut cache.hidden[i * h..(i + 1) * h];
        for k in 0..h {
            pre[k] += params.mask_b1[k];
            hid[k] = pre[k].max(0.0);
        }
        matvec(&params.mask_w2, hid, d, &mut logits);
        let mask = &mut cache.mask[i * d..(i + 1) * d];
        let masked = &mut cache.masked[i * d..(i + 1) * d];
        for k in 0..d {
            mask[k] = match mask_override {
                MaskOverride::None => sigmoid(logits[k] + params.mask_b2[k]),
                MaskOverride::Constant(v) => v,
            };
            masked[k] = mask[k] * feat[k];
        }
        matvec(
            &params.decoder,
            masked,
            f,
            &mut cache.estimate[i * f..(i + 1) * f],
        );
    }
    cache.estimate.truncate(mixture.len());
    Ok(cache)
}

/// Chain rule from `d loss / d estimate` to every parameter.
pub fn backward_from_cache(
    params: &ToyExtractorParams,
    mixture: &[f64],
    cache: &ForwardCache,
    upstream: &[f64],
) -> Result<ToyExtractorParams> {
    if upstream.len() != mixture.len() {
        return Err(Error::LengthMismatch {
            left: upstream.len(),
            right: mixture.len(),
        });
    }
    let dims = params.dims;
    let (f, d, h) = (dims.frame, dims.feature, dims.hidden);
    let mut g = ToyExtractorParams::zeros(dims);
    let mut d_cond = vec![0.0; d];
    let mut frame = vec![0.0; f];
    let mut d_out = vec![0.0; f];
    let mut d_masked = vec![0.0; d];
    let mut d_logit = vec![0.0; d];
    let mut d_hidden = vec![0.0; h];
    let mut d_cf = vec![0.0; d];
    let mut d_feat = vec![0.0; d];

    for i in 0..cache.frames {
        let end = ((i + 1) * f).min(mixture.len());
        d_out.fill(0.0);
        d_out[..end - i * f].copy_from_slice(&upstream[i * f..end]);
        if d_out.iter().all(|v| *v == 0.0) {
            continue;
        }
        frame.fill(0.0);
        frame[..end - i * f].copy_from_slice(&mixture[i * f..end]);

        let feat = &cache.feat[i * d..(i + 1) * d];
        let cf = &cache.cond_feat[i * d..(i + 1) * d];
        let pre = &cache.pre_hidden[i * h..(i + 1) * h];
        let hid = &cache.hidden[i * h..(i + 1) * h];
        let mask = &cache.mask[i * d..(i + 1) * d];
        let masked = &cache.masked[i * d..(i + 1) * d];

        outer_acc(&mut g.decoder, &d_out, masked);
        d_masked.fill(0.0);
        matvec_t_acc(&params.decoder, &d_out, d, &mut d_masked);

        for k in 0..d {
            d_feat[k] = d_masked[k] * mask[k];
            let d_mask = d_masked[k] * feat[k];
            d_logit[k] = d_mask * mask[k] * (1.0 - mask[k]);
            g.mask_b2[k] += d_logit[k];
        }
        outer_acc(&mut g.mask_w2, &d_logit, hid);
        d_hidden.fill(0.0);
        matvec_t_acc(&params.mask_w2, &d_logit, h, &mut d_hidden);
        for k in 0..h {
            if pre[k] <= 0.0 {
                d_hidden[k] = 0.0;
            }
            g.mask_b1[k] += d_hidden[k];
        }
        outer_acc(&mut g.mask_w1, &d_hidden, cf);
        d_cf.fill(0.0);
        matvec_t_acc(&params.mask_w1, &d_hidden, d, &mut d_cf);
        for k in 0..d {
            d_feat[k] += d_cf[k] * cache.cond[k];
            d_cond[k] += d_cf[k] * feat[k];
        }
        outer_acc(&mut g.encoder, &d_feat, &frame);
    }
    outer_acc(&mut g.spk_encoder, &d_cond, &cache.stats);
    g.spk_bias.copy_from_slice(&d_cond);
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_dims() -> ModelDims {
        ModelDims {
            frame: 8,
            feature: 10,
            hidden: 6,
            stat_fft: 16,
        }
    }

    fn signal(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect()
    }

    #[test]
    fn default_dims_are_desk_scale() {
        let p = ToyExtractorParams::init(ModelDims::default(), 0).unwrap();
        assert!(p.param_count() <= 50_000, "{}", p.param_count());
        p.validate().unwrap();
    }

    #[test]
    fn init_is_seeded() {
        let a = ToyExtractorParams::init(small_dims(), 3).unwrap();
        let b = ToyExtractorParams::init(small_dims(), 3).unwrap();
        let c = ToyExtractorParams::init(small_dims(), 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn unit_mask_passes_mixture_through() {
        let p = ToyExtractorParams::init(small_dims(), 1).unwrap();
        let x = signal(37, 2);
        let stats = enrollment_stats(&signal(40, 3), &p.dims);
        let out = forward_cached(&p, &x, &stats, MaskOverride::Constant(1.0)).unwrap();
        // orthonormal encoder with decoder = encoder^T reconstructs exactly
        for (a, b) in out.estimate.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
        let zero = forward_cached(&p, &x, &stats, MaskOverride::Constant(0.0)).unwrap();
        assert!(zero.estimate.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn output_shape_and_mask_bounds() {
        let mut p = ToyExtractorParams::init(small_dims(), 5).unwrap();
        p.mask_b2.iter_mut().for_each(|b| *b = 3.0);
        let x = signal(51, 6);
        let stats = enrollment_stats(&signal(30, 7), &p.dims);
        let out = forward_cached(&p, &x, &stats, MaskOverride::None).unwrap();
        assert_eq!(out.estimate.len(), 51);
        assert!(out.estimate.iter().all(|v| v.is_finite()));
        assert!(out.mask().iter().all(|&m| m > 0.0 && m < 1.0));
        let again = forward_cached(&p, &x, &stats, MaskOverride::None).unwrap();
        assert_eq!(out.estimate, again.estimate);
    }

    #[test]
    fn masked_energy_below_passthrough() {
        let p = ToyExtractorParams::init(ModelDims::default(), 8).unwrap();
        let x = signal(1000, 9);
        let stats = enrollment_stats(&signal(512, 10), &p.dims);
        let pass = forward_cached(&p, &x, &stats, MaskOverride::Constant(1.0)).unwrap();
        let est = forward_cached(&p, &x, &stats, MaskOverride::None).unwrap();
        let e = |v: &[f64]| v.iter().map(|s| s * s).sum::<f64>();
        assert!(e(&est.estimate) <= (1.0 + 1e-9) * e(&pass.estimate));
    }

    #[test]
    fn enrollment_stats_are_standardised() {
        let dims = ModelDims::default();
        let z = enrollment_stats(&signal(8000, 11), &dims);
        assert_eq!(z.len(), 129);
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / z.len() as f64;
        assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-9);
        // level independent
        let loud: Vec<f64> = signal(8000, 11).iter().map(|v| 3.0 * v).collect();
        let z2 = enrollment_stats(&loud, &dims);
        for (a, b) in z.iter().zip(&z2) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn backward_is_linear_in_upstream() {
        let p = ToyExtractorParams::init(small_dims(), 12).unwrap();
        let x = signal(30, 13);
        let stats = enrollment_stats(&signal(30, 14), &p.dims);
        let cache = forward_cached(&p, &x, &stats, MaskOverride::None).unwrap();
        let up = signal(30, 15);
        let g1 = backward_from_cache(&p, &x, &cache, &up).unwrap();
        let up2: Vec<f64> = up.iter().map(|v| 2.0 * v).collect();
        let g2 = backward_from_cache(&p, &x, &cache, &up2).unwrap();
        for (a, b) in g1.flat().iter().zip(g2.flat()) {
            assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        let g0 = backward_from_cache(&p, &x, &cache, &vec![0.0; 30]).unwrap();
        assert!(g0.flat().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn backward_matches_finite_differences_on_linear_probe() {
        // loss = <u, estimate> so d loss / d estimate = u
        let p = ToyExtractorParams::init(small_dims(), 16).unwrap();
        let x = signal(29, 17);
        let stats = enrollment_stats(&signal(30, 18), &p.dims);
        let u = signal(29, 19);
        let loss = |q: &ToyExtractorParams| {
            let c = forward_cached(q, &x, &stats, MaskOverride::None).unwrap();
            c.estimate.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>()
        };
        let cache = forward_cached(&p, &x, &stats, MaskOverride::None).unwrap();
        let g = backward_from_cache(&p, &x, &cache, &u).unwrap().flat();
        let base = p.flat();
        let mut q = p.clone();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for i in 0..base.len() {
            let mut v = base.clone();
            v[i] += h;
            q.set_flat(&v).unwrap();
            let lp = loss(&q);
            v[i] -= 2.0 * h;
            q.set_flat(&v).unwrap();
            let lm = loss(&q);
            let num = (lp - lm) / (2.0 * h);
            let err = (num - g[i]).abs() / num.abs().max(g[i].abs()).max(1e-6);
            worst = worst.max(err);
        }
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = ToyExtractorParams::init(small_dims(), 20).unwrap();
        let back = ToyExtractorParams::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(back, p);
        let mut c = Checkpoint::from(&p);
        c.arrays[0].shape = vec![1, 2];
        assert!(ToyExtractorParams::try_from(c).is_err());
    }
}
