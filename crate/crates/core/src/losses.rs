//! Training objectives on the estimate: plain negative SI-SDR, the scaled
//! SI-SDR loss driven by the chunkwise SC ratio, and the class-weighted
//! chunkwise SI-SDRi loss.
//!
//! Every loss returns its value and `d loss / d estimate`. Discrete
//! quantities (chunk validity, class membership, the SC ratio and the sign
//! branch of the scaled loss) are held constant when differentiating.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{
    chunk_sisdri_eval, si_sdr_eval, valid_chunk_mask, BinEdges, ChunkReference, Saturation,
    ScStatistics, SiSdrConfig,
};
use crate::signal::{ActivityConfig, ChunkIndex};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleLossConfig {
    pub gamma1: f64,
    pub gamma2: f64,
}

impl Default for ScaleLossConfig {
    fn default() -> Self {
        Self {
            gamma1: 1.0,
            gamma2: 1.0,
        }
    }
}

impl ScaleLossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma1.is_finite() && self.gamma2.is_finite()) {
            return Err(Error::InvalidConfig(
                "gamma1 and gamma2 must be finite".into(),
            ));
        }
        Ok(())
    }

    /// `gamma1 - gamma2 * r` for non-negative SI-SDR, `gamma1 + gamma2 * r`
    /// otherwise; `r` is the SC ratio as a fraction.
    pub fn alpha(&self, si_sdr_db: f64, sc_fraction: f64) -> f64 {
        if si_sdr_db >= 0.0 {
            self.gamma1 - self.gamma2 * sc_fraction
        } else {
            self.gamma1 + self.gamma2 * sc_fraction
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightMode {
    /// Class terms are the per-class sums of chunkwise SI-SDRi.
    #[default]
    SumPerClass,
    /// Class terms are the per-class chunk counts. Piecewise constant in the
    /// estimate, so its gradient is zero; useful for diagnostics only.
    CountPerClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightLossConfig {
    weights: [f64; 4],
    pub mode: WeightMode,
}

impl Default for WeightLossConfig {
    fn default() -> Self {
        Self {
            weights: [5.0, 5.0, 1.0, 1.0],
            mode: WeightMode::SumPerClass,
        }
    }
}

impl WeightLossConfig {
    /// Weights must satisfy `w0 >= w1 >= w2 >= w3 > 0`.
    pub fn new(weights: [f64; 4], mode: WeightMode) -> Result<Self> {
        let ordered = weights.windows(2).all(|w| w[0] >= w[1]);
        if !ordered || weights[3] <= 0.0 || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "weights must satisfy w0 >= w1 >= w2 >= w3 > 0, got {weights:?}"
            )));
        }
        Ok(Self { weights, mode })
    }

    pub fn weights(&self) -> [f64; 4] {
        self.weights
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    /// Lower is better.
    pub value: f64,
    /// `d value / d estimate[t]`, same length as the estimate.
    pub grad_estimate: Vec<f64>,
    /// The SC statistics could not be formed (no valid chunk).
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossKind {
    Plain,
    Scale,
    Weight,
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::Plain => "plain",
            LossKind::Scale => "scale",
            LossKind::Weight => "weight",
        })
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(LossKind::Plain),
            "scale" => Ok(LossKind::Scale),
            "weight" => Ok(LossKind::Weight),
            other => Err(Error::InvalidConfig(format!("unknown loss kind '{other}'"))),
        }
    }
}

/// Everything the three losses can be configured with.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossSettings {
    pub sisdr: SiSdrConfig,
    pub activity: ActivityConfig,
    pub reference: ChunkReference,
    pub bins: BinEdges,
    pub scale: ScaleLossConfig,
    pub weight: WeightLossConfig,
}

impl LossSettings {
    pub fn evaluate(
        &self,
        kind: LossKind,
        estimate: &[f64],
        target: &[f64],
        mixture: &[f64],
        chunks: &[ChunkIndex],
    ) -> Result<LossResult> {
        Ok(evaluate_with_regime(kind, estimate, target, mixture, chunks, self)?.0)
    }
}

// Discrete decisions taken while evaluating a loss. Finite differences are
// only meaningful where a perturbation leaves these unchanged.
pub(crate) type Regime = Vec<i64>;

fn saturation_code(s: Saturation) -> i64 {
    match s {
        Saturation::Low => -1,
        Saturation::Interior => 0,
        Saturation::High => 1,
    }
}

fn plain(estimate: &[f64], target: &[f64], cfg: &SiSdrConfig) -> Result<(LossResult, Regime)> {
    let ev = si_sdr_eval(estimate, target, cfg, true)?;
    let grad = ev
        .grad
        .unwrap_or_default()
        .into_iter()
        .map(|g| -g)
        .collect();
    Ok((
        LossResult {
            value: -ev.db,
            grad_estimate: grad,
            degenerate: false,
        },
        vec![saturation_code(ev.saturation)],
    ))
}

struct ChunkTerms {
    stats: ScStatistics,
    // gradient of each valid chunk's SI-SDRi, only when requested
    grads: Vec<Vec<f64>>,
    regime: Regime,
}

#[allow(clippy::too_many_arguments)]
fn chunk_terms(
    estimate: &[f64],
    target: &[f64],
    mixture: &[f64],
    chunks: &[ChunkIndex],
    settings: &LossSettings,
    want_grad: bool,
) -> Result<ChunkTerms> {
    if estimate.len() != mixture.len() {
        return Err(Error::LengthMismatch {
            left: estimate.len(),
            right: mixture.len(),
        });
    }
    let active = valid_chunk_mask(estimate, target, chunks, &settings.activity)?;
    let mut values = Vec::new();
    let mut valid = Vec::new();
    let mut grads = Vec::new();
    let mut regime = Vec::with_capacity(chunks.len() * 3);
    for (k, c) in chunks.iter().enumerate() {
        if !active[k] {
            regime.push(-9);
            continue;
        }
        let ev = chunk_sisdri_eval(
            c.slice(estimate),
            c.slice(target),
            c.slice(mixture),
            settings.reference,
            &settings.sisdr,
            want_grad,
        )?;
        let Some(ev) = ev else {
            regime.push(-8);
            continue;
        };
        regime.push(settings.bins.class_of(ev.value) as i64);
        regime.push((ev.value < 0.0) as i64);
        regime.extend(ev.saturation.map(saturation_code));
        values.push(ev.value);
        valid.push(k);
        if let Some(g) = ev.grad {
            grads.push(g);
        }
    }
    Ok(ChunkTerms {
        stats: ScStatistics::from_values(values, valid, &settings.bins),
        grads,
        regime,
    })
}

fn scale(
    estimate: &[f64],
    target: &[f64],
    mixture: &[f64],
    chunks: &[ChunkIndex],
    settings: &LossSettings,
) -> Result<(LossResult, Regime)> {
    let ev = si_sdr_eval(estimate, target, &settings.sisdr, true)?;
    let terms = chunk_terms(estimate, target, mixture, chunks, settings, false)?;
    let fraction = terms.stats.r_scr / 100.0;
    let alpha = settings.scale.alpha(ev.db, fraction);
    let grad = ev
        .grad
        .unwrap_or_default()
        .into_iter()
        .map(|g| -alpha * g)
        .collect();
    let mut regime = terms.regime;
    regime.push(saturation_code(ev.saturation));
    regime.push((ev.db >= 0.0) as i64);
    Ok((
        LossResult {
            value: -alpha * ev.db,
            grad_estimate: grad,
            degenerate: terms.stats.degenerate,
        },
        regime,
    ))
}

fn weight(
    estimate: &[f64],
    target: &[f64],
    mixture: &[f64],
    chunks: &[ChunkIndex],
    settings: &LossSettings,
) -> Result<(LossResult, Regime)> {
    let sum_mode = settings.weight.mode == WeightMode::SumPerClass;
    let terms = chunk_terms(estimate, target, mixture, chunks, settings, sum_mode)?;
    let stats = &terms.stats;
    if stats.n_valid == 0 {
        return Err(Error::NoValidChunks);
    }
    let w = settings.weight.weights;
    let norm = 1.0 / stats.n_valid as f64;
    let mut grad = vec![0.0; estimate.len()];
    let value = match settings.weight.mode {
        WeightMode::SumPerClass => {
            for ((&k, &v), g) in stats
                .valid_chunks
                .iter()
                .zip(&stats.chunk_sisdri)
                .zip(&terms.grads)
            {
                let scale = -norm * w[settings.bins.class_of(v)];
                for (dst, src) in grad[chunks[k].range()].iter_mut().zip(g) {
                    *dst += scale * src;
                }
            }
            -norm * (0..4).map(|j| w[j] * stats.class_sum[j]).sum::<f64>()
        }
        WeightMode::CountPerClass => {
            -norm
                * (0..4)
                    .map(|j| w[j] * stats.class_freq[j] as f64)
                    .sum::<f64>()
        }
    };
    Ok((
        LossResult {
            value,
            grad_estimate: grad,
            degenerate: false,
        },
        terms.regime,
    ))
}

/// Loss plus a fingerprint of its discrete decisions (clamp saturation,
/// branch, validity and class of every chunk).
pub(crate) fn evaluate_with_regime(
    kind: LossKind,
    estimate: &[f64],
    target: &[f64],
    mixture: &[f64],
    chunks: &[ChunkIndex],
    settings: &LossSettings,
) -> Result<(LossResult, Regime)> {
    match kind {
        LossKind::Plain => plain(estimate, target, &settings.sisdr),
        LossKind::Scale => scale(estimate, target, mixture, chunks, settings),
        LossKind::Weight => weight(estimate, target, mixture, chunks, settings),
    }
}

/// Negative SI-SDR. Zero gradient when the clamp is active.
pub fn loss_sisdr(estimate: &[f64], target: &[f64], cfg: &SiSdrConfig) -> Result<LossResult> {
    Ok(plain(estimate, target, cfg)?.0)
}

/// `-alpha * SI-SDR` with `alpha` set by the chunkwise SC ratio (see
/// [`ScaleLossConfig::alpha`]). With no valid chunk the ratio counts as 0 and
/// the result is flagged degenerate.
pub fn loss_scale_sisdr(
    estimate: &[f64],
    target: &[f64],
    mixture: &[f64],
    chunks: &[ChunkIndex],
    settings: &LossSettings,
) -> Result<LossResult> {
    Ok(scale(estimate, target, mixture, chunks, settings)?.0)
}

/// `-(1 / N_valid) * sum_j w_j * s_j` over the four SI-SDRi classes.
pub fn loss_weight_sisdr(
    estimate: &[f64],
    target: &[f64],
    mixture: &[f64],
    chunks: &[ChunkIndex],
    settings: &LossSettings,
) -> Result<LossResult> {
    Ok(weight(estimate, target, mixture, chunks, settings)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// Max over checked coordinates of
    /// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates whose perturbation crossed a clamp, branch or bin edge.
    pub skipped: usize,
}

pub const GRAD_CHECK_MAX_LEN: usize = 512;

/// Fourth-order central difference from `f(x+h), f(x-h), f(x+2h), f(x-2h)`.
pub(crate) fn central_difference(f: [f64; 4], h: f64) -> f64 {
    (8.0 * (f[0] - f[1]) - (f[2] - f[3])) / (12.0 * h)
}

/// Compares the analytic estimate-gradient of a loss with fourth-order
/// central differences of step `fd_step`. Coordinates where a probe within
/// `2 * fd_step` crosses a clamp, branch, class or validity boundary are
/// skipped.
pub fn gradient_check(
    kind: LossKind,
    estimate: &[f64],
    target: &[f64],
    mixture: &[f64],
    chunks: &[ChunkIndex],
    settings: &LossSettings,
    fd_step: f64,
) -> Result<GradCheck> {
    if estimate.len() > GRAD_CHECK_MAX_LEN {
        return Err(Error::InvalidConfig(format!(
            "gradient check limited to {GRAD_CHECK_MAX_LEN} samples, got {}",
            estimate.len()
        )));
    }
    if !(fd_step > 0.0 && fd_step.is_finite()) {
        return Err(Error::InvalidConfig("fd_step must be positive".into()));
    }
    let (center, regime) = evaluate_with_regime(kind, estimate, target, mixture, chunks, settings)?;
    let mut probe = estimate.to_vec();
    let mut out = GradCheck {
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
    };
    'coords: for t in 0..estimate.len() {
        let mut f = [0.0; 4];
        for (slot, k) in f.iter_mut().zip([1.0, -1.0, 2.0, -2.0]) {
            probe[t] = estimate[t] + k * fd_step;
            let (r, reg) = evaluate_with_regime(kind, &probe, target, mixture, chunks, settings)?;
            probe[t] = estimate[t];
            if reg != regime {
                out.skipped += 1;
                continue 'coords;
            }
            *slot = r.value;
        }
        let numeric = central_difference(f, fd_step);
        let analytic = center.grad_estimate[t];
        let denom = analytic.abs().max(numeric.abs()).max(1e-8);
        out.max_rel_error = out.max_rel_error.max((analytic - numeric).abs() / denom);
        out.checked += 1;
    }
    Ok(out)
}
