//! Two-stage SGD training of the toy extractor and the loss comparison
//! harness.
//!
//! Stage one trains with the plain SI-SDR loss; stage two fine-tunes with
//! the configured loss. The learning rate halves once validation SI-SDRi has
//! not improved for `lr_halving_patience` consecutive epochs. Per-example
//! gradients in a batch are computed in parallel and summed in batch order,
//! so results do not depend on thread scheduling.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{
    central_difference, evaluate_with_regime, GradCheck, LossKind, LossResult, LossSettings,
};
use crate::metrics::{distribution_report, sc_statistics, si_sdr_improvement};
use crate::signal::{make_chunks, ChunkIndex, ChunkingConfig};
use crate::toy::data::MixtureExample;
use crate::toy::model::{
    backward_from_cache, enrollment_stats, forward_cached, MaskOverride, ModelDims,
    ToyExtractorParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss_kind: LossKind,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub lr_halving_patience: usize,
    /// Epochs of plain-loss warm-up; `None` means half of `epochs`.
    pub warmup_epochs: Option<usize>,
    /// Global gradient-norm cap per step; `0` disables clipping.
    pub grad_clip: f64,
    pub dims: ModelDims,
    pub train_chunking: ChunkingConfig,
    pub eval_chunking: ChunkingConfig,
    pub settings: LossSettings,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss_kind: LossKind::Plain,
            learning_rate: 0.5,
            epochs: 30,
            batch: 8,
            seed: 0,
            lr_halving_patience: 2,
            warmup_epochs: None,
            grad_clip: 5.0,
            dims: ModelDims::default(),
            train_chunking: ChunkingConfig::training(),
            eval_chunking: ChunkingConfig::inference(),
            settings: LossSettings::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(
                "learning rate must be positive".into(),
            ));
        }
        if self.batch == 0 || self.lr_halving_patience == 0 {
            return Err(Error::InvalidConfig(
                "batch and lr halving patience must be positive".into(),
            ));
        }
        if self.grad_clip.is_nan() || self.grad_clip < 0.0 {
            return Err(Error::InvalidConfig(
                "grad_clip must be non-negative".into(),
            ));
        }
        if self.warmup_epochs.is_some_and(|w| w > self.epochs) {
            return Err(Error::InvalidConfig(
                "warm-up longer than the epoch budget".into(),
            ));
        }
        self.train_chunking.validate()?;
        self.eval_chunking.validate()?;
        self.settings.sisdr.validate()?;
        self.settings.activity.validate()?;
        self.settings.scale.validate()
    }

    pub fn warmup(&self) -> usize {
        self.warmup_epochs.unwrap_or(self.epochs / 2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Warmup,
    Finetune,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub stage: Stage,
    pub loss_kind: LossKind,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub val_sisdri: f64,
    pub val_rscr: f64,
}

/// A mixture with everything the training loop needs precomputed.
#[derive(Debug, Clone)]
pub struct PreparedExample {
    pub mixture: Vec<f64>,
    pub target: Vec<f64>,
    pub stats: Vec<f64>,
    pub train_chunks: Vec<ChunkIndex>,
    pub eval_chunks: Vec<ChunkIndex>,
}

impl PreparedExample {
    pub fn new(ex: &MixtureExample, cfg: &TrainConfig) -> Result<Self> {
        let sr = ex.mixture.sample_rate();
        let n = ex.mixture.len();
        if ex.target.len() != n {
            return Err(Error::LengthMismatch {
                left: ex.target.len(),
                right: n,
            });
        }
        Ok(Self {
            mixture: ex.mixture.samples().to_vec(),
            target: ex.target.samples().to_vec(),
            stats: enrollment_stats(ex.enrollment.samples(), &cfg.dims),
            train_chunks: make_chunks(n, &cfg.train_chunking, sr)?,
            eval_chunks: make_chunks(n, &cfg.eval_chunking, sr)?,
        })
    }
}

pub fn prepare(examples: &[MixtureExample], cfg: &TrainConfig) -> Result<Vec<PreparedExample>> {
    examples
        .par_iter()
        .map(|e| PreparedExample::new(e, cfg))
        .collect()
}

/// Loss and parameter gradient for one example. `Ok(None)` when the chosen
/// loss is undefined for this estimate (weighted loss without valid chunks).
pub fn backward(
    params: &ToyExtractorParams,
    example: &PreparedExample,
    kind: LossKind,
    settings: &LossSettings,
) -> Result<Option<(ToyExtractorParams, LossResult)>> {
    let cache = forward_cached(params, &example.mixture, &example.stats, MaskOverride::None)?;
    let loss = match settings.evaluate(
        kind,
        &cache.estimate,
        &example.target,
        &example.mixture,
        &example.train_chunks,
    ) {
        Err(Error::NoValidChunks) => return Ok(None),
        other => other?,
    };
    let grads = backward_from_cache(params, &example.mixture, &cache, &loss.grad_estimate)?;
    Ok(Some((grads, loss)))
}

/// Fourth-order central-difference check of the parameter gradient from
/// [`backward`] on `samples` randomly drawn coordinates. Coordinates whose
/// perturbation (up to `2 * fd_step`) flips a ReLU or changes a clamp,
/// branch, class or validity decision are redrawn (and counted as skipped),
/// up to `20 * samples` draws.
pub fn parameter_gradient_check(
    params: &ToyExtractorParams,
    example: &PreparedExample,
    kind: LossKind,
    settings: &LossSettings,
    fd_step: f64,
    samples: usize,
    seed: u64,
) -> Result<GradCheck> {
    if !(fd_step > 0.0 && fd_step.is_finite()) {
        return Err(Error::InvalidConfig("fd_step must be positive".into()));
    }
    let analytic = match backward(params, example, kind, settings)? {
        Some((g, _)) => g.flat(),
        None => return Err(Error::NoValidChunks),
    };
    let base = params.flat();
    let mut probe = params.clone();
    let mut eval = |v: &[f64]| -> Result<(f64, Vec<i64>)> {
        probe.set_flat(v)?;
        let cache = forward_cached(&probe, &example.mixture, &example.stats, MaskOverride::None)?;
        let (r, mut regime) = evaluate_with_regime(
            kind,
            &cache.estimate,
            &example.target,
            &example.mixture,
            &example.train_chunks,
            settings,
        )?;
        regime.extend(cache.relu_pattern().map(i64::from));
        Ok((r.value, regime))
    };
    let (_, regime) = eval(&base)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = GradCheck {
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
    };
    let mut v = base.clone();
    while out.checked < samples && out.checked + out.skipped < 20 * samples {
        let i = rng.gen_range(0..base.len());
        let mut f = [0.0; 4];
        let mut same_regime = true;
        for (slot, k) in f.iter_mut().zip([1.0, -1.0, 2.0, -2.0]) {
            v[i] = base[i] + k * fd_step;
            let (value, reg) = eval(&v)?;
            v[i] = base[i];
            same_regime &= reg == regime;
            *slot = value;
        }
        if !same_regime {
            out.skipped += 1;
            continue;
        }
        let numeric = central_difference(f, fd_step);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        out.max_rel_error = out.max_rel_error.max((analytic[i] - numeric).abs() / denom);
        out.checked += 1;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Validation {
    pub mean_sisdri: f64,
    /// Pooled over all validation chunks, percent.
    pub r_scr: f64,
}

pub fn validate(
    params: &ToyExtractorParams,
    examples: &[PreparedExample],
    settings: &LossSettings,
) -> Result<Validation> {
    if examples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let per: Vec<(f64, _)> = examples
        .par_iter()
        .map(|ex| {
            let est = forward_cached(params, &ex.mixture, &ex.stats, MaskOverride::None)?.estimate;
            let sisdri = si_sdr_improvement(&est, &ex.target, &ex.mixture, &settings.sisdr)?;
            let stats = sc_statistics(
                &est,
                &ex.target,
                &ex.mixture,
                &ex.eval_chunks,
                settings.reference,
                &settings.activity,
                &settings.sisdr,
                &settings.bins,
            )?;
            Ok((sisdri, stats))
        })
        .collect::<Result<_>>()?;
    let mean_sisdri = per.iter().map(|(s, _)| s).sum::<f64>() / per.len() as f64;
    let stats: Vec<_> = per.into_iter().map(|(_, s)| s).collect();
    Ok(Validation {
        mean_sisdri,
        r_scr: distribution_report(&stats)?.r_scr,
    })
}

/// Everything that evolves during training; cloning it forks a run.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub params: ToyExtractorParams,
    pub learning_rate: f64,
    pub epoch: usize,
    best_val: f64,
    stale_epochs: usize,
    rng: ChaCha8Rng,
}

impl TrainState {
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        Ok(Self::from_params(
            ToyExtractorParams::init(cfg.dims, cfg.seed)?,
            cfg,
        ))
    }

    pub fn from_params(params: ToyExtractorParams, cfg: &TrainConfig) -> Self {
        Self {
            params,
            learning_rate: cfg.learning_rate,
            epoch: 0,
            best_val: f64::NEG_INFINITY,
            stale_epochs: 0,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x7261_696e)),
        }
    }

    /// Runs `epochs` epochs with loss `kind`, reporting each finished epoch.
    #[allow(clippy::too_many_arguments)]
    pub fn run(
        &mut self,
        cfg: &TrainConfig,
        stage: Stage,
        kind: LossKind,
        epochs: usize,
        train: &[PreparedExample],
        validation: &[PreparedExample],
        mut on_epoch: impl FnMut(&EpochRecord),
    ) -> Result<Vec<EpochRecord>> {
        if train.is_empty() || validation.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut history = Vec::with_capacity(epochs);
        let mut order: Vec<usize> = (0..train.len()).collect();
        for _ in 0..epochs {
            self.epoch += 1;
            let lr = self.learning_rate;
            order.shuffle(&mut self.rng);
            let mut loss_sum = 0.0;
            let mut counted = 0usize;
            for batch in order.chunks(cfg.batch) {
                let results: Vec<_> = batch
                    .par_iter()
                    .map(|&i| backward(&self.params, &train[i], kind, &cfg.settings))
                    .collect::<Result<_>>()?;
                let mut grad = ToyExtractorParams::zeros(cfg.dims);
                let mut n = 0usize;
                for (g, loss) in results.into_iter().flatten() {
                    grad.add_scaled(&g, 1.0);
                    loss_sum += loss.value;
                    n += 1;
                }
                if n == 0 {
                    continue;
                }
                counted += n;
                grad.scale(1.0 / n as f64);
                let norm = grad.norm_sq().sqrt();
                if !norm.is_finite() {
                    return Err(Error::DivergenceDetected { epoch: self.epoch });
                }
                if cfg.grad_clip > 0.0 && norm > cfg.grad_clip {
                    grad.scale(cfg.grad_clip / norm);
                }
                self.params.add_scaled(&grad, -lr);
            }
            let train_loss = if counted > 0 {
                loss_sum / counted as f64
            } else {
                f64::NAN
            };
            if !train_loss.is_finite() || !self.params.is_finite() {
                return Err(Error::DivergenceDetected { epoch: self.epoch });
            }
            let val = validate(&self.params, validation, &cfg.settings)?;
            if !val.mean_sisdri.is_finite() {
                return Err(Error::DivergenceDetected { epoch: self.epoch });
            }
            if val.mean_sisdri > self.best_val {
                self.best_val = val.mean_sisdri;
                self.stale_epochs = 0;
            } else {
                self.stale_epochs += 1;
                if self.stale_epochs >= cfg.lr_halving_patience {
                    self.learning_rate *= 0.5;
                    self.stale_epochs = 0;
                }
            }
            let rec = EpochRecord {
                epoch: self.epoch,
                stage,
                loss_kind: kind,
                learning_rate: lr,
                train_loss,
                val_sisdri: val.mean_sisdri,
                val_rscr: val.r_scr,
            };
            on_epoch(&rec);
            history.push(rec);
        }
        Ok(history)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ToyExtractorParams,
    pub history: Vec<EpochRecord>,
}

/// Plain-loss warm-up followed by fine-tuning with `cfg.loss_kind`.
pub fn train(
    cfg: &TrainConfig,
    corpus: &[MixtureExample],
    validation: &[MixtureExample],
) -> Result<TrainOutcome> {
    train_with_observer(cfg, corpus, validation, |_| {})
}

pub fn train_with_observer(
    cfg: &TrainConfig,
    corpus: &[MixtureExample],
    validation: &[MixtureExample],
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if corpus.is_empty() || validation.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut state = TrainState::new(cfg)?;
    if cfg.epochs == 0 {
        return Ok(TrainOutcome {
            params: state.params,
            history: Vec::new(),
        });
    }
    let train_set = prepare(corpus, cfg)?;
    let val_set = prepare(validation, cfg)?;
    let warmup = cfg.warmup();
    let mut history = state.run(
        cfg,
        Stage::Warmup,
        LossKind::Plain,
        warmup,
        &train_set,
        &val_set,
        &mut on_epoch,
    )?;
    history.extend(state.run(
        cfg,
        Stage::Finetune,
        cfg.loss_kind,
        cfg.epochs - warmup,
        &train_set,
        &val_set,
        &mut on_epoch,
    )?);
    Ok(TrainOutcome {
        params: state.params,
        history,
    })
}

#[derive(Debug, Clone)]
pub struct CompareRow {
    pub loss_kind: LossKind,
    pub params: ToyExtractorParams,
    pub history: Vec<EpochRecord>,
    pub final_val_sisdri: f64,
    pub final_val_rscr: f64,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub warmup_params: ToyExtractorParams,
    pub warmup_history: Vec<EpochRecord>,
    pub rows: Vec<CompareRow>,
}

/// One shared plain-loss warm-up, then one fine-tune per loss kind from the
/// identical state (parameters, learning rate, shuffling stream).
pub fn compare_losses(
    cfg: &TrainConfig,
    corpus: &[MixtureExample],
    validation: &[MixtureExample],
    kinds: &[LossKind],
) -> Result<Comparison> {
    cfg.validate()?;
    let train_set = prepare(corpus, cfg)?;
    let val_set = prepare(validation, cfg)?;
    let mut state = TrainState::new(cfg)?;
    let warmup = cfg.warmup();
    let warmup_history = state.run(
        cfg,
        Stage::Warmup,
        LossKind::Plain,
        warmup,
        &train_set,
        &val_set,
        |_| {},
    )?;
    let initial = validate(&state.params, &val_set, &cfg.settings)?;
    let rows = kinds
        .iter()
        .map(|&kind| {
            let mut fork = state.clone();
            let history = fork.run(
                cfg,
                Stage::Finetune,
                kind,
                cfg.epochs - warmup,
                &train_set,
                &val_set,
                |_| {},
            )?;
            let (final_val_sisdri, final_val_rscr) = history
                .last()
                .map_or((initial.mean_sisdri, initial.r_scr), |r| {
                    (r.val_sisdri, r.val_rscr)
                });
            Ok(CompareRow {
                loss_kind: kind,
                params: fork.params,
                history,
                final_val_sisdri,
                final_val_rscr,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Comparison {
        warmup_params: state.params,
        warmup_history,
        rows,
    })
}

pub const HISTORY_COLUMNS: &str = "epoch,train_loss,val_sisdri,val_rscr";

/// One CSV row per epoch, six decimals.
pub fn history_csv_row(rec: &EpochRecord) -> String {
    format!(
        "{},{:.6},{:.6},{:.6}",
        rec.epoch, rec.train_loss, rec.val_sisdri, rec.val_rscr
    )
}
