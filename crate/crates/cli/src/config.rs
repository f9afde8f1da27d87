//! Flag / config-file / default resolution. Flags win over the config file,
//! which wins over built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use tse_sc::signal::{ChunkingConfig, ChunkingMode};
use tse_sc::toy::{CorpusConfig, TrainConfig};
use tse_sc::{
    ActivityConfig, BinEdges, ChunkReference, LossKind, LossSettings, ScaleLossConfig, SiSdrConfig,
    WeightLossConfig, WeightMode,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalHop {
    /// Use the configured hop (overlapping chunks).
    Overlap,
    /// Non-overlapping chunks.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChunkRef {
    /// SI-SDR(est, target) - SI-SDR(mix, target) per chunk.
    MixtureEst,
    /// SI-SDR(est, target) - SI-SDR(est, mix) per chunk.
    MixtureRef,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossArg {
    Plain,
    Scale,
    Weight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightModeArg {
    Sum,
    Count,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

fn parse_list<const N: usize>(s: &str) -> std::result::Result<[f64; N], String> {
    let values: Vec<f64> = s
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("'{v}': {e}")))
        .collect::<std::result::Result<_, _>>()?;
    values
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected {N} comma-separated values, got {}", v.len()))
}

fn parse_weights(s: &str) -> std::result::Result<[f64; 4], String> {
    parse_list::<4>(s)
}

fn parse_bins(s: &str) -> std::result::Result<[f64; 3], String> {
    parse_list::<3>(s)
}

/// Every tunable, all optional, as accepted from the command line.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON config file; its keys use the long flag names with underscores.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Chunk length L in milliseconds [default: 250].
    #[arg(long, global = true)]
    pub chunk_ms: Option<f64>,
    /// Training hop O in milliseconds [default: 125].
    #[arg(long, global = true)]
    pub hop_ms: Option<f64>,
    /// Chunking used for reporting [default: none].
    #[arg(long, global = true, value_enum)]
    pub eval_hop: Option<EvalHop>,
    /// Chunk activity threshold in dB of chunk energy [default: 15].
    #[arg(long, global = true)]
    pub eta: Option<f64>,
    /// SI-SDR clamp in dB [default: 60].
    #[arg(long, global = true)]
    pub clamp_db: Option<f64>,
    /// Chunkwise SI-SDRi convention [default: mixture-est].
    #[arg(long, global = true, value_enum)]
    pub chunk_ref: Option<ChunkRef>,
    /// Interior class edges in dB [default: -5,0,5].
    #[arg(long, global = true, value_parser = parse_bins, allow_hyphen_values = true)]
    pub bins: Option<[f64; 3]>,
    /// Loss used for fine-tuning [default: plain].
    #[arg(long, global = true, value_enum)]
    pub loss: Option<LossArg>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub gamma1: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub gamma2: Option<f64>,
    /// Class weights w0,w1,w2,w3 [default: 5,5,1,1].
    #[arg(long, global = true, value_parser = parse_weights)]
    pub weights: Option<[f64; 4]>,
    /// Per-class term of the weighted loss [default: sum].
    #[arg(long, global = true, value_enum)]
    pub weight_mode: Option<WeightModeArg>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Total epochs, warm-up included [default: 30].
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    /// Plain-loss warm-up epochs [default: half of --epochs].
    #[arg(long, global = true)]
    pub warmup_epochs: Option<usize>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true)]
    pub batch: Option<usize>,
    /// Epochs without validation improvement before the LR halves [default: 2].
    #[arg(long, global = true)]
    pub patience: Option<usize>,
    /// Global gradient-norm cap, 0 disables [default: 5].
    #[arg(long, global = true)]
    pub grad_clip: Option<f64>,
    /// Synthetic training mixtures [default: 200].
    #[arg(long, global = true)]
    pub n_train: Option<usize>,
    /// Synthetic validation mixtures [default: 50].
    #[arg(long, global = true)]
    pub n_val: Option<usize>,
    /// Synthetic mixture duration in seconds [default: 2].
    #[arg(long, global = true)]
    pub duration_s: Option<f64>,
    /// Report format; inferred from the --out extension when omitted.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

/// Same keys as [`Overrides`], read from a JSON file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    chunk_ms: Option<f64>,
    hop_ms: Option<f64>,
    eval_hop: Option<EvalHop>,
    eta: Option<f64>,
    clamp_db: Option<f64>,
    chunk_ref: Option<ChunkRef>,
    bins: Option<[f64; 3]>,
    loss: Option<LossArg>,
    gamma1: Option<f64>,
    gamma2: Option<f64>,
    weights: Option<[f64; 4]>,
    weight_mode: Option<WeightModeArg>,
    seed: Option<u64>,
    epochs: Option<usize>,
    warmup_epochs: Option<usize>,
    lr: Option<f64>,
    batch: Option<usize>,
    patience: Option<usize>,
    grad_clip: Option<f64>,
    n_train: Option<usize>,
    n_val: Option<usize>,
    duration_s: Option<f64>,
}

/// The resolved configuration, echoed into every output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Effective {
    pub chunk_ms: f64,
    pub hop_ms: f64,
    pub eval_hop: EvalHop,
    pub eta: f64,
    pub clamp_db: f64,
    pub chunk_ref: ChunkRef,
    pub bins: [f64; 3],
    pub loss: LossArg,
    pub gamma1: f64,
    pub gamma2: f64,
    pub weights: [f64; 4],
    pub weight_mode: WeightModeArg,
    pub seed: u64,
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub patience: usize,
    pub grad_clip: f64,
    pub n_train: usize,
    pub n_val: usize,
    pub duration_s: f64,
}

pub const DEFAULT_LR: f64 = 0.5;
pub const DEFAULT_GRAD_CLIP: f64 = 5.0;

impl Effective {
    pub fn resolve(o: &Overrides) -> Result<Self> {
        let f = match &o.config {
            Some(path) => read_file_config(path)?,
            None => FileConfig::default(),
        };
        let epochs = o.epochs.or(f.epochs).unwrap_or(30);
        let eff = Self {
            chunk_ms: o.chunk_ms.or(f.chunk_ms).unwrap_or(250.0),
            hop_ms: o.hop_ms.or(f.hop_ms).unwrap_or(125.0),
            eval_hop: o.eval_hop.or(f.eval_hop).unwrap_or(EvalHop::None),
            eta: o.eta.or(f.eta).unwrap_or(15.0),
            clamp_db: o.clamp_db.or(f.clamp_db).unwrap_or(60.0),
            chunk_ref: o.chunk_ref.or(f.chunk_ref).unwrap_or(ChunkRef::MixtureEst),
            bins: o.bins.or(f.bins).unwrap_or([-5.0, 0.0, 5.0]),
            loss: o.loss.or(f.loss).unwrap_or(LossArg::Plain),
            gamma1: o.gamma1.or(f.gamma1).unwrap_or(1.0),
            gamma2: o.gamma2.or(f.gamma2).unwrap_or(1.0),
            weights: o.weights.or(f.weights).unwrap_or([5.0, 5.0, 1.0, 1.0]),
            weight_mode: o
                .weight_mode
                .or(f.weight_mode)
                .unwrap_or(WeightModeArg::Sum),
            seed: o.seed.or(f.seed).unwrap_or(0),
            epochs,
            warmup_epochs: o.warmup_epochs.or(f.warmup_epochs).unwrap_or(epochs / 2),
            lr: o.lr.or(f.lr).unwrap_or(DEFAULT_LR),
            batch: o.batch.or(f.batch).unwrap_or(8),
            patience: o.patience.or(f.patience).unwrap_or(2),
            grad_clip: o.grad_clip.or(f.grad_clip).unwrap_or(DEFAULT_GRAD_CLIP),
            n_train: o.n_train.or(f.n_train).unwrap_or(200),
            n_val: o.n_val.or(f.n_val).unwrap_or(50),
            duration_s: o.duration_s.or(f.duration_s).unwrap_or(2.0),
        };
        // surface config errors before any work starts
        eff.loss_settings()?;
        eff.train_config()?;
        Ok(eff)
    }

    pub fn eval_chunking(&self) -> ChunkingConfig {
        ChunkingConfig {
            chunk_len_ms: self.chunk_ms,
            hop_ms: self.hop_ms,
            mode: match self.eval_hop {
                EvalHop::Overlap => ChunkingMode::Training,
                EvalHop::None => ChunkingMode::Inference,
            },
        }
    }

    pub fn train_chunking(&self) -> ChunkingConfig {
        ChunkingConfig {
            chunk_len_ms: self.chunk_ms,
            hop_ms: self.hop_ms,
            mode: ChunkingMode::Training,
        }
    }

    pub fn loss_settings(&self) -> Result<LossSettings> {
        let sisdr = SiSdrConfig {
            clamp_db: self.clamp_db,
            ..Default::default()
        };
        sisdr.validate()?;
        let activity = ActivityConfig { eta: self.eta };
        activity.validate()?;
        let mode = match self.weight_mode {
            WeightModeArg::Sum => WeightMode::SumPerClass,
            WeightModeArg::Count => WeightMode::CountPerClass,
        };
        let scale = ScaleLossConfig {
            gamma1: self.gamma1,
            gamma2: self.gamma2,
        };
        scale.validate()?;
        Ok(LossSettings {
            sisdr,
            activity,
            reference: match self.chunk_ref {
                ChunkRef::MixtureEst => ChunkReference::MixtureAsEstimate,
                ChunkRef::MixtureRef => ChunkReference::MixtureAsReference,
            },
            bins: BinEdges::new(self.bins)?,
            scale,
            weight: WeightLossConfig::new(self.weights, mode)?,
        })
    }

    pub fn loss_kind(&self) -> LossKind {
        match self.loss {
            LossArg::Plain => LossKind::Plain,
            LossArg::Scale => LossKind::Scale,
            LossArg::Weight => LossKind::Weight,
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        self.eval_chunking().validate()?;
        let cfg = TrainConfig {
            loss_kind: self.loss_kind(),
            learning_rate: self.lr,
            epochs: self.epochs,
            batch: self.batch,
            seed: self.seed,
            lr_halving_patience: self.patience,
            warmup_epochs: Some(self.warmup_epochs),
            grad_clip: self.grad_clip,
            train_chunking: self.train_chunking(),
            eval_chunking: self.eval_chunking(),
            settings: self.loss_settings()?,
            ..Default::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn corpus_config(&self) -> CorpusConfig {
        CorpusConfig {
            n_train: self.n_train,
            n_validation: self.n_val,
            duration_s: self.duration_s,
            ..Default::default()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Single comment line carrying the effective configuration.
    pub fn header_line(&self) -> String {
        format!("# config: {}", self.to_json())
    }
}

fn read_file_config(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config file {}", path.display()))?;
    let cfg: FileConfig = serde_json::from_str(&text)
        .with_context(|| format!("parsing config file {}", path.display()))?;
    if cfg.epochs.is_some_and(|e| e > 100_000) {
        bail!("config file {}: epochs out of range", path.display());
    }
    Ok(cfg)
}

pub fn output_format(explicit: Option<Format>, out: Option<&Path>) -> Format {
    explicit.unwrap_or_else(
        || match out.and_then(|p| p.extension()).and_then(|e| e.to_str()) {
            Some("json") => Format::Json,
            _ => Format::Csv,
        },
    )
}
