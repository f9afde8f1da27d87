//! `train` and `compare` on the synthetic two-speaker corpus.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};
use tse_sc::toy::train::{history_csv_row, HISTORY_COLUMNS};
use tse_sc::toy::{compare_losses, train_with_observer, Corpus, EpochRecord};
use tse_sc::{Error, LossKind};

use crate::config::{Effective, Format};

/// Training stopped on a non-finite loss; maps to exit code 3.
#[derive(Debug)]
pub struct Diverged {
    pub epoch: usize,
    pub last_finite_epoch: usize,
}

impl std::fmt::Display for Diverged {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "training diverged at epoch {}; last finite epoch {}",
            self.epoch, self.last_finite_epoch
        )
    }
}

impl std::error::Error for Diverged {}

pub fn history_csv(cfg: &Effective, history: &[EpochRecord]) -> String {
    let mut out = format!("{}\n{HISTORY_COLUMNS}\n", cfg.header_line());
    for rec in history {
        out.push_str(&history_csv_row(rec));
        out.push('\n');
    }
    out
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn corpus(cfg: &Effective) -> Result<Corpus> {
    Ok(Corpus::generate(&cfg.corpus_config(), cfg.seed)?)
}

/// Writes `checkpoint.json` and `history.csv` into `out`. On divergence the
/// history up to the last finite epoch is still written.
pub fn run_train(cfg: &Effective, out: &Path) -> Result<()> {
    let train_cfg = cfg.train_config()?;
    let corpus = corpus(cfg)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut history = Vec::new();
    let result = train_with_observer(&train_cfg, &corpus.train, &corpus.validation, |r| {
        history.push(*r)
    });
    write(&out.join("history.csv"), &history_csv(cfg, &history))?;
    match result {
        Ok(outcome) => {
            write(&out.join("checkpoint.json"), &outcome.params.to_json()?)?;
            Ok(())
        }
        Err(Error::DivergenceDetected { epoch }) => Err(Diverged {
            epoch,
            last_finite_epoch: history.last().map_or(0, |r| r.epoch),
        }
        .into()),
        Err(e) => Err(e.into()),
    }
}

pub const COMPARE_COLUMNS: &str = "loss,warmup_sha256,final_val_sisdri,final_val_rscr";

/// Shared warm-up, then one fine-tune per loss. Writes `warmup.json`,
/// per-loss checkpoints and histories, and the comparison table.
pub fn run_compare(cfg: &Effective, out: &Path, format: Format) -> Result<()> {
    let train_cfg = cfg.train_config()?;
    let corpus = corpus(cfg)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let kinds = [LossKind::Plain, LossKind::Scale, LossKind::Weight];
    let cmp = match compare_losses(&train_cfg, &corpus.train, &corpus.validation, &kinds) {
        Err(Error::DivergenceDetected { epoch }) => {
            return Err(Diverged {
                epoch,
                last_finite_epoch: epoch.saturating_sub(1),
            }
            .into())
        }
        r => r?,
    };
    let warmup_json = cmp.warmup_params.to_json()?;
    let warmup_sha = sha256_hex(warmup_json.as_bytes());
    write(&out.join("warmup.json"), &warmup_json)?;
    let mut rows = Vec::new();
    for row in &cmp.rows {
        let mut history = cmp.warmup_history.clone();
        history.extend_from_slice(&row.history);
        write(
            &out.join(format!("history_{}.csv", row.loss_kind)),
            &history_csv(cfg, &history),
        )?;
        write(
            &out.join(format!("checkpoint_{}.json", row.loss_kind)),
            &row.params.to_json()?,
        )?;
        rows.push(serde_json::json!({
            "loss": row.loss_kind.to_string(),
            "warmup_sha256": warmup_sha,
            "final_val_sisdri": format!("{:.6}", row.final_val_sisdri).parse::<f64>()?,
            "final_val_rscr": format!("{:.6}", row.final_val_rscr).parse::<f64>()?,
        }));
    }
    match format {
        Format::Csv => {
            let mut table = format!("{}\n{COMPARE_COLUMNS}\n", cfg.header_line());
            for row in &cmp.rows {
                table.push_str(&format!(
                    "{},{warmup_sha},{:.6},{:.6}\n",
                    row.loss_kind, row.final_val_sisdri, row.final_val_rscr
                ));
            }
            write(&out.join("compare.csv"), &table)
        }
        Format::Json => {
            let doc = serde_json::json!({ "config": cfg, "rows": rows });
            write(
                &out.join("compare.json"),
                &(serde_json::to_string_pretty(&doc)? + "\n"),
            )
        }
    }
}
