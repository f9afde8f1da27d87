//! Runs the loss comparison on the default synthetic benchmark and prints the
//! per-epoch history of each fine-tune.
//!
//! cargo run --release -p tse-sc --example compare_losses -- [seed] [epochs] [lr] [clip] [mixref]

use std::time::Instant;

use tse_sc::toy::{compare_losses, Corpus, CorpusConfig, TrainConfig};
use tse_sc::LossKind;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(Ok(0), |s| s.parse())?;
    let epochs: usize = args.next().map_or(Ok(30), |s| s.parse())?;
    let mut cfg = TrainConfig {
        seed,
        epochs,
        ..Default::default()
    };
    if let Some(lr) = args.next() {
        cfg.learning_rate = lr.parse()?;
    }
    if let Some(clip) = args.next() {
        cfg.grad_clip = clip.parse()?;
    }
    if let Some(r) = args.next() {
        if r == "mixref" {
            cfg.settings.reference = tse_sc::ChunkReference::MixtureAsReference;
        }
    }
    let corpus = Corpus::generate(&CorpusConfig::default(), seed)?;
    let t0 = Instant::now();
    let cmp = compare_losses(
        &cfg,
        &corpus.train,
        &corpus.validation,
        &[LossKind::Plain, LossKind::Scale, LossKind::Weight],
    )?;
    for r in &cmp.warmup_history {
        println!(
            "warmup {:>3} lr {:.4} loss {:>9.4} val_sisdri {:>7.3} val_rscr {:>6.2}",
            r.epoch, r.learning_rate, r.train_loss, r.val_sisdri, r.val_rscr
        );
    }
    for row in &cmp.rows {
        for r in &row.history {
            println!(
                "{:<6} {:>3} lr {:.4} loss {:>9.4} val_sisdri {:>7.3} val_rscr {:>6.2}",
                row.loss_kind.to_string(),
                r.epoch,
                r.learning_rate,
                r.train_loss,
                r.val_sisdri,
                r.val_rscr
            );
        }
    }
    for row in &cmp.rows {
        println!(
            "final {:<6} sisdri {:.3} rscr {:.2}",
            row.loss_kind.to_string(),
            row.final_val_sisdri,
            row.final_val_rscr
        );
    }
    println!("elapsed {:.1}s", t0.elapsed().as_secs_f64());
    Ok(())
}
