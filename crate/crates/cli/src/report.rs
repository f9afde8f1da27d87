//! `eval` and `distribution`: per-utterance and corpus reports from a manifest
//! of (estimate, target, mixture) WAV triples.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tse_sc::signal::make_chunks;
use tse_sc::wav::read_wav;
use tse_sc::{
    distribution_report, sc_statistics, si_sdr, si_sdr_improvement, Distribution, ScStatistics,
};

use crate::config::{Effective, Format};

#[derive(Debug, Clone, Deserialize)]
struct ManifestRecord {
    #[serde(default)]
    id: Option<String>,
    estimate: PathBuf,
    target: PathBuf,
    mixture: PathBuf,
}

#[derive(Debug, Clone)]
pub struct ManifestEntry {
    /// 1-based data row number, for error messages.
    pub row: usize,
    pub id: String,
    pub estimate: PathBuf,
    pub target: PathBuf,
    pub mixture: PathBuf,
}

/// CSV with a header naming `estimate,target,mixture` and optionally `id`.
/// Relative paths resolve against the manifest's directory; `#` lines are
/// comments.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening manifest {}", path.display()))?;
    let mut entries = Vec::new();
    for (i, record) in reader.deserialize::<ManifestRecord>().enumerate() {
        let row = i + 1;
        let rec = record.with_context(|| format!("manifest {} row {row}", path.display()))?;
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
        entries.push(ManifestEntry {
            row,
            id: rec
                .id
                .filter(|s| !s.is_empty())
                .unwrap_or_else(|| format!("row{row}")),
            estimate: resolve(rec.estimate),
            target: resolve(rec.target),
            mixture: resolve(rec.mixture),
        });
    }
    if entries.is_empty() {
        bail!("manifest {} has no rows", path.display());
    }
    Ok(entries)
}

#[derive(Debug, Clone)]
pub struct UtteranceReport {
    pub id: String,
    pub si_sdr: f64,
    pub si_sdri: f64,
    pub stats: ScStatistics,
}

fn evaluate_entry(entry: &ManifestEntry, cfg: &Effective) -> Result<UtteranceReport> {
    let load = |p: &Path| read_wav(p).with_context(|| format!("reading {}", p.display()));
    let est = load(&entry.estimate)?;
    let tgt = load(&entry.target)?;
    let mix = load(&entry.mixture)?;
    let sr = tgt.sample_rate();
    if est.sample_rate() != sr || mix.sample_rate() != sr {
        bail!(
            "sample rates differ (estimate {}, target {sr}, mixture {})",
            est.sample_rate(),
            mix.sample_rate()
        );
    }
    if est.len() != tgt.len() || mix.len() != tgt.len() {
        bail!(
            "lengths differ (estimate {}, target {}, mixture {})",
            est.len(),
            tgt.len(),
            mix.len()
        );
    }
    let settings = cfg.loss_settings()?;
    let chunks = make_chunks(tgt.len(), &cfg.eval_chunking(), sr)?;
    let (e, t, m) = (est.samples(), tgt.samples(), mix.samples());
    let stats = sc_statistics(
        e,
        t,
        m,
        &chunks,
        settings.reference,
        &settings.activity,
        &settings.sisdr,
        &settings.bins,
    )?;
    Ok(UtteranceReport {
        id: entry.id.clone(),
        si_sdr: si_sdr(e, t, &settings.sisdr)?,
        si_sdri: si_sdr_improvement(e, t, m, &settings.sisdr)?,
        stats,
    })
}

/// Evaluates every entry in parallel; results keep manifest order and the
/// first failing row (in manifest order) is reported.
pub fn evaluate_manifest(
    entries: &[ManifestEntry],
    cfg: &Effective,
) -> Result<Vec<UtteranceReport>> {
    let results: Vec<Result<UtteranceReport>> =
        entries.par_iter().map(|e| evaluate_entry(e, cfg)).collect();
    results
        .into_iter()
        .zip(entries)
        .map(|(r, e)| r.map_err(|err| anyhow!("manifest row {} ({}): {err:#}", e.row, e.id)))
        .collect()
}

/// Values are rounded to six decimals so CSV and JSON carry the same numbers.
fn r6(x: f64) -> f64 {
    format!("{x:.6}").parse().unwrap_or(x)
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub id: String,
    pub si_sdr: f64,
    pub si_sdri: f64,
    pub r_scr: f64,
    pub n_sc: u64,
    pub n_valid: u64,
    pub class_freq: [u64; 4],
    pub degenerate: bool,
}

impl ReportRow {
    fn from_report(r: &UtteranceReport) -> Self {
        Self {
            id: r.id.clone(),
            si_sdr: r6(r.si_sdr),
            si_sdri: r6(r.si_sdri),
            r_scr: r6(r.stats.r_scr),
            n_sc: r.stats.n_sc,
            n_valid: r.stats.n_valid,
            class_freq: r.stats.class_freq,
            degenerate: r.stats.degenerate,
        }
    }

    /// Means of the utterance scores, pooled chunk counts and ratio.
    fn summary(reports: &[UtteranceReport], dist: &Distribution) -> Self {
        let n = reports.len() as f64;
        Self {
            id: "ALL".into(),
            si_sdr: r6(reports.iter().map(|r| r.si_sdr).sum::<f64>() / n),
            si_sdri: r6(reports.iter().map(|r| r.si_sdri).sum::<f64>() / n),
            r_scr: r6(dist.r_scr),
            n_sc: dist.n_sc,
            n_valid: dist.n_valid,
            class_freq: dist.class_freq,
            degenerate: dist.n_valid == 0,
        }
    }

    fn csv_line(&self) -> String {
        let c = self.class_freq;
        format!(
            "{},{:.6},{:.6},{:.6},{},{},{},{},{},{},{}",
            self.id,
            self.si_sdr,
            self.si_sdri,
            self.r_scr,
            self.n_sc,
            self.n_valid,
            c[0],
            c[1],
            c[2],
            c[3],
            self.degenerate
        )
    }
}

pub const REPORT_COLUMNS: &str =
    "id,si_sdr,si_sdri,r_scr,n_sc,n_valid,class0,class1,class2,class3,degenerate";

pub fn render_eval(reports: &[UtteranceReport], cfg: &Effective, format: Format) -> Result<String> {
    let stats: Vec<ScStatistics> = reports.iter().map(|r| r.stats.clone()).collect();
    let dist = distribution_report(&stats)?;
    let rows: Vec<ReportRow> = reports.iter().map(ReportRow::from_report).collect();
    let summary = ReportRow::summary(reports, &dist);
    Ok(match format {
        Format::Csv => {
            let mut out = format!("{}\n{REPORT_COLUMNS}\n", cfg.header_line());
            for row in rows.iter().chain(std::iter::once(&summary)) {
                out.push_str(&row.csv_line());
                out.push('\n');
            }
            out
        }
        Format::Json => {
            let doc = serde_json::json!({ "config": cfg, "rows": rows, "summary": summary });
            serde_json::to_string_pretty(&doc)? + "\n"
        }
    })
}

#[derive(Debug, Clone, Serialize)]
struct ClassRow {
    class: usize,
    lower_db: Option<f64>,
    upper_db: Option<f64>,
    count: u64,
    sum_sisdri: f64,
    mean_sisdri: Option<f64>,
    sc_cluster: bool,
}

fn class_rows(dist: &Distribution, edges: [f64; 3]) -> Vec<ClassRow> {
    (0..4)
        .map(|j| {
            let count = dist.class_freq[j];
            ClassRow {
                class: j,
                lower_db: (j > 0).then(|| edges[j - 1]),
                upper_db: (j < 3).then(|| edges[j]),
                count,
                sum_sisdri: r6(dist.class_sum[j]),
                mean_sisdri: (count > 0).then(|| r6(dist.class_sum[j] / count as f64)),
                sc_cluster: j < 2,
            }
        })
        .collect()
}

pub const DISTRIBUTION_COLUMNS: &str =
    "class,lower_db,upper_db,count,sum_sisdri,mean_sisdri,sc_cluster";

pub fn render_distribution(
    reports: &[UtteranceReport],
    cfg: &Effective,
    format: Format,
) -> Result<String> {
    let stats: Vec<ScStatistics> = reports.iter().map(|r| r.stats.clone()).collect();
    let dist = distribution_report(&stats)?;
    let rows = class_rows(&dist, cfg.bins);
    Ok(match format {
        Format::Csv => {
            let mut out = format!(
                "{}\n# utterances={} degenerate={} n_sc={} n_valid={} r_scr={:.6}\n{DISTRIBUTION_COLUMNS}\n",
                cfg.header_line(),
                dist.utterances,
                dist.degenerate_utterances,
                dist.n_sc,
                dist.n_valid,
                dist.r_scr
            );
            let opt = |v: Option<f64>, missing: &str| {
                v.map_or(missing.to_string(), |x| format!("{x:.6}"))
            };
            for r in &rows {
                out.push_str(&format!(
                    "{},{},{},{},{:.6},{},{}\n",
                    r.class,
                    opt(r.lower_db, "-inf"),
                    opt(r.upper_db, "inf"),
                    r.count,
                    r.sum_sisdri,
                    opt(r.mean_sisdri, ""),
                    r.sc_cluster
                ));
            }
            out
        }
        Format::Json => {
            let doc = serde_json::json!({
                "config": cfg,
                "utterances": dist.utterances,
                "degenerate_utterances": dist.degenerate_utterances,
                "n_sc": dist.n_sc,
                "n_valid": dist.n_valid,
                "r_scr": r6(dist.r_scr),
                "sc_class_freq": dist.sc_class_freq,
                "classes": rows,
            });
            serde_json::to_string_pretty(&doc)? + "\n"
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_decimal_rounding() {
        assert_eq!(r6(1.23456789), 1.234568);
        assert_eq!(r6(-0.0000004), -0.0);
        assert_eq!(format!("{:.6}", r6(60.0)), "60.000000");
    }

    #[test]
    fn manifest_paths_resolve_relative_to_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        std::fs::write(
            &path,
            "# comment\nid,estimate,target,mixture\nu1,e.wav,t.wav,/abs/m.wav\n,e2.wav,t2.wav,m2.wav\n",
        )
        .unwrap();
        let entries = read_manifest(&path).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].id, "u1");
        assert_eq!(entries[0].estimate, dir.path().join("e.wav"));
        assert_eq!(entries[0].mixture, PathBuf::from("/abs/m.wav"));
        assert_eq!(entries[1].id, "row2");
    }

    #[test]
    fn missing_column_is_an_error_naming_the_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        std::fs::write(&path, "estimate,target,mixture\ne.wav,t.wav\n").unwrap();
        let err = read_manifest(&path).unwrap_err();
        assert!(format!("{err:#}").contains("row 1"), "{err:#}");
    }

    #[test]
    fn class_rows_carry_edges_and_means() {
        let stats = ScStatistics {
            chunk_sisdri: vec![],
            valid_chunks: vec![],
            n_sc: 1,
            n_valid: 3,
            r_scr: 100.0 / 3.0,
            class_freq: [1, 0, 2, 0],
            class_sum: [-8.0, 0.0, 6.0, 0.0],
            degenerate: false,
        };
        let dist = distribution_report(&[stats]).unwrap();
        let rows = class_rows(&dist, [-5.0, 0.0, 5.0]);
        assert_eq!(rows[0].lower_db, None);
        assert_eq!(rows[0].upper_db, Some(-5.0));
        assert_eq!(rows[2].mean_sisdri, Some(3.0));
        assert_eq!(rows[1].mean_sisdri, None);
    }
}
