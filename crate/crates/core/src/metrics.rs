//! Scale-invariant SDR, SI-SDR improvement and chunkwise speaker-confusion
//! statistics.
//!
//! SI-SDR projects the estimate onto the reference, `a = <est, ref> / |ref|^2`,
//! and returns `10 log10(|a ref|^2 / |a ref - est|^2)` clamped to
//! `[-clamp_db, clamp_db]`. The value depends only on the angle between the
//! two vectors, so it is invariant to scaling either argument.
//!
//! A chunk is counted as speaker-confused (SC) when its chunkwise SI-SDRi is
//! negative. The ratio `r_scr = 100 * N_sc / N_valid` is taken over chunks on
//! which both the target and the estimate are active.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{is_active, ActivityConfig, ChunkIndex};

const DB_PER_NEPER_POWER: f64 = 10.0 / std::f64::consts::LN_10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiSdrConfig {
    /// Symmetric cap on returned dB values.
    pub clamp_db: f64,
    /// Minimum reference energy; below it the reference counts as silent.
    pub eps: f64,
}

impl Default for SiSdrConfig {
    fn default() -> Self {
        Self {
            clamp_db: 60.0,
            eps: 1e-10,
        }
    }
}

impl SiSdrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clamp_db.is_finite() && self.clamp_db >= 30.0) {
            return Err(Error::InvalidConfig(format!(
                "clamp_db must be >= 30, got {}",
                self.clamp_db
            )));
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "eps must be positive, got {}",
                self.eps
            )));
        }
        Ok(())
    }
}

/// Which side of the SI-SDR the mixture chunk sits on when forming the
/// chunkwise improvement.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChunkReference {
    /// `SI-SDR(est_k, target_k) - SI-SDR(est_k, mix_k)`: the mixture chunk is
    /// the reference the estimate is scored against. An estimate close to the
    /// mixture saturates the second term, so nearly every chunk of a weak
    /// extractor reads as confused.
    MixtureAsReference,
    /// `SI-SDR(est_k, target_k) - SI-SDR(mix_k, target_k)`: the usual
    /// improvement over the unprocessed mixture.
    #[default]
    MixtureAsEstimate,
}

/// Where an SI-SDR evaluation landed relative to the clamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) enum Saturation {
    Low,
    Interior,
    High,
}

/// SI-SDR value together with its derivative w.r.t. the estimate.
pub(crate) struct SiSdrEval {
    pub db: f64,
    pub saturation: Saturation,
    /// `d db / d estimate`; all zeros when saturated.
    pub grad: Option<Vec<f64>>,
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::EmptySignal);
    }
    Ok(())
}

pub(crate) fn si_sdr_eval(
    estimate: &[f64],
    target: &[f64],
    cfg: &SiSdrConfig,
    want_grad: bool,
) -> Result<SiSdrEval> {
    check_lengths(estimate, target)?;
    let target_energy: f64 = target.iter().map(|x| x * x).sum();
    if target_energy < cfg.eps {
        return Err(Error::ZeroTarget);
    }
    let dot: f64 = estimate.iter().zip(target).map(|(e, t)| e * t).sum();
    let alpha = dot / target_energy;
    let projected = alpha * alpha * target_energy;
    let residual: f64 = estimate
        .iter()
        .zip(target)
        .map(|(e, t)| {
            let r = alpha * t - e;
            r * r
        })
        .sum();

    let saturated = |saturation, db| SiSdrEval {
        db,
        saturation,
        grad: want_grad.then(|| vec![0.0; estimate.len()]),
    };
    if projected == 0.0 {
        return Ok(saturated(Saturation::Low, -cfg.clamp_db));
    }
    if residual == 0.0 {
        return Ok(saturated(Saturation::High, cfg.clamp_db));
    }
    let db = DB_PER_NEPER_POWER * (projected / residual).ln();
    if db >= cfg.clamp_db {
        return Ok(saturated(Saturation::High, cfg.clamp_db));
    }
    if db <= -cfg.clamp_db {
        return Ok(saturated(Saturation::Low, -cfg.clamp_db));
    }

    // d/de ln(P) = 2 t / dot, d/de ln(Q) = 2 (e - alpha t) / Q
    let grad = want_grad.then(|| {
        estimate
            .iter()
            .zip(target)
            .map(|(e, t)| DB_PER_NEPER_POWER * (2.0 * t / dot - 2.0 * (e - alpha * t) / residual))
            .collect()
    });
    Ok(SiSdrEval {
        db,
        saturation: Saturation::Interior,
        grad,
    })
}

/// Scale-invariant SDR of `estimate` against `target`, in dB.
pub fn si_sdr(estimate: &[f64], target: &[f64], cfg: &SiSdrConfig) -> Result<f64> {
    Ok(si_sdr_eval(estimate, target, cfg, false)?.db)
}

/// Utterance-level improvement `SI-SDR(est, target) - SI-SDR(mix, target)`.
pub fn si_sdr_improvement(
    estimate: &[f64],
    target: &[f64],
    mixture: &[f64],
    cfg: &SiSdrConfig,
) -> Result<f64> {
    check_lengths(estimate, mixture)?;
    Ok(si_sdr(estimate, target, cfg)? - si_sdr(mixture, target, cfg)?)
}

/// One chunk's SI-SDRi, optionally with its gradient w.r.t. the estimate
/// chunk. Returns `None` when the target (or, for the mixture-reference convention, the
/// mixture) chunk is silent.
pub(crate) struct ChunkEval {
    pub value: f64,
    pub saturation: [Saturation; 2],
    pub grad: Option<Vec<f64>>,
}

pub(crate) fn chunk_sisdri_eval(
    estimate: &[f64],
    target: &[f64],
    mixture: &[f64],
    reference: ChunkReference,
    cfg: &SiSdrConfig,
    want_grad: bool,
) -> Result<Option<ChunkEval>> {
    let gain = match si_sdr_eval(estimate, target, cfg, want_grad) {
        Err(Error::ZeroTarget) => return Ok(None),
        other => other?,
    };
    let base = match reference {
        ChunkReference::MixtureAsReference => si_sdr_eval(estimate, mixture, cfg, want_grad),
        ChunkReference::MixtureAsEstimate => {
            si_sdr_eval(mixture, target, cfg, false).map(|e| SiSdrEval {
                grad: want_grad.then(|| vec![0.0; estimate.len()]),
                ..e
            })
        }
    };
    let base = match base {
        Err(Error::ZeroTarget) => return Ok(None),
        other => other?,
    };
    let grad = match (gain.grad, base.grad) {
        (Some(g), Some(b)) => Some(g.iter().zip(&b).map(|(g, b)| g - b).collect()),
        _ => None,
    };
    Ok(Some(ChunkEval {
        value: gain.db - base.db,
        saturation: [gain.saturation, base.saturation],
        grad,
    }))
}

fn check_chunks(len: usize, chunks: &[ChunkIndex]) -> Result<()> {
    match chunks.iter().find(|c| c.start >= c.end || c.end > len) {
        Some(c) => Err(Error::InvalidConfig(format!(
            "chunk [{}, {}) out of bounds for {} samples",
            c.start, c.end, len
        ))),
        None => Ok(()),
    }
}

/// Per-chunk SI-SDRi, one value per chunk in order. Chunks with a silent
/// reference yield `NaN`; [`sc_statistics`] excludes them.
pub fn chunkwise_sisdri(
    estimate: &[f64],
    target: &[f64],
    mixture: &[f64],
    chunks: &[ChunkIndex],
    reference: ChunkReference,
    cfg: &SiSdrConfig,
) -> Result<Vec<f64>> {
    check_lengths(estimate, target)?;
    check_lengths(estimate, mixture)?;
    check_chunks(estimate.len(), chunks)?;
    chunks
        .iter()
        .map(|c| {
            let ev = chunk_sisdri_eval(
                c.slice(estimate),
                c.slice(target),
                c.slice(mixture),
                reference,
                cfg,
                false,
            )?;
            Ok(ev.map_or(f64::NAN, |e| e.value))
        })
        .collect()
}

/// Interior class boundaries in dB. Classes are `(-inf, e0]`, `(e0, e1]`,
/// `(e1, e2]`, `(e2, inf)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinEdges {
    edges: [f64; 3],
}

impl Default for BinEdges {
    fn default() -> Self {
        Self {
            edges: [-5.0, 0.0, 5.0],
        }
    }
}

impl BinEdges {
    pub fn new(edges: [f64; 3]) -> Result<Self> {
        if edges.iter().any(|e| !e.is_finite()) || !(edges[0] < edges[1] && edges[1] < edges[2]) {
            return Err(Error::InvalidConfig(format!(
                "bin edges must be finite and strictly increasing, got {edges:?}"
            )));
        }
        Ok(Self { edges })
    }

    pub fn edges(&self) -> [f64; 3] {
        self.edges
    }

    pub fn class_of(&self, value: f64) -> usize {
        self.edges.iter().take_while(|&&e| value > e).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScStatistics {
    /// SI-SDRi of each valid chunk, in chunk order.
    pub chunk_sisdri: Vec<f64>,
    /// Position of each valid chunk in the chunk list passed in.
    pub valid_chunks: Vec<usize>,
    pub n_sc: u64,
    pub n_valid: u64,
    /// Percent, in `[0, 100]`.
    pub r_scr: f64,
    pub class_freq: [u64; 4],
    pub class_sum: [f64; 4],
    /// Set when no chunk was valid; `r_scr` is then reported as 0.
    pub degenerate: bool,
}

impl ScStatistics {
    pub(crate) fn from_values(values: Vec<f64>, valid_chunks: Vec<usize>, bins: &BinEdges) -> Self {
        let mut class_freq = [0u64; 4];
        let mut class_sum = [0.0f64; 4];
        let mut n_sc = 0;
        for &v in &values {
            let c = bins.class_of(v);
            class_freq[c] += 1;
            class_sum[c] += v;
            if v < 0.0 {
                n_sc += 1;
            }
        }
        let n_valid = values.len() as u64;
        let degenerate = n_valid == 0;
        let r_scr = if degenerate {
            0.0
        } else {
            100.0 * n_sc as f64 / n_valid as f64
        };
        Self {
            chunk_sisdri: values,
            valid_chunks,
            n_sc,
            n_valid,
            r_scr,
            class_freq,
            class_sum,
            degenerate,
        }
    }
}

/// Chunks on which both the target and the estimate are active.
pub(crate) fn valid_chunk_mask(
    estimate: &[f64],
    target: &[f64],
    chunks: &[ChunkIndex],
    activity: &ActivityConfig,
) -> Result<Vec<bool>> {
    chunks
        .iter()
        .map(|&c| is_active(target, estimate, c, activity))
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn sc_statistics(
    estimate: &[f64],
    target: &[f64],
    mixture: &[f64],
    chunks: &[ChunkIndex],
    reference: ChunkReference,
    activity: &ActivityConfig,
    cfg: &SiSdrConfig,
    bins: &BinEdges,
) -> Result<ScStatistics> {
    let values = chunkwise_sisdri(estimate, target, mixture, chunks, reference, cfg)?;
    let active = valid_chunk_mask(estimate, target, chunks, activity)?;
    let (valid_chunks, values): (Vec<usize>, Vec<f64>) = values
        .into_iter()
        .enumerate()
        .filter(|&(k, v)| active[k] && v.is_finite())
        .unzip();
    Ok(ScStatistics::from_values(values, valid_chunks, bins))
}

/// Corpus-level aggregate of [`ScStatistics`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub utterances: usize,
    pub degenerate_utterances: usize,
    pub class_freq: [u64; 4],
    pub class_sum: [f64; 4],
    /// Counts of the two lowest classes (the SC clusters).
    pub sc_class_freq: [u64; 2],
    pub n_sc: u64,
    pub n_valid: u64,
    /// Pooled ratio `100 * sum(N_sc) / sum(N_valid)`.
    pub r_scr: f64,
}

pub fn distribution_report(stats: &[ScStatistics]) -> Result<Distribution> {
    if stats.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut d = Distribution {
        utterances: stats.len(),
        degenerate_utterances: 0,
        class_freq: [0; 4],
        class_sum: [0.0; 4],
        sc_class_freq: [0; 2],
        n_sc: 0,
        n_valid: 0,
        r_scr: 0.0,
    };
    for s in stats {
        for j in 0..4 {
            d.class_freq[j] += s.class_freq[j];
            d.class_sum[j] += s.class_sum[j];
        }
        d.n_sc += s.n_sc;
        d.n_valid += s.n_valid;
        d.degenerate_utterances += s.degenerate as usize;
    }
    d.sc_class_freq = [d.class_freq[0], d.class_freq[1]];
    if d.n_valid > 0 {
        d.r_scr = 100.0 * d.n_sc as f64 / d.n_valid as f64;
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::make_chunks_samples;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> SiSdrConfig {
        SiSdrConfig::default()
    }

    // Explicit projection / residual construction, kept apart from si_sdr_eval.
    fn oracle_ratio(est: &[f64], tgt: &[f64]) -> f64 {
        let mut dot = 0.0;
        let mut tt = 0.0;
        for i in 0..tgt.len() {
            dot += est[i] * tgt[i];
            tt += tgt[i] * tgt[i];
        }
        let s: Vec<f64> = tgt.iter().map(|t| dot / tt * t).collect();
        let e: Vec<f64> = s.iter().zip(est).map(|(s, x)| s - x).collect();
        s.iter().map(|v| v * v).sum::<f64>() / e.iter().map(|v| v * v).sum::<f64>()
    }

    fn randn(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn perfect_estimate_hits_clamp() {
        let x = vec![0.3, -0.2, 0.9, 0.1];
        assert_eq!(si_sdr(&x, &x, &cfg()).unwrap(), 60.0);
    }

    #[test]
    fn orthogonal_estimate_hits_negative_clamp() {
        assert_eq!(si_sdr(&[0.0, 1.0], &[1.0, 0.0], &cfg()).unwrap(), -60.0);
    }

    #[test]
    fn equal_signal_and_error_power_is_zero_db() {
        let v = si_sdr(&[1.0, 1.0], &[1.0, 0.0], &cfg()).unwrap();
        assert!(v.abs() < 1e-12, "{v}");
    }

    #[test]
    fn si_sdr_errors() {
        assert!(matches!(
            si_sdr(&[1.0, 2.0], &[1.0], &cfg()),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            si_sdr(&[1.0, 2.0], &[0.0, 0.0], &cfg()),
            Err(Error::ZeroTarget)
        ));
    }

    #[test]
    fn improvement_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = randn(&mut rng, 64);
        let i = randn(&mut rng, 64);
        let y: Vec<f64> = t.iter().zip(&i).map(|(a, b)| a + b).collect();
        assert_eq!(si_sdr_improvement(&y, &t, &y, &cfg()).unwrap(), 0.0);

        let e = randn(&mut rng, 64);
        let got = si_sdr_improvement(&e, &t, &y, &cfg()).unwrap();
        let want = 10.0 * oracle_ratio(&e, &t).log10() - 10.0 * oracle_ratio(&y, &t).log10();
        assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0));

        // mixture orthogonal to nothing special: perfect extraction with a
        // mixture scoring 0 dB against the target
        let t2 = vec![1.0, 0.0];
        let y2 = vec![1.0, 1.0];
        assert!((si_sdr_improvement(&t2, &t2, &y2, &cfg()).unwrap() - 60.0).abs() < 1e-12);
    }

    fn two_speaker_chunks() -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<ChunkIndex>) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t: Vec<f64> = (0..300)
            .map(|k| (k as f64 * 0.21).sin() + 0.1 * rng.gen_range(-1.0..1.0))
            .collect();
        let i: Vec<f64> = (0..300)
            .map(|k| (k as f64 * 0.73).cos() + 0.1 * rng.gen_range(-1.0..1.0))
            .collect();
        let y: Vec<f64> = t.iter().zip(&i).map(|(a, b)| a + b).collect();
        let chunks = make_chunks_samples(300, 100, 100).unwrap();
        (t, i, y, chunks)
    }

    #[test]
    fn perfect_chunks_have_non_negative_improvement() {
        let (t, _, y, chunks) = two_speaker_chunks();
        for reference in [
            ChunkReference::MixtureAsReference,
            ChunkReference::MixtureAsEstimate,
        ] {
            let v = chunkwise_sisdri(&t, &t, &y, &chunks, reference, &cfg()).unwrap();
            for (k, c) in chunks.iter().enumerate() {
                let expect = 60.0 - si_sdr(c.slice(&t), c.slice(&y), &cfg()).unwrap();
                assert!((v[k] - expect).abs() < 1e-9);
                assert!(v[k] >= 0.0);
            }
        }
    }

    #[test]
    fn estimate_equal_to_mixture() {
        let (t, _, y, chunks) = two_speaker_chunks();
        let conv = chunkwise_sisdri(
            &y,
            &t,
            &y,
            &chunks,
            ChunkReference::MixtureAsEstimate,
            &cfg(),
        )
        .unwrap();
        assert!(conv.iter().all(|&v| v == 0.0));
        // scored against the mixture itself the second term saturates
        let mixref = chunkwise_sisdri(
            &y,
            &t,
            &y,
            &chunks,
            ChunkReference::MixtureAsReference,
            &cfg(),
        )
        .unwrap();
        for (k, c) in chunks.iter().enumerate() {
            let expect = si_sdr(c.slice(&y), c.slice(&t), &cfg()).unwrap() - 60.0;
            assert!((mixref[k] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn swapped_chunk_is_the_only_negative_one() {
        let (t, i, y, chunks) = two_speaker_chunks();
        let mut est = t.clone();
        est[100..200].copy_from_slice(&i[100..200]);
        for reference in [
            ChunkReference::MixtureAsReference,
            ChunkReference::MixtureAsEstimate,
        ] {
            let v = chunkwise_sisdri(&est, &t, &y, &chunks, reference, &cfg()).unwrap();
            let signs: Vec<bool> = v.iter().map(|&x| x < 0.0).collect();
            assert_eq!(signs, vec![false, true, false], "{reference:?}: {v:?}");
        }
    }

    #[test]
    fn silent_target_chunk_is_nan_and_skipped() {
        let (mut t, _, y, chunks) = two_speaker_chunks();
        t[0..100].fill(0.0);
        let v = chunkwise_sisdri(
            &y,
            &t,
            &y,
            &chunks,
            ChunkReference::MixtureAsReference,
            &cfg(),
        )
        .unwrap();
        assert!(v[0].is_nan());
        let s = sc_statistics(
            &y,
            &t,
            &y,
            &chunks,
            ChunkReference::MixtureAsReference,
            &ActivityConfig { eta: -1000.0 },
            &cfg(),
            &BinEdges::default(),
        )
        .unwrap();
        assert_eq!(s.valid_chunks, vec![1, 2]);
    }

    #[test]
    fn binning_from_values() {
        let s = ScStatistics::from_values(
            vec![-7.0, -2.0, 1.0, 9.0],
            vec![0, 1, 2, 3],
            &BinEdges::default(),
        );
        assert_eq!(s.class_freq, [1, 1, 1, 1]);
        assert_eq!((s.n_sc, s.n_valid), (2, 4));
        assert_eq!(s.r_scr, 50.0);
        assert_eq!(s.class_sum, [-7.0, -2.0, 1.0, 9.0]);
    }

    #[test]
    fn bins_are_closed_on_the_right() {
        let b = BinEdges::default();
        assert_eq!(b.class_of(-5.0), 0);
        assert_eq!(b.class_of(-4.999), 1);
        assert_eq!(b.class_of(0.0), 1);
        assert_eq!(b.class_of(5.0), 2);
        assert_eq!(b.class_of(5.001), 3);
        assert_eq!(b.class_of(f64::NEG_INFINITY), 0);
        assert!(BinEdges::new([0.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn silent_pair_is_degenerate() {
        let z = vec![0.0; 300];
        let (t, _, y, chunks) = two_speaker_chunks();
        let s = sc_statistics(
            &z,
            &t,
            &y,
            &chunks,
            ChunkReference::default(),
            &ActivityConfig::default(),
            &cfg(),
            &BinEdges::default(),
        )
        .unwrap();
        assert!(s.degenerate);
        assert_eq!((s.n_valid, s.r_scr), (0, 0.0));
    }

    #[test]
    fn distribution_sums_classes() {
        let b = BinEdges::default();
        let a = ScStatistics::from_values(vec![-7.0, -2.0, 1.0, 9.0], vec![0, 1, 2, 3], &b);
        let c = ScStatistics::from_values(vec![-1.0, -3.0, 6.0, 7.0, 8.0], vec![0, 1, 2, 3, 4], &b);
        assert_eq!(c.class_freq, [0, 2, 0, 3]);
        let one = distribution_report(std::slice::from_ref(&a)).unwrap();
        assert_eq!(one.class_freq, a.class_freq);
        let d = distribution_report(&[a, c]).unwrap();
        assert_eq!(d.class_freq, [1, 3, 1, 4]);
        assert_eq!(d.sc_class_freq, [1, 3]);
        assert_eq!((d.n_sc, d.n_valid), (4, 9));
        assert!(matches!(distribution_report(&[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn distribution_matches_pooled_rebinning() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = BinEdges::default();
        let mut all = Vec::new();
        let stats: Vec<ScStatistics> = (0..10)
            .map(|_| {
                let n = rng.gen_range(0..20);
                let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-15.0..15.0)).collect();
                all.extend_from_slice(&v);
                ScStatistics::from_values(v, (0..n).collect(), &b)
            })
            .collect();
        let d = distribution_report(&stats).unwrap();
        let mut freq = [0u64; 4];
        for v in &all {
            let c = if *v <= -5.0 {
                0
            } else if *v <= 0.0 {
                1
            } else if *v <= 5.0 {
                2
            } else {
                3
            };
            freq[c] += 1;
        }
        assert_eq!(d.class_freq, freq);
        assert_eq!(d.n_valid, all.len() as u64);
    }

    #[test]
    fn whole_signal_chunk_matches_mixture_reference_utterance_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (e, t, i) = (
            randn(&mut rng, 50),
            randn(&mut rng, 50),
            randn(&mut rng, 50),
        );
        let y: Vec<f64> = t.iter().zip(&i).map(|(a, b)| a + b).collect();
        let chunk = [ChunkIndex { start: 0, end: 50 }];
        let v = chunkwise_sisdri(
            &e,
            &t,
            &y,
            &chunk,
            ChunkReference::MixtureAsReference,
            &cfg(),
        )
        .unwrap();
        let expect = si_sdr(&e, &t, &cfg()).unwrap() - si_sdr(&e, &y, &cfg()).unwrap();
        assert_eq!(v[0], expect);
        let v = chunkwise_sisdri(
            &e,
            &t,
            &y,
            &chunk,
            ChunkReference::MixtureAsEstimate,
            &cfg(),
        )
        .unwrap();
        assert_eq!(v[0], si_sdr_improvement(&e, &t, &y, &cfg()).unwrap());
    }

    proptest! {
        #[test]
        fn matches_direct_formula(seed in any::<u64>(), n in 8usize..=64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let e = randn(&mut rng, n);
            let t = randn(&mut rng, n);
            let want = oracle_ratio(&e, &t);
            let db = si_sdr(&e, &t, &cfg()).unwrap();
            prop_assume!(db.abs() < 60.0);
            let got = 10f64.powf(db / 10.0);
            prop_assert!((got - want).abs() <= 1e-9 * want);
        }

        #[test]
        fn invariant_to_scaling(seed in any::<u64>(), c in prop::sample::select(vec![1e-3, 0.5, 2.0, 1e3, -1.0])) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let e = randn(&mut rng, 32);
            let t = randn(&mut rng, 32);
            let base = si_sdr(&e, &t, &cfg()).unwrap();
            let ce: Vec<f64> = e.iter().map(|v| c * v).collect();
            let ct: Vec<f64> = t.iter().map(|v| c * v).collect();
            prop_assert!((si_sdr(&ce, &t, &cfg()).unwrap() - base).abs() < 1e-9);
            prop_assert!((si_sdr(&e, &ct, &cfg()).unwrap() - base).abs() < 1e-9);
        }

        #[test]
        fn always_within_clamp(e in proptest::collection::vec(-1.0f64..1.0, 1..40), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut t = randn(&mut rng, e.len());
            t[0] += 2.0;
            let v = si_sdr(&e, &t, &cfg()).unwrap();
            prop_assert!((-60.0..=60.0).contains(&v));
        }

        #[test]
        fn statistics_bookkeeping(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 400;
            let t = randn(&mut rng, n);
            let i = randn(&mut rng, n);
            let y: Vec<f64> = t.iter().zip(&i).map(|(a, b)| a + b).collect();
            let e: Vec<f64> = t.iter().zip(&i).map(|(a, b)| a + rng.gen_range(-1.0..1.0) * b).collect();
            let chunks = make_chunks_samples(n, 50, 25).unwrap();
            let s = sc_statistics(&e, &t, &y, &chunks, ChunkReference::default(), &ActivityConfig { eta: 10.0 }, &cfg(), &BinEdges::default()).unwrap();
            prop_assert_eq!(s.class_freq.iter().sum::<u64>(), s.n_valid);
            prop_assert_eq!(s.n_sc, s.class_freq[0] + s.class_freq[1]);
            prop_assert!(s.n_sc <= s.n_valid);
            prop_assert!((0.0..=100.0).contains(&s.r_scr));
            if s.n_valid > 0 {
                prop_assert_eq!(s.r_scr, 100.0 * s.n_sc as f64 / s.n_valid as f64);
            }
        }
    }
}
