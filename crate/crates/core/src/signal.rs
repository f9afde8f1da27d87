//! Waveforms, chunk segmentation and chunk activity detection.
//!
//! Chunk lengths and hops are configured in milliseconds and converted to
//! samples by rounding `ms * rate / 1000` to the nearest integer. Chunks are
//! laid out at starts `0, O, 2O, ...` until one reaches the end of the
//! signal; the last chunk is truncated at `T` rather than zero-padded, which
//! gives exactly `M = ceil((T - L) / O + 1)` chunks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Energy floor added before taking the log of a chunk's energy, so silent
/// chunks map to a finite value (`10 * log10(1e-12) = -120 dB`).
pub const ENERGY_FLOOR: f64 = 1e-12;

/// A mono signal with its sample rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidConfig("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::EmptySignal);
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChunkingMode {
    /// Overlapping chunks with the configured hop.
    Training,
    /// Non-overlapping chunks: the hop is ignored and equals the chunk length.
    Inference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChunkingConfig {
    pub chunk_len_ms: f64,
    pub hop_ms: f64,
    pub mode: ChunkingMode,
}

impl ChunkingConfig {
    /// 250 ms chunks with a 125 ms hop.
    pub fn training() -> Self {
        Self {
            chunk_len_ms: 250.0,
            hop_ms: 125.0,
            mode: ChunkingMode::Training,
        }
    }

    /// 250 ms non-overlapping chunks.
    pub fn inference() -> Self {
        Self {
            chunk_len_ms: 250.0,
            hop_ms: 250.0,
            mode: ChunkingMode::Inference,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.chunk_len_ms.is_finite() && self.chunk_len_ms > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "chunk length must be positive, got {} ms",
                self.chunk_len_ms
            )));
        }
        if self.mode == ChunkingMode::Training
            && !(self.hop_ms.is_finite() && self.hop_ms > 0.0 && self.hop_ms <= self.chunk_len_ms)
        {
            return Err(Error::InvalidHop(format!(
                "training hop must satisfy 0 < hop <= chunk length, got {} ms (chunk {} ms)",
                self.hop_ms, self.chunk_len_ms
            )));
        }
        Ok(())
    }

    /// Chunk length and effective hop in samples.
    pub fn to_samples(&self, sample_rate: u32) -> Result<(usize, usize)> {
        self.validate()?;
        let len = ms_to_samples(self.chunk_len_ms, sample_rate);
        let hop = match self.mode {
            ChunkingMode::Training => ms_to_samples(self.hop_ms, sample_rate),
            ChunkingMode::Inference => len,
        };
        if len == 0 {
            return Err(Error::InvalidConfig(format!(
                "chunk length {} ms rounds to zero samples at {} Hz",
                self.chunk_len_ms, sample_rate
            )));
        }
        if hop == 0 {
            return Err(Error::InvalidHop(format!(
                "hop {} ms rounds to zero samples at {} Hz",
                self.hop_ms, sample_rate
            )));
        }
        Ok((len, hop))
    }
}

fn ms_to_samples(ms: f64, sample_rate: u32) -> usize {
    (ms * sample_rate as f64 / 1000.0).round() as usize
}

/// Half-open sample range `[start, end)` of one chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChunkIndex {
    pub start: usize,
    pub end: usize,
}

impl ChunkIndex {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }

    pub fn slice<'a>(&self, samples: &'a [f64]) -> &'a [f64] {
        &samples[self.start..self.end]
    }
}

/// Segments `signal_len` samples into chunks of `chunk_len` samples spaced
/// `hop` samples apart.
pub fn make_chunks_samples(
    signal_len: usize,
    chunk_len: usize,
    hop: usize,
) -> Result<Vec<ChunkIndex>> {
    if signal_len == 0 {
        return Err(Error::EmptySignal);
    }
    if chunk_len == 0 {
        return Err(Error::InvalidConfig("chunk length must be positive".into()));
    }
    if hop == 0 || hop > chunk_len {
        return Err(Error::InvalidHop(format!(
            "hop must satisfy 0 < hop <= chunk length, got hop {hop} for chunk length {chunk_len}"
        )));
    }
    if chunk_len > signal_len {
        return Err(Error::ChunkLenExceedsSignal {
            chunk_len,
            signal_len,
        });
    }
    let count = (signal_len - chunk_len).div_ceil(hop) + 1;
    Ok((0..count)
        .map(|k| {
            let start = k * hop;
            ChunkIndex {
                start,
                end: (start + chunk_len).min(signal_len),
            }
        })
        .collect())
}

pub fn make_chunks(
    signal_len: usize,
    cfg: &ChunkingConfig,
    sample_rate: u32,
) -> Result<Vec<ChunkIndex>> {
    let (len, hop) = cfg.to_samples(sample_rate)?;
    make_chunks_samples(signal_len, len, hop)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivityConfig {
    /// Threshold on chunk energy in dB (see [`chunk_energy_db`]).
    pub eta: f64,
}

impl Default for ActivityConfig {
    fn default() -> Self {
        Self { eta: 15.0 }
    }
}

impl ActivityConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.eta.is_finite() {
            return Err(Error::InvalidConfig("eta must be finite".into()));
        }
        Ok(())
    }
}

/// `10 * log10(sum(x^2) + ENERGY_FLOOR)` over the chunk.
pub fn chunk_energy_db(samples: &[f64], idx: ChunkIndex) -> f64 {
    let energy: f64 = idx.slice(samples).iter().map(|s| s * s).sum();
    10.0 * (energy + ENERGY_FLOOR).log10()
}

/// A chunk is active when both signals exceed the energy threshold on it.
pub fn is_active(
    first: &[f64],
    second: &[f64],
    idx: ChunkIndex,
    cfg: &ActivityConfig,
) -> Result<bool> {
    if first.len() != second.len() {
        return Err(Error::LengthMismatch {
            left: first.len(),
            right: second.len(),
        });
    }
    if idx.end > first.len() || idx.start >= idx.end {
        return Err(Error::InvalidConfig(format!(
            "chunk [{}, {}) out of bounds for {} samples",
            idx.start,
            idx.end,
            first.len()
        )));
    }
    Ok(chunk_energy_db(first, idx) > cfg.eta && chunk_energy_db(second, idx) > cfg.eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn starts(chunks: &[ChunkIndex]) -> Vec<usize> {
        chunks.iter().map(|c| c.start).collect()
    }

    // Emits starts 0, O, 2O, ... and stops once a chunk reaches the end.
    fn naive_count(t: usize, l: usize, o: usize) -> usize {
        let mut n = 0;
        let mut start = 0;
        loop {
            n += 1;
            if start + l >= t {
                return n;
            }
            start += o;
        }
    }

    #[test]
    fn overlapping_chunks_of_1000_samples() {
        let chunks = make_chunks_samples(1000, 250, 125).unwrap();
        assert_eq!(chunks.len(), 7);
        assert_eq!(starts(&chunks), vec![0, 125, 250, 375, 500, 625, 750]);
        assert!(chunks.iter().all(|c| c.len() == 250));
    }

    #[test]
    fn signal_equal_to_one_chunk() {
        for hop in [1, 50, 125, 250] {
            let chunks = make_chunks_samples(250, 250, hop).unwrap();
            assert_eq!(chunks, vec![ChunkIndex { start: 0, end: 250 }]);
        }
    }

    #[test]
    fn inference_mode_ignores_hop() {
        let cfg = ChunkingConfig {
            chunk_len_ms: 250.0,
            hop_ms: 0.0,
            mode: ChunkingMode::Inference,
        };
        // 1 kHz makes 250 ms exactly 250 samples
        let chunks = make_chunks(1000, &cfg, 1000).unwrap();
        assert_eq!(starts(&chunks), vec![0, 250, 500, 750]);
    }

    #[test]
    fn ms_config_rounds_to_samples() {
        let (l, o) = ChunkingConfig::training().to_samples(8000).unwrap();
        assert_eq!((l, o), (2000, 1000));
        let (l, o) = ChunkingConfig::training().to_samples(16000).unwrap();
        assert_eq!((l, o), (4000, 2000));
        let (l, o) = ChunkingConfig::inference().to_samples(8000).unwrap();
        assert_eq!((l, o), (2000, 2000));
    }

    #[test]
    fn last_chunk_is_truncated() {
        let chunks = make_chunks_samples(1010, 250, 125).unwrap();
        assert_eq!(chunks.len(), 8);
        assert_eq!(
            chunks.last().unwrap(),
            &ChunkIndex {
                start: 875,
                end: 1010
            }
        );
    }

    #[test]
    fn chunking_errors() {
        assert!(matches!(
            make_chunks_samples(100, 250, 125),
            Err(Error::ChunkLenExceedsSignal { .. })
        ));
        assert!(matches!(
            make_chunks_samples(1000, 250, 0),
            Err(Error::InvalidHop(_))
        ));
        let cfg = ChunkingConfig {
            chunk_len_ms: 250.0,
            hop_ms: 0.0,
            mode: ChunkingMode::Training,
        };
        assert!(matches!(
            make_chunks(8000, &cfg, 8000),
            Err(Error::InvalidHop(_))
        ));
        let cfg = ChunkingConfig {
            hop_ms: -1.0,
            ..ChunkingConfig::training()
        };
        assert!(matches!(
            make_chunks(8000, &cfg, 8000),
            Err(Error::InvalidHop(_))
        ));
    }

    #[test]
    fn energy_of_silence_is_floor() {
        let x = vec![0.0; 250];
        let e = chunk_energy_db(&x, ChunkIndex { start: 0, end: 250 });
        assert_eq!(e, 10.0 * ENERGY_FLOOR.log10());
        assert_eq!(e, -120.0);
    }

    #[test]
    fn energy_of_unit_chunk() {
        let x = vec![1.0; 250];
        let e = chunk_energy_db(&x, ChunkIndex { start: 0, end: 250 });
        // 10*log10(250) computed offline
        assert!((e - 23.979_400_086_720_376).abs() < 1e-9);
    }

    #[test]
    fn scaling_by_ten_adds_twenty_db() {
        let x: Vec<f64> = (0..300).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = x.iter().map(|s| 10.0 * s).collect();
        let idx = ChunkIndex {
            start: 20,
            end: 270,
        };
        assert!((chunk_energy_db(&y, idx) - chunk_energy_db(&x, idx) - 20.0).abs() < 1e-9);
    }

    #[test]
    fn activity_cases() {
        let cfg = ActivityConfig::default();
        let idx = ChunkIndex { start: 0, end: 250 };
        let silent = vec![0.0; 250];
        let unit = vec![1.0; 250];
        let loud: Vec<f64> = vec![2.0; 250]; // ~30 dB
        assert!(!is_active(&silent, &silent, idx, &cfg).unwrap());
        assert!(!is_active(&loud, &silent, idx, &cfg).unwrap());
        assert!(is_active(&unit, &unit, idx, &cfg).unwrap());
        assert!(matches!(
            is_active(&unit, &unit[..100], idx, &cfg),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn waveform_rejects_bad_input() {
        assert!(matches!(
            Waveform::new(vec![], 8000),
            Err(Error::EmptySignal)
        ));
        assert!(matches!(
            Waveform::new(vec![f64::NAN], 8000),
            Err(Error::NonFinite)
        ));
        assert!(Waveform::new(vec![0.0], 0).is_err());
    }

    proptest! {
        #[test]
        fn chunk_count_matches_formula_and_oracle(t in 1usize..5000, l_frac in 0.0f64..1.0, o_frac in 0.0f64..1.0) {
            let l = 1 + ((t - 1) as f64 * l_frac) as usize;
            let o = 1 + ((l - 1) as f64 * o_frac) as usize;
            let chunks = make_chunks_samples(t, l, o).unwrap();
            let formula = ((t - l) as f64 / o as f64 + 1.0).ceil() as usize;
            prop_assert_eq!(chunks.len(), formula);
            prop_assert_eq!(chunks.len(), naive_count(t, l, o));
            // coverage, non-empty, constant spacing, only last truncated
            prop_assert_eq!(chunks[0].start, 0);
            prop_assert_eq!(chunks.last().unwrap().end, t);
            for w in chunks.windows(2) {
                prop_assert_eq!(w[1].start - w[0].start, o);
                prop_assert!(w[1].start <= w[0].end);
                prop_assert_eq!(w[0].len(), l);
            }
            prop_assert!(chunks.iter().all(|c| !c.is_empty()));
        }

        #[test]
        fn activity_is_symmetric(a in proptest::collection::vec(-1.0f64..1.0, 64), b in proptest::collection::vec(-1.0f64..1.0, 64), eta in -10.0f64..20.0) {
            let cfg = ActivityConfig { eta };
            let idx = ChunkIndex { start: 3, end: 60 };
            prop_assert_eq!(is_active(&a, &b, idx, &cfg).unwrap(), is_active(&b, &a, idx, &cfg).unwrap());
        }

        #[test]
        fn energy_log_scaling(x in proptest::collection::vec(-1.0f64..1.0, 32), c in 0.01f64..100.0) {
            prop_assume!(x.iter().map(|s| s * s).sum::<f64>() > 1e-3);
            let idx = ChunkIndex { start: 0, end: 32 };
            let y: Vec<f64> = x.iter().map(|s| c * s).collect();
            let diff = chunk_energy_db(&y, idx) - chunk_energy_db(&x, idx) - 20.0 * c.log10();
            prop_assert!(diff.abs() < 1e-6);
        }
    }
}
