//! Synthetic harmonic "speakers" and two-speaker mixtures.
//!
//! Each speaker is a harmonic source with its own fundamental, harmonic
//! envelope and syllable-like amplitude modulation. Every rendering draws
//! fresh phases, vibrato and modulation phase, so an enrollment utterance is
//! a different signal from the same speaker.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::signal::Waveform;

// Sources are rounded to multiples of 2^-32 so that mixture = target +
// interferer and mixture - target = interferer hold exactly in f64.
fn to_grid(v: f64) -> f64 {
    const SCALE: f64 = 4_294_967_296.0;
    (v * SCALE).round() / SCALE
}

/// Minimum spacing between speaker fundamentals within a panel.
pub const MIN_F0_SPACING_HZ: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpeaker {
    pub id: u32,
    pub fundamental_hz: f64,
    pub harmonic_weights: Vec<f64>,
    pub am_rate_hz: f64,
}

impl SyntheticSpeaker {
    pub fn new(
        id: u32,
        fundamental_hz: f64,
        harmonic_weights: Vec<f64>,
        am_rate_hz: f64,
    ) -> Result<Self> {
        if !(fundamental_hz > 0.0 && am_rate_hz > 0.0) {
            return Err(Error::InvalidConfig(
                "fundamental and modulation rate must be positive".into(),
            ));
        }
        if harmonic_weights.iter().any(|w| !w.is_finite() || *w < 0.0)
            || harmonic_weights.iter().all(|w| *w == 0.0)
        {
            return Err(Error::InvalidConfig(
                "harmonic weights must be non-negative and not all zero".into(),
            ));
        }
        Ok(Self {
            id,
            fundamental_hz,
            harmonic_weights,
            am_rate_hz,
        })
    }

    /// Renders `len` samples at unit RMS.
    pub fn render(&self, len: usize, sample_rate: u32, rng: &mut impl Rng) -> Vec<f64> {
        let sr = sample_rate as f64;
        let nyquist = 0.45 * sr;
        let phases: Vec<f64> = self
            .harmonic_weights
            .iter()
            .map(|_| rng.gen_range(0.0..TAU))
            .collect();
        let vib_rate = rng.gen_range(3.0..6.0);
        let vib_depth = rng.gen_range(0.005..0.02);
        let vib_phase = rng.gen_range(0.0..TAU);
        let am_rate = self.am_rate_hz * rng.gen_range(0.9..1.1);
        let am_phase = rng.gen_range(0.0..TAU);

        let mut out = Vec::with_capacity(len);
        let mut f0_phase = 0.0;
        for n in 0..len {
            let t = n as f64 / sr;
            let f0 =
                self.fundamental_hz * (1.0 + vib_depth * (TAU * vib_rate * t + vib_phase).sin());
            f0_phase += TAU * f0 / sr;
            let mut s = 0.0;
            for (k, (&w, &ph)) in self.harmonic_weights.iter().zip(&phases).enumerate() {
                let h = (k + 1) as f64;
                if h * f0 >= nyquist {
                    break;
                }
                s += w * (h * f0_phase + ph).sin();
            }
            let env = 0.5 + 0.5 * (TAU * am_rate * t + am_phase).sin();
            out.push(s * env * env);
        }
        let rms = (out.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
        if rms > 0.0 {
            out.iter_mut().for_each(|v| *v /= rms);
        }
        out
    }
}

/// Builds `count` speakers with fundamentals spaced at least
/// [`MIN_F0_SPACING_HZ`] apart.
pub fn speaker_panel(count: usize, seed: u64) -> Result<Vec<SyntheticSpeaker>> {
    if count < 2 {
        return Err(Error::InvalidConfig("need at least two speakers".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spacing = 35.0;
    let mut f0s: Vec<f64> = (0..count).map(|i| 90.0 + spacing * i as f64).collect();
    f0s.shuffle(&mut rng);
    let mut speakers = Vec::with_capacity(count);
    for (id, f0) in f0s.into_iter().enumerate() {
        let f0 = f0 + rng.gen_range(-2.0..2.0);
        let tilt: f64 = rng.gen_range(0.6..0.9);
        let weights: Vec<f64> = (0..40)
            .map(|k| tilt.powi(k) * rng.gen_range(0.3..1.0))
            .collect();
        let am = rng.gen_range(2.0..6.0);
        speakers.push(SyntheticSpeaker::new(id as u32, f0, weights, am)?);
    }
    Ok(speakers)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureExample {
    pub mixture: Waveform,
    pub target: Waveform,
    pub interferer: Waveform,
    pub enrollment: Waveform,
    pub target_id: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub sample_rate: u32,
    pub enrollment_s: f64,
    /// RMS of the rendered target.
    pub target_rms: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sample_rate: 8000,
            enrollment_s: 1.0,
            target_rms: 0.25,
        }
    }
}

impl SynthConfig {
    /// Mixes a rendering of `spk_a` (target) with `spk_b` at `snr_db`.
    pub fn gen_example(
        &self,
        spk_a: &SyntheticSpeaker,
        spk_b: &SyntheticSpeaker,
        duration_s: f64,
        snr_db: f64,
        seed: u64,
    ) -> Result<MixtureExample> {
        if spk_a.id == spk_b.id {
            return Err(Error::SameSpeaker(spk_a.id));
        }
        if duration_s.is_nan() || duration_s < 1.0 {
            return Err(Error::InvalidConfig(format!(
                "duration must be at least 1 s, got {duration_s}"
            )));
        }
        let sr = self.sample_rate;
        let len = (duration_s * sr as f64).round() as usize;
        let enroll_len = (self.enrollment_s * sr as f64).round().max(1.0) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let target: Vec<f64> = spk_a
            .render(len, sr, &mut rng)
            .into_iter()
            .map(|v| to_grid(v * self.target_rms))
            .collect();
        let raw_itf = spk_b.render(len, sr, &mut rng);
        let target_energy: f64 = target.iter().map(|v| v * v).sum();
        let itf_energy: f64 = raw_itf.iter().map(|v| v * v).sum();
        let gain = (target_energy / (itf_energy * 10f64.powf(snr_db / 10.0))).sqrt();
        let interferer: Vec<f64> = raw_itf.into_iter().map(|v| to_grid(v * gain)).collect();
        let mixture: Vec<f64> = target.iter().zip(&interferer).map(|(a, b)| a + b).collect();
        let enrollment: Vec<f64> = spk_a
            .render(enroll_len, sr, &mut rng)
            .into_iter()
            .map(|v| v * self.target_rms)
            .collect();

        Ok(MixtureExample {
            mixture: Waveform::new(mixture, sr)?,
            target: Waveform::new(target, sr)?,
            interferer: Waveform::new(interferer, sr)?,
            enrollment: Waveform::new(enrollment, sr)?,
            target_id: spk_a.id,
        })
    }
}

/// [`SynthConfig::gen_example`] with default synthesis settings (8 kHz).
pub fn gen_example(
    spk_a: &SyntheticSpeaker,
    spk_b: &SyntheticSpeaker,
    duration_s: f64,
    snr_db: f64,
    seed: u64,
) -> Result<MixtureExample> {
    SynthConfig::default().gen_example(spk_a, spk_b, duration_s, snr_db, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub n_train: usize,
    pub n_validation: usize,
    pub n_speakers: usize,
    pub duration_s: f64,
    /// Mixing SNRs are drawn uniformly from `[-snr_spread_db, snr_spread_db]`.
    pub snr_spread_db: f64,
    pub synth: SynthConfig,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_train: 200,
            n_validation: 50,
            n_speakers: 8,
            duration_s: 2.0,
            snr_spread_db: 3.0,
            synth: SynthConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub speakers: Vec<SyntheticSpeaker>,
    pub train: Vec<MixtureExample>,
    pub validation: Vec<MixtureExample>,
}

impl Corpus {
    pub fn generate(cfg: &CorpusConfig, seed: u64) -> Result<Self> {
        let speakers = speaker_panel(cfg.n_speakers, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c0de);
        let draw = |rng: &mut ChaCha8Rng| -> Result<MixtureExample> {
            let a = rng.gen_range(0..speakers.len());
            let mut b = rng.gen_range(0..speakers.len() - 1);
            if b >= a {
                b += 1;
            }
            let snr = if cfg.snr_spread_db > 0.0 {
                rng.gen_range(-cfg.snr_spread_db..=cfg.snr_spread_db)
            } else {
                0.0
            };
            cfg.synth
                .gen_example(&speakers[a], &speakers[b], cfg.duration_s, snr, rng.gen())
        };
        let train = (0..cfg.n_train)
            .map(|_| draw(&mut rng))
            .collect::<Result<_>>()?;
        let validation = (0..cfg.n_validation)
            .map(|_| draw(&mut rng))
            .collect::<Result<_>>()?;
        Ok(Self {
            speakers,
            train,
            validation,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair() -> (SyntheticSpeaker, SyntheticSpeaker) {
        let p = speaker_panel(4, 1).unwrap();
        (p[0].clone(), p[1].clone())
    }

    #[test]
    fn deterministic_in_seed() {
        let (a, b) = pair();
        let x = gen_example(&a, &b, 1.5, 2.0, 42).unwrap();
        let y = gen_example(&a, &b, 1.5, 2.0, 42).unwrap();
        assert_eq!(x, y);
        let z = gen_example(&a, &b, 1.5, 2.0, 43).unwrap();
        assert_ne!(x.target, z.target);
    }

    #[test]
    fn zero_db_snr_balances_energy() {
        let (a, b) = pair();
        let x = gen_example(&a, &b, 2.0, 0.0, 7).unwrap();
        let ratio = x.target.energy() / x.interferer.energy();
        assert!((ratio - 1.0).abs() < 1e-6, "{ratio}");
        let x = gen_example(&a, &b, 2.0, 6.0, 7).unwrap();
        let ratio_db = 10.0 * (x.target.energy() / x.interferer.energy()).log10();
        assert!((ratio_db - 6.0).abs() < 1e-9);
    }

    #[test]
    fn mixture_is_exact_sum() {
        let (a, b) = pair();
        let x = gen_example(&a, &b, 1.0, -3.0, 9).unwrap();
        for ((m, t), i) in x
            .mixture
            .samples()
            .iter()
            .zip(x.target.samples())
            .zip(x.interferer.samples())
        {
            assert_eq!(m - t, *i);
        }
        assert_eq!(x.target_id, a.id);
        assert_eq!(x.mixture.len(), 8000);
        assert_eq!(x.enrollment.len(), 8000);
        assert_ne!(&x.enrollment.samples()[..100], &x.target.samples()[..100]);
    }

    #[test]
    fn rejects_same_speaker_and_short_duration() {
        let (a, b) = pair();
        assert!(matches!(
            gen_example(&a, &a, 2.0, 0.0, 1),
            Err(Error::SameSpeaker(_))
        ));
        assert!(gen_example(&a, &b, 0.5, 0.0, 1).is_err());
    }

    #[test]
    fn panel_fundamentals_are_spaced() {
        let p = speaker_panel(8, 3).unwrap();
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                assert!((p[i].fundamental_hz - p[j].fundamental_hz).abs() >= MIN_F0_SPACING_HZ);
            }
        }
    }

    #[test]
    fn speaker_validation() {
        assert!(SyntheticSpeaker::new(0, 100.0, vec![0.0, 0.0], 3.0).is_err());
        assert!(SyntheticSpeaker::new(0, 100.0, vec![1.0, -0.5], 3.0).is_err());
        assert!(SyntheticSpeaker::new(0, 0.0, vec![1.0], 3.0).is_err());
    }

    #[test]
    fn corpus_is_deterministic() {
        let cfg = CorpusConfig {
            n_train: 3,
            n_validation: 2,
            ..Default::default()
        };
        let a = Corpus::generate(&cfg, 5).unwrap();
        let b = Corpus::generate(&cfg, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train.len(), 3);
        let back = Corpus::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(back, a);
    }
}
