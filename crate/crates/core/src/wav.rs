//! Mono WAV I/O. Reads 16-bit integer and 32-bit float PCM; writes 32-bit
//! float.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};
use crate::signal::Waveform;

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let reader = WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::UnsupportedWav(format!(
            "expected mono input, found {} channels",
            spec.channels
        )));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()?,
        (format, bits) => {
            return Err(Error::UnsupportedWav(format!(
                "{bits}-bit {format:?} samples (supported: 16-bit int, 32-bit float)"
            )))
        }
    };
    Waveform::new(samples, spec.sample_rate)
}

pub fn write_wav_f32(path: impl AsRef<Path>, wave: &Waveform) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate(),
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = WavWriter::create(path, spec)?;
    for &s in wave.samples() {
        writer.write_sample(s as f32)?;
    }
    writer.finalize()?;
    Ok(())
}
