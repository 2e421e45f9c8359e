use std::path::Path;

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;

/// Mono audio at 16 kHz with amplitudes in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct WaveForm {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl WaveForm {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate != SAMPLE_RATE {
            return Err(Error::Wav(format!(
                "sample rate {sample_rate} Hz unsupported, expected {SAMPLE_RATE}"
            )));
        }
        if samples.is_empty() {
            return Err(Error::EmptyAudio);
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
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

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Reads a 16-bit PCM mono WAV file. Samples are scaled by 1/32768.
pub fn read_wav(path: impl AsRef<Path>) -> Result<WaveForm> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Wav(other.to_string()),
    })?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Wav(format!(
            "expected mono audio, found {} channels",
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::Wav(format!(
            "unsupported encoding: {:?} {} bit, expected 16-bit PCM",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Wav(e.to_string()))?;
    WaveForm::new(samples, spec.sample_rate)
}

/// Writes 16-bit PCM mono. Amplitudes are clamped to the representable range.
pub fn write_wav(wave: &WaveForm, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let wav_err = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Wav(other.to_string()),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for &s in &wave.samples {
        let v = (s * 32768.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        writer.write_sample(v).map_err(wav_err)?;
    }
    writer.finalize().map_err(wav_err)
}
