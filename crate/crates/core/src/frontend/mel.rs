//! Log-mel filterbank features: Hann-windowed power spectrum, HTK mel filters
//! spanning 0 Hz to Nyquist, natural log with a floor.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::features::FeatureSequence;
use super::wav::{WaveForm, SAMPLE_RATE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MelConfig {
    pub win_ms: f64,
    pub hop_ms: f64,
    pub n_mels: usize,
    pub fft_size: usize,
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            win_ms: 25.0,
            hop_ms: 10.0,
            n_mels: 128,
            fft_size: 1024,
            log_floor: 1e-10,
        }
    }
}

impl MelConfig {
    pub fn win_samples(&self) -> usize {
        (self.win_ms * SAMPLE_RATE as f64 / 1000.0).round() as usize
    }

    pub fn hop_samples(&self) -> usize {
        (self.hop_ms * SAMPLE_RATE as f64 / 1000.0).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_mels == 0 {
            return Err(Error::Config("mel.n_mels must be at least 1".into()));
        }
        if self.win_samples() == 0 || self.hop_samples() == 0 {
            return Err(Error::Config("mel window and hop must be positive".into()));
        }
        if self.win_samples() > self.fft_size {
            return Err(Error::Config(format!(
                "mel.fft_size {} is shorter than the {}-sample window",
                self.fft_size,
                self.win_samples()
            )));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::Config("mel.log_floor must be positive".into()));
        }
        Ok(())
    }

    /// `1 + floor((len - win) / hop)` for inputs of at least one window.
    pub fn frame_count(&self, n_samples: usize) -> Option<usize> {
        let win = self.win_samples();
        (n_samples >= win).then(|| 1 + (n_samples - win) / self.hop_samples())
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Periodic Hann window of length `n`.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Center frequencies (Hz) of the `n_mels` filters.
pub fn mel_center_frequencies(n_mels: usize, sample_rate: f64) -> Vec<f64> {
    mel_edges(n_mels, sample_rate)[1..=n_mels].to_vec()
}

fn mel_edges(n_mels: usize, sample_rate: f64) -> Vec<f64> {
    let top = hz_to_mel(sample_rate / 2.0);
    (0..n_mels + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
        .collect()
}

/// Triangular filters, `n_mels` rows by `fft_size / 2 + 1` columns. Each filter peaks
/// at 1 on its center frequency and falls to 0 at the neighbouring centers.
pub fn mel_filterbank(n_mels: usize, fft_size: usize, sample_rate: f64) -> Vec<Vec<f64>> {
    let edges = mel_edges(n_mels, sample_rate);
    let n_bins = fft_size / 2 + 1;
    (0..n_mels)
        .map(|m| {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .map(|k| {
                    let f = k as f64 * sample_rate / fft_size as f64;
                    let up = (f - lo) / (mid - lo);
                    let down = (hi - f) / (hi - mid);
                    up.min(down).max(0.0)
                })
                .collect()
        })
        .collect()
}

/// Reusable feature extractor; holds the FFT plan, window and filterbank.
pub struct LogMel {
    cfg: MelConfig,
    window: Vec<f64>,
    filters: Vec<Vec<f64>>,
    fft: Arc<dyn Fft<f64>>,
}

impl LogMel {
    pub fn new(cfg: MelConfig) -> Result<Self> {
        cfg.validate()?;
        let window = hann_window(cfg.win_samples());
        let filters = mel_filterbank(cfg.n_mels, cfg.fft_size, SAMPLE_RATE as f64);
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
        Ok(Self {
            cfg,
            window,
            filters,
            fft,
        })
    }

    pub fn config(&self) -> &MelConfig {
        &self.cfg
    }

    pub fn filters(&self) -> &[Vec<f64>] {
        &self.filters
    }

    /// Magnitude-squared spectrum of one windowed frame (`fft_size / 2 + 1` bins).
    pub fn power_spectrum(&self, frame: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); self.cfg.fft_size];
        for (b, (&x, &w)) in buf.iter_mut().zip(frame.iter().zip(&self.window)) {
            b.re = x * w;
        }
        self.fft.process(&mut buf);
        buf[..self.cfg.fft_size / 2 + 1]
            .iter()
            .map(|c| c.norm_sqr())
            .collect()
    }

    pub fn compute(&self, wave: &WaveForm) -> Result<FeatureSequence> {
        let samples = wave.samples();
        let n_frames = self.cfg.frame_count(samples.len()).ok_or_else(|| {
            Error::Invalid(format!(
                "audio of {} samples is shorter than one {}-sample window",
                samples.len(),
                self.cfg.win_samples()
            ))
        })?;
        let (win, hop) = (self.cfg.win_samples(), self.cfg.hop_samples());
        let floor = self.cfg.log_floor;
        let mut out = Vec::with_capacity(n_frames * self.cfg.n_mels);
        for t in 0..n_frames {
            let power = self.power_spectrum(&samples[t * hop..t * hop + win]);
            out.extend(self.filters.iter().map(|filter| {
                let energy: f64 = filter.iter().zip(&power).map(|(w, p)| w * p).sum();
                energy.max(floor).ln() as f32
            }));
        }
        FeatureSequence::new(out, n_frames, self.cfg.n_mels)
    }
}

pub fn compute_logmel(wave: &WaveForm, cfg: &MelConfig) -> Result<FeatureSequence> {
    LogMel::new(cfg.clone())?.compute(wave)
}
