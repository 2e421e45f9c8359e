//! Log-mel features of a synthetic rising tone.
//!
//! cargo run --release --example logmel [-- out.wav]
//!
//! Writes the tone as 16 kHz WAV, reads it back and prints the strongest mel
//! band every 100 ms. The band index climbs with the pitch.

use std::f64::consts::PI;

use awe::frontend::{compute_logmel, read_wav, write_wav, MelConfig, WaveForm, SAMPLE_RATE};

fn main() -> awe::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| {
        std::env::temp_dir().join("awe_logmel_tone.wav").display().to_string()
    });
    let sr = SAMPLE_RATE as f64;
    let (f0, f1, dur) = (200.0, 4000.0, 1.0);
    let n = (dur * sr) as usize;
    let samples: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            // Linear chirp: phase is the integral of the instantaneous frequency.
            0.5 * (2.0 * PI * (f0 * t + 0.5 * (f1 - f0) / dur * t * t)).sin()
        })
        .collect();
    write_wav(&WaveForm::new(samples, SAMPLE_RATE)?, &out)?;
    let wave = read_wav(&out)?;

    let cfg = MelConfig::default();
    let feats = compute_logmel(&wave, &cfg)?;
    println!(
        "{out}: {:.2} s, {} frames x {} mels (window {} samples, hop {})",
        wave.duration_s(),
        feats.n_frames(),
        feats.n_dims(),
        cfg.win_samples(),
        cfg.hop_samples()
    );
    for t in (0..feats.n_frames()).step_by(10) {
        let frame = feats.frame(t);
        let (band, level) = frame
            .iter()
            .enumerate()
            .fold((0, f32::MIN), |best, (k, &v)| if v > best.1 { (k, v) } else { best });
        println!("{:>5.2} s  band {band:>3}  log-energy {level:>7.2}", t as f64 * 0.01);
    }
    Ok(())
}
