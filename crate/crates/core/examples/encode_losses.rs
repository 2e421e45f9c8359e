//! Encodes a small class-major batch and evaluates the joint objective.
//!
//! cargo run --release --example encode_losses
//!
//! N words with M spoken instances each go through the audio encoder, their
//! phoneme strings through the text encoder. The audio-text term pairs every
//! instance slice with the text rows; the audio-audio term contrasts each
//! instance with leave-one-out class centroids.

use awe::config::RunConfig;
use awe::encoders::{encode_audio, encode_text, init_params, log_temperature, logit_scale};
use awe::losses::{dwd_loss, total_loss_grad, DwdBatch, DwdOptions, LossWeights};
use awe::synth::gen_corpus;

fn main() -> awe::Result<()> {
    let cfg = RunConfig::default();
    let corpus = gen_corpus(&cfg.synth)?;
    let (n, m) = (4, 3);

    let mut feats = Vec::new();
    let mut phones = Vec::new();
    for class in &corpus.classes[..n] {
        phones.push(class.phonemes.clone());
        let instances = corpus.records.iter().zip(&corpus.features).filter(|(r, _)| r.word == class.word);
        feats.extend(instances.take(m).map(|(_, f)| f.clone()));
    }

    let params = init_params(&cfg.encoder, 0)?;
    println!("{} parameters in {} tensors", params.num_values(), params.len());
    let audio = encode_audio(&params, &cfg.encoder, &feats)?;
    let text = encode_text(&params, &cfg.encoder, &phones)?;
    println!("audio {} x {}, text {} x {}", audio.len(), audio.dim(), text.len(), text.dim());

    let batch = DwdBatch::from_embeddings(&audio, n, m)?;
    let tau = log_temperature(&params)?;
    println!("logit scale {:.3}", logit_scale(tau).0);
    let dwd = dwd_loss(&batch)?;
    println!("audio-audio: same-word {:.4} cross-class {:.4}", dwd.sm, dwd.cc);

    for (a1, a2) in [(1.0, 0.0), (0.0, 1.0), (0.1, 1.0)] {
        let w = LossWeights::new(a1, a2)?;
        let g = total_loss_grad(&text, &batch, tau, &w, &DwdOptions::default())?;
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        println!(
            "alpha ({a1}, {a2}): loss {:.4}  |dL/d text| {:.3e}  |dL/d audio| {:.3e}  dL/d tau {:+.3e}",
            g.loss.total,
            norm(&g.d_text),
            norm(&g.d_audio),
            g.d_tau
        );
    }
    Ok(())
}
