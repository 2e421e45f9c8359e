//! Same-different word discrimination with and without the audio-audio term.
//!
//! cargo run --release --example word_discrimination
//!
//! Every pair of test segments is a trial scored by cosine similarity. Average
//! precision is reported for words seen in training (iv) and held out (oov),
//! and for the cross-view task where written words query spoken ones.

use awe::config::RunConfig;
use awe::experiment::train_and_eval_wd;
use awe::synth::gen_corpus;
use awe::training::{TrainConfig, TrainOptions};

fn main() -> awe::Result<()> {
    let cfg = RunConfig::default();
    let data = gen_corpus(&cfg.synth)?.data();
    for (name, a1, a2) in [("audio-text only", 1.0, 0.0), ("joint", 0.1, 1.0)] {
        let train = TrainConfig {
            alpha1: a1,
            alpha2: a2,
            ..cfg.train.clone()
        };
        let (_, report) = train_and_eval_wd(&data, &cfg.encoder, &train, &TrainOptions::default())?;
        println!("{name} (alpha1={a1}, alpha2={a2})");
        for (vocab, ap) in &report.ap {
            let cross = report.ap_cross.get(vocab).copied().unwrap_or(f64::NAN);
            let counts = &report.counts[&format!("wd/{vocab}")];
            println!(
                "  {vocab:<3}  AP {:>6.2}%  cross-view AP {:>6.2}%  ({} positive / {} negative pairs)",
                100.0 * ap,
                100.0 * cross,
                counts.positive,
                counts.negative
            );
        }
    }
    Ok(())
}
