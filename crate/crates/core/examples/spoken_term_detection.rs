//! Spoken term detection and keyword search over unsegmented utterances.
//!
//! cargo run --release --example spoken_term_detection
//!
//! Each utterance is cut into overlapping fixed windows (or, for reference, at
//! the true word boundaries); a query scores an utterance by its best-matching
//! window. Spoken queries are the test segments, written queries go through the
//! text encoder. Equal error rates are printed per window length.

use awe::config::RunConfig;
use awe::encoders::EncoderKind;
use awe::evaluation::{eval_kws, eval_std};
use awe::synth::gen_corpus;
use awe::training::{train, TrainOptions};

fn main() -> awe::Result<()> {
    let mut cfg = RunConfig::default();
    // Mean pooling over a window loses word-internal order; the recurrent
    // body keeps short windows from matching whole words.
    cfg.encoder.kind = EncoderKind::Recurrent;
    let data = gen_corpus(&cfg.synth)?.data();
    let out = train(&data.train, &data.lexicon, &cfg.train, &cfg.encoder, &TrainOptions::default())?;
    let train_records = data.train_records();
    let segs = cfg.eval.segmentations();

    let (std, _) = eval_std(&out.params, &cfg.encoder, &data.test, &train_records, &data.search, &segs)?;
    let words: Vec<&str> = data.test.iter().map(|s| s.record.word.as_str()).collect();
    let (kws, _) = eval_kws(&out.params, &cfg.encoder, &data.lexicon, words, &train_records, &data.search, &segs)?;

    for report in [&std, &kws] {
        for (task, by_vocab) in &report.eer {
            for (vocab, by_window) in by_vocab {
                let cells: Vec<String> = by_window.iter().map(|(w, e)| format!("{w}: {:.1}%", 100.0 * e)).collect();
                println!("{task} {vocab:<3}  {}", cells.join("  "));
            }
        }
    }
    Ok(())
}
