//! Generates the synthetic word corpus and reports how separable its classes are.
//!
//! cargo run --release --example synth_corpus [-- out_dir]

use awe::frontend::Split;
use awe::synth::{class_separability, gen_corpus, SynthConfig};

fn main() -> awe::Result<()> {
    let cfg = SynthConfig::default();
    let corpus = gen_corpus(&cfg)?;
    let train = corpus.split_records(Split::Train).len();
    let test = corpus.split_records(Split::Test).len();
    println!(
        "{} classes ({} held out of training), {} speakers, {train} train and {test} test segments",
        corpus.classes.len(),
        cfg.n_oov_classes,
        cfg.n_speakers
    );
    for c in corpus.classes.iter().take(5) {
        println!("  {:<8} prototype {:>3} frames  phonemes {:?}", c.word, c.proto_len, c.phonemes.ids());
    }
    // Ratio of mean within-class to mean between-class distance of raw
    // mean-pooled features; lower is easier.
    println!("separability ratio {:.4}", class_separability(&corpus)?);
    println!(
        "{} search utterances holding {} aligned words",
        corpus.utterances.len(),
        corpus.search.len()
    );
    if let Some(dir) = std::env::args().nth(1) {
        corpus.write(&dir)?;
        println!("wrote {dir}");
    }
    Ok(())
}
