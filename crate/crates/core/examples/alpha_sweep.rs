//! Word discrimination across the five loss-weight settings.
//!
//! cargo run --release --example alpha_sweep [-- seed]

use awe::config::RunConfig;
use awe::experiment::{sweep_alpha, ALPHA_GRID};
use awe::synth::gen_corpus;

fn main() -> awe::Result<()> {
    let mut cfg = RunConfig::default();
    if let Some(seed) = std::env::args().nth(1) {
        cfg.train.seed = seed.parse().map_err(|_| awe::Error::Config(format!("bad seed {seed:?}")))?;
    }
    let data = gen_corpus(&cfg.synth)?.data();
    let rows = sweep_alpha(&data, &cfg.encoder, &cfg.train, &ALPHA_GRID, None)?;
    println!("alpha1 alpha2    iv AP   oov AP  cross iv");
    for r in &rows {
        println!(
            "{:>6} {:>6}  {:>6.2}%  {:>6.2}%  {:>7.2}%",
            r.alpha1,
            r.alpha2,
            100.0 * r.ap_iv,
            100.0 * r.ap_oov,
            100.0 * r.ap_cross_iv
        );
    }
    let best = rows.iter().max_by(|a, b| a.ap_iv.total_cmp(&b.ap_iv)).expect("non-empty grid");
    println!("best acoustic iv AP at alpha=({}, {})", best.alpha1, best.alpha2);
    Ok(())
}
