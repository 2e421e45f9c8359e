//! Trains the encoders on the synthetic corpus and shows the schedule at work.
//!
//! cargo run --release --example train [-- out_dir]
//!
//! With an output directory the run leaves per-epoch checkpoints, the optimizer
//! state and `metrics.csv` there, so `awe train --resume` can pick it up.

use awe::config::RunConfig;
use awe::synth::gen_corpus;
use awe::training::{epoch_mean_losses, train, TrainOptions};

fn main() -> awe::Result<()> {
    let cfg = RunConfig::default();
    let data = gen_corpus(&cfg.synth)?.data();
    let opts = TrainOptions {
        out_dir: std::env::args().nth(1).map(Into::into),
        ..TrainOptions::default()
    };
    let t = &cfg.train;
    println!(
        "N={} classes x M={} instances, alpha=({}, {}), peak lr {:.0e}, {} epochs",
        t.batch_classes, t.positives_per_class, t.alpha1, t.alpha2, t.lr_max, t.epochs
    );
    let out = train(&data.train, &data.lexicon, t, &cfg.encoder, &opts)?;
    let means = epoch_mean_losses(&out.log);
    let steps = out.log.len() / means.len().max(1);
    for (e, loss) in means.iter().enumerate() {
        let last = &out.log[(e + 1) * steps - 1];
        println!(
            "epoch {:>2}  loss {loss:>8.4}  clap {:>6.4}  dwd {:>8.4}  lr {:.2e}  exp(tau) {:>6.2}",
            e + 1,
            last.clap,
            last.dwd,
            last.lr,
            last.exp_tau
        );
    }
    Ok(())
}
