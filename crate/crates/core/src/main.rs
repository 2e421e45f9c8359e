use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use awe::config::RunConfig;
use awe::corpus::{load_manifest_segments, CorpusData, Lexicon, LEXICON_FILE};
use awe::evaluation::{
    embed_manifest, eval_kws, eval_std, eval_wd, parse_segmentations, read_embeddings, score_histogram,
    write_embeddings, ScoredTrials,
};
use awe::experiment::{parse_grid, sweep_alpha, sweep_csv, ALPHA_GRID};
use awe::frontend::read_manifest;
use awe::gradcheck::{run_all, GradCheckConfig};
use awe::synth::gen_corpus;
use awe::training::{epoch_mean_losses, load_model, train, TrainOptions};
use awe::{Error, Result};
use clap::{Args, Parser, Subcommand};

/// Acoustic word embeddings from joint audio-text and audio-audio contrastive training.
///
/// Settings come from built-in desk-scale defaults, then `--config` (JSON with
/// flat dotted keys such as "train.lr_max"), then command-line flags.
#[derive(Parser)]
#[command(name = "awe", version)]
struct Cli {
    /// Worker threads for encoding and scoring [default: available cores]
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic word corpus
    GenSynth {
        #[command(flatten)]
        config: ConfigArg,
        /// Output directory
        #[arg(long)]
        out_dir: PathBuf,
        /// Overrides synth.seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the audio and text encoders
    Train(TrainArgs),
    /// Embed the segments of a manifest
    Embed {
        /// Training output directory or checkpoint file
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Embedding dump (EMB1)
        #[arg(long)]
        out: PathBuf,
        /// Lexicon for text rows [default: lexicon.json beside the manifest]
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Skip the text rows
        #[arg(long)]
        no_text: bool,
    },
    /// Word discrimination average precision
    EvalWd {
        /// Embedding dump covering the test segments
        #[arg(long)]
        embeddings: PathBuf,
        /// Train and test manifests
        #[arg(long, num_args = 2, value_names = ["TRAIN", "TEST"])]
        manifests: Vec<PathBuf>,
        /// Report JSON
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        dumps: DumpArgs,
    },
    /// Spoken term detection over windowed search utterances
    EvalStd(SearchArgs),
    /// Keyword search with written queries
    EvalKws(SearchArgs),
    /// Compare analytic gradients with central finite differences
    GradCheck {
        /// Single seed [default: seeds 0-4]
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train and evaluate one model per (alpha1, alpha2) setting
    SweepAlpha {
        #[command(flatten)]
        config: ConfigArg,
        /// Corpus directory
        #[arg(long)]
        corpus: PathBuf,
        /// Settings as alpha1:alpha2 pairs [default: 1:0.1,1:0.5,1:1,0.1:1,0.5:0.1]
        #[arg(long)]
        grid: Option<String>,
        /// Output CSV
        #[arg(long)]
        out: PathBuf,
        /// Keep each model under this directory
        #[arg(long)]
        checkpoints: Option<PathBuf>,
        /// Overrides train.seed
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct ConfigArg {
    /// JSON config with flat dotted keys
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<RunConfig> {
        match &self.config {
            Some(p) => RunConfig::load(p),
            None => Ok(RunConfig::default()),
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Training manifest (records with split "train" are used)
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Lexicon [default: lexicon.json beside the manifest]
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Weight of the audio-text loss [full scale: 0.1]
    #[arg(long)]
    alpha1: Option<f64>,
    /// Weight of the audio-audio loss [full scale: 1.0]
    #[arg(long)]
    alpha2: Option<f64>,
    /// Epochs [full scale: 30]
    #[arg(long)]
    epochs: Option<usize>,
    /// Peak learning rate [full scale: 1e-3; desk preset: 3e-2]
    #[arg(long)]
    lr_max: Option<f64>,
    /// AdamW weight decay [full scale: 1e-4]
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Global gradient norm limit [full scale: 1.0]
    #[arg(long)]
    clip_norm: Option<f64>,
    /// Fraction of steps spent warming up [full scale: 0.2]
    #[arg(long)]
    warmup_frac: Option<f64>,
    /// Classes per batch N [full scale: 128; desk preset: 8]
    #[arg(long)]
    batch_classes: Option<usize>,
    /// Instances per class M [desk preset: 6]
    #[arg(long)]
    positives_per_class: Option<usize>,
    /// Seed for initialisation and batch sampling [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Continue from the state saved in the output directory
    #[arg(long)]
    resume: bool,
    /// Stop after this many epochs, leaving a resumable state
    #[arg(long)]
    stop_after_epoch: Option<usize>,
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Training output directory or checkpoint file
    #[arg(long)]
    model: PathBuf,
    /// Corpus directory with train.jsonl, test.jsonl, search.jsonl and lexicon.json
    #[arg(long)]
    corpus: PathBuf,
    /// Comma-separated window lengths in seconds, plus "aligned" for word boundaries [default: 0.2,0.3,0.4,0.6,aligned]
    #[arg(long)]
    windows: Option<String>,
    /// Report JSON
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    dumps: DumpArgs,
}

#[derive(Args)]
struct DumpArgs {
    /// Write each scored trial set as CSV into this directory
    #[arg(long)]
    trials_dir: Option<PathBuf>,
    /// Write score histograms as CSV into this directory
    #[arg(long)]
    histogram_dir: Option<PathBuf>,
}

impl DumpArgs {
    fn write(&self, scored: &[ScoredTrials]) -> Result<()> {
        for (dir, trials) in [(&self.trials_dir, true), (&self.histogram_dir, false)] {
            let Some(dir) = dir else { continue };
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
            for s in scored {
                let name = s.key.replace('/', "_");
                if trials {
                    s.trials.write_csv(dir.join(format!("{name}.csv")))?;
                } else {
                    let csv = score_histogram(&s.trials.scores, &s.trials.labels).to_csv();
                    let path = dir.join(format!("{name}.csv"));
                    fs::write(&path, csv).map_err(|e| io_err(&path, e))?;
                }
            }
        }
        Ok(())
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn manifest_dir(manifest: &Path) -> PathBuf {
    manifest.parent().unwrap_or(Path::new(".")).to_path_buf()
}

fn run_train(a: &TrainArgs) -> Result<()> {
    let mut cfg = a.config.load()?;
    let t = &mut cfg.train;
    macro_rules! set {
        ($($field:ident),*) => { $(if let Some(v) = a.$field { t.$field = v; })* };
    }
    set!(alpha1, alpha2, epochs, lr_max, weight_decay, clip_norm, warmup_frac, batch_classes, positives_per_class, seed);
    cfg.validate()?;
    let segments = load_manifest_segments(&a.manifest)?;
    let lexicon = Lexicon::load(a.lexicon.clone().unwrap_or_else(|| manifest_dir(&a.manifest).join(LEXICON_FILE)))?;
    let opts = TrainOptions {
        out_dir: Some(a.out.clone()),
        resume: a.resume,
        stop_after_epoch: a.stop_after_epoch,
    };
    let outcome = train(&segments, &lexicon, &cfg.train, &cfg.encoder, &opts)?;
    for (e, loss) in epoch_mean_losses(&outcome.log).iter().enumerate() {
        println!("epoch {:>3}  mean loss {loss:.6}", e + 1);
    }
    if let Some(last) = outcome.log.last() {
        println!("final lr {:.3e}  exp_tau {:.4}", last.lr, last.exp_tau);
    }
    if outcome.with_replacement {
        println!("note: some classes had fewer than M instances and were sampled with replacement");
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn run_search(a: &SearchArgs, kws: bool) -> Result<()> {
    let cfg = a.config.load()?;
    let segs = match &a.windows {
        Some(w) => parse_segmentations(w)?,
        None => cfg.eval.segmentations(),
    };
    let (params, enc) = load_model(&a.model)?;
    let data = CorpusData::load(&a.corpus)?;
    let train_records = data.train_records();
    let (report, scored) = if kws {
        let words: BTreeSet<&str> = data.test.iter().map(|s| s.record.word.as_str()).collect();
        eval_kws(&params, &enc, &data.lexicon, words, &train_records, &data.search, &segs)?
    } else {
        eval_std(&params, &enc, &data.test, &train_records, &data.search, &segs)?
    };
    report.save(&a.out)?;
    a.dumps.write(&scored)?;
    for (task, by_vocab) in &report.eer {
        for (vocab, by_window) in by_vocab {
            for (window, eer) in by_window {
                println!("{task} {vocab} {window:>8}  EER {:.2}%", 100.0 * eer);
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::GenSynth { config, out_dir, seed } => {
            let mut cfg = config.load()?;
            if let Some(s) = seed {
                cfg.synth.seed = s;
            }
            cfg.synth.validate()?;
            let corpus = gen_corpus(&cfg.synth)?;
            corpus.write(&out_dir)?;
            let n_train = corpus.records.iter().filter(|r| r.split == awe::frontend::Split::Train).count();
            println!(
                "{} classes ({} out of vocabulary), {} instances: {} train, {} test; {} search utterances",
                corpus.classes.len(),
                cfg.synth.n_oov_classes,
                corpus.records.len(),
                n_train,
                corpus.records.len() - n_train,
                corpus.utterances.len()
            );
        }
        Command::Train(a) => run_train(&a)?,
        Command::Embed {
            model,
            manifest,
            out,
            lexicon,
            no_text,
        } => {
            let (params, enc) = load_model(&model)?;
            let segments = load_manifest_segments(&manifest)?;
            let lex = if no_text {
                None
            } else {
                Some(Lexicon::load(lexicon.unwrap_or_else(|| manifest_dir(&manifest).join(LEXICON_FILE)))?)
            };
            let emb = embed_manifest(&params, &enc, &segments, lex.as_ref())?;
            write_embeddings(&emb, &out)?;
            println!("{} embeddings of dimension {} to {}", emb.len(), emb.dim(), out.display());
        }
        Command::EvalWd {
            embeddings,
            manifests,
            out,
            dumps,
        } => {
            let emb = read_embeddings(&embeddings)?;
            let train_records = read_manifest(&manifests[0])?;
            let test_records = read_manifest(&manifests[1])?;
            let (report, scored) = eval_wd(&emb, &train_records, &test_records)?;
            report.save(&out)?;
            dumps.write(&scored)?;
            for (name, map) in [("acoustic", &report.ap), ("cross", &report.ap_cross)] {
                for (vocab, ap) in map {
                    println!("{name} {vocab} AP {:.2}%", 100.0 * ap);
                }
            }
        }
        Command::EvalStd(a) => run_search(&a, false)?,
        Command::EvalKws(a) => run_search(&a, true)?,
        Command::GradCheck { seed } => {
            let cfg = GradCheckConfig {
                seeds: seed.map_or_else(|| GradCheckConfig::default().seeds, |s| vec![s]),
                ..GradCheckConfig::default()
            };
            let results = run_all(&cfg)?;
            let mut ok = true;
            for r in &results {
                ok &= r.passed();
                println!(
                    "{:<40} seed {} max relative error {:.3e} (tolerance {:.0e}) {}",
                    r.name,
                    r.seed,
                    r.max_rel_err,
                    r.tol,
                    if r.passed() { "ok" } else { "FAIL" }
                );
            }
            let worst = results.iter().map(|r| r.max_rel_err / r.tol).fold(0.0, f64::max);
            println!("max error/tolerance ratio {worst:.3e}");
            return Ok(ok);
        }
        Command::SweepAlpha {
            config,
            corpus,
            grid,
            out,
            checkpoints,
            seed,
        } => {
            let mut cfg = config.load()?;
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            let grid = match grid {
                Some(g) => parse_grid(&g)?,
                None => ALPHA_GRID.to_vec(),
            };
            let data = CorpusData::load(&corpus)?;
            let rows = sweep_alpha(&data, &cfg.encoder, &cfg.train, &grid, checkpoints.as_deref())?;
            let csv = sweep_csv(&rows);
            fs::write(&out, &csv).map_err(|e| io_err(&out, e))?;
            print!("{csv}");
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if matches!(e, Error::Config(_)) { 2 } else { 1 })
        }
    }
}
