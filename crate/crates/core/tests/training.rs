use std::fs;

use awe::config::RunConfig;
use awe::corpus::CorpusData;
use awe::synth::{gen_corpus, SynthConfig};
use awe::training::{
    epoch_mean_losses, onecycle_lr, train, BatchSampler, TrainConfig, TrainOptions, METRICS_FILE, MODEL_FILE,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small() -> (RunConfig, CorpusData) {
    let mut cfg = RunConfig::default();
    cfg.train.epochs = 4;
    cfg.encoder.hidden = 16;
    cfg.encoder.text_embed_dim = 8;
    let data = gen_corpus(&cfg.synth).unwrap().data();
    (cfg, data)
}

#[test]
fn same_seed_runs_write_identical_files() {
    let (cfg, data) = small();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let opts = TrainOptions {
            out_dir: Some(d.path().to_path_buf()),
            ..TrainOptions::default()
        };
        train(&data.train, &data.lexicon, &cfg.train, &cfg.encoder, &opts).unwrap();
    }
    let names = ["epoch-001.awep", "epoch-004.awep", MODEL_FILE, "optimizer.awep", METRICS_FILE, "train_state.json"];
    for name in names {
        let a = fs::read(dirs[0].path().join(name)).unwrap();
        let b = fs::read(dirs[1].path().join(name)).unwrap();
        assert!(a == b, "{name} differs");
    }
    let other = TrainConfig { seed: 1, ..cfg.train.clone() };
    let out = train(&data.train, &data.lexicon, &other, &cfg.encoder, &TrainOptions::default()).unwrap();
    assert_ne!(fs::read(dirs[0].path().join(MODEL_FILE)).unwrap(), out.params.to_bytes());
}

#[test]
fn resuming_reproduces_the_uninterrupted_run() {
    let (cfg, data) = small();
    let full = tempfile::tempdir().unwrap();
    let split = tempfile::tempdir().unwrap();
    let run = |dir: &std::path::Path, resume: bool, stop: Option<usize>| {
        let opts = TrainOptions {
            out_dir: Some(dir.to_path_buf()),
            resume,
            stop_after_epoch: stop,
        };
        train(&data.train, &data.lexicon, &cfg.train, &cfg.encoder, &opts).unwrap()
    };
    let a = run(full.path(), false, None);
    let first = run(split.path(), false, Some(2));
    assert_eq!(first.epochs_done, 2);
    let b = run(split.path(), true, None);
    assert_eq!(b.epochs_done, 4);
    assert_eq!(a.params, b.params);
    for name in [MODEL_FILE, "optimizer.awep", METRICS_FILE] {
        assert!(fs::read(full.path().join(name)).unwrap() == fs::read(split.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn loss_falls_and_schedule_is_followed() {
    let cfg = RunConfig::default();
    let data = gen_corpus(&cfg.synth).unwrap().data();
    let out = train(&data.train, &data.lexicon, &cfg.train, &cfg.encoder, &TrainOptions::default()).unwrap();
    let means = epoch_mean_losses(&out.log);
    assert_eq!(means.len(), cfg.train.epochs);
    assert!(means.last().unwrap() < &means[0], "{means:?}");
    let total = out.log.len();
    assert_eq!(total, cfg.train.epochs * cfg.train.steps_per_epoch(40));
    for s in &out.log {
        assert_eq!(s.lr, onecycle_lr(s.step, total, &cfg.train).unwrap());
        assert!(s.exp_tau > 0.0 && s.exp_tau <= 100.0);
        assert!(s.loss.is_finite() && s.grad_norm.is_finite());
    }
    assert!(!out.with_replacement);
}

#[test]
fn batch_sampling_is_seeded() {
    let data = gen_corpus(&SynthConfig::default()).unwrap().data();
    let records = data.train_records();
    let sampler = BatchSampler::new(&records, &data.lexicon).unwrap();
    let draw = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..3).map(|_| sampler.sample(&records, 8, 2, &mut rng).unwrap()).collect::<Vec<_>>()
    };
    let (a, b, c) = (draw(0), draw(0), draw(1));
    assert_eq!(a, b);
    assert_ne!(a, c);
    for (idx, batch) in &a {
        assert_eq!(idx.len(), 16);
        assert_eq!(batch.texts.len(), 8);
        for (j, class) in idx.chunks(2).enumerate() {
            for &i in class {
                assert_eq!(records[i].word, batch.classes[j]);
            }
        }
    }
}

#[test]
fn full_scale_configuration_runs_one_step() {
    // Three-layer bidirectional body at full width, shrunk only in batch size.
    let mut cfg = RunConfig::full_scale();
    cfg.encoder.feat_dim = cfg.synth.feat_dim;
    cfg.encoder.text_vocab = cfg.synth.phoneme_vocab_size;
    cfg.train.batch_classes = 40;
    cfg.train.positives_per_class = 2;
    cfg.train.epochs = 1;
    let mut synth = cfg.synth.clone();
    synth.proto_len_range = [20, 24];
    let data = gen_corpus(&synth).unwrap().data();
    let out = train(&data.train, &data.lexicon, &cfg.train, &cfg.encoder, &TrainOptions::default()).unwrap();
    assert_eq!(out.log.len(), 1);
    assert!(out.log[0].loss.is_finite());
}
