//! Class-balanced batch sampling, AdamW with a one-cycle schedule, and the epoch loop.

mod optim;
mod sampler;
mod schedule;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Lexicon, Segment};
use crate::encoders::{
    self, encode_audio, encode_text, init_params, log_temperature, logit_scale, EncoderConfig, EncoderInput,
    ParamStore, PhonemeSequence, LOG_TEMPERATURE,
};
use crate::error::{Error, Result};
use crate::frontend::{FeatureSequence, ManifestRecord};
use crate::losses::{total_loss, total_loss_grad, DwdBatch, DwdOptions, LossWeights, Reduction, TotalLoss};

pub use optim::{adamw_step, clip_global_norm, OptState};
pub use sampler::{sample_batch, BatchSampler, SampledBatch};
pub use schedule::{onecycle_lr, peak_step, FINAL_DIV, START_DIV};

pub const METRICS_HEADER: &str = "step,epoch,lr,loss,clap,dwd,exp_tau";
pub const MODEL_FILE: &str = "model.awep";
pub const OPTIMIZER_FILE: &str = "optimizer.awep";
pub const STATE_FILE: &str = "train_state.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const ENCODER_FILE: &str = "encoder.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_classes: usize,
    pub positives_per_class: usize,
    pub lr_max: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub epochs: usize,
    pub warmup_frac: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub dwd_reduction: Reduction,
    pub dwd_tau_scaled: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_classes: 128,
            positives_per_class: 2,
            lr_max: 1e-3,
            weight_decay: 1e-4,
            clip_norm: 1.0,
            epochs: 30,
            warmup_frac: 0.2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            alpha1: 0.1,
            alpha2: 1.0,
            dwd_reduction: Reduction::Sum,
            dwd_tau_scaled: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.batch_classes < 2 {
            return bad("train.batch_classes must be at least 2");
        }
        if self.positives_per_class < 2 {
            return bad("train.positives_per_class must be at least 2");
        }
        if !(self.warmup_frac > 0.0 && self.warmup_frac < 1.0) {
            return bad("train.warmup_frac must lie in (0, 1)");
        }
        if !(self.lr_max > 0.0 && self.lr_max.is_finite()) {
            return bad("train.lr_max must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.clip_norm > 0.0 && self.eps > 0.0) {
            return bad("train.weight_decay, clip_norm and eps must be non-negative, positive and positive");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("train.beta1 and train.beta2 must lie in [0, 1)");
        }
        if self.epochs == 0 {
            return bad("train.epochs must be positive");
        }
        self.weights().validate()
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            alpha1: self.alpha1,
            alpha2: self.alpha2,
        }
    }

    pub fn dwd_options(&self) -> DwdOptions {
        DwdOptions {
            reduction: self.dwd_reduction,
            tau_scaled: self.dwd_tau_scaled,
        }
    }

    pub fn steps_per_epoch(&self, n_classes: usize) -> usize {
        n_classes / self.batch_classes
    }
}

/// Joint objective for one batch of `texts.len()` classes with `audio.len() / texts.len()`
/// instances each (class-major).
pub fn batch_loss(
    params: &ParamStore,
    enc: &EncoderConfig,
    texts: &[PhonemeSequence],
    audio: &[FeatureSequence],
    cfg: &TrainConfig,
) -> Result<TotalLoss> {
    let (e_t, batch) = encode_batch(params, enc, texts, audio)?;
    total_loss(&e_t, &batch, log_temperature(params)?, &cfg.weights(), &cfg.dwd_options())
}

/// Objective and its gradient with respect to every parameter.
pub fn loss_and_grad(
    params: &ParamStore,
    enc: &EncoderConfig,
    texts: &[PhonemeSequence],
    audio: &[FeatureSequence],
    cfg: &TrainConfig,
) -> Result<(TotalLoss, ParamStore)> {
    let (e_t, batch) = encode_batch(params, enc, texts, audio)?;
    let tau = log_temperature(params)?;
    let g = total_loss_grad(&e_t, &batch, tau, &cfg.weights(), &cfg.dwd_options())?;
    let d = enc.embed_dim;
    let rows = |flat: &[f64]| flat.chunks(d).map(<[f64]>::to_vec).collect::<Vec<_>>();
    let mut grads = encoders::backward(params, enc, EncoderInput::Text(texts), &rows(&g.d_text))?;
    let audio_grads = encoders::backward(params, enc, EncoderInput::Audio(audio), &rows(&g.d_audio))?;
    grads.add_scaled(&audio_grads, 1.0)?;
    grads.get_mut(LOG_TEMPERATURE)?.data_mut()[0] += g.d_tau;
    Ok((g.loss, grads))
}

fn encode_batch(
    params: &ParamStore,
    enc: &EncoderConfig,
    texts: &[PhonemeSequence],
    audio: &[FeatureSequence],
) -> Result<(encoders::EmbeddingBatch, DwdBatch)> {
    let n = texts.len();
    if n == 0 || audio.len() % n != 0 {
        return Err(Error::Shape(format!(
            "{} audio segments do not split into {n} classes",
            audio.len()
        )));
    }
    let e_t = encode_text(params, enc, texts)?;
    let e_a = encode_audio(params, enc, audio)?;
    let batch = DwdBatch::from_embeddings(&e_a, n, audio.len() / n)?;
    Ok((e_t, batch))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub clap: f64,
    pub dwd: f64,
    pub exp_tau: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
}

pub fn metrics_csv(log: &[StepLog]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in log {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.step, r.epoch, r.lr, r.loss, r.clap, r.dwd, r.exp_tau
        );
    }
    s
}

fn parse_metrics(text: &str) -> Result<Vec<StepLog>> {
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(Error::Format("metrics log lacks the expected header".into()));
    }
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::Format(format!("bad metrics row {line:?}"));
            if f.len() != 7 {
                return Err(bad());
            }
            let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad());
            Ok(StepLog {
                step: f[0].parse().map_err(|_| bad())?,
                epoch: f[1].parse().map_err(|_| bad())?,
                lr: num(2)?,
                loss: num(3)?,
                clap: num(4)?,
                dwd: num(5)?,
                exp_tau: num(6)?,
                grad_norm: f64::NAN,
            })
        })
        .collect()
}

/// Mean logged loss of each completed epoch, in order.
pub fn epoch_mean_losses(log: &[StepLog]) -> Vec<f64> {
    let mut out: Vec<(f64, usize)> = Vec::new();
    for r in log {
        if out.len() < r.epoch {
            out.resize(r.epoch, (0.0, 0));
        }
        let e = &mut out[r.epoch - 1];
        e.0 += r.loss;
        e.1 += 1;
    }
    out.into_iter().map(|(s, c)| s / c.max(1) as f64).collect()
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Directory for the model, per-epoch checkpoints, metrics and resume state.
    pub out_dir: Option<PathBuf>,
    /// Continue from the state saved in `out_dir`.
    pub resume: bool,
    /// Stop once this many epochs are complete, leaving a resumable state.
    pub stop_after_epoch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ResumeState {
    epochs_done: usize,
    step: usize,
    rng_word_pos: String,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ParamStore,
    pub log: Vec<StepLog>,
    pub epochs_done: usize,
    /// Some sampled batch had to repeat instances.
    pub with_replacement: bool,
}

/// Trains both encoders on the train-split `segments`.
///
/// Each epoch runs `floor(classes / N)` steps. Batches come from a ChaCha8 stream
/// seeded by `cfg.seed`; the parameters are initialised from the same seed.
pub fn train(
    segments: &[Segment],
    lexicon: &Lexicon,
    cfg: &TrainConfig,
    enc: &EncoderConfig,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    enc.validate()?;
    let records: Vec<ManifestRecord> = segments.iter().map(|s| s.record.clone()).collect();
    let sampler = BatchSampler::new(&records, lexicon)?;
    let steps_per_epoch = cfg.steps_per_epoch(sampler.n_classes());
    if steps_per_epoch == 0 {
        return Err(Error::Invalid(format!(
            "need at least {} training classes, corpus has {}",
            cfg.batch_classes,
            sampler.n_classes()
        )));
    }
    let total_steps = steps_per_epoch * cfg.epochs;
    let out_dir = opts.out_dir.as_deref();
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let (mut params, mut opt, mut log, mut epochs_done, mut step) = if opts.resume {
        let dir = out_dir.ok_or_else(|| Error::Config("resume needs an output directory".into()))?;
        resume(dir, &mut rng)?
    } else {
        let params = init_params(enc, cfg.seed)?;
        let opt = OptState::new(&params);
        (params, opt, Vec::new(), 0, 0)
    };
    if let Some(dir) = out_dir {
        let json = serde_json::to_string_pretty(enc)?;
        write_file(&dir.join(ENCODER_FILE), json.as_bytes())?;
    }

    let last_epoch = opts.stop_after_epoch.map_or(cfg.epochs, |e| e.min(cfg.epochs));
    let mut with_replacement = false;
    while epochs_done < last_epoch {
        let epoch = epochs_done + 1;
        for _ in 0..steps_per_epoch {
            let (idx, batch) =
                sampler.sample(&records, cfg.batch_classes, cfg.positives_per_class, &mut rng)?;
            with_replacement |= batch.with_replacement;
            let audio: Vec<FeatureSequence> = idx.iter().map(|&i| segments[i].features.clone()).collect();
            let (loss, mut grads) = loss_and_grad(&params, enc, &batch.texts, &audio, cfg)?;
            if !loss.total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step,
                    detail: format!("clap {} dwd_sm {} dwd_cc {}", loss.clap, loss.dwd.sm, loss.dwd.cc),
                });
            }
            let grad_norm = clip_global_norm(&mut grads, cfg.clip_norm)?;
            let lr = onecycle_lr(step, total_steps, cfg)?;
            adamw_step(&mut params, &grads, &mut opt, lr, cfg)?;
            log.push(StepLog {
                step,
                epoch,
                lr,
                loss: loss.total,
                clap: loss.clap,
                dwd: loss.dwd.total(),
                exp_tau: logit_scale(log_temperature(&params)?).0,
                grad_norm,
            });
            step += 1;
        }
        epochs_done = epoch;
        if let Some(dir) = out_dir {
            save_epoch(dir, &params, &opt, &log, epochs_done, step, &rng)?;
        }
    }
    Ok(TrainOutcome {
        params,
        log,
        epochs_done,
        with_replacement,
    })
}

/// Loads a trained model. `path` is either a training output directory or a
/// checkpoint file whose directory holds `encoder.json`.
pub fn load_model(path: impl AsRef<Path>) -> Result<(ParamStore, EncoderConfig)> {
    let path = path.as_ref();
    let (ckpt, dir) = if path.is_dir() {
        (path.join(MODEL_FILE), path.to_path_buf())
    } else {
        (path.to_path_buf(), path.parent().unwrap_or(Path::new(".")).to_path_buf())
    };
    let enc_path = dir.join(ENCODER_FILE);
    let text = fs::read_to_string(&enc_path).map_err(|e| Error::io(&enc_path, e))?;
    let enc: EncoderConfig = serde_json::from_str(&text)?;
    let params = ParamStore::load(&ckpt)?;
    let expected = init_params(&enc, 0)?;
    if !params.same_layout(&expected) {
        return Err(Error::Shape(format!(
            "checkpoint {} does not match {}",
            ckpt.display(),
            enc_path.display()
        )));
    }
    Ok((params, enc))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn save_epoch(
    dir: &Path,
    params: &ParamStore,
    opt: &OptState,
    log: &[StepLog],
    epochs_done: usize,
    step: usize,
    rng: &ChaCha8Rng,
) -> Result<()> {
    params.save(dir.join(format!("epoch-{epochs_done:03}.awep")))?;
    params.save(dir.join(MODEL_FILE))?;
    opt.to_store()?.save(dir.join(OPTIMIZER_FILE))?;
    write_file(&dir.join(METRICS_FILE), metrics_csv(log).as_bytes())?;
    let state = ResumeState {
        epochs_done,
        step,
        rng_word_pos: rng.get_word_pos().to_string(),
    };
    write_file(&dir.join(STATE_FILE), serde_json::to_string_pretty(&state)?.as_bytes())
}

type Resumed = (ParamStore, OptState, Vec<StepLog>, usize, usize);

fn resume(dir: &Path, rng: &mut ChaCha8Rng) -> Result<Resumed> {
    let path = dir.join(STATE_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let state: ResumeState = serde_json::from_str(&text)?;
    let pos: u128 = state
        .rng_word_pos
        .parse()
        .map_err(|_| Error::Format(format!("bad rng position {:?}", state.rng_word_pos)))?;
    rng.set_word_pos(pos);
    let params = ParamStore::load(dir.join(MODEL_FILE))?;
    let opt = OptState::from_store(&ParamStore::load(dir.join(OPTIMIZER_FILE))?)?;
    let metrics_path = dir.join(METRICS_FILE);
    let metrics = fs::read_to_string(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
    let log = parse_metrics(&metrics)?;
    if log.len() != state.step || !params.same_layout(&opt.m) {
        return Err(Error::Format("resume state is inconsistent".into()));
    }
    Ok((params, opt, log, state.epochs_done, state.step))
}
