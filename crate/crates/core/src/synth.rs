//! Deterministic synthetic word corpus standing in for force-aligned speech.
//!
//! Every word class owns a smoothed random-walk trajectory (its prototype) and a
//! phoneme string spelling its class index in base K. Instances are time-warped
//! copies of the prototype with a per-speaker offset and frame noise. The last
//! `n_oov_classes` classes only appear in the test split. A set of longer "search"
//! utterances, each a concatenation of fresh word instances separated by short
//! noise gaps, is generated for spoken term detection.

use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusData, Lexicon, Segment, Utterance};
use crate::encoders::PhonemeSequence;
use crate::error::{Error, Result};
use crate::frontend::{write_features, write_manifest, FeatureSequence, ManifestRecord, Split, FRAME_SHIFT_S};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_classes: usize,
    pub n_oov_classes: usize,
    pub instances_per_class: usize,
    pub n_speakers: usize,
    pub feat_dim: usize,
    pub proto_len_range: [usize; 2],
    pub warp_range: [f64; 2],
    pub noise_sigma: f64,
    pub speaker_sigma: f64,
    pub phoneme_vocab_size: usize,
    pub seed: u64,
    pub search_utterances: usize,
    pub words_per_utterance: usize,
    pub gap_frames: [usize; 2],
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_classes: 50,
            n_oov_classes: 10,
            instances_per_class: 20,
            n_speakers: 10,
            feat_dim: 20,
            proto_len_range: [64, 128],
            warp_range: [0.8, 1.25],
            noise_sigma: 2.0,
            speaker_sigma: 4.0,
            phoneme_vocab_size: 8,
            seed: 0,
            search_utterances: 60,
            words_per_utterance: 3,
            gap_frames: [5, 20],
        }
    }
}

/// Fraction of each in-vocabulary class's instances assigned to training.
pub const TRAIN_FRACTION: f64 = 0.8;
const SMOOTHING_FRAMES: usize = 5;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_classes == 0 || self.n_oov_classes >= self.n_classes {
            return bad("synth.n_oov_classes must be smaller than synth.n_classes");
        }
        if self.instances_per_class == 0 || self.n_speakers == 0 || self.feat_dim == 0 {
            return bad("synth instance, speaker and feature counts must be positive");
        }
        if self.proto_len_range[0] < 2 || self.proto_len_range[1] < self.proto_len_range[0] {
            return bad("synth.proto_len_range must satisfy 2 <= min <= max");
        }
        if !(self.warp_range[0] > 0.0 && self.warp_range[1] >= self.warp_range[0]) {
            return bad("synth.warp_range must be positive and ordered");
        }
        if !(self.noise_sigma >= 0.0 && self.speaker_sigma >= 0.0) {
            return bad("synth sigmas must be non-negative");
        }
        if self.phoneme_vocab_size < 2 {
            return bad("synth.phoneme_vocab_size must be at least 2");
        }
        if self.words_per_utterance == 0 || self.words_per_utterance > self.n_classes {
            return bad("synth.words_per_utterance must be in 1..=n_classes");
        }
        if self.gap_frames[1] < self.gap_frames[0] {
            return bad("synth.gap_frames must be ordered");
        }
        Ok(())
    }

    pub fn n_iv_classes(&self) -> usize {
        self.n_classes - self.n_oov_classes
    }

    /// Phoneme string length: `max(3, ceil(log_K(n_classes)))`.
    pub fn phoneme_len(&self) -> usize {
        let k = self.phoneme_vocab_size;
        let mut len = 0;
        let mut cap = 1usize;
        while cap < self.n_classes {
            cap = cap.saturating_mul(k);
            len += 1;
        }
        len.max(3)
    }

    pub fn train_instances_per_class(&self) -> usize {
        (TRAIN_FRACTION * self.instances_per_class as f64).round() as usize
    }
}

pub fn word_label(class_id: usize) -> String {
    format!("w{class_id:03}")
}

/// Base-K digits of `class_id`, most significant first, zero padded to `len`.
pub fn class_phonemes(class_id: usize, k: usize, len: usize) -> PhonemeSequence {
    let mut digits = vec![0; len];
    let mut v = class_id;
    for d in digits.iter_mut().rev() {
        *d = v % k;
        v /= k;
    }
    PhonemeSequence(digits)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordClassSpec {
    pub class_id: usize,
    pub word: String,
    /// L×F row-major.
    pub prototype: Vec<f64>,
    pub proto_len: usize,
    pub phonemes: PhonemeSequence,
}

/// Generated corpus held in memory; `features[i]` belongs to `records[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub config: SynthConfig,
    pub classes: Vec<WordClassSpec>,
    pub records: Vec<ManifestRecord>,
    pub features: Vec<FeatureSequence>,
    /// Word alignments inside the search utterances.
    pub search: Vec<ManifestRecord>,
    pub utterances: Vec<(String, FeatureSequence)>,
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample::<f64, _>(StandardNormal)
}

fn prototype(rng: &mut ChaCha8Rng, len: usize, dim: usize) -> Vec<f64> {
    let mut walk = vec![0.0; len * dim];
    let mut pos = vec![0.0; dim];
    for t in 0..len {
        for (k, p) in pos.iter_mut().enumerate() {
            *p += gaussian(rng);
            walk[t * dim + k] = *p;
        }
    }
    // Centered moving average, truncated at the edges.
    let half = SMOOTHING_FRAMES / 2;
    let mut out = vec![0.0; len * dim];
    for t in 0..len {
        let lo = t.saturating_sub(half);
        let hi = (t + half).min(len - 1);
        let n = (hi - lo + 1) as f64;
        for k in 0..dim {
            out[t * dim + k] = (lo..=hi).map(|s| walk[s * dim + k]).sum::<f64>() / n;
        }
    }
    out
}

/// Linear time resampling of an L×F sequence to `new_len` frames.
pub fn resample(seq: &[f64], len: usize, dim: usize, new_len: usize) -> Vec<f64> {
    let mut out = vec![0.0; new_len * dim];
    for t in 0..new_len {
        let pos = if new_len == 1 {
            0.0
        } else {
            (t * (len - 1)) as f64 / (new_len - 1) as f64
        };
        let i0 = (pos.floor() as usize).min(len - 1);
        let i1 = (i0 + 1).min(len - 1);
        let frac = pos - i0 as f64;
        for k in 0..dim {
            let a = seq[i0 * dim + k];
            out[t * dim + k] = if frac == 0.0 {
                a
            } else {
                a * (1.0 - frac) + seq[i1 * dim + k] * frac
            };
        }
    }
    out
}

struct Generator<'a> {
    cfg: &'a SynthConfig,
    rng: ChaCha8Rng,
    speakers: Vec<Vec<f64>>,
}

impl Generator<'_> {
    fn warp(&mut self) -> f64 {
        let [lo, hi] = self.cfg.warp_range;
        if lo == hi {
            lo
        } else {
            self.rng.gen_range(lo..=hi)
        }
    }

    /// One instance of `class`: (frames, speaker index).
    fn instance(&mut self, class: &WordClassSpec) -> (Vec<f64>, usize, usize) {
        let dim = self.cfg.feat_dim;
        let factor = self.warp();
        let new_len = ((class.proto_len as f64 * factor).round() as usize).max(1);
        let speaker = self.rng.gen_range(0..self.cfg.n_speakers);
        let mut frames = resample(&class.prototype, class.proto_len, dim, new_len);
        for t in 0..new_len {
            for k in 0..dim {
                frames[t * dim + k] +=
                    self.speakers[speaker][k] + self.cfg.noise_sigma * gaussian(&mut self.rng);
            }
        }
        (frames, new_len, speaker)
    }

    fn gap(&mut self, speaker: usize) -> (Vec<f64>, usize) {
        let [lo, hi] = self.cfg.gap_frames;
        let len = self.rng.gen_range(lo..=hi);
        let dim = self.cfg.feat_dim;
        let mut frames = vec![0.0; len * dim];
        for t in 0..len {
            for k in 0..dim {
                frames[t * dim + k] =
                    self.speakers[speaker][k] + self.cfg.noise_sigma * gaussian(&mut self.rng);
            }
        }
        (frames, len)
    }
}

fn to_features(frames: &[f64], len: usize, dim: usize) -> Result<FeatureSequence> {
    FeatureSequence::new(frames.iter().map(|&v| v as f32).collect(), len, dim)
}

fn speaker_label(s: usize) -> String {
    format!("spk{s:02}")
}

/// Generates the corpus. The RNG stream order is fixed: prototypes, speaker
/// offsets, word instances (class-major), then search utterances.
pub fn gen_corpus(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let dim = cfg.feat_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let plen = cfg.phoneme_len();

    let classes: Vec<WordClassSpec> = (0..cfg.n_classes)
        .map(|c| {
            let [lo, hi] = cfg.proto_len_range;
            let len = rng.gen_range(lo..=hi);
            WordClassSpec {
                class_id: c,
                word: word_label(c),
                prototype: prototype(&mut rng, len, dim),
                proto_len: len,
                phonemes: class_phonemes(c, cfg.phoneme_vocab_size, plen),
            }
        })
        .collect();
    let speakers = (0..cfg.n_speakers)
        .map(|_| (0..dim).map(|_| cfg.speaker_sigma * gaussian(&mut rng)).collect())
        .collect();
    let mut gen = Generator { cfg, rng, speakers };

    let n_train = cfg.train_instances_per_class();
    let mut records = Vec::new();
    let mut features = Vec::new();
    for class in &classes {
        let oov = class.class_id >= cfg.n_iv_classes();
        for i in 0..cfg.instances_per_class {
            let (frames, len, speaker) = gen.instance(class);
            let id = format!("{}_i{i:02}", class.word);
            records.push(ManifestRecord {
                id: id.clone(),
                word: class.word.clone(),
                split: if !oov && i < n_train { Split::Train } else { Split::Test },
                feature_path: format!("features/{id}.feat"),
                start_s: 0.0,
                end_s: len as f64 * FRAME_SHIFT_S,
                speaker: speaker_label(speaker),
            });
            features.push(to_features(&frames, len, dim)?);
        }
    }

    let mut search = Vec::new();
    let mut utterances = Vec::new();
    for u in 0..cfg.search_utterances {
        let uid = format!("utt{u:03}");
        let path = format!("utterances/{uid}.feat");
        let words = sample(&mut gen.rng, cfg.n_classes, cfg.words_per_utterance).into_vec();
        let speaker = gen.rng.gen_range(0..cfg.n_speakers);
        let mut frames = Vec::new();
        let mut cursor = 0usize;
        for (w, &c) in words.iter().enumerate() {
            let (gap, glen) = gen.gap(speaker);
            frames.extend(gap);
            cursor += glen;
            let (inst, len, _) = gen.instance(&classes[c]);
            frames.extend(inst);
            search.push(ManifestRecord {
                id: format!("{uid}_w{w}"),
                word: classes[c].word.clone(),
                split: Split::Test,
                feature_path: path.clone(),
                start_s: cursor as f64 * FRAME_SHIFT_S,
                end_s: (cursor + len) as f64 * FRAME_SHIFT_S,
                speaker: speaker_label(speaker),
            });
            cursor += len;
        }
        let (gap, glen) = gen.gap(speaker);
        frames.extend(gap);
        cursor += glen;
        utterances.push((path, to_features(&frames, cursor, dim)?));
    }

    Ok(SynthCorpus {
        config: cfg.clone(),
        classes,
        records,
        features,
        search,
        utterances,
    })
}

impl SynthCorpus {
    pub fn lexicon(&self) -> Lexicon {
        Lexicon::new(
            self.classes
                .iter()
                .map(|c| (c.word.clone(), c.phonemes.clone()))
                .collect(),
        )
    }

    pub fn split_records(&self, split: Split) -> Vec<ManifestRecord> {
        self.records.iter().filter(|r| r.split == split).cloned().collect()
    }

    /// Writes `train.jsonl`, `test.jsonl`, `search.jsonl`, `lexicon.json`,
    /// `synth.json`, `features/` and `utterances/` under `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        for sub in ["features", "utterances"] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        write_manifest(&self.split_records(Split::Train), dir.join("train.jsonl"))?;
        write_manifest(&self.split_records(Split::Test), dir.join("test.jsonl"))?;
        write_manifest(&self.search, dir.join("search.jsonl"))?;
        self.lexicon().save(dir.join("lexicon.json"))?;
        let cfg_path = dir.join("synth.json");
        fs::write(&cfg_path, serde_json::to_string_pretty(&self.config)? + "\n")
            .map_err(|e| Error::io(&cfg_path, e))?;
        for (rec, feats) in self.records.iter().zip(&self.features) {
            write_features(feats, dir.join(&rec.feature_path))?;
        }
        for (path, feats) in &self.utterances {
            write_features(feats, dir.join(path))?;
        }
        Ok(())
    }
}

/// Mean within-class distance over mean between-class distance, on frame-averaged
/// instances. `labels[i]` is the class of `items[i]`.
pub fn separability(items: &[FeatureSequence], labels: &[usize]) -> Result<f64> {
    if items.len() != labels.len() || items.len() < 2 {
        return Err(Error::Invalid("need at least two labelled items".into()));
    }
    let means: Vec<Vec<f64>> = items
        .iter()
        .map(|x| {
            let mut m = vec![0.0; x.n_dims()];
            for f in x.frames() {
                for (a, &b) in m.iter_mut().zip(f) {
                    *a += b as f64;
                }
            }
            m.iter_mut().for_each(|v| *v /= x.n_frames() as f64);
            m
        })
        .collect();
    let (mut within, mut n_within, mut between, mut n_between) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..means.len() {
        for j in i + 1..means.len() {
            let d = means[i]
                .iter()
                .zip(&means[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if labels[i] == labels[j] {
                within += d;
                n_within += 1;
            } else {
                between += d;
                n_between += 1;
            }
        }
    }
    if n_within == 0 || n_between == 0 || between == 0.0 {
        return Err(Error::Invalid("separability needs within- and between-class pairs".into()));
    }
    Ok((within / n_within as f64) / (between / n_between as f64))
}

/// Separability of the generated word instances (both splits).
pub fn class_separability(corpus: &SynthCorpus) -> Result<f64> {
    let labels: Vec<usize> = corpus
        .records
        .iter()
        .map(|r| corpus.classes.iter().position(|c| c.word == r.word).unwrap_or(0))
        .collect();
    separability(&corpus.features, &labels)
}

impl SynthCorpus {
    /// The corpus as the experiments see it, without a round trip through disk.
    pub fn data(&self) -> CorpusData {
        let split = |want: Split| {
            self.records
                .iter()
                .zip(&self.features)
                .filter(|(r, _)| r.split == want)
                .map(|(r, f)| Segment {
                    record: r.clone(),
                    features: f.clone(),
                })
                .collect()
        };
        let search = self
            .utterances
            .iter()
            .map(|(path, features)| Utterance {
                path: path.clone(),
                features: features.clone(),
                words: self.search.iter().filter(|r| &r.feature_path == path).cloned().collect(),
            })
            .collect();
        CorpusData {
            train: split(Split::Train),
            test: split(Split::Test),
            search,
            lexicon: self.lexicon(),
        }
    }
}
