//! Word discrimination (average precision) and windowed spoken term detection
//! and keyword search (equal error rate).

mod embio;
mod histogram;
mod metrics;
mod search;
mod trials;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Lexicon, Segment, Utterance};
use crate::encoders::{encode_audio, encode_text, EmbeddingBatch, EncoderConfig, ParamStore};
use crate::error::{Error, Result};
use crate::frontend::{FeatureSequence, ManifestRecord};

pub use embio::{embeddings_from_bytes, embeddings_to_bytes, read_embeddings, write_embeddings, EMBEDDING_MAGIC};
pub use histogram::{bin_of, score_histogram, score_stats, LabelStats, ScoreHistogram, ScoreStats, HISTOGRAM_BINS};
pub use metrics::{average_precision, equal_error_rate};
pub use search::{
    embed_segments, parse_segmentations, search_trials, segment_windows, spoken_queries, std_score, text_queries,
    SearchQuery, Segmentation, DEFAULT_WINDOWS, HOP_FRACTION,
};
pub use trials::{
    build_wd_trials, fold, iv_oov_split, score_trials, score_trials_sequential, TrialSet, VocabClass,
};

/// Prefix of text-view rows in an embedding dump.
pub const TEXT_ID_PREFIX: &str = "text:";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialCounts {
    pub positive: usize,
    pub negative: usize,
}

impl TrialCounts {
    pub fn of(t: &TrialSet) -> Self {
        Self {
            positive: t.n_positive(),
            negative: t.n_negative(),
        }
    }
}

/// Metrics keyed by vocabulary class (`iv`, `oov`) and, for search, by task
/// (`std`, `kws`) and segmentation (`0.3`, `aligned`). `counts` and
/// `score_stats` use slash-joined keys such as `wd/iv` or `std/oov/0.3`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(default)]
    pub ap: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub ap_cross: BTreeMap<String, f64>,
    #[serde(default)]
    pub eer: BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>>,
    #[serde(default)]
    pub counts: BTreeMap<String, TrialCounts>,
    #[serde(default)]
    pub score_stats: BTreeMap<String, ScoreStats>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Ok(serde_json::from_str(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)?)
    }

    /// Folds `other` into `self`; entries of `other` win on key clashes.
    pub fn merge(&mut self, other: EvalReport) {
        self.ap.extend(other.ap);
        self.ap_cross.extend(other.ap_cross);
        for (task, by_vocab) in other.eer {
            let t = self.eer.entry(task).or_default();
            for (vocab, by_window) in by_vocab {
                t.entry(vocab).or_default().extend(by_window);
            }
        }
        self.counts.extend(other.counts);
        self.score_stats.extend(other.score_stats);
    }

    fn record(&mut self, key: String, t: &TrialSet) {
        self.counts.insert(key.clone(), TrialCounts::of(t));
        self.score_stats.insert(key, score_stats(&t.scores, &t.labels));
    }
}

/// A scored trial set and the report key it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTrials {
    pub key: String,
    pub trials: TrialSet,
}

/// Acoustic word discrimination on the test records, split into IV and OOV by the
/// training vocabulary. If `embeddings` also holds text rows (`text:<word>`), the
/// cross-view task pairs each such row with every test segment of the same class.
pub fn eval_wd(
    embeddings: &EmbeddingBatch,
    train: &[ManifestRecord],
    test: &[ManifestRecord],
) -> Result<(EvalReport, Vec<ScoredTrials>)> {
    let vocab = iv_oov_split(train, test);
    let text_rows: BTreeMap<String, String> = embeddings
        .ids()
        .iter()
        .filter_map(|id| id.strip_prefix(TEXT_ID_PREFIX).map(|w| (fold(w), id.clone())))
        .collect();
    let mut report = EvalReport::default();
    let mut scored = Vec::new();
    for class in VocabClass::ALL {
        let mut trials = build_wd_trials(test, &vocab, class);
        if trials.is_empty() {
            continue;
        }
        score_trials(&mut trials, embeddings)?;
        let key = format!("wd/{class}");
        if trials.n_positive() > 0 {
            report.ap.insert(class.to_string(), average_precision(&trials.scores, &trials.labels)?);
        }
        report.record(key.clone(), &trials);
        scored.push(ScoredTrials { key, trials });

        if text_rows.is_empty() {
            continue;
        }
        let mut cross = cross_view_trials(test, &vocab, class, &text_rows)?;
        if cross.is_empty() {
            continue;
        }
        score_trials(&mut cross, embeddings)?;
        let key = format!("cross/{class}");
        if cross.n_positive() > 0 {
            report.ap_cross.insert(class.to_string(), average_precision(&cross.scores, &cross.labels)?);
        }
        report.record(key.clone(), &cross);
        scored.push(ScoredTrials { key, trials: cross });
    }
    Ok((report, scored))
}

fn cross_view_trials(
    test: &[ManifestRecord],
    vocab: &BTreeMap<String, VocabClass>,
    class: VocabClass,
    text_rows: &BTreeMap<String, String>,
) -> Result<TrialSet> {
    let segs: Vec<(&ManifestRecord, String)> = test
        .iter()
        .map(|r| (r, fold(&r.word)))
        .filter(|(_, w)| vocab.get(w) == Some(&class))
        .collect();
    let words: BTreeSet<&String> = segs.iter().map(|(_, w)| w).collect();
    let mut texts = Vec::with_capacity(words.len());
    for w in &words {
        let id = text_rows.get(*w).ok_or_else(|| Error::MissingEmbedding(format!("{TEXT_ID_PREFIX}{w}")))?;
        texts.push(((*w).clone(), id.clone()));
    }
    let nt = texts.len();
    let mut set = TrialSet {
        ids: texts.iter().map(|(_, id)| id.clone()).chain(segs.iter().map(|(r, _)| r.id.clone())).collect(),
        ..TrialSet::default()
    };
    for (ti, (w, _)) in texts.iter().enumerate() {
        for (si, (_, sw)) in segs.iter().enumerate() {
            set.pairs.push((ti as u32, (nt + si) as u32));
            set.labels.push(w == sw);
        }
    }
    Ok(set)
}

/// Audio embeddings of `segments` (ids from the records), followed by text rows
/// for each distinct word when a lexicon is given.
pub fn embed_manifest(
    params: &ParamStore,
    enc: &EncoderConfig,
    segments: &[Segment],
    lexicon: Option<&Lexicon>,
) -> Result<EmbeddingBatch> {
    let feats: Vec<FeatureSequence> = segments.iter().map(|s| s.features.clone()).collect();
    let audio = encode_audio(params, enc, &feats)?;
    let mut ids: Vec<String> = segments.iter().map(|s| s.record.id.clone()).collect();
    let mut rows: Vec<Vec<f64>> = audio.rows().map(<[f64]>::to_vec).collect();
    if let Some(lex) = lexicon {
        let words: BTreeSet<&str> = segments.iter().map(|s| s.record.word.as_str()).collect();
        let phonemes = words.iter().map(|w| lex.get(w).cloned()).collect::<Result<Vec<_>>>()?;
        let text = encode_text(params, enc, &phonemes)?;
        for (w, row) in words.iter().zip(text.rows()) {
            ids.push(format!("{TEXT_ID_PREFIX}{w}"));
            rows.push(row.to_vec());
        }
    }
    EmbeddingBatch::from_rows(rows)?.with_ids(ids)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchTask {
    /// Spoken queries.
    Std,
    /// Written queries through the text encoder.
    Kws,
}

impl SearchTask {
    pub fn as_str(self) -> &'static str {
        match self {
            SearchTask::Std => "std",
            SearchTask::Kws => "kws",
        }
    }
}

/// EER of every (query, utterance) trial per vocabulary class and segmentation.
/// Vocabulary classes come from `train` versus the query words.
pub fn eval_search(
    task: SearchTask,
    params: &ParamStore,
    enc: &EncoderConfig,
    queries: &[SearchQuery],
    train: &[ManifestRecord],
    utterances: &[Utterance],
    segmentations: &[Segmentation],
) -> Result<(EvalReport, Vec<ScoredTrials>)> {
    if utterances.is_empty() {
        return Err(Error::Invalid("no search utterances".into()));
    }
    let seen: BTreeSet<String> = train.iter().map(|r| fold(&r.word)).collect();
    let vocab: BTreeMap<String, VocabClass> = queries
        .iter()
        .map(|q| {
            let w = fold(&q.word);
            let c = if seen.contains(&w) { VocabClass::Iv } else { VocabClass::Oov };
            (w, c)
        })
        .collect();
    let mut report = EvalReport::default();
    let mut scored = Vec::new();
    for &seg in segmentations {
        let emb = embed_segments(params, enc, utterances, seg)?;
        for class in VocabClass::ALL {
            let trials = search_trials(queries, &vocab, class, utterances, &emb)?;
            if trials.is_empty() {
                continue;
            }
            let key = format!("{}/{class}/{}", task.as_str(), seg.label());
            if trials.n_positive() > 0 && trials.n_negative() > 0 {
                let eer = equal_error_rate(&trials.scores, &trials.labels)?;
                report
                    .eer
                    .entry(task.as_str().into())
                    .or_default()
                    .entry(class.to_string())
                    .or_default()
                    .insert(seg.label(), eer);
            }
            report.record(key.clone(), &trials);
            scored.push(ScoredTrials { key, trials });
        }
    }
    Ok((report, scored))
}

/// Spoken term detection with `segments` as queries.
pub fn eval_std(
    params: &ParamStore,
    enc: &EncoderConfig,
    segments: &[Segment],
    train: &[ManifestRecord],
    utterances: &[Utterance],
    segmentations: &[Segmentation],
) -> Result<(EvalReport, Vec<ScoredTrials>)> {
    let queries = spoken_queries(params, enc, segments)?;
    eval_search(SearchTask::Std, params, enc, &queries, train, utterances, segmentations)
}

/// Keyword search with one written query per distinct word of `words`.
#[allow(clippy::too_many_arguments)]
pub fn eval_kws<'a>(
    params: &ParamStore,
    enc: &EncoderConfig,
    lexicon: &Lexicon,
    words: impl IntoIterator<Item = &'a str>,
    train: &[ManifestRecord],
    utterances: &[Utterance],
    segmentations: &[Segmentation],
) -> Result<(EvalReport, Vec<ScoredTrials>)> {
    let distinct: BTreeSet<&str> = words.into_iter().collect();
    let queries = text_queries(params, enc, lexicon, distinct)?;
    eval_search(SearchTask::Kws, params, enc, &queries, train, utterances, segmentations)
}
