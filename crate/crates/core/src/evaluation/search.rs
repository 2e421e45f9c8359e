use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::corpus::{Lexicon, Segment, Utterance};
use crate::encoders::{dot, encode_audio, encode_text, norm, EncoderConfig, ParamStore};
use crate::error::{Error, Result};
use crate::frontend::{FeatureSequence, FRAME_SHIFT_S};

use super::trials::{fold, TrialSet, VocabClass};

/// Window lengths of the search tables, in seconds.
pub const DEFAULT_WINDOWS: [f64; 4] = [0.2, 0.3, 0.4, 0.6];
/// Hop as a fraction of the window length.
pub const HOP_FRACTION: f64 = 0.5;

/// Fixed-length windows over `utt`. A final partial window is kept when it spans
/// at least half a window; an utterance no longer than one window yields itself.
pub fn segment_windows(utt: &FeatureSequence, window_s: f64, hop_s: f64) -> Result<Vec<FeatureSequence>> {
    if !(window_s > 0.0 && hop_s > 0.0) {
        return Err(Error::Invalid(format!("window {window_s} s and hop {hop_s} s must be positive")));
    }
    let w = ((window_s / FRAME_SHIFT_S).round() as usize).max(1);
    let hop = ((hop_s / FRAME_SHIFT_S).round() as usize).max(1);
    let t = utt.n_frames();
    if t <= w {
        return Ok(vec![utt.clone()]);
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start + w <= t {
        out.push(utt.slice(start, start + w).expect("in range"));
        start += hop;
    }
    if start < t && 2 * (t - start) >= w {
        out.push(utt.slice(start, t).expect("in range"));
    }
    Ok(out)
}

/// Highest cosine between the query and any window.
pub fn std_score(query: &[f64], windows: &[Vec<f64>]) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::Invalid("no windows to score".into()));
    }
    let nq = norm(query);
    Ok(windows
        .iter()
        .map(|w| {
            let d = nq * norm(w);
            if d == 0.0 {
                0.0
            } else {
                (dot(query, w) / d).clamp(-1.0, 1.0)
            }
        })
        .fold(f64::NEG_INFINITY, f64::max))
}

/// How the search utterances are cut before embedding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Segmentation {
    /// Windows of this many seconds with a half-window hop.
    Window(f64),
    /// The manifest's word boundaries.
    Aligned,
}

impl Segmentation {
    pub fn label(&self) -> String {
        match self {
            Segmentation::Window(s) => format!("{s}"),
            Segmentation::Aligned => "aligned".into(),
        }
    }

    pub fn segments(&self, utt: &Utterance) -> Result<Vec<FeatureSequence>> {
        match *self {
            Segmentation::Window(s) => segment_windows(&utt.features, s, s * HOP_FRACTION),
            Segmentation::Aligned => {
                let segs = utt.aligned_segments();
                if segs.is_empty() {
                    return Err(Error::Invalid(format!("utterance {} has no aligned words", utt.path)));
                }
                Ok(segs)
            }
        }
    }
}

/// Parses `0.3`-style window lengths and the word `aligned`.
pub fn parse_segmentations(spec: &str) -> Result<Vec<Segmentation>> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            if s.eq_ignore_ascii_case("aligned") {
                return Ok(Segmentation::Aligned);
            }
            match s.parse::<f64>() {
                Ok(v) if v > 0.0 => Ok(Segmentation::Window(v)),
                _ => Err(Error::Config(format!("bad window {s:?}"))),
            }
        })
        .collect()
}

/// Embeddings of every segment of every utterance, one list per utterance.
pub fn embed_segments(
    params: &ParamStore,
    enc: &EncoderConfig,
    utterances: &[Utterance],
    seg: Segmentation,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let mut all = Vec::new();
    let mut counts = Vec::with_capacity(utterances.len());
    for u in utterances {
        let s = seg.segments(u)?;
        counts.push(s.len());
        all.extend(s);
    }
    let e = encode_audio(params, enc, &all)?;
    let mut rows = e.rows().map(<[f64]>::to_vec);
    Ok(counts.iter().map(|&c| rows.by_ref().take(c).collect()).collect())
}

/// A query word with its embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchQuery {
    pub id: String,
    pub word: String,
    pub embedding: Vec<f64>,
}

pub fn spoken_queries(params: &ParamStore, enc: &EncoderConfig, segments: &[Segment]) -> Result<Vec<SearchQuery>> {
    let feats: Vec<FeatureSequence> = segments.iter().map(|s| s.features.clone()).collect();
    let e = encode_audio(params, enc, &feats)?;
    Ok(segments
        .iter()
        .zip(e.rows())
        .map(|(s, row)| SearchQuery {
            id: s.record.id.clone(),
            word: s.record.word.clone(),
            embedding: row.to_vec(),
        })
        .collect())
}

pub fn text_queries<'a>(
    params: &ParamStore,
    enc: &EncoderConfig,
    lexicon: &Lexicon,
    words: impl IntoIterator<Item = &'a str>,
) -> Result<Vec<SearchQuery>> {
    let words: Vec<&str> = words.into_iter().collect();
    let phonemes = words.iter().map(|w| lexicon.get(w).cloned()).collect::<Result<Vec<_>>>()?;
    let e = encode_text(params, enc, &phonemes)?;
    Ok(words
        .iter()
        .zip(e.rows())
        .map(|(w, row)| SearchQuery {
            id: format!("{}{w}", super::TEXT_ID_PREFIX),
            word: w.to_string(),
            embedding: row.to_vec(),
        })
        .collect())
}

/// Every (query, utterance) pair for queries in `class`; positive when the
/// utterance contains the query word.
pub fn search_trials(
    queries: &[SearchQuery],
    vocab: &BTreeMap<String, VocabClass>,
    class: VocabClass,
    utterances: &[Utterance],
    segment_embeddings: &[Vec<Vec<f64>>],
) -> Result<TrialSet> {
    let kept: Vec<&SearchQuery> = queries
        .iter()
        .filter(|q| vocab.get(&fold(&q.word)) == Some(&class))
        .collect();
    let nq = kept.len();
    let mut set = TrialSet {
        ids: kept.iter().map(|q| q.id.clone()).chain(utterances.iter().map(|u| u.path.clone())).collect(),
        ..TrialSet::default()
    };
    for (qi, q) in kept.iter().enumerate() {
        for (ui, u) in utterances.iter().enumerate() {
            set.pairs.push((qi as u32, (nq + ui) as u32));
            set.labels.push(u.contains_word(&q.word));
        }
    }
    set.scores = set
        .pairs
        .par_iter()
        .map(|&(qi, ui)| std_score(&kept[qi as usize].embedding, &segment_embeddings[ui as usize - nq]))
        .collect::<Result<_>>()?;
    Ok(set)
}
