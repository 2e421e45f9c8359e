use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoders::{dot, norm, EmbeddingBatch};
use crate::error::{Error, Result};
use crate::frontend::ManifestRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VocabClass {
    Iv,
    Oov,
}

impl VocabClass {
    pub const ALL: [VocabClass; 2] = [VocabClass::Iv, VocabClass::Oov];

    pub fn as_str(self) -> &'static str {
        match self {
            VocabClass::Iv => "iv",
            VocabClass::Oov => "oov",
        }
    }
}

impl fmt::Display for VocabClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn fold(word: &str) -> String {
    word.to_lowercase()
}

/// Vocabulary class of every test word, keyed by its case-folded label.
pub fn iv_oov_split(train: &[ManifestRecord], test: &[ManifestRecord]) -> BTreeMap<String, VocabClass> {
    let seen: std::collections::HashSet<String> = train.iter().map(|r| fold(&r.word)).collect();
    test.iter()
        .map(|r| {
            let w = fold(&r.word);
            let class = if seen.contains(&w) { VocabClass::Iv } else { VocabClass::Oov };
            (w, class)
        })
        .collect()
}

/// Pairs of ids referenced by index, with labels and (after scoring) scores.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialSet {
    pub ids: Vec<String>,
    pub pairs: Vec<(u32, u32)>,
    pub labels: Vec<bool>,
    pub scores: Vec<f64>,
}

impl TrialSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn n_positive(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn n_negative(&self) -> usize {
        self.len() - self.n_positive()
    }

    pub fn id_a(&self, k: usize) -> &str {
        &self.ids[self.pairs[k].0 as usize]
    }

    pub fn id_b(&self, k: usize) -> &str {
        &self.ids[self.pairs[k].1 as usize]
    }

    /// CSV `id_a,id_b,label,score`; the score column is empty before scoring.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut body = || -> std::io::Result<()> {
            writeln!(w, "id_a,id_b,label,score")?;
            for k in 0..self.len() {
                let label = if self.labels[k] { "positive" } else { "negative" };
                match self.scores.get(k) {
                    Some(s) => writeln!(w, "{},{},{},{}", self.id_a(k), self.id_b(k), label, s)?,
                    None => writeln!(w, "{},{},{},", self.id_a(k), self.id_b(k), label)?,
                }
            }
            w.flush()
        };
        body().map_err(|e| Error::io(path, e))
    }
}

/// All unordered pairs of `records` whose words fall in `class`; positive when
/// the words match.
pub fn build_wd_trials(
    records: &[ManifestRecord],
    vocab: &BTreeMap<String, VocabClass>,
    class: VocabClass,
) -> TrialSet {
    let kept: Vec<(&ManifestRecord, String)> = records
        .iter()
        .map(|r| (r, fold(&r.word)))
        .filter(|(_, w)| vocab.get(w) == Some(&class))
        .collect();
    let t = kept.len();
    let mut set = TrialSet {
        ids: kept.iter().map(|(r, _)| r.id.clone()).collect(),
        pairs: Vec::with_capacity(t * t.saturating_sub(1) / 2),
        labels: Vec::with_capacity(t * t.saturating_sub(1) / 2),
        scores: Vec::new(),
    };
    for a in 0..t {
        for b in a + 1..t {
            set.pairs.push((a as u32, b as u32));
            set.labels.push(kept[a].1 == kept[b].1);
        }
    }
    set
}

/// Cosine similarity of every trial pair. Output order follows the trial order
/// whatever the worker count.
pub fn score_trials(trials: &mut TrialSet, embeddings: &EmbeddingBatch) -> Result<()> {
    let lookup: HashMap<&str, usize> = embeddings.ids().iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let rows: Vec<usize> = trials
        .ids
        .iter()
        .map(|id| lookup.get(id.as_str()).copied().ok_or_else(|| Error::MissingEmbedding(id.clone())))
        .collect::<Result<_>>()?;
    let norms: Vec<f64> = rows.iter().map(|&r| norm(embeddings.row(r))).collect();
    trials.scores = trials
        .pairs
        .par_iter()
        .with_min_len(4096)
        .map(|&(a, b)| pair_cosine(embeddings, &rows, &norms, a as usize, b as usize))
        .collect();
    Ok(())
}

/// Same as [`score_trials`] on a single thread.
pub fn score_trials_sequential(trials: &mut TrialSet, embeddings: &EmbeddingBatch) -> Result<()> {
    let lookup: HashMap<&str, usize> = embeddings.ids().iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut rows = Vec::with_capacity(trials.ids.len());
    for id in &trials.ids {
        rows.push(*lookup.get(id.as_str()).ok_or_else(|| Error::MissingEmbedding(id.clone()))?);
    }
    let norms: Vec<f64> = rows.iter().map(|&r| norm(embeddings.row(r))).collect();
    let mut scores = Vec::with_capacity(trials.len());
    for &(a, b) in &trials.pairs {
        scores.push(pair_cosine(embeddings, &rows, &norms, a as usize, b as usize));
    }
    trials.scores = scores;
    Ok(())
}

fn pair_cosine(e: &EmbeddingBatch, rows: &[usize], norms: &[f64], a: usize, b: usize) -> f64 {
    let denom = norms[a] * norms[b];
    if denom == 0.0 {
        return 0.0;
    }
    (dot(e.row(rows[a]), e.row(rows[b])) / denom).clamp(-1.0, 1.0)
}
