use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::corpus::Lexicon;
use crate::encoders::PhonemeSequence;
use crate::error::{Error, Result};
use crate::frontend::{ManifestRecord, Split};

/// One class-balanced batch: `N` labels, `N × M` record ids (class-major) and
/// the `N` phoneme strings.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledBatch {
    pub classes: Vec<String>,
    pub instances: Vec<Vec<String>>,
    pub texts: Vec<PhonemeSequence>,
    /// Some class had fewer than `M` instances and was sampled with replacement.
    pub with_replacement: bool,
}

/// Train-split record indices grouped by word, in sorted word order.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    words: Vec<String>,
    members: Vec<Vec<usize>>,
    texts: Vec<PhonemeSequence>,
}

impl BatchSampler {
    pub fn new(records: &[ManifestRecord], lexicon: &Lexicon) -> Result<Self> {
        let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            if r.split == Split::Train {
                groups.entry(r.word.as_str()).or_default().push(i);
            }
        }
        let mut words = Vec::with_capacity(groups.len());
        let mut members = Vec::with_capacity(groups.len());
        let mut texts = Vec::with_capacity(groups.len());
        for (w, idx) in groups {
            texts.push(lexicon.get(w)?.clone());
            words.push(w.to_string());
            members.push(idx);
        }
        Ok(Self { words, members, texts })
    }

    pub fn n_classes(&self) -> usize {
        self.words.len()
    }

    /// Draws `n` distinct classes and `m` instances of each. Returns record
    /// indices (class-major) alongside the batch description.
    pub fn sample<R: Rng>(
        &self,
        records: &[ManifestRecord],
        n: usize,
        m: usize,
        rng: &mut R,
    ) -> Result<(Vec<usize>, SampledBatch)> {
        if n > self.words.len() {
            return Err(Error::Invalid(format!(
                "need {n} training classes, corpus has {}",
                self.words.len()
            )));
        }
        let picked = index::sample(rng, self.words.len(), n).into_vec();
        let mut indices = Vec::with_capacity(n * m);
        let mut batch = SampledBatch {
            classes: Vec::with_capacity(n),
            instances: Vec::with_capacity(n),
            texts: Vec::with_capacity(n),
            with_replacement: false,
        };
        for c in picked {
            let pool = &self.members[c];
            let chosen: Vec<usize> = if pool.len() >= m {
                index::sample(rng, pool.len(), m).into_iter().map(|k| pool[k]).collect()
            } else {
                batch.with_replacement = true;
                let mut v: Vec<usize> = (0..m).map(|_| *pool.choose(rng).expect("non-empty group")).collect();
                v.shuffle(rng);
                v
            };
            batch.classes.push(self.words[c].clone());
            batch.texts.push(self.texts[c].clone());
            batch
                .instances
                .push(chosen.iter().map(|&i| records[i].id.clone()).collect());
            indices.extend(chosen);
        }
        Ok((indices, batch))
    }
}

/// Samples one batch from the train split of `records`.
pub fn sample_batch<R: Rng>(
    records: &[ManifestRecord],
    lexicon: &Lexicon,
    n: usize,
    m: usize,
    rng: &mut R,
) -> Result<SampledBatch> {
    Ok(BatchSampler::new(records, lexicon)?.sample(records, n, m, rng)?.1)
}
