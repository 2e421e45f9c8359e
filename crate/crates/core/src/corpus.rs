//! Loading word segments and pronunciations from manifests on disk.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use crate::encoders::PhonemeSequence;
use crate::error::{Error, Result};
use crate::frontend::{read_features, read_manifest, FeatureSequence, ManifestRecord};

/// Word → phoneme ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon {
    entries: BTreeMap<String, PhonemeSequence>,
}

impl Lexicon {
    pub fn new(entries: BTreeMap<String, PhonemeSequence>) -> Self {
        Self { entries }
    }

    pub fn get(&self, word: &str) -> Result<&PhonemeSequence> {
        self.entries
            .get(word)
            .ok_or_else(|| Error::Invalid(format!("word {word:?} missing from lexicon")))
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &PhonemeSequence)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json: BTreeMap<&str, &[usize]> =
            self.entries.iter().map(|(k, v)| (k.as_str(), v.ids())).collect();
        fs::write(path, serde_json::to_string_pretty(&json)? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: BTreeMap<String, Vec<usize>> = serde_json::from_str(&text)?;
        Ok(Self::new(
            raw.into_iter().map(|(k, v)| (k, PhonemeSequence(v))).collect(),
        ))
    }
}

/// A manifest record with its features loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub record: ManifestRecord,
    pub features: FeatureSequence,
}

/// Loads each record's span. Feature paths are resolved against `base_dir`;
/// files shared by several records (utterances) are read once.
pub fn load_segments(records: &[ManifestRecord], base_dir: impl AsRef<Path>) -> Result<Vec<Segment>> {
    let base = base_dir.as_ref();
    let mut cache: HashMap<&str, FeatureSequence> = HashMap::new();
    let mut out = Vec::with_capacity(records.len());
    for rec in records {
        if !cache.contains_key(rec.feature_path.as_str()) {
            let feats = read_features(resolve(base, &rec.feature_path))?;
            cache.insert(rec.feature_path.as_str(), feats);
        }
        let file = &cache[rec.feature_path.as_str()];
        let features = file.slice_seconds(rec.start_s, rec.end_s).ok_or_else(|| {
            Error::Invalid(format!(
                "record {} spans no frames of {} ({} frames)",
                rec.id,
                rec.feature_path,
                file.n_frames()
            ))
        })?;
        out.push(Segment {
            record: rec.clone(),
            features,
        });
    }
    Ok(out)
}

pub fn resolve(base: &Path, path: &str) -> PathBuf {
    let p = Path::new(path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Reads a manifest and its segments; paths are relative to the manifest's directory.
pub fn load_manifest_segments(manifest: impl AsRef<Path>) -> Result<Vec<Segment>> {
    let manifest = manifest.as_ref();
    let records = read_manifest(manifest)?;
    load_segments(&records, manifest.parent().unwrap_or(Path::new(".")))
}

/// Whole feature files referenced by `records`, in first-seen order, paired with
/// the words aligned inside each.
pub fn load_utterances(
    records: &[ManifestRecord],
    base_dir: impl AsRef<Path>,
) -> Result<Vec<Utterance>> {
    let base = base_dir.as_ref();
    let mut order: Vec<&str> = Vec::new();
    let mut words: HashMap<&str, Vec<ManifestRecord>> = HashMap::new();
    for rec in records {
        let entry = words.entry(rec.feature_path.as_str()).or_default();
        if entry.is_empty() {
            order.push(rec.feature_path.as_str());
        }
        entry.push(rec.clone());
    }
    order
        .into_iter()
        .map(|path| {
            Ok(Utterance {
                path: path.to_string(),
                features: read_features(resolve(base, path))?,
                words: words.remove(path).unwrap_or_default(),
            })
        })
        .collect()
}

/// A search utterance with its word alignments.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub path: String,
    pub features: FeatureSequence,
    pub words: Vec<ManifestRecord>,
}

impl Utterance {
    pub fn contains_word(&self, word: &str) -> bool {
        self.words.iter().any(|w| w.word.eq_ignore_ascii_case(word))
    }

    /// Feature spans of each aligned word.
    pub fn aligned_segments(&self) -> Vec<FeatureSequence> {
        self.words
            .iter()
            .filter_map(|w| self.features.slice_seconds(w.start_s, w.end_s))
            .collect()
    }
}

/// Manifest file names inside a corpus directory.
pub const TRAIN_MANIFEST: &str = "train.jsonl";
pub const TEST_MANIFEST: &str = "test.jsonl";
pub const SEARCH_MANIFEST: &str = "search.jsonl";
pub const LEXICON_FILE: &str = "lexicon.json";

/// Everything the experiments read from a corpus: both splits, the search
/// utterances (possibly none) and the lexicon.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusData {
    pub train: Vec<Segment>,
    pub test: Vec<Segment>,
    pub search: Vec<Utterance>,
    pub lexicon: Lexicon,
}

impl CorpusData {
    /// Reads a directory laid out like the synthetic generator's output.
    /// `search.jsonl` is optional.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let train = load_segments(&read_manifest(dir.join(TRAIN_MANIFEST))?, dir)?;
        let test = load_segments(&read_manifest(dir.join(TEST_MANIFEST))?, dir)?;
        let search_path = dir.join(SEARCH_MANIFEST);
        let search = if search_path.exists() {
            load_utterances(&read_manifest(&search_path)?, dir)?
        } else {
            Vec::new()
        };
        Ok(Self {
            train,
            test,
            search,
            lexicon: Lexicon::load(dir.join(LEXICON_FILE))?,
        })
    }

    pub fn train_records(&self) -> Vec<ManifestRecord> {
        self.train.iter().map(|s| s.record.clone()).collect()
    }

    pub fn test_records(&self) -> Vec<ManifestRecord> {
        self.test.iter().map(|s| s.record.clone()).collect()
    }
}
