//! Run configuration read from JSON with flat dotted keys such as `train.lr_max`.
//!
//! Precedence, lowest first: built-in defaults, the config file, command-line flags.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::encoders::{EncoderConfig, EncoderKind};
use crate::error::{Error, Result};
use crate::evaluation::{Segmentation, DEFAULT_WINDOWS};
use crate::frontend::MelConfig;
use crate::synth::SynthConfig;
use crate::training::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Window lengths in seconds; the hop is half a window.
    pub windows: Vec<f64>,
    /// Also score the manifest's word boundaries.
    pub aligned: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            windows: DEFAULT_WINDOWS.to_vec(),
            aligned: true,
        }
    }
}

impl EvalConfig {
    pub fn segmentations(&self) -> Vec<Segmentation> {
        let mut s: Vec<Segmentation> = self.windows.iter().map(|&w| Segmentation::Window(w)).collect();
        if self.aligned {
            s.push(Segmentation::Aligned);
        }
        s
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub corpus_dir: Option<String>,
    pub checkpoint: Option<String>,
    pub report: Option<String>,
}

/// Every setting of a run. `Default` is the desk-scale preset used on the
/// synthetic corpus; [`RunConfig::full_scale`] keeps the full-size settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub mel: MelConfig,
    pub eval: EvalConfig,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SynthConfig::default();
        Self {
            encoder: EncoderConfig {
                kind: EncoderKind::Pooled,
                text_kind: EncoderKind::Recurrent,
                hidden: 64,
                layers: 1,
                bidirectional: true,
                embed_dim: 32,
                feat_dim: synth.feat_dim,
                text_vocab: synth.phoneme_vocab_size,
                text_embed_dim: 64,
            },
            train: TrainConfig {
                batch_classes: 8,
                positives_per_class: 6,
                lr_max: 3e-2,
                ..TrainConfig::default()
            },
            synth,
            mel: MelConfig::default(),
            eval: EvalConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl RunConfig {
    /// Full-size encoder and optimizer settings.
    pub fn full_scale() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            train: TrainConfig::default(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.encoder.validate()?;
        self.train.validate()?;
        self.mel.validate()?;
        if self.eval.windows.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Config("eval.windows must be positive".into()));
        }
        if self.eval.windows.is_empty() && !self.eval.aligned {
            return Err(Error::Config("eval needs at least one window or eval.aligned".into()));
        }
        Ok(())
    }

    /// Parses flat dotted keys over the defaults. Unknown keys and values of the
    /// wrong JSON type are rejected with the key in the message.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let parsed: Value =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config is not valid JSON: {e}")))?;
        let Value::Object(entries) = parsed else {
            return Err(Error::Config("config must be a JSON object".into()));
        };
        let mut tree = serde_json::to_value(Self::default())?;
        for (key, value) in entries {
            set_dotted(&mut tree, &key, value)?;
        }
        let cfg: Self = serde_json::from_value(tree).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json_str(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    /// The configuration as flat dotted keys, in sorted order.
    pub fn to_flat_json(&self) -> Result<String> {
        let mut flat = Map::new();
        flatten("", &serde_json::to_value(self)?, &mut flat);
        Ok(serde_json::to_string_pretty(&Value::Object(flat))? + "\n")
    }
}

fn kind_of(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn set_dotted(tree: &mut Value, key: &str, value: Value) -> Result<()> {
    let unknown = || Error::Config(format!("unknown config key {key:?}"));
    let mut node = tree;
    for part in key.split('.') {
        node = node.as_object_mut().ok_or_else(unknown)?.get_mut(part).ok_or_else(unknown)?;
    }
    let compatible = match (&*node, &value) {
        (Value::Object(_), _) => {
            return Err(Error::Config(format!("config key {key:?} names a section; set its fields with dotted keys")))
        }
        (Value::Null, _) | (_, Value::Null) => true,
        (a, b) => kind_of(a) == kind_of(b),
    };
    if !compatible {
        return Err(Error::Config(format!(
            "config key {key:?} expects a {}, got a {}",
            kind_of(node),
            kind_of(&value)
        )));
    }
    *node = value;
    Ok(())
}

fn flatten(prefix: &str, v: &Value, out: &mut Map<String, Value>) {
    match v {
        Value::Object(m) => {
            for (k, child) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, child, out);
            }
        }
        _ => {
            out.insert(prefix.to_string(), v.clone());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
        RunConfig::full_scale().validate().unwrap();
        assert_eq!(RunConfig::full_scale().train.batch_classes, 128);
    }

    #[test]
    fn dotted_override() {
        let c = RunConfig::from_json_str(r#"{"train.lr_max": 0.001, "synth.seed": 7, "paths.report": "r.json"}"#)
            .unwrap();
        assert_eq!(c.train.lr_max, 1e-3);
        assert_eq!(c.synth.seed, 7);
        assert_eq!(c.paths.report.as_deref(), Some("r.json"));
        assert_eq!(c.train.epochs, 30);
    }

    #[test]
    fn unknown_key_is_named() {
        let e = RunConfig::from_json_str(r#"{"train.lr_maxx": 1}"#).unwrap_err();
        assert!(matches!(e, Error::Config(_)));
        assert!(e.to_string().contains("train.lr_maxx"), "{e}");
        let e = RunConfig::from_json_str(r#"{"nope": 1}"#).unwrap_err();
        assert!(e.to_string().contains("nope"));
    }

    #[test]
    fn wrong_type_is_named() {
        let e = RunConfig::from_json_str(r#"{"train.epochs": "ten"}"#).unwrap_err();
        assert!(e.to_string().contains("train.epochs"), "{e}");
        let e = RunConfig::from_json_str(r#"{"train": {}}"#).unwrap_err();
        assert!(e.to_string().contains("section"));
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(RunConfig::from_json_str(r#"{"train.warmup_frac": 1.5}"#).is_err());
        assert!(RunConfig::from_json_str(r#"{"encoder.kind": "transformer"}"#).is_err());
        assert!(RunConfig::from_json_str("[1]").is_err());
    }

    #[test]
    fn flat_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_json_str(&c.to_flat_json().unwrap()).unwrap(), c);
    }
}
