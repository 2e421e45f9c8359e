//! Audio and text encoders mapping variable-length inputs to unit-norm embeddings
//! in a shared space, with exact reverse-mode gradients.
//!
//! Each modality is `body -> linear projection -> L2 normalisation`. The body is
//! either a pooled perceptron (mean over frames, two tanh layers) or a stack of
//! gated recurrent layers whose final states are concatenated. Text inputs first
//! pass through a `K × V` phoneme embedding table.

mod gru;
mod ops;
mod params;
mod pooled;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::FeatureSequence;

pub use params::{ParamStore, Tensor, CHECKPOINT_MAGIC, LOG_TEMPERATURE};

pub(crate) use ops::{dot, norm};

/// Upper bound on `exp(τ)` applied in the forward pass.
pub const MAX_LOGIT_SCALE: f64 = 100.0;
/// Initial temperature scale `1 / 0.07`.
pub const INIT_LOGIT_SCALE: f64 = 1.0 / 0.07;

pub const AUDIO_PREFIX: &str = "audio";
pub const TEXT_PREFIX: &str = "text";
pub const TEXT_EMBEDDING: &str = "text.embed";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Pooled,
    Recurrent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    /// Body of the audio encoder.
    pub kind: EncoderKind,
    /// Body of the text encoder.
    pub text_kind: EncoderKind,
    pub hidden: usize,
    /// Recurrent depth; the pooled body always has two layers.
    pub layers: usize,
    pub bidirectional: bool,
    pub embed_dim: usize,
    /// Audio feature width F.
    pub feat_dim: usize,
    /// Phoneme inventory size K.
    pub text_vocab: usize,
    /// Phoneme embedding width V.
    pub text_embed_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            kind: EncoderKind::Pooled,
            text_kind: EncoderKind::Recurrent,
            hidden: 256,
            layers: 3,
            bidirectional: true,
            embed_dim: 512,
            feat_dim: 128,
            text_vocab: 40,
            text_embed_dim: 64,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("encoder.hidden", self.hidden),
            ("encoder.layers", self.layers),
            ("encoder.embed_dim", self.embed_dim),
            ("encoder.feat_dim", self.feat_dim),
            ("encoder.text_vocab", self.text_vocab),
            ("encoder.text_embed_dim", self.text_embed_dim),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    fn gru_shape(&self, input: usize) -> gru::GruShape {
        gru::GruShape {
            input,
            hidden: self.hidden,
            layers: self.layers,
            bidirectional: self.bidirectional,
        }
    }

    fn body_output(&self, kind: EncoderKind, input: usize) -> usize {
        match kind {
            EncoderKind::Pooled => self.hidden,
            EncoderKind::Recurrent => self.gru_shape(input).output_dim(),
        }
    }

    fn branch(&self, modality: Modality) -> (EncoderKind, usize, &'static str) {
        match modality {
            Modality::Audio => (self.kind, self.feat_dim, AUDIO_PREFIX),
            Modality::Text => (self.text_kind, self.text_embed_dim, TEXT_PREFIX),
        }
    }

    /// Every parameter name with its shape.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = vec![
            (LOG_TEMPERATURE.to_string(), vec![]),
            (TEXT_EMBEDDING.to_string(), vec![self.text_vocab, self.text_embed_dim]),
        ];
        for modality in [Modality::Audio, Modality::Text] {
            let (kind, input, prefix) = self.branch(modality);
            out.extend(match kind {
                EncoderKind::Pooled => pooled::param_shapes(prefix, input, self.hidden),
                EncoderKind::Recurrent => gru::param_shapes(prefix, self.gru_shape(input)),
            });
            out.push((
                format!("{prefix}.proj.w"),
                vec![self.embed_dim, self.body_output(kind, input)],
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Audio,
    Text,
}

/// Ordered phoneme ids of one keyword.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PhonemeSequence(pub Vec<usize>);

impl PhonemeSequence {
    pub fn ids(&self) -> &[usize] {
        &self.0
    }
}

/// B×D matrix of unit-norm rows with their ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    dim: usize,
    data: Vec<f64>,
    ids: Vec<String>,
}

impl EmbeddingBatch {
    /// Builds a batch from rows; ids default to row positions.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if dim == 0 || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Shape("embedding rows must share a positive width".into()));
        }
        let ids = (0..rows.len()).map(|i| i.to_string()).collect();
        Ok(Self {
            dim,
            data: rows.concat(),
            ids,
        })
    }

    pub fn with_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.len() {
            return Err(Error::Shape(format!(
                "{} ids for {} embeddings",
                ids.len(),
                self.len()
            )));
        }
        self.ids = ids;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// A dense input sequence for an encoder body.
pub(crate) struct Seq {
    pub n_rows: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Seq {
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
}

/// Inputs to one encoder.
#[derive(Debug, Clone, Copy)]
pub enum EncoderInput<'a> {
    Audio(&'a [FeatureSequence]),
    Text(&'a [PhonemeSequence]),
}

impl EncoderInput<'_> {
    pub fn modality(&self) -> Modality {
        match self {
            EncoderInput::Audio(_) => Modality::Audio,
            EncoderInput::Text(_) => Modality::Text,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            EncoderInput::Audio(b) => b.len(),
            EncoderInput::Text(b) => b.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `exp(τ)` clamped to `MAX_LOGIT_SCALE`, with its derivative w.r.t. `τ`
/// (zero once clamped).
pub fn logit_scale(tau: f64) -> (f64, f64) {
    let s = tau.exp();
    if s > MAX_LOGIT_SCALE {
        (MAX_LOGIT_SCALE, 0.0)
    } else {
        (s, s)
    }
}

pub fn log_temperature(params: &ParamStore) -> Result<f64> {
    Ok(params.get(LOG_TEMPERATURE)?.data()[0])
}

/// Xavier-uniform weights, zero biases, `τ = ln(1/0.07)`.
pub fn init_params(cfg: &EncoderConfig, seed: u64) -> Result<ParamStore> {
    cfg.validate()?;
    let mut shapes = cfg.param_shapes();
    shapes.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    for (name, shape) in shapes {
        let tensor = if name == LOG_TEMPERATURE {
            Tensor::scalar(INIT_LOGIT_SCALE.ln())
        } else if shape.len() == 1 {
            Tensor::zeros(shape)
        } else {
            let (fan_out, fan_in) = (shape[0], shape[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let n = fan_out * fan_in;
            Tensor::new(shape, (0..n).map(|_| rng.gen_range(-bound..bound)).collect())?
        };
        store.insert(name, tensor)?;
    }
    Ok(store)
}

/// Parameters that receive decoupled weight decay: everything except biases and `τ`.
pub fn is_decayed(name: &str) -> bool {
    if name == LOG_TEMPERATURE {
        return false;
    }
    let leaf = name.rsplit('.').next().unwrap_or(name);
    !leaf.starts_with('b')
}

enum BodyCache {
    Pooled(pooled::PooledCache),
    Recurrent(gru::GruCache),
}

struct SampleCache {
    body: BodyCache,
    hidden_out: Vec<f64>,
    pre_norm: Vec<f64>,
    embedding: Vec<f64>,
}

fn prepare(params: &ParamStore, cfg: &EncoderConfig, input: EncoderInput<'_>, i: usize) -> Result<Seq> {
    match input {
        EncoderInput::Audio(batch) => {
            let x = &batch[i];
            if x.n_dims() != cfg.feat_dim {
                return Err(Error::Shape(format!(
                    "audio input {i} has {} feature dims, encoder expects {}",
                    x.n_dims(),
                    cfg.feat_dim
                )));
            }
            Ok(Seq {
                n_rows: x.n_frames(),
                dim: x.n_dims(),
                data: x.as_slice().iter().map(|&v| v as f64).collect(),
            })
        }
        EncoderInput::Text(batch) => {
            let ids = batch[i].ids();
            if ids.is_empty() {
                return Err(Error::Invalid(format!("empty phoneme sequence at {i}")));
            }
            let table = params.get(TEXT_EMBEDDING)?.data();
            let v = cfg.text_embed_dim;
            let mut data = Vec::with_capacity(ids.len() * v);
            for &id in ids {
                if id >= cfg.text_vocab {
                    return Err(Error::Invalid(format!(
                        "phoneme id {id} outside vocabulary of {}",
                        cfg.text_vocab
                    )));
                }
                data.extend_from_slice(&table[id * v..(id + 1) * v]);
            }
            Ok(Seq {
                n_rows: ids.len(),
                dim: v,
                data,
            })
        }
    }
}

fn forward_one(
    params: &ParamStore,
    cfg: &EncoderConfig,
    input: EncoderInput<'_>,
    i: usize,
) -> Result<SampleCache> {
    let (kind, in_dim, prefix) = cfg.branch(input.modality());
    let seq = prepare(params, cfg, input, i)?;
    let (hidden_out, body) = match kind {
        EncoderKind::Pooled => {
            let (h, c) = pooled::forward(params, prefix, cfg.hidden, &seq)?;
            (h, BodyCache::Pooled(c))
        }
        EncoderKind::Recurrent => {
            let (h, c) = gru::forward(params, prefix, cfg.gru_shape(in_dim), &seq)?;
            (h, BodyCache::Recurrent(c))
        }
    };
    let proj = params.get(&format!("{prefix}.proj.w"))?.data();
    let pre_norm = ops::matvec(proj, cfg.embed_dim, hidden_out.len(), &hidden_out);
    let len = norm(&pre_norm);
    if !(len > 0.0) || !len.is_finite() {
        return Err(Error::Invalid(format!(
            "projection of input {i} has norm {len}, cannot normalise"
        )));
    }
    let embedding = pre_norm.iter().map(|v| v / len).collect();
    Ok(SampleCache {
        body,
        hidden_out,
        pre_norm,
        embedding,
    })
}

fn check_batch(input: EncoderInput<'_>) -> Result<()> {
    if input.is_empty() {
        return Err(Error::Invalid("empty batch".into()));
    }
    if let EncoderInput::Audio(batch) = input {
        if let Some(first) = batch.first() {
            if batch.iter().any(|x| x.n_dims() != first.n_dims()) {
                return Err(Error::Shape("inconsistent feature widths in batch".into()));
            }
        }
    }
    Ok(())
}

/// Forward pass; row `i` of the result embeds input `i`.
pub fn encode(params: &ParamStore, cfg: &EncoderConfig, input: EncoderInput<'_>) -> Result<EmbeddingBatch> {
    check_batch(input)?;
    let rows = (0..input.len())
        .into_par_iter()
        .map(|i| forward_one(params, cfg, input, i).map(|c| c.embedding))
        .collect::<Result<Vec<_>>>()?;
    EmbeddingBatch::from_rows(rows)
}

pub fn encode_audio(params: &ParamStore, cfg: &EncoderConfig, batch: &[FeatureSequence]) -> Result<EmbeddingBatch> {
    encode(params, cfg, EncoderInput::Audio(batch))
}

pub fn encode_text(params: &ParamStore, cfg: &EncoderConfig, batch: &[PhonemeSequence]) -> Result<EmbeddingBatch> {
    encode(params, cfg, EncoderInput::Text(batch))
}

fn backward_one(
    params: &ParamStore,
    cfg: &EncoderConfig,
    input: EncoderInput<'_>,
    i: usize,
    upstream: &[f64],
    grads: &mut ParamStore,
) -> Result<()> {
    let cache = forward_one(params, cfg, input, i)?;
    let (kind, _, prefix) = cfg.branch(input.modality());

    // d/dz of z/|z| applied to g: (g - (e·g) e) / |z|
    let len = norm(&cache.pre_norm);
    let eg = dot(&cache.embedding, upstream);
    let d_pre: Vec<f64> = upstream
        .iter()
        .zip(&cache.embedding)
        .map(|(g, e)| (g - eg * e) / len)
        .collect();

    let h = cache.hidden_out.len();
    let proj = params.get(&format!("{prefix}.proj.w"))?.data();
    ops::outer_acc(grads.get_mut(&format!("{prefix}.proj.w"))?.data_mut(), h, &d_pre, &cache.hidden_out);
    let mut d_hidden = vec![0.0; h];
    ops::matvec_t_acc(proj, h, &d_pre, &mut d_hidden);

    let d_input = match (&cache.body, kind) {
        (BodyCache::Pooled(c), EncoderKind::Pooled) => {
            pooled::backward(params, grads, prefix, cfg.hidden, c, &d_hidden)?
        }
        (BodyCache::Recurrent(c), EncoderKind::Recurrent) => {
            gru::backward(params, grads, prefix, c, &d_hidden)?
        }
        _ => unreachable!("cache kind follows config"),
    };

    if let EncoderInput::Text(batch) = input {
        let v = cfg.text_embed_dim;
        let table = grads.get_mut(TEXT_EMBEDDING)?.data_mut();
        for (&id, g) in batch[i].ids().iter().zip(d_input.chunks_exact(v)) {
            ops::add_assign(&mut table[id * v..(id + 1) * v], g);
        }
    }
    Ok(())
}

/// Gradients of `Σ_i upstream[i] · embedding_i` w.r.t. every parameter.
///
/// The forward pass is recomputed, so this is a pure function of its arguments.
/// Per-sample gradients are computed in parallel and summed in input order.
pub fn backward(
    params: &ParamStore,
    cfg: &EncoderConfig,
    input: EncoderInput<'_>,
    upstream: &[Vec<f64>],
) -> Result<ParamStore> {
    check_batch(input)?;
    if upstream.len() != input.len() || upstream.iter().any(|g| g.len() != cfg.embed_dim) {
        return Err(Error::Shape(format!(
            "upstream gradients must be {}x{}",
            input.len(),
            cfg.embed_dim
        )));
    }
    let per_sample = (0..input.len())
        .into_par_iter()
        .map(|i| {
            let mut g = params.zeros_like();
            if upstream[i].iter().any(|&v| v != 0.0) {
                backward_one(params, cfg, input, i, &upstream[i], &mut g)?;
            }
            Ok(g)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = params.zeros_like();
    for g in &per_sample {
        total.add_scaled(g, 1.0)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(kind: EncoderKind) -> EncoderConfig {
        EncoderConfig {
            kind,
            text_kind: kind,
            hidden: 4,
            layers: 1,
            bidirectional: false,
            embed_dim: 5,
            feat_dim: 3,
            text_vocab: 6,
            text_embed_dim: 3,
        }
    }

    fn seq(rows: &[[f32; 3]]) -> FeatureSequence {
        FeatureSequence::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let cfg = tiny(EncoderKind::Recurrent);
        let a = init_params(&cfg, 7).unwrap();
        assert_eq!(a, init_params(&cfg, 7).unwrap());
        assert_ne!(a, init_params(&cfg, 8).unwrap());
        for (name, t) in a.iter() {
            if name != LOG_TEMPERATURE && !is_decayed(name) {
                assert!(t.data().iter().all(|&v| v == 0.0), "{name}");
            }
        }
        let tau = log_temperature(&a).unwrap();
        assert!((tau - 2.659260036932778).abs() < 1e-12, "{tau}");
    }

    #[test]
    fn xavier_bounds() {
        let cfg = tiny(EncoderKind::Pooled);
        let p = init_params(&cfg, 1).unwrap();
        let w = p.get("audio.mlp.w1").unwrap();
        let bound = (6.0f64 / 7.0).sqrt();
        assert!(w.data().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn unit_norm_rows_and_identical_inputs() {
        for kind in [EncoderKind::Pooled, EncoderKind::Recurrent] {
            let cfg = tiny(kind);
            let p = init_params(&cfg, 3).unwrap();
            let x = seq(&[[0.1, -0.3, 0.5], [1.0, 0.2, -0.7]]);
            let e = encode_audio(&p, &cfg, &[x.clone(), seq(&[[2.0, 0.0, 1.0]]), x]).unwrap();
            for r in e.rows() {
                assert!((norm(r) - 1.0).abs() < 1e-6);
            }
            assert_eq!(e.row(0), e.row(2));
            let t = encode_text(
                &p,
                &cfg,
                &[PhonemeSequence(vec![1, 2, 3]), PhonemeSequence(vec![1, 2, 3])],
            )
            .unwrap();
            assert_eq!(t.row(0), t.row(1));
            assert!((norm(t.row(0)) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn pooled_mean_is_length_invariant_on_constant_input() {
        let cfg = tiny(EncoderKind::Pooled);
        let p = init_params(&cfg, 3).unwrap();
        let v = [0.25, -1.5, 0.75];
        let e = encode_audio(&p, &cfg, &[seq(&[v; 7]), seq(&[v])]).unwrap();
        assert_eq!(e.row(0), e.row(1));
    }

    #[test]
    fn text_permutation_equivariance() {
        let cfg = tiny(EncoderKind::Recurrent);
        let p = init_params(&cfg, 5).unwrap();
        let a = PhonemeSequence(vec![0, 1, 2]);
        let b = PhonemeSequence(vec![5, 4]);
        let e1 = encode_text(&p, &cfg, &[a.clone(), b.clone()]).unwrap();
        let e2 = encode_text(&p, &cfg, &[b, a]).unwrap();
        assert_eq!(e1.row(0), e2.row(1));
        assert_eq!(e1.row(1), e2.row(0));
    }

    #[test]
    fn errors() {
        let cfg = tiny(EncoderKind::Pooled);
        let p = init_params(&cfg, 3).unwrap();
        assert!(encode_text(&p, &cfg, &[PhonemeSequence(vec![6])]).is_err());
        assert!(encode_text(&p, &cfg, &[PhonemeSequence(vec![])]).is_err());
        assert!(encode_audio(&p, &cfg, &[]).is_err());
        let wide = FeatureSequence::new(vec![0.0; 4], 1, 4).unwrap();
        assert!(encode_audio(&p, &cfg, &[wide]).is_err());
        let x = [seq(&[[1.0, 2.0, 3.0]])];
        assert!(backward(&p, &cfg, EncoderInput::Audio(&x), &[vec![0.0; 4]]).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let cfg = tiny(EncoderKind::Recurrent);
        let p = init_params(&cfg, 3).unwrap();
        let x = [seq(&[[1.0, 2.0, 3.0], [0.0, 1.0, 0.0]])];
        let g = backward(&p, &cfg, EncoderInput::Audio(&x), &[vec![0.0; 5]]).unwrap();
        assert_eq!(g.global_norm(), 0.0);
    }

    #[test]
    fn logit_scale_clamps() {
        assert_eq!(logit_scale(0.0), (1.0, 1.0));
        assert_eq!(logit_scale(10.0), (100.0, 0.0));
    }

    #[test]
    fn decay_mask() {
        assert!(!is_decayed(LOG_TEMPERATURE));
        assert!(!is_decayed("audio.mlp.b1"));
        assert!(!is_decayed("text.gru.l0.fwd.b_ih"));
        assert!(is_decayed("audio.proj.w"));
        assert!(is_decayed(TEXT_EMBEDDING));
    }

    #[test]
    fn full_scale_recurrent_config_runs() {
        let cfg = EncoderConfig {
            kind: EncoderKind::Recurrent,
            text_kind: EncoderKind::Recurrent,
            hidden: 256,
            layers: 3,
            bidirectional: true,
            embed_dim: 512,
            feat_dim: 128,
            text_vocab: 40,
            text_embed_dim: 64,
        };
        let p = init_params(&cfg, 0).unwrap();
        let x = FeatureSequence::new(vec![0.1; 6 * 128], 6, 128).unwrap();
        let e = encode_audio(&p, &cfg, &[x]).unwrap();
        assert_eq!(e.dim(), 512);
        let t = encode_text(&p, &cfg, &[PhonemeSequence(vec![3, 9, 1])]).unwrap();
        assert!((norm(t.row(0)) - 1.0).abs() < 1e-6);
    }
}
