//! Finite-difference verification of every analytic gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::encoders::{init_params, EmbeddingBatch, EncoderConfig, EncoderKind, ParamStore, PhonemeSequence};
use crate::error::Result;
use crate::frontend::FeatureSequence;
use crate::losses::{
    clap_loss_multi, clap_loss_multi_grad, dwd_loss_grad, dwd_loss_with, multiview_hinge, multiview_hinge_grad, ntxent, ntxent_grad, reconstruction_error,
    reconstruction_error_grad, siamese_hinge, siamese_hinge_grad, total_loss, total_loss_grad, DwdBatch, DwdOptions,
    LossWeights, Reduction,
};
use crate::training::{batch_loss, loss_and_grad, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckConfig {
    pub h: f64,
    pub loss_tol: f64,
    pub pipeline_tol: f64,
    /// Lower bound on the denominator of the relative error.
    pub floor: f64,
    pub n: usize,
    pub m: usize,
    pub dim: usize,
    pub hidden: usize,
    pub seeds: Vec<u64>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            h: 1e-5,
            loss_tol: 1e-6,
            pipeline_tol: 1e-4,
            floor: 1e-8,
            n: 3,
            m: 2,
            dim: 5,
            hidden: 4,
            seeds: (0..5).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub seed: u64,
    pub checked: usize,
    pub max_rel_err: f64,
    pub tol: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tol
    }
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn rel_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs()).max(floor)
}

/// `(f(x + h e_i) − f(x − h e_i)) / 2h`; `x` is restored afterwards.
pub fn central_difference<F>(x: &mut [f64], i: usize, h: f64, mut f: F) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let orig = x[i];
    x[i] = orig + h;
    let plus = f(x);
    x[i] = orig - h;
    let minus = f(x);
    x[i] = orig;
    Ok((plus? - minus?) / (2.0 * h))
}

/// Largest relative error between `analytic` and central differences of `f` at `x`.
pub fn max_rel_error<F>(x: &[f64], analytic: &[f64], h: f64, floor: f64, mut f: F) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut x = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let num = central_difference(&mut x, i, h, &mut f)?;
        worst = worst.max(rel_error(analytic[i], num, floor));
    }
    Ok(worst)
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn unit_rows(rng: &mut ChaCha8Rng, rows: usize, d: usize) -> Vec<f64> {
    let mut v = gaussian(rng, rows * d);
    for r in v.chunks_mut(d) {
        let n = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        r.iter_mut().for_each(|x| *x /= n);
    }
    v
}

fn batch_of(rows: &[f64], d: usize) -> Result<EmbeddingBatch> {
    EmbeddingBatch::from_rows(rows.chunks(d).map(<[f64]>::to_vec).collect())
}

/// Variables of a joint check: text rows, audio rows and τ, flattened.
struct Joint {
    n: usize,
    m: usize,
    d: usize,
}

impl Joint {
    fn split(&self, x: &[f64]) -> Result<(EmbeddingBatch, DwdBatch, f64)> {
        let nt = self.n * self.d;
        let na = self.n * self.m * self.d;
        let e_t = batch_of(&x[..nt], self.d)?;
        let audio = DwdBatch::new(self.n, self.m, self.d, x[nt..nt + na].to_vec())?;
        Ok((e_t, audio, x[nt + na]))
    }
}

/// Loss-level checks for one seed: every objective w.r.t. its embedding inputs and `τ`.
pub fn check_losses(cfg: &GradCheckConfig, seed: u64) -> Result<Vec<CheckResult>> {
    let (n, m, d) = (cfg.n, cfg.m, cfg.dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let joint = Joint { n, m, d };
    let mut x = unit_rows(&mut rng, n + n * m, d);
    x.push((1.0f64 / 0.07).ln() + rng.gen_range(-0.5..0.5));
    let mut out = Vec::new();
    let mut push = |name: &str, checked: usize, err: f64| {
        out.push(CheckResult {
            name: name.to_string(),
            seed,
            checked,
            max_rel_err: err,
            tol: cfg.loss_tol,
        })
    };

    let (e_t, audio, tau) = joint.split(&x)?;
    let g = clap_loss_multi_grad(&e_t, &audio, tau)?;
    let analytic = [g.d_text, g.d_audio, vec![g.d_tau]].concat();
    let err = max_rel_error(&x, &analytic, cfg.h, cfg.floor, |v| {
        let (t, a, tau) = joint.split(v)?;
        clap_loss_multi(&t, &a, tau)
    })?;
    push("clap", x.len(), err);

    let variants = [
        ("dwd_sum", DwdOptions::default()),
        ("dwd_mean", DwdOptions { reduction: Reduction::Mean, tau_scaled: false }),
        ("dwd_tau_scaled", DwdOptions { reduction: Reduction::Sum, tau_scaled: true }),
    ];
    for (name, opts) in variants {
        let g = dwd_loss_grad(&audio, &opts, tau)?;
        let mut analytic = vec![0.0; n * d];
        analytic.extend(&g.d_batch);
        analytic.push(g.d_tau);
        let err = max_rel_error(&x, &analytic, cfg.h, cfg.floor, |v| {
            let (_, a, tau) = joint.split(v)?;
            Ok(dwd_loss_with(&a, &opts, tau)?.total())
        })?;
        push(name, x.len(), err);
    }

    let w = LossWeights::default();
    let opts = DwdOptions::default();
    let g = total_loss_grad(&e_t, &audio, tau, &w, &opts)?;
    let analytic = [g.d_text, g.d_audio, vec![g.d_tau]].concat();
    let err = max_rel_error(&x, &analytic, cfg.h, cfg.floor, |v| {
        let (t, a, tau) = joint.split(v)?;
        Ok(total_loss(&t, &a, tau, &w, &opts)?.total)
    })?;
    push("total", x.len(), err);

    // Anchor, positive and two negatives as one flat vector.
    let k = 2;
    let y = gaussian(&mut rng, (2 + k) * d);
    let parts = |v: &[f64]| {
        let negs: Vec<Vec<f64>> = v[2 * d..].chunks(d).map(<[f64]>::to_vec).collect();
        (v[..d].to_vec(), v[d..2 * d].to_vec(), negs)
    };
    let (a, p, negs) = parts(&y);
    let g = ntxent_grad(&a, &p, &negs, 0.1)?;
    let analytic = [g.d_anchor, g.d_positive, g.d_negatives.concat()].concat();
    let err = max_rel_error(&y, &analytic, cfg.h, cfg.floor, |v| {
        let (a, p, negs) = parts(v);
        Ok(ntxent(&a, &p, &negs, 0.1)?.loss)
    })?;
    push("ntxent", y.len(), err);

    // Margin large enough to keep the hinge active.
    let z = &y[..3 * d];
    let g = siamese_hinge_grad(&z[..d], &z[d..2 * d], &z[2 * d..], 2.5)?;
    let analytic = [g.d_anchor, g.d_positive, g.d_negative].concat();
    let err = max_rel_error(z, &analytic, cfg.h, cfg.floor, |v| {
        siamese_hinge(&v[..d], &v[d..2 * d], &v[2 * d..], 2.5)
    })?;
    push("hinge", z.len(), err);
    let g = multiview_hinge_grad(&z[..d], &z[d..2 * d], &z[2 * d..], 2.5)?;
    let analytic = [g.d_anchor, g.d_positive, g.d_negative].concat();
    let err = max_rel_error(z, &analytic, cfg.h, cfg.floor, |v| {
        multiview_hinge(&v[..d], &v[d..2 * d], &v[2 * d..], 2.5)
    })?;
    push("multiview_hinge", z.len(), err);

    let target = gaussian(&mut rng, 4 * d);
    let pred = gaussian(&mut rng, 4 * d);
    let (_, analytic) = reconstruction_error_grad(&target, &pred)?;
    let err = max_rel_error(&pred, &analytic, cfg.h, cfg.floor, |v| reconstruction_error(&target, v))?;
    push("reconstruction", pred.len(), err);
    Ok(out)
}

/// Tiny encoder pairings exercised by the pipeline check: (audio body, text body, layers, bidirectional).
pub const PIPELINE_KINDS: [(EncoderKind, EncoderKind, usize, bool); 3] = [
    (EncoderKind::Pooled, EncoderKind::Pooled, 2, false),
    (EncoderKind::Recurrent, EncoderKind::Recurrent, 1, false),
    (EncoderKind::Recurrent, EncoderKind::Recurrent, 2, true),
];

pub fn pipeline_name(kind: EncoderKind, text_kind: EncoderKind, layers: usize, bidirectional: bool) -> String {
    let k = |k: EncoderKind| match k {
        EncoderKind::Pooled => "pooled",
        EncoderKind::Recurrent => "recurrent",
    };
    let dir = if bidirectional { "bi" } else { "uni" };
    format!("pipeline_{}_{}_l{layers}_{dir}", k(kind), k(text_kind))
}

/// Full-pipeline check: the joint objective w.r.t. every encoder parameter and `τ`.
pub fn check_pipeline(
    cfg: &GradCheckConfig,
    seed: u64,
    kind: EncoderKind,
    text_kind: EncoderKind,
    layers: usize,
    bidirectional: bool,
) -> Result<CheckResult> {
    let enc = EncoderConfig {
        kind,
        text_kind,
        hidden: cfg.hidden,
        layers,
        bidirectional,
        embed_dim: cfg.dim,
        feat_dim: 3,
        text_vocab: 6,
        text_embed_dim: 3,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = init_params(&enc, seed)?;
    // Nonzero biases so their gradients are exercised away from the init point.
    for (_, t) in params.iter_mut() {
        for v in t.data_mut() {
            *v += 0.1 * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let texts: Vec<PhonemeSequence> = (0..cfg.n)
        .map(|_| PhonemeSequence((0..3).map(|_| rng.gen_range(0..enc.text_vocab)).collect()))
        .collect();
    let audio: Vec<FeatureSequence> = (0..cfg.n * cfg.m)
        .map(|_| {
            let t = rng.gen_range(3..7);
            let data: Vec<f32> = (0..t * enc.feat_dim).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
            FeatureSequence::new(data, t, enc.feat_dim)
        })
        .collect::<Result<_>>()?;
    let train = TrainConfig::default();
    let (_, grads) = loss_and_grad(&params, &enc, &texts, &audio, &train)?;
    let mut worst = 0.0f64;
    let mut probe = params.clone();
    for i in 0..params.flat_len() {
        let (_, orig) = params.flat_get(i).expect("index in range");
        let analytic = grads.flat_get(i).expect("same layout").1;
        let eval = |v: f64, p: &mut ParamStore| -> Result<f64> {
            p.flat_set(i, v);
            Ok(batch_loss(p, &enc, &texts, &audio, &train)?.total)
        };
        let plus = eval(orig + cfg.h, &mut probe)?;
        let minus = eval(orig - cfg.h, &mut probe)?;
        probe.flat_set(i, orig);
        let numeric = (plus - minus) / (2.0 * cfg.h);
        worst = worst.max(rel_error(analytic, numeric, cfg.floor));
    }
    Ok(CheckResult {
        name: pipeline_name(kind, text_kind, layers, bidirectional),
        seed,
        checked: params.flat_len(),
        max_rel_err: worst,
        tol: cfg.pipeline_tol,
    })
}

/// Every loss and pipeline check over every seed.
pub fn run_all(cfg: &GradCheckConfig) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for &seed in &cfg.seeds {
        out.extend(check_losses(cfg, seed)?);
        for (kind, text_kind, layers, bi) in PIPELINE_KINDS {
            out.push(check_pipeline(cfg, seed, kind, text_kind, layers, bi)?);
        }
    }
    Ok(out)
}
