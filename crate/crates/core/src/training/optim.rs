use crate::encoders::{is_decayed, ParamStore, Tensor};
use crate::error::{Error, Result};

use super::TrainConfig;

/// Adam moments mirroring the parameter store, plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub m: ParamStore,
    pub v: ParamStore,
    pub step: u64,
}

impl OptState {
    pub fn new(params: &ParamStore) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    /// Packs the state into one store (`m/<name>`, `v/<name>`, `step`) for checkpointing.
    pub fn to_store(&self) -> Result<ParamStore> {
        let mut out = ParamStore::new();
        for (prefix, src) in [("m", &self.m), ("v", &self.v)] {
            for (name, t) in src.iter() {
                out.insert(format!("{prefix}/{name}"), t.clone())?;
            }
        }
        out.insert("step", Tensor::scalar(self.step as f64))?;
        Ok(out)
    }

    pub fn from_store(store: &ParamStore) -> Result<Self> {
        let (mut m, mut v) = (ParamStore::new(), ParamStore::new());
        let mut step = None;
        for (name, t) in store.iter() {
            if let Some(rest) = name.strip_prefix("m/") {
                m.insert(rest, t.clone())?;
            } else if let Some(rest) = name.strip_prefix("v/") {
                v.insert(rest, t.clone())?;
            } else if name == "step" {
                step = Some(t.data()[0] as u64);
            } else {
                return Err(Error::Format(format!("unexpected optimizer entry {name:?}")));
            }
        }
        if !m.same_layout(&v) {
            return Err(Error::Format("optimizer moments differ in layout".into()));
        }
        Ok(Self {
            m,
            v,
            step: step.ok_or_else(|| Error::Format("optimizer state lacks step".into()))?,
        })
    }
}

/// Scales all gradients by `clip_norm / g` when the global norm `g` exceeds
/// `clip_norm`. Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut ParamStore, clip_norm: f64) -> Result<f64> {
    for (name, t) in grads.iter() {
        if t.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient(name.to_string()));
        }
    }
    let g = grads.global_norm();
    if g > clip_norm {
        grads.scale(clip_norm / g);
    }
    Ok(g)
}

/// Decoupled weight decay followed by a bias-corrected Adam update. Biases and
/// the log-temperature are not decayed.
pub fn adamw_step(
    params: &mut ParamStore,
    grads: &ParamStore,
    state: &mut OptState,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<()> {
    if !params.same_layout(grads) || !params.same_layout(&state.m) {
        return Err(Error::Shape("parameters, gradients and optimizer state differ".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let moments = state.m.iter_mut().zip(state.v.iter_mut());
    for (((name, p), (_, g)), ((_, m), (_, v))) in params.iter_mut().zip(grads.iter()).zip(moments) {
        let decay = if is_decayed(name) { lr * cfg.weight_decay } else { 0.0 };
        let (p, g, m, v) = (p.data_mut(), g.data(), m.data_mut(), v.data_mut());
        for i in 0..p.len() {
            p[i] -= decay * p[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
