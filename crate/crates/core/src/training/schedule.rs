use crate::error::{Error, Result};

use super::TrainConfig;

/// Peak learning rate divided by this gives the starting rate.
pub const START_DIV: f64 = 25.0;
/// Peak learning rate divided by this gives the final rate.
pub const FINAL_DIV: f64 = 10_000.0;

fn cosine_interp(from: f64, to: f64, pct: f64) -> f64 {
    to + (from - to) / 2.0 * (1.0 + (std::f64::consts::PI * pct).cos())
}

/// Last step of the warmup phase, where the rate peaks.
pub fn peak_step(total_steps: usize, warmup_frac: f64) -> usize {
    ((warmup_frac * total_steps as f64).ceil() as usize).saturating_sub(1)
}

/// One-cycle schedule: cosine ramp from `lr_max/25` up to `lr_max` over the first
/// `warmup_frac` of the steps, then cosine decay to `lr_max/10000` at the last step.
pub fn onecycle_lr(step: usize, total_steps: usize, cfg: &TrainConfig) -> Result<f64> {
    if step >= total_steps {
        return Err(Error::Invalid(format!(
            "step {step} outside schedule of {total_steps} steps"
        )));
    }
    let peak = peak_step(total_steps, cfg.warmup_frac);
    let lr_max = cfg.lr_max;
    if step <= peak {
        if peak == 0 {
            return Ok(lr_max);
        }
        return Ok(cosine_interp(lr_max / START_DIV, lr_max, step as f64 / peak as f64));
    }
    let span = (total_steps - 1 - peak) as f64;
    Ok(cosine_interp(lr_max, lr_max / FINAL_DIV, (step - peak) as f64 / span))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_peak() {
        let cfg = TrainConfig::default();
        let total = 150;
        assert!((onecycle_lr(0, total, &cfg).unwrap() - 4e-5).abs() < 1e-18);
        let peak = peak_step(total, 0.2);
        assert_eq!(peak, 29);
        assert_eq!(onecycle_lr(peak, total, &cfg).unwrap(), 1e-3);
        assert!((onecycle_lr(total - 1, total, &cfg).unwrap() - 1e-7).abs() < 1e-18);
        assert!(onecycle_lr(total, total, &cfg).is_err());
    }

    #[test]
    fn monotone_phases() {
        let cfg = TrainConfig::default();
        let total = 97;
        let peak = peak_step(total, cfg.warmup_frac);
        let lrs: Vec<f64> = (0..total).map(|s| onecycle_lr(s, total, &cfg).unwrap()).collect();
        assert!(lrs[..=peak].windows(2).all(|w| w[0] < w[1]));
        assert!(lrs[peak..].windows(2).all(|w| w[0] > w[1]));
        assert!(lrs.iter().all(|&l| l <= cfg.lr_max && l > 0.0));
    }

    #[test]
    fn single_step_schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(onecycle_lr(0, 1, &cfg).unwrap(), cfg.lr_max);
    }
}
