//! Train-then-evaluate drivers shared by the command line, the examples and the
//! acceptance tests.

use std::fmt::Write as _;
use std::path::Path;

use crate::corpus::CorpusData;
use crate::encoders::EncoderConfig;
use crate::error::{Error, Result};
use crate::evaluation::{embed_manifest, eval_wd, EvalReport};
use crate::training::{train, TrainConfig, TrainOptions, TrainOutcome};

/// The five (α₁, α₂) settings of the loss-weight study.
pub const ALPHA_GRID: [(f64, f64); 5] = [(1.0, 0.1), (1.0, 0.5), (1.0, 1.0), (0.1, 1.0), (0.5, 0.1)];

/// Trains on `data.train` and scores word discrimination on `data.test`,
/// including the cross-view task.
pub fn train_and_eval_wd(
    data: &CorpusData,
    enc: &EncoderConfig,
    cfg: &TrainConfig,
    opts: &TrainOptions,
) -> Result<(TrainOutcome, EvalReport)> {
    let outcome = train(&data.train, &data.lexicon, cfg, enc, opts)?;
    let emb = embed_manifest(&outcome.params, enc, &data.test, Some(&data.lexicon))?;
    let (report, _) = eval_wd(&emb, &data.train_records(), &data.test_records())?;
    Ok((outcome, report))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub alpha1: f64,
    pub alpha2: f64,
    pub ap_iv: f64,
    pub ap_oov: f64,
    pub ap_cross_iv: f64,
    pub ap_cross_oov: f64,
}

pub const SWEEP_HEADER: &str = "alpha1,alpha2,ap_iv,ap_oov,ap_cross_iv,ap_cross_oov";

/// Trains one model per grid point. With `out_dir`, each model is written to
/// `out_dir/alpha1-<a>_alpha2-<b>/`.
pub fn sweep_alpha(
    data: &CorpusData,
    enc: &EncoderConfig,
    base: &TrainConfig,
    grid: &[(f64, f64)],
    out_dir: Option<&Path>,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(grid.len());
    for &(alpha1, alpha2) in grid {
        let cfg = TrainConfig {
            alpha1,
            alpha2,
            ..base.clone()
        };
        let opts = TrainOptions {
            out_dir: out_dir.map(|d| d.join(format!("alpha1-{alpha1}_alpha2-{alpha2}"))),
            ..TrainOptions::default()
        };
        let (_, report) = train_and_eval_wd(data, enc, &cfg, &opts)?;
        let get = |m: &std::collections::BTreeMap<String, f64>, k: &str| m.get(k).copied().unwrap_or(f64::NAN);
        rows.push(SweepRow {
            alpha1,
            alpha2,
            ap_iv: get(&report.ap, "iv"),
            ap_oov: get(&report.ap, "oov"),
            ap_cross_iv: get(&report.ap_cross, "iv"),
            ap_cross_oov: get(&report.ap_cross, "oov"),
        });
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = format!("{SWEEP_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.alpha1, r.alpha2, r.ap_iv, r.ap_oov, r.ap_cross_iv, r.ap_cross_oov
        );
    }
    s
}

/// Parses `a1:a2,a1:a2,…`.
pub fn parse_grid(spec: &str) -> Result<Vec<(f64, f64)>> {
    let grid = spec
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|pair| {
            let bad = || Error::Config(format!("bad grid point {pair:?}, expected alpha1:alpha2"));
            let (a, b) = pair.split_once(':').ok_or_else(bad)?;
            let a: f64 = a.trim().parse().map_err(|_| bad())?;
            let b: f64 = b.trim().parse().map_err(|_| bad())?;
            crate::losses::LossWeights::new(a, b)?;
            Ok((a, b))
        })
        .collect::<Result<Vec<_>>>()?;
    if grid.is_empty() {
        return Err(Error::Config("empty alpha grid".into()));
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("1:0.1, 0.1:1").unwrap(), vec![(1.0, 0.1), (0.1, 1.0)]);
        assert!(parse_grid("1").is_err());
        assert!(parse_grid("0:0").is_err());
        assert!(parse_grid("").is_err());
    }

    #[test]
    fn csv_shape() {
        let rows: Vec<SweepRow> = ALPHA_GRID
            .iter()
            .map(|&(alpha1, alpha2)| SweepRow {
                alpha1,
                alpha2,
                ap_iv: 0.5,
                ap_oov: 0.25,
                ap_cross_iv: 1.0,
                ap_cross_oov: 0.75,
            })
            .collect();
        let csv = sweep_csv(&rows);
        assert_eq!(csv.lines().count(), 6);
        assert_eq!(csv.lines().nth(4).unwrap(), "0.1,1,0.5,0.25,1,0.75");
    }
}
