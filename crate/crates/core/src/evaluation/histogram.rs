use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub const HISTOGRAM_BINS: usize = 50;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelStats {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

impl LabelStats {
    pub fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let count = values.clone().count();
        if count == 0 {
            return Self::default();
        }
        let mean = values.clone().sum::<f64>() / count as f64;
        let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / count as f64;
        Self {
            count,
            mean,
            std: var.sqrt(),
        }
    }
}

/// Per-label score summary of a trial set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreStats {
    pub positive: LabelStats,
    pub negative: LabelStats,
}

pub fn score_stats(scores: &[f64], labels: &[bool]) -> ScoreStats {
    let pick = |want: bool| scores.iter().zip(labels).filter(move |(_, &l)| l == want).map(|(s, _)| *s);
    ScoreStats {
        positive: LabelStats::of(pick(true)),
        negative: LabelStats::of(pick(false)),
    }
}

/// Scores binned uniformly over `[-1, 1]`; out-of-range scores land in the end bins.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreHistogram {
    pub positive: Vec<usize>,
    pub negative: Vec<usize>,
    pub stats: ScoreStats,
}

pub fn bin_of(score: f64) -> usize {
    let b = ((score + 1.0) / 2.0 * HISTOGRAM_BINS as f64).floor();
    (b.max(0.0) as usize).min(HISTOGRAM_BINS - 1)
}

pub fn score_histogram(scores: &[f64], labels: &[bool]) -> ScoreHistogram {
    let mut h = ScoreHistogram {
        positive: vec![0; HISTOGRAM_BINS],
        negative: vec![0; HISTOGRAM_BINS],
        stats: score_stats(scores, labels),
    };
    for (&s, &l) in scores.iter().zip(labels) {
        let counts = if l { &mut h.positive } else { &mut h.negative };
        counts[bin_of(s)] += 1;
    }
    h
}

impl ScoreHistogram {
    /// CSV `bin_lo,bin_hi,positive,negative`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_lo,bin_hi,positive,negative\n");
        let width = 2.0 / HISTOGRAM_BINS as f64;
        for b in 0..HISTOGRAM_BINS {
            let lo = -1.0 + b as f64 * width;
            let _ = writeln!(s, "{:.2},{:.2},{},{}", lo, lo + width, self.positive[b], self.negative[b]);
        }
        s
    }
}
