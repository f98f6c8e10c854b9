//! Deepfake scoring from a reconstruction model's input and output.
//!
//! A reconstruction attack model leaves genuine faces essentially untouched
//! but pulls manipulated faces back toward their original identity, so a
//! large identity distance between input and output flags a manipulation.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::stable_sum;
use crate::sphere::{cosine_distance, Embedding};

pub const DEFAULT_DETECTION_THRESHOLD: f64 = 0.6;

/// Histogram resolution over the distance range `[0, 2]`.
pub const HISTOGRAM_BINS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionScore {
    pub distance: f64,
    pub is_fake: bool,
    pub threshold: f64,
}

pub fn detect(z_in: &Embedding, z_out: &Embedding, threshold: f64) -> Result<DetectionScore> {
    check_threshold(threshold)?;
    let distance = cosine_distance(z_in, z_out)?;
    Ok(DetectionScore {
        distance,
        is_fake: distance > threshold,
        threshold,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSummary {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    /// Counts over `HISTOGRAM_BINS` equal bins on `[0, 2]`; 2.0 lands in the
    /// last bin.
    pub histogram: Vec<u64>,
}

impl ScoreSummary {
    pub fn from_scores(scores: &[f64]) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::EmptyList("scores"));
        }
        let n = scores.len() as f64;
        let mean = stable_sum(scores.iter().copied()) / n;
        let var = stable_sum(scores.iter().map(|s| (s - mean) * (s - mean))) / n;
        let mut histogram = vec![0u64; HISTOGRAM_BINS];
        for &s in scores {
            histogram[histogram_bin(s)] += 1;
        }
        Ok(Self {
            mean,
            std: var.sqrt(),
            min: scores.iter().copied().fold(f64::INFINITY, f64::min),
            max: scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            histogram,
        })
    }
}

pub fn histogram_bin(distance: f64) -> usize {
    let width = 2.0 / HISTOGRAM_BINS as f64;
    ((distance / width).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreDistribution {
    pub scores: Vec<f64>,
    pub summary: ScoreSummary,
}

/// Input/output distances for a batch of pairs, with their summary.
pub fn score_distribution(pairs: &[(Embedding, Embedding)]) -> Result<ScoreDistribution> {
    if pairs.is_empty() {
        return Err(Error::EmptyList("pairs"));
    }
    let scores = pairs
        .par_iter()
        .map(|(a, b)| cosine_distance(a, b))
        .collect::<Result<Vec<_>>>()?;
    let summary = ScoreSummary::from_scores(&scores)?;
    Ok(ScoreDistribution { scores, summary })
}

/// False positives among genuine scores and false negatives among fake
/// scores at `threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ErrorCounts {
    pub false_positives: usize,
    pub false_negatives: usize,
}

pub fn error_counts(genuine: &[f64], fake: &[f64], threshold: f64) -> ErrorCounts {
    ErrorCounts {
        false_positives: genuine.iter().filter(|&&d| d > threshold).count(),
        false_negatives: fake.iter().filter(|&&d| d <= threshold).count(),
    }
}

fn check_threshold(threshold: f64) -> Result<()> {
    if !(threshold > 0.0 && threshold < 2.0) {
        return Err(Error::invalid("threshold", format!("{threshold} is outside (0, 2)")));
    }
    Ok(())
}
