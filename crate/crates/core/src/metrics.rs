//! Anonymization evaluation: thresholded identity retrieval, negated-identity
//! retrieval, temporal identity consistency, and the training objectives
//! written as plain metrics.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::sphere::{cosine, cosine_same_dim, Embedding, Gallery, LabeledEmbedding};

/// Cosine-distance acceptance threshold at a false acceptance rate of 1e-3.
pub const DEFAULT_RETRIEVAL_THRESHOLD: f64 = 0.63;

/// Symmetric `N x N` cosine-distance matrix with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    /// Wraps a row-major matrix after checking symmetry, the zero diagonal and
    /// the `[0, 2]` range (all within 1e-6).
    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyList("distance matrix"));
        }
        if values.len() != n * n {
            return Err(Error::invalid("values", format!("{} entries for n = {n}", values.len())));
        }
        for i in 0..n {
            if values[i * n + i].abs() > 1e-6 {
                return Err(Error::invalid("values", format!("diagonal entry {i} is not 0")));
            }
            for j in 0..n {
                let v = values[i * n + j];
                if !(-1e-6..=2.0 + 1e-6).contains(&v) {
                    return Err(Error::invalid("values", format!("entry ({i},{j}) = {v}")));
                }
                if (v - values[j * n + i]).abs() > 1e-6 {
                    return Err(Error::invalid("values", format!("asymmetric at ({i},{j})")));
                }
            }
        }
        Ok(Self { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `D[i][j] = 1 - cos(frames[i], frames[j])`.
pub fn pairwise_distance_matrix(frames: &[Embedding]) -> Result<DistanceMatrix> {
    let first = frames.first().ok_or(Error::EmptyList("frames"))?;
    for f in frames {
        f.expect_dim(first.dim())?;
    }
    let n = frames.len();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = 1.0 - cosine_same_dim(&frames[i], &frames[j]);
            values[i * n + j] = d;
            values[j * n + i] = d;
        }
    }
    Ok(DistanceMatrix { n, values })
}

/// Mean and standard deviation of one video's distance matrix, taken over
/// all `N²` entries including the diagonal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VideoConsistency {
    pub mean: f64,
    pub std: f64,
}

impl VideoConsistency {
    pub fn from_matrix(matrix: &DistanceMatrix) -> Self {
        let count = matrix.values.len() as f64;
        let mean = stable_sum(matrix.values.iter().copied()) / count;
        let var = stable_sum(matrix.values.iter().map(|d| (d - mean) * (d - mean))) / count;
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}

/// Temporal identity consistency over a set of videos.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalReport {
    /// Mean over videos of the mean pairwise distance.
    pub mean_of_means: f64,
    /// Mean over videos of the pairwise-distance standard deviation.
    pub mean_std: f64,
    pub per_video: Vec<VideoConsistency>,
}

impl TemporalReport {
    pub fn from_videos(per_video: Vec<VideoConsistency>) -> Result<Self> {
        if per_video.is_empty() {
            return Err(Error::EmptyList("videos"));
        }
        let m = per_video.len() as f64;
        Ok(Self {
            mean_of_means: stable_sum(per_video.iter().map(|v| v.mean)) / m,
            mean_std: stable_sum(per_video.iter().map(|v| v.std)) / m,
            per_video,
        })
    }
}

pub fn temporal_consistency(videos: &[Vec<Embedding>]) -> Result<TemporalReport> {
    if videos.is_empty() {
        return Err(Error::EmptyList("videos"));
    }
    let per_video = videos
        .par_iter()
        .map(|frames| pairwise_distance_matrix(frames).map(|d| VideoConsistency::from_matrix(&d)))
        .collect::<Result<Vec<_>>>()?;
    TemporalReport::from_videos(per_video)
}

/// Nearest gallery entry to a query.
#[derive(Debug, Clone, PartialEq)]
pub struct Retrieval {
    pub index: usize,
    pub label: String,
    pub distance: f64,
}

/// Nearest gallery entry by cosine distance; ties go to the lowest index.
pub fn retrieve(query: &Embedding, gallery: &Gallery) -> Result<Retrieval> {
    let dim = gallery.dim().ok_or(Error::EmptyGallery)?;
    query.expect_dim(dim)?;
    let mut best = (0usize, f64::INFINITY);
    for (i, entry) in gallery.entries().iter().enumerate() {
        let d = 1.0 - cosine_same_dim(query, &entry.embedding);
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok(Retrieval {
        index: best.0,
        label: gallery.entries()[best.0].label.clone(),
        distance: best.1,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOutcome {
    pub true_label: String,
    pub retrieved_label: String,
    pub distance: f64,
    pub success: bool,
}

/// Fraction of probes whose identity is recovered.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalReport {
    pub success_rate: f64,
    pub threshold: f64,
    pub per_query: Vec<ProbeOutcome>,
}

impl RetrievalReport {
    pub fn successes(&self) -> usize {
        self.per_query.iter().filter(|p| p.success).count()
    }
}

/// A probe counts as a successful retrieval only if its nearest gallery
/// entry carries its true label and lies within `threshold` (inclusive).
pub fn id_retrieval_rate(
    probes: &[LabeledEmbedding],
    gallery: &Gallery,
    threshold: f64,
) -> Result<RetrievalReport> {
    retrieval_report(probes, gallery, threshold, false)
}

/// [`id_retrieval_rate`] with every probe negated first: the attack that
/// recovers identities from anonymizers that push embeddings to the antipode.
pub fn neg_id_retrieval_rate(
    probes: &[LabeledEmbedding],
    gallery: &Gallery,
    threshold: f64,
) -> Result<RetrievalReport> {
    retrieval_report(probes, gallery, threshold, true)
}

fn retrieval_report(
    probes: &[LabeledEmbedding],
    gallery: &Gallery,
    threshold: f64,
    negated: bool,
) -> Result<RetrievalReport> {
    if !(0.0..=2.0).contains(&threshold) {
        return Err(Error::invalid("threshold", format!("{threshold} is outside [0, 2]")));
    }
    if probes.is_empty() {
        return Err(Error::EmptyList("probes"));
    }
    if gallery.is_empty() {
        return Err(Error::EmptyGallery);
    }
    let per_query = probes
        .par_iter()
        .map(|probe| {
            let hit = if negated {
                retrieve(&probe.embedding.negate(), gallery)?
            } else {
                retrieve(&probe.embedding, gallery)?
            };
            let success = hit.label == probe.label && hit.distance <= threshold;
            Ok(ProbeOutcome {
                true_label: probe.label.clone(),
                retrieved_label: hit.label,
                distance: hit.distance,
                success,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let successes = per_query.iter().filter(|p| p.success).count();
    Ok(RetrievalReport {
        success_rate: successes as f64 / per_query.len() as f64,
        threshold,
        per_query,
    })
}

/// Counterfactual anonymization objective `2 + cos(z_t, z_a) + cos(z_t, z_b)`
/// for the raw and blended anonymized faces. Ranges over `[0, 4]`; zero when
/// both are antipodal to the target.
pub fn anti_id_loss(target: &Embedding, anonymized: &Embedding, blended: &Embedding) -> Result<f64> {
    Ok(2.0 + cosine(target, anonymized)? + cosine(target, blended)?)
}

/// `1 - cos(z1, z2)`.
pub fn id_loss(z1: &Embedding, z2: &Embedding) -> Result<f64> {
    Ok(1.0 - cosine(z1, z2)?)
}

/// Mean absolute difference between two images of the same shape.
pub fn recon_l1(x: &Image, y: &Image) -> Result<f64> {
    y.expect_shape(x.shape())?;
    let n = x.pixels().len() as f64;
    Ok(stable_sum(x.pixels().iter().zip(y.pixels()).map(|(a, b)| (a - b).abs())) / n)
}

/// Neumaier-compensated summation.
pub(crate) fn stable_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
