//! Synthetic identities, jittered frame sequences and mock anonymizers, so
//! the tracking and evaluation pipeline can run without trained encoders.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{
    id_retrieval_rate, neg_id_retrieval_rate, temporal_consistency, RetrievalReport,
    TemporalReport,
};
use crate::rng;
use crate::sampler::{AnchorSampler, FakeIdentitySource};
use crate::sphere::{negate, normalize, slerp, Embedding, Gallery, LabeledEmbedding};
use crate::tracker::{IdentityTracker, TrackerState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub dim: usize,
    pub identity_count: usize,
    pub frames_per_identity: usize,
    pub jitter_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            dim: crate::sphere::DEFAULT_DIM,
            identity_count: 100,
            frames_per_identity: 10,
            jitter_sigma: 0.01,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::invalid("dim", "must be at least 2"));
        }
        if self.identity_count == 0 {
            return Err(Error::invalid("identity_count", "must be at least 1"));
        }
        if self.frames_per_identity == 0 {
            return Err(Error::invalid("frames_per_identity", "must be at least 1"));
        }
        if !(self.jitter_sigma.is_finite() && self.jitter_sigma >= 0.0) {
            return Err(Error::invalid("jitter_sigma", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Label of synthetic identity `i`.
pub fn identity_label(i: usize) -> String {
    format!("id_{i:04}")
}

/// Uniform sample from the unit sphere (normalized standard Gaussian).
pub fn random_unit(dim: usize, rng: &mut impl Rng) -> Result<Embedding> {
    let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    normalize(&v)
}

/// `identity_count` random identities labelled `id_0000`, `id_0001`, ...
pub fn generate_identities(cfg: &SynthConfig) -> Result<Gallery> {
    cfg.validate()?;
    let entries = (0..cfg.identity_count)
        .into_par_iter()
        .map(|i| {
            let z = random_unit(cfg.dim, &mut rng::stream(cfg.seed, i as u64))?;
            Ok(LabeledEmbedding {
                label: identity_label(i),
                embedding: z,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Gallery::new(entries)
}

/// `n` noisy observations of `center`: each frame is
/// `normalize(center + N(0, σ²) per element)`.
pub fn generate_frames(center: &Embedding, n: usize, jitter_sigma: f64, seed: u64) -> Result<Vec<Embedding>> {
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    if !(jitter_sigma.is_finite() && jitter_sigma >= 0.0) {
        return Err(Error::invalid("jitter_sigma", "must be finite and >= 0"));
    }
    if jitter_sigma == 0.0 {
        return Ok(vec![center.clone(); n]);
    }
    (0..n)
        .into_par_iter()
        .map(|j| {
            let mut rng = rng::stream(seed, j as u64);
            let noisy: Vec<f64> = center
                .as_slice()
                .iter()
                .map(|&x| f64::from(x) + jitter_sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            normalize(&noisy)
        })
        .collect()
}

/// Stand-ins for an anonymization model, operating on identity embeddings.
#[derive(Debug, Clone)]
pub enum MockAnonymizer {
    /// Pushes the identity to its antipode, like a model trained only to
    /// maximize identity distance.
    Negation,
    /// Replaces the identity with an anchor at the sampler's margin.
    AnchorSample(AnchorSampler),
    /// Moves a fraction `alpha` of the way from the identity toward the
    /// sampled anchor.
    SlerpBlend { sampler: AnchorSampler, alpha: f64 },
}

impl MockAnonymizer {
    pub fn slerp_blend(sampler: AnchorSampler, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid("alpha", format!("{alpha} is outside [0, 1]")));
        }
        Ok(Self::SlerpBlend { sampler, alpha })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Negation => "negation",
            Self::AnchorSample(_) => "anchor_sample",
            Self::SlerpBlend { .. } => "slerp_blend",
        }
    }
}

pub fn mock_anonymize(z_id: &Embedding, anonymizer: &MockAnonymizer) -> Result<Embedding> {
    match anonymizer {
        MockAnonymizer::Negation => Ok(negate(z_id)),
        MockAnonymizer::AnchorSample(sampler) => Ok(sampler.sample(z_id)?.fake_identity),
        MockAnonymizer::SlerpBlend { sampler, alpha } => {
            let anchor = sampler.sample(z_id)?.fake_identity;
            slerp(z_id, &anchor, *alpha)
        }
    }
}

impl FakeIdentitySource for MockAnonymizer {
    fn fake_identity(&self, z_id: &Embedding) -> Result<Embedding> {
        mock_anonymize(z_id, self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchThresholds {
    /// Cosine-distance acceptance threshold for retrieval.
    pub retrieval: f64,
    /// Match threshold of the identity tracker.
    pub tracking: f32,
}

impl Default for BenchThresholds {
    fn default() -> Self {
        Self {
            retrieval: crate::metrics::DEFAULT_RETRIEVAL_THRESHOLD,
            tracking: crate::tracker::DEFAULT_THRESHOLD,
        }
    }
}

/// Retrieval and temporal scores of one way of routing frames through the
/// anonymizer.
#[derive(Debug, Clone)]
pub struct VariantReport {
    pub id: RetrievalReport,
    pub neg_id: RetrievalReport,
    pub temporal: TemporalReport,
    /// Anonymized embeddings, one list per video.
    pub outputs: Vec<Vec<Embedding>>,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub gallery: Gallery,
    /// Real frames, one list per identity.
    pub videos: Vec<Vec<Embedding>>,
    /// Temporal consistency of the real frames.
    pub real: TemporalReport,
    /// Every frame anonymized independently.
    pub per_frame: VariantReport,
    /// Frames routed through one identity tracker shared by all videos.
    pub tracked: VariantReport,
}

/// Generates identities and jittered videos, anonymizes them with and
/// without identity tracking, and scores ID, negated ID and temporal
/// consistency for both routes.
pub fn end_to_end_benchmark(
    cfg: &SynthConfig,
    anonymizer: &MockAnonymizer,
    thresholds: &BenchThresholds,
) -> Result<BenchReport> {
    cfg.validate()?;
    let gallery = generate_identities(&SynthConfig {
        seed: rng::sub_seed(cfg.seed, 0),
        ..*cfg
    })?;
    let frame_seed = rng::sub_seed(cfg.seed, 1);
    let videos = gallery
        .entries()
        .par_iter()
        .enumerate()
        .map(|(i, entry)| {
            generate_frames(
                &entry.embedding,
                cfg.frames_per_identity,
                cfg.jitter_sigma,
                rng::sub_seed(frame_seed, i as u64),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let real = temporal_consistency(&videos)?;

    let per_frame_outputs = videos
        .par_iter()
        .map(|frames| frames.iter().map(|f| mock_anonymize(f, anonymizer)).collect())
        .collect::<Result<Vec<Vec<_>>>>()?;

    let margin = match anonymizer {
        MockAnonymizer::Negation => 0.0,
        MockAnonymizer::AnchorSample(s) | MockAnonymizer::SlerpBlend { sampler: s, .. } => {
            s.margin() as f32
        }
    };
    let mut tracker = IdentityTracker::new(TrackerState::new(thresholds.tracking, margin)?, anonymizer);
    let tracked_outputs = videos
        .iter()
        .map(|frames| {
            frames
                .iter()
                .map(|f| tracker.track(f).map(|r| r.fake_identity))
                .collect()
        })
        .collect::<Result<Vec<Vec<_>>>>()?;

    let per_frame = score_variant(&gallery, per_frame_outputs, thresholds.retrieval)?;
    let tracked = score_variant(&gallery, tracked_outputs, thresholds.retrieval)?;
    Ok(BenchReport {
        gallery,
        videos,
        real,
        per_frame,
        tracked,
    })
}

fn score_variant(gallery: &Gallery, outputs: Vec<Vec<Embedding>>, threshold: f64) -> Result<VariantReport> {
    let probes: Vec<LabeledEmbedding> = gallery
        .entries()
        .iter()
        .zip(&outputs)
        .flat_map(|(entry, frames)| {
            frames.iter().map(|f| LabeledEmbedding {
                label: entry.label.clone(),
                embedding: f.clone(),
            })
        })
        .collect();
    Ok(VariantReport {
        id: id_retrieval_rate(&probes, gallery, threshold)?,
        neg_id: neg_id_retrieval_rate(&probes, gallery, threshold)?,
        temporal: temporal_consistency(&outputs)?,
        outputs,
    })
}
