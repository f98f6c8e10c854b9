//! Identity tracking: one persistent fake identity per observed real identity.
//!
//! Each incoming embedding is compared against every identity seen so far by
//! cosine distance. The closest one is a match when its distance is below the
//! threshold, and its stored fake identity is returned unchanged. Otherwise
//! the embedding is remembered, a new fake identity is drawn from the
//! configured [`FakeIdentitySource`], and it is filed under the next key.
//!
//! Only the first embedding of an identity is stored; later frames never
//! update it. An identity that drifts past the threshold over a long video
//! therefore gets a second fake identity.

use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::io::container::{self, RawEmbeddings};
use crate::sampler::{AnchorSampler, FakeIdentitySource};
use crate::sphere::{cosine_same_dim, AnchorSet, Embedding};

/// Cosine-distance match threshold (CosFace operating point at FAR 1e-3).
pub const DEFAULT_THRESHOLD: f32 = 0.63;

/// Magic prefix of a persisted tracker state.
pub const STATE_MAGIC: &[u8; 8] = b"FIVAITM1";

/// Stored real identities, their fake identities and the match threshold.
///
/// `key_pointer` is the number of stored identities; fake identity `k`
/// belongs to stored identity `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackerState {
    stored: Vec<Embedding>,
    fakes: Vec<Embedding>,
    threshold: f32,
    margin: f32,
}

impl TrackerState {
    pub fn new(threshold: f32, margin: f32) -> Result<Self> {
        Self::from_parts(Vec::new(), Vec::new(), threshold, margin)
    }

    /// Rebuilds a state, checking every invariant.
    pub fn from_parts(
        stored: Vec<Embedding>,
        fakes: Vec<Embedding>,
        threshold: f32,
        margin: f32,
    ) -> Result<Self> {
        if !(threshold > 0.0 && threshold < 2.0) {
            return Err(Error::invalid(
                "threshold",
                format!("{threshold} is outside (0, 2)"),
            ));
        }
        crate::sampler::check_margin(f64::from(margin))?;
        if stored.len() != fakes.len() {
            return Err(Error::invalid(
                "fakes",
                format!("{} stored identities but {} fakes", stored.len(), fakes.len()),
            ));
        }
        if let Some(first) = stored.first() {
            let dim = first.dim();
            for z in &stored {
                z.expect_dim(dim)?;
            }
        }
        Ok(Self {
            stored,
            fakes,
            threshold,
            margin,
        })
    }

    pub fn threshold(&self) -> f32 {
        self.threshold
    }

    pub fn margin(&self) -> f32 {
        self.margin
    }

    pub fn key_pointer(&self) -> usize {
        self.stored.len()
    }

    pub fn stored_identities(&self) -> &[Embedding] {
        &self.stored
    }

    pub fn fake_identities(&self) -> &[Embedding] {
        &self.fakes
    }

    pub fn fake_identity(&self, key: usize) -> Option<&Embedding> {
        self.fakes.get(key)
    }

    pub fn dim(&self) -> Option<usize> {
        self.stored.first().map(Embedding::dim)
    }

    pub fn is_empty(&self) -> bool {
        self.stored.is_empty()
    }

    /// Closest stored identity as `(key, cosine distance)`; ties go to the
    /// lowest key. `None` when nothing is stored yet.
    pub fn nearest(&self, z_id: &Embedding) -> Result<Option<(usize, f64)>> {
        if let Some(dim) = self.dim() {
            z_id.expect_dim(dim)?;
        }
        let mut best: Option<(usize, f64)> = None;
        for (key, stored) in self.stored.iter().enumerate() {
            let d = 1.0 - cosine_same_dim(z_id, stored);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((key, d));
            }
        }
        Ok(best)
    }

    /// Forgets every identity; threshold and margin are kept.
    pub fn reset(&mut self) {
        self.stored.clear();
        self.fakes.clear();
    }

    /// Serializes the state: magic, threshold, margin and key pointer, then
    /// the stored and fake identities as two label-free embedding containers.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(STATE_MAGIC);
        buf.extend_from_slice(&self.threshold.to_le_bytes());
        buf.extend_from_slice(&self.margin.to_le_bytes());
        buf.extend_from_slice(&(self.key_pointer() as u32).to_le_bytes());
        let dim = self.dim().unwrap_or(0);
        buf.extend(container::encode(&RawEmbeddings::from_embeddings_with_dim(&self.stored, dim)));
        buf.extend(container::encode(&RawEmbeddings::from_embeddings_with_dim(&self.fakes, dim)));
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |e: Error| Error::CorruptState(e.to_string());
        if bytes.len() < 20 {
            return Err(Error::CorruptState(format!(
                "header needs 20 bytes, found {}",
                bytes.len()
            )));
        }
        if &bytes[..8] != STATE_MAGIC {
            return Err(Error::CorruptState("bad magic".into()));
        }
        let threshold = f32::from_le_bytes(bytes[8..12].try_into().unwrap());
        let margin = f32::from_le_bytes(bytes[12..16].try_into().unwrap());
        let key_pointer = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;

        let (stored, used) = container::decode_prefix(&bytes[20..]).map_err(corrupt)?;
        let rest = &bytes[20 + used..];
        let (fakes, used) = container::decode_prefix(rest).map_err(corrupt)?;
        if used != rest.len() {
            return Err(Error::CorruptState(format!(
                "{} trailing bytes",
                rest.len() - used
            )));
        }
        if stored.len() != key_pointer || fakes.len() != key_pointer {
            return Err(Error::CorruptState(format!(
                "key pointer {key_pointer} but {} stored and {} fake identities",
                stored.len(),
                fakes.len()
            )));
        }
        if stored.dim != fakes.dim {
            return Err(Error::CorruptState(format!(
                "stored dim {} differs from fake dim {}",
                stored.dim, fakes.dim
            )));
        }
        let stored = stored.into_embeddings(false).map_err(corrupt)?;
        let fakes = fakes.into_embeddings(false).map_err(corrupt)?;
        Self::from_parts(stored, fakes, threshold, margin).map_err(corrupt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Outcome of tracking one embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackResult {
    pub fake_identity: Embedding,
    pub matched: bool,
    pub key: usize,
    /// Distance to the closest previously stored identity, if there was one.
    /// Below the threshold exactly when `matched`.
    pub nearest_distance: Option<f64>,
}

/// Tracker state plus the fake-identity source used for unseen identities.
#[derive(Debug, Clone)]
pub struct IdentityTracker<S> {
    state: TrackerState,
    source: S,
}

impl IdentityTracker<AnchorSampler> {
    /// Tracker drawing fake identities from `anchors` at margin `margin`.
    pub fn with_anchors(anchors: Arc<AnchorSet>, threshold: f32, margin: f32) -> Result<Self> {
        let sampler = AnchorSampler::new(anchors, f64::from(margin))?;
        Ok(Self::new(TrackerState::new(threshold, margin)?, sampler))
    }
}

impl<S: FakeIdentitySource> IdentityTracker<S> {
    pub fn new(state: TrackerState, source: S) -> Self {
        Self { state, source }
    }

    pub fn state(&self) -> &TrackerState {
        &self.state
    }

    pub fn source(&self) -> &S {
        &self.source
    }

    pub fn into_state(self) -> TrackerState {
        self.state
    }

    pub fn reset(&mut self) {
        self.state.reset();
    }

    /// Returns the fake identity for `z_id`, minting one if `z_id` matches
    /// no stored identity. A match leaves the state untouched.
    pub fn track(&mut self, z_id: &Embedding) -> Result<TrackResult> {
        let nearest = self.state.nearest(z_id)?;
        if let Some((key, d)) = nearest {
            if d < f64::from(self.state.threshold) {
                return Ok(TrackResult {
                    fake_identity: self.state.fakes[key].clone(),
                    matched: true,
                    key,
                    nearest_distance: Some(d),
                });
            }
        }
        let fake = self.source.fake_identity(z_id)?;
        fake.expect_dim(z_id.dim())?;
        let key = self.state.key_pointer();
        self.state.stored.push(z_id.clone());
        self.state.fakes.push(fake.clone());
        Ok(TrackResult {
            fake_identity: fake,
            matched: false,
            key,
            nearest_distance: nearest.map(|(_, d)| d),
        })
    }
}
