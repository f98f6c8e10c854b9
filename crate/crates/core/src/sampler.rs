//! Margin-based fake-identity selection from an anchor set.
//!
//! The selected anchor minimizes `|cos(z_id, a) + m|`, i.e. its similarity to
//! the target is as close as possible to `-m`. `m = 0` asks for the anchor most
//! orthogonal to the target, which is equally far from `z_id` and `-z_id`.

use std::cmp::Ordering;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sphere::{cosine_same_dim, AnchorSet, Embedding};

/// Margin used by [`sample_far`].
pub const DEFAULT_FAR_MARGIN: f64 = 0.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleResult {
    pub anchor_index: usize,
    pub fake_identity: Embedding,
    pub achieved_cosine: f64,
}

/// Picks the anchor whose cosine to `z_id` is closest to `-margin`.
/// Ties go to the lowest anchor index.
pub fn sample_fake(z_id: &Embedding, anchors: &AnchorSet, margin: f64) -> Result<SampleResult> {
    check_margin(margin)?;
    let dim = anchors.dim().ok_or(Error::EmptyAnchorSet)?;
    z_id.expect_dim(dim)?;

    let (_, anchor_index, achieved_cosine) = anchors
        .anchors()
        .par_iter()
        .with_min_len(512)
        .enumerate()
        .map(|(i, a)| {
            let cos = cosine_same_dim(z_id, a);
            ((cos + margin).abs(), i, cos)
        })
        .reduce_with(|x, y| match x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)) {
            Ordering::Greater => y,
            _ => x,
        })
        .ok_or(Error::EmptyAnchorSet)?;

    Ok(SampleResult {
        anchor_index,
        fake_identity: anchors.anchors()[anchor_index].clone(),
        achieved_cosine,
    })
}

/// [`sample_fake`] at [`DEFAULT_FAR_MARGIN`]: an identity far from both the
/// target and its antipode.
pub fn sample_far(z_id: &Embedding, anchors: &AnchorSet) -> Result<SampleResult> {
    sample_fake(z_id, anchors, DEFAULT_FAR_MARGIN)
}

pub(crate) fn check_margin(margin: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&margin) {
        return Err(Error::invalid("margin", format!("{margin} is outside [-1, 1]")));
    }
    Ok(())
}

/// A function mapping a real identity to the fake identity that replaces it.
pub trait FakeIdentitySource {
    fn fake_identity(&self, z_id: &Embedding) -> Result<Embedding>;
}

impl<S: FakeIdentitySource + ?Sized> FakeIdentitySource for &S {
    fn fake_identity(&self, z_id: &Embedding) -> Result<Embedding> {
        (**self).fake_identity(z_id)
    }
}

/// Anchor-set sampling at a fixed margin.
#[derive(Debug, Clone)]
pub struct AnchorSampler {
    anchors: Arc<AnchorSet>,
    margin: f64,
}

impl AnchorSampler {
    pub fn new(anchors: Arc<AnchorSet>, margin: f64) -> Result<Self> {
        check_margin(margin)?;
        if anchors.is_empty() {
            return Err(Error::EmptyAnchorSet);
        }
        Ok(Self { anchors, margin })
    }

    pub fn anchors(&self) -> &AnchorSet {
        &self.anchors
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn sample(&self, z_id: &Embedding) -> Result<SampleResult> {
        sample_fake(z_id, &self.anchors, self.margin)
    }
}

impl FakeIdentitySource for AnchorSampler {
    fn fake_identity(&self, z_id: &Embedding) -> Result<Embedding> {
        Ok(self.sample(z_id)?.fake_identity)
    }
}
