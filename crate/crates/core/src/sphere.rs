//! Unit-hypersphere embedding algebra.
//!
//! Every identity vector in the crate is an [`Embedding`]: a unit-norm `f32`
//! vector, the same precision face-recognition encoders emit. Reductions
//! (dot products, norms, means) accumulate in `f64`.

use std::collections::HashSet;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Embedding width of ArcFace/CosFace style encoders.
pub const DEFAULT_DIM: usize = 512;

/// Allowed deviation of `‖v‖` from 1 for a value to count as unit norm.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// Norms at or below this are treated as the zero vector.
pub const ZERO_NORM_EPSILON: f64 = 1e-12;

/// Pairs with cosine at or below `-1 + ANTIPODAL_TOLERANCE` have no unique
/// great-circle path between them.
pub const ANTIPODAL_TOLERANCE: f64 = 1e-6;

/// Default interpolation weight used when mixing two identities into an anchor.
pub const DEFAULT_BLEND: f64 = 0.5;

/// A unit-norm identity vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f32>,
}

impl Embedding {
    /// Wraps values that are already unit norm.
    ///
    /// Fails with `NotUnitNorm` when `‖values‖` is more than
    /// [`UNIT_NORM_TOLERANCE`] away from 1.
    pub fn from_unit(values: Vec<f32>) -> Result<Self> {
        check_dim(values.len())?;
        check_finite(&values)?;
        let norm = sum_sq(&values).sqrt();
        if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(Error::NotUnitNorm { norm });
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        sum_sq(&self.values).sqrt()
    }

    pub fn cosine(&self, other: &Embedding) -> Result<f64> {
        cosine(self, other)
    }

    pub fn cosine_distance(&self, other: &Embedding) -> Result<f64> {
        cosine_distance(self, other)
    }

    pub fn negate(&self) -> Embedding {
        negate(self)
    }

    /// Fails with `DimensionMismatch` unless `self` has width `dim`.
    pub fn expect_dim(&self, dim: usize) -> Result<()> {
        if self.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: self.dim(),
            });
        }
        Ok(())
    }
}

/// An embedding tagged with the identity it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEmbedding {
    pub label: String,
    pub embedding: Embedding,
}

impl LabeledEmbedding {
    pub fn new(label: impl Into<String>, embedding: Embedding) -> Result<Self> {
        let label = label.into();
        if label.is_empty() {
            return Err(Error::EmptyLabel(0));
        }
        Ok(Self { label, embedding })
    }
}

/// Retrieval database: one embedding per identity, labels unique.
#[derive(Debug, Clone, PartialEq)]
pub struct Gallery {
    entries: Vec<LabeledEmbedding>,
}

impl Gallery {
    pub fn new(entries: Vec<LabeledEmbedding>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        for (row, entry) in entries.iter().enumerate() {
            if entry.label.is_empty() {
                return Err(Error::EmptyLabel(row));
            }
            if !seen.insert(entry.label.as_str()) {
                return Err(Error::DuplicateLabel(entry.label.clone()));
            }
        }
        if let Some(first) = entries.first() {
            let dim = first.embedding.dim();
            for entry in &entries {
                entry.embedding.expect_dim(dim)?;
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[LabeledEmbedding] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.entries.first().map(|e| e.embedding.dim())
    }

    pub fn get(&self, label: &str) -> Option<&Embedding> {
        self.entries
            .iter()
            .find(|e| e.label == label)
            .map(|e| &e.embedding)
    }
}

/// Where an anchor came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnchorProvenance {
    /// Slerp of two entries of the previous generation (the identity means
    /// for round 1).
    Blend {
        round: u32,
        left: usize,
        right: usize,
        t: f64,
    },
    /// Row of an externally supplied anchor file.
    External { row: usize },
}

/// A shift pair that could not be interpolated because it was antipodal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkippedPair {
    pub round: u32,
    pub left: usize,
    pub right: usize,
}

/// Search space of synthetic identities, each a blend of real ones.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    anchors: Vec<Embedding>,
    provenance: Vec<AnchorProvenance>,
    skipped: Vec<SkippedPair>,
    rounds: u32,
}

impl AnchorSet {
    /// Wraps anchors read from disk.
    pub fn from_embeddings(anchors: Vec<Embedding>) -> Result<Self> {
        if let Some(first) = anchors.first() {
            let dim = first.dim();
            for a in &anchors {
                a.expect_dim(dim)?;
            }
        }
        let provenance = (0..anchors.len())
            .map(|row| AnchorProvenance::External { row })
            .collect();
        Ok(Self {
            anchors,
            provenance,
            skipped: Vec::new(),
            rounds: 0,
        })
    }

    pub fn anchors(&self) -> &[Embedding] {
        &self.anchors
    }

    pub fn provenance(&self) -> &[AnchorProvenance] {
        &self.provenance
    }

    pub fn skipped(&self) -> &[SkippedPair] {
        &self.skipped
    }

    pub fn rounds(&self) -> u32 {
        self.rounds
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.anchors.first().map(Embedding::dim)
    }

    pub fn get(&self, index: usize) -> Option<&Embedding> {
        self.anchors.get(index)
    }
}

/// Scales `v` onto the unit sphere.
pub fn normalize<T: Copy + Into<f64>>(v: &[T]) -> Result<Embedding> {
    check_dim(v.len())?;
    let mut norm_sq = 0.0f64;
    for (index, &x) in v.iter().enumerate() {
        let x: f64 = x.into();
        if !x.is_finite() {
            return Err(Error::NonFinite { index });
        }
        norm_sq += x * x;
    }
    let norm = norm_sq.sqrt();
    if norm <= ZERO_NORM_EPSILON {
        return Err(Error::ZeroVector { norm });
    }
    let values = v
        .iter()
        .map(|&x| (Into::<f64>::into(x) / norm) as f32)
        .collect();
    Ok(Embedding { values })
}

/// Cosine similarity `a·b / (‖a‖‖b‖)`, clamped to `[-1, 1]`.
///
/// The norms are divided out even though both inputs are unit norm: with
/// `f32` storage this makes `cosine(z, z) == 1` and `cosine(z, -z) == -1`
/// exactly, since `sqrt(x * x) == x` in IEEE arithmetic.
pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64> {
    b.expect_dim(a.dim())?;
    Ok(cosine_same_dim(a, b))
}

/// [`cosine`] for callers that have already checked dimensions.
pub(crate) fn cosine_same_dim(a: &Embedding, b: &Embedding) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.values.iter().zip(&b.values) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    (dot / (na * nb).sqrt()).clamp(-1.0, 1.0)
}

/// `1 - cosine(a, b)`, in `[0, 2]`.
pub fn cosine_distance(a: &Embedding, b: &Embedding) -> Result<f64> {
    Ok(1.0 - cosine(a, b)?)
}

/// The antipode `-z`.
pub fn negate(z: &Embedding) -> Embedding {
    Embedding {
        values: z.values.iter().map(|x| -x).collect(),
    }
}

/// Spherical linear interpolation along the great circle from `a` to `b`.
pub fn slerp(a: &Embedding, b: &Embedding, t: f64) -> Result<Embedding> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid("t", format!("{t} is outside [0, 1]")));
    }
    let cos = cosine(a, b)?;
    if cos <= -1.0 + ANTIPODAL_TOLERANCE {
        return Err(Error::AntipodalPair { cosine: cos });
    }
    let omega = cos.acos();
    let sin_omega = omega.sin();
    // Nearly parallel inputs: the slerp weights converge to the lerp weights.
    let (wa, wb) = if sin_omega < 1e-9 {
        (1.0 - t, t)
    } else {
        (
            ((1.0 - t) * omega).sin() / sin_omega,
            (t * omega).sin() / sin_omega,
        )
    };
    let mixed: Vec<f64> = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(&x, &y)| wa * f64::from(x) + wb * f64::from(y))
        .collect();
    normalize(&mixed)
}

/// Arithmetic mean of `members`, projected back onto the sphere.
pub fn mean_embedding(members: &[Embedding]) -> Result<Embedding> {
    let first = members.first().ok_or(Error::EmptyList("members"))?;
    let dim = first.dim();
    let mut acc = vec![0.0f64; dim];
    for m in members {
        m.expect_dim(dim)?;
        for (s, &x) in acc.iter_mut().zip(&m.values) {
            *s += f64::from(x);
        }
    }
    let n = members.len() as f64;
    acc.iter_mut().for_each(|s| *s /= n);
    normalize(&acc)
}

/// Builds the anchor search space by slerping each entry with its circular
/// neighbour (`i` with `i + 1 mod N`), then repeating the same shift-and-slerp
/// on each round's output and appending.
///
/// Antipodal neighbour pairs are skipped and recorded, so the result holds
/// `rounds * N - skipped` anchors as long as no round shrinks the next one.
pub fn build_anchor_set(means: &[Embedding], rounds: u32, t: f64) -> Result<AnchorSet> {
    if means.len() < 2 {
        return Err(Error::TooFewMeans(means.len()));
    }
    if rounds == 0 {
        return Err(Error::invalid("rounds", "must be at least 1"));
    }
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::invalid("t", format!("{t} is outside (0, 1)")));
    }
    let dim = means[0].dim();
    for m in means {
        m.expect_dim(dim)?;
        if (m.norm() - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(Error::NotUnitNorm { norm: m.norm() });
        }
    }

    let mut set = AnchorSet {
        anchors: Vec::new(),
        provenance: Vec::new(),
        skipped: Vec::new(),
        rounds,
    };
    let mut generation: Vec<Embedding> = means.to_vec();
    for round in 1..=rounds {
        let n = generation.len();
        if n == 0 {
            break;
        }
        let blended: Vec<(usize, usize, Result<Embedding>)> = (0..n)
            .into_par_iter()
            .map(|left| {
                let right = (left + 1) % n;
                (left, right, slerp(&generation[left], &generation[right], t))
            })
            .collect();

        let mut next = Vec::with_capacity(n);
        for (left, right, result) in blended {
            match result {
                Ok(anchor) => {
                    set.provenance.push(AnchorProvenance::Blend {
                        round,
                        left,
                        right,
                        t,
                    });
                    next.push(anchor);
                }
                Err(Error::AntipodalPair { .. }) => {
                    set.skipped.push(SkippedPair { round, left, right })
                }
                Err(e) => return Err(e),
            }
        }
        set.anchors.extend(next.iter().cloned());
        generation = next;
    }
    Ok(set)
}

fn check_dim(len: usize) -> Result<()> {
    if len < 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            actual: len,
        });
    }
    Ok(())
}

fn check_finite(values: &[f32]) -> Result<()> {
    match values.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

fn sum_sq(values: &[f32]) -> f64 {
    values.iter().map(|&x| f64::from(x) * f64::from(x)).sum()
}
