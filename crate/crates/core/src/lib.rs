//! Embedding-space toolkit for face anonymization.
//!
//! Identity embeddings live on the unit hypersphere. On top of that algebra
//! the crate provides:
//!
//! * [`sphere`]: normalization, cosine similarity, slerp, identity means and
//!   anchor-set construction.
//! * [`sampler`]: margin-based fake-identity selection from an anchor set.
//! * [`tracker`]: identity tracking that hands out one persistent fake
//!   identity per real identity across frames.
//! * [`metrics`]: thresholded identity retrieval, negated-identity retrieval,
//!   temporal consistency and the anonymization objectives.
//! * [`defense`]: pixel noise, parameter noise and FGSM against
//!   reconstruction attacks.
//! * [`detector`]: deepfake scoring from reconstruction input/output
//!   embeddings.
//! * [`synth`]: synthetic identities, frames and mock anonymizers.
//! * [`io`]: the `FIVAEMB1` container, embedding CSV and PPM images.
//!
//! Face detection and the neural encoders are out of scope; their outputs are
//! consumed as embedding files.

pub mod cli;
pub mod defense;
pub mod detector;
pub mod error;
pub mod image;
pub mod io;
pub mod metrics;
pub mod rng;
pub mod sampler;
pub mod sphere;
pub mod synth;
pub mod tracker;

pub use error::{Error, Result};
pub use image::Image;
pub use sampler::{sample_far, sample_fake, AnchorSampler, FakeIdentitySource, SampleResult};
pub use sphere::{
    build_anchor_set, cosine, cosine_distance, mean_embedding, negate, normalize, slerp,
    AnchorSet, Embedding, Gallery, LabeledEmbedding,
};
pub use tracker::{IdentityTracker, TrackResult, TrackerState};
