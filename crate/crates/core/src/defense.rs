//! Perturbations that disrupt reconstruction attacks on anonymized images:
//! sparse uniform pixel noise, Gaussian noise on model parameters, and a
//! single fast-gradient-sign step against an attacker's objective.
//!
//! The attacker network itself is external. FGSM talks to it through
//! [`GradientOracle`]; [`ToyOracle`] is a closed-form stand-in used to
//! verify the plumbing.

use rand::distr::{Distribution, Uniform};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng;

/// Noise scale and pixel coverage for [`uniform_pixel_noise`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub epsilon: f64,
    pub fraction: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(epsilon: f64, fraction: f64, seed: u64) -> Result<Self> {
        let spec = Self {
            epsilon,
            fraction,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        check_epsilon(self.epsilon)?;
        check_fraction(self.fraction)
    }
}

/// Which locations were noised and the additive deltas drawn for them,
/// before clamping.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTrace {
    /// Row-major pixel locations, ascending.
    pub locations: Vec<usize>,
    /// `channels` deltas per entry of `locations`.
    pub deltas: Vec<f64>,
}

/// `floor(fraction * locations)`. The product is nudged by 1e-9 first so that
/// decimal fractions such as 0.47 of 100 count 47, not 46.
pub fn noised_location_count(locations: usize, fraction: f64) -> usize {
    ((fraction * locations as f64 + 1e-9).floor() as usize).min(locations)
}

/// Adds `Uniform(-ε, ε)` noise to every channel of a random subset of pixel
/// locations, then clamps to `[0, 1]`. Untouched locations are bit-identical
/// to the input.
pub fn uniform_pixel_noise(image: &Image, spec: &NoiseSpec) -> Result<Image> {
    uniform_pixel_noise_traced(image, spec).map(|(img, _)| img)
}

pub fn uniform_pixel_noise_traced(image: &Image, spec: &NoiseSpec) -> Result<(Image, NoiseTrace)> {
    spec.validate()?;
    let total = image.locations();
    let count = noised_location_count(total, spec.fraction);
    let mut rng = rng::stream(spec.seed, 0);
    let mut locations = rand::seq::index::sample(&mut rng, total, count).into_vec();
    locations.sort_unstable();

    let noise = Uniform::new_inclusive(-spec.epsilon, spec.epsilon)
        .map_err(|e| Error::invalid("epsilon", e.to_string()))?;
    let channels = image.channels();
    let mut pixels = image.pixels().to_vec();
    let mut deltas = Vec::with_capacity(count * channels);
    for &loc in &locations {
        for v in &mut pixels[loc * channels..(loc + 1) * channels] {
            let delta = noise.sample(&mut rng);
            deltas.push(delta);
            *v = (*v + delta).clamp(0.0, 1.0);
        }
    }
    Ok((
        Image::from_clamped(image.shape(), pixels),
        NoiseTrace { locations, deltas },
    ))
}

/// Applies [`uniform_pixel_noise`] once per fraction, each with its own
/// sub-seed derived from `seed` and the fraction's position.
pub fn fraction_sweep(
    image: &Image,
    epsilon: f64,
    fractions: &[f64],
    seed: u64,
) -> Result<Vec<(f64, Image)>> {
    fractions
        .iter()
        .enumerate()
        .map(|(i, &fraction)| {
            let spec = NoiseSpec::new(epsilon, fraction, rng::sub_seed(seed, i as u64))?;
            Ok((fraction, uniform_pixel_noise(image, &spec)?))
        })
        .collect()
}

/// Flat model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    values: Vec<f64>,
}

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Adds i.i.d. `N(0, ε²)` noise to every parameter.
pub fn parameter_noise(params: &ParameterVector, epsilon: f64, seed: u64) -> Result<ParameterVector> {
    check_epsilon(epsilon)?;
    let mut rng = rng::stream(seed, 0);
    let values = params
        .values
        .iter()
        .map(|&p| {
            let g: f64 = StandardNormal.sample(&mut rng);
            p + epsilon * g
        })
        .collect();
    ParameterVector::new(values)
}

/// Loss and input gradient of an attacker objective at one image.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutput {
    pub loss: f64,
    pub shape: (usize, usize, usize),
    pub gradient: Vec<f64>,
}

/// Evaluates an attacker's loss and its gradient with respect to the input
/// pixels. Must be deterministic for a fixed image.
pub trait GradientOracle {
    fn evaluate(&self, image: &Image) -> Result<OracleOutput>;
}

/// `L(x) = Σ (x - c)²` with gradient `2 (x - c)`.
#[derive(Debug, Clone)]
pub struct ToyOracle {
    center: Image,
}

pub fn toy_oracle(center: Image) -> ToyOracle {
    ToyOracle { center }
}

impl ToyOracle {
    pub fn center(&self) -> &Image {
        &self.center
    }
}

impl GradientOracle for ToyOracle {
    fn evaluate(&self, image: &Image) -> Result<OracleOutput> {
        image.expect_shape(self.center.shape())?;
        let diffs = image.pixels().iter().zip(self.center.pixels()).map(|(x, c)| x - c);
        let loss = crate::metrics::stable_sum(diffs.clone().map(|d| d * d));
        Ok(OracleOutput {
            loss,
            shape: image.shape(),
            gradient: diffs.map(|d| 2.0 * d).collect(),
        })
    }
}

/// One signed-gradient step that increases the attacker's loss:
/// `clamp(x + ε · sign(∇L(x)), 0, 1)` with `sign(0) = 0`.
pub fn fgsm_defense(image: &Image, oracle: &impl GradientOracle, epsilon: f64) -> Result<Image> {
    check_epsilon(epsilon)?;
    let out = oracle.evaluate(image)?;
    if out.shape != image.shape() || out.gradient.len() != image.pixels().len() {
        return Err(Error::ShapeMismatch {
            expected: image.shape(),
            actual: out.shape,
        });
    }
    let pixels = image
        .pixels()
        .iter()
        .zip(&out.gradient)
        .enumerate()
        .map(|(index, (&x, &g))| {
            if g.is_nan() {
                return Err(Error::NonFinite { index });
            }
            let step = if g > 0.0 {
                epsilon
            } else if g < 0.0 {
                -epsilon
            } else {
                0.0
            };
            Ok(x + step)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Image::from_clamped(image.shape(), pixels))
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::invalid("epsilon", format!("{epsilon} must be finite and >= 0")));
    }
    Ok(())
}

fn check_fraction(fraction: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::invalid("fraction", format!("{fraction} is outside [0, 1]")));
    }
    Ok(())
}
