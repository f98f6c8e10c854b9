//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs with its own harness so the report is always printed; the process
//! exits non-zero if any criterion fails.

use std::panic::{self, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fiva::defense::{self, GradientOracle, NoiseSpec, ParameterVector};
use fiva::detector;
use fiva::io::{container, csv as emb_csv, ppm, RawEmbeddings};
use fiva::metrics::{self, DistanceMatrix, VideoConsistency};
use fiva::sphere::{self, AnchorSet, Embedding};
use fiva::synth::{self, BenchThresholds, MockAnonymizer, SynthConfig};
use fiva::tracker::TrackerState;
use fiva::{AnchorSampler, Error, IdentityTracker, Image};

const UNIT_TOL: f64 = 1e-6;
const TEMPORAL_TOL: f64 = 1e-9;
const ITM_THRESHOLD: f32 = 0.63;
const RETRIEVAL_THRESHOLD: f64 = 0.63;
const DETECTION_THRESHOLD: f64 = 0.6;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn unit(v: &[f64]) -> Embedding {
    sphere::normalize(v).expect("non-zero vector")
}

fn gaussian_unit(dim: usize, rng: &mut ChaCha8Rng) -> Embedding {
    synth::random_unit(dim, rng).unwrap()
}

/// Plain f64 cosine of the stored f32 values, written independently of the
/// library.
fn oracle_cosine(a: &Embedding, b: &Embedding) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.as_slice().iter().zip(b.as_slice()) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    dot / (na.sqrt() * nb.sqrt())
}

fn random_anchor_set(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> AnchorSet {
    let anchors = (0..n).map(|_| gaussian_unit(dim, rng)).collect();
    AnchorSet::from_embeddings(anchors).unwrap()
}

// 1 ------------------------------------------------------------------------

fn hypersphere_identities() {
    let mut r = rng(1);
    let vectors: Vec<Embedding> = (0..10_000).map(|_| gaussian_unit(64, &mut r)).collect();
    let start = Instant::now();
    for z in &vectors {
        let self_cos = z.cosine(z).unwrap();
        let anti_cos = z.cosine(&z.negate()).unwrap();
        assert!((self_cos - 1.0).abs() < UNIT_TOL, "cos(z, z) = {self_cos}");
        assert!((anti_cos + 1.0).abs() < UNIT_TOL, "cos(z, -z) = {anti_cos}");
        assert!((z.cosine_distance(&z.negate()).unwrap() - 2.0).abs() < UNIT_TOL);
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
}

// 2 ------------------------------------------------------------------------

fn slerp_correctness() {
    let a = unit(&[1.0, 0.0]);
    let b = unit(&[0.0, 1.0]);
    let mid = sphere::slerp(&a, &b, 0.5).unwrap();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for (got, want) in mid.as_slice().iter().zip([h, h]) {
        assert!((f64::from(*got) - want).abs() < UNIT_TOL, "quarter circle: {got} vs {want}");
    }

    let mut r = rng(2);
    for _ in 0..200 {
        let dim = r.random_range(2..=64);
        let a = gaussian_unit(dim, &mut r);
        let b = gaussian_unit(dim, &mut r);
        for (t, end) in [(0.0, &a), (1.0, &b)] {
            let got = sphere::slerp(&a, &b, t).unwrap();
            for (x, y) in got.as_slice().iter().zip(end.as_slice()) {
                assert!((f64::from(*x) - f64::from(*y)).abs() < UNIT_TOL, "endpoint t={t}");
            }
        }
        let t = r.random_range(0.0..1.0);
        let z = sphere::slerp(&a, &b, t).unwrap();
        assert!((z.norm() - 1.0).abs() < UNIT_TOL, "norm {}", z.norm());
    }
}

// 3 ------------------------------------------------------------------------

fn sampler_oracle_equivalence() {
    let mut r = rng(3);
    let margins = [-0.9, -0.5, 0.0, 0.5, 0.9];
    for instance in 0..100 {
        let n = r.random_range(1..=64);
        let dim = r.random_range(2..=32);
        let anchors = random_anchor_set(n, dim, &mut r);
        let z = gaussian_unit(dim, &mut r);
        let m = margins[instance % margins.len()];

        let got = fiva::sample_fake(&z, &anchors, m).unwrap();
        let mut best = 0;
        let mut best_score = f64::INFINITY;
        for (i, a) in anchors.anchors().iter().enumerate() {
            let score = (oracle_cosine(&z, a) + m).abs();
            if score < best_score {
                best = i;
                best_score = score;
            }
        }
        assert_eq!(got.anchor_index, best, "instance {instance}, m = {m}");
        assert_eq!(&got.fake_identity, &anchors.anchors()[best]);

        if m == 0.0 {
            for a in anchors.anchors() {
                assert!(got.achieved_cosine.abs() <= z.cosine(a).unwrap().abs());
            }
        }
    }
}

// 4 ------------------------------------------------------------------------

/// `cos θ · e_i + sin θ · e_j` with `cos θ = c`.
fn in_plane(dim: usize, i: usize, j: usize, c: f64) -> Embedding {
    let mut v = vec![0.0; dim];
    v[i] = c;
    v[j] = (1.0 - c * c).sqrt();
    unit(&v)
}

fn itm_behavior() {
    let dim = 8;
    let z1 = in_plane(dim, 0, 1, 1.0);
    let z1_near = in_plane(dim, 0, 1, 1.0 - 0.62); // distance 0.62 < 0.63
    let z2 = in_plane(dim, 0, 2, 1.0 - 0.64); // distance 0.64 > 0.63
    let z3 = in_plane(dim, 3, 4, 1.0);
    let sequence = [&z1, &z1_near, &z2, &z1, &z3];

    assert!(z1.cosine_distance(&z1_near).unwrap() < f64::from(ITM_THRESHOLD));
    assert!(z1.cosine_distance(&z2).unwrap() > f64::from(ITM_THRESHOLD));

    let mut r = rng(4);
    let anchors = Arc::new(random_anchor_set(128, dim, &mut r));
    let mut tracker = IdentityTracker::<AnchorSampler>::with_anchors(anchors.clone(), ITM_THRESHOLD, 0.0).unwrap();
    let results: Vec<_> = sequence.iter().map(|z| tracker.track(z).unwrap()).collect();
    let keys: Vec<usize> = results.iter().map(|t| t.key).collect();
    assert_eq!(keys, [0, 0, 1, 0, 2]);
    assert_eq!(tracker.state().key_pointer(), 3);
    let bits = |e: &Embedding| e.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&results[0].fake_identity), bits(&results[1].fake_identity));
    assert_eq!(bits(&results[0].fake_identity), bits(&results[3].fake_identity));
    assert_ne!(results[0].fake_identity, results[2].fake_identity);

    // Interrupt after three frames, persist, reload, finish: same trajectory.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.itm");
    let mut first = IdentityTracker::<AnchorSampler>::with_anchors(anchors.clone(), ITM_THRESHOLD, 0.0).unwrap();
    let mut resumed: Vec<_> = sequence[..3].iter().map(|z| first.track(z).unwrap()).collect();
    first.state().save(&path).unwrap();
    let loaded = TrackerState::load(&path).unwrap();
    assert_eq!(&loaded, first.state());
    let sampler = AnchorSampler::new(anchors, f64::from(loaded.margin())).unwrap();
    let mut second = IdentityTracker::new(loaded, sampler);
    resumed.extend(sequence[3..].iter().map(|z| second.track(z).unwrap()));
    assert_eq!(resumed, results);
    assert_eq!(second.state(), tracker.state());
}

// 5 ------------------------------------------------------------------------

fn temporal_metric() {
    let mut r = rng(5);
    let z = gaussian_unit(512, &mut r);
    let same = vec![z; 7];
    let v = VideoConsistency::from_matrix(&metrics::pairwise_distance_matrix(&same).unwrap());
    assert_eq!((v.mean, v.std), (0.0, 0.0));

    // y has 22 significant bits, so x = 0.75·y and 1.25·y are exact in f32
    // and the stored pair sits at cosine 0.6 to double precision.
    let y = (0.8f64 * (1u64 << 22) as f64).round() as f32 / (1u64 << 22) as f32;
    let x = 0.75 * y;
    let a = Embedding::from_unit(vec![1.0, 0.0]).unwrap();
    let b = Embedding::from_unit(vec![x, y]).unwrap();
    let report = metrics::temporal_consistency(&[vec![a, b]]).unwrap();
    assert!((report.mean_of_means - 0.2).abs() < TEMPORAL_TOL, "mu = {}", report.mean_of_means);
    assert!((report.mean_std - 0.2).abs() < TEMPORAL_TOL, "sigma = {}", report.mean_std);

    let frames: Vec<Embedding> = (0..12).map(|_| gaussian_unit(32, &mut r)).collect();
    let base = VideoConsistency::from_matrix(&metrics::pairwise_distance_matrix(&frames).unwrap());
    for _ in 0..50 {
        let mut shuffled = frames.clone();
        shuffled.shuffle(&mut r);
        let s = VideoConsistency::from_matrix(&metrics::pairwise_distance_matrix(&shuffled).unwrap());
        assert!((s.mean - base.mean).abs() < TEMPORAL_TOL);
        assert!((s.std - base.std).abs() < TEMPORAL_TOL);
    }

    // The statistic is over all N² entries, diagonal included.
    let m = DistanceMatrix::from_values(2, vec![0.0, 0.4, 0.4, 0.0]).unwrap();
    let v = VideoConsistency::from_matrix(&m);
    assert!((v.mean - 0.2).abs() < TEMPORAL_TOL && (v.std - 0.2).abs() < TEMPORAL_TOL);
}

// 6 ------------------------------------------------------------------------

fn anchor_sampler(seed: u64, dim: usize, margin: f64) -> AnchorSampler {
    let sources = synth::generate_identities(&SynthConfig {
        dim,
        identity_count: 256,
        seed,
        ..SynthConfig::default()
    })
    .unwrap();
    let means: Vec<Embedding> = sources.entries().iter().map(|e| e.embedding.clone()).collect();
    let anchors = sphere::build_anchor_set(&means, 1, sphere::DEFAULT_BLEND).unwrap();
    AnchorSampler::new(Arc::new(anchors), margin).unwrap()
}

fn leakage_reproduction() {
    let cfg = SynthConfig {
        identity_count: 100,
        frames_per_identity: 3,
        seed: 6,
        ..SynthConfig::default()
    };
    let thresholds = BenchThresholds {
        retrieval: RETRIEVAL_THRESHOLD,
        tracking: ITM_THRESHOLD,
    };

    let neg = synth::end_to_end_benchmark(&cfg, &MockAnonymizer::Negation, &thresholds).unwrap();
    assert_eq!(neg.per_frame.id.success_rate, 0.0, "negation ID");
    assert_eq!(neg.per_frame.neg_id.success_rate, 1.0, "negation negated ID");

    let sampled = MockAnonymizer::AnchorSample(anchor_sampler(1006, cfg.dim, 0.0));
    let fiva = synth::end_to_end_benchmark(&cfg, &sampled, &thresholds).unwrap();
    assert_eq!(fiva.per_frame.id.success_rate, 0.0, "sampled ID");
    assert_eq!(fiva.per_frame.neg_id.success_rate, 0.0, "sampled negated ID");
    assert_eq!(fiva.tracked.id.success_rate, 0.0, "tracked ID");
    assert_eq!(fiva.tracked.neg_id.success_rate, 0.0, "tracked negated ID");
}

// 7 ------------------------------------------------------------------------

fn itm_consistency_ordering() {
    let start = Instant::now();
    let cfg = SynthConfig {
        identity_count: 20,
        frames_per_identity: 10,
        jitter_sigma: 0.01,
        seed: 7,
        ..SynthConfig::default()
    };
    let anonymizer = MockAnonymizer::AnchorSample(anchor_sampler(1007, cfg.dim, 0.0));
    let report = synth::end_to_end_benchmark(&cfg, &anonymizer, &BenchThresholds::default()).unwrap();
    assert_eq!(report.tracked.temporal.mean_std, 0.0, "tracked sigma");
    assert_eq!(report.tracked.temporal.mean_of_means, 0.0, "tracked mu");
    assert!(report.per_frame.temporal.mean_std > 0.0, "per-frame sigma");
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
}

// 8 ------------------------------------------------------------------------

fn uniform_noise_contract() {
    let eps = 0.15;
    let image = Image::filled(10, 10, 3, 0.5).unwrap();
    let spec = NoiseSpec::new(eps, 0.5, 8).unwrap();
    let (noised, trace) = defense::uniform_pixel_noise_traced(&image, &spec).unwrap();
    assert_eq!(trace.locations.len(), 50);
    assert!(trace.deltas.iter().all(|d| (-eps..=eps).contains(d)));
    let changed = (0..image.locations())
        .filter(|&i| image.location(i) != noised.location(i))
        .count();
    assert_eq!(changed, 50);
    for i in 0..image.locations() {
        if trace.locations.binary_search(&i).is_err() {
            assert_eq!(image.location(i), noised.location(i));
        }
    }

    for (h, w) in [(10, 10), (7, 13)] {
        let image = Image::filled(h, w, 3, 0.25).unwrap();
        for (numer, denom) in [(10u64, 100u64), (47, 100)] {
            let fraction = numer as f64 / denom as f64;
            let expected = (numer * (h * w) as u64 / denom) as usize;
            let spec = NoiseSpec::new(eps, fraction, 9).unwrap();
            let (_, t) = defense::uniform_pixel_noise_traced(&image, &spec).unwrap();
            assert_eq!(t.locations.len(), expected, "{h}x{w} fraction {fraction}");
        }
    }

    let sweep_a = defense::fraction_sweep(&image, eps, &[0.1, 0.47], 10).unwrap();
    let sweep_b = defense::fraction_sweep(&image, eps, &[0.1, 0.47], 10).unwrap();
    for ((_, a), (_, b)) in sweep_a.iter().zip(&sweep_b) {
        assert_eq!(ppm::encode(a), ppm::encode(b));
    }
    let again = defense::uniform_pixel_noise(&image, &spec).unwrap();
    assert_eq!(ppm::encode(&again), ppm::encode(&noised));
}

// 9 ------------------------------------------------------------------------

fn parameter_noise() {
    let eps = 0.10;
    let params = ParameterVector::new(vec![0.0; 100_000]).unwrap();
    for seed in [9, 19, 29] {
        let noised = defense::parameter_noise(&params, eps, seed).unwrap();
        let n = noised.len() as f64;
        let mean = noised.values().iter().sum::<f64>() / n;
        let var = noised.values().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() <= 0.002, "seed {seed}: mean {mean}");
        assert!((var.sqrt() - eps).abs() <= 0.02 * eps, "seed {seed}: std {}", var.sqrt());
    }
}

// 10 -----------------------------------------------------------------------

fn fgsm_contract() {
    let mut r = rng(10);
    let (h, w, c) = (8, 8, 3);
    let n = h * w * c;
    let x_vals: Vec<f64> = (0..n).map(|_| r.random_range(0.1..0.9)).collect();
    let c_vals: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
    let x = Image::new(h, w, c, x_vals.clone()).unwrap();
    let oracle = defense::toy_oracle(Image::new(h, w, c, c_vals.clone()).unwrap());
    let grad = oracle.evaluate(&x).unwrap().gradient;

    let step = 1e-4;
    let mut checked = 0;
    for i in 0..n {
        if (x_vals[i] - c_vals[i]).abs() < 0.05 {
            continue;
        }
        let mut plus = x_vals.clone();
        let mut minus = x_vals.clone();
        plus[i] += step;
        minus[i] -= step;
        let lp = oracle.evaluate(&Image::new(h, w, c, plus).unwrap()).unwrap().loss;
        let lm = oracle.evaluate(&Image::new(h, w, c, minus).unwrap()).unwrap().loss;
        let fd = (lp - lm) / (2.0 * step);
        let rel = (fd - grad[i]).abs() / grad[i].abs();
        assert!(rel < 1e-4, "coordinate {i}: fd {fd} vs {}", grad[i]);
        checked += 1;
        if checked == 100 {
            break;
        }
    }
    assert_eq!(checked, 100);

    // Analytic example: ∇ = 2(x - c) = [0.4, 0, 0.9, -0.2].
    let eps = 0.1;
    let xa = [0.5, 0.2, 0.95, 0.0];
    let ca = [0.3, 0.2, 0.5, 0.1];
    let out = defense::fgsm_defense(
        &Image::new(2, 2, 1, xa.to_vec()).unwrap(),
        &defense::toy_oracle(Image::new(2, 2, 1, ca.to_vec()).unwrap()),
        eps,
    )
    .unwrap();
    let sign = [1.0, 0.0, 1.0, -1.0];
    for i in 0..4 {
        let want = (xa[i] + eps * sign[i]).clamp(0.0, 1.0);
        assert_eq!(out.pixels()[i], want, "element {i}");
    }
    let expected = [0.6, 0.2, 1.0, 0.0];
    for (got, want) in out.pixels().iter().zip(expected) {
        assert!((got - want).abs() < 1e-12);
    }

    let out = defense::fgsm_defense(&x, &oracle, 0.15).unwrap();
    let linf = out
        .pixels()
        .iter()
        .zip(x.pixels())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(linf <= 0.15 + 1e-12, "L-inf {linf}");
}

// 11 -----------------------------------------------------------------------

/// A unit vector at cosine distance `d` from `z`.
fn at_distance(z: &Embedding, d: f64, rng: &mut ChaCha8Rng) -> Embedding {
    let zv: Vec<f64> = z.as_slice().iter().map(|&v| f64::from(v)).collect();
    let mut u: Vec<f64> = gaussian_unit(zv.len(), rng).as_slice().iter().map(|&v| f64::from(v)).collect();
    let proj: f64 = u.iter().zip(&zv).map(|(a, b)| a * b).sum();
    u.iter_mut().zip(&zv).for_each(|(a, b)| *a -= proj * b);
    let un = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let c = 1.0 - d;
    let s = (1.0 - c * c).sqrt();
    unit(&zv.iter().zip(&u).map(|(a, b)| c * a + s * b / un).collect::<Vec<_>>())
}

fn detector_plumbing() {
    let mut r = rng(11);
    let dim = 64;
    let mut genuine = Vec::new();
    let mut fake = Vec::new();
    for _ in 0..200 {
        let z = gaussian_unit(dim, &mut r);
        let g = at_distance(&z, r.random_range(0.0..0.1), &mut r);
        genuine.push((z.clone(), g));
        let f = at_distance(&z, r.random_range(0.61..1.5), &mut r);
        fake.push((z, f));
    }
    let gd = detector::score_distribution(&genuine).unwrap().scores;
    let fd = detector::score_distribution(&fake).unwrap().scores;
    assert!(gd.iter().all(|&d| d < 0.1) && fd.iter().all(|&d| d > 0.6));

    let counts = detector::error_counts(&gd, &fd, DETECTION_THRESHOLD);
    assert_eq!((counts.false_positives, counts.false_negatives), (0, 0));
    for (z, o) in &genuine {
        assert!(!detector::detect(z, o, DETECTION_THRESHOLD).unwrap().is_fake);
    }
    for (z, o) in &fake {
        assert!(detector::detect(z, o, DETECTION_THRESHOLD).unwrap().is_fake);
    }

    let all: Vec<_> = genuine.iter().chain(&fake).collect();
    let mut last: Option<(usize, usize, usize)> = None;
    for k in 1..=20 {
        let t = k as f64 * 0.095;
        let flagged = all.iter().filter(|(a, b)| detector::detect(a, b, t).unwrap().is_fake).count();
        let ec = detector::error_counts(&gd, &fd, t);
        if let Some((pf, pfp, pfn)) = last {
            assert!(flagged <= pf, "flagged count rose at threshold {t}");
            assert!(ec.false_positives <= pfp && ec.false_negatives >= pfn);
        }
        last = Some((flagged, ec.false_positives, ec.false_negatives));
    }
}

// 12 -----------------------------------------------------------------------

fn run_cli(args: &[&str]) -> (i32, Vec<u8>, Vec<u8>) {
    let out = Command::new(env!("CARGO_BIN_EXE_fiva"))
        .args(args)
        .env_remove("FIVA_SEED")
        .output()
        .expect("spawn fiva");
    (out.status.code().unwrap_or(-1), out.stdout, out.stderr)
}

fn dir_bytes(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn io_bit_exactness() {
    let mut r = rng(12);
    // Containers, with and without labels.
    let data: Vec<f32> = (0..5 * 7).map(|_| r.random_range(-1.0f32..1.0)).collect();
    let labels = Some((0..5).map(|i| format!("person {i}")).collect());
    for labels in [None, labels] {
        let raw = RawEmbeddings::new(7, data.clone(), labels).unwrap();
        let bytes = container::encode(&raw);
        let back = container::decode(&bytes).unwrap();
        assert_eq!(container::encode(&back), bytes);
        assert_eq!(back, raw);
    }

    // PPM, canonical form and from random images.
    let image = Image::new(4, 5, 3, (0..60).map(|_| f64::from(r.random_range(0u8..=255)) / 255.0).collect()).unwrap();
    let bytes = ppm::encode(&image);
    assert_eq!(ppm::encode(&ppm::decode(&bytes).unwrap()), bytes);

    // Malformed inputs fail with named errors.
    let good = container::encode(&RawEmbeddings::new(2, vec![1.0, 0.0, 0.0, 1.0], None).unwrap());
    let bad_magic = [b"NOTMAGIC".as_slice(), &good[8..]].concat();
    let mut bad_labels = good.clone();
    bad_labels.extend_from_slice(b"only-one\n");
    assert!(matches!(container::decode(&[]), Err(Error::Truncated { .. })));
    assert!(matches!(container::decode(&bad_magic), Err(Error::BadMagic { .. })));
    assert!(matches!(container::decode(&good[..good.len() - 1]), Err(Error::Truncated { .. })));
    assert!(matches!(container::decode(&bad_labels), Err(Error::LabelCountMismatch { .. })));
    for cut in 0..good.len() {
        assert!(container::decode(&good[..cut]).is_err());
    }

    assert!(matches!(ppm::decode(b"P3\n1 1\n255\n0 0 0\n"), Err(Error::UnsupportedFormat(_))));
    assert!(matches!(ppm::decode(b"P6\n1 1\n65535\n\0\0\0\0\0\0"), Err(Error::UnsupportedFormat(_))));
    assert!(matches!(ppm::decode(b"P6\n2 2\n255\n\0\0\0"), Err(Error::Truncated { .. })));
    assert!(matches!(ppm::decode(b"P6\n1 1\n255\n\0\0\0extra"), Err(Error::UnsupportedFormat(_))));
    assert!(ppm::decode(b"").is_err());
    assert!(ppm::decode(b"\x89PNG\r\n").is_err());

    assert!(matches!(emb_csv::parse("1,0\n0,1,0\n"), Err(Error::DimensionMismatch { .. })));
    assert!(matches!(TrackerState::from_bytes(b"FIVAITM1\0"), Err(Error::CorruptState(_))));
    assert!(matches!(TrackerState::from_bytes(&good), Err(Error::CorruptState(_))));

    // CLI outputs are identical across worker counts.
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let img_path = d.join("face.ppm");
    ppm::write(&img_path, &image).unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "2", "8"] {
        let run_dir = d.join(format!("t{threads}"));
        let s = |p: &str| run_dir.join(p).to_string_lossy().into_owned();
        let bench = run_cli(&[
            "--threads", threads, "--seed", "42", "--dim", "32", "bench", "--out-dir", &s("bench"),
            "--identities", "12", "--frames", "4", "--anchor-sources", "40",
        ]);
        assert_eq!(bench.0, 0, "bench: {}", String::from_utf8_lossy(&bench.2));
        let track = run_cli(&[
            "--threads", threads, "track", "--input", &s("bench/frames.emb"), "--anchors",
            &s("bench/anchors.emb"), "--out", &s("tracked.emb"), "--state-out", &s("state.itm"),
        ]);
        assert_eq!(track.0, 0, "track: {}", String::from_utf8_lossy(&track.2));
        let defend = run_cli(&[
            "--threads", threads, "--seed", "5", "defend", "--mode", "uniform", "--input",
            img_path.to_str().unwrap(), "--out", &s("sweep"), "--sweep", "0.1,0.47,1",
        ]);
        assert_eq!(defend.0, 0, "defend: {}", String::from_utf8_lossy(&defend.2));
        let temporal = run_cli(&["--threads", threads, "eval-temporal", "--frames", &s("tracked.emb")]);
        assert_eq!(temporal.0, 0);

        let mut all = dir_bytes(&run_dir);
        all.extend(dir_bytes(&run_dir.join("bench")));
        let sweep_listing = String::from_utf8(defend.1).unwrap().replace(&*run_dir.to_string_lossy(), "");
        outputs.push((all, bench.1, track.1, sweep_listing, temporal.1, dir_bytes(&run_dir.join("sweep"))));
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]), "CLI output differs across thread counts");

    let (code, _, _) = run_cli(&["track", "--no-such-flag"]);
    assert_eq!(code, 1);
    let (code, _, err) = run_cli(&["eval-temporal", "--frames", d.join("missing.emb").to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(!err.is_empty());
}

// --------------------------------------------------------------------------

fn main() -> ExitCode {
    let criteria: [(&str, fn()); 12] = [
        ("hypersphere identities over 10,000 unit vectors", hypersphere_identities),
        ("slerp endpoints, norm and quarter-circle case", slerp_correctness),
        ("sampler matches exhaustive argmin on 100 instances", sampler_oracle_equivalence),
        ("identity tracking keys, repeats and save/load", itm_behavior),
        ("temporal consistency analytic cases and permutation invariance", temporal_metric),
        ("identity leakage: negation vs anchor sampling", leakage_reproduction),
        ("tracked videos are consistent, per-frame resampling is not", itm_consistency_ordering),
        ("uniform pixel noise counts, bounds and determinism", uniform_noise_contract),
        ("parameter noise moments", parameter_noise),
        ("FGSM gradient, analytic step and L-inf bound", fgsm_contract),
        ("detector error counts and threshold monotonicity", detector_plumbing),
        ("I/O bit-exactness, malformed inputs, CLI thread determinism", io_bit_exactness),
    ];

    panic::set_hook(Box::new(|_| {}));
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check));
        let ms = start.elapsed().as_millis();
        match outcome {
            Ok(()) => println!("PASS criterion {:>2}: {name} ({ms} ms)", i + 1),
            Err(e) => {
                failures += 1;
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                println!("FAIL criterion {:>2}: {name} ({ms} ms): {msg}", i + 1);
            }
        }
    }
    let _ = panic::take_hook();
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
