//! The `fiva` command-line interface.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors. Data goes
//! to the named output files or stdout; diagnostics go to stderr.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use crate::defense::{self, NoiseSpec, ParameterVector};
use crate::detector::{self, HISTOGRAM_BINS};
use crate::error::Error;
use crate::io::{self, container, ppm, RawEmbeddings};
use crate::metrics::{self, TemporalReport};
use crate::rng;
use crate::sampler::{self, AnchorSampler};
use crate::sphere::{self, AnchorProvenance, AnchorSet, Embedding, Gallery, LabeledEmbedding};
use crate::synth::{self, BenchThresholds, MockAnonymizer, SynthConfig};
use crate::tracker::{self, IdentityTracker, TrackerState};

#[derive(Debug, Parser)]
#[command(name = "fiva", version, about = "Identity-embedding anonymization toolkit")]
struct Cli {
    /// Embedding dimension; inputs of any other width are rejected
    #[arg(long, global = true)]
    dim: Option<usize>,

    /// Seed for every stochastic step (default: $FIVA_SEED, then 0)
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// JSON file of flat key/value defaults, keyed by long flag name
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads (default: all cores); results do not depend on it
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build an anchor set by slerping identity means with their shifted neighbours
    BuildAnchors(BuildAnchorsArgs),
    /// Pick a fake identity for each query embedding
    Sample(SampleArgs),
    /// Run identity tracking over a stream of embeddings (file order = frame order)
    Track(TrackArgs),
    /// Thresholded identity retrieval (ID, or negated ID with --negate)
    EvalRetrieval(EvalRetrievalArgs),
    /// Temporal identity consistency, one embedding file per video
    EvalTemporal(EvalTemporalArgs),
    /// Apply a reconstruction-attack defense to an image or parameter vector
    Defend(DefendArgs),
    /// Score reconstruction input/output embedding pairs as genuine or fake
    Detect(DetectArgs),
    /// Synthetic end-to-end benchmark with a mock anonymizer
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct BuildAnchorsArgs {
    /// Identity means (or raw embeddings with --group-by-label)
    #[arg(long)]
    means: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Shift-and-slerp repetitions [default: 1]
    #[arg(long)]
    rounds: Option<u32>,
    /// Interpolation weight in (0, 1) [default: 0.5]
    #[arg(long)]
    t: Option<f64>,
    /// Average rows sharing a label into one mean per identity first
    #[arg(long)]
    group_by_label: bool,
    /// Write per-anchor provenance as CSV
    #[arg(long, value_name = "FILE")]
    provenance: Option<PathBuf>,
    /// Normalize input rows instead of requiring unit norm
    #[arg(long)]
    normalize: bool,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[arg(long)]
    anchors: PathBuf,
    #[arg(long)]
    query: PathBuf,
    /// Output file with one fake identity per query
    #[arg(long)]
    out: Option<PathBuf>,
    /// Target similarity is -margin: 0 = orthogonal, -0.9 = close, 0.9 = near-antipodal [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    margin: Option<f64>,
    /// Sample far from both the query and its antipode (margin 0)
    #[arg(long, conflicts_with = "margin")]
    far: bool,
    #[arg(long)]
    normalize: bool,
}

#[derive(Debug, Args)]
struct TrackArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    anchors: PathBuf,
    /// Output file with one fake identity per input frame
    #[arg(long)]
    out: PathBuf,
    /// Match log CSV (default: stdout)
    #[arg(long)]
    log: Option<PathBuf>,
    /// Cosine-distance match threshold [default: 0.63]
    #[arg(long)]
    threshold: Option<f64>,
    /// Sampling margin for new identities [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    margin: Option<f64>,
    #[arg(long, value_name = "FILE")]
    state_in: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    state_out: Option<PathBuf>,
    #[arg(long)]
    normalize: bool,
}

#[derive(Debug, Args)]
struct EvalRetrievalArgs {
    /// Labelled gallery, one entry per identity
    #[arg(long)]
    gallery: PathBuf,
    /// Labelled probes; the label is the true identity
    #[arg(long)]
    probes: PathBuf,
    /// Cosine-distance acceptance threshold [default: 0.63]
    #[arg(long)]
    threshold: Option<f64>,
    /// Negate probes before retrieval
    #[arg(long)]
    negate: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    normalize: bool,
}

#[derive(Debug, Args)]
struct EvalTemporalArgs {
    #[arg(long, num_args = 1.., required = true)]
    frames: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    normalize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DefenseMode {
    Uniform,
    Param,
    Fgsm,
}

#[derive(Debug, Args)]
struct DefendArgs {
    #[arg(long, value_enum)]
    mode: DefenseMode,
    /// PPM/PGM image, or an embedding container for --mode param
    #[arg(long)]
    input: PathBuf,
    /// Output file, or output directory with --sweep
    #[arg(long)]
    out: PathBuf,
    /// Noise scale [default: 0.15, or 0.10 for param]
    #[arg(long)]
    epsilon: Option<f64>,
    /// Share of pixel locations to noise [default: 1]
    #[arg(long)]
    fraction: Option<f64>,
    /// Comma-separated fractions; writes one image per fraction into --out
    #[arg(long, value_delimiter = ',')]
    sweep: Option<Vec<f64>>,
    /// Reference image of the quadratic toy attacker objective (fgsm)
    #[arg(long)]
    center: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DetectArgs {
    /// Embeddings of the reconstruction model's inputs
    #[arg(long)]
    inputs: PathBuf,
    /// Embeddings of its outputs, aligned by row
    #[arg(long)]
    outputs: PathBuf,
    /// Distance above which a pair is flagged [default: 0.6]
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    normalize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MockMode {
    Negation,
    Anchor,
    Blend,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    out_dir: PathBuf,
    /// [default: 100]
    #[arg(long)]
    identities: Option<usize>,
    /// Frames per identity [default: 10]
    #[arg(long)]
    frames: Option<usize>,
    /// Per-element Gaussian frame jitter [default: 0.01]
    #[arg(long)]
    jitter: Option<f64>,
    #[arg(long, value_enum, default_value = "anchor")]
    mode: MockMode,
    /// Sampling margin [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    margin: Option<f64>,
    /// Blend weight toward the anchor for --mode blend [default: 0.5]
    #[arg(long)]
    alpha: Option<f64>,
    /// Synthetic identities the anchor set is built from [default: 256]
    #[arg(long)]
    anchor_sources: Option<usize>,
    /// [default: 1]
    #[arg(long)]
    anchor_rounds: Option<u32>,
    /// Retrieval threshold [default: 0.63]
    #[arg(long)]
    threshold: Option<f64>,
    /// Tracker match threshold [default: 0.63]
    #[arg(long)]
    track_threshold: Option<f64>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    0
                }
                _ => {
                    let _ = write!(stderr, "{}", e.render());
                    1
                }
            };
        }
    };
    match dispatch(cli, stdout, stderr) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}\n\nUsage: fiva [OPTIONS] <COMMAND>\nRun `fiva --help` for details.");
            1
        }
        Err(CliError::Data(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            2
        }
    }
}

fn dispatch(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    let settings = Settings::load(cli.config.as_deref())?;
    let ctx = Context {
        dim: settings.opt_usize(cli.dim, "dim")?,
        seed: resolve_seed(cli.seed, &settings)?,
        settings,
    };
    let threads = ctx.settings.opt_usize(cli.threads, "threads")?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))?;
    // Console handles are not `Send`, so commands write into buffers that
    // are flushed once the pool returns.
    let mut out_buf: Vec<u8> = Vec::new();
    let mut err_buf: Vec<u8> = Vec::new();
    let result = pool.install(|| {
        let out: &mut dyn Write = &mut out_buf;
        let err: &mut dyn Write = &mut err_buf;
        match cli.command {
            Command::BuildAnchors(a) => build_anchors(&ctx, a, out),
            Command::Sample(a) => sample(&ctx, a, out),
            Command::Track(a) => track(&ctx, a, out),
            Command::EvalRetrieval(a) => eval_retrieval(&ctx, a, out, err),
            Command::EvalTemporal(a) => eval_temporal(&ctx, a, out),
            Command::Defend(a) => defend(&ctx, a, out),
            Command::Detect(a) => detect(&ctx, a, out),
            Command::Bench(a) => bench(&ctx, a, out),
        }
    });
    stdout.write_all(&out_buf).and_then(|_| stdout.flush()).map_err(write_err)?;
    let _ = stderr.write_all(&err_buf);
    result
}

struct Context {
    dim: Option<usize>,
    seed: u64,
    settings: Settings,
}

impl Context {
    fn check_dim(&self, raw: &RawEmbeddings) -> CliResult<()> {
        match self.dim {
            Some(d) if !raw.is_empty() && raw.dim != d => Err(Error::DimensionMismatch {
                expected: d,
                actual: raw.dim,
            }
            .into()),
            _ => Ok(()),
        }
    }

    fn embeddings(&self, path: &Path, normalize: bool) -> CliResult<(Vec<Embedding>, Option<Vec<String>>)> {
        let raw = io::load_embeddings(path)?;
        self.check_dim(&raw)?;
        let labels = raw.labels.clone();
        Ok((raw.into_embeddings(normalize)?, labels))
    }

    fn labeled(&self, path: &Path, normalize: bool) -> CliResult<Vec<LabeledEmbedding>> {
        let raw = io::load_embeddings(path)?;
        self.check_dim(&raw)?;
        Ok(raw.into_labeled(normalize)?)
    }

    fn anchors(&self, path: &Path) -> CliResult<AnchorSet> {
        let (anchors, _) = self.embeddings(path, false)?;
        Ok(AnchorSet::from_embeddings(anchors)?)
    }
}

/// Flat key/value defaults from `--config`.
struct Settings {
    values: HashMap<String, Value>,
}

impl Settings {
    fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self {
                values: HashMap::new(),
            });
        };
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let Value::Object(map) = value else {
            return Err(Error::Config(format!("{}: expected a JSON object", path.display())).into());
        };
        if let Some((k, _)) = map.iter().find(|(_, v)| v.is_object() || v.is_array()) {
            return Err(Error::Config(format!("key {k:?}: nested values are not supported")).into());
        }
        Ok(Self {
            values: map.into_iter().collect(),
        })
    }

    fn opt_f64(&self, flag: Option<f64>, key: &str) -> CliResult<Option<f64>> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_f64()
                .map(Some)
                .ok_or_else(|| Error::Config(format!("key {key:?} must be a number")).into()),
        }
    }

    fn f64(&self, flag: Option<f64>, key: &str, default: f64) -> CliResult<f64> {
        Ok(self.opt_f64(flag, key)?.unwrap_or(default))
    }

    fn opt_u64(&self, flag: Option<u64>, key: &str) -> CliResult<Option<u64>> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_u64()
                .map(Some)
                .ok_or_else(|| Error::Config(format!("key {key:?} must be a non-negative integer")).into()),
        }
    }

    fn opt_usize(&self, flag: Option<usize>, key: &str) -> CliResult<Option<usize>> {
        Ok(self.opt_u64(flag.map(|v| v as u64), key)?.map(|v| v as usize))
    }

    fn usize(&self, flag: Option<usize>, key: &str, default: usize) -> CliResult<usize> {
        Ok(self.opt_usize(flag, key)?.unwrap_or(default))
    }
}

fn resolve_seed(flag: Option<u64>, settings: &Settings) -> CliResult<u64> {
    if let Some(seed) = settings.opt_u64(flag, "seed")? {
        return Ok(seed);
    }
    match std::env::var(rng::SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{} must be an unsigned integer, got {s:?}", rng::SEED_ENV))),
        Err(_) => Ok(0),
    }
}

fn out_writer<'a>(path: Option<&Path>, stdout: &'a mut dyn Write) -> CliResult<Box<dyn Write + 'a>> {
    match path {
        Some(p) => {
            let file = fs::File::create(p).map_err(|e| Error::io(p, e))?;
            Ok(Box::new(std::io::BufWriter::new(file)))
        }
        None => Ok(Box::new(stdout)),
    }
}

fn csv_writer<'a>(path: Option<&Path>, stdout: &'a mut dyn Write) -> CliResult<csv::Writer<Box<dyn Write + 'a>>> {
    Ok(csv::WriterBuilder::new()
        .flexible(true)
        .from_writer(out_writer(path, stdout)?))
}

fn csv_err(path: Option<&Path>) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| {
        let name = path.map_or("<stdout>".to_string(), |p| p.display().to_string());
        CliError::Data(Error::io(name, std::io::Error::other(e.to_string())))
    }
}

fn write_err(e: std::io::Error) -> CliError {
    CliError::Data(Error::io("<stdout>", e))
}

fn build_anchors(ctx: &Context, args: BuildAnchorsArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let rounds = ctx.settings.opt_u64(args.rounds.map(u64::from), "rounds")?.unwrap_or(1);
    let rounds = u32::try_from(rounds).map_err(|_| CliError::Usage("rounds is too large".into()))?;
    let t = ctx.settings.f64(args.t, "t", sphere::DEFAULT_BLEND)?;

    let means = if args.group_by_label {
        let rows = ctx.labeled(&args.means, args.normalize)?;
        let mut order: Vec<String> = Vec::new();
        let mut groups: HashMap<String, Vec<Embedding>> = HashMap::new();
        for row in rows {
            if !groups.contains_key(&row.label) {
                order.push(row.label.clone());
            }
            groups.entry(row.label).or_default().push(row.embedding);
        }
        order
            .iter()
            .map(|label| sphere::mean_embedding(&groups[label]))
            .collect::<crate::Result<Vec<_>>>()?
    } else {
        ctx.embeddings(&args.means, args.normalize)?.0
    };

    let set = sphere::build_anchor_set(&means, rounds, t)?;
    container::write(&args.out, &RawEmbeddings::from_embeddings(set.anchors()))?;
    if let Some(path) = &args.provenance {
        let mut w = csv_writer(Some(path), stdout)?;
        let err = csv_err(Some(path));
        w.write_record(["anchor", "round", "left", "right", "t"]).map_err(&err)?;
        for (i, p) in set.provenance().iter().enumerate() {
            if let AnchorProvenance::Blend { round, left, right, t } = p {
                w.write_record([i.to_string(), round.to_string(), left.to_string(), right.to_string(), t.to_string()])
                    .map_err(&err)?;
            }
        }
        for s in set.skipped() {
            w.write_record(["skipped".into(), s.round.to_string(), s.left.to_string(), s.right.to_string(), t.to_string()])
                .map_err(&err)?;
        }
        w.flush().map_err(write_err)?;
    }
    writeln!(stdout, "anchors={} skipped={} rounds={rounds}", set.len(), set.skipped().len()).map_err(write_err)?;
    Ok(())
}

fn sample(ctx: &Context, args: SampleArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let anchors = ctx.anchors(&args.anchors)?;
    let margin = if args.far {
        sampler::DEFAULT_FAR_MARGIN
    } else {
        ctx.settings.f64(args.margin, "margin", 0.0)?
    };
    let (queries, labels) = ctx.embeddings(&args.query, args.normalize)?;
    let results = queries
        .iter()
        .map(|q| sampler::sample_fake(q, &anchors, margin))
        .collect::<crate::Result<Vec<_>>>()?;

    if let Some(out) = &args.out {
        let fakes: Vec<Embedding> = results.iter().map(|r| r.fake_identity.clone()).collect();
        let mut raw = RawEmbeddings::from_embeddings(&fakes);
        raw.labels = labels;
        container::write(out, &raw)?;
    }
    let mut w = csv_writer(None, stdout)?;
    let err = csv_err(None);
    w.write_record(["query", "anchor_index", "achieved_cosine"]).map_err(&err)?;
    for (i, r) in results.iter().enumerate() {
        w.write_record([i.to_string(), r.anchor_index.to_string(), r.achieved_cosine.to_string()])
            .map_err(&err)?;
    }
    w.flush().map_err(write_err)?;
    Ok(())
}

fn track(ctx: &Context, args: TrackArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let anchors = Arc::new(ctx.anchors(&args.anchors)?);
    let threshold = ctx.settings.opt_f64(args.threshold, "threshold")?;
    let margin = ctx.settings.opt_f64(args.margin, "margin")?;

    let state = match &args.state_in {
        Some(path) => {
            let loaded = TrackerState::load(path)?;
            let threshold = threshold.map_or(loaded.threshold(), |t| t as f32);
            let margin = margin.map_or(loaded.margin(), |m| m as f32);
            TrackerState::from_parts(
                loaded.stored_identities().to_vec(),
                loaded.fake_identities().to_vec(),
                threshold,
                margin,
            )?
        }
        None => TrackerState::new(
            threshold.map_or(tracker::DEFAULT_THRESHOLD, |t| t as f32),
            margin.unwrap_or(0.0) as f32,
        )?,
    };
    if let (Some(sd), Some(ad)) = (state.dim(), anchors.dim()) {
        if sd != ad {
            return Err(Error::DimensionMismatch { expected: ad, actual: sd }.into());
        }
    }
    let sampler = AnchorSampler::new(anchors, f64::from(state.margin()))?;
    let mut tracker = IdentityTracker::new(state, sampler);

    let (frames, labels) = ctx.embeddings(&args.input, args.normalize)?;
    let results = frames
        .iter()
        .map(|f| tracker.track(f))
        .collect::<crate::Result<Vec<_>>>()?;

    let fakes: Vec<Embedding> = results.iter().map(|r| r.fake_identity.clone()).collect();
    let mut raw = RawEmbeddings::from_embeddings(&fakes);
    raw.labels = labels;
    container::write(&args.out, &raw)?;
    if let Some(path) = &args.state_out {
        tracker.state().save(path)?;
    }

    let log = args.log.as_deref();
    let mut w = csv_writer(log, stdout)?;
    let err = csv_err(log);
    w.write_record(["frame_index", "matched", "key", "distance"]).map_err(&err)?;
    for (i, r) in results.iter().enumerate() {
        w.write_record([
            i.to_string(),
            r.matched.to_string(),
            r.key.to_string(),
            r.nearest_distance.map_or(String::new(), |d| d.to_string()),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(write_err)?;
    Ok(())
}

fn eval_retrieval(
    ctx: &Context,
    args: EvalRetrievalArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> CliResult<()> {
    let gallery = Gallery::new(ctx.labeled(&args.gallery, args.normalize)?)?;
    let probes = ctx.labeled(&args.probes, args.normalize)?;
    let threshold = ctx.settings.f64(args.threshold, "threshold", metrics::DEFAULT_RETRIEVAL_THRESHOLD)?;
    let report = if args.negate {
        metrics::neg_id_retrieval_rate(&probes, &gallery, threshold)?
    } else {
        metrics::id_retrieval_rate(&probes, &gallery, threshold)?
    };

    let out = args.out.as_deref();
    let mut w = csv_writer(out, stdout)?;
    let err = csv_err(out);
    w.write_record(["probe", "true_label", "retrieved_label", "distance", "success"]).map_err(&err)?;
    for (i, p) in report.per_query.iter().enumerate() {
        w.write_record([
            i.to_string(),
            p.true_label.clone(),
            p.retrieved_label.clone(),
            p.distance.to_string(),
            u8::from(p.success).to_string(),
        ])
        .map_err(&err)?;
    }
    w.write_record(["aggregate", "", "", &threshold.to_string(), &report.success_rate.to_string()])
        .map_err(&err)?;
    w.flush().map_err(write_err)?;
    let _ = writeln!(
        stderr,
        "{} rate {} ({}/{}) at threshold {threshold}",
        if args.negate { "negated ID" } else { "ID" },
        report.success_rate,
        report.successes(),
        report.per_query.len()
    );
    Ok(())
}

fn eval_temporal(ctx: &Context, args: EvalTemporalArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let videos = args
        .frames
        .iter()
        .map(|p| ctx.embeddings(p, args.normalize).map(|(e, _)| e))
        .collect::<CliResult<Vec<_>>>()?;
    let report = metrics::temporal_consistency(&videos)?;
    let out = args.out.as_deref();
    let mut w = csv_writer(out, stdout)?;
    write_temporal(&mut w, &report, &videos, csv_err(out))?;
    w.flush().map_err(write_err)?;
    Ok(())
}

fn write_temporal<W: Write>(
    w: &mut csv::Writer<W>,
    report: &TemporalReport,
    videos: &[Vec<Embedding>],
    err: impl Fn(csv::Error) -> CliError,
) -> CliResult<()> {
    w.write_record(["video", "frames", "mean", "std"]).map_err(&err)?;
    for (i, (v, frames)) in report.per_video.iter().zip(videos).enumerate() {
        w.write_record([i.to_string(), frames.len().to_string(), v.mean.to_string(), v.std.to_string()])
            .map_err(&err)?;
    }
    let total: usize = videos.iter().map(Vec::len).sum();
    w.write_record([
        "aggregate".to_string(),
        total.to_string(),
        report.mean_of_means.to_string(),
        report.mean_std.to_string(),
    ])
    .map_err(&err)?;
    Ok(())
}

fn defend(ctx: &Context, args: DefendArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let default_eps = if args.mode == DefenseMode::Param { 0.10 } else { 0.15 };
    let epsilon = ctx.settings.f64(args.epsilon, "epsilon", default_eps)?;
    match args.mode {
        DefenseMode::Uniform => {
            let image = ppm::read(&args.input)?;
            if let Some(fractions) = &args.sweep {
                fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
                let sweep = defense::fraction_sweep(&image, epsilon, fractions, ctx.seed)?;
                writeln!(stdout, "fraction,locations,path").map_err(write_err)?;
                for (i, (fraction, noised)) in sweep.iter().enumerate() {
                    let path = args.out.join(format!("sweep_{i:03}.ppm"));
                    ppm::write(&path, noised)?;
                    let count = defense::noised_location_count(image.locations(), *fraction);
                    writeln!(stdout, "{fraction},{count},{}", path.display()).map_err(write_err)?;
                }
            } else {
                let fraction = ctx.settings.f64(args.fraction, "fraction", 1.0)?;
                let spec = NoiseSpec::new(epsilon, fraction, ctx.seed)?;
                let (noised, trace) = defense::uniform_pixel_noise_traced(&image, &spec)?;
                ppm::write(&args.out, &noised)?;
                writeln!(stdout, "noised_locations={}", trace.locations.len()).map_err(write_err)?;
            }
        }
        DefenseMode::Param => {
            if args.sweep.is_some() {
                return Err(CliError::Usage("--sweep applies to --mode uniform only".into()));
            }
            let raw = container::read(&args.input)?;
            let params = ParameterVector::new(raw.data.iter().map(|&v| f64::from(v)).collect())?;
            let noised = defense::parameter_noise(&params, epsilon, ctx.seed)?;
            let data = noised.values().iter().map(|&v| v as f32).collect();
            container::write(&args.out, &RawEmbeddings::new(raw.dim, data, raw.labels)?)?;
            writeln!(stdout, "parameters={}", noised.len()).map_err(write_err)?;
        }
        DefenseMode::Fgsm => {
            if args.sweep.is_some() {
                return Err(CliError::Usage("--sweep applies to --mode uniform only".into()));
            }
            let center = args
                .center
                .as_ref()
                .ok_or_else(|| CliError::Usage("--mode fgsm requires --center".into()))?;
            let image = ppm::read(&args.input)?;
            let oracle = defense::toy_oracle(ppm::read(center)?);
            let out = defense::fgsm_defense(&image, &oracle, epsilon)?;
            ppm::write(&args.out, &out)?;
            writeln!(stdout, "epsilon={epsilon}").map_err(write_err)?;
        }
    }
    Ok(())
}

fn detect(ctx: &Context, args: DetectArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let threshold = ctx.settings.f64(args.threshold, "threshold", detector::DEFAULT_DETECTION_THRESHOLD)?;
    let (inputs, _) = ctx.embeddings(&args.inputs, args.normalize)?;
    let (outputs, _) = ctx.embeddings(&args.outputs, args.normalize)?;
    if inputs.len() != outputs.len() {
        return Err(Error::invalid(
            "outputs",
            format!("{} inputs but {} outputs", inputs.len(), outputs.len()),
        )
        .into());
    }
    let scores = inputs
        .iter()
        .zip(&outputs)
        .map(|(a, b)| detector::detect(a, b, threshold))
        .collect::<crate::Result<Vec<_>>>()?;
    let distances: Vec<f64> = scores.iter().map(|s| s.distance).collect();
    let summary = detector::ScoreSummary::from_scores(&distances)?;

    let out = args.out.as_deref();
    let mut w = csv_writer(out, stdout)?;
    let err = csv_err(out);
    w.write_record(["pair", "distance", "is_fake"]).map_err(&err)?;
    for (i, s) in scores.iter().enumerate() {
        w.write_record([i.to_string(), s.distance.to_string(), s.is_fake.to_string()])
            .map_err(&err)?;
    }
    let flagged = scores.iter().filter(|s| s.is_fake).count();
    w.write_record(["summary", "threshold", &threshold.to_string()]).map_err(&err)?;
    for (key, v) in [
        ("mean", summary.mean),
        ("std", summary.std),
        ("min", summary.min),
        ("max", summary.max),
    ] {
        w.write_record(["summary", key, &v.to_string()]).map_err(&err)?;
    }
    w.write_record(["summary", "flagged", &flagged.to_string()]).map_err(&err)?;
    let width = 2.0 / HISTOGRAM_BINS as f64;
    for (i, count) in summary.histogram.iter().enumerate() {
        w.write_record([
            "histogram".to_string(),
            format!("{:.2}", i as f64 * width),
            format!("{:.2}", (i + 1) as f64 * width),
            count.to_string(),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(write_err)?;
    Ok(())
}

fn bench(ctx: &Context, args: BenchArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let s = &ctx.settings;
    let cfg = SynthConfig {
        dim: ctx.dim.unwrap_or(sphere::DEFAULT_DIM),
        identity_count: s.usize(args.identities, "identities", 100)?,
        frames_per_identity: s.usize(args.frames, "frames", 10)?,
        jitter_sigma: s.f64(args.jitter, "jitter", 0.01)?,
        seed: ctx.seed,
    };
    let thresholds = BenchThresholds {
        retrieval: s.f64(args.threshold, "threshold", metrics::DEFAULT_RETRIEVAL_THRESHOLD)?,
        tracking: s.f64(args.track_threshold, "track-threshold", f64::from(tracker::DEFAULT_THRESHOLD))? as f32,
    };
    fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;

    let anonymizer = match args.mode {
        MockMode::Negation => MockAnonymizer::Negation,
        MockMode::Anchor | MockMode::Blend => {
            let sources = synth::generate_identities(&SynthConfig {
                identity_count: s.usize(args.anchor_sources, "anchor-sources", 256)?,
                seed: rng::sub_seed(ctx.seed, 2),
                ..cfg
            })?;
            let means: Vec<Embedding> = sources.entries().iter().map(|e| e.embedding.clone()).collect();
            let rounds = s.opt_u64(args.anchor_rounds.map(u64::from), "anchor-rounds")?.unwrap_or(1);
            let rounds = u32::try_from(rounds).map_err(|_| CliError::Usage("anchor-rounds is too large".into()))?;
            let anchors = sphere::build_anchor_set(&means, rounds, sphere::DEFAULT_BLEND)?;
            container::write(args.out_dir.join("anchors.emb"), &RawEmbeddings::from_embeddings(anchors.anchors()))?;
            let sampler = AnchorSampler::new(Arc::new(anchors), s.f64(args.margin, "margin", 0.0)?)?;
            if args.mode == MockMode::Anchor {
                MockAnonymizer::AnchorSample(sampler)
            } else {
                MockAnonymizer::slerp_blend(sampler, s.f64(args.alpha, "alpha", 0.5)?)?
            }
        }
    };

    let report = synth::end_to_end_benchmark(&cfg, &anonymizer, &thresholds)?;
    container::write(args.out_dir.join("gallery.emb"), &RawEmbeddings::from_labeled(report.gallery.entries()))?;
    let labeled_frames = |videos: &[Vec<Embedding>]| -> RawEmbeddings {
        let entries: Vec<LabeledEmbedding> = report
            .gallery
            .entries()
            .iter()
            .zip(videos)
            .flat_map(|(g, frames)| {
                frames.iter().map(|f| LabeledEmbedding {
                    label: g.label.clone(),
                    embedding: f.clone(),
                })
            })
            .collect();
        RawEmbeddings::from_labeled(&entries)
    };
    container::write(args.out_dir.join("frames.emb"), &labeled_frames(&report.videos))?;
    container::write(args.out_dir.join("per_frame.emb"), &labeled_frames(&report.per_frame.outputs))?;
    container::write(args.out_dir.join("tracked.emb"), &labeled_frames(&report.tracked.outputs))?;

    let table = |w: &mut csv::Writer<Box<dyn Write + '_>>, err: &dyn Fn(csv::Error) -> CliError| -> CliResult<()> {
        w.write_record(["method", "id", "neg_id", "mtc_mu", "mtc_sigma"]).map_err(err)?;
        w.write_record([
            "real_data",
            "",
            "",
            &report.real.mean_of_means.to_string(),
            &report.real.mean_std.to_string(),
        ])
        .map_err(err)?;
        for (suffix, v) in [("sampling", &report.per_frame), ("itm", &report.tracked)] {
            w.write_record([
                format!("{}+{suffix}", anonymizer.name()),
                v.id.success_rate.to_string(),
                v.neg_id.success_rate.to_string(),
                v.temporal.mean_of_means.to_string(),
                v.temporal.mean_std.to_string(),
            ])
            .map_err(err)?;
        }
        Ok(())
    };
    let report_path = args.out_dir.join("report.csv");
    {
        let mut w = csv_writer(Some(&report_path), stdout)?;
        table(&mut w, &csv_err(Some(&report_path)))?;
        w.flush().map_err(write_err)?;
    }
    let mut w = csv_writer(None, stdout)?;
    table(&mut w, &csv_err(None))?;
    w.flush().map_err(write_err)?;
    Ok(())
}
