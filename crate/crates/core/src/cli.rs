//! The `layerscope` command line.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;

use crate::encoding::{self, EcogConfig, FmriConfig, Split};
use crate::error::{Error, Result};
use crate::intrinsic_dim::{self, preset_scale, ProfileOptions, ScaleChoice};
use crate::io::{self, ActivationMatrix, Manifest, Modality, ResponseSeries, Sampling, Timeline};
use crate::lens::{self, FitMethod, GradientOptions, SurprisalRow, Unembedding};
use crate::probes::{self, LabelledSet, ProbeOptions};
use crate::rff::{self, RffMap};
use crate::signal::{self, IrregularFeatureSeries, LanczosOptions};
use crate::stats::{self, Method, ModelTrajectory};
use crate::synth;

#[derive(Parser, Debug)]
#[command(name = "layerscope", version, about = "Representation geometry and brain-encoding analyses on LAM1/TSV files")]
struct Cli {
    /// Worker threads (defaults to all cores). Outputs do not depend on it.
    #[arg(long, global = true, env = "LAYERSCOPE_THREADS")]
    threads: Option<usize>,

    /// Log progress to stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Intrinsic dimension of a layer's representations.
    #[command(subcommand)]
    Id(IdCmd),
    /// Ridge encoding models from features to brain responses.
    #[command(subcommand)]
    Encode(EncodeCmd),
    /// Response preprocessing.
    #[command(subcommand)]
    Preprocess(PreprocessCmd),
    /// Affine lenses onto the final layer and their surprisal.
    #[command(subcommand)]
    Lens(LensCmd),
    /// Random Fourier feature baselines.
    #[command(subcommand)]
    Rff(RffCmd),
    /// Linear probes for linguistic tasks.
    #[command(subcommand)]
    Probe(ProbeCmd),
    /// Correlations and layerwise trajectory tables.
    #[command(subcommand)]
    Stats(StatsCmd),
    /// Synthetic datasets with known answers.
    #[command(subcommand)]
    Synth(SynthCmd),
}

#[derive(Subcommand, Debug)]
enum IdCmd {
    /// GRIDE scale profile, chosen scale and bootstrap spread.
    Estimate(IdEstimate),
    /// PCA (99% variance) and participation-ratio dimensions.
    Linear(IdLinear),
}

#[derive(Args, Debug)]
struct IdEstimate {
    /// Activation matrix (LAM1), one sample per row.
    #[arg(long)]
    input: PathBuf,
    /// Largest dyadic scale exponent: k runs over 1, 2, ..., 2^max_exp.
    #[arg(long, default_value_t = 12)]
    max_exp: u32,
    /// Scale choice: `auto` (plateau), an integer k, `preset` / `preset:<model>`
    /// (reference scales), or a TSV of `layer<TAB>k` rows.
    #[arg(long, default_value = "auto")]
    k: String,
    /// Bootstrap resamples at the chosen scale.
    #[arg(long, default_value_t = 5)]
    bootstraps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV: layer,k,id,stderr,chosen,bootstrap_mean,bootstrap_sd.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct IdLinear {
    /// Activation matrix (LAM1).
    #[arg(long)]
    input: PathBuf,
    /// Output CSV: layer,pca_d,pr_d.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum EncodeCmd {
    /// Lanczos-downsampled, FIR-delayed features against a TR-sampled response.
    Fmri(EncodeFmri),
    /// Word-aligned features against a response at a grid of lags.
    Ecog(EncodeEcog),
}

#[derive(Args, Debug)]
struct EncodeInputs {
    /// Word features (LAM1), one row per timeline event.
    #[arg(long)]
    features: PathBuf,
    /// Word timeline TSV: label, onset, offset (seconds).
    #[arg(long)]
    timeline: PathBuf,
    /// Response matrix (LAM1), time x channel.
    #[arg(long)]
    response: PathBuf,
    /// Ridge penalties: comma list or `log:<lo>:<hi>:<count>` [default: log:10:1e6:10].
    #[arg(long, value_parser = parse_alphas)]
    alphas: Option<Vec<f64>>,
    /// Share of the series held out for testing (taken from the end).
    #[arg(long, default_value_t = encoding::DEFAULT_TEST_FRAC)]
    test_frac: f64,
    /// Contiguous cross-validation chunks for choosing the penalty.
    #[arg(long, default_value_t = encoding::DEFAULT_CHUNKS)]
    chunks: usize,
    /// Recorded in the manifest; the fit itself is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV: channel,r,best_lag,alpha.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EncodeFmri {
    #[command(flatten)]
    io: EncodeInputs,
    /// Seconds per response sample; overrides the response manifest.
    #[arg(long)]
    tr: Option<f64>,
    /// FIR delays in samples.
    #[arg(long, value_delimiter = ',', default_values_t = encoding::DEFAULT_DELAYS)]
    delays: Vec<usize>,
    /// Lanczos window lobes.
    #[arg(long, default_value_t = 3)]
    lobes: usize,
}

#[derive(Args, Debug)]
struct EncodeEcog {
    #[command(flatten)]
    io: EncodeInputs,
    /// Samples per second; overrides the response manifest.
    #[arg(long)]
    rate: Option<f64>,
    /// Number of lags on the even grid.
    #[arg(long, default_value_t = encoding::DEFAULT_LAGS)]
    lags: usize,
    /// Lag range in seconds relative to word onset.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true, default_value = "-2,2")]
    lag_range: (f64, f64),
    /// Optional CSV of every channel's R at every lag: channel,lag,r.
    #[arg(long)]
    per_lag_out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum PreprocessCmd {
    /// Common average reference, line-noise notches, band-pass, optional envelope.
    Ecog(PreprocessEcog),
}

#[derive(Args, Debug)]
struct PreprocessEcog {
    /// Raw recording (LAM1), time x electrode.
    #[arg(long)]
    input: PathBuf,
    /// Samples per second; overrides the input manifest.
    #[arg(long)]
    rate: Option<f64>,
    /// Line frequency in Hz; 0 disables the notches.
    #[arg(long, default_value_t = 60.0)]
    notch: f64,
    /// Notch the first `harmonics` multiples of the line frequency.
    #[arg(long, default_value_t = 3)]
    harmonics: usize,
    #[arg(long, default_value_t = signal::DEFAULT_NOTCH_Q)]
    notch_q: f64,
    /// Pass band in Hz.
    #[arg(long, value_parser = parse_pair, default_value = "70,200")]
    band: (f64, f64),
    /// Butterworth order of each band edge.
    #[arg(long, default_value_t = signal::DEFAULT_BUTTER_ORDER)]
    order: usize,
    /// Subtract the across-electrode mean first.
    #[arg(long)]
    car: bool,
    /// Moving-RMS envelope window in seconds.
    #[arg(long)]
    envelope: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum LensCmd {
    /// Fit an affine map from one layer's states to the final layer's.
    Fit(LensFit),
    /// Mean surprisal of next-token targets through fitted lenses.
    Eval(LensEval),
}

#[derive(Args, Debug)]
struct LensFit {
    /// Layer states (LAM1), N x d.
    #[arg(long)]
    layer_acts: PathBuf,
    /// Final-layer states (LAM1), N x d, same rows.
    #[arg(long)]
    final_acts: PathBuf,
    #[arg(long, default_value = "direct")]
    method: FitMethod,
    /// Adam learning rate (gradient method).
    #[arg(long, default_value_t = GradientOptions::default().lr)]
    lr: f64,
    #[arg(long, default_value_t = GradientOptions::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = GradientOptions::default().batch_size)]
    batch: usize,
    /// Held-out share used to pick the best epoch.
    #[arg(long, default_value_t = GradientOptions::default().val_frac)]
    val_frac: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Lens matrix (LAM1); the bias goes to `<out>.b`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct LensEval {
    /// Fitted lens; repeat once per layer, paired in order with --acts.
    #[arg(long, required = true)]
    lens: Vec<PathBuf>,
    /// Layer states (LAM1) for the matching --lens.
    #[arg(long, required = true)]
    acts: Vec<PathBuf>,
    /// Unembedding matrix (LAM1), vocab x d.
    #[arg(long)]
    unembed: PathBuf,
    /// Optional unembedding bias (LAM1), 1 x vocab.
    #[arg(long)]
    unembed_bias: Option<PathBuf>,
    /// Next-token ids, `index<TAB>token_id`.
    #[arg(long)]
    targets: PathBuf,
    /// Output CSV: layer,mean_surprisal,normalized.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum RffCmd {
    /// Random Fourier features of hashed word vectors.
    Gen(RffGen),
}

#[derive(Args, Debug)]
struct RffGen {
    /// Width of the hashed word vectors.
    #[arg(long, default_value_t = rff::DEFAULT_D_IN)]
    d_in: usize,
    /// Number of random features.
    #[arg(long)]
    d_out: usize,
    /// RBF bandwidth.
    #[arg(long, default_value_t = rff::DEFAULT_SIGMA)]
    sigma: f64,
    /// Word timeline TSV.
    #[arg(long)]
    timeline: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Feature matrix (LAM1), one row per word.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum ProbeCmd {
    /// Softmax-regression probe; splits given as `<features.lam>,<labels.tsv>`.
    Classify(ProbeClassify),
    /// Ridge probe; splits given as `<features.lam>,<targets.lam>`.
    Regress(ProbeRegress),
}

#[derive(Args, Debug)]
struct ProbeClassify {
    #[arg(long, value_parser = parse_split)]
    train: (PathBuf, PathBuf),
    #[arg(long, value_parser = parse_split)]
    val: (PathBuf, PathBuf),
    #[arg(long, value_parser = parse_split)]
    test: (PathBuf, PathBuf),
    /// Task name written to the results.
    #[arg(long, default_value = "task")]
    task: String,
    #[arg(long, default_value_t = ProbeOptions::default().lr)]
    lr: f64,
    #[arg(long, default_value_t = ProbeOptions::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = ProbeOptions::default().batch_size)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV: layer,task,metric,value.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ProbeRegress {
    #[arg(long, value_parser = parse_split)]
    train: (PathBuf, PathBuf),
    #[arg(long, value_parser = parse_split)]
    test: (PathBuf, PathBuf),
    #[arg(long, default_value = "task")]
    task: String,
    /// Ridge penalties: comma list or `log:<lo>:<hi>:<count>`.
    #[arg(long, value_parser = parse_alphas)]
    alphas: Option<Vec<f64>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum StatsCmd {
    /// Correlation of two CSV columns with a permutation p-value.
    Correlate(StatsCorrelate),
    /// Layerwise trajectories: rho of I_d and surprisal against encoding performance.
    Table(StatsTable),
}

#[derive(Args, Debug)]
struct StatsCorrelate {
    /// `<file.csv>:<column>`.
    #[arg(long)]
    x: String,
    /// `<file.csv>:<column>`.
    #[arg(long)]
    y: String,
    #[arg(long, default_value = "spearman")]
    method: Method,
    #[arg(long, default_value_t = stats::DEFAULT_PERMUTATIONS)]
    permutations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV (stdout when omitted): method,rho,p_value,n,n_permutations,seed.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StatsTable {
    /// I_d, encoding, surprisal or trajectory CSVs (model, modality and layer
    /// come from their manifests).
    #[arg(long, required = true, num_args = 1..)]
    profiles: Vec<PathBuf>,
    #[arg(long, default_value_t = stats::DEFAULT_PERMUTATIONS)]
    permutations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Summary CSV: quantity,modality and rho/p/significance per model.
    #[arg(long)]
    out: PathBuf,
    /// Merged per-layer values: modality,model,layer,id,norm_id,...
    #[arg(long)]
    layers_out: Option<PathBuf>,
    /// Per-channel rho between layerwise I_d and that channel's R.
    #[arg(long)]
    channels_out: Option<PathBuf>,
    /// Inclusion threshold on a channel's best R [default: 0.2 fMRI, 0.1 ECoG].
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum SynthCmd {
    /// Uniform points in a d-cube, orthogonally embedded in `ambient` dims.
    Hypercube(SynthHypercube),
    /// Swiss roll (2-D manifold) orthogonally embedded in `ambient` dims.
    SwissRoll(SynthSwissRoll),
    /// Word features, timeline and a TR-sampled response of known SNR.
    EncodingCase(SynthEncodingCase),
    /// Multi-layer model whose I_d and encoding peaks coincide.
    Fixture(SynthFixture),
}

#[derive(Args, Debug)]
struct SynthHypercube {
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 50)]
    ambient: usize,
    /// Isotropic Gaussian noise added after embedding.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SynthSwissRoll {
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    ambient: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SynthEncodingCase {
    /// Response length in TRs of 2 s.
    #[arg(long, default_value_t = 4000)]
    n_times: usize,
    /// Feature width.
    #[arg(long, default_value_t = 16)]
    dim: usize,
    /// Per-channel SNR; a single value with --channels repeats it.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    snr: Vec<f64>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Receives features.lam, timeline.tsv, response.lam and ceiling.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct SynthFixture {
    #[arg(long, default_value_t = 12)]
    layers: usize,
    /// Response length in TRs of 2 s.
    #[arg(long, default_value_t = 1000)]
    n_times: usize,
    #[arg(long, default_value_t = 16)]
    channels: usize,
    #[arg(long, default_value_t = 1.0)]
    snr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Receives layer_XX.lam, timeline.tsv, response.lam and truth.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `<a>,<b>`, got {s:?}"))?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|_| format!("not a number: {v:?}"));
    Ok((num(a)?, num(b)?))
}

fn parse_alphas(s: &str) -> std::result::Result<Vec<f64>, String> {
    let alphas = if let Some(spec) = s.strip_prefix("log:") {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("expected log:<lo>:<hi>:<count>, got {s:?}"));
        }
        let lo: f64 = parts[0].parse().map_err(|_| format!("bad lower bound {:?}", parts[0]))?;
        let hi: f64 = parts[1].parse().map_err(|_| format!("bad upper bound {:?}", parts[1]))?;
        let n: usize = parts[2].parse().map_err(|_| format!("bad count {:?}", parts[2]))?;
        if !(lo > 0.0 && hi >= lo) || n == 0 {
            return Err(format!("need 0 < lo <= hi and count >= 1 in {s:?}"));
        }
        encoding::log_grid(lo, hi, n)
    } else {
        s.split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| format!("not a number: {v:?}")))
            .collect::<std::result::Result<_, _>>()?
    };
    if alphas.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
        return Err("penalties must be positive".into());
    }
    Ok(alphas)
}

fn parse_split(s: &str) -> std::result::Result<(PathBuf, PathBuf), String> {
    s.split_once(',')
        .map(|(a, b)| (PathBuf::from(a), PathBuf::from(b)))
        .ok_or_else(|| format!("expected `<features>,<labels>`, got {s:?}"))
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Table(format!("{}: {other:?}", path.display())),
    }
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Manifest of an input file, or the default when it has no sidecar.
fn manifest_of(path: &Path) -> Result<Manifest> {
    Ok(Manifest::read(path)?.unwrap_or_default())
}

fn read_acts(path: &Path) -> Result<ActivationMatrix> {
    ActivationMatrix::read(path)
}

enum KSpec {
    Auto,
    Fixed(usize),
    Preset(Option<String>),
    Table(PathBuf),
}

impl KSpec {
    fn parse(s: &str) -> Self {
        if s == "auto" {
            KSpec::Auto
        } else if let Ok(k) = s.parse::<usize>() {
            KSpec::Fixed(k)
        } else if s == "preset" {
            KSpec::Preset(None)
        } else if let Some(m) = s.strip_prefix("preset:") {
            KSpec::Preset(Some(m.to_string()))
        } else {
            KSpec::Table(PathBuf::from(s))
        }
    }

    fn resolve(&self, manifest: &Manifest) -> Result<ScaleChoice> {
        match self {
            KSpec::Auto => Ok(ScaleChoice::Auto),
            KSpec::Fixed(k) => Ok(ScaleChoice::Fixed(*k)),
            KSpec::Preset(model) => {
                let model = model.as_deref().unwrap_or(&manifest.model);
                let rule = preset_scale(model).ok_or_else(|| usage(format!("no reference scale for model {model:?}")))?;
                Ok(ScaleChoice::Fixed(rule.k_for_layer(manifest.layer)))
            }
            KSpec::Table(path) => {
                let table = read_k_table(path)?;
                table
                    .get(&manifest.layer)
                    .map(|&k| ScaleChoice::Fixed(k))
                    .ok_or_else(|| Error::Table(format!("{}: no scale for layer {}", path.display(), manifest.layer)))
            }
        }
    }
}

/// `layer<TAB>k` rows; blank lines and `#` comments are skipped.
fn read_k_table(path: &Path) -> Result<BTreeMap<u32, usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || Error::Table(format!("{}:{}: expected `layer<TAB>k`", path.display(), i + 1));
        let (l, k) = line.split_once('\t').ok_or_else(bad)?;
        out.insert(l.trim().parse().map_err(|_| bad())?, k.trim().parse().map_err(|_| bad())?);
    }
    Ok(out)
}

fn id_estimate(a: IdEstimate) -> Result<()> {
    let points = read_acts(&a.input)?;
    let choice = KSpec::parse(&a.k).resolve(&points.manifest)?;
    let opts = ProfileOptions {
        max_exp: a.max_exp,
        choice,
        bootstraps: a.bootstraps,
        seed: a.seed,
    };
    let p = intrinsic_dim::gride_scale_profile(&points, &opts)?;
    log::info!("layer {}: k={} I_d={:.4}", points.manifest.layer, p.chosen_k, p.chosen_id);
    let layer = points.manifest.layer.to_string();
    let rows: Vec<Vec<String>> = p
        .scales
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let chosen = k == p.chosen_k;
            let (bm, bs) = if chosen {
                (p.bootstrap_mean.to_string(), p.bootstrap_sd.to_string())
            } else {
                (String::new(), String::new())
            };
            vec![
                layer.clone(),
                k.to_string(),
                p.estimates[i].to_string(),
                p.stderr[i].to_string(),
                u8::from(chosen).to_string(),
                bm,
                bs,
            ]
        })
        .collect();
    write_csv(&a.out, &["layer", "k", "id", "stderr", "chosen", "bootstrap_mean", "bootstrap_sd"], &rows)?;
    let k_used = match choice {
        ScaleChoice::Auto => "auto".to_string(),
        ScaleChoice::Fixed(k) => k.to_string(),
    };
    points
        .manifest
        .clone()
        .with_extra("command", "id estimate")
        .with_extra("input", a.input.display())
        .with_extra("max_exp", a.max_exp)
        .with_extra("k", &a.k)
        .with_extra("k_resolved", k_used)
        .with_extra("bootstraps", a.bootstraps)
        .with_extra("seed", a.seed)
        .with_extra("n_samples", points.n_samples())
        .with_extra("ambient_dim", p.ambient_dim)
        .with_extra("duplicates_removed", p.removed)
        .write(&a.out)
}

fn id_linear(a: IdLinear) -> Result<()> {
    let points = read_acts(&a.input)?;
    let dims = intrinsic_dim::linear_dims(&points)?;
    let row = vec![points.manifest.layer.to_string(), dims.pca_d.to_string(), dims.pr_d.to_string()];
    write_csv(&a.out, &["layer", "pca_d", "pr_d"], &[row])?;
    points
        .manifest
        .clone()
        .with_extra("command", "id linear")
        .with_extra("input", a.input.display())
        .with_extra("pca_threshold", intrinsic_dim::PCA_THRESHOLD)
        .with_extra("ambient_dim", points.n_dims())
        .write(&a.out)
}

/// Features, their word onsets and the response; the result manifest takes
/// model and layer from the features and subject and modality from the response.
fn encode_inputs(a: &EncodeInputs, fallback: Option<Sampling>) -> Result<(IrregularFeatureSeries, ResponseSeries, Manifest)> {
    let (features, fmanifest) = io::read_matrix(&a.features)?;
    let timeline = io::read_timeline(&a.timeline)?;
    if timeline.len() != features.rows() {
        return Err(Error::invalid(
            "encoding",
            format!("{} timeline events for {} feature rows", timeline.len(), features.rows()),
        ));
    }
    let series = IrregularFeatureSeries::new(timeline.onsets(), features)?;
    let response = ResponseSeries::read(&a.response, fallback)?;
    let fmanifest = fmanifest.unwrap_or_default();
    let manifest = Manifest {
        subject: response.manifest.subject.clone(),
        modality: response.manifest.modality,
        model: fmanifest.model,
        layer: fmanifest.layer,
        extra: BTreeMap::new(),
    }
    .with_extra("features", a.features.display())
    .with_extra("timeline", a.timeline.display())
    .with_extra("response", a.response.display())
    .with_extra("test_frac", a.test_frac)
    .with_extra("chunks", a.chunks)
    .with_extra("seed", a.seed);
    Ok((series, response, manifest))
}

fn alphas_or_default(a: &Option<Vec<f64>>) -> Vec<f64> {
    a.clone().unwrap_or_else(encoding::default_alphas)
}

fn encode_fmri(a: EncodeFmri) -> Result<()> {
    let (features, response, manifest) = encode_inputs(&a.io, a.tr.map(Sampling::Period))?;
    let cfg = FmriConfig {
        delays: a.delays.clone(),
        alphas: alphas_or_default(&a.io.alphas),
        n_chunks: a.io.chunks,
        split: Split::TailFraction(a.io.test_frac),
        lanczos: LanczosOptions {
            lobes: a.lobes,
            ..LanczosOptions::default()
        },
    };
    let result = encoding::encode_fmri(&features, &response, &cfg)?;
    log::info!("mean R {:.4}, median R {:.4}", result.mean_r(), result.median_r());
    result.write_csv(&a.io.out)?;
    manifest
        .with_extra("command", "encode fmri")
        .with_extra("tr", response.sampling().period())
        .with_extra("delays", join(&cfg.delays))
        .with_extra("alphas", join(&cfg.alphas))
        .with_extra("lobes", a.lobes)
        .with_extra("mean_r", result.mean_r())
        .write(&a.io.out)
}

fn encode_ecog(a: EncodeEcog) -> Result<()> {
    let (features, response, manifest) = encode_inputs(&a.io, a.rate.map(Sampling::Rate))?;
    let cfg = EcogConfig {
        n_lags: a.lags,
        lag_lo: a.lag_range.0,
        lag_hi: a.lag_range.1,
        alphas: alphas_or_default(&a.io.alphas),
        n_chunks: a.io.chunks,
        test_frac: a.io.test_frac,
    };
    let result = encoding::encode_ecog(&features, &response, &cfg)?;
    log::info!("mean R {:.4}, median R {:.4}", result.mean_r(), result.median_r());
    result.write_csv(&a.io.out)?;
    let manifest = manifest
        .with_extra("command", "encode ecog")
        .with_extra("rate", response.sampling().rate())
        .with_extra("lags", a.lags)
        .with_extra("lag_range", format!("{},{}", cfg.lag_lo, cfg.lag_hi))
        .with_extra("alphas", join(&cfg.alphas))
        .with_extra("mean_r", result.mean_r());
    if let (Some(path), Some(per_lag), Some(lags)) = (&a.per_lag_out, &result.per_lag_r, &result.lags) {
        let mut rows = Vec::with_capacity(per_lag.len());
        for (c, id) in result.channel_ids.iter().enumerate() {
            for (l, lag) in lags.iter().enumerate() {
                rows.push(vec![id.clone(), lag.to_string(), per_lag[(c, l)].to_string()]);
            }
        }
        write_csv(path, &["channel", "lag", "r"], &rows)?;
        manifest.write(path)?;
    }
    manifest.write(&a.io.out)
}

fn preprocess_ecog(a: PreprocessEcog) -> Result<()> {
    let input = ResponseSeries::read(&a.input, a.rate.map(Sampling::Rate))?;
    let rate = input.sampling().rate();
    let mut x = input.data().clone();
    if a.car {
        x = signal::common_average_reference(&x)?;
    }
    if a.notch > 0.0 {
        x = signal::notch_filter(&x, rate, a.notch, a.harmonics, a.notch_q)?;
    }
    x = signal::butterworth_bandpass(&x, rate, a.band.0, a.band.1, a.order)?;
    if let Some(w) = a.envelope {
        let window = (w * rate).round();
        if !(window >= 1.0) {
            return Err(usage(format!("envelope window {w} s is shorter than one sample")));
        }
        x = signal::moving_rms(&x, window as usize)?;
    }
    let mut out = ResponseSeries::new(x, Sampling::Rate(rate), input.channel_ids().to_vec(), input.manifest.clone())?;
    out.manifest.modality = Modality::Ecog;
    let mut m = out
        .manifest
        .clone()
        .with_extra("command", "preprocess ecog")
        .with_extra("input", a.input.display())
        .with_extra("car", a.car)
        .with_extra("notch", a.notch)
        .with_extra("band", format!("{},{}", a.band.0, a.band.1))
        .with_extra("order", a.order);
    if a.notch > 0.0 {
        m = m.with_extra("harmonics", a.harmonics).with_extra("notch_q", a.notch_q);
    }
    if let Some(w) = a.envelope {
        m = m.with_extra("envelope", w);
    }
    out.manifest = m;
    out.write(&a.out)
}

fn lens_fit(a: LensFit) -> Result<()> {
    let (h_t, m_t) = io::read_matrix(&a.layer_acts)?;
    let (h_l, _) = io::read_matrix(&a.final_acts)?;
    let m_t = m_t.unwrap_or_default();
    let (h_t, h_l) = (h_t.to_dmatrix(), h_l.to_dmatrix());
    let mut base = m_t
        .clone()
        .with_extra("command", "lens fit")
        .with_extra("layer_acts", a.layer_acts.display())
        .with_extra("final_acts", a.final_acts.display());
    let mut lens = match a.method {
        FitMethod::Direct => lens::fit_lens_direct(&h_t, &h_l)?,
        FitMethod::Gradient => {
            let opts = GradientOptions {
                lr: a.lr,
                epochs: a.epochs,
                batch_size: a.batch,
                val_frac: a.val_frac,
                seed: a.seed,
            };
            let fit = lens::fit_lens_gradient(&h_t, &h_l, &opts)?;
            base = base
                .with_extra("lr", a.lr)
                .with_extra("epochs", a.epochs)
                .with_extra("batch", a.batch)
                .with_extra("val_frac", a.val_frac)
                .with_extra("seed", a.seed)
                .with_extra("best_epoch", fit.best_epoch)
                .with_extra("val_loss", join(&fit.val_loss));
            fit.lens
        }
    };
    lens.layer = m_t.layer;
    let residual = lens.residual(&h_t, &h_l);
    log::info!("layer {}: residual {residual:.6}", lens.layer);
    lens.write(&a.out, &base.with_extra("residual", residual))
}

fn lens_eval(a: LensEval) -> Result<()> {
    if a.lens.len() != a.acts.len() {
        return Err(usage(format!("{} --lens but {} --acts", a.lens.len(), a.acts.len())));
    }
    let u = Unembedding::read(&a.unembed, a.unembed_bias.as_deref())?;
    let targets = lens::read_targets(&a.targets)?;
    let mut rows = Vec::with_capacity(a.lens.len());
    for (lp, ap) in a.lens.iter().zip(&a.acts) {
        let l = lens::AffineLens::read(lp)?;
        let (h, _) = io::read_matrix(ap)?;
        let s = lens::mean_surprisal(&l, &u, &h, &targets)?;
        rows.push(SurprisalRow {
            layer: l.layer,
            mean_surprisal: s,
            normalized: lens::normalize_surprisal(s, u.vocab_size())?,
        });
    }
    rows.sort_by_key(|r| r.layer);
    lens::write_surprisal_csv(&rows, &a.out)?;
    let first = manifest_of(&a.acts[0])?;
    Manifest {
        layer: 0,
        extra: BTreeMap::new(),
        ..first
    }
    .with_extra("command", "lens eval")
    .with_extra("lens", join(&a.lens.iter().map(|p| p.display()).collect::<Vec<_>>()))
    .with_extra("acts", join(&a.acts.iter().map(|p| p.display()).collect::<Vec<_>>()))
    .with_extra("unembed", a.unembed.display())
    .with_extra("targets", a.targets.display())
    .with_extra("vocab_size", u.vocab_size())
    .write(&a.out)
}

fn rff_gen(a: RffGen) -> Result<()> {
    let timeline = io::read_timeline(&a.timeline)?;
    let map = RffMap::new(a.d_in, a.d_out, a.sigma, a.seed)?;
    let features = rff::rff_word_features(&timeline, &map, a.d_in, a.seed)?;
    let manifest = Manifest {
        model: format!("rff-{}", a.d_out),
        ..Manifest::default()
    }
    .with_extra("command", "rff gen")
    .with_extra("timeline", a.timeline.display())
    .with_extra("d_in", a.d_in)
    .with_extra("d_out", a.d_out)
    .with_extra("sigma", a.sigma)
    .with_extra("seed", a.seed);
    io::write_matrix(features.features(), &manifest, &a.out)
}

fn labelled(split: &(PathBuf, PathBuf)) -> Result<(DMatrix<f64>, Vec<String>, Manifest)> {
    let (x, m) = io::read_matrix(&split.0)?;
    let labels = io::read_labels(&split.1)?;
    if labels.len() != x.rows() {
        return Err(Error::invalid(
            "probes",
            format!("{}: {} labels for {} feature rows", split.1.display(), labels.len(), x.rows()),
        ));
    }
    Ok((x.to_dmatrix(), labels, m.unwrap_or_default()))
}

fn probe_classify(a: ProbeClassify) -> Result<()> {
    let (xt, lt, manifest) = labelled(&a.train)?;
    let (xv, lv, _) = labelled(&a.val)?;
    let (xs, ls, _) = labelled(&a.test)?;
    let (yt, classes) = probes::encode_labels(&lt);
    let index = |labels: &[String], which: &str| -> Result<Vec<usize>> {
        labels
            .iter()
            .map(|l| {
                classes.binary_search(l).map_err(|_| {
                    Error::invalid("probes", format!("{which} label {l:?} does not occur in training"))
                })
            })
            .collect()
    };
    let yv = index(&lv, "validation")?;
    let ys = index(&ls, "test")?;
    let opts = ProbeOptions {
        lr: a.lr,
        epochs: a.epochs,
        batch_size: a.batch,
        seed: a.seed,
    };
    let result = probes::train_classifier_probe(
        &a.task,
        LabelledSet { x: &xt, y: &yt },
        LabelledSet { x: &xv, y: &yv },
        LabelledSet { x: &xs, y: &ys },
        classes.len(),
        &opts,
    )?;
    let best_epoch = result.best_epoch;
    probes::write_probe_csv(&[(manifest.layer, result)], &a.out)?;
    manifest
        .with_extra("command", "probe classify")
        .with_extra("task", &a.task)
        .with_extra("classes", classes.len())
        .with_extra("lr", a.lr)
        .with_extra("epochs", a.epochs)
        .with_extra("batch", a.batch)
        .with_extra("seed", a.seed)
        .with_extra("best_epoch", best_epoch)
        .write(&a.out)
}

fn probe_regress(a: ProbeRegress) -> Result<()> {
    let pair = |s: &(PathBuf, PathBuf)| -> Result<(DMatrix<f64>, DMatrix<f64>, Manifest)> {
        let (x, m) = io::read_matrix(&s.0)?;
        let (y, _) = io::read_matrix(&s.1)?;
        if x.rows() != y.rows() {
            return Err(Error::invalid(
                "probes",
                format!("{} feature rows but {} target rows", x.rows(), y.rows()),
            ));
        }
        Ok((x.to_dmatrix(), y.to_dmatrix(), m.unwrap_or_default()))
    };
    let (xt, yt, manifest) = pair(&a.train)?;
    let (xs, ys, _) = pair(&a.test)?;
    let alphas = alphas_or_default(&a.alphas);
    let result = probes::train_regression_probe(&a.task, &xt, &yt, &xs, &ys, &alphas)?;
    probes::write_probe_csv(&[(manifest.layer, result)], &a.out)?;
    manifest
        .with_extra("command", "probe regress")
        .with_extra("task", &a.task)
        .with_extra("alphas", join(&alphas))
        .write(&a.out)
}

/// Reads the numeric column named after the last `:` of `spec`.
fn read_column(spec: &str) -> Result<Vec<f64>> {
    let (file, col) = spec
        .rsplit_once(':')
        .ok_or_else(|| usage(format!("expected <file.csv>:<column>, got {spec:?}")))?;
    let path = Path::new(file);
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let c = rdr
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .position(|h| h == col)
        .ok_or_else(|| Error::Table(format!("{file}: no column {col:?}")))?;
    rdr.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            rec[c]
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Table(format!("{file}:{}: not a number: {:?}", i + 2, &rec[c])))
        })
        .collect()
}

fn stats_correlate(a: StatsCorrelate) -> Result<()> {
    let x = read_column(&a.x)?;
    let y = read_column(&a.y)?;
    let r = stats::permutation_test(&x, &y, a.method, a.permutations, a.seed)?;
    let header = ["method", "rho", "p_value", "n", "n_permutations", "seed"];
    let row = vec![
        r.method.to_string(),
        r.rho.to_string(),
        r.p_value.to_string(),
        r.n.to_string(),
        r.n_permutations.to_string(),
        r.seed.to_string(),
    ];
    match &a.out {
        Some(path) => {
            write_csv(path, &header, &[row])?;
            Manifest::default()
                .with_extra("command", "stats correlate")
                .with_extra("x", &a.x)
                .with_extra("y", &a.y)
                .with_extra("method", a.method)
                .with_extra("permutations", a.permutations)
                .with_extra("seed", a.seed)
                .write(path)
        }
        None => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "{}\n{}", header.join(","), row.join(",")).map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn stats_table(a: StatsTable) -> Result<()> {
    let profiles: Vec<stats::Profile> = a.profiles.iter().map(|p| stats::read_profile(p)).collect::<Result<_>>()?;
    let groups = stats::merge_profiles(&profiles);
    let mut models = Vec::with_capacity(groups.len());
    let mut channel_rows = Vec::new();
    for (modality, model, layers) in &groups {
        let trajectory = stats::trajectory_table(layers, a.permutations, a.seed)?;
        if let Some(r) = &trajectory.id_vs_ep {
            log::info!("{model}: rho(I_d, EP) = {:.4} (p = {:.4})", r.rho, r.p_value);
        }
        models.push(ModelTrajectory {
            modality: *modality,
            model: model.clone(),
            trajectory,
        });
        if a.channels_out.is_some() {
            channel_rows.extend(channel_table(&profiles, *modality, model, layers, a.threshold)?);
        }
    }
    stats::write_table1_csv(&models, &a.out)?;
    let manifest = Manifest::default()
        .with_extra("command", "stats table")
        .with_extra("profiles", join(&a.profiles.iter().map(|p| p.display()).collect::<Vec<_>>()))
        .with_extra("permutations", a.permutations)
        .with_extra("seed", a.seed);
    manifest.write(&a.out)?;
    if let Some(path) = &a.layers_out {
        stats::write_trajectory_csv(&models, path)?;
        manifest.write(path)?;
    }
    if let Some(path) = &a.channels_out {
        stats::write_channel_csv(&channel_rows, path)?;
        let m = match a.threshold {
            Some(t) => manifest.clone().with_extra("threshold", t),
            None => manifest.clone(),
        };
        m.write(path)?;
    }
    Ok(())
}

/// Per-channel rows for one model, when every layer with an I_d also has a
/// per-channel encoding result.
fn channel_table(
    profiles: &[stats::Profile],
    modality: Modality,
    model: &str,
    layers: &BTreeMap<u32, stats::LayerSeries>,
    threshold: Option<f64>,
) -> Result<Vec<stats::ChannelCorrelation>> {
    let mut by_layer: BTreeMap<u32, &(Vec<String>, Vec<f64>)> = BTreeMap::new();
    for p in profiles.iter().filter(|p| p.modality == modality && p.model == model) {
        if let Some(ch) = &p.channels {
            for l in p.layers.keys() {
                by_layer.insert(*l, ch);
            }
        }
    }
    let with_id: Vec<(u32, f64)> = layers.iter().filter_map(|(l, s)| s.id.map(|v| (*l, v))).collect();
    if by_layer.is_empty() || with_id.is_empty() {
        return Ok(Vec::new());
    }
    let mut ids = Vec::with_capacity(with_id.len());
    let mut ep = Vec::with_capacity(with_id.len());
    let mut names: Option<&Vec<String>> = None;
    for (l, id) in &with_id {
        let ch = by_layer
            .get(l)
            .ok_or_else(|| Error::invalid("stats", format!("{model}: no encoding result for layer {l}")))?;
        if let Some(n) = names {
            if *n != ch.0 {
                return Err(Error::invalid("stats", format!("{model}: channel ids differ at layer {l}")));
            }
        }
        names = Some(&ch.0);
        ids.push(*id);
        ep.push(ch.1.clone());
    }
    let threshold = threshold.unwrap_or_else(|| stats::default_threshold(modality));
    stats::per_channel_id_correlation(&ids, &ep, names.expect("at least one layer"), threshold)
}

fn synth_hypercube(a: SynthHypercube) -> Result<()> {
    let pts = synth::hypercube(a.n, a.d, a.ambient, a.noise, a.seed)?;
    let manifest = pts
        .manifest
        .clone()
        .with_extra("command", "synth hypercube")
        .with_extra("n", a.n)
        .with_extra("d", a.d)
        .with_extra("ambient", a.ambient)
        .with_extra("noise", a.noise)
        .with_extra("seed", a.seed);
    io::write_matrix(pts.data(), &manifest, &a.out)
}

fn synth_swiss_roll(a: SynthSwissRoll) -> Result<()> {
    let pts = synth::swiss_roll(a.n, a.ambient, a.seed)?;
    let manifest = pts
        .manifest
        .clone()
        .with_extra("command", "synth swiss-roll")
        .with_extra("n", a.n)
        .with_extra("ambient", a.ambient)
        .with_extra("seed", a.seed);
    io::write_matrix(pts.data(), &manifest, &a.out)
}

fn write_timeline(t: &Timeline, manifest: &Manifest, path: &Path) -> Result<()> {
    t.write(path)?;
    manifest.write(path)
}

fn synth_encoding_case(a: SynthEncodingCase) -> Result<()> {
    let snr = match (a.channels, a.snr.as_slice()) {
        (Some(c), [s]) => vec![*s; c],
        (Some(c), s) if s.len() != c => {
            return Err(usage(format!("--channels {c} but {} SNR values", s.len())));
        }
        (_, s) => s.to_vec(),
    };
    let case = synth::encoding_case(a.n_times, a.dim, &snr, a.seed)?;
    create_dir(&a.out_dir)?;
    let params = |m: Manifest| {
        m.with_extra("command", "synth encoding-case")
            .with_extra("n_times", a.n_times)
            .with_extra("dim", a.dim)
            .with_extra("snr", join(&snr))
            .with_extra("seed", a.seed)
    };
    let base = params(case.response.manifest.clone());
    io::write_matrix(case.features.features(), &base, &a.out_dir.join("features.lam"))?;
    write_timeline(&case.timeline, &base, &a.out_dir.join("timeline.tsv"))?;
    let mut response = case.response.clone();
    response.manifest = base.clone();
    response.write(&a.out_dir.join("response.lam"))?;
    let rows: Vec<Vec<String>> = response
        .channel_ids()
        .iter()
        .zip(&snr)
        .zip(&case.ceiling)
        .map(|((id, s), c)| vec![id.clone(), s.to_string(), c.to_string()])
        .collect();
    let ceiling = a.out_dir.join("ceiling.csv");
    write_csv(&ceiling, &["channel", "snr", "ceiling"], &rows)?;
    base.write(&ceiling)
}

fn synth_fixture(a: SynthFixture) -> Result<()> {
    let fx = synth::layered_model_fixture(a.layers, a.n_times, a.channels, a.snr, a.seed)?;
    create_dir(&a.out_dir)?;
    let params = |m: Manifest| {
        m.with_extra("command", "synth fixture")
            .with_extra("layers", a.layers)
            .with_extra("n_times", a.n_times)
            .with_extra("channels", a.channels)
            .with_extra("snr", a.snr)
            .with_extra("seed", a.seed)
    };
    for (l, layer) in fx.layers.iter().enumerate() {
        let path = a.out_dir.join(format!("layer_{l:02}.lam"));
        io::write_matrix(layer.data(), &params(layer.manifest.clone()), &path)?;
    }
    let base = params(fx.response.manifest.clone());
    write_timeline(&fx.timeline, &base, &a.out_dir.join("timeline.tsv"))?;
    let mut response = fx.response.clone();
    response.manifest = base.clone();
    response.write(&a.out_dir.join("response.lam"))?;
    let rows: Vec<Vec<String>> = fx
        .dims
        .iter()
        .enumerate()
        .map(|(l, d)| vec![l.to_string(), d.to_string(), u8::from(l == fx.peak).to_string()])
        .collect();
    let truth = a.out_dir.join("truth.csv");
    write_csv(&truth, &["layer", "manifold_dim", "peak"], &rows)?;
    base.write(&truth)
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Id(IdCmd::Estimate(a)) => id_estimate(a),
        Command::Id(IdCmd::Linear(a)) => id_linear(a),
        Command::Encode(EncodeCmd::Fmri(a)) => encode_fmri(a),
        Command::Encode(EncodeCmd::Ecog(a)) => encode_ecog(a),
        Command::Preprocess(PreprocessCmd::Ecog(a)) => preprocess_ecog(a),
        Command::Lens(LensCmd::Fit(a)) => lens_fit(a),
        Command::Lens(LensCmd::Eval(a)) => lens_eval(a),
        Command::Rff(RffCmd::Gen(a)) => rff_gen(a),
        Command::Probe(ProbeCmd::Classify(a)) => probe_classify(a),
        Command::Probe(ProbeCmd::Regress(a)) => probe_regress(a),
        Command::Stats(StatsCmd::Correlate(a)) => stats_correlate(a),
        Command::Stats(StatsCmd::Table(a)) => stats_table(a),
        Command::Synth(SynthCmd::Hypercube(a)) => synth_hypercube(a),
        Command::Synth(SynthCmd::SwissRoll(a)) => synth_swiss_roll(a),
        Command::Synth(SynthCmd::EncodingCase(a)) => synth_encoding_case(a),
        Command::Synth(SynthCmd::Fixture(a)) => synth_fixture(a),
    }
}

fn report(e: &Error) -> i32 {
    let msg = e.to_string().replace('\n', " ");
    eprintln!("E:{}:{}: {msg}", e.module(), e.code());
    if e.is_io() {
        2
    } else {
        1
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code: 0 success, 1 computation error, 2 usage or I/O error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                return report(&usage("missing subcommand; see --help"));
            }
            let text = e.to_string();
            let line = text.lines().next().unwrap_or("invalid arguments");
            return report(&usage(line.trim_start_matches("error: ")));
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return report(&usage("--threads must be >= 1"));
        }
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => return report(&usage(format!("cannot start worker pool: {e}"))),
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(()) => 0,
        Err(e) => report(&e),
    }
}
