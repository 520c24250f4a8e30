//! Seeded generators with known answers: manifolds of known dimension,
//! encoding problems with an analytic correlation ceiling, and a layered
//! "model" whose dimension and encoding profiles peak together.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, StandardNormal};

use crate::encoding::DEFAULT_DELAYS;
use crate::error::{Error, Result};
use crate::io::{ActivationMatrix, DenseMatrix, Event, Manifest, Modality, ResponseSeries, Sampling, Timeline};
use crate::signal::{fir_delays, lanczos_downsample, IrregularFeatureSeries, LanczosOptions};

const MODULE: &str = "synth";

pub const DEFAULT_TR: f64 = 2.0;
pub const DEFAULT_WORD_GAP: f64 = 0.4;

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// First `d` columns of a Haar-random orthogonal `big x big` matrix.
pub fn random_orthonormal(big: usize, d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let qr = gaussian(big, big, rng).qr();
    let (q, r) = (qr.q(), qr.r());
    let mut q = q.columns(0, d).into_owned();
    // sign fix makes the draw uniform over the orthogonal group
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

fn synthetic_manifest(layer: u32) -> Manifest {
    Manifest {
        modality: Modality::Synthetic,
        layer,
        ..Default::default()
    }
}

fn embed(latent: &DMatrix<f64>, ambient: usize, noise_sd: f64, rng: &mut ChaCha8Rng) -> Result<DenseMatrix> {
    let q = random_orthonormal(ambient, latent.ncols(), rng);
    let mut x = latent * q.transpose();
    if noise_sd > 0.0 {
        x += gaussian(x.nrows(), ambient, rng) * noise_sd;
    }
    DenseMatrix::from_dmatrix(&x)
}

/// Uniform points in [0, 1]^d, rotated into `ambient` dimensions, plus
/// isotropic Gaussian noise.
pub fn hypercube(n: usize, d: usize, ambient: usize, noise_sd: f64, seed: u64) -> Result<ActivationMatrix> {
    if d == 0 || d > ambient {
        return Err(Error::invalid(MODULE, format!("need 1 <= d <= D, got d = {d}, D = {ambient}")));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::invalid(MODULE, "noise sd must be >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let latent = DMatrix::from_fn(n, d, |_, _| rng.gen::<f64>());
    let data = embed(&latent, ambient, noise_sd, &mut rng)?;
    ActivationMatrix::new(data, synthetic_manifest(0).with_extra("generator", "hypercube"))
}

/// Swiss roll (t cos t, h, t sin t), t in [1.5 pi, 4.5 pi], h in [0, 21],
/// rotated into `ambient` dimensions.
pub fn swiss_roll(n: usize, ambient: usize, seed: u64) -> Result<ActivationMatrix> {
    if ambient < 3 {
        return Err(Error::invalid(MODULE, "swiss roll needs D >= 3"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut latent = DMatrix::zeros(n, 3);
    for i in 0..n {
        let t = 1.5 * std::f64::consts::PI * (1.0 + 2.0 * rng.gen::<f64>());
        let h = 21.0 * rng.gen::<f64>();
        latent[(i, 0)] = t * t.cos();
        latent[(i, 1)] = h;
        latent[(i, 2)] = t * t.sin();
    }
    let data = embed(&latent, ambient, 0.0, &mut rng)?;
    ActivationMatrix::new(data, synthetic_manifest(0).with_extra("generator", "swiss-roll"))
}

/// Pearson ceiling of a perfect model at signal-to-noise variance ratio `snr`.
pub fn ceiling(snr: f64) -> f64 {
    if snr.is_infinite() {
        1.0
    } else {
        (snr / (1.0 + snr)).sqrt()
    }
}

/// Word onsets with exponential gaps, covering `duration` seconds.
pub fn word_timeline(duration: f64, mean_gap: f64, rng: &mut ChaCha8Rng) -> Result<Timeline> {
    let gap = Exp::new(1.0 / mean_gap).map_err(|_| Error::invalid(MODULE, "mean word gap must be > 0"))?;
    let mut events = Vec::new();
    let mut t = rng.sample(gap);
    while t < duration {
        events.push(Event {
            label: format!("w{}", events.len()),
            onset: t,
            offset: t + 0.5 * mean_gap,
        });
        t += rng.sample(gap);
    }
    Timeline::new(events)
}

/// Response = delayed, resampled features times random weights, plus noise
/// scaled so every channel has its requested signal-to-noise variance ratio.
fn simulate_response(
    features: &IrregularFeatureSeries,
    n_times: usize,
    period: f64,
    snr: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<DenseMatrix> {
    let down = lanczos_downsample(features, period, n_times, LanczosOptions::default())?;
    let design = fir_delays(&down, &DEFAULT_DELAYS)?.to_dmatrix();
    let c = snr.len();
    let w = gaussian(design.ncols(), c, rng);
    let mut signal = &design * w;
    let noise = gaussian(n_times, c, rng);
    for j in 0..c {
        let col = signal.column(j);
        let mean = col.sum() / n_times as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n_times as f64;
        let s = snr[j];
        if s == 0.0 || var == 0.0 {
            signal.column_mut(j).fill(0.0);
            signal.column_mut(j).axpy(1.0, &noise.column(j), 1.0);
        } else if s.is_finite() {
            let sd = (var / s).sqrt();
            signal.column_mut(j).axpy(sd, &noise.column(j), 1.0);
        }
    }
    DenseMatrix::from_dmatrix(&signal)
}

#[derive(Debug, Clone)]
pub struct EncodingCase {
    pub features: IrregularFeatureSeries,
    pub timeline: Timeline,
    pub response: ResponseSeries,
    pub ceiling: Vec<f64>,
}

/// Gaussian word features on a random word timeline spanning `n_times` TRs
/// of 2 s, and a linear response with the given per-channel SNR.
pub fn encoding_case(n_times: usize, dim: usize, snr: &[f64], seed: u64) -> Result<EncodingCase> {
    if snr.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::invalid(MODULE, "SNR must be >= 0"));
    }
    if snr.is_empty() || dim == 0 || n_times == 0 {
        return Err(Error::invalid(MODULE, "need at least one channel, feature and timepoint"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let timeline = word_timeline(n_times as f64 * DEFAULT_TR, DEFAULT_WORD_GAP, &mut rng)?;
    let x = DenseMatrix::from_dmatrix(&gaussian(timeline.len(), dim, &mut rng))?;
    let features = IrregularFeatureSeries::new(timeline.onsets(), x)?;
    let y = simulate_response(&features, n_times, DEFAULT_TR, snr, &mut rng)?;
    let manifest = synthetic_manifest(0).with_extra("generator", "encoding-case");
    let response = ResponseSeries::with_default_ids(y, Sampling::Period(DEFAULT_TR), manifest)?;
    Ok(EncodingCase {
        features,
        timeline,
        response,
        ceiling: snr.iter().map(|&s| ceiling(s)).collect(),
    })
}

#[derive(Debug, Clone)]
pub struct LayeredFixture {
    /// One word x ambient matrix per layer; row i is word i of `timeline`.
    pub layers: Vec<ActivationMatrix>,
    /// Generating manifold dimension of each layer.
    pub dims: Vec<usize>,
    pub peak: usize,
    pub timeline: Timeline,
    pub response: ResponseSeries,
}

impl LayeredFixture {
    pub fn layer_features(&self, layer: usize) -> Result<IrregularFeatureSeries> {
        IrregularFeatureSeries::new(self.timeline.onsets(), self.layers[layer].data().clone())
    }
}

/// Peak layer of the fixture.
pub fn fixture_peak(n_layers: usize) -> usize {
    (0.45 * n_layers as f64).floor() as usize
}

/// Manifold dimension per layer: distinct values rising to the peak then
/// falling (even offsets before the peak, odd after it).
pub fn fixture_dims(n_layers: usize) -> Vec<usize> {
    let p = fixture_peak(n_layers);
    let top = (2 * p).max((2 * (n_layers - 1 - p)).saturating_sub(1)) + 2;
    (0..n_layers)
        .map(|l| if l <= p { top - 2 * (p - l) } else { top - 2 * (l - p) + 1 })
        .collect()
}

pub const FIXTURE_WORDS_PER_TR: f64 = DEFAULT_TR / DEFAULT_WORD_GAP;

/// Every layer sees the same words through the first `dims[l]` coordinates
/// of a shared uniform latent, rotated into a common ambient width. The
/// response is driven by the peak layer.
pub fn layered_model_fixture(n_layers: usize, n_times: usize, n_channels: usize, snr: f64, seed: u64) -> Result<LayeredFixture> {
    if n_layers < 6 {
        return Err(Error::invalid(MODULE, "fixture needs at least 6 layers"));
    }
    let dims = fixture_dims(n_layers);
    let peak = fixture_peak(n_layers);
    let d_max = dims[peak];
    let ambient = (d_max + 8).max(32);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let timeline = word_timeline(n_times as f64 * DEFAULT_TR, DEFAULT_WORD_GAP, &mut rng)?;
    let latent = DMatrix::from_fn(timeline.len(), d_max, |_, _| rng.gen::<f64>() - 0.5);
    let mut layers = Vec::with_capacity(n_layers);
    for (l, &d) in dims.iter().enumerate() {
        let data = embed(&latent.columns(0, d).into_owned(), ambient, 0.0, &mut rng)?;
        let manifest = synthetic_manifest(l as u32)
            .with_extra("generator", "fixture")
            .with_extra("manifold_dim", d);
        layers.push(ActivationMatrix::new(data, Manifest { model: "fixture".into(), ..manifest })?);
    }
    let drive = IrregularFeatureSeries::new(timeline.onsets(), layers[peak].data().clone())?;
    let y = simulate_response(&drive, n_times, DEFAULT_TR, &vec![snr; n_channels], &mut rng)?;
    let manifest = Manifest {
        model: "fixture".into(),
        ..synthetic_manifest(peak as u32)
    };
    let response = ResponseSeries::with_default_ids(y, Sampling::Period(DEFAULT_TR), manifest)?;
    Ok(LayeredFixture {
        layers,
        dims,
        peak,
        timeline,
        response,
    })
}
