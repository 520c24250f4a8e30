//! Temporal conditioning: Lanczos resampling of word-rate features onto a
//! response grid, FIR delay stacking, and ECoG re-referencing/filtering.
//!
//! Matrices are time x channel; filters run down each column.

mod iir;

pub use iir::{butter_bandpass, notch, Biquad, Sos};

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::DenseMatrix;

const MODULE: &str = "signal";

pub const DEFAULT_NOTCH_Q: f64 = 30.0;
pub const DEFAULT_BUTTER_ORDER: usize = 4;

/// Word- or chunk-rate features with their timestamps (seconds).
#[derive(Debug, Clone, PartialEq)]
pub struct IrregularFeatureSeries {
    times: Vec<f64>,
    features: DenseMatrix,
}

impl IrregularFeatureSeries {
    pub fn new(times: Vec<f64>, features: DenseMatrix) -> Result<Self> {
        if times.len() != features.rows() {
            return Err(Error::invalid(
                MODULE,
                format!("{} times for {} feature rows", times.len(), features.rows()),
            ));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid(MODULE, "non-finite event time"));
        }
        if times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid(MODULE, "event times must be nondecreasing"));
        }
        Ok(Self { times, features })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_dims(&self) -> usize {
        self.features.cols()
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

/// sinc(x) sinc(x / lobes) inside |x| < lobes, zero outside.
pub fn lanczos_kernel(x: f64, lobes: usize) -> f64 {
    let a = lobes as f64;
    if x.abs() >= a {
        0.0
    } else {
        sinc(x) * sinc(x / a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanczosOptions {
    pub lobes: usize,
    /// Divide each output sample by its summed kernel weight.
    pub normalize: bool,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            lobes: 3,
            normalize: false,
        }
    }
}

/// Resamples events onto the grid `t * grid_period`, `t = 0..grid_len`, with
/// cutoff at the grid's Nyquist frequency.
pub fn lanczos_downsample(
    series: &IrregularFeatureSeries,
    grid_period: f64,
    grid_len: usize,
    opts: LanczosOptions,
) -> Result<DenseMatrix> {
    if series.is_empty() {
        return Err(Error::invalid(MODULE, "empty feature series"));
    }
    if !(grid_period > 0.0) || opts.lobes == 0 || grid_len == 0 {
        return Err(Error::invalid(MODULE, "need grid_period > 0, lobes >= 1, grid_len >= 1"));
    }
    let cutoff = 1.0 / (2.0 * grid_period);
    let reach = opts.lobes as f64 / cutoff;
    let d = series.n_dims();
    let times = series.times();
    let rows: Vec<Vec<f64>> = (0..grid_len)
        .into_par_iter()
        .map(|t| {
            let g = t as f64 * grid_period;
            let first = times.partition_point(|&e| e <= g - reach);
            let mut acc = vec![0.0; d];
            let mut wsum = 0.0;
            for (e, &te) in times.iter().enumerate().skip(first) {
                if te >= g + reach {
                    break;
                }
                let w = lanczos_kernel((g - te) * cutoff, opts.lobes);
                if w != 0.0 {
                    wsum += w;
                    for (a, f) in acc.iter_mut().zip(series.features().row(e)) {
                        *a += w * f;
                    }
                }
            }
            if opts.normalize && wsum != 0.0 {
                acc.iter_mut().for_each(|a| *a /= wsum);
            }
            acc
        })
        .collect();
    DenseMatrix::from_rows(&rows)
}

/// Horizontal stack of copies of `x` shifted down by each delay, zero-filled
/// at the top. Output width is `delays.len() * x.cols()`.
pub fn fir_delays(x: &DenseMatrix, delays: &[usize]) -> Result<DenseMatrix> {
    let t = x.rows();
    let d = x.cols();
    if delays.is_empty() {
        return Err(Error::invalid(MODULE, "no delays given"));
    }
    if let Some(bad) = delays.iter().find(|&&k| k >= t) {
        return Err(Error::invalid(MODULE, format!("delay {bad} >= series length {t}")));
    }
    let w = delays.len() * d;
    let mut out = vec![0.0; t * w];
    for (j, &k) in delays.iter().enumerate() {
        for r in k..t {
            out[r * w + j * d..r * w + (j + 1) * d].copy_from_slice(x.row(r - k));
        }
    }
    DenseMatrix::new(t, w, out)
}

/// Subtracts the across-channel mean at every timepoint.
pub fn common_average_reference(x: &DenseMatrix) -> Result<DenseMatrix> {
    if x.cols() < 2 {
        return Err(Error::invalid(MODULE, "common average reference needs >= 2 channels"));
    }
    let c = x.cols() as f64;
    let mut out = Vec::with_capacity(x.rows() * x.cols());
    for row in x.iter_rows() {
        let mean = row.iter().sum::<f64>() / c;
        out.extend(row.iter().map(|v| v - mean));
    }
    DenseMatrix::new(x.rows(), x.cols(), out)
}

fn map_columns(x: &DenseMatrix, f: impl Fn(&[f64]) -> Vec<f64> + Sync) -> Result<DenseMatrix> {
    let (t, c) = (x.rows(), x.cols());
    let cols: Vec<Vec<f64>> = (0..c).into_par_iter().map(|j| f(&x.column(j))).collect();
    let mut out = vec![0.0; t * c];
    for (j, col) in cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            out[i * c + j] = *v;
        }
    }
    DenseMatrix::new(t, c, out)
}

/// Zero-phase notches at `freq`, `2 freq`, ..., `harmonics * freq`.
pub fn notch_filter(x: &DenseMatrix, rate: f64, freq: f64, harmonics: usize, q: f64) -> Result<DenseMatrix> {
    if !(rate > 0.0 && freq > 0.0 && q > 0.0) || harmonics == 0 {
        return Err(Error::invalid(MODULE, "notch needs positive rate, frequency, q and harmonics"));
    }
    if freq * harmonics as f64 >= rate / 2.0 {
        return Err(Error::invalid(
            MODULE,
            format!("harmonic {} Hz at or above Nyquist {} Hz", freq * harmonics as f64, rate / 2.0),
        ));
    }
    let sos = Sos::new((1..=harmonics).map(|h| notch(rate, freq * h as f64, q)).collect());
    map_columns(x, |c| sos.filtfilt(c))
}

/// Zero-phase Butterworth band-pass of the given order.
pub fn butterworth_bandpass(x: &DenseMatrix, rate: f64, lo: f64, hi: f64, order: usize) -> Result<DenseMatrix> {
    if !(lo > 0.0 && lo < hi && hi < rate / 2.0) || order == 0 {
        return Err(Error::invalid(
            MODULE,
            format!("invalid band ({lo}, {hi}) Hz at rate {rate} Hz, order {order}"),
        ));
    }
    let sos = butter_bandpass(rate, lo, hi, order);
    map_columns(x, |c| sos.filtfilt(c))
}

/// Centred moving RMS over `window` samples (truncated at the edges).
pub fn moving_rms(x: &DenseMatrix, window: usize) -> Result<DenseMatrix> {
    if window == 0 {
        return Err(Error::invalid(MODULE, "window must be >= 1"));
    }
    map_columns(x, |c| {
        let n = c.len();
        let mut prefix = vec![0.0; n + 1];
        for (i, v) in c.iter().enumerate() {
            prefix[i + 1] = prefix[i] + v * v;
        }
        let half = window / 2;
        (0..n)
            .map(|i| {
                let lo = i.saturating_sub(half);
                let hi = (lo + window).min(n);
                ((prefix[hi] - prefix[lo]).max(0.0) / (hi - lo) as f64).sqrt()
            })
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sine(rate: f64, f: f64, n: usize) -> DenseMatrix {
        let v: Vec<f64> = (0..n).map(|i| (2.0 * PI * f * i as f64 / rate).sin()).collect();
        DenseMatrix::new(n, 1, v).unwrap()
    }

    fn rms(v: &[f64]) -> f64 {
        (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
    }

    fn random(t: usize, c: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::new(t, c, (0..t * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn lanczos_dense_constant() {
        let times: Vec<f64> = (0..4000).map(|i| i as f64 * 0.01).collect();
        let feats = DenseMatrix::new(4000, 1, vec![2.5; 4000]).unwrap();
        let s = IrregularFeatureSeries::new(times, feats).unwrap();
        let norm = LanczosOptions {
            normalize: true,
            ..Default::default()
        };
        let out = lanczos_downsample(&s, 2.0, 20, norm).unwrap();
        // rows whose kernel support (+-12 s) lies inside the 40 s of events
        for t in 6..=14 {
            assert!((out.get(t, 0) - 2.5).abs() < 2.5e-2, "{}", out.get(t, 0));
        }
        // raw convolution scales with event density: sum ~ 1 / (spacing * cutoff)
        let raw = lanczos_downsample(&s, 2.0, 20, LanczosOptions::default()).unwrap();
        let expect = 2.5 / (0.01 * 0.25);
        for t in 6..=14 {
            assert!((raw.get(t, 0) - expect).abs() / expect < 1e-2);
        }
    }

    #[test]
    fn lanczos_support() {
        let s = IrregularFeatureSeries::new(vec![100.0], DenseMatrix::new(1, 2, vec![1.0, -1.0]).unwrap()).unwrap();
        // period 1, lobes 3 -> support |dt| < 6 s
        let out = lanczos_downsample(&s, 1.0, 200, LanczosOptions::default()).unwrap();
        for t in 0..200 {
            let far = (t as f64 - 100.0).abs() >= 6.0;
            if far {
                assert_eq!(out.row(t), &[0.0, 0.0]);
            }
        }
        assert_eq!(out.row(100), &[1.0, -1.0]);
    }

    #[test]
    fn fir_layout() {
        let x = random(10, 2, 1);
        let y = fir_delays(&x, &[1, 2, 3, 4]).unwrap();
        assert_eq!(y.cols(), 8);
        assert!(y.row(0).iter().all(|&v| v == 0.0));
        for (j, k) in [1usize, 2, 3, 4].iter().enumerate() {
            assert_eq!(&y.row(5)[2 * j..2 * j + 2], x.row(5 - k));
        }
        assert_eq!(fir_delays(&x, &[0]).unwrap(), x);
        assert!(fir_delays(&x, &[10]).is_err());
        assert!(fir_delays(&x, &[]).is_err());
    }

    #[test]
    fn fir_unstack_recovers_input() {
        let x = random(30, 3, 2);
        let delays = [0, 2, 5];
        let y = fir_delays(&x, &delays).unwrap();
        for (j, &k) in delays.iter().enumerate() {
            for r in 0..30 - k {
                assert_eq!(&y.row(r + k)[3 * j..3 * j + 3], x.row(r));
            }
        }
    }

    #[test]
    fn car_properties() {
        let same = DenseMatrix::from_rows(&[[1.0, 1.0, 1.0], [2.0, 2.0, 2.0]]).unwrap();
        assert!(common_average_reference(&same).unwrap().values().iter().all(|&v| v == 0.0));
        let x = random(50, 4, 3);
        let y = common_average_reference(&x).unwrap();
        for row in y.iter_rows() {
            assert!(row.iter().sum::<f64>().abs() < 1e-12);
        }
        let shifted: Vec<f64> = x
            .iter_rows()
            .enumerate()
            .flat_map(|(t, r)| r.iter().map(move |v| v + (t as f64 * 0.3).sin()).collect::<Vec<_>>())
            .collect();
        let y2 = common_average_reference(&DenseMatrix::new(50, 4, shifted).unwrap()).unwrap();
        for (a, b) in y.values().iter().zip(y2.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(common_average_reference(&random(5, 1, 0)).is_err());
    }

    #[test]
    fn notch_removes_line_noise() {
        let x = sine(1000.0, 60.0, 5000);
        let y = notch_filter(&x, 1000.0, 60.0, 3, 30.0).unwrap();
        let trim = 1000;
        let ratio = rms(&y.values()[trim..5000 - trim]) / rms(&x.values()[trim..5000 - trim]);
        assert!(ratio < 0.01, "{ratio}");

        let dc = DenseMatrix::new(500, 1, vec![4.0; 500]).unwrap();
        let y = notch_filter(&dc, 1000.0, 60.0, 3, 30.0).unwrap();
        assert!(y.values().iter().all(|v| (v - 4.0).abs() < 1e-6));

        let x = sine(1000.0, 10.0, 5000);
        let y = notch_filter(&x, 1000.0, 60.0, 3, 30.0).unwrap();
        let ratio = rms(&y.values()[trim..5000 - trim]) / rms(&x.values()[trim..5000 - trim]);
        assert!((ratio - 1.0).abs() < 0.01, "{ratio}");

        assert!(notch_filter(&x, 1000.0, 60.0, 9, 30.0).is_err());
    }

    #[test]
    fn bandpass_gains() {
        let trim = 500;
        let gain = |f: f64| {
            let x = sine(1000.0, f, 4000);
            let y = butterworth_bandpass(&x, 1000.0, 70.0, 200.0, 4).unwrap();
            rms(&y.values()[trim..4000 - trim]) / rms(&x.values()[trim..4000 - trim])
        };
        let g = gain(135.0);
        assert!((0.95..=1.05).contains(&g), "{g}");
        assert!(gain(10.0) < 0.05);
        let z = DenseMatrix::zeros(300, 2);
        assert!(butterworth_bandpass(&z, 1000.0, 70.0, 200.0, 4)
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 0.0));
        assert!(butterworth_bandpass(&z, 1000.0, 200.0, 70.0, 4).is_err());
        assert!(butterworth_bandpass(&z, 1000.0, 70.0, 600.0, 4).is_err());
    }

    #[test]
    fn zero_phase() {
        let x = sine(1000.0, 120.0, 3000);
        let y = butterworth_bandpass(&x, 1000.0, 70.0, 200.0, 4).unwrap();
        let (xs, ys) = (&x.values()[500..2500], &y.values()[500..2500]);
        let xc = |lag: i64| -> f64 {
            (0..xs.len() as i64)
                .filter_map(|i| {
                    let j = i + lag;
                    (j >= 0 && (j as usize) < ys.len()).then(|| xs[i as usize] * ys[j as usize])
                })
                .sum()
        };
        let best = (-4..=4).max_by(|&a, &b| xc(a).total_cmp(&xc(b))).unwrap();
        assert_eq!(best, 0);
    }

    #[test]
    fn filters_are_linear() {
        let a = random(400, 2, 5);
        let b = random(400, 2, 6);
        let combo = DenseMatrix::new(400, 2, a.values().iter().zip(b.values()).map(|(x, y)| 2.0 * x - 0.5 * y).collect()).unwrap();
        type F = Box<dyn Fn(&DenseMatrix) -> DenseMatrix>;
        let filters: Vec<F> = vec![
            Box::new(|m| notch_filter(m, 1000.0, 60.0, 2, 30.0).unwrap()),
            Box::new(|m| butterworth_bandpass(m, 1000.0, 70.0, 200.0, 4).unwrap()),
            Box::new(|m| common_average_reference(m).unwrap()),
        ];
        for f in filters {
            let (fa, fb, fc) = (f(&a), f(&b), f(&combo));
            for i in 0..fa.values().len() {
                let lin = 2.0 * fa.values()[i] - 0.5 * fb.values()[i];
                assert!((lin - fc.values()[i]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn envelope() {
        let x = sine(1000.0, 100.0, 2000);
        let e = moving_rms(&x, 100).unwrap();
        assert!((e.get(1000, 0) - 0.5f64.sqrt()).abs() < 1e-2);
    }
}
