//! Encoding models: fMRI (Lanczos -> FIR delays -> ridge -> held-out
//! Pearson R) and ECoG (per-word ridge models over a sweep of response lags).

mod ridge;

pub use ridge::{column_correlations, default_alphas, log_grid, ridge_cv, ridge_solve, RidgeFit, RidgeSpectrum};

use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::{DenseMatrix, ResponseSeries};
use crate::signal::{fir_delays, lanczos_downsample, IrregularFeatureSeries, LanczosOptions};

const MODULE: &str = "encoding";

pub const DEFAULT_DELAYS: [usize; 4] = [1, 2, 3, 4];
pub const DEFAULT_CHUNKS: usize = 5;
pub const DEFAULT_TEST_FRAC: f64 = 0.2;
pub const DEFAULT_LAGS: usize = 128;
pub const DEFAULT_LAG_RANGE: (f64, f64) = (-2.0, 2.0);

/// Which rows are held out for scoring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Split {
    /// Contiguous final block holding this fraction of rows.
    TailFraction(f64),
    /// Contiguous block `start..end`; everything else trains.
    Block { start: usize, end: usize },
}

impl Split {
    /// (train segments, test segment) as half-open ranges.
    fn segments(self, n: usize) -> Result<(Vec<(usize, usize)>, (usize, usize))> {
        let (start, end) = match self {
            Split::TailFraction(f) => {
                if !(f > 0.0 && f < 1.0) {
                    return Err(Error::invalid(MODULE, "test fraction must lie in (0, 1)"));
                }
                let n_test = ((n as f64) * f).ceil() as usize;
                (n - n_test.min(n), n)
            }
            Split::Block { start, end } => (start, end.min(n)),
        };
        if start >= end {
            return Err(Error::invalid(MODULE, "empty test set"));
        }
        let train: Vec<(usize, usize)> = [(0, start), (end, n)].into_iter().filter(|(a, b)| b > a).collect();
        if train.is_empty() {
            return Err(Error::invalid(MODULE, "empty training set"));
        }
        Ok((train, (start, end)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodingResult {
    pub channel_ids: Vec<String>,
    /// Held-out Pearson R per channel (best lag for ECoG).
    pub r: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Channels x lags, ECoG only.
    pub per_lag_r: Option<DMatrix<f64>>,
    /// Seconds, ECoG only.
    pub best_lag: Option<Vec<f64>>,
    pub lags: Option<Vec<f64>>,
}

impl EncodingResult {
    pub fn mean_r(&self) -> f64 {
        self.r.iter().sum::<f64>() / self.r.len() as f64
    }

    pub fn median_r(&self) -> f64 {
        median(&self.r)
    }

    /// `channel,r,best_lag,alpha`; best_lag is empty for fMRI results.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Table(e.to_string()))?;
        let err = |e: csv::Error| Error::Table(e.to_string());
        w.write_record(["channel", "r", "best_lag", "alpha"]).map_err(err)?;
        for (c, id) in self.channel_ids.iter().enumerate() {
            let lag = self.best_lag.as_ref().map(|l| l[c].to_string()).unwrap_or_default();
            w.write_record([id.clone(), self.r[c].to_string(), lag, self.alpha[c].to_string()])
                .map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FmriConfig {
    pub delays: Vec<usize>,
    pub alphas: Vec<f64>,
    pub n_chunks: usize,
    pub split: Split,
    pub lanczos: LanczosOptions,
}

impl Default for FmriConfig {
    fn default() -> Self {
        Self {
            delays: DEFAULT_DELAYS.to_vec(),
            alphas: default_alphas(),
            n_chunks: DEFAULT_CHUNKS,
            split: Split::TailFraction(DEFAULT_TEST_FRAC),
            lanczos: LanczosOptions::default(),
        }
    }
}

/// Word-rate features resampled to the response grid and delay-stacked.
pub fn fmri_design(features: &IrregularFeatureSeries, period: f64, n_times: usize, delays: &[usize], lanczos: LanczosOptions) -> Result<DenseMatrix> {
    let down = lanczos_downsample(features, period, n_times, lanczos)?;
    fir_delays(&down, delays)
}

fn rows_of(segments: &[(usize, usize)], skip: usize) -> Vec<usize> {
    segments.iter().flat_map(|&(a, b)| (a + skip).min(b)..b).collect()
}

pub fn encode_fmri(features: &IrregularFeatureSeries, response: &ResponseSeries, cfg: &FmriConfig) -> Result<EncodingResult> {
    let t = response.n_times();
    let period = response.sampling().period();
    let design = fmri_design(features, period, t, &cfg.delays, cfg.lanczos)?.to_dmatrix();
    let y = response.data().to_dmatrix();
    let (train_seg, test_seg) = cfg.split.segments(t)?;
    // the first max-delay rows of every segment see zero-padded history
    let skip = cfg.delays.iter().copied().max().unwrap_or(0);
    let train = rows_of(&train_seg, skip);
    let test = rows_of(&[test_seg], skip);
    if test.len() < 3 {
        return Err(Error::invalid(MODULE, "test set too small after edge trimming"));
    }
    let fit = ridge_cv(&design.select_rows(&train), &y.select_rows(&train), &cfg.alphas, cfg.n_chunks)?;
    let pred = fit.predict(&design.select_rows(&test));
    let r = column_correlations(&pred, &y.select_rows(&test));
    Ok(EncodingResult {
        channel_ids: response.channel_ids().to_vec(),
        r,
        alpha: fit.alpha_per_channel,
        per_lag_r: None,
        best_lag: None,
        lags: None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EcogConfig {
    pub n_lags: usize,
    pub lag_lo: f64,
    pub lag_hi: f64,
    pub alphas: Vec<f64>,
    pub n_chunks: usize,
    /// Final fraction of words held out.
    pub test_frac: f64,
}

impl Default for EcogConfig {
    fn default() -> Self {
        Self {
            n_lags: DEFAULT_LAGS,
            lag_lo: DEFAULT_LAG_RANGE.0,
            lag_hi: DEFAULT_LAG_RANGE.1,
            alphas: default_alphas(),
            n_chunks: DEFAULT_CHUNKS,
            test_frac: DEFAULT_TEST_FRAC,
        }
    }
}

/// Evenly spaced lags including both ends.
pub fn lag_grid(n_lags: usize, lo: f64, hi: f64) -> Result<Vec<f64>> {
    if n_lags < 2 || !(lo < hi) {
        return Err(Error::invalid(MODULE, "need n_lags >= 2 and lag_lo < lag_hi"));
    }
    let step = (hi - lo) / (n_lags - 1) as f64;
    Ok((0..n_lags).map(|j| lo + step * j as f64).collect())
}

/// Held-out R per channel for one lag.
fn score_lag(features: &IrregularFeatureSeries, y: &DenseMatrix, rate: f64, n_train_words: usize, lag: f64, cfg: &EcogConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let t = y.rows() as i64;
    let sample = |e: usize| -> Option<usize> {
        let s = ((features.times()[e] + lag) * rate).round() as i64;
        (0..t).contains(&s).then_some(s as usize)
    };
    let pick = |words: std::ops::Range<usize>| -> (Vec<usize>, Vec<usize>) {
        words.filter_map(|e| sample(e).map(|s| (e, s))).unzip()
    };
    let (train_w, train_s) = pick(0..n_train_words);
    let (test_w, test_s) = pick(n_train_words..features.len());
    if train_w.is_empty() && test_w.is_empty() {
        return Err(Error::invalid(
            MODULE,
            format!("lag {lag:.4} s places every word outside the recording"),
        ));
    }
    if train_w.len() < cfg.n_chunks.max(3) || test_w.len() < 3 {
        return Err(Error::invalid(
            MODULE,
            format!("lag {lag:.4} s leaves too few words in the recording"),
        ));
    }
    let x = features.features().to_dmatrix();
    let ym = y.to_dmatrix();
    let fit = ridge_cv(&x.select_rows(&train_w), &ym.select_rows(&train_s), &cfg.alphas, cfg.n_chunks)?;
    let pred = fit.predict(&x.select_rows(&test_w));
    Ok((column_correlations(&pred, &ym.select_rows(&test_s)), fit.alpha_per_channel))
}

/// Separate per-word ridge model per lag; each channel reports its best lag.
pub fn encode_ecog(features: &IrregularFeatureSeries, response: &ResponseSeries, cfg: &EcogConfig) -> Result<EncodingResult> {
    let lags = lag_grid(cfg.n_lags, cfg.lag_lo, cfg.lag_hi)?;
    if !(cfg.test_frac > 0.0 && cfg.test_frac < 1.0) {
        return Err(Error::invalid(MODULE, "test fraction must lie in (0, 1)"));
    }
    let n_words = features.len();
    let n_test = ((n_words as f64) * cfg.test_frac).ceil() as usize;
    if n_test == 0 || n_test >= n_words {
        return Err(Error::invalid(MODULE, "empty train or test word set"));
    }
    let rate = response.sampling().rate();
    let per_lag: Vec<(Vec<f64>, Vec<f64>)> = lags
        .par_iter()
        .map(|&lag| score_lag(features, response.data(), rate, n_words - n_test, lag, cfg))
        .collect::<Result<_>>()?;
    let c = response.n_channels();
    let per_lag_r = DMatrix::from_fn(c, lags.len(), |ch, l| per_lag[l].0[ch]);
    let mut r = Vec::with_capacity(c);
    let mut best_lag = Vec::with_capacity(c);
    let mut alpha = Vec::with_capacity(c);
    for ch in 0..c {
        let row = per_lag_r.row(ch);
        let mut b = 0;
        for l in 1..lags.len() {
            if row[l] > row[b] {
                b = l;
            }
        }
        r.push(row[b]);
        best_lag.push(lags[b]);
        alpha.push(per_lag[b].1[ch]);
    }
    Ok(EncodingResult {
        channel_ids: response.channel_ids().to_vec(),
        r,
        alpha,
        per_lag_r: Some(per_lag_r),
        best_lag: Some(best_lag),
        lags: Some(lags),
    })
}
