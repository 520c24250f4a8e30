//! Intrinsic dimension: GRIDE scale analysis with bootstraps, plus linear
//! (PCA / participation-ratio) dimensionalities.

mod gride;
mod linear;
mod scales;

pub use gride::{gride_log_density, gride_mle, ln_beta, GrideFit, RatioSample};
pub use linear::{linear_dims, participation_ratio, pca_dim, LinearDims, PCA_THRESHOLD};
pub use scales::{preset_scale, ScaleRule, SCALE_PRESETS};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::ActivationMatrix;
use crate::neighbors::{dedup, rank_distances, RankDistances};

const MODULE: &str = "intrinsic-dim";

/// Largest tolerated share of exact duplicates in an input point set.
pub const MAX_DUPLICATE_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleChoice {
    /// Plateau of the smoothed profile.
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileOptions {
    pub max_exp: u32,
    pub choice: ScaleChoice,
    pub bootstraps: usize,
    pub seed: u64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self {
            max_exp: 12,
            choice: ScaleChoice::Auto,
            bootstraps: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleProfile {
    pub scales: Vec<usize>,
    pub estimates: Vec<f64>,
    pub stderr: Vec<f64>,
    pub chosen_k: usize,
    pub chosen_id: f64,
    pub bootstrap_mean: f64,
    pub bootstrap_sd: f64,
    pub bootstrap_ids: Vec<f64>,
    pub ambient_dim: usize,
    /// Exact duplicates dropped before estimation.
    pub removed: usize,
}

impl ScaleProfile {
    pub fn estimate_at(&self, k: usize) -> Option<f64> {
        self.scales.iter().position(|&s| s == k).map(|i| self.estimates[i])
    }
}

/// Dyadic scales 2^0..=2^max_exp with 2k <= n - 1.
pub fn admissible_scales(n: usize, max_exp: u32) -> Vec<usize> {
    (0..=max_exp)
        .map(|e| 1usize << e)
        .take_while(|&k| 2 * k < n)
        .collect()
}

fn ratios_at(dist: &RankDistances, k: usize) -> Result<RatioSample> {
    let near = dist.at_rank(k);
    let far = dist.at_rank(2 * k);
    let ratios: Vec<f64> = far.iter().zip(&near).map(|(f, n)| f / n).filter(|&m| m > 1.0).collect();
    let dropped = near.len() - ratios.len();
    if dropped > 0 {
        log::warn!("k={k}: {dropped} points with r_2k = r_k skipped");
    }
    RatioSample::new(k, ratios)
}

fn fit_scale(dist: &RankDistances, k: usize, d_max: f64) -> Result<GrideFit> {
    let fit = gride_mle(&ratios_at(dist, k)?, d_max)?;
    if fit.at_bound {
        log::warn!("k={k}: estimate {} sits on the search bound", fit.id);
    }
    Ok(fit)
}

/// Median over each window of three adjacent scales (two at the ends), then
/// the scale whose log-log slope is flattest. Ties go to the smaller k.
pub fn plateau_index(scales: &[usize], estimates: &[f64]) -> usize {
    let n = estimates.len();
    if n < 2 {
        return 0;
    }
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let mut w: Vec<f64> = estimates[i.saturating_sub(1)..(i + 2).min(n)].to_vec();
            w.sort_by(f64::total_cmp);
            if w.len() % 2 == 1 {
                w[w.len() / 2]
            } else {
                0.5 * (w[w.len() / 2 - 1] + w[w.len() / 2])
            }
        })
        .collect();
    let ln = |v: f64| v.max(f64::MIN_POSITIVE).ln();
    let slope = |a: usize, b: usize| (ln(smooth[b]) - ln(smooth[a])) / (ln(scales[b] as f64) - ln(scales[a] as f64));
    let mut best = 0;
    let mut best_val = f64::INFINITY;
    for i in 0..n {
        let s = if i == 0 {
            slope(0, 1)
        } else if i == n - 1 {
            slope(n - 2, n - 1)
        } else {
            slope(i - 1, i + 1)
        }
        .abs();
        if s < best_val {
            best_val = s;
            best = i;
        }
    }
    best
}

/// GRIDE estimates over dyadic scales, plateau selection and bootstrap
/// spread at the chosen scale.
pub fn gride_scale_profile(points: &ActivationMatrix, opts: &ProfileOptions) -> Result<ScaleProfile> {
    if points.n_samples() < 4 {
        return Err(Error::invalid(MODULE, "scale analysis needs at least 4 points"));
    }
    let ambient = points.n_dims();
    let d_max = 10.0 * ambient as f64;
    let (pts, removed) = dedup(points, 0.0)?;
    if removed as f64 > MAX_DUPLICATE_FRACTION * points.n_samples() as f64 {
        return Err(Error::degenerate(
            MODULE,
            format!("{removed} of {} points are duplicates", points.n_samples()),
        ));
    }
    let n = pts.n_samples();
    let scales = admissible_scales(n, opts.max_exp);
    if scales.len() < 2 {
        return Err(Error::invalid(
            MODULE,
            format!("only {} admissible scale(s) for {n} points", scales.len()),
        ));
    }
    let ranks: Vec<usize> = scales.iter().flat_map(|&k| [k, 2 * k]).collect();
    let dist = rank_distances(&pts, &ranks)?;
    let fits: Vec<GrideFit> = scales
        .par_iter()
        .map(|&k| fit_scale(&dist, k, d_max))
        .collect::<Result<_>>()?;
    let estimates: Vec<f64> = fits.iter().map(|f| f.id).collect();
    let stderr: Vec<f64> = fits.iter().map(|f| f.stderr).collect();

    let chosen = match opts.choice {
        ScaleChoice::Auto => plateau_index(&scales, &estimates),
        ScaleChoice::Fixed(k) => scales.iter().position(|&s| s == k).ok_or_else(|| {
            Error::invalid(
                MODULE,
                format!("scale k={k} is not admissible (choose from {scales:?})"),
            )
        })?,
    };
    let chosen_k = scales[chosen];
    let chosen_id = estimates[chosen];

    let bootstrap_ids: Vec<f64> = (0..opts.bootstraps)
        .map(|b| bootstrap_estimate(&pts, chosen_k, d_max, opts.seed, b as u64))
        .collect::<Result<_>>()?;
    let (bootstrap_mean, bootstrap_sd) = mean_sd(&bootstrap_ids).unwrap_or((chosen_id, 0.0));

    Ok(ScaleProfile {
        scales,
        estimates,
        stderr,
        chosen_k,
        chosen_id,
        bootstrap_mean,
        bootstrap_sd,
        bootstrap_ids,
        ambient_dim: ambient,
        removed,
    })
}

/// One size-N resample with replacement; repeats are dropped before the
/// neighbour search. Stream `b + 1` of the master seed.
fn bootstrap_estimate(pts: &ActivationMatrix, k: usize, d_max: f64, seed: u64, b: u64) -> Result<f64> {
    let n = pts.n_samples();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(b + 1);
    let mut idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
    idx.sort_unstable();
    idx.dedup();
    if 2 * k >= idx.len() {
        return Err(Error::invalid(
            MODULE,
            format!("bootstrap {b} kept {} unique points, too few for k={k}", idx.len()),
        ));
    }
    let sample = pts.select_rows(&idx)?;
    let dist = rank_distances(&sample, &[k, 2 * k])?;
    Ok(fit_scale(&dist, k, d_max)?.id)
}

fn mean_sd(v: &[f64]) -> Option<(f64, f64)> {
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some((mean, sd))
}

/// I_d / ln(hidden_dim), for comparing models of different widths.
pub fn normalize_id(id: f64, hidden_dim: usize) -> Result<f64> {
    if hidden_dim < 2 {
        return Err(Error::invalid(MODULE, "hidden dimension must be >= 2"));
    }
    Ok(id / (hidden_dim as f64).ln())
}
