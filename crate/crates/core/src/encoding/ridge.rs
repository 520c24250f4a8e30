//! Ridge regression through one eigendecomposition per design, and
//! contiguous-chunk cross-validation of a per-channel penalty.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const MODULE: &str = "encoding";

/// Eigendecomposition of a design's Gram matrix X^T X = V diag(lambda) V^T;
/// solving for any number of penalties reuses it. (nalgebra's SVD mis-factors
/// some exactly rank-deficient designs; the symmetric eigensolver does not.)
#[derive(Debug, Clone)]
pub struct RidgeSpectrum {
    xt: DMatrix<f64>,
    lambda: DVector<f64>,
    v: DMatrix<f64>,
}

impl RidgeSpectrum {
    pub fn new(x: &DMatrix<f64>) -> Result<Self> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(MODULE, "non-finite value in design matrix"));
        }
        let xt = x.transpose();
        let eig = (&xt * x).symmetric_eigen();
        Ok(Self {
            xt,
            lambda: eig.eigenvalues.map(|l| l.max(0.0)),
            v: eig.eigenvectors,
        })
    }

    pub fn singular_values(&self) -> DVector<f64> {
        self.lambda.map(f64::sqrt)
    }

    /// V^T X^T Y, shared by every penalty.
    pub fn project(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        self.v.tr_mul(&(&self.xt * y))
    }

    fn shrink(&self, alpha: f64) -> DVector<f64> {
        self.lambda.map(|l| 1.0 / (l + alpha))
    }

    /// Weights for projected targets at one penalty.
    pub fn weights_from_projection(&self, proj: &DMatrix<f64>, alpha: f64) -> DMatrix<f64> {
        let mut scaled = proj.clone();
        let f = self.shrink(alpha);
        for (mut row, fi) in scaled.row_iter_mut().zip(f.iter()) {
            row *= *fi;
        }
        &self.v * scaled
    }

    pub fn solve(&self, y: &DMatrix<f64>, alpha: f64) -> DMatrix<f64> {
        self.weights_from_projection(&self.project(y), alpha)
    }
}

/// argmin |XW - Y|^2 + alpha |W|^2.
pub fn ridge_solve(x: &DMatrix<f64>, y: &DMatrix<f64>, alpha: f64) -> Result<DMatrix<f64>> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(MODULE, "alpha must be positive"));
    }
    if x.nrows() != y.nrows() {
        return Err(Error::invalid(MODULE, "X and Y row counts differ"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(MODULE, "non-finite value in targets"));
    }
    Ok(RidgeSpectrum::new(x)?.solve(y, alpha))
}

/// `count` values log-spaced over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..count)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
        .collect()
}

/// Default penalty grid: 10 values in [1e1, 1e6].
pub fn default_alphas() -> Vec<f64> {
    log_grid(10.0, 1e6, 10)
}

/// Column-wise Pearson correlation; zero-variance columns score 0.
pub fn column_correlations(pred: &DMatrix<f64>, y: &DMatrix<f64>) -> Vec<f64> {
    pred.column_iter()
        .zip(y.column_iter())
        .map(|(p, t)| {
            let n = p.len() as f64;
            let (mp, mt) = (p.sum() / n, t.sum() / n);
            let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
            for (a, b) in p.iter().zip(t.iter()) {
                let (da, db) = (a - mp, b - mt);
                sxy += da * db;
                sxx += da * da;
                syy += db * db;
            }
            if sxx > 0.0 && syy > 0.0 {
                (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
            } else {
                0.0
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn fit(m: &DMatrix<f64>) -> Self {
        let n = m.nrows() as f64;
        let mut mean = Vec::with_capacity(m.ncols());
        let mut scale = Vec::with_capacity(m.ncols());
        for c in m.column_iter() {
            let mu = c.sum() / n;
            let var = c.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
            mean.push(mu);
            scale.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
        Self { mean, scale }
    }

    fn apply(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = m.clone();
        for (j, mut c) in out.column_iter_mut().enumerate() {
            c.apply(|v| *v = (*v - self.mean[j]) / self.scale[j]);
        }
        out
    }
}

/// A ridge model with per-channel penalties, fit on standardized features
/// and targets.
#[derive(Debug, Clone)]
pub struct RidgeFit {
    /// Standardized-space weights, features x channels.
    pub weights: DMatrix<f64>,
    pub alpha_per_channel: Vec<f64>,
    pub alphas: Vec<f64>,
    /// Mean held-out correlation, alphas x channels.
    pub cv_scores: DMatrix<f64>,
    pub n_chunks: usize,
    x_std: Standardizer,
    y_std: Standardizer,
}

impl RidgeFit {
    pub fn predict(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut pred = self.x_std.apply(x) * &self.weights;
        for (j, mut c) in pred.column_iter_mut().enumerate() {
            c.apply(|v| *v = *v * self.y_std.scale[j] + self.y_std.mean[j]);
        }
        pred
    }

    pub fn cv_scheme(&self) -> String {
        format!("contiguous-{}-chunk", self.n_chunks)
    }
}

/// Chunked cross-validation over `alphas`, then a final fit on all rows with
/// each channel's best penalty. Chunks are consecutive rows.
pub fn ridge_cv(x: &DMatrix<f64>, y: &DMatrix<f64>, alphas: &[f64], n_chunks: usize) -> Result<RidgeFit> {
    let t = x.nrows();
    if alphas.is_empty() || alphas.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
        return Err(Error::invalid(MODULE, "alpha grid must be nonempty and positive"));
    }
    if n_chunks < 2 {
        return Err(Error::invalid(MODULE, "need at least 2 CV chunks"));
    }
    if t < n_chunks {
        return Err(Error::invalid(MODULE, format!("{t} timepoints for {n_chunks} CV chunks")));
    }
    if y.nrows() != t {
        return Err(Error::invalid(MODULE, "X and Y row counts differ"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(MODULE, "non-finite value in targets"));
    }
    let x_std = Standardizer::fit(x);
    let y_std = Standardizer::fit(y);
    let xs = x_std.apply(x);
    let ys = y_std.apply(y);
    let c = y.ncols();

    let mut scores = DMatrix::<f64>::zeros(alphas.len(), c);
    for k in 0..n_chunks {
        let lo = k * t / n_chunks;
        let hi = (k + 1) * t / n_chunks;
        let train: Vec<usize> = (0..lo).chain(hi..t).collect();
        let val: Vec<usize> = (lo..hi).collect();
        let spec = RidgeSpectrum::new(&xs.select_rows(&train))?;
        let proj = spec.project(&ys.select_rows(&train));
        let xv = xs.select_rows(&val) * &spec.v;
        let yv = ys.select_rows(&val);
        for (a, &alpha) in alphas.iter().enumerate() {
            let mut scaled = proj.clone();
            for (mut row, fi) in scaled.row_iter_mut().zip(spec.shrink(alpha).iter()) {
                row *= *fi;
            }
            let pred = &xv * scaled;
            for (j, r) in column_correlations(&pred, &yv).into_iter().enumerate() {
                scores[(a, j)] += r / n_chunks as f64;
            }
        }
    }

    // ties resolve to the smaller penalty
    let best: Vec<usize> = (0..c)
        .map(|j| {
            let col = scores.column(j);
            let mut b = 0;
            for a in 1..alphas.len() {
                if col[a] > col[b] {
                    b = a;
                }
            }
            b
        })
        .collect();

    let spec = RidgeSpectrum::new(&xs)?;
    let proj = spec.project(&ys);
    let mut weights = DMatrix::<f64>::zeros(x.ncols(), c);
    for (a, &alpha) in alphas.iter().enumerate() {
        let cols: Vec<usize> = (0..c).filter(|&j| best[j] == a).collect();
        if cols.is_empty() {
            continue;
        }
        let w = spec.weights_from_projection(&proj.select_columns(&cols), alpha);
        for (i, &j) in cols.iter().enumerate() {
            weights.set_column(j, &w.column(i));
        }
    }
    Ok(RidgeFit {
        weights,
        alpha_per_channel: best.iter().map(|&b| alphas[b]).collect(),
        alphas: alphas.to_vec(),
        cv_scores: scores,
        n_chunks,
        x_std,
        y_std,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gauss(r: usize, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
    }

    #[test]
    fn matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (t, d, c, alpha) in [(50, 8, 3, 0.7), (30, 40, 2, 5.0), (200, 20, 4, 123.0)] {
            let x = gauss(t, d, &mut rng);
            let y = gauss(t, c, &mut rng);
            let w = ridge_solve(&x, &y, alpha).unwrap();
            let a = x.tr_mul(&x) + DMatrix::identity(d, d) * alpha;
            let oracle = a.lu().solve(&x.tr_mul(&y)).unwrap();
            assert!((w - oracle).amax() < 1e-8);
        }
    }

    #[test]
    fn rank_deficient_design() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let mut x = gauss(50, 5, &mut rng);
            let dup = x.column(0).clone_owned();
            x.set_column(4, &dup);
            let y = gauss(50, 2, &mut rng);
            let w = ridge_solve(&x, &y, 0.3).unwrap();
            let a = x.tr_mul(&x) + DMatrix::identity(5, 5) * 0.3;
            let oracle = a.lu().solve(&x.tr_mul(&y)).unwrap();
            assert!((w - oracle).amax() < 1e-8);
        }
    }

    #[test]
    fn noiseless_and_penalty_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = gauss(100, 6, &mut rng);
        let w0 = gauss(6, 2, &mut rng);
        let y = &x * &w0;
        let l1 = RidgeSpectrum::new(&x).unwrap().singular_values().max().powi(2);
        let w = ridge_solve(&x, &y, 1e-10 * l1).unwrap();
        assert!((&w - &w0).amax() / w0.amax() < 1e-6);
        let w = ridge_solve(&x, &y, 1e12).unwrap();
        assert!(w.amax() < 1e-6);
        assert!(ridge_solve(&x, &y, 0.0).is_err());
        let mut bad = x.clone();
        bad[(0, 0)] = f64::NAN;
        assert!(ridge_solve(&bad, &y, 1.0).is_err());
    }

    #[test]
    fn continuous_in_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = gauss(80, 10, &mut rng);
        let y = gauss(80, 3, &mut rng);
        let spec = RidgeSpectrum::new(&x).unwrap();
        for alpha in [0.1, 10.0, 1e4] {
            let d = spec.solve(&y, alpha) - spec.solve(&y, alpha * (1.0 + 1e-9));
            assert!(d.amax() < 1e-6);
        }
    }

    #[test]
    fn cv_noiseless_picks_smallest_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = gauss(500, 10, &mut rng);
        let y = &x * gauss(10, 4, &mut rng);
        let alphas = default_alphas();
        let fit = ridge_cv(&x, &y, &alphas, 5).unwrap();
        assert!(fit.alpha_per_channel.iter().all(|&a| a == alphas[0]));
        let r = column_correlations(&fit.predict(&x), &y);
        assert!(r.iter().all(|&v| v > 0.999 && v <= 1.0));
        assert!(ridge_cv(&x.rows(0, 3).into(), &y.rows(0, 3).into(), &alphas, 5).is_err());
    }

    #[test]
    fn channels_decouple() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = gauss(300, 12, &mut rng);
        let y = &x * gauss(12, 3, &mut rng) + gauss(300, 3, &mut rng) * 3.0;
        let alphas = default_alphas();
        let joint = ridge_cv(&x, &y, &alphas, 5).unwrap();
        for j in 0..3 {
            let single = ridge_cv(&x, &y.columns(j, 1).into(), &alphas, 5).unwrap();
            assert_eq!(single.alpha_per_channel[0], joint.alpha_per_channel[j]);
            assert!((single.weights.column(0) - joint.weights.column(j)).amax() < 1e-12);
        }
    }

    #[test]
    fn grid() {
        let g = default_alphas();
        assert_eq!(g.len(), 10);
        assert!((g[0] - 10.0).abs() < 1e-9 && (g[9] - 1e6).abs() < 1e-6);
    }
}
