//! Affine lens from an intermediate layer to the final hidden state, read
//! out through the model's unembedding as next-token surprisal.
//!
//! The lens acts on column vectors: `h_L ~ A h_t + b`.

use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::adam::Adam;
use crate::error::{Error, Result};
use crate::io::{read_labels, read_matrix, write_matrix, DenseMatrix, Manifest};

const MODULE: &str = "lens";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMethod {
    Direct,
    Gradient,
}

impl fmt::Display for FitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitMethod::Direct => "direct",
            FitMethod::Gradient => "gradient",
        })
    }
}

impl std::str::FromStr for FitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(FitMethod::Direct),
            "gradient" => Ok(FitMethod::Gradient),
            _ => Err(Error::invalid(MODULE, format!("unknown fit method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineLens {
    pub layer: u32,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub fit_method: FitMethod,
}

impl AffineLens {
    pub fn new(layer: u32, a: DMatrix<f64>, b: DVector<f64>, fit_method: FitMethod) -> Result<Self> {
        if !a.is_square() || a.nrows() != b.len() {
            return Err(Error::invalid(MODULE, "lens needs square A matching the length of b"));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid(MODULE, "non-finite lens parameter"));
        }
        Ok(Self { layer, a, b, fit_method })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            layer: 0,
            a: DMatrix::identity(dim, dim),
            b: DVector::zeros(dim),
            fit_method: FitMethod::Direct,
        }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn apply(&self, h: &[f64]) -> DVector<f64> {
        &self.a * DVector::from_column_slice(h) + &self.b
    }

    /// Predictions for every row of `h` (N x d).
    pub fn predict(&self, h: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = h * self.a.transpose();
        for mut row in out.row_iter_mut() {
            row += self.b.transpose();
        }
        out
    }

    /// Mean squared error per coordinate against targets `h_l`.
    pub fn residual(&self, h_t: &DMatrix<f64>, h_l: &DMatrix<f64>) -> f64 {
        let r = self.predict(h_t) - h_l;
        r.norm_squared() / (r.len() as f64)
    }

    /// Companion path holding b.
    pub fn bias_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".b");
        PathBuf::from(s)
    }

    /// A at `path`, b as a 1 x d matrix at `<path>.b`, each with a manifest.
    pub fn write(&self, path: &Path, base: &Manifest) -> Result<()> {
        let mut manifest = base.clone();
        manifest.layer = self.layer;
        let manifest = manifest.with_extra("fit_method", self.fit_method);
        write_matrix(&DenseMatrix::from_dmatrix(&self.a)?, &manifest, path)?;
        let b = DenseMatrix::new(1, self.dim(), self.b.iter().copied().collect())?;
        write_matrix(&b, &manifest, &Self::bias_path(path))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let (a, manifest) = read_matrix(path)?;
        let (b, _) = read_matrix(&Self::bias_path(path))?;
        if b.rows() != 1 || b.cols() != a.rows() {
            return Err(Error::invalid(MODULE, "lens bias must be 1 x d"));
        }
        let manifest = manifest.unwrap_or_default();
        let method = match manifest.extra.get("fit_method") {
            Some(m) => m.parse()?,
            None => FitMethod::Direct,
        };
        Self::new(
            manifest.layer,
            a.to_dmatrix(),
            DVector::from_column_slice(b.values()),
            method,
        )
    }
}

fn check_pair(h_t: &DMatrix<f64>, h_l: &DMatrix<f64>) -> Result<()> {
    if h_t.shape() != h_l.shape() {
        return Err(Error::invalid(
            MODULE,
            format!("layer states {:?} and final states {:?} differ in shape", h_t.shape(), h_l.shape()),
        ));
    }
    if h_t.iter().chain(h_l.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid(MODULE, "non-finite hidden state"));
    }
    Ok(())
}

/// Least-squares lens from the eigendecomposition of `X^T X`, `X = [H_t, 1]`.
/// Directions with negligible eigenvalue are dropped, which gives the
/// minimum-norm solution.
pub fn fit_lens_direct(h_t: &DMatrix<f64>, h_l: &DMatrix<f64>) -> Result<AffineLens> {
    check_pair(h_t, h_l)?;
    let (n, d) = h_t.shape();
    if n <= d {
        return Err(Error::invalid(MODULE, format!("{n} samples for hidden size {d}: need N > d")));
    }
    let x = h_t.clone().insert_column(d, 1.0);
    let eig = x.tr_mul(&x).symmetric_eigen();
    let tol = eig.eigenvalues.max() * (n.max(d + 1) as f64) * f64::EPSILON;
    let rank = eig.eigenvalues.iter().filter(|&&l| l > tol).count();
    if rank < d + 1 {
        log::warn!("lens design has rank {rank} < {}; using the minimum-norm solution", d + 1);
    }
    let inv = eig.eigenvalues.map(|l| if l > tol { 1.0 / l } else { 0.0 });
    let mut proj = eig.eigenvectors.tr_mul(&x.tr_mul(h_l));
    for (mut row, f) in proj.row_iter_mut().zip(inv.iter()) {
        row *= *f;
    }
    let theta = &eig.eigenvectors * proj;
    let a = theta.rows(0, d).transpose();
    let b = theta.row(d).transpose();
    AffineLens::new(0, a, b, FitMethod::Direct)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientOptions {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub val_frac: f64,
    pub seed: u64,
}

impl Default for GradientOptions {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            epochs: 10,
            batch_size: 256,
            val_frac: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradientFit {
    pub lens: AffineLens,
    /// Validation loss after each epoch; entry 0 is the initial lens.
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
}

/// Seeded shuffled split into (train, validation) row indices.
pub(crate) fn split_rows(n: usize, val_frac: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let n_val = ((n as f64 * val_frac).round() as usize).clamp(1, n - 1);
    let val = idx[..n_val].to_vec();
    let train = idx[n_val..].to_vec();
    (train, val)
}

/// Minibatch Adam on the mean squared error, starting from the identity map.
/// Keeps the parameters of the epoch with the lowest validation loss.
pub fn fit_lens_gradient(h_t: &DMatrix<f64>, h_l: &DMatrix<f64>, opts: &GradientOptions) -> Result<GradientFit> {
    check_pair(h_t, h_l)?;
    if !(opts.lr >= 0.0 && opts.lr.is_finite()) || opts.epochs == 0 || opts.batch_size == 0 {
        return Err(Error::invalid(MODULE, "need lr >= 0, epochs >= 1 and batch size >= 1"));
    }
    if !(opts.val_frac > 0.0 && opts.val_frac < 1.0) {
        return Err(Error::invalid(MODULE, "validation fraction must lie in (0, 1)"));
    }
    let (n, d) = h_t.shape();
    if n < 2 {
        return Err(Error::invalid(MODULE, "need at least 2 samples"));
    }
    let mut split_rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(opts.seed);
    shuffle_rng.set_stream(1);
    let (mut train, val) = split_rows(n, opts.val_frac, &mut split_rng);
    let hv = h_t.select_rows(&val);
    let yv = h_l.select_rows(&val);

    // column-major A followed by b
    let mut params: Vec<f64> = DMatrix::<f64>::identity(d, d).iter().copied().collect();
    params.extend(std::iter::repeat(0.0).take(d));
    let unpack = |p: &[f64]| {
        (
            DMatrix::from_column_slice(d, d, &p[..d * d]),
            DVector::from_column_slice(&p[d * d..]),
        )
    };
    let val_loss = |p: &[f64]| {
        let (a, b) = unpack(p);
        AffineLens { layer: 0, a, b, fit_method: FitMethod::Gradient }.residual(&hv, &yv)
    };

    let mut opt = Adam::new(params.len(), opts.lr);
    let mut history = vec![val_loss(&params)];
    let mut best = (0usize, history[0], params.clone());
    let mut grad = vec![0.0; params.len()];
    for epoch in 1..=opts.epochs {
        train.shuffle(&mut shuffle_rng);
        for batch in train.chunks(opts.batch_size) {
            let hb = h_t.select_rows(batch);
            let yb = h_l.select_rows(batch);
            let (a, b) = unpack(&params);
            let mut r = &hb * a.transpose() - yb;
            for mut row in r.row_iter_mut() {
                row += b.transpose();
            }
            let scale = 2.0 / (batch.len() * d) as f64;
            let ga = r.tr_mul(&hb) * scale;
            grad[..d * d].copy_from_slice(ga.as_slice());
            for (j, g) in grad[d * d..].iter_mut().enumerate() {
                *g = r.column(j).sum() * scale;
            }
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { module: MODULE, epoch });
            }
            opt.step(&mut params, &grad);
        }
        let loss = val_loss(&params);
        if !loss.is_finite() {
            return Err(Error::Diverged { module: MODULE, epoch });
        }
        log::debug!("lens epoch {epoch}: validation loss {loss:.6e}");
        history.push(loss);
        if loss < best.1 {
            best = (epoch, loss, params.clone());
        }
    }
    let (a, b) = unpack(&best.2);
    Ok(GradientFit {
        lens: AffineLens::new(0, a, b, FitMethod::Gradient)?,
        val_loss: history,
        best_epoch: best.0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Unembedding {
    u: DMatrix<f64>,
    bias: Option<DVector<f64>>,
}

impl Unembedding {
    pub fn new(u: DMatrix<f64>, bias: Option<DVector<f64>>) -> Result<Self> {
        if u.nrows() < 2 {
            return Err(Error::invalid(MODULE, "vocabulary must have at least 2 entries"));
        }
        if let Some(b) = &bias {
            if b.len() != u.nrows() {
                return Err(Error::invalid(MODULE, "unembedding bias length differs from vocabulary size"));
            }
        }
        Ok(Self { u, bias })
    }

    /// V x d matrix from a LAM1 file, optional 1 x V bias from another.
    pub fn read(path: &Path, bias: Option<&Path>) -> Result<Self> {
        let (u, _) = read_matrix(path)?;
        let bias = match bias {
            Some(p) => Some(DVector::from_column_slice(read_matrix(p)?.0.values())),
            None => None,
        };
        Self::new(u.to_dmatrix(), bias)
    }

    pub fn vocab_size(&self) -> usize {
        self.u.nrows()
    }

    pub fn dim(&self) -> usize {
        self.u.ncols()
    }

    pub fn logits(&self, h: &DVector<f64>) -> DVector<f64> {
        let mut z = &self.u * h;
        if let Some(b) = &self.bias {
            z += b;
        }
        z
    }
}

/// -log softmax(logits)[target], with the maximum subtracted first.
pub fn log_softmax_loss(logits: &[f64], target: usize) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|z| (z - m).exp()).sum();
    sum.ln() - (logits[target] - m)
}

pub fn surprisal(lens: &AffineLens, u: &Unembedding, h_t: &[f64], target: usize) -> Result<f64> {
    if target >= u.vocab_size() {
        return Err(Error::invalid(
            MODULE,
            format!("target token {target} outside vocabulary of {}", u.vocab_size()),
        ));
    }
    if h_t.len() != lens.dim() || u.dim() != lens.dim() {
        return Err(Error::invalid(MODULE, "hidden size mismatch between lens, states and unembedding"));
    }
    let z = u.logits(&lens.apply(h_t));
    Ok(log_softmax_loss(z.as_slice(), target))
}

/// Mean surprisal over the rows of `h_t` (N x d) and their targets.
pub fn mean_surprisal(lens: &AffineLens, u: &Unembedding, h_t: &DenseMatrix, targets: &[usize]) -> Result<f64> {
    if h_t.rows() != targets.len() {
        return Err(Error::invalid(
            MODULE,
            format!("{} states but {} targets", h_t.rows(), targets.len()),
        ));
    }
    if targets.is_empty() {
        return Err(Error::invalid(MODULE, "no samples"));
    }
    let each: Vec<f64> = (0..h_t.rows())
        .into_par_iter()
        .map(|i| surprisal(lens, u, h_t.row(i), targets[i]))
        .collect::<Result<_>>()?;
    Ok(each.iter().sum::<f64>() / each.len() as f64)
}

pub fn normalize_surprisal(s: f64, vocab: usize) -> Result<f64> {
    if vocab < 2 {
        return Err(Error::invalid(MODULE, "vocabulary must have at least 2 entries"));
    }
    Ok(s / (vocab as f64).ln())
}

/// Token ids from an `index<TAB>label` file.
pub fn read_targets(path: &Path) -> Result<Vec<usize>> {
    read_labels(path)?
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::Table(format!("{}: row {i}: token id {s:?} is not an integer", path.display())))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurprisalRow {
    pub layer: u32,
    pub mean_surprisal: f64,
    pub normalized: f64,
}

pub fn write_surprisal_csv(rows: &[SurprisalRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Table(format!("{}: {e}", path.display())))?;
    let err = |e: csv::Error| Error::Table(format!("{}: {e}", path.display()));
    w.write_record(["layer", "mean_surprisal", "normalized"]).map_err(err)?;
    for r in rows {
        w.write_record([r.layer.to_string(), r.mean_surprisal.to_string(), r.normalized.to_string()])
            .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
