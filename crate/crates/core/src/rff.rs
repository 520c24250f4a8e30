//! Random Fourier features approximating a Gaussian (RBF) kernel, used as
//! control feature spaces of chosen extrinsic dimension.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::{DenseMatrix, Timeline};
use crate::signal::IrregularFeatureSeries;

const MODULE: &str = "rff";

pub const DEFAULT_D_IN: usize = 64;
pub const DEFAULT_SIGMA: f64 = 1.0;
pub const SIZE_LADDER: [usize; 5] = [128, 256, 512, 1024, 2048];

#[derive(Debug, Clone, PartialEq)]
pub struct RffMap {
    /// d_out x d_in
    w: DMatrix<f64>,
    b: DVector<f64>,
    sigma: f64,
    seed: u64,
}

impl RffMap {
    /// W ~ N(0, 1/sigma^2) drawn row by row, then b ~ U[0, 2 pi).
    pub fn new(d_in: usize, d_out: usize, sigma: f64, seed: u64) -> Result<Self> {
        if d_in == 0 || d_out == 0 || !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(MODULE, "need d_in >= 1, d_out >= 1 and sigma > 0"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = DMatrix::zeros(d_out, d_in);
        for i in 0..d_out {
            for j in 0..d_in {
                let z: f64 = rng.sample(StandardNormal);
                w[(i, j)] = z / sigma;
            }
        }
        let b = DVector::from_fn(d_out, |_, _| rng.gen_range(0.0..std::f64::consts::TAU));
        Ok(Self { w, b, sigma, seed })
    }

    pub fn d_in(&self) -> usize {
        self.w.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.w.nrows()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn phases(&self) -> &DVector<f64> {
        &self.b
    }

    /// phi(x)_j = sqrt(2 / d_out) cos(W_j . x + b_j)
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d_in() {
            return Err(Error::invalid(
                MODULE,
                format!("input has {} dims, map expects {}", x.len(), self.d_in()),
            ));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(MODULE, "non-finite input"));
        }
        let scale = (2.0 / self.d_out() as f64).sqrt();
        let z = &self.w * DVector::from_column_slice(x) + &self.b;
        Ok(z.iter().map(|v| scale * v.cos()).collect())
    }

    /// Row-wise map of an N x d_in matrix.
    pub fn apply_rows(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if x.cols() != self.d_in() {
            return Err(Error::invalid(
                MODULE,
                format!("input has {} dims, map expects {}", x.cols(), self.d_in()),
            ));
        }
        let scale = (2.0 / self.d_out() as f64).sqrt();
        let mut z = x.to_dmatrix() * self.w.transpose();
        for mut row in z.row_iter_mut() {
            row += self.b.transpose();
        }
        z.apply(|v| *v = scale * v.cos());
        DenseMatrix::from_dmatrix(&z)
    }
}

pub fn rbf_kernel(x: &[f64], y: &[f64], sigma: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-d2 / (2.0 * sigma * sigma)).exp()
}

/// Standard-normal vector determined by (label, seed) alone.
pub fn word_vector(label: &str, d_in: usize, seed: u64) -> Vec<f64> {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    let word_seed = u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"));
    let mut rng = ChaCha8Rng::seed_from_u64(word_seed);
    (0..d_in).map(|_| rng.sample(StandardNormal)).collect()
}

/// One feature row per word: the label's seeded input vector through the
/// map, stamped with the word onset.
pub fn rff_word_features(words: &Timeline, map: &RffMap, d_in: usize, seed: u64) -> Result<IrregularFeatureSeries> {
    if words.is_empty() {
        return Err(Error::invalid(MODULE, "empty timeline"));
    }
    if d_in != map.d_in() {
        return Err(Error::invalid(
            MODULE,
            format!("word vectors of {d_in} dims for a map expecting {}", map.d_in()),
        ));
    }
    let mut inputs = Vec::with_capacity(words.len() * d_in);
    for e in words.events() {
        inputs.extend(word_vector(&e.label, d_in, seed));
    }
    let x = DenseMatrix::new(words.len(), d_in, inputs)?;
    IrregularFeatureSeries::new(words.onsets(), map.apply_rows(&x)?)
}
