//! Linear probes: softmax classification trained with Adam, and ridge
//! regression scored by held-out R^2.

use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adam::Adam;
use crate::encoding::{ridge_cv, DEFAULT_CHUNKS};
use crate::error::{Error, Result};

const MODULE: &str = "probes";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Accuracy,
    RSquared,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Accuracy => "accuracy",
            Metric::RSquared => "r_squared",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub task: String,
    pub metric: Metric,
    pub value: f64,
    pub best_epoch: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOptions {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            lr: 5e-3,
            epochs: 15,
            batch_size: 128,
            seed: 0,
        }
    }
}

/// Labelled split for a classification probe.
#[derive(Debug, Clone, Copy)]
pub struct LabelledSet<'a> {
    pub x: &'a DMatrix<f64>,
    pub y: &'a [usize],
}

impl LabelledSet<'_> {
    fn check(&self, dim: usize, classes: usize, name: &str) -> Result<()> {
        if self.x.nrows() != self.y.len() {
            return Err(Error::invalid(
                MODULE,
                format!("{name}: {} rows but {} labels", self.x.nrows(), self.y.len()),
            ));
        }
        if self.x.nrows() == 0 {
            return Err(Error::invalid(MODULE, format!("{name}: empty split")));
        }
        if self.x.ncols() != dim {
            return Err(Error::invalid(MODULE, format!("{name}: feature width differs from training")));
        }
        if let Some(bad) = self.y.iter().find(|&&c| c >= classes) {
            return Err(Error::invalid(MODULE, format!("{name}: label {bad} >= {classes} classes")));
        }
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(MODULE, format!("{name}: non-finite feature")));
        }
        Ok(())
    }
}

/// Sorted distinct labels and each input's class index.
pub fn encode_labels<S: AsRef<str>>(labels: &[S]) -> (Vec<usize>, Vec<String>) {
    let mut classes: Vec<String> = labels.iter().map(|s| s.as_ref().to_string()).collect();
    classes.sort();
    classes.dedup();
    let idx = labels
        .iter()
        .map(|s| classes.binary_search_by(|c| c.as_str().cmp(s.as_ref())).expect("label present"))
        .collect();
    (idx, classes)
}

struct Softmax {
    w: DMatrix<f64>,
    b: Vec<f64>,
}

impl Softmax {
    fn from_params(p: &[f64], classes: usize, dim: usize) -> Self {
        Self {
            w: DMatrix::from_column_slice(classes, dim, &p[..classes * dim]),
            b: p[classes * dim..].to_vec(),
        }
    }

    fn logits(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = x * self.w.transpose();
        for mut row in z.row_iter_mut() {
            for (v, b) in row.iter_mut().zip(&self.b) {
                *v += b;
            }
        }
        z
    }

    fn accuracy(&self, set: &LabelledSet) -> f64 {
        let z = self.logits(set.x);
        let hits = z
            .row_iter()
            .zip(set.y)
            .filter(|(row, &y)| {
                // first maximum wins ties
                let mut best = 0;
                for c in 1..row.len() {
                    if row[c] > row[best] {
                        best = c;
                    }
                }
                best == y
            })
            .count();
        hits as f64 / set.y.len() as f64
    }
}

/// Per-feature z-scoring with training statistics.
fn standardize(train: &DMatrix<f64>, others: &[&DMatrix<f64>]) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
    let n = train.nrows() as f64;
    let stats: Vec<(f64, f64)> = train
        .column_iter()
        .map(|c| {
            let mu = c.sum() / n;
            let var = c.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
            (mu, if var > 0.0 { var.sqrt() } else { 1.0 })
        })
        .collect();
    let apply = |m: &DMatrix<f64>| {
        let mut out = m.clone();
        for (j, mut c) in out.column_iter_mut().enumerate() {
            let (mu, sd) = stats[j];
            c.apply(|v| *v = (*v - mu) / sd);
        }
        out
    };
    (apply(train), others.iter().map(|m| apply(m)).collect())
}

/// Softmax-regression probe from zero initialisation; the epoch with the best
/// validation accuracy (earliest on ties) is scored on the test split.
pub fn train_classifier_probe(
    task: &str,
    train: LabelledSet,
    val: LabelledSet,
    test: LabelledSet,
    classes: usize,
    opts: &ProbeOptions,
) -> Result<ProbeResult> {
    if opts.epochs == 0 || opts.batch_size == 0 || !(opts.lr >= 0.0 && opts.lr.is_finite()) {
        return Err(Error::invalid(MODULE, "need lr >= 0, epochs >= 1 and batch size >= 1"));
    }
    if classes < 2 {
        return Err(Error::invalid(MODULE, "need at least 2 classes"));
    }
    let dim = train.x.ncols();
    train.check(dim, classes, "train")?;
    val.check(dim, classes, "validation")?;
    test.check(dim, classes, "test")?;
    if train.y.iter().all(|&c| c == train.y[0]) {
        return Err(Error::degenerate(MODULE, "training labels contain a single class"));
    }
    let (xt, rest) = standardize(train.x, &[val.x, test.x]);
    let (xv, xs) = (&rest[0], &rest[1]);
    let train_s = LabelledSet { x: &xt, y: train.y };
    let val_s = LabelledSet { x: xv, y: val.y };
    let test_s = LabelledSet { x: xs, y: test.y };

    let n_params = classes * dim + classes;
    let mut params = vec![0.0; n_params];
    let mut grad = vec![0.0; n_params];
    let mut opt = Adam::new(n_params, opts.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..xt.nrows()).collect();
    let mut best = (0usize, Softmax::from_params(&params, classes, dim).accuracy(&val_s), params.clone());
    for epoch in 1..=opts.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(opts.batch_size) {
            let xb = xt.select_rows(batch);
            let mut g = Softmax::from_params(&params, classes, dim).logits(&xb);
            for (mut row, &i) in g.row_iter_mut().zip(batch) {
                let m = row.max();
                row.apply(|v| *v = (*v - m).exp());
                let s = row.sum();
                row /= s;
                row[train.y[i]] -= 1.0;
            }
            let scale = 1.0 / batch.len() as f64;
            let gw = g.tr_mul(&xb) * scale;
            grad[..classes * dim].copy_from_slice(gw.as_slice());
            for (c, gb) in grad[classes * dim..].iter_mut().enumerate() {
                *gb = g.column(c).sum() * scale;
            }
            if grad.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged { module: MODULE, epoch });
            }
            opt.step(&mut params, &grad);
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { module: MODULE, epoch });
        }
        let acc = Softmax::from_params(&params, classes, dim).accuracy(&val_s);
        log::debug!("probe {task} epoch {epoch}: validation accuracy {acc:.4}");
        if acc > best.1 {
            best = (epoch, acc, params.clone());
        }
    }
    let model = Softmax::from_params(&best.2, classes, dim);
    Ok(ProbeResult {
        task: task.to_string(),
        metric: Metric::Accuracy,
        value: model.accuracy(&test_s),
        best_epoch: best.0,
        n_train: train_s.y.len(),
        n_val: val_s.y.len(),
        n_test: test_s.y.len(),
    })
}

/// 1 - SSE/SST per column, around the column mean of `y`. Columns without
/// variance are skipped.
pub fn r_squared(pred: &DMatrix<f64>, y: &DMatrix<f64>) -> Vec<f64> {
    let n = y.nrows() as f64;
    (0..y.ncols())
        .filter_map(|j| {
            let col = y.column(j);
            let mean = col.sum() / n;
            let sst: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
            let sse: f64 = col.iter().zip(pred.column(j).iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            (sst > 0.0).then(|| 1.0 - sse / sst)
        })
        .collect()
}

/// Ridge probe with cross-validated penalty; reports mean test R^2 over
/// target dimensions.
pub fn train_regression_probe(
    task: &str,
    x_train: &DMatrix<f64>,
    y_train: &DMatrix<f64>,
    x_test: &DMatrix<f64>,
    y_test: &DMatrix<f64>,
    alphas: &[f64],
) -> Result<ProbeResult> {
    if x_test.ncols() != x_train.ncols() || y_test.ncols() != y_train.ncols() {
        return Err(Error::invalid(MODULE, "test widths differ from training"));
    }
    if x_test.nrows() != y_test.nrows() || x_test.nrows() < 2 {
        return Err(Error::invalid(MODULE, "test features and targets must have matching rows (>= 2)"));
    }
    let fit = ridge_cv(x_train, y_train, alphas, DEFAULT_CHUNKS)?;
    let scores = r_squared(&fit.predict(x_test), y_test);
    if scores.is_empty() {
        return Err(Error::degenerate(MODULE, "every test target is constant"));
    }
    Ok(ProbeResult {
        task: task.to_string(),
        metric: Metric::RSquared,
        value: scores.iter().sum::<f64>() / scores.len() as f64,
        best_epoch: 0,
        n_train: x_train.nrows(),
        n_val: 0,
        n_test: x_test.nrows(),
    })
}

pub fn write_probe_csv(rows: &[(u32, ProbeResult)], path: &Path) -> Result<()> {
    let err = |e: csv::Error| Error::Table(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["layer", "task", "metric", "value"]).map_err(err)?;
    for (layer, r) in rows {
        w.write_record([layer.to_string(), r.task.clone(), r.metric.to_string(), r.value.to_string()])
            .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::default_alphas;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn blobs(n: usize, dim: usize, sep: f64, seed: u64) -> (DMatrix<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let x = DMatrix::from_fn(n, dim, |i, j| {
            let z: f64 = rng.sample(StandardNormal);
            if j == 0 {
                z + if y[i] == 1 { sep } else { -sep }
            } else {
                z
            }
        });
        (x, y)
    }

    fn run(x: &[DMatrix<f64>; 3], y: &[Vec<usize>; 3], classes: usize, seed: u64) -> ProbeResult {
        train_classifier_probe(
            "t",
            LabelledSet { x: &x[0], y: &y[0] },
            LabelledSet { x: &x[1], y: &y[1] },
            LabelledSet { x: &x[2], y: &y[2] },
            classes,
            &ProbeOptions { seed, ..Default::default() },
        )
        .unwrap()
    }

    #[test]
    fn separable_blobs() {
        let (a, ya) = blobs(1000, 10, 5.0, 1);
        let (b, yb) = blobs(200, 10, 5.0, 2);
        let (c, yc) = blobs(400, 10, 5.0, 3);
        let r = run(&[a, b, c], &[ya, yb, yc], 2, 0);
        assert!(r.value > 0.99, "{}", r.value);
        assert_eq!(r.metric, Metric::Accuracy);
        assert!(r.best_epoch >= 1);
    }

    #[test]
    fn shuffled_labels_are_chance() {
        let classes = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut draw = |n: usize| -> (DMatrix<f64>, Vec<usize>) {
            let x = DMatrix::from_fn(n, 8, |_, _| rng.sample(StandardNormal));
            let y = (0..n).map(|_| rng.gen_range(0..classes)).collect();
            (x, y)
        };
        let (a, ya) = draw(2000);
        let (b, yb) = draw(500);
        let (c, yc) = draw(2000);
        let r = run(&[a, b, c], &[ya, yb, yc], classes, 0);
        assert!((r.value - 0.25).abs() < 0.05, "{}", r.value);
    }

    #[test]
    fn affine_invariance() {
        let (a, ya) = blobs(1000, 4, 1.0, 7);
        let (b, yb) = blobs(300, 4, 1.0, 8);
        let (c, yc) = blobs(1000, 4, 1.0, 9);
        let base = run(&[a.clone(), b.clone(), c.clone()], &[ya.clone(), yb.clone(), yc.clone()], 2, 0);
        let m = DMatrix::from_row_slice(4, 4, &[2.0, 0.5, 0.0, 0.0, 0.0, 1.0, 0.3, 0.0, 0.1, 0.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.5]);
        let t = |x: &DMatrix<f64>| x * &m;
        let moved = run(&[t(&a), t(&b), t(&c)], &[ya, yb, yc], 2, 0);
        assert!((base.value - moved.value).abs() <= 0.02, "{} vs {}", base.value, moved.value);
    }

    #[test]
    fn single_class_rejected() {
        let x = DMatrix::from_element(10, 2, 1.0);
        let y = vec![0; 10];
        let s = LabelledSet { x: &x, y: &y };
        let r = train_classifier_probe("t", s, s, s, 2, &ProbeOptions::default());
        assert!(matches!(r, Err(Error::Degenerate { .. })));
        let bad = vec![3; 10];
        let s2 = LabelledSet { x: &x, y: &bad };
        assert!(train_classifier_probe("t", s2, s2, s2, 2, &ProbeOptions::default()).is_err());
    }

    #[test]
    fn regression_realizable_and_null() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut g = |r: usize, c: usize| DMatrix::<f64>::from_fn(r, c, |_, _| rng.sample(StandardNormal));
        let (xa, xb) = (g(600, 10), g(300, 10));
        let w = g(10, 3);
        let r = train_regression_probe("t", &xa, &(&xa * &w), &xb, &(&xb * &w), &default_alphas()).unwrap();
        assert!(r.value > 0.99, "{}", r.value);
        let r = train_regression_probe("t", &xa, &g(600, 3), &xb, &g(300, 3), &default_alphas()).unwrap();
        assert!(r.value <= 0.05, "{}", r.value);
    }

    #[test]
    fn r_squared_by_hand() {
        let y = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let p = DMatrix::from_column_slice(4, 1, &[1.5, 2.0, 2.5, 4.0]);
        // SST = 5, SSE = 0.5
        assert!((r_squared(&p, &y)[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn label_encoding() {
        let (idx, classes) = encode_labels(&["b", "a", "b", "c"]);
        assert_eq!(classes, ["a", "b", "c"]);
        assert_eq!(idx, [1, 0, 1, 2]);
    }
}
