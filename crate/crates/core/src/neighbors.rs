//! Exact Euclidean k-nearest-neighbour distances.
//!
//! Distances are computed block-wise through the expanded form
//! `|x|^2 + |y|^2 - 2 x.y` (one matrix product per block of queries), clamped
//! at zero. The neighbours that end up selected are then re-measured by direct
//! differences so reported distances carry no cancellation error.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::ActivationMatrix;

const BLOCK: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborTable {
    n_samples: usize,
    k_max: usize,
    distances: Vec<f64>,
    indices: Vec<usize>,
}

impl NeighborTable {
    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// Sorted distances r_{i,1..=k_max}.
    pub fn distances(&self, i: usize) -> &[f64] {
        &self.distances[i * self.k_max..(i + 1) * self.k_max]
    }

    pub fn indices(&self, i: usize) -> &[usize] {
        &self.indices[i * self.k_max..(i + 1) * self.k_max]
    }

    /// r_{i,j} with 1-based neighbour rank `j`.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.distances[i * self.k_max + j - 1]
    }
}

/// Distances at a fixed set of neighbour ranks only; what the scale analysis
/// needs without materialising an N x 2^13 table.
#[derive(Debug, Clone, PartialEq)]
pub struct RankDistances {
    ranks: Vec<usize>,
    n_samples: usize,
    values: Vec<f64>,
}

impl RankDistances {
    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// r_{i,rank} for every point i. Panics if `rank` was not requested.
    pub fn at_rank(&self, rank: usize) -> Vec<f64> {
        let c = self
            .ranks
            .iter()
            .position(|&r| r == rank)
            .unwrap_or_else(|| panic!("rank {rank} was not computed"));
        let w = self.ranks.len();
        (0..self.n_samples).map(|i| self.values[i * w + c]).collect()
    }
}

#[derive(Clone, Copy)]
struct Cand {
    d2: f64,
    idx: usize,
}

fn cand_cmp(a: &Cand, b: &Cand) -> Ordering {
    a.d2.total_cmp(&b.d2).then(a.idx.cmp(&b.idx))
}

fn exact_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Calls `f(query, candidates)` for every point, in parallel over blocks of
/// queries; results come back in query order.
fn for_each_row<T, F>(points: &ActivationMatrix, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut Vec<Cand>) -> T + Sync,
{
    let n = points.n_samples();
    let p: DMatrix<f64> = points.data().to_dmatrix();
    let pt = p.transpose();
    let norms: Vec<f64> = (0..n).map(|i| points.row(i).iter().map(|v| v * v).sum()).collect();
    let starts: Vec<usize> = (0..n).step_by(BLOCK).collect();
    starts
        .par_iter()
        .flat_map_iter(|&start| {
            let b = BLOCK.min(n - start);
            // N x b; column j holds dot products of every point with query start+j
            let gram = &p * pt.columns(start, b);
            let mut cands = Vec::with_capacity(n);
            (0..b)
                .map(|j| {
                    let q = start + j;
                    let col = gram.column(j);
                    cands.clear();
                    cands.extend((0..n).filter(|&m| m != q).map(|m| Cand {
                        d2: (norms[q] + norms[m] - 2.0 * col[m]).max(0.0),
                        idx: m,
                    }));
                    f(q, &mut cands)
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Exact kNN table; ties broken by smaller index.
pub fn knn(points: &ActivationMatrix, k_max: usize) -> Result<NeighborTable> {
    let n = points.n_samples();
    if k_max == 0 || k_max > n - 1 {
        return Err(Error::invalid(
            "neighbors",
            format!("k_max = {k_max} out of range 1..={}", n - 1),
        ));
    }
    let rows = for_each_row(points, |q, cands| {
        cands.select_nth_unstable_by(k_max - 1, cand_cmp);
        let mut top: Vec<(f64, usize)> = cands[..k_max]
            .iter()
            .map(|c| (exact_dist(points.row(q), points.row(c.idx)), c.idx))
            .collect();
        top.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        top
    });
    let mut distances = Vec::with_capacity(n * k_max);
    let mut indices = Vec::with_capacity(n * k_max);
    for (i, row) in rows.into_iter().enumerate() {
        if row[0].0 <= 0.0 {
            return Err(Error::degenerate(
                "neighbors",
                format!("point {i} coincides with point {}; deduplicate first", row[0].1),
            ));
        }
        for (d, j) in row {
            distances.push(d);
            indices.push(j);
        }
    }
    Ok(NeighborTable {
        n_samples: n,
        k_max,
        distances,
        indices,
    })
}

/// Distances to the neighbours of the given 1-based ranks, for every point.
pub fn rank_distances(points: &ActivationMatrix, ranks: &[usize]) -> Result<RankDistances> {
    let n = points.n_samples();
    let mut ranks = ranks.to_vec();
    ranks.sort_unstable();
    ranks.dedup();
    match (ranks.first(), ranks.last()) {
        (Some(&lo), Some(&hi)) if lo >= 1 && hi <= n - 1 => {}
        _ => {
            return Err(Error::invalid(
                "neighbors",
                format!("ranks must lie in 1..={}", n - 1),
            ))
        }
    }
    let w = ranks.len();
    let rows = for_each_row(points, |q, cands| {
        let mut out = vec![0.0; w];
        let mut hi = cands.len();
        // Select from the largest rank down; each selection partitions the
        // prefix that the next, smaller rank searches.
        for (c, &r) in ranks.iter().enumerate().rev() {
            let slice = &mut cands[..hi];
            slice.select_nth_unstable_by(r - 1, cand_cmp);
            out[c] = exact_dist(points.row(q), points.row(slice[r - 1].idx));
            hi = r - 1;
        }
        out
    });
    let mut values = Vec::with_capacity(n * w);
    for (i, row) in rows.into_iter().enumerate() {
        if row[0] <= 0.0 {
            return Err(Error::degenerate(
                "neighbors",
                format!("point {i} has a zero-distance neighbour; deduplicate first"),
            ));
        }
        values.extend(row);
    }
    Ok(RankDistances {
        ranks,
        n_samples: n,
        values,
    })
}

/// Keeps one representative (the first occurrence) per group of points
/// within Euclidean distance `tol`; returns the kept points and how many were
/// dropped.
pub fn dedup(points: &ActivationMatrix, tol: f64) -> Result<(ActivationMatrix, usize)> {
    if !(tol >= 0.0) {
        return Err(Error::invalid("neighbors", "dedup tolerance must be >= 0"));
    }
    let n = points.n_samples();
    let keep: Vec<usize> = if tol == 0.0 {
        // -0.0 and 0.0 compare equal, so normalise before sorting
        let norm = |i: usize| points.row(i).iter().map(|v| v + 0.0).collect::<Vec<f64>>();
        let keys: Vec<Vec<f64>> = (0..n).map(norm).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            keys[a]
                .iter()
                .zip(&keys[b])
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        let mut keep = vec![false; n];
        for (pos, &i) in order.iter().enumerate() {
            if pos == 0 || keys[i] != keys[order[pos - 1]] {
                keep[i] = true;
            }
        }
        (0..n).filter(|&i| keep[i]).collect()
    } else {
        let mut reps: Vec<usize> = Vec::new();
        for i in 0..n {
            let row = points.row(i);
            if !reps.iter().any(|&r| exact_dist(row, points.row(r)) <= tol) {
                reps.push(i);
            }
        }
        reps
    };
    if keep.len() < 2 {
        return Err(Error::degenerate("neighbors", "all points identical"));
    }
    let removed = n - keep.len();
    let out = if removed == 0 {
        points.clone()
    } else {
        points.select_rows(&keep)?
    };
    Ok((out, removed))
}
