//! k-nearest-neighbour distance baseline.
//!
//! Each supervised pair becomes the point `(value, delta_t, next_value)`. A
//! point's score is its mean Euclidean distance to its `k` nearest training
//! points; the alarm threshold is a quantile of the leave-one-out scores of
//! the training points themselves. Distances are brute force.

use crate::error::{Error, Result};
use crate::evaluate::metrics::quantile;
use crate::pipeline::SupervisedBatch;

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_QUANTILE: f64 = 0.99;

fn points(batch: &SupervisedBatch) -> Vec<[f64; 3]> {
    batch
        .inputs
        .iter()
        .zip(&batch.targets)
        .map(|(x, &y)| [x[0], x[1], y])
        .collect()
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn mean_of_smallest(dists: &mut [f64], k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    if k < dists.len() {
        dists.select_nth_unstable_by(k - 1, f64::total_cmp);
    }
    dists[..k].iter().sum::<f64>() / k as f64
}

pub struct KnnScores {
    pub train_scores: Vec<f64>,
    pub val_scores: Vec<f64>,
    pub threshold: f64,
}

pub fn knn_scores(
    train: &SupervisedBatch,
    val: &SupervisedBatch,
    k: usize,
    q: f64,
) -> Result<KnnScores> {
    if k == 0 {
        return Err(Error::param("k", "must be positive"));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::param("quantile", "must lie in (0, 1)"));
    }
    let tr = points(train);
    if k > tr.len() {
        return Err(Error::KTooLarge { k, n: tr.len() });
    }
    let loo_k = k.min(tr.len() - 1);
    let mut buf = Vec::with_capacity(tr.len());
    let train_scores: Vec<f64> = tr
        .iter()
        .enumerate()
        .map(|(i, p)| {
            buf.clear();
            buf.extend(
                tr.iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, o)| distance(p, o)),
            );
            mean_of_smallest(&mut buf, loo_k)
        })
        .collect();
    let val_scores: Vec<f64> = points(val)
        .iter()
        .map(|p| {
            buf.clear();
            buf.extend(tr.iter().map(|o| distance(p, o)));
            mean_of_smallest(&mut buf, k)
        })
        .collect();
    let threshold = quantile(&train_scores, q);
    Ok(KnnScores {
        train_scores,
        val_scores,
        threshold,
    })
}

pub fn knn_detect(
    train: &SupervisedBatch,
    val: &SupervisedBatch,
    k: usize,
    q: f64,
) -> Result<Vec<bool>> {
    let s = knn_scores(train, val, k, q)?;
    Ok(s.val_scores.iter().map(|&v| v > s.threshold).collect())
}
