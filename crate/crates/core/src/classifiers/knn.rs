//! Weight learning for the weighted L1 nearest-neighbour attack.
//!
//! Each pass visits the training points in a seeded random order. For a
//! point, the `k` nearest same-class points ("good") and the `k` nearest
//! other-class points ("bad") are found under the current weights; every
//! feature whose summed difference to the bad points does not exceed its
//! summed difference to the good points is shrunk by `1 − δ`. Weights are
//! renormalized to sum to the feature count after every pass.

use rand::seq::SliceRandom;

use crate::distances::weighted_l1_unchecked;
use crate::rng::{stream, unit_rng};

pub fn learn(features: &[Vec<f64>], labels: &[usize], rounds: usize, k: usize, delta: f64, seed: u64) -> Vec<f64> {
    let n_features = features.first().map_or(0, Vec::len);
    let mut w = vec![1.0; n_features];
    if delta == 0.0 || features.len() < 2 {
        return w;
    }
    let shrink = 1.0 - delta;
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(features.len());
    let mut good_sum = vec![0.0; n_features];
    let mut bad_sum = vec![0.0; n_features];
    for round in 0..rounds {
        let mut order: Vec<usize> = (0..features.len()).collect();
        order.shuffle(&mut unit_rng(seed, stream::WEIGHTS, round as u64));
        for &p in &order {
            let fp = &features[p];
            dist.clear();
            dist.extend(
                features
                    .iter()
                    .enumerate()
                    .filter(|&(q, _)| q != p)
                    .map(|(q, fq)| (weighted_l1_unchecked(fp, fq, &w), q)),
            );
            let (same, other): (Vec<_>, Vec<_>) = dist.iter().copied().partition(|&(_, q)| labels[q] == labels[p]);
            let good = nearest(same, k);
            let bad = nearest(other, k);
            good_sum.iter_mut().for_each(|g| *g = 0.0);
            bad_sum.iter_mut().for_each(|b| *b = 0.0);
            for &q in &good {
                for ((g, a), b) in good_sum.iter_mut().zip(fp).zip(&features[q]) {
                    *g += (a - b).abs();
                }
            }
            for &q in &bad {
                for ((s, a), b) in bad_sum.iter_mut().zip(fp).zip(&features[q]) {
                    *s += (a - b).abs();
                }
            }
            for ((wi, g), b) in w.iter_mut().zip(&good_sum).zip(&bad_sum) {
                if b <= g {
                    *wi *= shrink;
                }
            }
        }
        let total: f64 = w.iter().sum();
        if total > 0.0 {
            let scale = n_features as f64 / total;
            w.iter_mut().for_each(|wi| *wi *= scale);
        }
    }
    w
}

/// Indices of the `k` smallest distances; ties broken by index.
fn nearest(mut cands: Vec<(f64, usize)>, k: usize) -> Vec<usize> {
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if cands.len() > k {
        cands.select_nth_unstable_by(k, cmp);
        cands.truncate(k);
    }
    cands.into_iter().map(|c| c.1).collect()
}
