//! Random forest with Gini splits and per-leaf class counts.
//!
//! Each leaf keeps its class distribution as integer shares of `2^32`
//! (largest-remainder rounding), so a tree's fractions sum to one exactly
//! and the forest-wide match sums to the tree count with no rounding error.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::{stream, unit_rng};

pub const LEAF_SCALE: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
    Leaf { shares: Vec<(u32, u64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn leaf(&self, x: &[f64]) -> &[(u32, u64)] {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Split { feature, threshold, left, right } => {
                    at = if x[*feature as usize] <= *threshold { *left } else { *right } as usize;
                }
                Node::Leaf { shares } => return shares,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Split { left, right, .. } => 1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    trees: Vec<Tree>,
    n_classes: usize,
}

impl RandomForest {
    /// Grows `n_trees` trees, each on a bootstrap sample the size of the
    /// input, splitting on `⌈√F⌉` random features per node until leaves are
    /// pure or cannot be split.
    pub fn fit(x: &[Vec<f64>], y: &[usize], n_classes: usize, n_trees: usize, seed: u64) -> Self {
        assert_eq!(x.len(), y.len());
        assert!(!x.is_empty(), "forest needs training data");
        let n_features = x[0].len();
        let mtry = (n_features as f64).sqrt().ceil() as usize;
        let trees = (0..n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = unit_rng(seed, stream::FOREST, t as u64);
                let mut idx: Vec<usize> = (0..x.len()).map(|_| rng.random_range(0..x.len())).collect();
                let mut builder = Builder { x, y, n_classes, mtry, nodes: Vec::new(), rng };
                builder.grow(&mut idx);
                Tree { nodes: builder.nodes }
            })
            .collect();
        RandomForest { trees, n_classes }
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// Per-class sum over trees of the leaf fraction, in units of
    /// `1 / LEAF_SCALE`.
    pub fn votes(&self, x: &[f64]) -> Vec<u64> {
        let mut acc = vec![0u64; self.n_classes];
        for t in &self.trees {
            for &(c, s) in t.leaf(x) {
                acc[c as usize] += s;
            }
        }
        acc
    }

    /// `Σ_trees L(C)/Σ_x L(x)` for each class.
    pub fn match_scores(&self, x: &[f64]) -> Vec<f64> {
        self.votes(x).into_iter().map(|v| v as f64 / LEAF_SCALE as f64).collect()
    }
}

struct Builder<'a, R> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    n_classes: usize,
    mtry: usize,
    nodes: Vec<Node>,
    rng: R,
}

impl<R: Rng> Builder<'_, R> {
    fn grow(&mut self, idx: &mut [usize]) -> u32 {
        let id = self.nodes.len() as u32;
        let mut counts = vec![0usize; self.n_classes];
        for &i in idx.iter() {
            counts[self.y[i]] += 1;
        }
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let split = if pure { None } else { self.best_split(idx, &counts) };
        let Some((feature, threshold)) = split else {
            self.nodes.push(Node::Leaf { shares: shares(&counts) });
            return id;
        };
        self.nodes.push(Node::Leaf { shares: Vec::new() });
        let mid = partition(idx, |i| self.x[i][feature] <= threshold);
        let (l, r) = idx.split_at_mut(mid);
        let left = self.grow(l);
        let right = self.grow(r);
        self.nodes[id as usize] = Node::Split { feature: feature as u32, threshold, left, right };
        id
    }

    /// Best Gini split over `mtry` random features; if all of those are
    /// constant on this node, keeps drawing features until one is not.
    fn best_split(&mut self, idx: &[usize], counts: &[usize]) -> Option<(usize, f64)> {
        let n_features = self.x[0].len();
        let mut order: Vec<usize> = (0..n_features).collect();
        order.shuffle(&mut self.rng);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut vals: Vec<(f64, usize)> = Vec::with_capacity(idx.len());
        for (tried, &f) in order.iter().enumerate() {
            if tried >= self.mtry && best.is_some() {
                break;
            }
            vals.clear();
            vals.extend(idx.iter().map(|&i| (self.x[i][f], self.y[i])));
            vals.sort_by(|a, b| a.0.total_cmp(&b.0));
            if vals[0].0 == vals[vals.len() - 1].0 {
                continue;
            }
            let mut left = vec![0usize; self.n_classes];
            let mut right = counts.to_vec();
            let (mut sl, mut sr) = (0usize, counts.iter().map(|c| c * c).sum::<usize>());
            let m = vals.len();
            for k in 0..m - 1 {
                let c = vals[k].1;
                sl += 2 * left[c] + 1;
                left[c] += 1;
                sr -= 2 * right[c] - 1;
                right[c] -= 1;
                let (a, b) = (vals[k].0, vals[k + 1].0);
                if a == b {
                    continue;
                }
                let nl = (k + 1) as f64;
                let score = sl as f64 / nl + sr as f64 / (m as f64 - nl);
                if best.is_none_or(|(s, _, _)| score > s) {
                    let mut thr = a + (b - a) / 2.0;
                    if thr >= b {
                        thr = a;
                    }
                    best = Some((score, f, thr));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

fn partition(idx: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let mut mid = 0;
    for k in 0..idx.len() {
        if pred(idx[k]) {
            idx.swap(mid, k);
            mid += 1;
        }
    }
    mid
}

/// Class counts as integer shares of `LEAF_SCALE` summing to it exactly.
fn shares(counts: &[usize]) -> Vec<(u32, u64)> {
    let total: u64 = counts.iter().map(|&c| c as u64).sum();
    let mut out: Vec<(u32, u64, u64)> = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(k, &c)| {
            let num = c as u128 * LEAF_SCALE as u128;
            (k as u32, (num / total as u128) as u64, (num % total as u128) as u64)
        })
        .collect();
    let assigned: u64 = out.iter().map(|o| o.1).sum();
    let mut short = LEAF_SCALE - assigned;
    let mut order: Vec<usize> = (0..out.len()).collect();
    order.sort_by(|&a, &b| out[b].2.cmp(&out[a].2).then(a.cmp(&b)));
    for k in order {
        if short == 0 {
            break;
        }
        out[k].1 += 1;
        short -= 1;
    }
    out.into_iter().map(|(k, s, _)| (k, s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shares_sum_exactly() {
        for counts in [vec![1, 1, 1], vec![3, 0, 7], vec![5], vec![2, 2, 2, 1, 9, 13]] {
            let s = shares(&counts);
            assert_eq!(s.iter().map(|x| x.1).sum::<u64>(), LEAF_SCALE);
        }
        assert_eq!(shares(&[0, 4, 0]), vec![(1, LEAF_SCALE)]);
    }

    #[test]
    fn separable_blobs_are_learned() {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..40 {
            let c = i % 2;
            let base = if c == 0 { 0.0 } else { 10.0 };
            x.push(vec![base + (i % 7) as f64 * 0.1, (i % 5) as f64]);
            y.push(c);
        }
        let f = RandomForest::fit(&x, &y, 2, 50, 3);
        for (xi, &yi) in x.iter().zip(&y) {
            let m = f.match_scores(xi);
            let arg = if m[0] >= m[1] { 0 } else { 1 };
            assert_eq!(arg, yi);
            assert_eq!(f.votes(xi).iter().sum::<u64>(), 50 * LEAF_SCALE);
        }
    }

    #[test]
    fn identical_points_with_mixed_labels_make_a_leaf() {
        let x = vec![vec![1.0, 2.0]; 6];
        let y = vec![0, 1, 0, 1, 1, 1];
        let f = RandomForest::fit(&x, &y, 2, 5, 0);
        assert!(f.trees().iter().all(|t| t.depth() == 0));
        let m = f.match_scores(&x[0]);
        assert!((m.iter().sum::<f64>() - 5.0).abs() == 0.0);
    }

    #[test]
    fn fit_is_deterministic() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![(i * 7 % 11) as f64, (i * 3 % 5) as f64]).collect();
        let y: Vec<usize> = (0..30).map(|i| i % 3).collect();
        assert_eq!(RandomForest::fit(&x, &y, 3, 8, 9), RandomForest::fit(&x, &y, 3, 8, 9));
    }
}
