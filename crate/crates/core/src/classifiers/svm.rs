//! One-against-one soft-margin kernel machines.
//!
//! Each class pair gets a binary C-SVM trained on a precomputed kernel by
//! sequential minimal optimization with second-order working-set selection.
//! Kernels are `K = 1 − d`, which is not positive semidefinite for the OSA
//! distance; non-positive curvature along a working pair is clipped to a
//! small positive constant so the solver still makes progress.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::traces::Direction;

const TAU: f64 = 1e-12;

/// Representations the kernel is evaluated on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum KernelPoints {
    /// Feature vectors compared with `exp(−γ‖x − y‖²)`.
    Rbf { gamma: f64, points: Vec<Vec<f64>> },
    /// Direction strings compared with `exp(−2·OSA²/min len)`.
    Osad { points: Vec<Vec<Direction>> },
}

impl KernelPoints {
    pub fn len(&self) -> usize {
        match self {
            KernelPoints::Rbf { points, .. } => points.len(),
            KernelPoints::Osad { points } => points.len(),
        }
    }

    fn eval(&self, i: usize, j: usize) -> f64 {
        match self {
            KernelPoints::Rbf { gamma, points } => rbf(*gamma, &points[i], &points[j]),
            KernelPoints::Osad { points } => 1.0 - crate::distances::dist_osad_strings(&points[i], &points[j]),
        }
    }

    /// Kernel values between an outside point and every stored point.
    pub fn row_against(&self, query: &Query) -> Vec<f64> {
        match (self, query) {
            (KernelPoints::Rbf { gamma, points }, Query::Features(x)) => points.iter().map(|p| rbf(*gamma, p, x)).collect(),
            (KernelPoints::Osad { points }, Query::Directions(x)) => {
                points.iter().map(|p| 1.0 - crate::distances::dist_osad_strings(p, x)).collect()
            }
            _ => panic!("query representation does not match kernel"),
        }
    }

    /// Keeps only the listed points, in the given order.
    pub fn select(&self, keep: &[usize]) -> KernelPoints {
        match self {
            KernelPoints::Rbf { gamma, points } => {
                KernelPoints::Rbf { gamma: *gamma, points: keep.iter().map(|&i| points[i].clone()).collect() }
            }
            KernelPoints::Osad { points } => {
                KernelPoints::Osad { points: keep.iter().map(|&i| points[i].clone()).collect() }
            }
        }
    }

    /// Full symmetric Gram matrix, rows computed in parallel.
    pub fn gram(&self) -> Gram {
        let n = self.len();
        let upper: Vec<Vec<f32>> =
            (0..n).into_par_iter().map(|i| (i..n).map(|j| self.eval(i, j) as f32).collect()).collect();
        let mut data = vec![0f32; n * n];
        for (i, row) in upper.into_iter().enumerate() {
            for (off, v) in row.into_iter().enumerate() {
                let j = i + off;
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Gram { n, data }
    }
}

pub enum Query {
    Features(Vec<f64>),
    Directions(Vec<Direction>),
}

fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * sq).exp()
}

pub struct Gram {
    n: usize,
    data: Vec<f32>,
}

impl Gram {
    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j] as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Solves `min ½αᵀQα − Σα` s.t. `0 ≤ α ≤ C`, `yᵀα = 0`, with
/// `Q_ij = y_i y_j K_ij` and `K` given densely (row-major, `l × l`).
pub fn smo(k: &[f64], y: &[f64], cost: f64, eps: f64) -> Solution {
    let l = y.len();
    debug_assert_eq!(k.len(), l * l);
    let kk = |i: usize, j: usize| k[i * l + j];
    let mut alpha = vec![0.0; l];
    let mut grad = vec![-1.0; l];
    let max_iter = (100 * l).max(100_000);
    let mut converged = false;
    let mut iter = 0;

    while iter < max_iter {
        // first index: maximal violation among the "up" set
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..l {
            let up = if y[t] > 0.0 { alpha[t] < cost } else { alpha[t] > 0.0 };
            if up && -y[t] * grad[t] >= gmax {
                gmax = -y[t] * grad[t];
                i_sel = t;
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = usize::MAX;
        let mut obj_min = f64::INFINITY;
        for t in 0..l {
            let low = if y[t] > 0.0 { alpha[t] > 0.0 } else { alpha[t] < cost };
            if !low {
                continue;
            }
            let v = y[t] * grad[t];
            if v >= gmax2 {
                gmax2 = v;
            }
            let diff = gmax + v;
            if i_sel != usize::MAX && diff > 0.0 {
                let mut quad = kk(i_sel, i_sel) + kk(t, t) - 2.0 * kk(i_sel, t);
                if quad <= 0.0 {
                    quad = TAU;
                }
                let obj = -(diff * diff) / quad;
                if obj <= obj_min {
                    obj_min = obj;
                    j_sel = t;
                }
            }
        }
        if gmax + gmax2 < eps || i_sel == usize::MAX || j_sel == usize::MAX {
            converged = true;
            break;
        }
        iter += 1;
        let (i, j) = (i_sel, j_sel);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let mut quad = kk(i, i) + kk(j, j) - 2.0 * kk(i, j);
        if quad <= 0.0 {
            quad = TAU;
        }
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > cost {
                    alpha[i] = cost;
                    alpha[j] = cost - diff;
                }
            } else if alpha[j] > cost {
                alpha[j] = cost;
                alpha[i] = cost + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > cost {
                if alpha[i] > cost {
                    alpha[i] = cost;
                    alpha[j] = sum - cost;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cost {
                if alpha[j] > cost {
                    alpha[j] = cost;
                    alpha[i] = sum - cost;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..l {
            grad[t] += y[t] * (y[i] * kk(t, i) * di + y[j] * kk(t, j) * dj);
        }
    }

    // bias from free vectors, or the midpoint of the feasible range
    let (mut ub, mut lb, mut sum_free, mut n_free) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for t in 0..l {
        let yg = y[t] * grad[t];
        if alpha[t] >= cost {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else if ub.is_finite() && lb.is_finite() {
        (ub + lb) / 2.0
    } else {
        0.0
    };
    Solution { alpha, rho, converged, iterations: iter }
}

/// Binary machine between roster classes `a` (positive) and `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Machine {
    pub a: usize,
    pub b: usize,
    /// Indices into the model's support set.
    pub sv: Vec<u32>,
    /// `y_i α_i` for each support vector.
    pub coef: Vec<f64>,
    pub rho: f64,
    /// Both classes coincide under the kernel; the machine always votes `a`.
    pub degenerate: bool,
    pub converged: bool,
}

impl Machine {
    /// Returns the winning roster class for kernel values `k` (indexed by
    /// support-set position). Ties at exactly zero go to `a`.
    pub fn vote(&self, k: &[f64]) -> usize {
        let dec: f64 = self.sv.iter().zip(&self.coef).map(|(&s, c)| c * k[s as usize]).sum::<f64>() - self.rho;
        if dec >= 0.0 {
            self.a
        } else {
            self.b
        }
    }
}

/// Trains every pairwise machine. `members[c]` lists the training indices of
/// roster class `c`. Returns the machines with `sv` indices still pointing
/// into the training set.
pub fn train_pairs(points: &KernelPoints, members: &[Vec<usize>], cost: f64, eps: f64) -> Vec<Machine> {
    let gram = points.gram();
    let pairs: Vec<(usize, usize)> =
        (0..members.len()).flat_map(|a| (a + 1..members.len()).map(move |b| (a, b))).collect();
    pairs
        .into_par_iter()
        .map(|(a, b)| {
            let idx: Vec<usize> = members[a].iter().chain(&members[b]).copied().collect();
            let y: Vec<f64> = members[a].iter().map(|_| 1.0).chain(members[b].iter().map(|_| -1.0)).collect();
            let l = idx.len();
            let mut k = vec![0.0; l * l];
            for (r, &gi) in idx.iter().enumerate() {
                for (c, &gj) in idx.iter().enumerate() {
                    k[r * l + c] = gram.get(gi, gj);
                }
            }
            let na = members[a].len();
            let degenerate = (0..na).all(|r| {
                (na..l).all(|c| k[r * l + r] + k[c * l + c] - 2.0 * k[r * l + c] <= TAU)
            });
            if degenerate {
                return Machine { a, b, sv: Vec::new(), coef: Vec::new(), rho: 0.0, degenerate: true, converged: true };
            }
            let sol = smo(&k, &y, cost, eps);
            let (sv, coef) = sol
                .alpha
                .iter()
                .enumerate()
                .filter(|(_, &al)| al > 0.0)
                .map(|(r, &al)| (idx[r] as u32, y[r] * al))
                .unzip();
            Machine { a, b, sv, coef, rho: sol.rho, degenerate: false, converged: sol.converged }
        })
        .collect()
}

/// Rewrites machine support indices from training indices to positions in
/// the compacted support set, which is returned.
pub fn compact_support(machines: &mut [Machine]) -> Vec<usize> {
    let mut used: Vec<usize> = machines.iter().flat_map(|m| m.sv.iter().map(|&s| s as usize)).collect();
    used.sort_unstable();
    used.dedup();
    for m in machines.iter_mut() {
        for s in &mut m.sv {
            *s = used.binary_search(&(*s as usize)).unwrap() as u32;
        }
    }
    used
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_gram(x: &[f64]) -> Vec<f64> {
        x.iter().flat_map(|a| x.iter().map(move |b| a * b)).collect()
    }

    #[test]
    fn smo_separates_a_one_dimensional_problem() {
        // hard-margin optimum for points {-2,-1} vs {1,2} with a linear
        // kernel: w = 1, b = 0, alphas on ±1 equal to 1/2
        let x = [1.0, 2.0, -1.0, -2.0];
        let y = [1.0, 1.0, -1.0, -1.0];
        let sol = smo(&linear_gram(&x), &y, 100.0, 1e-6);
        assert!(sol.converged);
        assert!((sol.alpha[0] - 0.5).abs() < 1e-6);
        assert!(sol.alpha[1].abs() < 1e-9);
        assert!((sol.alpha[2] - 0.5).abs() < 1e-6);
        assert!(sol.rho.abs() < 1e-6);
        let ya: f64 = sol.alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
        assert!(ya.abs() < 1e-9);
    }

    #[test]
    fn smo_respects_box_constraint() {
        // overlapping labels force bounded alphas
        let x = [1.0, 0.5, 0.8, -1.0, 0.6];
        let y = [1.0, -1.0, 1.0, -1.0, -1.0];
        let c = 0.3;
        let sol = smo(&linear_gram(&x), &y, c, 1e-6);
        assert!(sol.alpha.iter().all(|&a| (-1e-12..=c + 1e-12).contains(&a)));
    }

    #[test]
    fn indefinite_kernel_terminates() {
        // a symmetric matrix with a negative eigenvalue
        let k = vec![1.0, 0.9, 0.1, 0.9, 1.0, 0.95, 0.1, 0.95, 1.0];
        let sol = smo(&k, &[1.0, -1.0, 1.0], 10.0, 1e-3);
        assert!(sol.iterations < 100_000);
        assert!(sol.alpha.iter().all(|a| a.is_finite()));
    }

    #[test]
    fn identical_classes_give_a_degenerate_machine() {
        let pts = KernelPoints::Rbf { gamma: 1.0, points: vec![vec![1.0, 1.0]; 4] };
        let machines = train_pairs(&pts, &[vec![0, 1], vec![2, 3]], 1.0, 1e-3);
        assert_eq!(machines.len(), 1);
        assert!(machines[0].degenerate);
        assert_eq!(machines[0].vote(&[]), 0);
    }

    #[test]
    fn support_compaction_preserves_votes() {
        let points: Vec<Vec<f64>> = (0..9).map(|i| vec![(i / 3) as f64 * 3.0 + (i % 3) as f64 * 0.1]).collect();
        let pts = KernelPoints::Rbf { gamma: 0.5, points };
        let members = vec![vec![0, 1, 2], vec![3, 4, 5], vec![6, 7, 8]];
        let raw = train_pairs(&pts, &members, 10.0, 1e-4);
        let mut compact = raw.clone();
        let used = compact_support(&mut compact);
        let support = pts.select(&used);
        for q in [0.05, 3.1, 6.2, 4.4] {
            let full = pts.row_against(&Query::Features(vec![q]));
            let small = support.row_against(&Query::Features(vec![q]));
            for (r, c) in raw.iter().zip(&compact) {
                assert_eq!(r.vote(&full), c.vote(&small));
            }
        }
    }
}
