//! Small exact UMAP: cosine k-NN graph, fuzzy simplicial set with the usual
//! local-connectivity smoothing, and a seeded SGD layout with negative
//! sampling. Sized for retrieval sets of tens to a few hundred points.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ClusterError;
use crate::embedding::cosine;
use crate::exec::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducerParams {
    pub target_dim: usize,
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub n_epochs: usize,
    pub seed: u64,
}

impl ReducerParams {
    /// Defaults for `n` points: 10 output dims, `max(2, floor(sqrt(n)))`
    /// neighbours, `min_dist` 0.1, 200 epochs.
    pub fn for_points(n: usize, seed: u64) -> Self {
        Self {
            target_dim: 10,
            n_neighbors: default_neighbors(n),
            min_dist: 0.1,
            n_epochs: 200,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ClusterError> {
        if self.target_dim < 2 {
            return Err(ClusterError::Config("target_dim must be at least 2".into()));
        }
        if self.n_neighbors < 2 {
            return Err(ClusterError::Config("n_neighbors must be at least 2".into()));
        }
        if !(self.min_dist >= 0.0) {
            return Err(ClusterError::Config("min_dist must be non-negative".into()));
        }
        if self.n_epochs == 0 {
            return Err(ClusterError::Config("n_epochs must be positive".into()));
        }
        Ok(())
    }
}

pub fn default_neighbors(n: usize) -> usize {
    ((n as f64).sqrt().floor() as usize).max(2)
}

const NEGATIVE_SAMPLE_RATE: f64 = 5.0;
const GRAD_CLIP: f64 = 4.0;
const SMOOTH_K_TOLERANCE: f64 = 1e-5;

/// Fits `a, b` so that `1 / (1 + a d^(2b))` approximates the target
/// membership curve: 1 below `min_dist`, `exp(-(d - min_dist) / spread)` above.
pub fn fit_ab(min_dist: f64, spread: f64) -> (f64, f64) {
    let xs: Vec<f64> = (0..300).map(|i| 3.0 * spread * i as f64 / 299.0).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| if x < min_dist { 1.0 } else { (-(x - min_dist) / spread).exp() })
        .collect();
    let loss = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| {
                let f = 1.0 / (1.0 + a * x.powf(2.0 * b));
                (f - y) * (f - y)
            })
            .sum()
    };
    // Levenberg-Marquardt on two parameters.
    let (mut a, mut b) = (1.0, 1.0);
    let mut lambda = 1e-3;
    let mut current = loss(a, b);
    for _ in 0..500 {
        let (mut jtj, mut jtr) = ([[0.0f64; 2]; 2], [0.0f64; 2]);
        for (&x, &y) in xs.iter().zip(&ys) {
            if x == 0.0 {
                continue;
            }
            let p = x.powf(2.0 * b);
            let denom = 1.0 + a * p;
            let f = 1.0 / denom;
            let da = -p / (denom * denom);
            let db = -a * p * 2.0 * x.ln() / (denom * denom);
            let r = f - y;
            let j = [da, db];
            for u in 0..2 {
                jtr[u] += j[u] * r;
                for v in 0..2 {
                    jtj[u][v] += j[u] * j[v];
                }
            }
        }
        let m = [
            [jtj[0][0] * (1.0 + lambda), jtj[0][1]],
            [jtj[1][0], jtj[1][1] * (1.0 + lambda)],
        ];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if det.abs() < 1e-300 {
            break;
        }
        let step_a = (m[1][1] * jtr[0] - m[0][1] * jtr[1]) / det;
        let step_b = (m[0][0] * jtr[1] - m[1][0] * jtr[0]) / det;
        let (na, nb) = (a - step_a, b - step_b);
        if na > 0.0 && nb > 0.0 {
            let next = loss(na, nb);
            if next < current {
                let done = (current - next) < 1e-14;
                a = na;
                b = nb;
                current = next;
                lambda = (lambda * 0.3).max(1e-12);
                if done {
                    break;
                }
                continue;
            }
        }
        lambda *= 10.0;
        if lambda > 1e12 {
            break;
        }
    }
    (a, b)
}

/// Exact neighbours of every point by cosine distance, nearest first, ties by index.
fn knn(points: &[Vec<f64>], k: usize, exec: Execution) -> Vec<Vec<(usize, f64)>> {
    exec::map_range(exec, points.len(), |i| {
        let mut d: Vec<(usize, f64)> = (0..points.len())
            .filter(|&j| j != i)
            .map(|j| (j, (1.0 - cosine(&points[i], &points[j])).max(0.0)))
            .collect();
        d.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        d.truncate(k);
        d
    })
}

/// `(rho, sigma)` per point so that neighbour memberships sum to `log2(k)`.
fn smooth_knn(neigh: &[Vec<(usize, f64)>]) -> Vec<(f64, f64)> {
    let all_mean = {
        let (s, c) = neigh
            .iter()
            .flatten()
            .fold((0.0, 0usize), |(s, c), (_, d)| (s + d, c + 1));
        if c == 0 { 0.0 } else { s / c as f64 }
    };
    neigh
        .iter()
        .map(|row| {
            let k = row.len().max(1);
            let target = (k as f64).log2();
            let rho = row.iter().map(|(_, d)| *d).find(|d| *d > 0.0).unwrap_or(0.0);
            let (mut lo, mut hi, mut mid) = (0.0f64, f64::INFINITY, 1.0f64);
            for _ in 0..64 {
                let psum: f64 = row
                    .iter()
                    .map(|(_, d)| {
                        let gap = d - rho;
                        if gap > 0.0 { (-gap / mid).exp() } else { 1.0 }
                    })
                    .sum();
                if (psum - target).abs() < SMOOTH_K_TOLERANCE {
                    break;
                }
                if psum > target {
                    hi = mid;
                    mid = (lo + hi) / 2.0;
                } else {
                    lo = mid;
                    mid = if hi.is_infinite() { mid * 2.0 } else { (lo + hi) / 2.0 };
                }
            }
            let row_mean = row.iter().map(|(_, d)| d).sum::<f64>() / k as f64;
            let floor = 1e-3 * if rho > 0.0 { row_mean } else { all_mean };
            (rho, mid.max(floor).max(f64::MIN_POSITIVE))
        })
        .collect()
}

/// Symmetrised fuzzy graph as a sorted edge list `(head, tail, weight)`.
fn fuzzy_graph(neigh: &[Vec<(usize, f64)>], scales: &[(f64, f64)]) -> Vec<(usize, usize, f64)> {
    let mut directed: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (i, row) in neigh.iter().enumerate() {
        let (rho, sigma) = scales[i];
        for &(j, d) in row {
            let w = if d - rho <= 0.0 { 1.0 } else { (-(d - rho) / sigma).exp() };
            directed.insert((i, j), w);
        }
    }
    let mut sym: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (&(i, j), &w) in &directed {
        let wt = directed.get(&(j, i)).copied().unwrap_or(0.0);
        let combined = w + wt - w * wt;
        sym.insert((i, j), combined);
        sym.insert((j, i), combined);
    }
    sym.into_iter()
        .filter(|(_, w)| *w > 0.0)
        .map(|((i, j), w)| (i, j, w))
        .collect()
}

fn clip(x: f64) -> f64 {
    x.clamp(-GRAD_CLIP, GRAD_CLIP)
}

/// Reduces `points` to `min(target_dim, input_dim, n - 2)` dimensions.
///
/// With `n <= target_dim + 2` the input is returned unchanged. Output is a
/// pure function of the inputs and `params.seed`.
pub fn reduce_umap(points: &[Vec<f64>], params: &ReducerParams, exec: Execution) -> Vec<Vec<f64>> {
    let n = points.len();
    if n <= params.target_dim + 2 {
        return points.to_vec();
    }
    let in_dim = points[0].len();
    let out_dim = params.target_dim.min(in_dim).min(n - 2).max(1);
    let k = params.n_neighbors.max(2).min(n - 1);

    let neigh = knn(points, k, exec);
    let scales = smooth_knn(&neigh);
    let mut edges = fuzzy_graph(&neigh, &scales);
    let n_epochs = params.n_epochs.max(1);
    let max_w = edges.iter().map(|e| e.2).fold(0.0, f64::max);
    edges.retain(|e| e.2 >= max_w / n_epochs as f64);
    let (a, b) = fit_ab(params.min_dist, 1.0);

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut emb: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..out_dim).map(|_| rng.gen_range(-10.0..10.0)).collect())
        .collect();

    let epochs_per_sample: Vec<f64> = edges.iter().map(|e| max_w / e.2).collect();
    let epochs_per_negative: Vec<f64> = epochs_per_sample.iter().map(|e| e / NEGATIVE_SAMPLE_RATE).collect();
    let mut next_sample = epochs_per_sample.clone();
    let mut next_negative = epochs_per_negative.clone();

    for epoch in 0..n_epochs {
        let alpha = 1.0 - epoch as f64 / n_epochs as f64;
        let now = epoch as f64;
        for (e, &(head, tail, _)) in edges.iter().enumerate() {
            if next_sample[e] > now {
                continue;
            }
            let d2: f64 = (0..out_dim).map(|d| (emb[head][d] - emb[tail][d]).powi(2)).sum();
            let coeff = if d2 > 0.0 {
                -2.0 * a * b * d2.powf(b - 1.0) / (a * d2.powf(b) + 1.0)
            } else {
                0.0
            };
            for d in 0..out_dim {
                let g = clip(coeff * (emb[head][d] - emb[tail][d])) * alpha;
                emb[head][d] += g;
                emb[tail][d] -= g;
            }
            next_sample[e] += epochs_per_sample[e];

            let n_neg = ((now - next_negative[e]) / epochs_per_negative[e]).floor().max(0.0) as usize;
            for _ in 0..n_neg {
                let other = rng.gen_range(0..n);
                if other == head {
                    continue;
                }
                let d2: f64 = (0..out_dim).map(|d| (emb[head][d] - emb[other][d]).powi(2)).sum();
                if d2 <= 0.0 {
                    continue;
                }
                let coeff = 2.0 * b / ((0.001 + d2) * (a * d2.powf(b) + 1.0));
                for d in 0..out_dim {
                    let g = clip(coeff * (emb[head][d] - emb[other][d])) * alpha;
                    emb[head][d] += g;
                }
            }
            next_negative[e] += n_neg as f64 * epochs_per_negative[e];
        }
    }
    emb
}
