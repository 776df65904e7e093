//! Diagonal-covariance Gaussian mixtures fitted by EM, with BIC selection of
//! the component count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ClusterError;
use crate::exec::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    pub max_iter: usize,
    /// Stop once the relative log-likelihood change falls below this.
    pub tol: f64,
    pub variance_floor: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-6,
            variance_floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub n_components: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub log_likelihood: f64,
    pub bic: f64,
    /// Log-likelihood after initialisation and after every EM iteration.
    pub log_likelihood_trace: Vec<f64>,
    pub n_points: usize,
    pub converged: bool,
}

/// Free parameters of a diagonal mixture: means and variances per component
/// plus `c - 1` free weights.
pub fn n_parameters(n_components: usize, dim: usize) -> usize {
    n_components * 2 * dim + n_components - 1
}

pub fn bic_value(log_likelihood: f64, n_params: usize, n_points: usize) -> f64 {
    n_params as f64 * (n_points as f64).ln() - 2.0 * log_likelihood
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

struct Params {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

impl Params {
    fn component_log_density(&self, k: usize, x: &[f64]) -> f64 {
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        let mut acc = 0.0;
        for ((xd, mu), var) in x.iter().zip(&self.means[k]).zip(&self.variances[k]) {
            let diff = xd - mu;
            acc -= 0.5 * (ln_2pi + var.ln() + diff * diff / var);
        }
        acc
    }

    /// Total log-likelihood and normalised responsibilities.
    fn e_step(&self, points: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>) {
        let c = self.weights.len();
        let mut total = 0.0;
        let mut resp = Vec::with_capacity(points.len());
        let mut logs = vec![0.0; c];
        for x in points {
            for (k, slot) in logs.iter_mut().enumerate() {
                *slot = self.weights[k].ln() + self.component_log_density(k, x);
            }
            let lse = log_sum_exp(&logs);
            total += lse;
            resp.push(logs.iter().map(|l| (l - lse).exp()).collect());
        }
        (total, resp)
    }

    fn m_step(&mut self, points: &[Vec<f64>], resp: &[Vec<f64>], floor: f64) {
        let n = points.len() as f64;
        let dim = points[0].len();
        for k in 0..self.weights.len() {
            let nk: f64 = resp.iter().map(|r| r[k]).sum();
            self.weights[k] = nk / n;
            if nk <= f64::MIN_POSITIVE {
                // Dead component: keep its location, it carries no weight.
                continue;
            }
            let mut mean = vec![0.0; dim];
            for (x, r) in points.iter().zip(resp) {
                for (m, xd) in mean.iter_mut().zip(x) {
                    *m += r[k] * xd;
                }
            }
            mean.iter_mut().for_each(|m| *m /= nk);
            let mut var = vec![0.0; dim];
            for (x, r) in points.iter().zip(resp) {
                for ((v, xd), m) in var.iter_mut().zip(x).zip(&mean) {
                    let d = xd - m;
                    *v += r[k] * d * d;
                }
            }
            var.iter_mut().for_each(|v| *v = (*v / nk).max(floor));
            self.means[k] = mean;
            self.variances[k] = var;
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding: first centre uniform, the rest by squared distance.
fn seed_centres(points: &[Vec<f64>], c: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = points.len();
    let mut centres = vec![rng.gen_range(0..n)];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[centres[0]])).collect();
    while centres.len() < c {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, w) in d2.iter().enumerate() {
                if *w > 0.0 && target < *w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            while d2[pick] == 0.0 {
                pick -= 1;
            }
            pick
        } else {
            // every point coincides with a centre
            let free: Vec<usize> = (0..n).filter(|i| !centres.contains(i)).collect();
            free[rng.gen_range(0..free.len())]
        };
        centres.push(next);
        for (slot, p) in d2.iter_mut().zip(points) {
            *slot = slot.min(sq_dist(p, &points[next]));
        }
    }
    centres
}

fn initial_params(points: &[Vec<f64>], c: usize, seed: u64, floor: f64) -> Params {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres = seed_centres(points, c, &mut rng);
    let dim = points[0].len();
    // hard partition around the seeded centres, then moment estimates
    let resp: Vec<Vec<f64>> = points
        .iter()
        .map(|p| {
            let best = (0..c)
                .min_by(|&a, &b| {
                    sq_dist(p, &points[centres[a]]).total_cmp(&sq_dist(p, &points[centres[b]]))
                })
                .unwrap_or(0);
            (0..c).map(|k| if k == best { 1.0 } else { 0.0 }).collect()
        })
        .collect();
    let mut params = Params {
        weights: vec![1.0 / c as f64; c],
        means: centres.iter().map(|&i| points[i].clone()).collect(),
        variances: vec![vec![1.0; dim]; c],
    };
    params.m_step(points, &resp, floor);
    params
}

pub fn fit_gmm(points: &[Vec<f64>], n_components: usize, seed: u64) -> Result<GmmModel, ClusterError> {
    fit_gmm_with(points, n_components, seed, &EmOptions::default())
}

pub fn fit_gmm_with(
    points: &[Vec<f64>],
    n_components: usize,
    seed: u64,
    opts: &EmOptions,
) -> Result<GmmModel, ClusterError> {
    let n = points.len();
    if n == 0 {
        return Err(ClusterError::Empty);
    }
    if n_components == 0 || n_components > n {
        return Err(ClusterError::TooManyComponents {
            components: n_components,
            points: n,
        });
    }
    let dim = points[0].len();
    if let Some(bad) = points.iter().find(|p| p.len() != dim) {
        return Err(ClusterError::DimMismatch {
            expected: dim,
            got: bad.len(),
        });
    }

    let mut params = initial_params(points, n_components, seed, opts.variance_floor);
    let (mut ll, mut resp) = params.e_step(points);
    let mut trace = vec![ll];
    let mut converged = false;
    for _ in 0..opts.max_iter {
        params.m_step(points, &resp, opts.variance_floor);
        let (next_ll, next_resp) = params.e_step(points);
        trace.push(next_ll);
        let delta = (next_ll - ll).abs();
        ll = next_ll;
        resp = next_resp;
        if delta <= opts.tol * trace[trace.len() - 2].abs() {
            converged = true;
            break;
        }
    }

    Ok(GmmModel {
        n_components,
        bic: bic_value(ll, n_parameters(n_components, dim), n),
        weights: params.weights,
        means: params.means,
        variances: params.variances,
        log_likelihood: ll,
        log_likelihood_trace: trace,
        n_points: n,
        converged,
    })
}

impl GmmModel {
    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn n_parameters(&self) -> usize {
        n_parameters(self.n_components, self.dim())
    }

    fn params(&self) -> Params {
        Params {
            weights: self.weights.clone(),
            means: self.means.clone(),
            variances: self.variances.clone(),
        }
    }

    /// Posterior component probabilities for each point.
    pub fn responsibilities(&self, points: &[Vec<f64>]) -> Vec<Vec<f64>> {
        self.params().e_step(points).1
    }

    pub fn log_likelihood_of(&self, points: &[Vec<f64>]) -> f64 {
        self.params().e_step(points).0
    }

    /// Argmax component per point; ties go to the lowest index.
    pub fn predict(&self, points: &[Vec<f64>]) -> Vec<usize> {
        self.responsibilities(points).iter().map(|r| argmax(r)).collect()
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// Fits 1..=min(max_components, n) components and keeps the lowest BIC,
/// preferring fewer components on ties.
pub fn select_components_bic(points: &[Vec<f64>], max_components: usize, seed: u64) -> Result<GmmModel, ClusterError> {
    select_components_bic_with(points, max_components, seed, Execution::Sequential)
}

pub fn select_components_bic_with(
    points: &[Vec<f64>],
    max_components: usize,
    seed: u64,
    exec: Execution,
) -> Result<GmmModel, ClusterError> {
    if points.is_empty() {
        return Err(ClusterError::Empty);
    }
    let upper = max_components.max(1).min(points.len());
    let fits = exec::map_range(exec, upper, |i| fit_gmm(points, i + 1, seed));
    let mut best: Option<GmmModel> = None;
    for fit in fits {
        let fit = fit?;
        if best.as_ref().is_none_or(|b| fit.bic < b.bic) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one candidate"))
}
