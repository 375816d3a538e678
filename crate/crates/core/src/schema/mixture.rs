//! One-dimensional Gaussian mixtures fitted by expectation-maximisation.

use serde::{Deserialize, Serialize};

const MAX_ITERATIONS: usize = 500;
const TOLERANCE: f64 = 1e-9;
/// Modes whose weight falls below this are dropped after fitting.
const MIN_WEIGHT: f64 = 5e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussianMixture {
    pub fn n_modes(&self) -> usize {
        self.means.len()
    }

    pub fn single(mean: f64, std: f64) -> Self {
        Self {
            means: vec![mean],
            stds: vec![std],
            weights: vec![1.0],
        }
    }

    /// Per-mode `ln(w_k N(x | mu_k, sigma_k))`.
    pub fn log_joint(&self, x: f64) -> impl Iterator<Item = f64> + '_ {
        self.means
            .iter()
            .zip(&self.stds)
            .zip(&self.weights)
            .map(move |((&m, &s), &w)| {
                let z = (x - m) / s;
                w.ln() - s.ln() - 0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln()
            })
    }

    /// Mode with the highest posterior responsibility for `x`.
    pub fn most_likely_mode(&self, x: f64) -> usize {
        let mut best = (0, f64::NEG_INFINITY);
        for (k, lp) in self.log_joint(x).enumerate() {
            if lp > best.1 {
                best = (k, lp);
            }
        }
        best.0
    }

    pub fn log_likelihood(&self, data: &[f64]) -> f64 {
        data.iter().map(|&x| log_sum_exp(self.log_joint(x))).sum()
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let values: Vec<f64> = values.collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Fits at most `n_modes` components. Means start at evenly spaced quantiles,
/// so the fit is a deterministic function of the data.
///
/// Returns `None` when the data are constant (or empty).
pub fn fit_gaussian_mixture(data: &[f64], n_modes: usize) -> Option<GaussianMixture> {
    let n = data.len();
    if n == 0 {
        return None;
    }
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[n - 1]);
    if !(hi > lo) {
        return None;
    }
    let mut distinct = sorted.clone();
    distinct.dedup();
    let k = n_modes.max(1).min(distinct.len());

    let mean = data.iter().sum::<f64>() / n as f64;
    let var = data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    let floor = 1e-6 * (hi - lo);

    let mut mix = GaussianMixture {
        means: (0..k)
            .map(|j| sorted[((j as f64 + 0.5) / k as f64 * n as f64) as usize % n])
            .collect(),
        stds: vec![(var.sqrt() / k as f64).max(floor); k],
        weights: vec![1.0 / k as f64; k],
    };

    let mut resp = vec![0.0; n * k];
    let mut previous = f64::NEG_INFINITY;
    for _ in 0..MAX_ITERATIONS {
        // E step
        let mut ll = 0.0;
        for (i, &x) in data.iter().enumerate() {
            let row = &mut resp[i * k..(i + 1) * k];
            for (r, lp) in row.iter_mut().zip(mix.log_joint(x)) {
                *r = lp;
            }
            let norm = log_sum_exp(row.iter().copied());
            ll += norm;
            for r in row.iter_mut() {
                *r = (*r - norm).exp();
            }
        }
        // M step
        for j in 0..k {
            let nk: f64 = (0..n).map(|i| resp[i * k + j]).sum();
            if nk < 1e-12 {
                mix.weights[j] = 0.0;
                continue;
            }
            let mu = (0..n).map(|i| resp[i * k + j] * data[i]).sum::<f64>() / nk;
            let var = (0..n)
                .map(|i| resp[i * k + j] * (data[i] - mu).powi(2))
                .sum::<f64>()
                / nk;
            mix.means[j] = mu;
            mix.stds[j] = var.sqrt().max(floor);
            mix.weights[j] = nk / n as f64;
        }
        if (ll - previous).abs() <= TOLERANCE * ll.abs().max(1.0) {
            break;
        }
        previous = ll;
    }

    let keep: Vec<usize> = (0..k).filter(|&j| mix.weights[j] >= MIN_WEIGHT).collect();
    let total: f64 = keep.iter().map(|&j| mix.weights[j]).sum();
    let mut out = GaussianMixture {
        means: keep.iter().map(|&j| mix.means[j]).collect(),
        stds: keep.iter().map(|&j| mix.stds[j]).collect(),
        weights: keep.iter().map(|&j| mix.weights[j] / total).collect(),
    };
    // order modes by mean for stable layouts
    let mut order: Vec<usize> = (0..out.n_modes()).collect();
    order.sort_by(|&a, &b| out.means[a].total_cmp(&out.means[b]));
    out = GaussianMixture {
        means: order.iter().map(|&j| out.means[j]).collect(),
        stds: order.iter().map(|&j| out.stds[j]).collect(),
        weights: order.iter().map(|&j| out.weights[j]).collect(),
    };
    Some(out)
}
