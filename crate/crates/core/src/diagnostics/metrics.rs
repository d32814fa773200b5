//! Posterior-quality metrics against a known true parameter.

use crate::error::{contract, Result};
use crate::variational::{GlobalApprox, GlobalKind};
use statrs::distribution::{ContinuousCDF, Normal};

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(p)
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct PosteriorMetrics {
    /// `−log q(β_true)`, exact or by kernel density.
    pub nlp_true: f64,
    pub ci95: Vec<(f64, f64)>,
    pub ci95_contains: Vec<bool>,
}

fn contains(ci: &[(f64, f64)], truth: &[f64]) -> Vec<bool> {
    ci.iter()
        .zip(truth)
        .map(|(&(lo, hi), &t)| lo <= t && t <= hi)
        .collect()
}

/// Exact metrics for a mean-field approximation.
pub fn metrics_meanfield(q: &GlobalApprox, truth: &[f64]) -> Result<PosteriorMetrics> {
    if q.kind == GlobalKind::PointMass {
        return Err(contract("a point mass has no density or credible interval"));
    }
    if truth.len() != q.dim() {
        return Err(contract("true parameter dimension mismatch"));
    }
    let (lo, hi) = (q.quantile(0.025), q.quantile(0.975));
    let ci: Vec<(f64, f64)> = lo.into_iter().zip(hi).collect();
    Ok(PosteriorMetrics {
        nlp_true: -q.logpdf(truth).unwrap(),
        ci95_contains: contains(&ci, truth),
        ci95: ci,
    })
}

fn normalized(weights: Option<&[f64]>, n: usize) -> Vec<f64> {
    match weights {
        Some(w) => {
            let s: f64 = w.iter().sum();
            w.iter().map(|v| v / s).collect()
        }
        None => vec![1.0 / n as f64; n],
    }
}

/// Quantile of weighted values: the smallest value whose cumulative weight
/// reaches `p`.
pub fn weighted_quantile(values: &[f64], weights: &[f64], p: f64) -> f64 {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    for &i in &idx {
        acc += weights[i] / total;
        if acc >= p - 1e-12 {
            return values[i];
        }
    }
    values[*idx.last().unwrap()]
}

/// Per-dimension Silverman bandwidths for a product Gaussian kernel.
pub fn silverman_bandwidth(samples: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let d = samples[0].len();
    let n_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
    let factor = (4.0 / ((d as f64 + 2.0) * n_eff)).powf(1.0 / (d as f64 + 4.0));
    (0..d)
        .map(|j| {
            let m: f64 = samples.iter().zip(weights).map(|(s, w)| w * s[j]).sum();
            let v: f64 = samples.iter().zip(weights).map(|(s, w)| w * (s[j] - m).powi(2)).sum();
            (v.sqrt() * factor).max(1e-12)
        })
        .collect()
}

/// Log density of a weighted Gaussian kernel density estimate at `point`.
pub fn kde_logpdf(samples: &[Vec<f64>], weights: &[f64], bandwidth: &[f64], point: &[f64]) -> f64 {
    let norm: f64 = bandwidth
        .iter()
        .map(|h| -h.ln() - crate::ndcore::scalar::LN_SQRT_2PI)
        .sum();
    let terms: Vec<f64> = samples
        .iter()
        .zip(weights)
        .map(|(s, w)| {
            let q: f64 = s
                .iter()
                .zip(point)
                .zip(bandwidth)
                .map(|((a, b), h)| ((a - b) / h).powi(2))
                .sum();
            w.ln() - 0.5 * q
        })
        .collect();
    crate::ndcore::scalar::logsumexp(&terms) + norm
}

/// Kernel-density NLP and sample-quantile intervals from (weighted) draws.
pub fn metrics_samples(
    samples: &[Vec<f64>],
    weights: Option<&[f64]>,
    truth: &[f64],
) -> Result<PosteriorMetrics> {
    if samples.len() < 100 {
        return Err(contract("at least 100 samples are needed for kernel density metrics"));
    }
    if samples.iter().any(|s| s.len() != truth.len()) {
        return Err(contract("true parameter dimension mismatch"));
    }
    let w = normalized(weights, samples.len());
    let h = silverman_bandwidth(samples, &w);
    let ci: Vec<(f64, f64)> = (0..truth.len())
        .map(|j| {
            let col: Vec<f64> = samples.iter().map(|s| s[j]).collect();
            (weighted_quantile(&col, &w, 0.025), weighted_quantile(&col, &w, 0.975))
        })
        .collect();
    Ok(PosteriorMetrics {
        nlp_true: -kde_logpdf(samples, &w, &h, truth),
        ci95_contains: contains(&ci, truth),
        ci95: ci,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_normal_metrics() {
        let q = GlobalApprox::meanfield(GlobalKind::MeanfieldNormal, vec![0.0], vec![1.0]).unwrap();
        let m = metrics_meanfield(&q, &[0.0]).unwrap();
        assert!((m.nlp_true - 0.918_938_533_204_672_8).abs() < 1e-12);
        assert_eq!(m.ci95_contains, vec![true]);
        assert!(!metrics_meanfield(&q, &[3.0]).unwrap().ci95_contains[0]);
        assert!((m.ci95[0].1 - 1.959_963_984_540_054).abs() < 1e-9);
    }

    #[test]
    fn too_few_samples() {
        assert!(metrics_samples(&vec![vec![0.0]; 99], None, &[0.0]).is_err());
    }

    #[test]
    fn quantiles_of_uniform_grid() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let w = vec![1.0; 100];
        assert_eq!(weighted_quantile(&v, &w, 0.5), 50.0);
        assert_eq!(weighted_quantile(&v, &w, 0.025), 3.0);
    }
}
