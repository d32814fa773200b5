//! Summary statistics of a predator-prey series.

use crate::models::lotka_volterra::Series;

pub const SUMMARY_DIM: usize = 9;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population variance.
fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

/// `Σ_t (x_t − m)(x_{t+k} − m) / Σ_t (x_t − m)²`; zero for a constant series.
pub fn autocorr(v: &[f64], lag: usize) -> f64 {
    let m = mean(v);
    let den: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
    if den == 0.0 || lag >= v.len() {
        return 0.0;
    }
    let num: f64 = (0..v.len() - lag).map(|t| (v[t] - m) * (v[t + lag] - m)).sum();
    num / den
}

/// Pearson correlation; zero when either series is constant.
pub fn cross_corr(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

/// `[mean prey, mean predator, ln(var prey + 1), ln(var predator + 1),
/// acf1 prey, acf2 prey, acf1 predator, acf2 predator, corr(prey, predator)]`.
pub fn summary_stats(s: &Series) -> [f64; SUMMARY_DIM] {
    let (p, q) = (&s.prey[..], &s.predator[..]);
    [
        mean(p),
        mean(q),
        (variance(p) + 1.0).ln(),
        (variance(q) + 1.0).ln(),
        autocorr(p, 1),
        autocorr(p, 2),
        autocorr(q, 1),
        autocorr(q, 2),
        cross_corr(p, q),
    ]
}
