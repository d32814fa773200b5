//! Verification instruments: ratio stability traces, noise inversion and
//! posterior metrics.

mod invert;
mod metrics;
mod stability;

pub use invert::{noise_invert, InvertConfig, Inversion, StepRule};
pub use metrics::{
    kde_logpdf, metrics_meanfield, metrics_samples, normal_quantile, silverman_bandwidth,
    weighted_quantile, PosteriorMetrics,
};
pub use stability::{
    ratio_stability, stability_diffs, StabilityConfig, StabilityRecord, StabilityRegime,
    StabilityTrace,
};
