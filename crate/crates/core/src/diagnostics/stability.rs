//! Tracing how well a ratio estimator tracks the exact log likelihood:
//! across `β ~ q`, `Σ_n log p(x_n | β) − Σ_n r(x_n, β)` should be constant.

use crate::error::{contract, Result};
use crate::lfvi::{Lfvi, LfviConfig, RatioFn};
use crate::models::{BetaInput, Dataset, HimModel};
use crate::ndcore::{RngStream, Tape, Tensor};
use crate::ratio::RatioEstimator;
use crate::variational::GlobalApprox;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityRegime {
    /// `q` and `r` trained together.
    Joint,
    /// `r` trained with `q` frozen at its random initialisation.
    FrozenRandom,
    /// `r` trained with `q` frozen at a supplied approximation.
    FrozenPosterior,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityConfig {
    /// Ratio steps (or joint iterations) to run.
    pub n_steps: usize,
    pub checkpoint_every: usize,
    /// `β` draws per checkpoint.
    pub n_draws: usize,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            n_steps: 5000,
            checkpoint_every: 100,
            n_draws: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityRecord {
    pub iteration: usize,
    pub variance: f64,
    pub mean_diff: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityTrace {
    pub regime: StabilityRegime,
    pub records: Vec<StabilityRecord>,
}

impl StabilityTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,variance,mean_diff\n");
        for r in &self.records {
            let _ = writeln!(s, "{},{},{}", r.iteration, r.variance, r.mean_diff);
        }
        s
    }
}

/// `Σ_n [log p(x_n | β) − r(x_n, β)]` for each of `n_draws` draws from `q`.
pub fn stability_diffs(
    model: &dyn HimModel,
    data: &Dataset,
    data_features: &Tensor,
    q: &GlobalApprox,
    ratio: &dyn RatioFn,
    n_draws: usize,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    (0..n_draws)
        .map(|_| {
            let beta = q.sample_value(rng);
            let mut ll = 0.0;
            for n in 0..data.len() {
                ll += model
                    .loglik(data.x.row_slice(n), &beta, data.covariate(n))
                    .ok_or_else(|| contract("the model has no tractable likelihood"))?;
            }
            let mut tape = Tape::new();
            let b = tape.constant(Tensor::row(beta));
            let x = tape.constant(data_features.clone());
            let cov = data.covariates.as_ref().map(|c| tape.constant(c.clone()));
            let f = model.ratio_features(&mut tape, x, None, BetaInput::Shared(b), cov);
            let r = ratio.logits(&mut tape, f)?;
            Ok(ll - tape.value(r).sum())
        })
        .collect()
}

fn summarize(iteration: usize, diffs: &[f64]) -> StabilityRecord {
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let variance = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    StabilityRecord {
        iteration,
        variance,
        mean_diff: mean,
    }
}

/// Runs one regime and checkpoints the difference variance. For
/// `FrozenPosterior`, `frozen_q` supplies the approximation.
pub fn ratio_stability(
    model: &dyn HimModel,
    data: &Dataset,
    regime: StabilityRegime,
    cfg: &StabilityConfig,
    lfvi: LfviConfig,
    frozen_q: Option<GlobalApprox>,
) -> Result<StabilityTrace> {
    if model.local_dim() > 0 {
        return Err(contract("stability tracing needs a model without local latents"));
    }
    if cfg.checkpoint_every == 0 || cfg.n_draws < 2 {
        return Err(contract("checkpoint_every must be positive and n_draws at least 2"));
    }
    let mut state = match regime {
        StabilityRegime::FrozenPosterior => {
            let q = frozen_q.ok_or_else(|| contract("FrozenPosterior needs a frozen q"))?;
            let root = RngStream::new(lfvi.seed, 0);
            let ratio = RatioEstimator::new(
                model.ratio_input_dim(),
                &lfvi.ratio,
                lfvi.loss,
                &mut root.derive(&[0, 2]),
            )?;
            Lfvi::with_state(model, data, lfvi, q, None, ratio)?
        }
        _ => Lfvi::new(model, data, lfvi)?,
    };
    let probe_root = RngStream::new(state.cfg.seed, 7);
    let mut records = Vec::new();
    let checkpoint = |state: &Lfvi, step: usize| -> Result<StabilityRecord> {
        let mut rng = probe_root.split(step as u64);
        let d = stability_diffs(
            model,
            data,
            state.data_features(),
            &state.q_global,
            &state.ratio,
            cfg.n_draws,
            &mut rng,
        )?;
        Ok(summarize(step, &d))
    };
    records.push(checkpoint(&state, 0)?);
    for step in 1..=cfg.n_steps {
        match regime {
            StabilityRegime::Joint => {
                state.iterate()?;
            }
            _ => {
                state.ratio_step()?;
            }
        }
        if step % cfg.checkpoint_every == 0 {
            records.push(checkpoint(&state, step)?);
        }
    }
    Ok(StabilityTrace { regime, records })
}
