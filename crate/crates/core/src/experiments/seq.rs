//! Variational EM for the stochastic RNN on grammar sequences: a point
//! mass over the network weights under a flat prior, fitted by LFVI, then
//! scored by the grammar-validity rate of generated sequences.

use crate::error::Result;
use crate::lfvi::{Lfvi, LfviConfig, TraceRecord};
use crate::models::grammar::{cfg_sample, cfg_valid, to_string};
use crate::models::rnn::{RnnParams, StochasticRnnModel};
use crate::models::Dataset;
use crate::ndcore::{InitMode, RngStream, Tensor};
use crate::variational::GlobalKind;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeqConfig {
    pub hidden_dim: usize,
    pub noise_width: usize,
    pub noise_scale: f64,
    pub max_len: usize,
    /// Training sequences drawn from the grammar.
    pub n_train: usize,
    /// Sequences generated for scoring.
    pub n_generate: usize,
    pub lfvi: LfviConfig,
}

impl Default for SeqConfig {
    fn default() -> Self {
        let mut lfvi = LfviConfig {
            n_iterations: 1500,
            ..LfviConfig::default()
        };
        lfvi.global.family = GlobalKind::PointMass;
        lfvi.global.init_jitter = 0.0;
        Self {
            hidden_dim: 32,
            noise_width: 4,
            noise_scale: 1.0,
            max_len: crate::models::grammar::DEFAULT_MAX_LEN,
            n_train: 1000,
            n_generate: 500,
            lfvi,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeqReport {
    pub validity_rate: f64,
    pub untrained_validity_rate: f64,
    pub n_generated: usize,
    pub iterations: usize,
    pub skipped_steps: usize,
    pub diverged: Option<String>,
}

pub struct SeqOutcome {
    pub report: SeqReport,
    /// Generated sequences after training.
    pub samples: Vec<String>,
    pub untrained_samples: Vec<String>,
    pub trace: Vec<TraceRecord>,
}

/// Generates `n` sequences; sequence `i` uses stream `i` of `rng`.
pub fn generate(model: &StochasticRnnModel, params: &RnnParams, n: usize, rng: &RngStream) -> Result<Vec<Vec<usize>>> {
    (0..n)
        .map(|i| model.rnn_generate(params, &mut rng.split(i as u64), model.max_len))
        .collect()
}

pub fn validity_rate(seqs: &[Vec<usize>], max_len: usize) -> f64 {
    seqs.iter().filter(|s| cfg_valid(s, max_len)).count() as f64 / seqs.len().max(1) as f64
}

/// Draws the training set, fits, and compares validity before and after.
pub fn run_seq(cfg: &SeqConfig) -> Result<SeqOutcome> {
    let model = StochasticRnnModel::new(cfg.hidden_dim, cfg.noise_width, cfg.noise_scale, cfg.max_len)?;
    let seed = cfg.lfvi.seed;
    let mut data_rng = RngStream::new(seed, 30);
    let rows: Vec<Vec<f64>> = (0..cfg.n_train)
        .map(|_| model.encode(&cfg_sample(&mut data_rng, cfg.max_len)))
        .collect();
    let data = Dataset::new(Tensor::from_rows(&rows)?, None)?;

    let mut l = cfg.lfvi.clone();
    if l.global.init_loc.is_none() {
        let init = model.init_params(InitMode::Scaled, &mut RngStream::new(seed, 40));
        l.global.init_loc = Some(init.flatten());
    }
    let state = Lfvi::new(&model, &data, l)?;
    let untrained = model.params_from_flat(state.q_global.loc.data())?;
    let fit = state.fit()?;
    let trained = model.params_from_flat(fit.q_global.loc.data())?;

    let gen_rng = RngStream::new(seed, 60);
    let before = generate(&model, &untrained, cfg.n_generate, &gen_rng)?;
    let after = generate(&model, &trained, cfg.n_generate, &gen_rng)?;
    Ok(SeqOutcome {
        report: SeqReport {
            validity_rate: validity_rate(&after, cfg.max_len),
            untrained_validity_rate: validity_rate(&before, cfg.max_len),
            n_generated: cfg.n_generate,
            iterations: fit.trace.len(),
            skipped_steps: fit.skipped_steps,
            diverged: fit.diverged,
        },
        samples: after.iter().map(|s| to_string(s)).collect(),
        untrained_samples: before.iter().map(|s| to_string(s)).collect(),
        trace: fit.trace,
    })
}
