//! Binary classification with a Bayesian GAN (implicit likelihood, fitted
//! by LFVI) or a Bayesian neural network (Bernoulli likelihood, fitted by
//! reparameterised VI), each with a mean-field or point-mass posterior.

use crate::error::{contract, Result};
use crate::io::LabeledData;
use crate::lfvi::{Lfvi, LfviConfig};
use crate::models::gan_classifier::{predictive_label, GanClassifierModel, GanRatioFeatures};
use crate::models::{Dataset, Prior};
use crate::ndcore::{
    clip_grad_norm, mlp_apply, sigmoid, Activation, AdamState, InitMode, Mlp, Normalize,
    RngStream, StepOutcome, Tape, Tensor,
};
use crate::variational::{entropy_term, GlobalApprox, GlobalKind};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    BayesianGan,
    BayesianNn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Vi,
    Map,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifyConfig {
    pub kind: ClassifierKind,
    pub method: FitMethod,
    /// Hidden width of the single-hidden-layer network.
    pub hidden: usize,
    pub normalize: Normalize,
    pub ratio_features: GanRatioFeatures,
    /// Standardize covariates with training-set statistics.
    pub standardize: bool,
    /// Parameter draws used at prediction time (ignored for MAP).
    pub n_param_draws: usize,
    /// Noise draws per parameter draw in the GAN majority vote.
    pub n_noise_draws: usize,
    /// Optimisation settings. For the Bayesian NN only `n_iterations`,
    /// `batch_size`, `mc_samples`, `optimizer` and `clip_norm` are used.
    pub lfvi: LfviConfig,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            kind: ClassifierKind::BayesianGan,
            method: FitMethod::Vi,
            hidden: 16,
            normalize: Normalize::None,
            ratio_features: GanRatioFeatures::Hidden,
            standardize: true,
            n_param_draws: 50,
            n_noise_draws: 20,
            lfvi: LfviConfig {
                n_iterations: 3000,
                ..LfviConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyReport {
    pub kind: ClassifierKind,
    pub method: FitMethod,
    pub n_train: usize,
    pub n_test: usize,
    pub train_error: f64,
    pub test_error: f64,
    pub iterations: usize,
    pub skipped_steps: usize,
    pub diverged: Option<String>,
}

/// Final posterior over network parameters plus run bookkeeping.
pub struct ClassifierFit {
    pub q: GlobalApprox,
    pub iterations: usize,
    pub skipped_steps: usize,
    pub diverged: Option<String>,
    pub trace: Vec<crate::lfvi::TraceRecord>,
}

fn error_rate(pred: &[f64], labels: &[f64]) -> f64 {
    pred.iter().zip(labels).filter(|(p, y)| p != y).count() as f64 / labels.len() as f64
}

fn param_draws(q: &GlobalApprox, n: usize, rng: &mut RngStream) -> Vec<Vec<f64>> {
    if q.kind == GlobalKind::PointMass {
        vec![q.loc.data().to_vec()]
    } else {
        (0..n).map(|_| q.sample_value(rng)).collect()
    }
}

fn gan_model(cfg: &ClassifyConfig, dim: usize) -> Result<GanClassifierModel> {
    GanClassifierModel::new(dim, cfg.hidden, cfg.normalize, cfg.ratio_features)
}

fn bnn_net(cfg: &ClassifyConfig, dim: usize) -> Mlp {
    Mlp::zeros(&[dim, cfg.hidden, 1], Activation::Relu, cfg.normalize)
}

fn lfvi_cfg(cfg: &ClassifyConfig, init_loc: Vec<f64>) -> LfviConfig {
    let mut l = cfg.lfvi.clone();
    l.global.family = match cfg.method {
        FitMethod::Vi => GlobalKind::MeanfieldNormal,
        FitMethod::Map => GlobalKind::PointMass,
    };
    if l.global.init_loc.is_none() {
        l.global.init_loc = Some(init_loc);
    }
    l
}

/// Fits the Bayesian GAN by LFVI on `train`.
pub fn fit_gan(train: &LabeledData, cfg: &ClassifyConfig) -> Result<(GanClassifierModel, ClassifierFit)> {
    let model = gan_model(cfg, train.features.cols())?;
    let data = Dataset::new(
        Tensor::matrix(train.len(), 1, train.labels.clone()),
        Some(train.features.clone()),
    )?;
    let init = model.init_theta(InitMode::Scaled, &mut RngStream::new(cfg.lfvi.seed, 40));
    let fit = Lfvi::new(&model, &data, lfvi_cfg(cfg, init))?.fit()?;
    Ok((
        model,
        ClassifierFit {
            q: fit.q_global,
            iterations: fit.trace.len(),
            skipped_steps: fit.skipped_steps,
            diverged: fit.diverged,
            trace: fit.trace,
        },
    ))
}

/// Fits the Bayesian NN baseline: the ELBO with the exact Bernoulli
/// likelihood `log σ(y f(x))`, reparameterised through `q`.
pub fn fit_bnn(train: &LabeledData, cfg: &ClassifyConfig) -> Result<ClassifierFit> {
    let dim = train.features.cols();
    let net = bnn_net(cfg, dim);
    let layout = net.layout();
    let prior = Prior::standard_normal(layout.num_params());
    let l = lfvi_cfg(
        cfg,
        Mlp::new(
            &[dim, cfg.hidden, 1],
            Activation::Relu,
            cfg.normalize,
            InitMode::Scaled,
            &mut RngStream::new(cfg.lfvi.seed, 40),
        )
        .flatten(),
    );
    l.validate(train.len())?;
    let root = RngStream::new(l.seed, 0);
    let mut q = l.global.build(&prior, &mut root.derive(&[0, 0]))?;
    let mut opt = AdamState::new(l.optimizer, q.params());
    let n = train.len() as f64;
    let mut trace = Vec::with_capacity(l.n_iterations);
    let mut skipped = 0;
    for it in 0..l.n_iterations {
        let start = std::time::Instant::now();
        let mut rng = root.derive(&[3, it as u64]);
        let batch = rng.sample_indices(train.len(), l.batch_size);
        let mut tape = Tape::new();
        let params = q.on_tape(&mut tape, true);
        let x = tape.constant(train.features.select_rows(&batch));
        let y = tape.constant(Tensor::matrix(
            batch.len(),
            1,
            batch.iter().map(|&i| train.labels[i]).collect(),
        ));
        let mut total = None;
        for _ in 0..l.mc_samples {
            let delta = q.draw_delta(&mut rng);
            let draw = q.draw(&mut tape, &params, &delta);
            let ent = entropy_term(&mut tape, &draw, &prior);
            let vars = layout.vars_from_flat(&mut tape, draw.beta, 0);
            let f = mlp_apply(&mut tape, &vars, x)?;
            let yf = tape.mul(f, y);
            let ll = tape.log_sigmoid(yf);
            let s = tape.sum(ll);
            let s = tape.scale(s, n / batch.len() as f64);
            let v = tape.add(ent, s);
            total = Some(match total {
                Some(t) => tape.add(t, v),
                None => v,
            });
        }
        let elbo = tape.scale(total.expect("mc_samples > 0"), 1.0 / l.mc_samples as f64);
        let value = tape.value(elbo).item();
        let mut grads = tape.grad(elbo, &params)?;
        for g in grads.iter_mut() {
            *g = g.map(|v| -v);
        }
        if it < l.clip_iterations {
            clip_grad_norm(&mut grads, l.clip_norm);
        }
        if !value.is_finite() || opt.step(&mut q.params_mut(), &grads)? == StepOutcome::Rejected {
            skipped += 1;
        }
        trace.push(crate::lfvi::TraceRecord {
            iteration: it,
            ratio_loss: f64::NAN,
            surrogate_elbo: value,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok(ClassifierFit {
        q,
        iterations: l.n_iterations,
        skipped_steps: skipped,
        diverged: None,
        trace,
    })
}

/// Predicted ±1 labels under the fitted posterior.
pub fn predict(
    cfg: &ClassifyConfig,
    gan: Option<&GanClassifierModel>,
    q: &GlobalApprox,
    x: &Tensor,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let thetas = param_draws(q, cfg.n_param_draws, rng);
    match cfg.kind {
        ClassifierKind::BayesianGan => {
            let model = gan.ok_or_else(|| contract("GAN prediction needs the model"))?;
            let per_theta = (cfg.n_noise_draws * cfg.n_param_draws / thetas.len()).max(1);
            (0..x.rows())
                .map(|r| Ok(predictive_label(model, &thetas, x.row_slice(r), per_theta, rng)?.0))
                .collect()
        }
        ClassifierKind::BayesianNn => {
            let mut net = bnn_net(cfg, x.cols());
            let mut prob = vec![0.0; x.rows()];
            for th in &thetas {
                net.set_from_flat(th)?;
                for (p, f) in prob.iter_mut().zip(net.forward(x)?.data()) {
                    *p += sigmoid(*f) / thetas.len() as f64;
                }
            }
            Ok(prob.iter().map(|p| if *p >= 0.5 { 1.0 } else { -1.0 }).collect())
        }
    }
}

/// Trains on `train` and reports train and test error.
pub fn run_classify(train: &LabeledData, test: &LabeledData, cfg: &ClassifyConfig) -> Result<ClassifyReport> {
    if train.features.cols() != test.features.cols() {
        return Err(contract("train and test feature widths differ"));
    }
    let (train, test) = if cfg.standardize {
        let s = train.column_stats();
        (train.standardized(&s), test.standardized(&s))
    } else {
        (train.clone(), test.clone())
    };
    let (gan, fit) = match cfg.kind {
        ClassifierKind::BayesianGan => {
            let (m, f) = fit_gan(&train, cfg)?;
            (Some(m), f)
        }
        ClassifierKind::BayesianNn => (None, fit_bnn(&train, cfg)?),
    };
    let mut rng = RngStream::new(cfg.lfvi.seed, 50);
    let train_pred = predict(cfg, gan.as_ref(), &fit.q, &train.features, &mut rng)?;
    let test_pred = predict(cfg, gan.as_ref(), &fit.q, &test.features, &mut rng)?;
    Ok(ClassifyReport {
        kind: cfg.kind,
        method: cfg.method,
        n_train: train.len(),
        n_test: test.len(),
        train_error: error_rate(&train_pred, &train.labels),
        test_error: error_rate(&test_pred, &test.labels),
        iterations: fit.iterations,
        skipped_steps: fit.skipped_steps,
        diverged: fit.diverged,
    })
}
