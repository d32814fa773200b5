//! Subcommand execution and artifact writing.

use crate::config::{DiagnoseKind, Experiment, Method, ModelId, RunConfig};
use lfvi::abc::{
    mcmc_abc, rejection_abc, smc_abc, AbcOutput, AcceptanceSummary, DatasetSimulator, SummaryKind,
};
use lfvi::diagnostics::{
    metrics_meanfield, metrics_samples, noise_invert, ratio_stability, weighted_quantile,
    StabilityRegime,
};
use lfvi::experiments::classify::run_classify;
use lfvi::experiments::seq::run_seq;
use lfvi::io::{parse_matrix_csv, posterior_draws, read_labeled_csv, write_jsonl, write_run_log};
use lfvi::lfvi::lfvi_fit;
use lfvi::models::hier_normal::HierNormalModel;
use lfvi::models::linreg::LinregModel;
use lfvi::models::lotka_volterra::{lv_default_prior, LotkaVolterraModel};
use lfvi::models::normal_normal::NormalNormalModel;
use lfvi::models::{simulate_dataset, Dataset, HimModel};
use lfvi::ndcore::{RngStream, Tape, Tensor, Var};
use lfvi::variational::{GlobalApprox, GlobalKind};
use lfvi::Error;
use serde::Serialize;
use serde_json::json;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// What ended a run that did not succeed, mapped to an exit code.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical divergence: {0}")]
    Divergence(String),
    #[error("{0}")]
    Failure(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Failure(_) => 1,
            RunError::Config(_) => 2,
            RunError::Divergence(_) => 3,
        }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::Contract(m) => RunError::Config(m),
            Error::Divergence(m) | Error::NonFinite(m) => RunError::Divergence(m),
            other => RunError::Failure(other.to_string()),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Failure(format!("io: {e}"))
    }
}

type Result<T> = std::result::Result<T, RunError>;

pub enum Model {
    NormalNormal(NormalNormalModel),
    Linreg(LinregModel),
    HierNormal(HierNormalModel),
    LotkaVolterra(LotkaVolterraModel),
}

impl Model {
    pub fn build(cfg: &RunConfig) -> Result<Model> {
        let p = &cfg.models;
        Ok(match cfg.model {
            ModelId::NormalNormal => {
                let n = &p.normal_normal;
                Model::NormalNormal(NormalNormalModel::new(n.prior_mean, n.prior_sd, n.lik_sd)?)
            }
            ModelId::Linreg => {
                let l = &p.linreg;
                let mut m = LinregModel::new(l.feature_dim, l.output_dim, l.prior_sd, l.noise_sd)?;
                m.features = l.features;
                Model::Linreg(m)
            }
            ModelId::HierNormal => {
                let h = &p.hier_normal;
                if !(h.prior_sd > 0.0 && h.tau > 0.0 && h.sigma > 0.0) {
                    return Err(RunError::Config("hier_normal scales must be positive".into()));
                }
                Model::HierNormal(HierNormalModel::new(h.prior_sd, h.tau, h.sigma))
            }
            ModelId::LotkaVolterra => {
                let c = p.lotka_volterra.clone();
                let prior = p.lv_prior.clone().unwrap_or_else(|| lv_default_prior(c.n_params()));
                Model::LotkaVolterra(LotkaVolterraModel::new(c, prior, p.lv_features)?)
            }
        })
    }

    pub fn him(&self) -> &dyn HimModel {
        match self {
            Model::NormalNormal(m) => m,
            Model::Linreg(m) => m,
            Model::HierNormal(m) => m,
            Model::LotkaVolterra(m) => m,
        }
    }

    /// The exact posterior as a mean-field Gaussian, where one exists.
    fn exact_posterior(&self, data: &Dataset) -> Result<Option<GlobalApprox>> {
        Ok(match self {
            Model::NormalNormal(m) => {
                let (mean, var) = m.posterior(data.x.data());
                Some(GlobalApprox::meanfield(GlobalKind::MeanfieldNormal, vec![mean], vec![var.sqrt()])?)
            }
            Model::Linreg(m) => {
                let post = m.posterior(data)?;
                Some(GlobalApprox::meanfield(
                    GlobalKind::MeanfieldNormal,
                    post.mean.clone(),
                    post.marginal_sd(),
                )?)
            }
            _ => None,
        })
    }
}

/// A dataset together with the `β` that produced it, when known.
pub struct Loaded {
    pub data: Dataset,
    pub truth: Option<Vec<f64>>,
}

fn simulation_beta(cfg: &RunConfig, model: &Model) -> Result<Vec<f64>> {
    let him = model.him();
    let beta = match (&cfg.data.beta, model) {
        (Some(b), _) => b.clone(),
        (None, Model::LotkaVolterra(m)) => m.cfg.beta.clone(),
        (None, _) => him.prior_sample(&mut RngStream::new(cfg.seed(), 20)),
    };
    if beta.len() != him.global_dim() {
        return Err(RunError::Config(format!(
            "data.beta has {} entries, the model has {} global parameters",
            beta.len(),
            him.global_dim()
        )));
    }
    Ok(beta)
}

/// Simulates the configured dataset. Streams depend only on the seed, so
/// `simulate` and `infer` without a data file see the same data.
pub fn simulate(cfg: &RunConfig, model: &Model) -> Result<Loaded> {
    let beta = simulation_beta(cfg, model)?;
    let n = cfg
        .data
        .n
        .unwrap_or(if matches!(model, Model::LotkaVolterra(_)) { 1 } else { 100 });
    let rng = RngStream::new(cfg.seed(), 21);
    let data = match model {
        Model::Linreg(m) => m.generate(n, &beta, &mut rng.clone())?,
        _ => simulate_dataset(model.him(), &beta, n, None, &rng)?,
    };
    Ok(Loaded {
        data,
        truth: Some(beta),
    })
}

/// Header of the data matrix: outputs `x0..`, then covariates `c0..`.
fn data_header(model: &dyn HimModel) -> Vec<String> {
    (0..model.data_dim())
        .map(|i| format!("x{i}"))
        .chain((0..model.covariate_dim()).map(|i| format!("c{i}")))
        .collect()
}

pub fn data_to_csv(model: &dyn HimModel, data: &Dataset) -> String {
    let mut s = data_header(model).join(",") + "\n";
    for n in 0..data.len() {
        let mut row: Vec<String> = data.x.row_slice(n).iter().map(|v| v.to_string()).collect();
        if let Some(c) = data.covariate(n) {
            row.extend(c.iter().map(|v| v.to_string()));
        }
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}

fn read_data(path: &Path, model: &dyn HimModel) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let (_, m) = parse_matrix_csv(&text).map_err(|e| RunError::Failure(format!("{}: {e}", path.display())))?;
    let (d, c) = (model.data_dim(), model.covariate_dim());
    if m.cols() != d + c {
        return Err(RunError::Config(format!(
            "{} has {} columns, the model expects {} outputs and {} covariates",
            path.display(),
            m.cols(),
            d,
            c
        )));
    }
    let split = |lo: usize, hi: usize| {
        let rows: Vec<Vec<f64>> = (0..m.rows()).map(|r| m.row_slice(r)[lo..hi].to_vec()).collect();
        Tensor::from_rows(&rows)
    };
    let x = split(0, d)?;
    let cov = if c > 0 { Some(split(d, d + c)?) } else { None };
    Ok(Dataset::new(x, cov)?)
}

pub fn load(cfg: &RunConfig, model: &Model) -> Result<Loaded> {
    match &cfg.data.path {
        Some(p) => Ok(Loaded {
            data: read_data(p, model.him())?,
            truth: cfg.data.beta.clone(),
        }),
        None => simulate(cfg, model),
    }
}

fn write(out: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(out.join(name), contents)?;
    Ok(())
}

fn write_json<T: Serialize>(out: &Path, name: &str, v: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(v).map_err(|e| RunError::Failure(e.to_string()))?;
    write(out, name, s + "\n")
}

/// Runs the configured experiment, writing artifacts under `cfg.out`.
pub fn run(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out)?;
    write(&cfg.out, "resolved_config.json", cfg.to_json())?;
    match cfg.experiment() {
        Experiment::Simulate => run_simulate(cfg),
        Experiment::Infer => run_infer(cfg),
        Experiment::Classify => run_classify_cmd(cfg),
        Experiment::Seq => run_seq_cmd(cfg),
        Experiment::Diagnose => run_diagnose(cfg),
    }
}

fn run_simulate(cfg: &RunConfig) -> Result<()> {
    let model = Model::build(cfg)?;
    let loaded = simulate(cfg, &model)?;
    write(&cfg.out, "data.csv", data_to_csv(model.him(), &loaded.data))?;
    write_json(&cfg.out, "truth.json", &json!({ "beta": loaded.truth }))?;
    if let Model::LotkaVolterra(m) = &model {
        for n in 0..loaded.data.len() {
            let s = m.series(loaded.data.x.row_slice(n));
            write(&cfg.out, &format!("series_{n:03}.csv"), s.to_csv())?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct InferMetrics {
    method: Method,
    mean: Vec<f64>,
    ci95: Option<Vec<(f64, f64)>>,
    truth: Option<Vec<f64>>,
    ci95_contains: Option<Vec<bool>>,
    nlp_true: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scale: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    acceptance: Option<AcceptanceSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    skipped_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    diverged: Option<String>,
}

fn run_infer(cfg: &RunConfig) -> Result<()> {
    let model = Model::build(cfg)?;
    let loaded = load(cfg, &model)?;
    let truth = cfg.infer.truth.clone().or(loaded.truth);
    if let Some(t) = &truth {
        if t.len() != model.him().global_dim() {
            return Err(RunError::Config("infer.truth does not match the model dimension".into()));
        }
    }
    match cfg.method {
        Method::Lfvi => infer_lfvi(cfg, &model, &loaded.data, truth),
        m => infer_abc(cfg, m, &model, &loaded.data, truth),
    }
}

fn infer_lfvi(cfg: &RunConfig, model: &Model, data: &Dataset, truth: Option<Vec<f64>>) -> Result<()> {
    let fit = lfvi_fit(model.him(), data, cfg.lfvi.clone())?;
    let q = &fit.q_global;
    let mut draws_rng = RngStream::new(cfg.seed(), 50);
    let draws = posterior_draws(q, cfg.infer.n_posterior_draws, &mut draws_rng);
    let mut posterior = Vec::new();
    write_jsonl(&mut posterior, &draws)?;
    write(&cfg.out, "posterior.jsonl", posterior)?;
    let mut log = Vec::new();
    write_run_log(&mut log, &fit.trace)?;
    write(&cfg.out, "run_log.jsonl", log)?;

    let finite = q.is_finite();
    let point = q.kind == GlobalKind::PointMass;
    let (ci95, ci95_contains, nlp_true) = match (&truth, point || !finite) {
        (Some(t), false) => {
            let m = metrics_meanfield(q, t)?;
            (Some(m.ci95), Some(m.ci95_contains), Some(m.nlp_true))
        }
        (None, false) => {
            let (lo, hi) = (q.quantile(0.025), q.quantile(0.975));
            (Some(lo.into_iter().zip(hi).collect()), None, None)
        }
        _ => (None, None, None),
    };
    let metrics = InferMetrics {
        method: Method::Lfvi,
        mean: q.mean(),
        scale: (!point).then(|| q.scale()),
        ci95,
        truth,
        ci95_contains,
        nlp_true,
        acceptance: None,
        skipped_steps: Some(fit.skipped_steps),
        diverged: fit.diverged.clone(),
    };
    write_json(&cfg.out, "metrics.json", &metrics)?;
    match fit.diverged {
        Some(m) => Err(RunError::Divergence(m)),
        None => Ok(()),
    }
}

fn infer_abc(
    cfg: &RunConfig,
    method: Method,
    model: &Model,
    data: &Dataset,
    truth: Option<Vec<f64>>,
) -> Result<()> {
    let summary = cfg.infer.summary.unwrap_or(match model {
        Model::LotkaVolterra(_) => SummaryKind::LotkaVolterra,
        _ => SummaryKind::SampleMean,
    });
    let sim = DatasetSimulator::for_data(model.him(), data, summary);
    let observed = sim.observed_summary(data);
    let rng = RngStream::new(cfg.seed(), 51);
    let mut log = String::new();
    let line = |log: &mut String, v: serde_json::Value| {
        log.push_str(&v.to_string());
        log.push('\n');
    };
    let (output, posterior): (AbcOutput, String) = match method {
        Method::RejectionAbc => {
            let o = rejection_abc(&sim, &observed, &cfg.abc, &rng)?;
            line(&mut log, json!({ "tolerance": cfg.abc.tolerance, "acceptance": o.summary }));
            let p = o.to_jsonl();
            (o, p)
        }
        Method::McmcAbc => {
            let o = mcmc_abc(&sim, &observed, &cfg.abc, &rng)?;
            line(&mut log, json!({ "tolerance": cfg.abc.tolerance, "acceptance": o.summary }));
            let p = o.to_jsonl();
            (o, p)
        }
        Method::SmcAbc => {
            let o = smc_abc(&sim, &observed, &cfg.abc, &rng)?;
            for (g, gen) in o.generations.iter().enumerate() {
                line(
                    &mut log,
                    json!({ "generation": g, "tolerance": gen.tolerance, "acceptance": gen.summary, "ess": gen.ess }),
                );
            }
            if let Some(g) = o.collapsed {
                line(&mut log, json!({ "collapsed_at_generation": g }));
            }
            (o.final_output(), o.to_jsonl())
        }
        Method::Lfvi => unreachable!("handled by infer_lfvi"),
    };
    write(&cfg.out, "posterior.jsonl", posterior)?;
    write(&cfg.out, "run_log.jsonl", log)?;

    let betas: Vec<Vec<f64>> = output.samples.iter().map(|s| s.beta.clone()).collect();
    let weights: Vec<f64> = output.samples.iter().map(|s| s.weight).collect();
    let (ci95, ci95_contains, nlp_true) = match &truth {
        Some(t) if betas.len() >= 100 => {
            let m = metrics_samples(&betas, Some(&weights), t)?;
            (Some(m.ci95), Some(m.ci95_contains), Some(m.nlp_true))
        }
        _ => {
            let total: f64 = weights.iter().sum();
            let w: Vec<f64> = weights.iter().map(|w| w / total).collect();
            let ci = (0..model.him().global_dim())
                .map(|j| {
                    let col: Vec<f64> = betas.iter().map(|b| b[j]).collect();
                    (weighted_quantile(&col, &w, 0.025), weighted_quantile(&col, &w, 0.975))
                })
                .collect();
            (Some(ci), None, None)
        }
    };
    let metrics = InferMetrics {
        method,
        mean: output.mean(),
        scale: None,
        ci95,
        truth,
        ci95_contains,
        nlp_true,
        acceptance: Some(output.summary),
        skipped_steps: None,
        diverged: None,
    };
    write_json(&cfg.out, "metrics.json", &metrics)
}

fn run_classify_cmd(cfg: &RunConfig) -> Result<()> {
    let read = |p: &Option<std::path::PathBuf>| -> Result<_> {
        let p = p.as_ref().expect("validated");
        read_labeled_csv(p).map_err(|e| RunError::Failure(format!("{}: {e}", p.display())))
    };
    let (train, test) = (read(&cfg.data.train)?, read(&cfg.data.test)?);
    let report = run_classify(&train, &test, &cfg.classify)?;
    write_json(&cfg.out, "classify.json", &report)?;
    match report.diverged {
        Some(m) => Err(RunError::Divergence(m)),
        None => Ok(()),
    }
}

fn run_seq_cmd(cfg: &RunConfig) -> Result<()> {
    let o = run_seq(&cfg.seq)?;
    let lines = |v: &[String]| v.iter().map(|s| s.clone() + "\n").collect::<String>();
    write(&cfg.out, "sequences.txt", lines(&o.samples))?;
    write(&cfg.out, "untrained_sequences.txt", lines(&o.untrained_samples))?;
    let mut log = Vec::new();
    write_run_log(&mut log, &o.trace)?;
    write(&cfg.out, "run_log.jsonl", log)?;
    write_json(&cfg.out, "seq.json", &o.report)?;
    match o.report.diverged {
        Some(m) => Err(RunError::Divergence(m)),
        None => Ok(()),
    }
}

fn regime_name(r: StabilityRegime) -> &'static str {
    match r {
        StabilityRegime::Joint => "joint",
        StabilityRegime::FrozenRandom => "frozen_random",
        StabilityRegime::FrozenPosterior => "frozen_posterior",
    }
}

fn run_diagnose(cfg: &RunConfig) -> Result<()> {
    let model = Model::build(cfg)?;
    let loaded = load(cfg, &model)?;
    match cfg.diagnose.kind {
        DiagnoseKind::Stability => {
            let exact = model.exact_posterior(&loaded.data)?;
            if exact.is_none() {
                return Err(RunError::Config(
                    "stability tracing needs a model with an exact likelihood: normal-normal or linreg".into(),
                ));
            }
            for &regime in &cfg.diagnose.regimes {
                let trace = ratio_stability(
                    model.him(),
                    &loaded.data,
                    regime,
                    &cfg.diagnose.stability,
                    cfg.lfvi.clone(),
                    exact.clone(),
                )?;
                write(&cfg.out, &format!("stability_{}.csv", regime_name(regime)), trace.to_csv())?;
            }
            Ok(())
        }
        DiagnoseKind::NoiseInversion => {
            let beta = loaded.truth.clone().ok_or_else(|| {
                RunError::Config("noise inversion needs `data.beta` when data come from a file".into())
            })?;
            invert_datum(cfg, &model, &loaded.data, &beta)
        }
    }
}

/// Recovers the noise of one datum. The simulators of the supported models
/// are affine in the noise, so `g(ε) = g(0) + ε J` is recorded exactly.
fn invert_datum(cfg: &RunConfig, model: &Model, data: &Dataset, beta: &[f64]) -> Result<()> {
    if !matches!(model, Model::NormalNormal(_) | Model::Linreg(_)) {
        return Err(RunError::Config(
            "noise inversion supports the normal-normal and linreg models".into(),
        ));
    }
    let n = cfg.diagnose.datum;
    if n >= data.len() {
        return Err(RunError::Config(format!("diagnose.datum {n} is out of range")));
    }
    let him = model.him();
    let k = him.noise_dim();
    let cov = data.covariate(n);
    let g0 = him.simulate_local(&vec![0.0; k], &[], beta, cov);
    let d = g0.len();
    let mut jac = Vec::with_capacity(k * d);
    for i in 0..k {
        let mut e = vec![0.0; k];
        e[i] = 1.0;
        let gi = him.simulate_local(&e, &[], beta, cov);
        jac.extend(gi.iter().zip(&g0).map(|(a, b)| a - b));
    }
    let jac = Tensor::matrix(k, d, jac);
    let g = |tape: &mut Tape, eps: Var| {
        let j = tape.constant(jac.clone());
        let b = tape.constant(Tensor::row(g0.clone()));
        let lin = tape.matmul(eps, j);
        tape.add(lin, b)
    };
    let target = data.x.row_slice(n).to_vec();
    let inv = noise_invert(&g, &vec![0.0; k], &target, &cfg.diagnose.invert)?;
    let mut csv = String::from("iteration,residual\n");
    for (i, r) in inv.residuals.iter().enumerate() {
        let _ = writeln!(csv, "{i},{r}");
    }
    write(&cfg.out, "inversion.csv", csv)?;
    write_json(
        &cfg.out,
        "inversion.json",
        &json!({ "datum": n, "eps": inv.eps, "converged": inv.converged, "iterations": inv.iterations }),
    )
}
