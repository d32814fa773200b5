//! Run configuration: a JSON file merged with dot-path flag overrides,
//! validated against the typed schema and echoed back with every default
//! filled in.

use lfvi::abc::{AbcConfig, SummaryKind};
use lfvi::diagnostics::{InvertConfig, StabilityConfig, StabilityRegime};
use lfvi::experiments::classify::ClassifyConfig;
use lfvi::experiments::seq::SeqConfig;
use lfvi::lfvi::LfviConfig;
use lfvi::models::linreg::LinregFeatures;
use lfvi::models::lotka_volterra::{LotkaVolterraConfig, LvFeatures};
use lfvi::models::Prior;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed JSON in {origin}: {message}")]
    Json { origin: String, message: String },
    #[error("unknown key `{key}` at `{path}`{}", suggestion(.nearest))]
    UnknownKey {
        path: String,
        key: String,
        nearest: Option<String>,
    },
    #[error("invalid value at `{path}`: {message}")]
    Invalid { path: String, message: String },
    #[error("bad command line: {0}")]
    Args(String),
    #[error("{0}")]
    Missing(String),
}

fn suggestion(nearest: &Option<String>) -> String {
    nearest
        .as_ref()
        .map(|n| format!("; did you mean `{n}`?"))
        .unwrap_or_default()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Simulate,
    Infer,
    Classify,
    Seq,
    Diagnose,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ModelId {
    #[default]
    NormalNormal,
    Linreg,
    HierNormal,
    LotkaVolterra,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Lfvi,
    RejectionAbc,
    McmcAbc,
    SmcAbc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormalNormalParams {
    pub prior_mean: f64,
    pub prior_sd: f64,
    pub lik_sd: f64,
}

impl Default for NormalNormalParams {
    fn default() -> Self {
        Self {
            prior_mean: 0.0,
            prior_sd: 1.0,
            lik_sd: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinregParams {
    pub feature_dim: usize,
    pub output_dim: usize,
    pub prior_sd: f64,
    pub noise_sd: f64,
    pub features: LinregFeatures,
}

impl Default for LinregParams {
    fn default() -> Self {
        Self {
            feature_dim: 1,
            output_dim: 2,
            prior_sd: 1.0,
            noise_sd: 1.0,
            features: LinregFeatures::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HierNormalParams {
    pub prior_sd: f64,
    pub tau: f64,
    pub sigma: f64,
}

impl Default for HierNormalParams {
    fn default() -> Self {
        Self {
            prior_sd: 1.0,
            tau: 1.0,
            sigma: 1.0,
        }
    }
}

/// Parameters of every model; only the section named by `model` is used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    pub normal_normal: NormalNormalParams,
    pub linreg: LinregParams,
    pub hier_normal: HierNormalParams,
    pub lotka_volterra: LotkaVolterraConfig,
    pub lv_features: LvFeatures,
    /// Prior over the Lotka-Volterra rates; the log-normal default when unset.
    pub lv_prior: Option<Prior>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Data matrix CSV; simulated from the seed when unset.
    pub path: Option<PathBuf>,
    /// Number of data points to simulate (1 for Lotka-Volterra, else 100).
    pub n: Option<usize>,
    /// Global parameters used for simulation; drawn from the prior when
    /// unset (the configured rates for Lotka-Volterra).
    pub beta: Option<Vec<f64>>,
    /// Labeled CSVs for `classify`.
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferConfig {
    /// Posterior draws written by the LFVI method.
    pub n_posterior_draws: usize,
    /// True parameters for the metrics; defaults to the simulation `β`.
    pub truth: Option<Vec<f64>>,
    /// ABC summaries; chosen from the model when unset.
    pub summary: Option<SummaryKind>,
}

impl Default for InferConfig {
    fn default() -> Self {
        Self {
            n_posterior_draws: 1000,
            truth: None,
            summary: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DiagnoseKind {
    #[default]
    Stability,
    NoiseInversion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnoseConfig {
    pub kind: DiagnoseKind,
    pub regimes: Vec<StabilityRegime>,
    pub stability: StabilityConfig,
    pub invert: InvertConfig,
    /// Row of the data matrix whose noise is recovered.
    pub datum: usize,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        Self {
            kind: DiagnoseKind::Stability,
            regimes: vec![
                StabilityRegime::Joint,
                StabilityRegime::FrozenRandom,
                StabilityRegime::FrozenPosterior,
            ],
            stability: StabilityConfig::default(),
            invert: InvertConfig::default(),
            datum: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub experiment: Option<Experiment>,
    /// Copied into every nested seed; required.
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub model: ModelId,
    pub models: ModelParams,
    pub data: DataConfig,
    pub method: Method,
    pub lfvi: LfviConfig,
    pub abc: AbcConfig,
    pub infer: InferConfig,
    pub classify: ClassifyConfig,
    pub seq: SeqConfig,
    pub diagnose: DiagnoseConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            seed: None,
            out: PathBuf::from("lfvi-out"),
            model: ModelId::default(),
            models: ModelParams::default(),
            data: DataConfig::default(),
            method: Method::default(),
            lfvi: LfviConfig::default(),
            abc: AbcConfig::default(),
            infer: InferConfig::default(),
            classify: ClassifyConfig::default(),
            seq: SeqConfig::default(),
            diagnose: DiagnoseConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn experiment(&self) -> Experiment {
        self.experiment.expect("validated")
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("validated")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// Checks the cross-field rules the schema cannot express.
    fn validate(&self) -> Result<(), ConfigError> {
        if self.seed.is_none() {
            return Err(ConfigError::Missing("`seed` is required".into()));
        }
        let experiment = self.experiment.ok_or_else(|| {
            ConfigError::Missing(
                "no experiment given; pass one of simulate, infer, classify, seq, diagnose".into(),
            )
        })?;
        let mut inputs: Vec<(&str, &Path)> = Vec::new();
        if let Some(p) = &self.data.path {
            inputs.push(("data.path", p));
        }
        if experiment == Experiment::Classify {
            for (key, p) in [("data.train", &self.data.train), ("data.test", &self.data.test)] {
                match p {
                    Some(p) => inputs.push((key, p)),
                    None => return Err(ConfigError::Missing(format!("classify needs `{key}`"))),
                }
            }
        }
        for (key, p) in inputs {
            if !p.is_file() {
                return Err(ConfigError::Invalid {
                    path: key.into(),
                    message: format!("input file {} does not exist", p.display()),
                });
            }
        }
        if self.data.n == Some(0) {
            return Err(ConfigError::Invalid {
                path: "data.n".into(),
                message: "must be positive".into(),
            });
        }
        Ok(())
    }

    fn propagate_seed(&mut self) {
        if let Some(s) = self.seed {
            self.lfvi.seed = s;
            self.classify.lfvi.seed = s;
            self.seq.lfvi.seed = s;
        }
    }
}

/// Splits `[EXPERIMENT] [--key value | --key=value]...` into the config
/// file (from `--config`) and `(dot path, raw value)` overrides.
pub fn split_args(args: &[String]) -> Result<(Option<PathBuf>, Vec<(String, String)>), ConfigError> {
    let mut config = None;
    let mut overrides = Vec::new();
    let mut it = args.iter().peekable();
    if let Some(first) = it.peek() {
        if !first.starts_with("--") {
            overrides.push(("experiment".to_string(), (*first).clone()));
            it.next();
        }
    }
    while let Some(a) = it.next() {
        let key = a
            .strip_prefix("--")
            .ok_or_else(|| ConfigError::Args(format!("expected `--key value`, found `{a}`")))?;
        let (key, value) = match key.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| ConfigError::Args(format!("`--{key}` needs a value")))?;
                (key.to_string(), v.clone())
            }
        };
        if key.is_empty() || key.split('.').any(str::is_empty) {
            return Err(ConfigError::Args(format!("malformed key `--{key}`")));
        }
        if key == "config" {
            config = Some(PathBuf::from(value));
        } else {
            overrides.push((key, value));
        }
    }
    Ok((config, overrides))
}

/// A flag value as JSON when it parses, else as a string, so that
/// `--lfvi.loss hinge` and `--lfvi.batch_size 64` both work.
fn flag_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), ConfigError> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = match cur {
            Value::Object(m) => m,
            other if other.is_null() => {
                *other = Value::Object(Map::new());
                other.as_object_mut().expect("just set")
            }
            _ => {
                return Err(ConfigError::Invalid {
                    path: parts[..i].join("."),
                    message: format!("cannot set `{path}` inside a non-object value"),
                })
            }
        };
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    unreachable!("paths are nonempty")
}

/// Pulls the key and the candidate list out of serde's unknown-field
/// message, returning the closest candidate.
fn nearest_key(message: &str) -> Option<(String, Option<String>)> {
    let rest = message.strip_prefix("unknown field `")?;
    let (key, tail) = rest.split_once('`')?;
    let candidates: Vec<&str> = tail.split('`').skip(1).step_by(2).collect();
    let nearest = candidates
        .iter()
        .map(|c| (strsim::jaro_winkler(key, c), *c))
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, c)| c.to_string());
    Some((key.to_string(), nearest))
}

fn deserialize(value: Value) -> Result<RunConfig, ConfigError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let message = e.inner().to_string();
        match nearest_key(&message) {
            Some((key, nearest)) => ConfigError::UnknownKey {
                path: if path == "." { key.clone() } else { path },
                key,
                nearest,
            },
            None => ConfigError::Invalid { path, message },
        }
    })
}

/// Merges the file and overrides, validates, and fills defaults.
pub fn parse_config(
    file: Option<&Path>,
    overrides: &[(String, String)],
) -> Result<RunConfig, ConfigError> {
    let mut root = match file {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                path: p.to_path_buf(),
                source,
            })?;
            parse_json(&text, &p.display().to_string())?
        }
        None => Value::Object(Map::new()),
    };
    if !root.is_object() {
        return Err(ConfigError::Invalid {
            path: ".".into(),
            message: "the config must be a JSON object".into(),
        });
    }
    for (k, v) in overrides {
        set_path(&mut root, k, flag_value(v))?;
    }
    let mut cfg = deserialize(root)?;
    cfg.validate()?;
    cfg.propagate_seed();
    Ok(cfg)
}

pub fn parse_json(text: &str, origin: &str) -> Result<Value, ConfigError> {
    serde_json::from_str(text).map_err(|e| ConfigError::Json {
        origin: origin.to_string(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn parse(v: &[&str]) -> Result<RunConfig, ConfigError> {
        let (file, o) = split_args(&args(v))?;
        parse_config(file.as_deref(), &o)
    }

    #[test]
    fn defaults_are_materialized() {
        let c = parse(&["--experiment", "simulate", "--model", "lotka-volterra", "--seed", "1"]).unwrap();
        assert_eq!(c.experiment, Some(Experiment::Simulate));
        assert_eq!(c.model, ModelId::LotkaVolterra);
        let lv = &c.models.lotka_volterra;
        assert_eq!((lv.inner_dt, lv.record_every, lv.t_end), (0.1, 0.2, 30.0));
        assert_eq!(c.lfvi.seed, 1);
        assert_eq!(c.seq.lfvi.seed, 1);
    }

    #[test]
    fn positional_experiment_and_equals_syntax() {
        let c = parse(&["infer", "--seed=4", "--lfvi.batch_size=32", "--method", "smc-abc"]).unwrap();
        assert_eq!(c.experiment, Some(Experiment::Infer));
        assert_eq!(c.lfvi.batch_size, 32);
        assert_eq!(c.method, Method::SmcAbc);
    }

    #[test]
    fn flags_override_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"experiment": "infer", "seed": 2, "lfvi": {"loss": "log"}}"#).unwrap();
        let c = parse(&["--config", p.to_str().unwrap(), "--lfvi.loss", "hinge"]).unwrap();
        assert_eq!(c.lfvi.loss, lfvi::ratio::LossKind::Hinge);
        let c = parse(&["--config", p.to_str().unwrap()]).unwrap();
        assert_eq!(c.lfvi.loss, lfvi::ratio::LossKind::Log);
    }

    #[test]
    fn unknown_key_names_the_nearest() {
        match parse(&["simulate", "--seed", "1", "--lfvi.optimizer.learning_rat", "0.1"]) {
            Err(ConfigError::UnknownKey { key, nearest, path }) => {
                assert_eq!(key, "learning_rat");
                assert_eq!(nearest.as_deref(), Some("learning_rate"));
                assert!(path.starts_with("lfvi.optimizer"), "{path}");
            }
            other => panic!("{other:?}"),
        }
        match parse(&["simulate", "--seed", "1", "--lfvii.seed", "3"]) {
            Err(ConfigError::UnknownKey { nearest, .. }) => assert_eq!(nearest.as_deref(), Some("lfvi")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn type_mismatch_reports_the_path() {
        match parse(&["simulate", "--seed", "1", "--lfvi.batch_size", "many"]) {
            Err(ConfigError::Invalid { path, .. }) => assert_eq!(path, "lfvi.batch_size"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn seed_is_required() {
        assert!(matches!(parse(&["simulate"]), Err(ConfigError::Missing(_))));
    }

    #[test]
    fn missing_inputs_are_rejected() {
        let r = parse(&["infer", "--seed", "1", "--data.path", "/nonexistent/x.csv"]);
        assert!(matches!(r, Err(ConfigError::Invalid { .. })));
        assert!(matches!(parse(&["classify", "--seed", "1"]), Err(ConfigError::Missing(_))));
    }

    #[test]
    fn malformed_arguments() {
        assert!(split_args(&args(&["simulate", "--seed"])).is_err());
        assert!(split_args(&args(&["simulate", "seed", "1"])).is_err());
        assert!(split_args(&args(&["simulate", "--a..b", "1"])).is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = parse(&["diagnose", "--seed", "9", "--diagnose.kind", "noise-inversion"]).unwrap();
        let v = parse_json(&c.to_json(), "resolved").unwrap();
        let again = deserialize(v).unwrap();
        assert_eq!(again, c);
    }
}
