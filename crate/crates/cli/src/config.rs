//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is
//! optional; unknown or repeated keys are errors. All values are validated
//! when the file is parsed, before any command does work.

use std::fs;
use std::path::{Path, PathBuf};

use tlstm::simulator::{short_hash, SimulatorConfig, DIGITS};
use tlstm::trainer::{GradcheckConfig, ModelDims, ModelKind, OptimizerKind, Supervision, TrainConfig};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Root seeds of the repeated benchmark runs.
    pub seeds: Vec<u64>,
    pub n_train: usize,
    pub n_test: usize,
    pub simulator: SimulatorConfig,
    pub train: TrainConfig,
    pub models: Vec<ModelKind>,
    pub train_data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub gradcheck: GradcheckConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            seeds: vec![1, 2, 3],
            n_train: 2000,
            n_test: 500,
            simulator: SimulatorConfig::default(),
            train: TrainConfig {
                dims: ModelDims {
                    hidden: 64,
                    features: 64,
                    encoder_hidden: 128,
                    ..ModelDims::default()
                },
                learning_rate: 5e-3,
                epochs: 15,
                supervision: Supervision::AllSteps,
                ..TrainConfig::default()
            },
            models: ModelKind::ALL.to_vec(),
            train_data: None,
            test_data: None,
            out_dir: None,
            gradcheck: GradcheckConfig::default(),
        }
    }
}

/// Every accepted key, in the order used by [`ExperimentConfig::to_text`].
pub const KEYS: &[&str] = &[
    "seed",
    "seeds",
    "n_train",
    "n_test",
    "prob_0",
    "prob_6",
    "prob_8",
    "prob_3",
    "prob_9",
    "min_len",
    "max_len",
    "mean_len",
    "background",
    "ink",
    "noise_sigma",
    "models",
    "hidden",
    "features",
    "encoder_hidden",
    "learning_rate",
    "optimizer",
    "beta1",
    "beta2",
    "epsilon",
    "epochs",
    "batch_size",
    "delta_normalize",
    "delta_max",
    "supervision",
    "threshold",
    "train_data",
    "test_data",
    "out_dir",
    "gradcheck_sequences",
    "gradcheck_max_len",
    "gradcheck_hidden",
    "gradcheck_features",
    "gradcheck_encoder_hidden",
    "gradcheck_tolerance",
];

fn invalid(line: usize, key: &str, value: &str, why: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("line {line}: {key} = {value}: {why}"))
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> CliResult<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| invalid(line, key, value, e))
}

fn parse_bool(line: usize, key: &str, value: &str) -> CliResult<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(invalid(line, key, value, "expected true or false")),
    }
}

pub fn parse_models(value: &str) -> Option<Vec<ModelKind>> {
    let models: Option<Vec<ModelKind>> = value.split(',').map(|s| ModelKind::parse(s.trim())).collect();
    models.filter(|m| !m.is_empty())
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Validation(msg) => CliError::Validation(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut seen: Vec<&str> = Vec::new();
        let mut adam = (0.9, 0.999, 1e-8);
        let mut optimizer = "adam".to_string();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                return Err(CliError::Validation(format!("line {line}: expected key = value, got {trimmed:?}")));
            };
            let (key, value) = (key.trim(), value.trim());
            let Some(&known) = KEYS.iter().find(|k| **k == key) else {
                return Err(CliError::Validation(format!("line {line}: unknown key {key:?}")));
            };
            if seen.contains(&known) {
                return Err(CliError::Validation(format!("line {line}: {key} given twice")));
            }
            seen.push(known);
            let dims = &mut cfg.train.dims;
            match key {
                "seed" => cfg.seed = parse_num(line, key, value)?,
                "seeds" => {
                    cfg.seeds = value
                        .split(',')
                        .map(|s| parse_num(line, key, s.trim()))
                        .collect::<CliResult<_>>()?;
                }
                "n_train" => cfg.n_train = parse_num(line, key, value)?,
                "n_test" => cfg.n_test = parse_num(line, key, value)?,
                "prob_0" | "prob_6" | "prob_8" | "prob_3" | "prob_9" => {
                    let digit: u8 = key[5..].parse().expect("digit key");
                    let idx = DIGITS.iter().position(|&d| d == digit).expect("known digit");
                    cfg.simulator.probs[idx] = parse_num(line, key, value)?;
                }
                "min_len" => cfg.simulator.min_len = parse_num(line, key, value)?,
                "max_len" => cfg.simulator.max_len = parse_num(line, key, value)?,
                "mean_len" => cfg.simulator.mean_len = parse_num(line, key, value)?,
                "background" => cfg.simulator.render.background = parse_num(line, key, value)?,
                "ink" => cfg.simulator.render.ink = parse_num(line, key, value)?,
                "noise_sigma" => cfg.simulator.render.noise_sigma = parse_num(line, key, value)?,
                "models" => {
                    cfg.models = parse_models(value)
                        .ok_or_else(|| invalid(line, key, value, "expected names from baseline,lstm,tlstmv1,tlstmv2"))?;
                }
                "hidden" => dims.hidden = parse_num(line, key, value)?,
                "features" => dims.features = parse_num(line, key, value)?,
                "encoder_hidden" => dims.encoder_hidden = parse_num(line, key, value)?,
                "learning_rate" => cfg.train.learning_rate = parse_num(line, key, value)?,
                "optimizer" => match value {
                    "adam" | "sgd" => optimizer = value.to_string(),
                    _ => return Err(invalid(line, key, value, "expected adam or sgd")),
                },
                "beta1" => adam.0 = parse_num(line, key, value)?,
                "beta2" => adam.1 = parse_num(line, key, value)?,
                "epsilon" => adam.2 = parse_num(line, key, value)?,
                "epochs" => cfg.train.epochs = parse_num(line, key, value)?,
                "batch_size" => cfg.train.batch_size = parse_num(line, key, value)?,
                "delta_normalize" => cfg.train.delta_normalize = parse_bool(line, key, value)?,
                "delta_max" => cfg.train.delta_max = parse_num(line, key, value)?,
                "supervision" => {
                    cfg.train.supervision = match value {
                        "final" => Supervision::FinalStep,
                        "all" => Supervision::AllSteps,
                        _ => return Err(invalid(line, key, value, "expected final or all")),
                    }
                }
                "threshold" => cfg.train.threshold = parse_num(line, key, value)?,
                "train_data" => cfg.train_data = Some(PathBuf::from(value)),
                "test_data" => cfg.test_data = Some(PathBuf::from(value)),
                "out_dir" => cfg.out_dir = Some(PathBuf::from(value)),
                "gradcheck_sequences" => cfg.gradcheck.sequences = parse_num(line, key, value)?,
                "gradcheck_max_len" => cfg.gradcheck.max_len = parse_num(line, key, value)?,
                "gradcheck_hidden" => cfg.gradcheck.dims.hidden = parse_num(line, key, value)?,
                "gradcheck_features" => cfg.gradcheck.dims.features = parse_num(line, key, value)?,
                "gradcheck_encoder_hidden" => cfg.gradcheck.dims.encoder_hidden = parse_num(line, key, value)?,
                "gradcheck_tolerance" => cfg.gradcheck.tolerance = parse_num(line, key, value)?,
                _ => unreachable!("key list and match arms agree"),
            }
        }
        let adam_keys = ["beta1", "beta2", "epsilon"];
        if optimizer == "sgd" {
            if let Some(k) = adam_keys.iter().find(|k| seen.contains(k)) {
                return Err(CliError::Validation(format!("{k} is only used with optimizer = adam")));
            }
            cfg.train.optimizer = OptimizerKind::Sgd;
        } else {
            cfg.train.optimizer = OptimizerKind::Adam {
                beta1: adam.0,
                beta2: adam.1,
                epsilon: adam.2,
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.simulator.validate()?;
        self.train.validate()?;
        if self.n_train == 0 || self.n_test == 0 {
            return Err(CliError::Validation("n_train and n_test must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(CliError::Validation("seeds must list at least one seed".into()));
        }
        let g = &self.gradcheck;
        if !(g.tolerance > 0.0) {
            return Err(CliError::Validation(format!("gradcheck_tolerance {}", g.tolerance)));
        }
        if g.sequences == 0 || g.max_len < 2 || g.dims.hidden == 0 || g.dims.features == 0 || g.dims.encoder_hidden == 0 {
            return Err(CliError::Validation(
                "gradcheck sizes must be positive and gradcheck_max_len at least 2".into(),
            ));
        }
        Ok(())
    }

    /// Canonical listing of every setting; its hash tags output files.
    pub fn to_text(&self) -> String {
        let s = &self.simulator;
        let t = &self.train;
        let path = |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string());
        let (optimizer, beta1, beta2, epsilon) = match t.optimizer {
            OptimizerKind::Sgd => ("sgd", None, None, None),
            OptimizerKind::Adam { beta1, beta2, epsilon } => ("adam", Some(beta1), Some(beta2), Some(epsilon)),
        };
        let mut out = String::new();
        let mut put = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        put("seed", self.seed.to_string());
        put("seeds", join(&self.seeds));
        put("n_train", self.n_train.to_string());
        put("n_test", self.n_test.to_string());
        for (d, p) in DIGITS.iter().zip(s.probs) {
            put(&format!("prob_{d}"), format!("{p:?}"));
        }
        put("min_len", s.min_len.to_string());
        put("max_len", s.max_len.to_string());
        put("mean_len", format!("{:?}", s.mean_len));
        put("background", format!("{:?}", s.render.background));
        put("ink", format!("{:?}", s.render.ink));
        put("noise_sigma", format!("{:?}", s.render.noise_sigma));
        put("models", self.models.iter().map(|m| m.name()).collect::<Vec<_>>().join(","));
        put("hidden", t.dims.hidden.to_string());
        put("features", t.dims.features.to_string());
        put("encoder_hidden", t.dims.encoder_hidden.to_string());
        put("learning_rate", format!("{:?}", t.learning_rate));
        put("optimizer", optimizer.to_string());
        for (k, v) in [("beta1", beta1), ("beta2", beta2), ("epsilon", epsilon)] {
            if let Some(v) = v {
                put(k, format!("{v:?}"));
            }
        }
        put("epochs", t.epochs.to_string());
        put("batch_size", t.batch_size.to_string());
        put("delta_normalize", t.delta_normalize.to_string());
        put("delta_max", format!("{:?}", t.delta_max));
        put(
            "supervision",
            match t.supervision {
                Supervision::FinalStep => "final",
                Supervision::AllSteps => "all",
            }
            .to_string(),
        );
        put("threshold", format!("{:?}", t.threshold));
        for (k, p) in [("train_data", &self.train_data), ("test_data", &self.test_data), ("out_dir", &self.out_dir)] {
            if p.is_some() {
                put(k, path(p));
            }
        }
        let g = &self.gradcheck;
        put("gradcheck_sequences", g.sequences.to_string());
        put("gradcheck_max_len", g.max_len.to_string());
        put("gradcheck_hidden", g.dims.hidden.to_string());
        put("gradcheck_features", g.dims.features.to_string());
        put("gradcheck_encoder_hidden", g.dims.encoder_hidden.to_string());
        put("gradcheck_tolerance", format!("{:?}", g.tolerance));
        out
    }

    pub fn hash(&self) -> String {
        short_hash(&self.to_text())
    }
}

fn join(values: &[u64]) -> String {
    values.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
}
