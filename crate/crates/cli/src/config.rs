//! Experiment configuration: JSON schema, range checks and construction of
//! the stream and model it describes.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use flatopt::clbench::{
    load_csv_stream, make_gaussian_stream, task_count, GaussianSpec, Protocol, TaskStream,
};
use flatopt::diagnostics::TraceConfig;
use flatopt::numcore::{Mlp, Objective, SoftmaxLinear};
use flatopt::optim::OptimizerConfig;
use flatopt::Error;

/// A configuration problem. Maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError {
    /// Dotted path of the offending key, empty for whole-file problems.
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn at(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Re-roots a core validation error under `section`.
    fn from_core(section: &str, e: Error) -> Self {
        match e {
            Error::InvalidArgument { field, reason } => {
                ConfigError::at(format!("{section}.{field}"), reason)
            }
            other => ConfigError::at(section, other.to_string()),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "config error: {}", self.message)
        } else {
            write!(f, "config error at `{}`: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Gaussian(GaussianSpec),
    Csv(CsvSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSpec {
    /// Relative paths resolve against the config file's directory.
    pub path: PathBuf,
    pub initial: usize,
    pub increment: usize,
    /// Shuffle the class order with the protocol seed.
    #[serde(default = "yes")]
    pub shuffle_classes: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    SoftmaxLinear,
    Mlp {
        #[serde(default = "default_hidden")]
        hidden: Vec<usize>,
    },
    /// Accepted by the schema for completeness; not a classifier, so the
    /// benchmark harness rejects it.
    Quadratic,
}

fn default_hidden() -> Vec<usize> {
    vec![32]
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::Mlp {
            hidden: default_hidden(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsSpec {
    pub enabled: bool,
    pub window: usize,
    pub ratio_bins: usize,
    pub cache_steps_only: bool,
}

impl Default for DiagnosticsSpec {
    fn default() -> Self {
        let t = TraceConfig::default();
        DiagnosticsSpec {
            enabled: false,
            window: t.window,
            ratio_bins: t.ratio_bins,
            cache_steps_only: false,
        }
    }
}

impl DiagnosticsSpec {
    pub fn trace_config(&self) -> Option<TraceConfig> {
        self.enabled.then(|| TraceConfig {
            window: self.window,
            ratio_bins: self.ratio_bins,
            cache_steps_only: self.cache_steps_only,
            ..TraceConfig::default()
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub protocol: Protocol,
    #[serde(default)]
    pub diagnostics: DiagnosticsSpec,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::at("", format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if let DatasetSpec::Csv(csv) = &mut cfg.dataset {
            if csv.path.is_relative() {
                if let Some(dir) = path.parent() {
                    csv.path = dir.join(&csv.path);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses without range checks.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let path = if path == "." { String::new() } else { path };
            ConfigError::at(path, e.into_inner().to_string())
        })
    }

    /// Range-checks every section. Nothing is computed.
    pub fn validate(&self) -> Result<(), ConfigError> {
        match &self.dataset {
            DatasetSpec::Gaussian(g) => {
                g.validate()
                    .map_err(|e| ConfigError::from_core("dataset", e))?;
            }
            DatasetSpec::Csv(c) => {
                if c.initial < 1 {
                    return Err(ConfigError::at("dataset.initial", "must be at least 1"));
                }
            }
        }
        match &self.model {
            ModelSpec::Quadratic => {
                return Err(ConfigError::at(
                    "model.kind",
                    "`quadratic` has no class scores; use `softmax_linear` or `mlp`",
                ))
            }
            ModelSpec::Mlp { hidden } => {
                if let Some(i) = hidden.iter().position(|&w| w == 0) {
                    return Err(ConfigError::at(
                        format!("model.hidden[{i}]"),
                        "layer width must be at least 1",
                    ));
                }
            }
            ModelSpec::SoftmaxLinear => {}
        }
        self.optimizer
            .validate()
            .map_err(|e| ConfigError::from_core("optimizer", e))?;
        self.protocol
            .validate()
            .map_err(|e| ConfigError::from_core("protocol", e))?;
        if self.diagnostics.enabled {
            if self.diagnostics.window < 1 {
                return Err(ConfigError::at("diagnostics.window", "must be at least 1"));
            }
            if self.diagnostics.ratio_bins < 1 {
                return Err(ConfigError::at(
                    "diagnostics.ratio_bins",
                    "must be at least 1",
                ));
            }
        }
        Ok(())
    }

    pub fn build_stream(&self) -> flatopt::Result<TaskStream> {
        match &self.dataset {
            DatasetSpec::Gaussian(g) => make_gaussian_stream(g, self.protocol.seed),
            DatasetSpec::Csv(c) => {
                let seed = c.shuffle_classes.then_some(self.protocol.seed);
                load_csv_stream(&c.path, c.initial, c.increment, seed)
            }
        }
    }

    pub fn build_model(&self, stream: &TaskStream) -> flatopt::Result<Box<dyn Objective>> {
        let (d, c) = (stream.features, stream.total_classes);
        Ok(match &self.model {
            ModelSpec::SoftmaxLinear => Box::new(SoftmaxLinear::new(d, c)?),
            ModelSpec::Mlp { hidden } => {
                let mut widths = vec![d];
                widths.extend(hidden);
                widths.push(c);
                Box::new(Mlp::new(&widths)?)
            }
            ModelSpec::Quadratic => return Err(Error::NotAClassifier("quadratic".into())),
        })
    }

    /// Number of tasks, when it is known without reading data files.
    pub fn task_count_hint(&self) -> Option<usize> {
        match &self.dataset {
            DatasetSpec::Gaussian(g) => task_count(g.classes, g.initial, g.increment).ok(),
            DatasetSpec::Csv(_) => None,
        }
    }
}
