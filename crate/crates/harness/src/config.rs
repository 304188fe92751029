//! Flat TOML experiment configuration.

use std::path::{Path, PathBuf};

use bfarl_core::bias::BiasSpec;
use bfarl_core::data::{DatasetRecipe, Group};
use bfarl_core::meta::{MetaGradient, MetaProjection};
use bfarl_core::model::{Activation, TrainConfig};
use bfarl_core::synthetic::SyntheticConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    LabelBiasSweep,
    SelectionBiasSweep,
    CleanEval,
    IntensityStudy,
    SingleRun,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Cross-entropy on the clean training labels.
    Clean,
    /// Cross-entropy on the biased training labels.
    Biased,
    /// Meta-learned bias-tolerant objective on the biased labels.
    Bfarl,
    /// Peer loss with a pooled label marginal on the biased labels.
    Peer,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Clean => "clean",
            Method::Biased => "biased",
            Method::Bfarl => "bfarl",
            Method::Peer => "peer",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaGradientMode {
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaProjectionMode {
    /// `α` fixed at its start value, `|β_a| <= beta_bound * α_a`.
    Proper,
    /// `α` clamped at zero only.
    Unconstrained,
}

fn default_repetitions() -> usize {
    10
}
fn default_train_fraction() -> f64 {
    0.9
}
fn default_true() -> bool {
    true
}
fn default_methods() -> Vec<Method> {
    vec![Method::Clean, Method::Biased, Method::Bfarl]
}
fn default_sigma() -> f64 {
    1.0
}
fn default_r() -> f64 {
    0.5
}
fn default_fd_step() -> f64 {
    1e-4
}
fn default_alpha() -> [f64; 2] {
    [1.0, 1.0]
}
fn default_direction() -> [f64; 2] {
    [1.0, 1.0]
}

/// One experiment. Keys are flat; the data source is either `dataset` (a
/// builtin recipe name or a recipe file path) or the `synthetic_*` keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,

    /// `synthetic`, `adult`, `german`, `compas`, or a path to a recipe file.
    #[serde(default = "synthetic_name")]
    pub dataset: String,
    /// Directory holding the raw files of builtin recipes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<PathBuf>,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    /// Append the sensitive attribute as a model input.
    #[serde(default = "default_true")]
    pub include_sensitive: bool,

    #[serde(default = "synthetic_defaults_n")]
    pub synthetic_n: usize,
    #[serde(default = "synthetic_defaults_k")]
    pub synthetic_k: usize,
    #[serde(default = "synthetic_defaults_a_rate")]
    pub synthetic_a_rate: f64,
    #[serde(default = "synthetic_defaults_rarity")]
    pub synthetic_rarity: f64,
    #[serde(default)]
    pub synthetic_flip_amount: f64,
    #[serde(default = "synthetic_defaults_w_sigma")]
    pub synthetic_w_sigma: f64,

    /// Average label-bias values for `label_bias_sweep`.
    #[serde(default)]
    pub label_bias_grid: Vec<f64>,
    /// Selection factors for `selection_bias_sweep`.
    #[serde(default)]
    pub sigma_grid: Vec<f64>,
    /// `(θ_0^+, θ_0^-, θ_1^+, θ_1^-)` for the fixed-rate experiments.
    #[serde(default)]
    pub theta: [f64; 4],
    /// Average label bias for the fixed-rate experiments; overrides `theta`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_bias: Option<f64>,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_r")]
    pub selection_r: f64,
    #[serde(default)]
    pub selection_group: Group,

    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub peer_alpha: f64,

    pub eta: f64,
    pub eta_prime: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub steps: usize,
    #[serde(default)]
    pub hidden_sizes: Vec<usize>,
    #[serde(default = "relu")]
    pub activation: Activation,
    #[serde(default = "analytic")]
    pub meta_gradient: MetaGradientMode,
    #[serde(default = "default_fd_step")]
    pub fd_rel_step: f64,
    #[serde(default = "proper")]
    pub meta_projection: MetaProjectionMode,
    #[serde(default = "default_beta_bound")]
    pub beta_bound: f64,

    /// Fixed group weights along the intensity ray.
    #[serde(default = "default_alpha")]
    pub intensity_alpha: [f64; 2],
    #[serde(default = "default_direction")]
    pub beta_direction: [f64; 2],
    /// Euclidean norms of `β` visited by the intensity study.
    #[serde(default)]
    pub beta_norms: Vec<f64>,
}

fn synthetic_name() -> String {
    "synthetic".into()
}
fn synthetic_defaults_n() -> usize {
    SyntheticConfig::default().n
}
fn synthetic_defaults_k() -> usize {
    SyntheticConfig::default().k
}
fn synthetic_defaults_a_rate() -> f64 {
    SyntheticConfig::default().a_rate
}
fn synthetic_defaults_rarity() -> f64 {
    SyntheticConfig::default().rarity
}
fn synthetic_defaults_w_sigma() -> f64 {
    SyntheticConfig::default().w_sigma
}
fn relu() -> Activation {
    Activation::Relu
}
fn analytic() -> MetaGradientMode {
    MetaGradientMode::Analytic
}
fn proper() -> MetaProjectionMode {
    MetaProjectionMode::Proper
}
fn default_beta_bound() -> f64 {
    0.9
}

/// One grid point of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub index: usize,
    pub grid_value: f64,
    pub bias: BiasSpec,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))?;
        // Relative paths in the file are relative to the file.
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(d) = &cfg.data_dir {
            if d.is_relative() {
                cfg.data_dir = Some(base.join(d));
            }
        }
        if cfg.dataset.ends_with(".toml") && Path::new(&cfg.dataset).is_relative() {
            cfg.dataset = base.join(&cfg.dataset).to_string_lossy().into_owned();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn is_synthetic(&self) -> bool {
        self.dataset == "synthetic"
    }

    pub fn synthetic(&self, seed: u64) -> SyntheticConfig {
        SyntheticConfig {
            n: self.synthetic_n,
            k: self.synthetic_k,
            a_rate: self.synthetic_a_rate,
            rarity: self.synthetic_rarity,
            flip_amount: self.synthetic_flip_amount,
            w_sigma: self.synthetic_w_sigma,
            seed,
        }
    }

    /// Recipe for a non-synthetic dataset, with its source resolved.
    pub fn recipe(&self) -> Result<DatasetRecipe> {
        let mut recipe = if self.dataset.ends_with(".toml") {
            DatasetRecipe::from_file(Path::new(&self.dataset))?
        } else {
            DatasetRecipe::builtin(&self.dataset)?
        };
        if let Some(dir) = &self.data_dir {
            recipe.resolve_source(dir);
        }
        Ok(recipe)
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            eta: self.eta,
            eta_prime: self.eta_prime,
            gamma: self.gamma,
            batch_size: self.batch_size,
            steps: self.steps,
            hidden_sizes: self.hidden_sizes.clone(),
            activation: self.activation,
            seed,
            meta_gradient: match self.meta_gradient {
                MetaGradientMode::Analytic => MetaGradient::Analytic,
                MetaGradientMode::FiniteDifference => MetaGradient::FiniteDifference {
                    rel_step: self.fd_rel_step,
                },
            },
            meta_projection: match self.meta_projection {
                MetaProjectionMode::Proper => MetaProjection::Proper { kappa: self.beta_bound },
                MetaProjectionMode::Unconstrained => MetaProjection::Unconstrained,
            },
        }
    }

    fn fixed_bias(&self) -> BiasSpec {
        let mut spec = match self.label_bias {
            Some(b) => BiasSpec::average_label_bias(b),
            None => BiasSpec::from_thetas(self.theta),
        };
        spec.sigma = self.sigma;
        spec.r = self.selection_r;
        spec.selection_group = self.selection_group;
        spec
    }

    /// Grid points in output order.
    pub fn cells(&self) -> Vec<Cell> {
        let with_selection = |mut spec: BiasSpec, sigma: f64| {
            spec.sigma = sigma;
            spec.r = self.selection_r;
            spec.selection_group = self.selection_group;
            spec
        };
        let specs: Vec<(f64, BiasSpec)> = match self.kind {
            ExperimentKind::LabelBiasSweep => self
                .label_bias_grid
                .iter()
                .map(|&b| (b, with_selection(BiasSpec::average_label_bias(b), self.sigma)))
                .collect(),
            ExperimentKind::SelectionBiasSweep => self
                .sigma_grid
                .iter()
                .map(|&s| (s, with_selection(self.fixed_bias(), s)))
                .collect(),
            ExperimentKind::CleanEval => vec![(0.0, BiasSpec::none())],
            ExperimentKind::IntensityStudy | ExperimentKind::SingleRun => {
                vec![(self.label_bias.unwrap_or(0.0), self.fixed_bias())]
            }
        };
        specs
            .into_iter()
            .enumerate()
            .map(|(index, (grid_value, bias))| Cell {
                index,
                grid_value,
                bias,
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.repetitions < 1 {
            return bad("repetitions must be at least 1".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction {} outside (0,1)", self.train_fraction));
        }
        if self.methods.is_empty() {
            return bad("methods must not be empty".into());
        }
        match self.kind {
            ExperimentKind::LabelBiasSweep if self.label_bias_grid.is_empty() => {
                return bad("label_bias_sweep needs a nonempty label_bias_grid".into())
            }
            ExperimentKind::SelectionBiasSweep if self.sigma_grid.is_empty() => {
                return bad("selection_bias_sweep needs a nonempty sigma_grid".into())
            }
            ExperimentKind::IntensityStudy if self.beta_norms.is_empty() => {
                return bad("intensity_study needs a nonempty beta_norms".into())
            }
            _ => {}
        }
        if self.kind == ExperimentKind::IntensityStudy {
            if self.beta_norms.iter().any(|&n| !(n >= 0.0 && n.is_finite())) {
                return bad("beta_norms must be finite and >= 0".into());
            }
            if self.beta_direction[0].hypot(self.beta_direction[1]) == 0.0 {
                return bad("beta_direction must be nonzero".into());
            }
            if self.intensity_alpha.iter().any(|&a| !(a >= 0.0)) {
                return bad("intensity_alpha must be >= 0".into());
            }
        }
        if self.peer_alpha < 0.0 || !self.peer_alpha.is_finite() {
            return bad("peer_alpha must be finite and >= 0".into());
        }
        self.train_config(self.seed).validate()?;
        for cell in self.cells() {
            cell.bias.validate()?;
        }
        if self.is_synthetic() {
            self.synthetic(self.seed).validate()?;
            let biased = self
                .cells()
                .iter()
                .any(|c| c.bias.thetas().iter().any(|&t| t > 0.0) || c.bias.sigma != 1.0);
            if self.synthetic_flip_amount > 0.0 && biased {
                return bad("synthetic_flip_amount cannot be combined with injected bias".into());
            }
        } else {
            self.recipe()?;
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = None;
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
