//! Experiment configuration file (TOML). Every field has a default; the
//! fully resolved config is written next to the outputs so a run can be
//! repeated from it.

use std::f64::consts::PI;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use symmflow::codec::default_beta;
use symmflow::ClassCodebook;
use symmflow::datasets::{gaussian_mixture, split, two_spirals, SpiralConfig};
use symmflow::flow::{Objective, TimeEncoding, TrainConfig};
use symmflow::nn::{Activation, AdamConfig};
use symmflow::ode::{Scheme, SolverConfig};
use symmflow::Dataset;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Drives initialisation, training, sampling and classification noise.
    pub seed: u64,
    pub dataset: DatasetSpec,
    pub codebook: CodebookSpec,
    pub network: NetworkSpec,
    pub train: TrainSpec,
    pub solver: SolverSpec,
    pub eval: EvalSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    /// `two-spirals` or `gaussian-mixture`.
    pub generator: String,
    pub n_per_class: usize,
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub noise_sigma: f64,
    /// Mixture only.
    pub k_components: usize,
    /// Mixture only; spirals always have two classes.
    pub num_classes: usize,
    pub data_seed: u64,
    pub test_fraction: f64,
    pub split_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodebookSpec {
    pub dim_y: usize,
    /// Defaults to 0.5 for two classes, else 0.4 × code gap.
    pub beta: Option<f64>,
    /// Filled in on resolution; informational.
    pub centers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSpec {
    pub hidden: Vec<usize>,
    pub activation: String,
    pub time_encoding: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSpec {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub cosine_annealing: bool,
    /// `symmetric` or `conditional-baseline`.
    pub objective: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    pub scheme: String,
    pub steps: usize,
    pub hold_x: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSpec {
    /// Reverse trajectories averaged per classified point.
    pub trajectories: usize,
    pub n_mc: usize,
    pub sweep_steps: Vec<usize>,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        let s = SpiralConfig::default();
        Self {
            generator: "two-spirals".into(),
            n_per_class: s.n_per_class,
            theta_lo: s.theta_lo,
            theta_hi: s.theta_hi,
            noise_sigma: s.noise_sigma,
            k_components: 8,
            num_classes: 2,
            data_seed: s.seed,
            test_fraction: 0.25,
            split_seed: 1,
        }
    }
}

impl Default for CodebookSpec {
    fn default() -> Self {
        Self {
            dim_y: 1,
            beta: None,
            centers: Vec::new(),
        }
    }
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            hidden: vec![128; 4],
            activation: "silu".into(),
            time_encoding: "raw".into(),
        }
    }
}

impl Default for TrainSpec {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.adam.lr,
            beta1: t.adam.beta1,
            beta2: t.adam.beta2,
            eps: t.adam.eps,
            cosine_annealing: t.cosine_annealing,
            objective: "symmetric".into(),
        }
    }
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            scheme: "euler".into(),
            steps: 20,
            hold_x: false,
        }
    }
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self {
            trajectories: 1,
            n_mc: 64,
            sweep_steps: vec![1, 2, 5, 10, 20, 50],
        }
    }
}

fn field_err(field: &str, reason: impl std::fmt::Display) -> anyhow::Error {
    anyhow::anyhow!("invalid config field `{field}`: {reason}")
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("malformed config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml_str(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn num_classes(&self) -> usize {
        match self.dataset.generator.as_str() {
            "two-spirals" => 2,
            _ => self.dataset.num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        match d.generator.as_str() {
            "two-spirals" => {
                self.spiral_config()
                    .validate()
                    .map_err(|e| field_err("dataset", e))?;
            }
            "gaussian-mixture" => {
                if d.num_classes < 2 {
                    return Err(field_err("dataset.num_classes", "must be at least 2"));
                }
                if d.k_components < d.num_classes {
                    return Err(field_err("dataset.k_components", "must be at least num_classes"));
                }
            }
            other => return Err(field_err("dataset.generator", format!("unknown generator `{other}`"))),
        }
        if d.n_per_class == 0 {
            return Err(field_err("dataset.n_per_class", "must be at least 1"));
        }
        if !(d.test_fraction > 0.0 && d.test_fraction < 1.0) {
            return Err(field_err("dataset.test_fraction", "must lie strictly between 0 and 1"));
        }
        if self.codebook.dim_y == 0 {
            return Err(field_err("codebook.dim_y", "must be at least 1"));
        }
        if let Some(b) = self.codebook.beta {
            if !(b > 0.0) {
                return Err(field_err("codebook.beta", "must be positive"));
            }
        }
        if self.network.hidden.contains(&0) {
            return Err(field_err("network.hidden", "layer widths must be positive"));
        }
        self.activation()?;
        self.time_encoding()?;
        if self.train.epochs == 0 {
            return Err(field_err("train.epochs", "must be at least 1"));
        }
        if self.train.batch_size == 0 {
            return Err(field_err("train.batch_size", "must be at least 1"));
        }
        if !(self.train.lr > 0.0) {
            return Err(field_err("train.lr", "must be positive"));
        }
        self.objective()?;
        self.scheme()?;
        if self.solver.steps == 0 {
            return Err(field_err("solver.steps", "must be at least 1"));
        }
        if self.eval.trajectories == 0 {
            return Err(field_err("eval.trajectories", "must be at least 1"));
        }
        if self.eval.n_mc == 0 {
            return Err(field_err("eval.n_mc", "must be at least 1"));
        }
        let s = &self.eval.sweep_steps;
        if s.is_empty() || s[0] == 0 || s.windows(2).any(|w| w[0] >= w[1]) {
            return Err(field_err("eval.sweep_steps", "must be positive and strictly increasing"));
        }
        Ok(())
    }

    pub fn activation(&self) -> Result<Activation> {
        self.network
            .activation
            .parse()
            .map_err(|e| field_err("network.activation", e))
    }

    pub fn time_encoding(&self) -> Result<TimeEncoding> {
        self.network
            .time_encoding
            .parse()
            .map_err(|e| field_err("network.time_encoding", e))
    }

    pub fn objective(&self) -> Result<Objective> {
        self.train
            .objective
            .parse()
            .map_err(|e| field_err("train.objective", e))
    }

    pub fn scheme(&self) -> Result<Scheme> {
        self.solver
            .scheme
            .parse()
            .map_err(|e| field_err("solver.scheme", e))
    }

    pub fn spiral_config(&self) -> SpiralConfig {
        SpiralConfig {
            n_per_class: self.dataset.n_per_class,
            theta_lo: self.dataset.theta_lo,
            theta_hi: self.dataset.theta_hi,
            noise_sigma: self.dataset.noise_sigma,
            seed: self.dataset.data_seed,
        }
    }

    pub fn beta(&self) -> f64 {
        self.codebook
            .beta
            .unwrap_or_else(|| default_beta(self.num_classes()))
    }

    pub fn codebook(&self) -> Result<ClassCodebook> {
        ClassCodebook::new(self.num_classes(), self.codebook.dim_y, self.beta())
            .map_err(|e| field_err("codebook", e))
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        Ok(TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            adam: AdamConfig {
                lr: self.train.lr,
                beta1: self.train.beta1,
                beta2: self.train.beta2,
                eps: self.train.eps,
            },
            cosine_annealing: self.train.cosine_annealing,
            objective: self.objective()?,
            time_encoding: self.time_encoding()?,
            hidden: self.network.hidden.clone(),
            activation: self.activation()?,
            seed: self.seed,
        })
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        Ok(SolverConfig {
            scheme: self.scheme()?,
            steps: self.solver.steps,
            record_trajectory: false,
            hold_x: self.solver.hold_x,
        })
    }

    /// Full dataset, then the seeded train/test split.
    pub fn generate_data(&self) -> Result<(Dataset, Dataset)> {
        let full: Dataset = match self.dataset.generator.as_str() {
            "two-spirals" => two_spirals(&self.spiral_config())?,
            _ => gaussian_mixture(
                self.dataset.k_components,
                self.dataset.n_per_class,
                self.dataset.num_classes,
                self.dataset.data_seed,
            )?,
        };
        Ok(split(&full, self.dataset.test_fraction, self.dataset.split_seed)?)
    }

    /// Copy with derived values (beta, centers) filled in.
    pub fn resolved(&self) -> Result<Self> {
        let mut out = self.clone();
        let cb = self.codebook()?;
        out.codebook.beta = Some(cb.beta());
        out.codebook.centers = cb.centers().iter().map(|c| c[0]).collect();
        if out.dataset.generator == "two-spirals" {
            out.dataset.num_classes = 2;
        }
        Ok(out)
    }
}

/// Spiral angle range of the default config, for documentation and tests.
pub fn default_theta_range() -> (f64, f64) {
    (PI, 4.0 * PI)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::default().resolved().unwrap();
        let text = cfg.to_toml_string();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.beta(), 0.5);
        assert_eq!(back.codebook.centers, vec![-1.0, 1.0]);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = ExperimentConfig::from_toml_str("seed = 9\n[train]\nepochs = 3\n").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.batch_size, TrainSpec::default().batch_size);
    }

    #[test]
    fn diagnostics_name_the_field() {
        let err = ExperimentConfig::from_toml_str("[train]\nepochs = 0\n").unwrap_err();
        assert!(format!("{err:#}").contains("train.epochs"), "{err:#}");
        let err = ExperimentConfig::from_toml_str("[train]\nepochz = 3\n").unwrap_err();
        assert!(format!("{err:#}").contains("epochz"), "{err:#}");
        let err = ExperimentConfig::from_toml_str("[train]\nepochs = \"many\"\n").unwrap_err();
        assert!(format!("{err:#}").contains("epochs"), "{err:#}");
        let err = ExperimentConfig::from_toml_str("[solver]\nscheme = \"leapfrog\"\n").unwrap_err();
        assert!(format!("{err:#}").contains("solver.scheme"), "{err:#}");
    }

    #[test]
    fn default_spiral_parameters() {
        let cfg = ExperimentConfig::default();
        assert_eq!((cfg.dataset.theta_lo, cfg.dataset.theta_hi), default_theta_range());
        let (train, test) = cfg.generate_data().unwrap();
        assert_eq!((train.len(), test.len()), (1500, 500));
    }
}
