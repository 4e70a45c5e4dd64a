//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::baselines::Baseline;
use super::report::to_json_string;
use super::sbm::SbmConfig;
use crate::error::{ensure, Error, Result};
use crate::eval::DetectorConfig;
use crate::generator::GeneratorConfig;
use crate::rl::{Ablation, TrainConfig};
use crate::victim::VictimConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Synthetic two-block graph, regenerated from each run seed.
    Sbm(SbmConfig),
    /// Edge, feature, label and split files; relative paths resolve
    /// against the config file's directory.
    Files {
        edges: PathBuf,
        features: PathBuf,
        labels: PathBuf,
        split: PathBuf,
    },
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Sbm(SbmConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub stealth: bool,
    pub baselines: Vec<Baseline>,
    pub detector: DetectorConfig,
    /// Cosine threshold of the pruning defense; absent disables it.
    pub defense_tau: Option<f64>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            stealth: true,
            baselines: vec![Baseline::Random, Baseline::Heuristic],
            detector: DetectorConfig::default(),
            defense_tau: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seeds: Vec<u64>,
    pub ablation: Ablation,
    pub output: PathBuf,
    pub dataset: DatasetConfig,
    pub victim: VictimConfig,
    pub train: TrainConfig,
    pub metrics: MetricsConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            seeds: (0..10).collect(),
            ablation: Ablation::Full,
            output: PathBuf::from("out"),
            dataset: DatasetConfig::default(),
            victim: VictimConfig::default(),
            train: TrainConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// The synthetic two-block task with the settings used by the test suite.
    pub fn toy() -> Self {
        Self {
            name: "toy-sbm".into(),
            seeds: vec![0, 1, 2],
            dataset: DatasetConfig::Sbm(SbmConfig::default()),
            train: TrainConfig {
                lambda_ot: 0.1,
                lr_actor: 1e-3,
                lr_critic: 1e-3,
                lr_disc: 1e-4,
                epochs: 1500,
                eval_every: 50,
                batch: 32,
                generator: GeneratorConfig {
                    alpha: 0.0,
                    ..GeneratorConfig::default()
                },
                ..TrainConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Parses, resolves relative dataset paths and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let DatasetConfig::Files { edges, features, labels, split } = &mut cfg.dataset {
            for p in [edges, features, labels, split] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        if cfg.output.is_relative() {
            cfg.output = base.join(&cfg.output);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.seeds.is_empty(), Validation, "at least one seed is required");
        let mut s = self.seeds.clone();
        s.sort_unstable();
        s.dedup();
        ensure!(s.len() == self.seeds.len(), Validation, "seeds must be distinct");
        self.train.validate()?;
        let v = &self.victim;
        ensure!(v.hidden >= 1 && v.epochs >= 1, Validation, "victim needs hidden >= 1 and epochs >= 1");
        ensure!(v.lr > 0.0 && v.weight_decay >= 0.0, Validation, "victim lr must be positive, weight decay nonnegative");
        ensure!((0.0..1.0).contains(&v.dropout), Validation, "victim dropout {} outside [0,1)", v.dropout);
        if let Some(tau) = self.metrics.defense_tau {
            ensure!((-1.0..=1.0).contains(&tau), Validation, "defense_tau {tau} outside [-1,1]");
        }
        let d = &self.metrics.detector;
        ensure!(d.trees >= 1 && d.subsample >= 2 && d.fit_size >= 2, Validation, "detector sizes too small");
        match &self.dataset {
            DatasetConfig::Sbm(c) => {
                ensure!(c.nodes >= 2 && c.dim >= 2, Validation, "SBM needs at least 2 nodes and 2 feature dims");
                ensure!(c.train + c.val + c.targets <= c.nodes, Validation, "SBM split sizes exceed node count");
                ensure!(c.val >= 1 && c.targets >= 1 && c.train >= 1, Validation, "SBM splits must be nonempty");
            }
            DatasetConfig::Files { edges, features, labels, split } => {
                for p in [edges, features, labels, split] {
                    ensure!(p.is_file(), Validation, "dataset file {} does not exist", p.display());
                }
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(to_json_string(self)?.as_bytes())))
    }
}
