//! Experiment configuration files (TOML).
//!
//! Every section and key is optional; missing values take the defaults
//! shown by `ExperimentConfig::default()`. Unknown keys are rejected.
//!
//! ```toml
//! out_dir = "runs/gm"
//!
//! [dataset]
//! kind = "gaussian-mixture"   # or "two-moons"; ignored when `path` is set
//! # path = "data/embeddings.isds"
//! samples_total = 1000
//! ground_size = 100
//! subset_size = 10
//! noise_variance = 0.1
//! mu0 = [-2.0, 0.0]
//! mu1 = [2.0, 0.0]
//! sigma = [[1.0, 0.0], [0.0, 1.0]]
//! split = [0.8, 0.1, 0.1]
//! seed = 0
//!
//! [model]
//! variant = "inset"           # or "deepsets-only"
//! h = 64
//! h_d = 128
//!
//! [training]
//! mode = "variational"        # "exact", "variational" or "direct"
//! lr = 1e-4
//! weight_decay = 1e-5
//! batch_size = 32
//! mc_samples = 5
//! mfvi_steps = 5
//! mfvi_init = "equinet"       # or "uniform"
//! patience = 6
//! max_epochs = 100
//! seeds = [0, 1, 2, 3, 4]
//!
//! [eval]
//! # fixed_n = 10              # default: |S*| of each sample
//! tolerance = 0.0
//! trials = 100
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{SynthConfig, SynthKind};
use crate::eval::NOut;
use crate::model::{Dims, ModelVariant};
use crate::optim::AdamConfig;
use crate::prob::{LossHyper, MfviInit, TrainMode};
use crate::train::TrainConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub kind: SynthKind,
    pub path: Option<PathBuf>,
    pub samples_total: usize,
    pub ground_size: usize,
    pub subset_size: usize,
    pub noise_variance: f64,
    pub mu0: Vec<f64>,
    pub mu1: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    pub split: [f64; 3],
    pub seed: u64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self::from_synth(&SynthConfig::gaussian_mixture())
    }
}

impl DatasetSection {
    pub fn from_synth(s: &SynthConfig) -> Self {
        DatasetSection {
            kind: s.kind,
            path: None,
            samples_total: s.samples_total,
            ground_size: s.ground_size,
            subset_size: s.subset_size,
            noise_variance: s.noise_variance,
            mu0: s.mu0.clone(),
            mu1: s.mu1.clone(),
            sigma: s.sigma.clone(),
            split: s.split,
            seed: s.seed,
        }
    }

    pub fn synth(&self) -> SynthConfig {
        SynthConfig {
            kind: self.kind,
            samples_total: self.samples_total,
            ground_size: self.ground_size,
            subset_size: self.subset_size,
            noise_variance: self.noise_variance,
            mu0: self.mu0.clone(),
            mu1: self.mu1.clone(),
            sigma: self.sigma.clone(),
            split: self.split,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub variant: ModelVariant,
    pub h: usize,
    pub h_d: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let Dims { h, h_d, .. } = Dims::desk(0);
        ModelSection {
            variant: ModelVariant::Inset,
            h,
            h_d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub mode: TrainMode,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub mc_samples: usize,
    pub mfvi_steps: usize,
    pub mfvi_init: MfviInit,
    pub patience: u32,
    pub max_epochs: u32,
    pub seeds: Vec<u64>,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainingSection {
            mode: t.mode,
            lr: t.adam.lr,
            weight_decay: t.adam.weight_decay,
            batch_size: t.batch_size,
            mc_samples: t.hyper.mc_samples,
            mfvi_steps: t.hyper.mfvi_steps,
            mfvi_init: t.hyper.init,
            patience: t.patience,
            max_epochs: t.max_epochs,
            seeds: (0..5).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub fixed_n: Option<usize>,
    pub tolerance: f64,
    pub trials: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            fixed_n: None,
            tolerance: 0.0,
            trials: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub out_dir: Option<PathBuf>,
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub training: TrainingSection,
    pub eval: EvalSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// Reads and parses `path`. Call [`validate`](Self::validate) after
    /// applying any command-line overrides.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let d = &self.dataset;
        match &d.path {
            Some(p) if !p.exists() => return bad(format!("dataset.path {} does not exist", p.display())),
            Some(_) => {}
            None => d.synth().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?,
        }
        crate::data::split_sizes(d.samples_total.max(3), d.split)
            .map_err(|e| ConfigError::Invalid(format!("dataset.split: {e}")))?;
        if self.model.h == 0 || self.model.h_d == 0 {
            return bad("model.h and model.h_d must be at least 1".into());
        }
        let t = &self.training;
        if !(t.lr > 0.0 && t.lr.is_finite()) {
            return bad(format!("training.lr must be positive and finite, got {}", t.lr));
        }
        if !(t.weight_decay >= 0.0 && t.weight_decay.is_finite()) {
            return bad(format!("training.weight_decay must be non-negative, got {}", t.weight_decay));
        }
        for (name, v) in [
            ("batch_size", t.batch_size),
            ("mc_samples", t.mc_samples),
            ("mfvi_steps", t.mfvi_steps),
            ("patience", t.patience as usize),
            ("max_epochs", t.max_epochs as usize),
        ] {
            if v == 0 {
                return bad(format!("training.{name} must be at least 1"));
            }
        }
        if t.seeds.is_empty() {
            return bad("training.seeds must not be empty".into());
        }
        let e = &self.eval;
        if e.fixed_n == Some(0) {
            return bad("eval.fixed_n must be at least 1".into());
        }
        if !(e.tolerance >= 0.0) {
            return bad(format!("eval.tolerance must be non-negative, got {}", e.tolerance));
        }
        if e.trials == 0 {
            return bad("eval.trials must be at least 1".into());
        }
        Ok(())
    }

    pub fn dims(&self, d: usize) -> Dims {
        Dims {
            d,
            h: self.model.h,
            h_d: self.model.h_d,
        }
    }

    pub fn n_out(&self) -> NOut {
        self.eval.fixed_n.map_or(NOut::PerSample, NOut::Fixed)
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            mode: t.mode,
            adam: AdamConfig {
                lr: t.lr,
                weight_decay: t.weight_decay,
                ..AdamConfig::default()
            },
            batch_size: t.batch_size,
            hyper: LossHyper {
                mc_samples: t.mc_samples,
                mfvi_steps: t.mfvi_steps,
                init: t.mfvi_init,
            },
            patience: t.patience,
            max_epochs: t.max_epochs,
            n_out: self.n_out(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.training.lr, 1e-4);
        assert_eq!(c.training.weight_decay, 1e-5);
        assert_eq!(c.training.batch_size, 32);
        assert_eq!((c.model.h, c.model.h_d), (64, 128));
        c.validate().unwrap();
    }

    #[test]
    fn documented_example_parses() {
        let doc = include_str!("config.rs")
            .lines()
            .skip_while(|l| !l.starts_with("//! ```toml"))
            .skip(1)
            .take_while(|l| !l.starts_with("//! ```"))
            .map(|l| l.trim_start_matches("//!").trim_start_matches(' '))
            .collect::<Vec<_>>()
            .join("\n");
        let c = ExperimentConfig::from_toml(&doc).unwrap();
        assert_eq!(c.out_dir, Some(PathBuf::from("runs/gm")));
        assert_eq!(c.training.mfvi_init, MfviInit::EquiNet);
        assert_eq!(c.dataset, DatasetSection::default());
        assert_eq!(c.model, ModelSection::default());
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(ExperimentConfig::from_toml("[model]\nwidth = 3\n").is_err());
        assert!(ExperimentConfig::from_toml("learning_rate = 3\n").is_err());
        assert!(ExperimentConfig::from_toml("[model]\nvariant = \"transformer\"\n").is_err());
        let c = ExperimentConfig::from_toml("[training]\nlr = -1.0\n").unwrap();
        assert!(c.validate().is_err());
        let c = ExperimentConfig::from_toml("[dataset]\npath = \"/no/such/file\"\n").unwrap();
        assert!(c.validate().unwrap_err().to_string().contains("does not exist"));
    }

    #[test]
    fn toml_round_trip() {
        let mut c = ExperimentConfig::default();
        c.eval.fixed_n = Some(7);
        c.model.variant = ModelVariant::DeepSetsOnly;
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert!(c.to_toml().contains("deepsets-only"));
    }
}
