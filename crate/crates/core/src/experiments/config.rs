use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::neuralnet::{Loss, OptimizerConfig, RcnnConfig, TrainConfig};
use crate::stimulus::StimulusConfig;

/// How much data a classifier sees and how it is optimized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainPlan {
    pub train_images: usize,
    pub validation_images: usize,
    pub train: TrainConfig,
}

impl Default for TrainPlan {
    fn default() -> Self {
        Self {
            train_images: 9000,
            validation_images: 1200,
            train: TrainConfig {
                epochs: 4,
                ..TrainConfig::default()
            },
        }
    }
}

/// The decomposed pipeline: a learned reduction step iterated to a fixed
/// point, followed by a learned counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompositionConfig {
    /// Side of the square training crops for the fully convolutional atoms.
    pub crop: usize,
    pub width: usize,
    pub blocks: usize,
    pub train_crops: usize,
    pub holdout_crops: usize,
    /// Fraction of crops that are uniform noise rather than scene states.
    pub noise_fraction: f64,
    pub atom_train: TrainConfig,
    pub counter_hidden: usize,
    pub counter_images: usize,
    pub counter_train: TrainConfig,
    pub max_iterations: usize,
    pub test_per_class: usize,
}

impl Default for CompositionConfig {
    fn default() -> Self {
        Self {
            crop: 24,
            width: 8,
            blocks: 4,
            train_crops: 3000,
            holdout_crops: 500,
            noise_fraction: 0.25,
            atom_train: TrainConfig {
                optimizer: OptimizerConfig::adam(3e-3),
                batch_size: 32,
                epochs: 12,
                loss: Loss::PixelBce,
                seed: 0,
                early_stop: None,
            },
            counter_hidden: 32,
            counter_images: 6000,
            counter_train: TrainConfig {
                optimizer: OptimizerConfig::adam(1e-2),
                batch_size: 32,
                epochs: 10,
                loss: Loss::CrossEntropy,
                seed: 0,
                early_stop: Some(1.0),
            },
            max_iterations: 64,
            test_per_class: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelStudyConfig {
    pub image_size: usize,
    pub images: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub epsilon: f64,
    pub rcnn: RcnnConfig,
    /// Random images for the hard-threshold equivalence check.
    pub equivalence_images: usize,
}

impl Default for KernelStudyConfig {
    fn default() -> Self {
        Self {
            image_size: 32,
            images: 512,
            steps: 2000,
            batch_size: 4,
            optimizer: OptimizerConfig::adam(0.01),
            epsilon: 0.05,
            rcnn: RcnnConfig::default(),
            equivalence_images: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub stimulus: StimulusConfig,
    /// Test images per class for every probe.
    pub test_per_class: usize,
    pub baseline: TrainPlan,
    pub boundary: TrainPlan,
    pub composition: CompositionConfig,
    pub kernel_study: KernelStudyConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            stimulus: StimulusConfig::default(),
            test_per_class: 1000,
            baseline: TrainPlan::default(),
            boundary: TrainPlan {
                train_images: 12000,
                ..TrainPlan::default()
            },
            composition: CompositionConfig::default(),
            kernel_study: KernelStudyConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn check(&self) -> Result<()> {
        self.stimulus.check()?;
        for plan in [&self.baseline, &self.boundary] {
            plan.train.check()?;
            if plan.train_images < 6 {
                return Err(Error::Config(
                    "train_images must cover all six classes".into(),
                ));
            }
        }
        let c = &self.composition;
        c.atom_train.check()?;
        c.counter_train.check()?;
        if self.test_per_class == 0 || c.test_per_class == 0 {
            return Err(Error::Config("test_per_class must be positive".into()));
        }
        if c.crop < 8 || c.width == 0 || c.max_iterations == 0 {
            return Err(Error::Config(
                "composition crop, width and max_iterations are too small".into(),
            ));
        }
        if !(0.0..=1.0).contains(&c.noise_fraction) {
            return Err(Error::Config("noise_fraction must lie in [0, 1]".into()));
        }
        if self.kernel_study.batch_size == 0 || self.kernel_study.images == 0 {
            return Err(Error::Config(
                "kernel study needs images and a positive batch size".into(),
            ));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form; embedded in every report.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}
