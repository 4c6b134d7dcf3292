use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use serde::{Deserialize, Serialize};
use wmest::experiments::ExperimentConfig;
use wmest::worldgraph::DEFAULT_WL_DEPTH;
use wmest::{LayoutConfig, ScoreMode, TrainConfig};

/// Contents of `--config <file>` (TOML). Every section is optional.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out: Option<PathBuf>,
    pub layout: LayoutConfig,
    pub training: TrainingSection,
    pub estimator: EstimatorSection,
    pub experiments: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingSection {
    pub wl_depth: usize,
    #[serde(flatten)]
    pub train: TrainConfig,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            wl_depth: DEFAULT_WL_DEPTH,
            train: TrainConfig::default(),
        }
    }
}

/// Defaults for the `estimate` subcommand. Per-experiment penalties live in
/// the `experiments` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorSection {
    pub lambda: f64,
    pub mode: ScoreMode,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        Self {
            lambda: 0.05,
            mode: ScoreMode::Cav,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.layout.validate()?;
        cfg.training.train.validate()?;
        cfg.experiments.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_keeps_defaults() {
        let cfg: RunConfig = toml::from_str(
            r#"
            [training]
            epochs = 20
            wl_depth = 2

            [experiments]
            seed = 3
            trials = 10
            "#,
        )
        .unwrap();
        assert_eq!(cfg.training.train.epochs, 20);
        assert_eq!(cfg.training.train.dim, TrainConfig::default().dim);
        assert_eq!(cfg.training.wl_depth, 2);
        assert_eq!(cfg.experiments.seed, 3);
        assert_eq!(cfg.layout, LayoutConfig::default());
    }

    #[test]
    fn unknown_sections_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[trainign]\nepochs = 1").is_err());
    }

    #[test]
    fn default_config_round_trips() {
        let text = toml::to_string(&RunConfig::default()).unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), RunConfig::default());
    }
}
