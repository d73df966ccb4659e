//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{HtnError, Result};
use crate::model::{LossConfig, NormVariant};
use crate::train::SweepConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Iris {
        path: PathBuf,
    },
    Mnist {
        images: PathBuf,
        labels: PathBuf,
        /// Held-out files. Without them the training files are split.
        #[serde(default)]
        test_images: Option<PathBuf>,
        #[serde(default)]
        test_labels: Option<PathBuf>,
        #[serde(default = "default_pair")]
        class_pair: (u8, u8),
        #[serde(default)]
        max_train: Option<usize>,
        #[serde(default)]
        max_test: Option<usize>,
    },
    Synthetic {
        n_samples: usize,
        n_features: usize,
        n_classes: usize,
        #[serde(default = "default_noise")]
        noise: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn default_pair() -> (u8, u8) {
    (0, 1)
}

fn default_noise() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { train_fraction: 0.8, seed: 42 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    #[default]
    Data,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub chi: usize,
    pub xi: usize,
    /// One entry per feature; defaults to two-dimensional legs on the last
    /// `ceil(log2(classes))` sites.
    #[serde(default)]
    pub output_dims: Option<Vec<usize>>,
    #[serde(default)]
    pub init: InitKind,
}

/// Axes of a hyperparameter grid. Missing `chi`/`xi` fall back to the model
/// values; exactly one of `t` and `w` must be given.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default)]
    pub chi: Option<Vec<usize>>,
    #[serde(default)]
    pub xi: Option<Vec<usize>>,
    #[serde(default)]
    pub t: Option<Vec<f64>>,
    #[serde(default)]
    pub w: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub split: SplitConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub grid: Option<GridConfig>,
}

/// One point of a grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub chi: usize,
    pub xi: usize,
    pub norm: NormVariant,
}

impl Cell {
    pub fn t_or_w(&self) -> Option<f64> {
        match self.norm {
            NormVariant::Threshold { t } => Some(t),
            NormVariant::Weight { w } => Some(w),
            _ => None,
        }
    }

    /// File stem, e.g. `chi8_xi2_t0.001`.
    pub fn stem(&self) -> String {
        let tail = match self.norm {
            NormVariant::Threshold { t } => format!("_t{t}"),
            NormVariant::Weight { w } => format!("_w{w}"),
            NormVariant::Full => "_full".into(),
            NormVariant::None => "_none".into(),
        };
        format!("chi{}_xi{}{tail}", self.chi, self.xi)
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config and resolves dataset paths relative to its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HtnError::io_at(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.dataset {
            DatasetConfig::Iris { path } => fix(path),
            DatasetConfig::Mnist { images, labels, test_images, test_labels, .. } => {
                fix(images);
                fix(labels);
                if let Some(p) = test_images {
                    fix(p);
                }
                if let Some(p) = test_labels {
                    fix(p);
                }
            }
            DatasetConfig::Synthetic { .. } => {}
        }
    }

    /// Replaces both the split seed and the training seed.
    pub fn override_seed(&mut self, seed: u64) {
        self.split.seed = seed;
        self.sweep.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.sweep.validate()?;
        if self.model.chi < 1 || self.model.xi < 1 {
            return Err(HtnError::Config("chi and xi must be at least 1".into()));
        }
        if let DatasetConfig::Mnist { test_images, test_labels, .. } = &self.dataset {
            if test_images.is_some() != test_labels.is_some() {
                return Err(HtnError::Config("test_images and test_labels go together".into()));
            }
        }
        if let Some(g) = &self.grid {
            match (&g.t, &g.w) {
                (Some(_), None) | (None, Some(_)) => {}
                _ => return Err(HtnError::Config("grid needs exactly one of t and w".into())),
            }
            let bad_list = [g.chi.as_ref().map(Vec::len), g.xi.as_ref().map(Vec::len)].contains(&Some(0))
                || g.t.as_ref().or(g.w.as_ref()).is_some_and(Vec::is_empty);
            if bad_list {
                return Err(HtnError::Config("grid axes must not be empty".into()));
            }
            if g.chi.iter().chain(&g.xi).flatten().any(|&v| v < 1) {
                return Err(HtnError::Config("grid chi and xi values must be at least 1".into()));
            }
            for c in self.cells() {
                LossConfig { norm: c.norm, ..self.loss }.validate()?;
            }
        }
        Ok(())
    }

    /// Grid cells in `(chi, xi, t|w)` order, or the single model cell.
    pub fn cells(&self) -> Vec<Cell> {
        let Some(g) = &self.grid else {
            return vec![Cell { chi: self.model.chi, xi: self.model.xi, norm: self.loss.norm }];
        };
        let chis = g.chi.clone().unwrap_or_else(|| vec![self.model.chi]);
        let xis = g.xi.clone().unwrap_or_else(|| vec![self.model.xi]);
        let norms: Vec<NormVariant> = match (&g.t, &g.w) {
            (Some(ts), _) => ts.iter().map(|&t| NormVariant::Threshold { t }).collect(),
            (None, Some(ws)) => ws.iter().map(|&w| NormVariant::Weight { w }).collect(),
            (None, None) => vec![self.loss.norm],
        };
        let mut out = Vec::new();
        for &chi in &chis {
            for &xi in &xis {
                for &norm in &norms {
                    out.push(Cell { chi, xi, norm });
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GRID: &str = r#"{
        "dataset": {"kind": "iris", "path": "iris.csv"},
        "model": {"chi": 2, "xi": 2},
        "grid": {"chi": [2, 8], "t": [1.0, 0.1, 0.001]}
    }"#;

    #[test]
    fn parses_grid_with_defaults() {
        let cfg = ExperimentConfig::from_json(GRID).unwrap();
        assert_eq!(cfg.split, SplitConfig::default());
        assert_eq!(cfg.sweep.n_sweeps, 20);
        assert_eq!(cfg.loss, LossConfig::default());
        let cells = cfg.cells();
        assert_eq!(cells.len(), 6);
        assert_eq!(cells[5].stem(), "chi8_xi2_t0.001");
    }

    #[test]
    fn rejects_both_t_and_w() {
        let text = GRID.replace(r#""t": [1.0, 0.1, 0.001]"#, r#""t": [1.0], "w": [0.5]"#);
        assert!(matches!(ExperimentConfig::from_json(&text), Err(HtnError::Config(_))));
        let text = GRID.replace(r#", "t": [1.0, 0.1, 0.001]"#, "");
        assert!(matches!(ExperimentConfig::from_json(&text), Err(HtnError::Config(_))));
    }

    #[test]
    fn paths_resolve_against_the_config_dir() {
        let mut cfg = ExperimentConfig::from_json(GRID).unwrap();
        cfg.resolve_paths(Path::new("/data/exp"));
        assert_eq!(cfg.dataset, DatasetConfig::Iris { path: "/data/exp/iris.csv".into() });
    }

    #[test]
    fn loss_section_accepts_partial_fields() {
        let text = GRID.replace(r#""model""#, r#""loss": {"norm": {"kind": "weight", "w": 0.5}}, "model""#);
        let cfg = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(cfg.loss.norm, NormVariant::Weight { w: 0.5 });
        assert_eq!(cfg.loss.lambda, crate::model::DEFAULT_LAMBDA);
    }
}
