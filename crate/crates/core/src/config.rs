//! Run configuration, read from TOML.
//!
//! ```toml
//! [grid]            # sweep definition, see `GridSpec`
//! [split]           # test_fraction, seed
//! [models.fcnn]     # hyperparameters per model kind
//! [models.bilstm]
//! [models.bilstm-pinn]
//! [paths]           # dataset, weights_dir, reports_dir
//! [training]        # seeds for best-of-seeds selection
//! [search]          # trials, seed
//! [desk]            # optional reduced-scale overrides
//! ```
//!
//! Omitted sections take the full reference values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::GridSpec;
use crate::error::{Error, Result};
use crate::nn::{Hyperparams, ModelKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelsConfig {
    pub fcnn: Hyperparams,
    pub bilstm: Hyperparams,
    #[serde(rename = "bilstm-pinn")]
    pub bilstm_pinn: Hyperparams,
}

impl Default for ModelsConfig {
    fn default() -> Self {
        ModelsConfig {
            fcnn: ModelKind::Fcnn.default_hyperparams(),
            bilstm: ModelKind::Bilstm.default_hyperparams(),
            bilstm_pinn: ModelKind::BilstmPinn.default_hyperparams(),
        }
    }
}

impl ModelsConfig {
    pub fn get(&self, kind: ModelKind) -> &Hyperparams {
        match kind {
            ModelKind::Fcnn => &self.fcnn,
            ModelKind::Bilstm => &self.bilstm,
            ModelKind::BilstmPinn => &self.bilstm_pinn,
        }
    }

    fn get_mut(&mut self, kind: ModelKind) -> &mut Hyperparams {
        match kind {
            ModelKind::Fcnn => &mut self.fcnn,
            ModelKind::Bilstm => &mut self.bilstm,
            ModelKind::BilstmPinn => &mut self.bilstm_pinn,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub dataset: PathBuf,
    pub weights_dir: PathBuf,
    pub reports_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            dataset: "out/dataset.bin".into(),
            weights_dir: "out/weights".into(),
            reports_dir: "out/reports".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    /// One run per seed; the run with the lowest mean test RMSE is kept.
    pub seeds: Vec<u64>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig { seeds: vec![0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub trials: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { trials: 30, seed: 0 }
    }
}

/// Reduced-scale settings applied over the grid and every model section.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeskOverrides {
    pub subsample: Option<u64>,
    pub hidden_size: Option<usize>,
    pub sequence_length: Option<usize>,
    pub epochs: Option<usize>,
    pub samples_per_curve: Option<usize>,
    pub window_stride: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub split: SplitConfig,
    pub models: ModelsConfig,
    pub paths: PathsConfig,
    pub training: TrainingConfig,
    pub search: SearchConfig,
    pub desk: Option<DeskOverrides>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Relative paths in the file are resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            for p in [&mut cfg.paths.dataset, &mut cfg.paths.weights_dir, &mut cfg.paths.reports_dir] {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let effective = self.effective();
        effective.grid.validate()?;
        let f = effective.split.test_fraction;
        if !(0.0 < f && f < 1.0) {
            return Err(Error::Config(format!("split.test_fraction must lie in (0, 1), got {f}")));
        }
        for kind in ModelKind::ALL {
            effective.models.get(kind).validate(kind)?;
        }
        if effective.training.seeds.is_empty() {
            return Err(Error::Config("training.seeds must not be empty".into()));
        }
        if effective.search.trials == 0 {
            return Err(Error::Config("search.trials must be positive".into()));
        }
        Ok(())
    }

    /// The configuration with any desk overrides folded in.
    pub fn effective(&self) -> RunConfig {
        let mut cfg = self.clone();
        let Some(desk) = cfg.desk.take() else {
            return cfg;
        };
        if let Some(s) = desk.subsample {
            cfg.grid.subsample = s;
        }
        for kind in ModelKind::ALL {
            let hp = cfg.models.get_mut(kind);
            if let Some(h) = desk.hidden_size {
                hp.hidden_size = h;
            }
            if let Some(k) = desk.sequence_length.filter(|_| kind.is_recurrent()) {
                hp.sequence_length = k;
            }
            if let Some(e) = desk.epochs {
                hp.epochs = e;
            }
            if desk.samples_per_curve.is_some() {
                hp.samples_per_curve = desk.samples_per_curve;
            }
            if let Some(s) = desk.window_stride {
                hp.window_stride = s;
            }
        }
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_reference_setup() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg.grid, GridSpec::default());
        assert_eq!(cfg.models.bilstm_pinn.lambda, 0.2);
        assert_eq!(cfg.effective(), cfg);
    }

    #[test]
    fn desk_overrides_apply_to_every_model() {
        let cfg = RunConfig::from_toml(
            "[desk]\nsubsample = 300\nhidden_size = 64\nsequence_length = 10\nepochs = 10\n",
        )
        .unwrap();
        let e = cfg.effective();
        assert_eq!(e.grid.subsample, 300);
        for kind in ModelKind::ALL {
            assert_eq!(e.models.get(kind).hidden_size, 64);
            assert_eq!(e.models.get(kind).epochs, 10);
        }
        assert_eq!(e.models.fcnn.sequence_length, 0);
        assert_eq!(e.models.bilstm.sequence_length, 10);
    }

    #[test]
    fn round_trip_and_rejections() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert!(RunConfig::from_toml("[split]\ntest_fraction = 1.5\nseed = 0\n").is_err());
        assert!(RunConfig::from_toml("[bogus]\nx = 1\n").is_err());
        assert!(RunConfig::from_toml("[training]\nseeds = []\n").is_err());
    }
}
