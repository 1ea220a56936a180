use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::{ParamGroups, TrainConfig};
use crate::channel::{GeometryConfig, ImpairmentSpreads, SPEED_OF_LIGHT};
use crate::dictionary::GridSpec;
use crate::error::{Error, Result};
use crate::recovery::{RecoveryConfig, Selector};

/// Array sizes, subcarrier count and dataset sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Dims {
    pub n_b: usize,
    pub n_m: usize,
    pub n_s: usize,
    /// Number of MSs `M`.
    pub users: usize,
    /// Training positions per MS `P`.
    pub positions_per_user: usize,
    /// Held-out positions per MS.
    pub test_per_user: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Dims {
            n_b: 8,
            n_m: 4,
            n_s: 32,
            users: 3,
            positions_per_user: 40,
            test_per_user: 20,
        }
    }
}

/// Settings of the single-dimension learned-dictionary comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompareConfig {
    /// Training-set sizes `L`.
    pub dataset_sizes: Vec<usize>,
    pub snr_db_list: Vec<f64>,
    pub test_snapshots: usize,
    /// Atoms per snapshot for coding and evaluation.
    pub max_atoms: usize,
    pub mod_iterations: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            dataset_sizes: vec![1, 4, 16, 32, 64, 128, 256],
            snr_db_list: vec![5.0, 15.0],
            test_snapshots: 200,
            max_atoms: 3,
            mod_iterations: 10,
            epochs: 20,
            batch_size: 16,
            learning_rate: 5e-3,
        }
    }
}

/// Everything a CLI run depends on besides the seed override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dims: Dims,
    pub grid: GridSpec,
    pub carrier_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub spreads: ImpairmentSpreads,
    pub geometry: GeometryConfig,
    /// Evaluation SNRs, dB.
    pub snr_db_list: Vec<f64>,
    /// SNR of the training observations, dB.
    pub train_snr_db: f64,
    /// SNR of the observations used for localization, dB.
    pub localization_snr_db: f64,
    pub recovery: RecoveryConfig,
    pub train: TrainConfig,
    pub compare: CompareConfig,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dims: Dims::default(),
            grid: GridSpec { a_b: 32, a_m: 16, a_s: 64 },
            carrier_hz: 28e9,
            subcarrier_spacing_hz: 1.44e6,
            spreads: ImpairmentSpreads::default(),
            geometry: GeometryConfig {
                paths: 3,
                ..GeometryConfig::default()
            },
            snr_db_list: vec![0.0, 5.0, 15.0],
            train_snr_db: 5.0,
            localization_snr_db: 15.0,
            recovery: RecoveryConfig {
                selector: Selector::Momp,
                max_atoms: 3,
                residual_tol: 0.0,
                n_refine: 3,
            },
            train: TrainConfig {
                batch_size: 10,
                learning_rate: 1e-2,
                epochs: 30,
                groups: ParamGroups::default(),
                ..TrainConfig::default()
            },
            compare: CompareConfig::default(),
            seed: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dims;
        for (name, v) in [
            ("n_b", d.n_b),
            ("n_m", d.n_m),
            ("n_s", d.n_s),
            ("users", d.users),
            ("positions_per_user", d.positions_per_user),
            ("test_per_user", d.test_per_user),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("dims.{name} must be at least 1")));
            }
        }
        self.grid.validate()?;
        if !(self.carrier_hz > 0.0 && self.subcarrier_spacing_hz > 0.0) {
            return Err(Error::Config("carrier and subcarrier spacing must be positive".into()));
        }
        if self.snr_db_list.is_empty() || self.snr_db_list.iter().any(|s| s.is_nan()) {
            return Err(Error::Config("snr_db_list must be non-empty and free of NaN".into()));
        }
        if self.geometry.paths == 0 {
            return Err(Error::Config("geometry.paths must be at least 1".into()));
        }
        let range = SPEED_OF_LIGHT / self.subcarrier_spacing_hz;
        if self.geometry.max_distance_m >= range {
            return Err(Error::Config(format!(
                "max distance {} m exceeds the unambiguous range {range:.1} m",
                self.geometry.max_distance_m
            )));
        }
        self.spreads.validate()?;
        self.geometry.validate()?;
        self.train.validate()?;
        if self.recovery.max_atoms == 0 {
            return Err(Error::Config("recovery.max_atoms must be at least 1".into()));
        }
        let c = &self.compare;
        if c.dataset_sizes.is_empty() || c.dataset_sizes.contains(&0) || c.test_snapshots == 0 || c.max_atoms == 0 {
            return Err(Error::Config("compare sizes and counts must be at least 1".into()));
        }
        if c.batch_size == 0 || c.snr_db_list.is_empty() {
            return Err(Error::Config("compare.batch_size and compare.snr_db_list must be non-empty".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(&json))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
