use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::calibration::{forward_estimate, Observation, SystemModel, ThetaParams};
use crate::channel::{add_noise, sample_impairments, sample_placement, synthesize_channel, ArrayParams, ImpairedSystem, SubcarrierParams, SPEED_OF_LIGHT};
use crate::error::Result;
use crate::recovery::nmse;
use crate::seeding::{derive_seed, rng_for, Stream};
use crate::tensor::Tensor3;

/// Offset separating held-out sample indices from training ones in the
/// seeded streams.
const TEST_OFFSET: u64 = 1 << 32;

/// One channel realization with its observation at the dataset SNR.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub h: Tensor3,
    pub y: Tensor3,
    pub ms_index: usize,
    pub position: [f64; 3],
}

/// Seeded synthetic data set: nominal model, hidden true system and samples.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: SystemModel,
    pub truth: ImpairedSystem,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// Channel estimator evaluated by [`eval_nmse`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// The observation itself.
    Ls,
    NominalMomp,
    TrainedMomp,
    /// Dictionaries built from the true parameters.
    IdealMomp,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [Estimator::Ls, Estimator::NominalMomp, Estimator::TrainedMomp, Estimator::IdealMomp];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Ls => "ls",
            Estimator::NominalMomp => "nominal-momp",
            Estimator::TrainedMomp => "trained-momp",
            Estimator::IdealMomp => "ideal-momp",
        }
    }
}

/// Nominal model described by a configuration.
pub fn build_model(cfg: &ExperimentConfig) -> Result<SystemModel> {
    let lambda = SPEED_OF_LIGHT / cfg.carrier_hz;
    let bs = ArrayParams::nominal_ula(cfg.dims.n_b, lambda)?;
    let ms = vec![ArrayParams::nominal_ula(cfg.dims.n_m, lambda)?; cfg.dims.users];
    let sub = SubcarrierParams::uniform(cfg.carrier_hz, cfg.subcarrier_spacing_hz, cfg.dims.n_s)?;
    SystemModel::new(bs, ms, sub, &cfg.grid, cfg.recovery.clone())
}

/// Hidden true system of a configuration.
pub fn build_truth(cfg: &ExperimentConfig, model: &SystemModel) -> Result<ImpairedSystem> {
    sample_impairments(&model.nominal_bs, &model.nominal_ms, &model.nominal_sub, &cfg.spreads, cfg.seed)
}

/// Noise seed of sample `index` at the `snr_slot`-th SNR.
pub fn noise_seed(seed: u64, index: u64, snr_slot: u64) -> u64 {
    derive_seed(seed, Stream::Noise, index.wrapping_add(snr_slot << 40))
}

fn sample(cfg: &ExperimentConfig, truth: &ImpairedSystem, index: u64, ms_index: usize, snr_db: f64) -> Result<Sample> {
    let mut rng = rng_for(cfg.seed, Stream::Geometry, index);
    let placement = sample_placement(&cfg.geometry, truth.sub.delay_period(), &mut rng)?;
    let h = synthesize_channel(&truth.bs, &truth.ms[ms_index], &truth.sub, &placement.paths)?;
    let (y, _) = add_noise(&h, snr_db, noise_seed(cfg.seed, index, 0))?;
    Ok(Sample {
        h,
        y,
        ms_index,
        position: placement.position,
    })
}

/// Generates the training split (`M·P` observations at the training SNR, user
/// major) and the held-out split (observed at the localization SNR).
pub fn generate(cfg: &ExperimentConfig) -> Result<Scenario> {
    cfg.validate()?;
    let model = build_model(cfg)?;
    let truth = build_truth(cfg, &model)?;
    let p = cfg.dims.positions_per_user;
    let q = cfg.dims.test_per_user;
    let train = (0..cfg.dims.users * p)
        .into_par_iter()
        .map(|k| sample(cfg, &truth, k as u64, k / p, cfg.train_snr_db))
        .collect::<Result<Vec<_>>>()?;
    let test = (0..cfg.dims.users * q)
        .into_par_iter()
        .map(|k| sample(cfg, &truth, TEST_OFFSET + k as u64, k / q, cfg.localization_snr_db))
        .collect::<Result<Vec<_>>>()?;
    Ok(Scenario { model, truth, train, test })
}

/// Training observations of a split; channels are not exposed.
pub fn observations(samples: &[Sample]) -> Vec<Observation> {
    samples
        .iter()
        .map(|s| Observation {
            y: s.y.clone(),
            ms_index: s.ms_index,
        })
        .collect()
}

/// Mean NMSE of `theta`-based recovery (or of the raw observation when
/// `theta` is `None`) over held-out channels at each SNR. The noise of sample
/// `k` at SNR slot `i` is seeded by `(seed, k, i + 1)`, so every estimator
/// sees the same observations.
pub fn eval_nmse(
    test: &[Sample],
    model: &SystemModel,
    theta: Option<&ThetaParams>,
    snr_db_list: &[f64],
    seed: u64,
) -> Result<Vec<f64>> {
    snr_db_list
        .iter()
        .enumerate()
        .map(|(slot, &snr)| {
            let errs = test
                .par_iter()
                .enumerate()
                .map(|(k, s)| {
                    let (y, _) = add_noise(&s.h, snr, noise_seed(seed, TEST_OFFSET + k as u64, slot as u64 + 1))?;
                    let est = match theta {
                        Some(t) => forward_estimate(&y.view(), t, s.ms_index, model)?,
                        None => y,
                    };
                    Ok(nmse(&est.view(), &s.h.view()))
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(errs.iter().sum::<f64>() / errs.len() as f64)
        })
        .collect()
}
