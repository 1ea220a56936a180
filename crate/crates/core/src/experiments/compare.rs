//! Single-dimension comparison between physically parameterized calibration
//! (OMPnet) and free-form dictionary learning (MOD).
//!
//! Snapshots are random columns of the mode-1 unfolding of synthetic
//! channels, so both methods work on `N_B`-dimensional vectors over the BS
//! angle dictionary.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::scenario::{build_model, build_truth};
use crate::calibration::{train, Observation, ParamGroups, SystemModel, ThetaParams, TrainConfig};
use crate::channel::{add_noise, sample_placement, synthesize_channel, ArrayParams, ImpairedSystem, SubcarrierParams};
use crate::error::{Error, Result};
use crate::mod_baseline::{mod_train, snapshot_nmse, stack_columns};
use crate::recovery::{RecoveryConfig, Selector};
use crate::seeding::{derive_seed, rng_for, Stream};
use crate::tensor::{CMatrix, CVector, Tensor3};
use rand::Rng;

const TRAIN_OFFSET: u64 = 2 << 32;
const TEST_OFFSET: u64 = 3 << 32;

/// One point of the comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparePoint {
    /// Training-set size `L`.
    pub size: usize,
    pub snr_db: f64,
    pub nominal: f64,
    pub ompnet: f64,
    /// `None` when MOD's preconditions fail at this size.
    pub mod_nmse: Option<f64>,
}

/// Clean BS snapshot `t`: a random column of the mode-1 unfolding of a fresh
/// channel of a random user.
fn snapshot(cfg: &ExperimentConfig, truth: &ImpairedSystem, index: u64) -> Result<CVector> {
    let mut rng = rng_for(cfg.seed, Stream::Snapshot, index);
    let placement = sample_placement(&cfg.geometry, truth.sub.delay_period(), &mut rng)?;
    let m = rng.random_range(0..truth.ms.len());
    let h = synthesize_channel(&truth.bs, &truth.ms[m], &truth.sub, &placement.paths)?;
    let (_, n_m, n_s) = h.dim();
    let j = rng.random_range(0..n_m);
    let k = rng.random_range(0..n_s);
    Ok(h.slice(ndarray::s![.., j, k]).to_owned())
}

fn noisy(v: &CVector, snr_db: f64, seed: u64) -> Result<CVector> {
    let t = Tensor3::from_shape_vec((v.len(), 1, 1), v.to_vec()).expect("vector shape");
    let (y, _) = add_noise(&t, snr_db, seed)?;
    Ok(y.into_iter().collect())
}

/// Calibration model restricted to the BS dictionary: one-antenna MS and a
/// single subcarrier, so every atom is a BS steering vector.
pub fn single_dimension_model(base: &SystemModel, max_atoms: usize) -> Result<SystemModel> {
    let ms = ArrayParams::nominal_ula(1, base.wavelength())?;
    let carrier = base.nominal_sub.frequencies.iter().sum::<f64>() / base.nominal_sub.len() as f64;
    let sub = SubcarrierParams::new(vec![carrier], base.nominal_sub.spacing, 0.0)?;
    SystemModel::with_grids(
        base.nominal_bs.clone(),
        vec![ms],
        sub,
        base.angle_grid_b.clone(),
        vec![std::f64::consts::FRAC_PI_2],
        vec![0.0],
        RecoveryConfig {
            selector: Selector::Omp,
            max_atoms,
            residual_tol: 0.0,
            n_refine: 0,
        },
    )
}

fn to_observation(v: &CVector) -> Observation {
    Observation {
        y: Tensor3::from_shape_vec((v.len(), 1, 1), v.to_vec()).expect("vector shape"),
        ms_index: 0,
    }
}

/// Runs both learners for every size and SNR of `cfg.compare`. Training sets
/// are nested: size `L` uses the first `L` snapshots.
pub fn compare_mod(cfg: &ExperimentConfig) -> Result<Vec<ComparePoint>> {
    cfg.validate()?;
    let c = &cfg.compare;
    let base = build_model(cfg)?;
    let truth = build_truth(cfg, &base)?;
    let model = single_dimension_model(&base, c.max_atoms)?;
    let nominal_theta = model.nominal_theta();
    let d_nominal = model.dictionaries(&nominal_theta, 0)?.d_b;

    let max_size = *c.dataset_sizes.iter().max().expect("non-empty");
    let train_clean: Vec<CVector> = (0..max_size as u64)
        .into_par_iter()
        .map(|t| snapshot(cfg, &truth, TRAIN_OFFSET + t))
        .collect::<Result<_>>()?;
    let test_clean: Vec<CVector> = (0..c.test_snapshots as u64)
        .into_par_iter()
        .map(|t| snapshot(cfg, &truth, TEST_OFFSET + t))
        .collect::<Result<_>>()?;
    let test_truth = stack_columns(&test_clean)?;

    let mut points = Vec::new();
    for (slot, &snr) in c.snr_db_list.iter().enumerate() {
        let noise = |offset: u64, t: usize| derive_seed(cfg.seed, Stream::Noise, offset + t as u64 + ((slot as u64) << 40));
        let train_noisy: Vec<CVector> = train_clean
            .iter()
            .enumerate()
            .map(|(t, v)| noisy(v, snr, noise(TRAIN_OFFSET, t)))
            .collect::<Result<_>>()?;
        let test_noisy = stack_columns(
            &test_clean
                .iter()
                .enumerate()
                .map(|(t, v)| noisy(v, snr, noise(TEST_OFFSET, t)))
                .collect::<Result<Vec<_>>>()?,
        )?;
        let nominal = snapshot_nmse(&test_noisy, &test_truth, &d_nominal, c.max_atoms)?;
        for &size in &c.dataset_sizes {
            let subset = &train_noisy[..size];
            let tcfg = TrainConfig {
                batch_size: c.batch_size.min(size),
                learning_rate: c.learning_rate,
                epochs: c.epochs,
                groups: ParamGroups {
                    ms_positions: false,
                    ms_gains: false,
                    ppm: false,
                },
                seed: cfg.seed,
                ..cfg.train.clone()
            };
            let obs: Vec<Observation> = subset.iter().map(to_observation).collect();
            let learned: ThetaParams = train(&obs, &nominal_theta, &model, &tcfg)?.theta;
            let d_learned = model.dictionaries(&learned, 0)?.d_b;
            let ompnet = snapshot_nmse(&test_noisy, &test_truth, &d_learned, c.max_atoms)?;

            let y: CMatrix = stack_columns(subset)?;
            let mod_nmse = match mod_train(&y, &d_nominal, c.max_atoms, c.mod_iterations) {
                Ok(state) => Some(snapshot_nmse(&test_noisy, &test_truth, &state.dictionary, c.max_atoms)?),
                Err(Error::RankDeficient(_)) => None,
                Err(e) => return Err(e),
            };
            points.push(ComparePoint {
                size,
                snr_db: snr,
                nominal,
                ompnet,
                mod_nmse,
            });
        }
    }
    Ok(points)
}
