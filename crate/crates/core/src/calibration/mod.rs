//! Unfolded sparse recovery with physically parameterized dictionaries.
//!
//! The estimator `Ĥ_θ(Y)` builds the factor dictionaries from the physical
//! parameters `θ` and runs [`sparse_recover`]. Training minimizes the
//! unsupervised mini-batch cost `(1/B) Σ ‖Ĥ_θ(Y) − Y‖_F²` by gradient
//! descent, treating the selected support as piecewise constant in `θ`.

mod gradient;
mod theta;
mod train;

pub use gradient::{cost_fixed_support, finite_difference_gradient, gradient, BatchGradient};
pub use theta::{align_gauge, param_mae, ParamGroups, ParamMae, Packing, ThetaParams};
pub use train::{train, Checkpoint, OptimizerKind, TrainConfig, TrainOutcome};

use std::collections::BTreeMap;

use ndarray::ArrayView3;
use serde::{Deserialize, Serialize};

use crate::channel::{ArrayParams, SubcarrierParams};
use crate::dictionary::{build_angle_grid, build_delay_grid, DictionarySet, GridSpec};
use crate::error::{Error, Result};
use crate::recovery::{sparse_recover, RecoveryConfig};
use crate::tensor::{frobenius_norm_sq, Tensor3, C64};

/// One training or evaluation observation `Y` of user `ms_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub y: Tensor3,
    pub ms_index: usize,
}

/// Nominal geometry, grids and recovery settings shared by every estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemModel {
    pub nominal_bs: ArrayParams,
    pub nominal_ms: Vec<ArrayParams>,
    pub nominal_sub: SubcarrierParams,
    pub angle_grid_b: Vec<f64>,
    pub angle_grid_m: Vec<f64>,
    pub delay_grid: Vec<f64>,
    pub recovery: RecoveryConfig,
}

impl SystemModel {
    /// Model on the standard cosine-uniform angle grids and one-period delay
    /// grid.
    pub fn new(
        nominal_bs: ArrayParams,
        nominal_ms: Vec<ArrayParams>,
        nominal_sub: SubcarrierParams,
        grid: &GridSpec,
        recovery: RecoveryConfig,
    ) -> Result<SystemModel> {
        grid.validate()?;
        let angle_grid_b = build_angle_grid(grid.a_b)?;
        let angle_grid_m = build_angle_grid(grid.a_m)?;
        let delay_grid = build_delay_grid(grid.a_s, nominal_sub.spacing)?;
        SystemModel::with_grids(nominal_bs, nominal_ms, nominal_sub, angle_grid_b, angle_grid_m, delay_grid, recovery)
    }

    pub fn with_grids(
        nominal_bs: ArrayParams,
        nominal_ms: Vec<ArrayParams>,
        nominal_sub: SubcarrierParams,
        angle_grid_b: Vec<f64>,
        angle_grid_m: Vec<f64>,
        delay_grid: Vec<f64>,
        recovery: RecoveryConfig,
    ) -> Result<SystemModel> {
        nominal_bs.validate()?;
        nominal_sub.validate()?;
        if nominal_ms.is_empty() {
            return Err(Error::Config("at least one MS is required".into()));
        }
        for ms in &nominal_ms {
            ms.validate()?;
            if ms.len() != nominal_ms[0].len() {
                return Err(Error::Config("all MS arrays must have the same size".into()));
            }
        }
        Ok(SystemModel {
            nominal_bs,
            nominal_ms,
            nominal_sub,
            angle_grid_b,
            angle_grid_m,
            delay_grid,
            recovery,
        })
    }

    pub fn users(&self) -> usize {
        self.nominal_ms.len()
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.nominal_bs.len(), self.nominal_ms[0].len(), self.nominal_sub.len())
    }

    pub fn wavelength(&self) -> f64 {
        self.nominal_bs.wavelength
    }

    pub fn nominal_theta(&self) -> ThetaParams {
        ThetaParams::nominal(&self.nominal_bs, &self.nominal_ms)
    }

    pub fn packing(&self, groups: ParamGroups) -> Packing {
        Packing::new(self.nominal_bs.len(), self.nominal_ms[0].len(), self.users(), groups)
    }

    /// Dictionaries of user `ms_index` under parameters `theta`.
    pub fn dictionaries(&self, theta: &ThetaParams, ms_index: usize) -> Result<DictionarySet> {
        if ms_index >= self.users() {
            return Err(Error::Shape(format!("MS index {ms_index} out of range for {} users", self.users())));
        }
        let bs = theta.bs_array(&self.nominal_bs);
        let ms = theta.ms_array(&self.nominal_ms[ms_index], ms_index);
        let sub = theta.subcarriers(&self.nominal_sub);
        DictionarySet::from_grids(
            &bs,
            &ms,
            &sub,
            self.angle_grid_b.clone(),
            self.angle_grid_m.clone(),
            self.delay_grid.clone(),
        )
    }

    /// Dictionaries for every user that appears in `batch`, keyed by index.
    pub(crate) fn dictionaries_for(&self, theta: &ThetaParams, batch: &[Observation]) -> Result<BTreeMap<usize, DictionarySet>> {
        let mut out = BTreeMap::new();
        for obs in batch {
            if let std::collections::btree_map::Entry::Vacant(e) = out.entry(obs.ms_index) {
                e.insert(self.dictionaries(theta, obs.ms_index)?);
            }
        }
        Ok(out)
    }
}

/// Channel estimate `Ĥ_θ(Y)` for an observation of user `ms_index`.
pub fn forward_estimate(y: &ArrayView3<'_, C64>, theta: &ThetaParams, ms_index: usize, model: &SystemModel) -> Result<Tensor3> {
    let dicts = model.dictionaries(theta, ms_index)?;
    Ok(sparse_recover(y, &dicts, &model.recovery)?.estimate)
}

/// Mini-batch reconstruction cost `(1/B) Σ ‖Ĥ_θ(Y) − Y‖_F²`.
pub fn cost(batch: &[Observation], theta: &ThetaParams, model: &SystemModel) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Config("cost needs a non-empty batch".into()));
    }
    let dicts = model.dictionaries_for(theta, batch)?;
    let mut total = 0.0;
    for obs in batch {
        let est = sparse_recover(&obs.y.view(), &dicts[&obs.ms_index], &model.recovery)?.estimate;
        total += frobenius_norm_sq((&est - &obs.y).iter());
    }
    Ok(total / batch.len() as f64)
}
