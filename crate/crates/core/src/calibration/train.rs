use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{gradient, Observation, Packing, ParamGroups, SystemModel, ThetaParams};
use crate::error::{Error, Result};
use crate::seeding::{rng_for, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Mini-batch training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Step size in optimizer units (positions measured in wavelengths).
    pub learning_rate: f64,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub groups: ParamGroups,
    /// Keeps the part of each array's position and phase update that is
    /// linear in element position at zero. That direction shifts every atom
    /// of the angle dictionary at once and the cost barely sees it.
    pub hold_steering_ramp: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 100,
            learning_rate: 1e-3,
            epochs: 50,
            optimizer: OptimizerKind::Adam,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            groups: ParamGroups::default(),
            hold_steering_ramp: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::Config("learning_rate must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub theta: ThetaParams,
    /// Mean cost over each epoch, evaluated in the forward pass before each
    /// update.
    pub loss_history: Vec<f64>,
    pub packing: Packing,
}

/// Serialized training state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub packed_theta: Vec<f64>,
    pub packing: Packing,
    pub theta: ThetaParams,
    pub epoch: usize,
    pub loss_history: Vec<f64>,
    pub config_hash: String,
}

struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    steps: Vec<u64>,
}

impl Optimizer {
    fn new(cfg: &TrainConfig, len: usize) -> Self {
        Optimizer {
            kind: cfg.optimizer,
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.epsilon,
            m: vec![0.0; len],
            v: vec![0.0; len],
            steps: vec![0; len],
        }
    }

    /// Updates `params[k]` for every active `k`. `grad` and the step are in
    /// optimizer units; `scales` converts the step back to raw units.
    fn step(&mut self, params: &mut [f64], grad: &[f64], scales: &[f64], active: &[usize]) {
        for &k in active {
            let g = grad[k];
            let delta = match self.kind {
                OptimizerKind::Sgd => self.lr * g,
                OptimizerKind::Adam => {
                    // Moments advance only when the coordinate is active, so
                    // users absent from a batch are left untouched.
                    self.steps[k] += 1;
                    let t = self.steps[k] as i32;
                    self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
                    self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
                    let m_hat = self.m[k] / (1.0 - self.beta1.powi(t));
                    let v_hat = self.v[k] / (1.0 - self.beta2.powi(t));
                    self.lr * m_hat / (v_hat.sqrt() + self.eps)
                }
            };
            params[k] -= scales[k] * delta;
        }
    }
}

/// Index blocks whose update must stay free of a linear trend, each paired
/// with the centered nominal element positions.
fn ramp_blocks(model: &SystemModel, packing: &Packing) -> Vec<(Vec<usize>, Vec<f64>)> {
    fn centered(array: &crate::channel::ArrayParams) -> Vec<f64> {
        let y: Vec<f64> = array.positions.iter().map(|p| p[1]).collect();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        y.iter().map(|v| v - mean).collect()
    }
    let n_b = model.nominal_bs.len();
    let r = centered(&model.nominal_bs);
    let mut blocks = vec![
        ((0..n_b).map(|i| packing.bs_y(i)).collect(), r.clone()),
        ((0..n_b).map(|i| packing.bs_phase(i)).collect(), r),
    ];
    for (m, ms) in model.nominal_ms.iter().enumerate() {
        let r = centered(ms);
        let n = ms.len();
        if let Some(idx) = (0..n).map(|i| packing.ms_y(m, i)).collect::<Option<Vec<_>>>() {
            blocks.push((idx, r.clone()));
        }
        if let Some(idx) = (0..n).map(|i| packing.ms_phase(m, i)).collect::<Option<Vec<_>>>() {
            blocks.push((idx, r));
        }
    }
    blocks.retain(|(_, r)| r.iter().any(|v| *v != 0.0));
    blocks
}

fn remove_ramps(params: &mut [f64], reference: &[f64], blocks: &[(Vec<usize>, Vec<f64>)]) {
    for (idx, r) in blocks {
        let rr: f64 = r.iter().map(|v| v * v).sum();
        let slope = idx.iter().zip(r).map(|(&k, v)| (params[k] - reference[k]) * v).sum::<f64>() / rr;
        if slope != 0.0 {
            for (&k, v) in idx.iter().zip(r) {
                params[k] -= slope * v;
            }
        }
    }
}

/// Mini-batch training of the physical parameters.
///
/// Each epoch visits the dataset in a seeded random order. A batch updates
/// the shared parameters (BS, coupling, subcarriers) and only the blocks of
/// the users present in that batch. Only observations are read, never the
/// true channels.
pub fn train(dataset: &[Observation], theta0: &ThetaParams, model: &SystemModel, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("training dataset is empty".into()));
    }
    let packing = model.packing(cfg.groups);
    let scales = packing.scales(model.wavelength());
    let mut theta = theta0.clone();
    let mut params = theta.pack(&packing)?;
    let reference = params.clone();
    let blocks = if cfg.hold_steering_ramp { ramp_blocks(model, &packing) } else { Vec::new() };
    let mut optimizer = Optimizer::new(cfg, packing.len());
    let shared = packing.shared_block();
    let mut loss_history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut rng_for(cfg.seed, Stream::Shuffle, epoch as u64));
        let mut epoch_cost = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Observation> = chunk.iter().map(|&i| dataset[i].clone()).collect();
            let g = gradient(&batch, &theta, model, &packing)?;
            if !g.cost.is_finite() || g.gradient.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("non-finite cost or gradient in epoch {epoch}")));
            }
            epoch_cost += g.cost * batch.len() as f64;

            let scaled: Vec<f64> = g.gradient.iter().zip(&scales).map(|(g, s)| g * s).collect();
            let mut users: Vec<usize> = batch.iter().map(|o| o.ms_index).collect();
            users.sort_unstable();
            users.dedup();
            let mut active = shared.clone();
            for m in users {
                active.extend(packing.ms_block(m));
            }
            optimizer.step(&mut params, &scaled, &scales, &active);
            remove_ramps(&mut params, &reference, &blocks);
            theta.unpack(&packing, &params)?;
            if theta.coupling().norm() >= 1.0 {
                return Err(Error::Numerical("coupling estimate left the unit disk".into()));
            }
        }
        loss_history.push(epoch_cost / dataset.len() as f64);
    }
    Ok(TrainOutcome {
        theta,
        loss_history,
        packing,
    })
}
