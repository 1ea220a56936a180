//! Fixed-support gradient of the reconstruction cost.
//!
//! With the support `I` frozen, the per-observation cost is
//! `f(θ) = min_x ‖y − A(θ) x‖²`, where the columns of `A` are Kronecker
//! atoms. Because `x*` minimizes the inner problem, the derivative with
//! respect to any real parameter is `∂f = −2 Re(rᴴ (∂A) x*)` with
//! `r = y − A x*`. Each atom factor depends on a handful of parameters, so
//! `rᴴ(∂a_t)` reduces to a contraction of the residual with the two fixed
//! factors followed by a dot product with the derivative of the third.

use rayon::prelude::*;

use super::{Observation, Packing, SystemModel, ThetaParams};
use crate::channel::{apply_coupling, steering_vector, unit_direction, ArrayParams};
use crate::dictionary::{DictionarySet, SupportEntry};
use crate::error::{Error, Result};
use crate::recovery::{fit_support, sparse_recover};
use crate::tensor::{contract_12, contract_13, contract_23, frobenius_norm_sq, CVector, Tensor3, C64};

const J: C64 = C64 { re: 0.0, im: 1.0 };

/// Cost, gradient and the supports selected by the forward pass.
#[derive(Debug, Clone)]
pub struct BatchGradient {
    pub cost: f64,
    /// Gradient with respect to the packed parameters, raw units.
    pub gradient: Vec<f64>,
    pub supports: Vec<Vec<SupportEntry>>,
}

/// Accumulates `−2 Re(x · h · ∂e)` for the position, amplitude and phase
/// parameters of one array, and returns `Σ_n g_n (e_{n−1} + e_{n+1})` for the
/// coupling derivative.
#[allow(clippy::too_many_arguments)]
fn array_terms(
    array: &ArrayParams,
    angle: f64,
    x: C64,
    g: &CVector,
    grad: &mut [f64],
    y_idx: impl Fn(usize) -> Option<usize>,
    amp_idx: impl Fn(usize) -> Option<usize>,
    phase_idx: impl Fn(usize) -> Option<usize>,
) -> Result<C64> {
    let e = steering_vector(array, angle)?;
    let h = apply_coupling(array.coupling, g);
    let u = unit_direction(angle)?;
    let k = array.wavenumber();
    for i in 0..array.len() {
        let w = x * h[i];
        if let Some(idx) = y_idx(i) {
            grad[idx] += -2.0 * (w * (-J * k * u[1] * e[i])).re;
        }
        if let Some(idx) = amp_idx(i) {
            let p = &array.positions[i];
            let unit = C64::from_polar(1.0, array.gain_phases[i] - k * (p[0] * u[0] + p[1] * u[1] + p[2] * u[2]));
            grad[idx] += -2.0 * (w * unit).re;
        }
        if let Some(idx) = phase_idx(i) {
            grad[idx] += -2.0 * (w * J * e[i]).re;
        }
    }
    let n = e.len();
    Ok((0..n)
        .map(|i| {
            let mut neighbors = C64::new(0.0, 0.0);
            if i > 0 {
                neighbors += e[i - 1];
            }
            if i + 1 < n {
                neighbors += e[i + 1];
            }
            g[i] * neighbors
        })
        .sum())
}

fn observation_gradient(
    obs: &Observation,
    theta: &ThetaParams,
    model: &SystemModel,
    packing: &Packing,
    dicts: &DictionarySet,
    frozen: Option<&[SupportEntry]>,
) -> Result<(f64, Vec<f64>, Vec<SupportEntry>)> {
    let (support, coefficients, estimate): (Vec<SupportEntry>, CVector, Tensor3) = match frozen {
        Some(s) => {
            let (x, est) = fit_support(&obs.y.view(), dicts, s)?;
            (s.to_vec(), x, est)
        }
        None => {
            let res = sparse_recover(&obs.y.view(), dicts, &model.recovery)?;
            (res.support, res.coefficients, res.estimate)
        }
    };
    let r = &obs.y - &estimate;
    let cost = frobenius_norm_sq(r.iter());
    let mut grad = vec![0.0; packing.len()];
    if support.is_empty() {
        return Ok((cost, grad, support));
    }

    let m = obs.ms_index;
    let bs = theta.bs_array(&model.nominal_bs);
    let ms = theta.ms_array(&model.nominal_ms[m], m);
    let sub = theta.subcarriers(&model.nominal_sub);
    let rv = r.view();
    for (entry, &x) in support.iter().zip(&coefficients) {
        let b = dicts.d_b.column(entry.i_b);
        let mv = dicts.d_m.column(entry.i_m);
        let s = dicts.d_s.column(entry.i_s);

        let gb = contract_23(&rv, &mv, &s).mapv(|z| z.conj());
        let coupling_sum = array_terms(
            &bs,
            dicts.angle_grid_b[entry.i_b],
            x,
            &gb,
            &mut grad,
            |i| Some(packing.bs_y(i)),
            |i| Some(packing.bs_amp(i)),
            |i| Some(packing.bs_phase(i)),
        )?;
        grad[packing.coupling_re()] += -2.0 * (x * coupling_sum).re;
        grad[packing.coupling_im()] += -2.0 * (x * J * coupling_sum).re;

        if packing.groups.ms_positions || packing.groups.ms_gains {
            let gm = contract_13(&rv, &b, &s).mapv(|z| z.conj());
            array_terms(
                &ms,
                dicts.angle_grid_m[entry.i_m],
                x,
                &gm,
                &mut grad,
                |i| packing.ms_y(m, i),
                |i| packing.ms_amp(m, i),
                |i| packing.ms_phase(m, i),
            )?;
        }

        if let Some(idx) = packing.ppm() {
            let gs = contract_12(&rv, &b, &mv).mapv(|z| z.conj());
            let tau = dicts.delay_grid[entry.i_s];
            let d: C64 = gs
                .iter()
                .zip(s.iter())
                .enumerate()
                .map(|(c, (g, sc))| g * (-J * 2.0 * std::f64::consts::PI * tau * (c + 1) as f64 * sub.spacing) * sc)
                .sum();
            grad[idx] += -2.0 * (x * d).re;
        }
    }
    Ok((cost, grad, support))
}

fn batch_gradient(
    batch: &[Observation],
    theta: &ThetaParams,
    model: &SystemModel,
    packing: &Packing,
    frozen: Option<&[Vec<SupportEntry>]>,
) -> Result<BatchGradient> {
    if batch.is_empty() {
        return Err(Error::Config("gradient needs a non-empty batch".into()));
    }
    if let Some(f) = frozen {
        if f.len() != batch.len() {
            return Err(Error::Shape("one frozen support per observation is required".into()));
        }
    }
    let dicts = model.dictionaries_for(theta, batch)?;
    let parts: Vec<(f64, Vec<f64>, Vec<SupportEntry>)> = batch
        .par_iter()
        .enumerate()
        .map(|(k, obs)| {
            observation_gradient(obs, theta, model, packing, &dicts[&obs.ms_index], frozen.map(|f| f[k].as_slice()))
        })
        .collect::<Result<_>>()?;
    // Reduction in observation order keeps results independent of threading.
    let scale = 1.0 / batch.len() as f64;
    let mut out = BatchGradient {
        cost: 0.0,
        gradient: vec![0.0; packing.len()],
        supports: Vec::with_capacity(batch.len()),
    };
    for (cost, grad, support) in parts {
        out.cost += cost * scale;
        for (acc, g) in out.gradient.iter_mut().zip(grad) {
            *acc += g * scale;
        }
        out.supports.push(support);
    }
    Ok(out)
}

/// Cost and fixed-support gradient of a mini-batch. The support of each
/// observation is the one selected by the forward pass at `theta`.
pub fn gradient(batch: &[Observation], theta: &ThetaParams, model: &SystemModel, packing: &Packing) -> Result<BatchGradient> {
    batch_gradient(batch, theta, model, packing, None)
}

/// Mini-batch cost with every observation fitted on a given support.
pub fn cost_fixed_support(
    batch: &[Observation],
    theta: &ThetaParams,
    model: &SystemModel,
    supports: &[Vec<SupportEntry>],
) -> Result<f64> {
    if batch.is_empty() || supports.len() != batch.len() {
        return Err(Error::Shape("one support per observation is required".into()));
    }
    let dicts = model.dictionaries_for(theta, batch)?;
    let mut total = 0.0;
    for (obs, support) in batch.iter().zip(supports) {
        let (_, est) = fit_support(&obs.y.view(), &dicts[&obs.ms_index], support)?;
        total += frobenius_norm_sq((&est - &obs.y).iter());
    }
    Ok(total / batch.len() as f64)
}

/// Central finite differences of [`cost_fixed_support`] for the packed
/// coordinates `coords`. The step is `step` in optimizer units (positions in
/// wavelengths). Slow; meant for verification.
pub fn finite_difference_gradient(
    batch: &[Observation],
    theta: &ThetaParams,
    model: &SystemModel,
    packing: &Packing,
    supports: &[Vec<SupportEntry>],
    coords: &[usize],
    step: f64,
) -> Result<Vec<f64>> {
    let base = theta.pack(packing)?;
    let scales = packing.scales(model.wavelength());
    coords
        .iter()
        .map(|&k| {
            if k >= base.len() {
                return Err(Error::Shape(format!("coordinate {k} out of range")));
            }
            let h = step * scales[k];
            let mut probe = theta.clone();
            let mut v = base.clone();
            v[k] = base[k] + h;
            probe.unpack(packing, &v)?;
            let plus = cost_fixed_support(batch, &probe, model, supports)?;
            v[k] = base[k] - h;
            probe.unpack(packing, &v)?;
            let minus = cost_fixed_support(batch, &probe, model, supports)?;
            Ok((plus - minus) / (2.0 * h))
        })
        .collect()
}
