use serde::{Deserialize, Serialize};

use crate::channel::{ArrayParams, ImpairedSystem, SubcarrierParams};
use crate::error::{Error, Result};
use crate::tensor::C64;

/// Learnable physical parameters.
///
/// Positions are stored as y-axis offsets from the nominal positions, in
/// meters. Gains are absolute. The struct always carries every parameter;
/// a [`Packing`] decides which of them are exposed to the optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaParams {
    pub bs_y_offsets: Vec<f64>,
    pub bs_gain_amps: Vec<f64>,
    pub bs_gain_phases: Vec<f64>,
    pub coupling_re: f64,
    pub coupling_im: f64,
    /// One row per MS.
    pub ms_y_offsets: Vec<Vec<f64>>,
    pub ms_gain_amps: Vec<Vec<f64>>,
    pub ms_gain_phases: Vec<Vec<f64>>,
    /// Oscillator ppm offset `ξ`.
    pub ppm_offset: f64,
}

/// Which parameter groups are trainable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamGroups {
    pub ms_positions: bool,
    pub ms_gains: bool,
    pub ppm: bool,
}

impl Default for ParamGroups {
    fn default() -> Self {
        ParamGroups {
            ms_positions: true,
            ms_gains: false,
            ppm: false,
        }
    }
}

/// Layout of the flat parameter vector:
/// `[bs_y | bs_amp | bs_phase | c_re, c_im | ms_y | ms_amp | ms_phase | ppm]`,
/// MS blocks ordered user-major, optional groups omitted when disabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packing {
    pub n_b: usize,
    pub n_m: usize,
    pub m: usize,
    pub groups: ParamGroups,
}

impl Packing {
    pub fn new(n_b: usize, n_m: usize, m: usize, groups: ParamGroups) -> Self {
        Packing { n_b, n_m, m, groups }
    }

    fn ms_len(&self) -> usize {
        self.m * self.n_m
    }

    pub fn len(&self) -> usize {
        let mut len = 3 * self.n_b + 2;
        if self.groups.ms_positions {
            len += self.ms_len();
        }
        if self.groups.ms_gains {
            len += 2 * self.ms_len();
        }
        if self.groups.ppm {
            len += 1;
        }
        len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bs_y(&self, i: usize) -> usize {
        i
    }

    pub fn bs_amp(&self, i: usize) -> usize {
        self.n_b + i
    }

    pub fn bs_phase(&self, i: usize) -> usize {
        2 * self.n_b + i
    }

    pub fn coupling_re(&self) -> usize {
        3 * self.n_b
    }

    pub fn coupling_im(&self) -> usize {
        3 * self.n_b + 1
    }

    fn ms_base(&self) -> usize {
        3 * self.n_b + 2
    }

    pub fn ms_y(&self, m: usize, i: usize) -> Option<usize> {
        self.groups.ms_positions.then(|| self.ms_base() + m * self.n_m + i)
    }

    fn gains_base(&self) -> usize {
        self.ms_base() + if self.groups.ms_positions { self.ms_len() } else { 0 }
    }

    pub fn ms_amp(&self, m: usize, i: usize) -> Option<usize> {
        self.groups.ms_gains.then(|| self.gains_base() + m * self.n_m + i)
    }

    pub fn ms_phase(&self, m: usize, i: usize) -> Option<usize> {
        self.groups.ms_gains.then(|| self.gains_base() + self.ms_len() + m * self.n_m + i)
    }

    pub fn ppm(&self) -> Option<usize> {
        self.groups.ppm.then(|| self.len() - 1)
    }

    /// Packed indices belonging to user `m`.
    pub fn ms_block(&self, m: usize) -> Vec<usize> {
        (0..self.n_m)
            .flat_map(|i| [self.ms_y(m, i), self.ms_amp(m, i), self.ms_phase(m, i)])
            .flatten()
            .collect()
    }

    /// Packed indices shared by every user (BS, coupling, subcarriers).
    pub fn shared_block(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..3 * self.n_b + 2).collect();
        idx.extend(self.ppm());
        idx
    }

    /// Per-coordinate scale used by the optimizer: positions are expressed in
    /// wavelengths, everything else in natural units.
    pub fn scales(&self, wavelength: f64) -> Vec<f64> {
        let mut s = vec![1.0; self.len()];
        for i in 0..self.n_b {
            s[self.bs_y(i)] = wavelength;
        }
        for m in 0..self.m {
            for i in 0..self.n_m {
                if let Some(k) = self.ms_y(m, i) {
                    s[k] = wavelength;
                }
            }
        }
        s
    }
}

impl ThetaParams {
    /// Nominal parameters: zero offsets, nominal gains, no coupling, no ppm.
    pub fn nominal(bs: &ArrayParams, ms: &[ArrayParams]) -> ThetaParams {
        ThetaParams {
            bs_y_offsets: vec![0.0; bs.len()],
            bs_gain_amps: bs.gain_amplitudes.clone(),
            bs_gain_phases: bs.gain_phases.clone(),
            coupling_re: bs.coupling.re,
            coupling_im: bs.coupling.im,
            ms_y_offsets: ms.iter().map(|a| vec![0.0; a.len()]).collect(),
            ms_gain_amps: ms.iter().map(|a| a.gain_amplitudes.clone()).collect(),
            ms_gain_phases: ms.iter().map(|a| a.gain_phases.clone()).collect(),
            ppm_offset: 0.0,
        }
    }

    /// Parameters describing a realized system relative to the nominal one.
    pub fn from_system(nominal_bs: &ArrayParams, nominal_ms: &[ArrayParams], truth: &ImpairedSystem) -> Result<ThetaParams> {
        if truth.ms.len() != nominal_ms.len() {
            return Err(Error::Shape("true and nominal MS counts differ".into()));
        }
        let offsets = |t: &ArrayParams, n: &ArrayParams| -> Vec<f64> {
            t.positions.iter().zip(&n.positions).map(|(a, b)| a[1] - b[1]).collect()
        };
        Ok(ThetaParams {
            bs_y_offsets: offsets(&truth.bs, nominal_bs),
            bs_gain_amps: truth.bs.gain_amplitudes.clone(),
            bs_gain_phases: truth.bs.gain_phases.clone(),
            coupling_re: truth.bs.coupling.re,
            coupling_im: truth.bs.coupling.im,
            ms_y_offsets: truth.ms.iter().zip(nominal_ms).map(|(t, n)| offsets(t, n)).collect(),
            ms_gain_amps: truth.ms.iter().map(|a| a.gain_amplitudes.clone()).collect(),
            ms_gain_phases: truth.ms.iter().map(|a| a.gain_phases.clone()).collect(),
            ppm_offset: truth.sub.ppm_offset,
        })
    }

    pub fn coupling(&self) -> C64 {
        C64::new(self.coupling_re, self.coupling_im)
    }

    pub fn n_b(&self) -> usize {
        self.bs_y_offsets.len()
    }

    pub fn users(&self) -> usize {
        self.ms_y_offsets.len()
    }

    /// Packing of this parameter set for the given groups.
    pub fn packing(&self, groups: ParamGroups) -> Packing {
        let n_m = self.ms_y_offsets.first().map_or(0, Vec::len);
        Packing::new(self.n_b(), n_m, self.users(), groups)
    }

    fn check(&self, packing: &Packing) -> Result<()> {
        let ok = self.bs_y_offsets.len() == packing.n_b
            && self.bs_gain_amps.len() == packing.n_b
            && self.bs_gain_phases.len() == packing.n_b
            && self.ms_y_offsets.len() == packing.m
            && self.ms_gain_amps.len() == packing.m
            && self.ms_gain_phases.len() == packing.m
            && self
                .ms_y_offsets
                .iter()
                .chain(&self.ms_gain_amps)
                .chain(&self.ms_gain_phases)
                .all(|row| row.len() == packing.n_m);
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(format!("parameter set does not match packing {packing:?}")))
        }
    }

    pub fn pack(&self, packing: &Packing) -> Result<Vec<f64>> {
        self.check(packing)?;
        let mut v = Vec::with_capacity(packing.len());
        v.extend(&self.bs_y_offsets);
        v.extend(&self.bs_gain_amps);
        v.extend(&self.bs_gain_phases);
        v.push(self.coupling_re);
        v.push(self.coupling_im);
        if packing.groups.ms_positions {
            v.extend(self.ms_y_offsets.iter().flatten());
        }
        if packing.groups.ms_gains {
            v.extend(self.ms_gain_amps.iter().flatten());
            v.extend(self.ms_gain_phases.iter().flatten());
        }
        if packing.groups.ppm {
            v.push(self.ppm_offset);
        }
        Ok(v)
    }

    /// Overwrites the packed groups from `v`; groups outside the packing keep
    /// their current values.
    pub fn unpack(&mut self, packing: &Packing, v: &[f64]) -> Result<()> {
        self.check(packing)?;
        if v.len() != packing.len() {
            return Err(Error::Shape(format!(
                "packed vector has {} entries, packing expects {}",
                v.len(),
                packing.len()
            )));
        }
        let n_b = packing.n_b;
        self.bs_y_offsets.copy_from_slice(&v[..n_b]);
        self.bs_gain_amps.copy_from_slice(&v[n_b..2 * n_b]);
        self.bs_gain_phases.copy_from_slice(&v[2 * n_b..3 * n_b]);
        self.coupling_re = v[packing.coupling_re()];
        self.coupling_im = v[packing.coupling_im()];
        for m in 0..packing.m {
            for i in 0..packing.n_m {
                if let Some(k) = packing.ms_y(m, i) {
                    self.ms_y_offsets[m][i] = v[k];
                }
                if let Some(k) = packing.ms_amp(m, i) {
                    self.ms_gain_amps[m][i] = v[k];
                }
                if let Some(k) = packing.ms_phase(m, i) {
                    self.ms_gain_phases[m][i] = v[k];
                }
            }
        }
        if let Some(k) = packing.ppm() {
            self.ppm_offset = v[k];
        }
        Ok(())
    }

    /// BS array described by these parameters on top of `nominal`.
    pub fn bs_array(&self, nominal: &ArrayParams) -> ArrayParams {
        apply(nominal, &self.bs_y_offsets, &self.bs_gain_amps, &self.bs_gain_phases, self.coupling())
    }

    /// Array of user `m`. MS coupling stays at its nominal value.
    pub fn ms_array(&self, nominal: &ArrayParams, m: usize) -> ArrayParams {
        apply(
            nominal,
            &self.ms_y_offsets[m],
            &self.ms_gain_amps[m],
            &self.ms_gain_phases[m],
            nominal.coupling,
        )
    }

    pub fn subcarriers(&self, nominal: &SubcarrierParams) -> SubcarrierParams {
        if self.ppm_offset == 0.0 {
            nominal.clone()
        } else {
            nominal.with_ppm(self.ppm_offset)
        }
    }
}

fn apply(nominal: &ArrayParams, offsets: &[f64], amps: &[f64], phases: &[f64], coupling: C64) -> ArrayParams {
    let mut a = nominal.clone();
    for (p, d) in a.positions.iter_mut().zip(offsets) {
        p[1] += d;
    }
    a.gain_amplitudes = amps.to_vec();
    a.gain_phases = phases.to_vec();
    a.coupling = coupling;
    a
}

/// Mean absolute errors per parameter group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamMae {
    /// BS gain amplitudes.
    pub gain_amplitude: f64,
    /// BS gain phases, radians.
    pub gain_phase: f64,
    /// BS and MS element positions, meters.
    pub position_m: f64,
    /// `|ĉ₁ − c₁|`.
    pub coupling_abs: f64,
}

fn mae(a: impl IntoIterator<Item = f64>, b: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = a
        .into_iter()
        .zip(b)
        .fold((0.0, 0usize), |(s, n), (x, y)| (s + (x - y).abs(), n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn wrap_phase(p: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let w = (p + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI;
    if w == -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        w
    }
}

/// Element-wise mean absolute error between two parameter sets, in raw
/// coordinates. Phase differences are wrapped to `(-π, π]`.
pub fn param_mae(theta_hat: &ThetaParams, theta_true: &ThetaParams) -> Result<ParamMae> {
    let packing = theta_true.packing(ParamGroups::default());
    theta_hat.check(&packing)?;
    theta_true.check(&packing)?;
    let positions_hat = theta_hat.bs_y_offsets.iter().chain(theta_hat.ms_y_offsets.iter().flatten()).copied();
    let positions_true = theta_true.bs_y_offsets.iter().chain(theta_true.ms_y_offsets.iter().flatten()).copied();
    Ok(ParamMae {
        gain_amplitude: mae(theta_hat.bs_gain_amps.iter().copied(), theta_true.bs_gain_amps.iter().copied()),
        gain_phase: mae(
            theta_hat
                .bs_gain_phases
                .iter()
                .zip(&theta_true.bs_gain_phases)
                .map(|(a, b)| wrap_phase(a - b)),
            std::iter::repeat(0.0),
        ),
        position_m: mae(positions_hat, positions_true),
        coupling_abs: (theta_hat.coupling() - theta_true.coupling()).norm(),
    })
}

/// Removes the directions along which the reconstruction cost is exactly
/// invariant, by moving `theta_hat` as close as possible to `reference`:
/// a common real scale of each array's gain amplitudes, a common gain phase
/// per array, and a common position shift per array. Each of these multiplies
/// every atom by a scalar that the least-squares coefficients absorb, so the
/// observations alone cannot determine them.
pub fn align_gauge(theta_hat: &ThetaParams, reference: &ThetaParams) -> Result<ThetaParams> {
    let packing = reference.packing(ParamGroups::default());
    theta_hat.check(&packing)?;
    reference.check(&packing)?;
    let mut out = theta_hat.clone();

    fn align_array(amps: &mut [f64], phases: &mut [f64], offsets: &mut [f64], ref_amps: &[f64], ref_phases: &[f64], ref_offsets: &[f64]) {
        let num: f64 = amps.iter().zip(ref_amps).map(|(a, b)| a * b).sum();
        let den: f64 = amps.iter().map(|a| a * a).sum();
        if den > 0.0 && num > 0.0 {
            let s = num / den;
            amps.iter_mut().for_each(|a| *a *= s);
        }
        let rot: C64 = phases.iter().zip(ref_phases).map(|(p, q)| C64::from_polar(1.0, q - p)).sum();
        if rot.norm() > 0.0 {
            let shift = rot.arg();
            phases.iter_mut().for_each(|p| *p += shift);
        }
        if !offsets.is_empty() {
            let shift = ref_offsets.iter().zip(offsets.iter()).map(|(r, o)| r - o).sum::<f64>() / offsets.len() as f64;
            offsets.iter_mut().for_each(|o| *o += shift);
        }
    }

    align_array(
        &mut out.bs_gain_amps,
        &mut out.bs_gain_phases,
        &mut out.bs_y_offsets,
        &reference.bs_gain_amps,
        &reference.bs_gain_phases,
        &reference.bs_y_offsets,
    );
    for m in 0..out.users() {
        align_array(
            &mut out.ms_gain_amps[m],
            &mut out.ms_gain_phases[m],
            &mut out.ms_y_offsets[m],
            &reference.ms_gain_amps[m],
            &reference.ms_gain_phases[m],
            &reference.ms_y_offsets[m],
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_impairments, ImpairmentSpreads, SPEED_OF_LIGHT};
    use std::f64::consts::PI;

    fn nominal(n_b: usize, n_m: usize, m: usize) -> (ArrayParams, Vec<ArrayParams>) {
        let lambda = SPEED_OF_LIGHT / 28e9;
        (
            ArrayParams::nominal_ula(n_b, lambda).unwrap(),
            vec![ArrayParams::nominal_ula(n_m, lambda).unwrap(); m],
        )
    }

    #[test]
    fn reference_packing_has_130_parameters() {
        let (bs, ms) = nominal(16, 8, 10);
        let theta = ThetaParams::nominal(&bs, &ms);
        let packing = theta.packing(ParamGroups::default());
        assert_eq!(packing.len(), 130);
        assert_eq!(theta.pack(&packing).unwrap().len(), 130);
        let extended = theta.packing(ParamGroups { ms_gains: true, ppm: true, ..Default::default() });
        assert_eq!(extended.len(), 130 + 160 + 1);
        assert_eq!(extended.ppm(), Some(290));
    }

    #[test]
    fn pack_unpack_round_trip() {
        let (bs, ms) = nominal(4, 3, 2);
        let sub = crate::channel::SubcarrierParams::uniform(28e9, 1.44e6, 4).unwrap();
        let spreads = ImpairmentSpreads {
            delta_a_prime: 0.3,
            delta_phi_m: 0.2,
            ppm: 1e-4,
            ..Default::default()
        };
        let truth = sample_impairments(&bs, &ms, &sub, &spreads, 4).unwrap();
        let theta = ThetaParams::from_system(&bs, &ms, &truth).unwrap();
        for groups in [
            ParamGroups::default(),
            ParamGroups { ms_positions: false, ms_gains: false, ppm: false },
            ParamGroups { ms_positions: true, ms_gains: true, ppm: true },
        ] {
            let packing = theta.packing(groups);
            let v = theta.pack(&packing).unwrap();
            let mut back = ThetaParams::nominal(&bs, &ms);
            // Groups outside the packing keep their values; seed them from theta.
            back.ms_y_offsets = theta.ms_y_offsets.clone();
            back.ms_gain_amps = theta.ms_gain_amps.clone();
            back.ms_gain_phases = theta.ms_gain_phases.clone();
            back.ppm_offset = theta.ppm_offset;
            back.unpack(&packing, &v).unwrap();
            assert_eq!(back, theta);
            assert_eq!(packing.ms_block(1).len(), packing.len() - packing.shared_block().len() - packing.ms_block(0).len());
        }
        // Arrays rebuilt from theta reproduce the true system.
        assert_eq!(theta.bs_array(&bs).positions, truth.bs.positions.iter().map(|p| *p).collect::<Vec<_>>());
        assert_eq!(theta.bs_array(&bs).coupling, truth.bs.coupling);
        assert_eq!(theta.ms_array(&ms[1], 1).gain_amplitudes, truth.ms[1].gain_amplitudes);
        let rebuilt = theta.subcarriers(&sub);
        for (a, b) in rebuilt.frequencies.iter().zip(&truth.sub.frequencies) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn unpack_rejects_wrong_length() {
        let (bs, ms) = nominal(4, 3, 2);
        let mut theta = ThetaParams::nominal(&bs, &ms);
        let packing = theta.packing(ParamGroups::default());
        assert!(matches!(theta.unpack(&packing, &[0.0; 3]), Err(Error::Shape(_))));
    }

    #[test]
    fn mae_examples() {
        let (bs, ms) = nominal(4, 3, 2);
        let sub = crate::channel::SubcarrierParams::uniform(28e9, 1.44e6, 4).unwrap();
        let truth = sample_impairments(&bs, &ms, &sub, &ImpairmentSpreads::default(), 1).unwrap();
        let theta = ThetaParams::from_system(&bs, &ms, &truth).unwrap();
        let zero = param_mae(&theta, &theta).unwrap();
        assert_eq!(zero, ParamMae { gain_amplitude: 0.0, gain_phase: 0.0, position_m: 0.0, coupling_abs: 0.0 });

        let nominal_theta = ThetaParams::nominal(&bs, &ms);
        let e = param_mae(&nominal_theta, &theta).unwrap();
        assert!((e.coupling_abs - 0.15).abs() < 1e-15);
        let (bs2, ms2) = nominal(5, 3, 2);
        assert!(matches!(param_mae(&ThetaParams::nominal(&bs2, &ms2), &theta), Err(Error::Shape(_))));
    }

    #[test]
    fn wrap_phase_range() {
        assert!((wrap_phase(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert_eq!(wrap_phase(PI), PI);
        assert_eq!(wrap_phase(-PI), PI);
    }

    #[test]
    fn gauge_alignment_removes_exact_invariances() {
        let (bs, ms) = nominal(6, 3, 2);
        let sub = crate::channel::SubcarrierParams::uniform(28e9, 1.44e6, 4).unwrap();
        let truth = sample_impairments(&bs, &ms, &sub, &ImpairmentSpreads::default(), 2).unwrap();
        let theta = ThetaParams::from_system(&bs, &ms, &truth).unwrap();
        let mut moved = theta.clone();
        moved.bs_gain_amps.iter_mut().for_each(|a| *a *= 1.3);
        moved.bs_gain_phases.iter_mut().for_each(|p| *p += 0.4);
        moved.bs_y_offsets.iter_mut().for_each(|y| *y += 0.002);
        moved.ms_y_offsets[1].iter_mut().for_each(|y| *y -= 0.001);
        let aligned = align_gauge(&moved, &theta).unwrap();
        let e = param_mae(&aligned, &theta).unwrap();
        assert!(e.gain_amplitude < 1e-12);
        assert!(e.gain_phase < 1e-12);
        assert!(e.position_m < 1e-15);
    }
}
