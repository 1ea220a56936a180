//! Physical channel model: steering vectors, frequency responses, multipath
//! synthesis, hardware impairments and additive noise.
//!
//! Arrays are uniform linear arrays along the y-axis. A plane wave from
//! azimuth `φ ∈ [0, π]` travels along `u(φ) = (sin φ, cos φ, 0)`, so the phase
//! seen by an element at `p` is `2π/λ · pᵀu(φ) = 2π/λ · y cos φ` for a y-axis
//! array. Coupling between adjacent elements is a symmetric tridiagonal
//! matrix and is applied on top of the uncoupled steering vector, never
//! inside it.

use std::f64::consts::PI;

use ndarray::Array1;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::{rng_for, Stream};
use crate::tensor::{frobenius_norm_sq, outer3, CMatrix, CVector, Tensor3, C64};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

fn check_angle(angle: f64) -> Result<()> {
    if !(0.0..=PI).contains(&angle) {
        return Err(Error::Domain(format!("angle {angle} rad is outside [0, π]")));
    }
    Ok(())
}

/// Physical description of one antenna array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayParams {
    /// Element positions relative to the array centroid, meters.
    pub positions: Vec<[f64; 3]>,
    pub gain_amplitudes: Vec<f64>,
    /// Gain phases, radians.
    pub gain_phases: Vec<f64>,
    /// Adjacent-element coupling coefficient `c₁`.
    pub coupling: C64,
    /// Carrier wavelength, meters.
    pub wavelength: f64,
}

impl ArrayParams {
    pub fn new(
        positions: Vec<[f64; 3]>,
        gain_amplitudes: Vec<f64>,
        gain_phases: Vec<f64>,
        coupling: C64,
        wavelength: f64,
    ) -> Result<Self> {
        let array = ArrayParams {
            positions,
            gain_amplitudes,
            gain_phases,
            coupling,
            wavelength,
        };
        array.validate()?;
        Ok(array)
    }

    /// Impairment-free ULA along the y-axis: unit gains, zero phases,
    /// half-wavelength spacing centered on the centroid, no coupling.
    pub fn nominal_ula(n: usize, wavelength: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("array must have at least one element".into()));
        }
        let center = (n as f64 - 1.0) / 2.0;
        let positions = (0..n)
            .map(|i| [0.0, (i as f64 - center) * wavelength / 2.0, 0.0])
            .collect();
        ArrayParams::new(positions, vec![1.0; n], vec![0.0; n], C64::new(0.0, 0.0), wavelength)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.positions.len();
        if n == 0 {
            return Err(Error::Domain("array must have at least one element".into()));
        }
        if self.gain_amplitudes.len() != n || self.gain_phases.len() != n {
            return Err(Error::Shape(format!(
                "array has {} positions, {} amplitudes and {} phases",
                n,
                self.gain_amplitudes.len(),
                self.gain_phases.len()
            )));
        }
        if self.coupling.norm() >= 1.0 {
            return Err(Error::Domain(format!("|c1| = {} must be < 1", self.coupling.norm())));
        }
        if !(self.wavelength > 0.0) {
            return Err(Error::Domain(format!("wavelength {} must be positive", self.wavelength)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Complex element gains `a_i e^{j φ_i}`.
    pub fn gains(&self) -> Vec<C64> {
        self.gain_amplitudes
            .iter()
            .zip(&self.gain_phases)
            .map(|(&a, &p)| C64::from_polar(a, p))
            .collect()
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }
}

/// Subcarrier frequencies of the multicarrier system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubcarrierParams {
    /// Strictly increasing frequencies, Hz.
    pub frequencies: Vec<f64>,
    /// Nominal subcarrier spacing `Δf`, Hz.
    pub spacing: f64,
    /// Oscillator ppm offset `ξ` already contained in `frequencies`.
    pub ppm_offset: f64,
}

impl SubcarrierParams {
    pub fn new(frequencies: Vec<f64>, spacing: f64, ppm_offset: f64) -> Result<Self> {
        let sub = SubcarrierParams {
            frequencies,
            spacing,
            ppm_offset,
        };
        sub.validate()?;
        Ok(sub)
    }

    /// `n` subcarriers spaced by `spacing` around `carrier`.
    pub fn uniform(carrier: f64, spacing: f64, n: usize) -> Result<Self> {
        let half = (n / 2) as f64;
        let frequencies = (0..n).map(|i| carrier + (i as f64 - half) * spacing).collect();
        SubcarrierParams::new(frequencies, spacing, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frequencies.is_empty() {
            return Err(Error::Domain("at least one subcarrier is required".into()));
        }
        if self.frequencies.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("subcarrier frequencies must be strictly increasing".into()));
        }
        if !(self.spacing > 0.0) {
            return Err(Error::Domain(format!("subcarrier spacing {} must be positive", self.spacing)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// Frequencies after an oscillator offset `ξ`: `f_i + i ξ Δf` with the
    /// subcarrier index `i` counted from one.
    pub fn with_ppm(&self, ppm: f64) -> SubcarrierParams {
        SubcarrierParams {
            frequencies: self
                .frequencies
                .iter()
                .enumerate()
                .map(|(i, &f)| f + (i + 1) as f64 * ppm * self.spacing)
                .collect(),
            spacing: self.spacing,
            ppm_offset: self.ppm_offset + ppm,
        }
    }

    /// Length of the unambiguous delay window `1/Δf`, seconds.
    pub fn delay_period(&self) -> f64 {
        1.0 / self.spacing
    }
}

/// Propagation paths of one channel.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PathSet {
    /// Angles of arrival at the BS, radians.
    pub aoa: Vec<f64>,
    /// Angles of departure at the MS, radians.
    pub aod: Vec<f64>,
    /// Delays, seconds.
    pub delay: Vec<f64>,
    pub gain: Vec<C64>,
}

impl PathSet {
    pub fn len(&self) -> usize {
        self.gain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gain.is_empty()
    }

    pub fn push(&mut self, aoa: f64, aod: f64, delay: f64, gain: C64) {
        self.aoa.push(aoa);
        self.aod.push(aod);
        self.delay.push(delay);
        self.gain.push(gain);
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.gain.len();
        if self.aoa.len() != k || self.aod.len() != k || self.delay.len() != k {
            return Err(Error::Shape("path set lists must have equal length".into()));
        }
        for (&a, &d) in self.aoa.iter().zip(&self.aod) {
            check_angle(a)?;
            check_angle(d)?;
        }
        if let Some(&t) = self.delay.iter().find(|&&t| t < 0.0) {
            return Err(Error::Domain(format!("negative path delay {t}")));
        }
        Ok(())
    }

    /// Multiplies every path gain by `factor`.
    pub fn scaled(&self, factor: C64) -> PathSet {
        PathSet {
            gain: self.gain.iter().map(|g| g * factor).collect(),
            ..self.clone()
        }
    }
}

/// Spreads of the uniform perturbation laws applied to the nominal system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImpairmentSpreads {
    /// BS position spread, fraction of λ.
    pub delta_p: f64,
    /// MS position spread, fraction of λ.
    pub delta_q: f64,
    /// BS amplitude spread (perturbation drawn in `[-δ_a, 0]`).
    pub delta_a: f64,
    /// MS amplitude spread.
    pub delta_a_prime: f64,
    /// BS phase spread, radians.
    pub delta_phi_b: f64,
    /// MS phase spread, radians.
    pub delta_phi_m: f64,
    /// True BS coupling coefficient.
    pub coupling_true: C64,
    /// Oscillator ppm offset `ξ`.
    pub ppm: f64,
}

impl Default for ImpairmentSpreads {
    /// The impairment levels of the reference 28 GHz experiment.
    fn default() -> Self {
        ImpairmentSpreads {
            delta_p: 0.24,
            delta_q: 0.24,
            delta_a: 0.4,
            delta_a_prime: 0.0,
            delta_phi_b: 0.4,
            delta_phi_m: 0.0,
            coupling_true: C64::from_polar(0.15, -PI / 6.0),
            ppm: 0.0,
        }
    }
}

impl ImpairmentSpreads {
    pub fn none() -> Self {
        ImpairmentSpreads {
            delta_p: 0.0,
            delta_q: 0.0,
            delta_a: 0.0,
            delta_a_prime: 0.0,
            delta_phi_b: 0.0,
            delta_phi_m: 0.0,
            coupling_true: C64::new(0.0, 0.0),
            ppm: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let deltas = [
            ("delta_p", self.delta_p),
            ("delta_q", self.delta_q),
            ("delta_a", self.delta_a),
            ("delta_a_prime", self.delta_a_prime),
            ("delta_phi_b", self.delta_phi_b),
            ("delta_phi_m", self.delta_phi_m),
        ];
        for (name, v) in deltas {
            if !(v >= 0.0) {
                return Err(Error::Domain(format!("{name} = {v} must be non-negative")));
            }
        }
        if self.coupling_true.norm() >= 1.0 {
            return Err(Error::Domain("|coupling_true| must be < 1".into()));
        }
        Ok(())
    }
}

/// Unit propagation direction for an azimuth angle.
pub fn unit_direction(angle: f64) -> Result<[f64; 3]> {
    check_angle(angle)?;
    Ok([angle.sin(), angle.cos(), 0.0])
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Uncoupled steering vector `g_i · exp(-j 2π/λ · p_iᵀ u(angle))`.
pub fn steering_vector(array: &ArrayParams, angle: f64) -> Result<CVector> {
    let u = unit_direction(angle)?;
    let k = array.wavenumber();
    Ok(array
        .positions
        .iter()
        .zip(array.gain_amplitudes.iter().zip(&array.gain_phases))
        .map(|(p, (&a, &phi))| C64::from_polar(a, phi - k * dot3(p, &u)))
        .collect())
}

/// Frequency response `exp(-j 2π f_i τ)` of a path with delay `delay`.
pub fn frequency_response(sub: &SubcarrierParams, delay: f64) -> Result<CVector> {
    if !(delay >= 0.0) {
        return Err(Error::Domain(format!("delay {delay} s must be non-negative")));
    }
    Ok(sub
        .frequencies
        .iter()
        .map(|&f| C64::from_polar(1.0, -2.0 * PI * f * delay))
        .collect())
}

/// Tridiagonal coupling matrix `tridiag(c1, 1, c1)` of size `n`.
pub fn coupling_matrix(c1: C64, n: usize) -> Result<CMatrix> {
    if c1.norm() >= 1.0 {
        return Err(Error::Domain(format!("|c1| = {} must be < 1", c1.norm())));
    }
    if n == 0 {
        return Err(Error::Domain("coupling matrix needs n >= 1".into()));
    }
    let mut m = CMatrix::eye(n);
    for i in 0..n - 1 {
        m[(i, i + 1)] = c1;
        m[(i + 1, i)] = c1;
    }
    Ok(m)
}

/// Applies `tridiag(c1, 1, c1)` to `v` without forming the matrix.
pub fn apply_coupling(c1: C64, v: &CVector) -> CVector {
    let n = v.len();
    Array1::from_shape_fn(n, |i| {
        let mut z = v[i];
        if i > 0 {
            z += c1 * v[i - 1];
        }
        if i + 1 < n {
            z += c1 * v[i + 1];
        }
        z
    })
}

/// Coupled steering vector `C(c₁) · e(angle)`, the form used in channels and
/// dictionaries.
pub fn coupled_steering_vector(array: &ArrayParams, angle: f64) -> Result<CVector> {
    Ok(apply_coupling(array.coupling, &steering_vector(array, angle)?))
}

/// Sums the rank-one path contributions `α_k (C_B e_B) ∘ (C_m e_m) ∘ e_f`.
/// Couplings are taken from the arrays' `coupling` fields.
pub fn synthesize_channel(bs: &ArrayParams, ms: &ArrayParams, sub: &SubcarrierParams, paths: &PathSet) -> Result<Tensor3> {
    bs.validate()?;
    ms.validate()?;
    sub.validate()?;
    paths.validate()?;
    let mut h = Tensor3::zeros((bs.len(), ms.len(), sub.len()));
    for k in 0..paths.len() {
        let eb = coupled_steering_vector(bs, paths.aoa[k])?.mapv(|z| z * paths.gain[k]);
        let em = coupled_steering_vector(ms, paths.aod[k])?;
        let ef = frequency_response(sub, paths.delay[k])?;
        h += &outer3(&eb.view(), &em.view(), &ef.view());
    }
    Ok(h)
}

/// A realization of the true (impaired) system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpairedSystem {
    pub bs: ArrayParams,
    pub ms: Vec<ArrayParams>,
    pub sub: SubcarrierParams,
}

fn perturb_array(
    nominal: &ArrayParams,
    delta_pos: f64,
    delta_amp: f64,
    delta_phase: f64,
    rng: &mut impl Rng,
) -> ArrayParams {
    let mut out = nominal.clone();
    let lambda = nominal.wavelength;
    for i in 0..nominal.len() {
        // Draw order is fixed per element so that realizations are stable.
        let eps = uniform_draw(rng, -delta_pos, delta_pos);
        let n_a = uniform_draw(rng, -delta_amp, 0.0);
        let n_phi = uniform_draw(rng, -delta_phase, delta_phase);
        out.positions[i][1] += lambda * eps;
        out.gain_amplitudes[i] += n_a;
        out.gain_phases[i] += n_phi;
    }
    out
}

fn uniform_draw(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        Uniform::new(lo, hi).expect("non-empty range").sample(rng)
    } else {
        lo
    }
}

/// Draws the true system from the nominal one. Positions move only along
/// the array (y) axis; each MS gets an independent realization; subcarrier
/// `i` (from one) is shifted by `i ξ Δf`.
pub fn sample_impairments(
    nominal_bs: &ArrayParams,
    nominal_ms: &[ArrayParams],
    nominal_sub: &SubcarrierParams,
    spreads: &ImpairmentSpreads,
    seed: u64,
) -> Result<ImpairedSystem> {
    spreads.validate()?;
    let mut rng = rng_for(seed, Stream::Impairments, 0);
    let mut bs = perturb_array(nominal_bs, spreads.delta_p, spreads.delta_a, spreads.delta_phi_b, &mut rng);
    bs.coupling = spreads.coupling_true;
    let ms = nominal_ms
        .iter()
        .enumerate()
        .map(|(m, nominal)| {
            let mut rng = rng_for(seed, Stream::Impairments, 1 + m as u64);
            perturb_array(nominal, spreads.delta_q, spreads.delta_a_prime, spreads.delta_phi_m, &mut rng)
        })
        .collect();
    let sub = if spreads.ppm == 0.0 {
        nominal_sub.clone()
    } else {
        nominal_sub.with_ppm(spreads.ppm)
    };
    Ok(ImpairedSystem { bs, ms, sub })
}

/// Adds circularly-symmetric complex Gaussian noise at `snr_db`, where
/// `SNR = ‖H‖_F² / (N σ²)`. An infinite SNR returns `h` unchanged with
/// `σ² = 0`. Returns the observation and `σ²`.
pub fn add_noise(h: &Tensor3, snr_db: f64, seed: u64) -> Result<(Tensor3, f64)> {
    if snr_db == f64::INFINITY {
        return Ok((h.clone(), 0.0));
    }
    if snr_db.is_nan() {
        return Err(Error::Domain("SNR is NaN".into()));
    }
    let energy = frobenius_norm_sq(h.iter());
    if energy == 0.0 {
        return Err(Error::Domain("cannot set a finite SNR on a zero channel".into()));
    }
    let sigma2 = energy / (h.len() as f64 * 10f64.powf(snr_db / 10.0));
    let normal = Normal::new(0.0, (sigma2 / 2.0).sqrt()).map_err(|e| Error::Domain(e.to_string()))?;
    let mut rng = rng_for(seed, Stream::Noise, 0);
    let y = h.mapv(|z| z + C64::new(normal.sample(&mut rng), normal.sample(&mut rng)));
    Ok((y, sigma2))
}

/// Scene geometry for the synthetic multipath generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeometryConfig {
    pub min_distance_m: f64,
    pub max_distance_m: f64,
    /// Bearing sector (angle from the BS array axis) where MSs are placed.
    pub sector_min_rad: f64,
    pub sector_max_rad: f64,
    /// Number of paths `K`, LoS included.
    pub paths: usize,
    /// Average power of the first NLoS path relative to LoS, dB.
    pub nlos_power_db: f64,
    /// Additional power decay per further NLoS path, dB.
    pub nlos_decay_db: f64,
    /// Largest NLoS excess delay, seconds.
    pub max_excess_delay_s: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            min_distance_m: 20.0,
            max_distance_m: 150.0,
            sector_min_rad: PI / 6.0,
            sector_max_rad: 5.0 * PI / 6.0,
            paths: 4,
            nlos_power_db: -6.0,
            nlos_decay_db: 3.0,
            max_excess_delay_s: 2.0e-7,
        }
    }
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_distance_m >= 0.0 && self.max_distance_m >= self.min_distance_m) {
            return Err(Error::Config("distance range must satisfy 0 <= min <= max".into()));
        }
        if !(0.0 <= self.sector_min_rad && self.sector_min_rad <= self.sector_max_rad && self.sector_max_rad <= PI) {
            return Err(Error::Config("bearing sector must lie inside [0, π]".into()));
        }
        if self.max_excess_delay_s < 0.0 {
            return Err(Error::Config("max_excess_delay_s must be non-negative".into()));
        }
        Ok(())
    }
}

/// One MS placement: position in the BS frame and its paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub position: [f64; 3],
    pub paths: PathSet,
}

/// Samples an MS position and a geometry-consistent path set. Path 0 is the
/// LoS path with delay `d/c` and bearing of the MS; the MS array is parallel
/// to the BS array so its LoS departure angle is `π − φ`. NLoS paths arrive
/// later and weaker. All delays stay inside `delay_period`.
pub fn sample_placement(geometry: &GeometryConfig, delay_period: f64, rng: &mut impl Rng) -> Result<Placement> {
    geometry.validate()?;
    let distance = uniform_draw(rng, geometry.min_distance_m, geometry.max_distance_m);
    let bearing = uniform_draw(rng, geometry.sector_min_rad, geometry.sector_max_rad);
    let los_delay = distance / SPEED_OF_LIGHT;
    if los_delay >= delay_period {
        return Err(Error::Config(format!(
            "MS distance {distance:.1} m exceeds the unambiguous range {:.1} m",
            delay_period * SPEED_OF_LIGHT
        )));
    }
    let u = unit_direction(bearing)?;
    let position = [distance * u[0], distance * u[1], 0.0];

    let mut paths = PathSet::default();
    paths.push(bearing, PI - bearing, los_delay, C64::from_polar(1.0, uniform_draw(rng, -PI, PI)));
    let excess_max = geometry.max_excess_delay_s.min((delay_period - los_delay) * 0.99);
    for k in 1..geometry.paths {
        let aoa = uniform_draw(rng, geometry.sector_min_rad, geometry.sector_max_rad);
        let aod = uniform_draw(rng, 0.0, PI);
        let delay = los_delay + uniform_draw(rng, 0.0, excess_max);
        let power_db = geometry.nlos_power_db - geometry.nlos_decay_db * (k - 1) as f64;
        let amplitude = 10f64.powf(power_db / 20.0) * uniform_draw(rng, 0.7, 1.0);
        paths.push(aoa, aod, delay, C64::from_polar(amplitude, uniform_draw(rng, -PI, PI)));
    }
    Ok(Placement { position, paths })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn unit_direction_examples() {
        let u = unit_direction(PI / 2.0).unwrap();
        assert_abs_diff_eq!(u[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(u[1], 0.0, epsilon = 1e-15);
        assert_eq!(unit_direction(0.0).unwrap(), [0.0, 1.0, 0.0]);
        let u = unit_direction(PI / 3.0).unwrap();
        assert_abs_diff_eq!(u[0], 3f64.sqrt() / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(u[1], 0.5, epsilon = 1e-15);
        assert!(matches!(unit_direction(-0.1), Err(Error::Domain(_))));
        assert!(matches!(unit_direction(3.2), Err(Error::Domain(_))));
    }

    #[test]
    fn broadside_and_endfire_steering() {
        let lambda = 0.01;
        let ula = ArrayParams::nominal_ula(4, lambda).unwrap();
        let ys: Vec<f64> = ula.positions.iter().map(|p| p[1]).collect();
        assert_eq!(ys, vec![-0.75 * lambda, -0.25 * lambda, 0.25 * lambda, 0.75 * lambda]);

        let e = steering_vector(&ula, PI / 2.0).unwrap();
        assert!(e.iter().all(|z| close(*z, c(1.0, 0.0), 1e-12)));

        let e = steering_vector(&ula, 0.0).unwrap();
        let expected = [
            C64::from_polar(1.0, 1.5 * PI),
            C64::from_polar(1.0, 0.5 * PI),
            C64::from_polar(1.0, -0.5 * PI),
            C64::from_polar(1.0, -1.5 * PI),
        ];
        for (z, w) in e.iter().zip(expected) {
            assert!(close(*z, w, 1e-12));
        }
        assert!(close(e[0], c(0.0, -1.0), 1e-12));
        assert!(close(e[1], c(0.0, 1.0), 1e-12));
    }

    #[test]
    fn steering_matches_elementwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let n = rng.random_range(1..7);
            let lambda = rng.random_range(0.005..0.1);
            let array = ArrayParams::new(
                (0..n).map(|_| [rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)]).collect(),
                (0..n).map(|_| rng.random_range(0.0..2.0)).collect(),
                (0..n).map(|_| rng.random_range(-PI..PI)).collect(),
                c(0.0, 0.0),
                lambda,
            )
            .unwrap();
            let angle = rng.random_range(0.0..PI);
            let e = steering_vector(&array, angle).unwrap();
            for i in 0..n {
                let p = array.positions[i];
                let proj = p[0] * angle.sin() + p[1] * angle.cos();
                let g = c(array.gain_amplitudes[i] * array.gain_phases[i].cos(), array.gain_amplitudes[i] * array.gain_phases[i].sin());
                let phase = -2.0 * PI / lambda * proj;
                let oracle = g * c(phase.cos(), phase.sin());
                assert!(close(e[i], oracle, 1e-9));
            }
        }
    }

    #[test]
    fn unit_gain_steering_has_unit_modulus() {
        let ula = ArrayParams::nominal_ula(7, 0.0107).unwrap();
        for angle in [0.0, 0.3, 1.1, 2.0, PI] {
            assert!(steering_vector(&ula, angle).unwrap().iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn frequency_response_examples() {
        let sub = SubcarrierParams::new(vec![1.0, 2.0, 3.0], 1.0, 0.0).unwrap();
        assert!(frequency_response(&sub, 0.0).unwrap().iter().all(|z| *z == c(1.0, 0.0)));
        let sub2 = SubcarrierParams::new(vec![1.0, 2.0], 1.0, 0.0).unwrap();
        let e = frequency_response(&sub2, 0.25).unwrap();
        assert!(close(e[0], c(0.0, -1.0), 1e-12));
        assert!(close(e[1], c(-1.0, 0.0), 1e-12));
        assert!(matches!(frequency_response(&sub, -1e-9), Err(Error::Domain(_))));

        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let sub = SubcarrierParams::uniform(28e9, 1.44e6, 16).unwrap();
        for _ in 0..20 {
            let tau: f64 = rng.random_range(0.0..1e-6);
            let e = frequency_response(&sub, tau).unwrap();
            for (z, &f) in e.iter().zip(&sub.frequencies) {
                assert!((z.norm() - 1.0).abs() < 1e-12);
                let want = (-2.0 * PI * f * tau).rem_euclid(2.0 * PI);
                let got = z.arg().rem_euclid(2.0 * PI);
                let d = (want - got).abs();
                assert!(d.min(2.0 * PI - d) < 1e-6);
            }
        }
    }

    #[test]
    fn coupling_matrix_examples() {
        assert_eq!(coupling_matrix(c(0.0, 0.0), 3).unwrap(), CMatrix::eye(3));
        let c1 = C64::from_polar(0.15, -PI / 6.0);
        let m = coupling_matrix(c1, 2).unwrap();
        assert_eq!(m, ndarray::array![[c(1.0, 0.0), c1], [c1, c(1.0, 0.0)]]);
        let m = coupling_matrix(c(0.3, -0.2), 5).unwrap();
        assert_eq!(m, m.t());
        assert_eq!(m[(0, 2)], c(0.0, 0.0));
        assert!(matches!(coupling_matrix(c(1.0, 0.0), 3), Err(Error::Domain(_))));

        let v = CVector::from_shape_fn(5, |i| c(i as f64, 1.0 - i as f64));
        let dense = m.dot(&v);
        let fast = apply_coupling(c(0.3, -0.2), &v);
        for (a, b) in dense.iter().zip(&fast) {
            assert!(close(*a, *b, 1e-14));
        }
    }

    fn small_system() -> (ArrayParams, ArrayParams, SubcarrierParams) {
        let lambda = SPEED_OF_LIGHT / 28e9;
        let mut bs = ArrayParams::nominal_ula(4, lambda).unwrap();
        bs.coupling = c(0.1, -0.05);
        bs.gain_amplitudes = vec![1.0, 0.8, 0.9, 0.7];
        bs.gain_phases = vec![0.1, -0.2, 0.3, 0.0];
        let ms = ArrayParams::nominal_ula(3, lambda).unwrap();
        let sub = SubcarrierParams::uniform(28e9, 1.44e6, 5).unwrap();
        (bs, ms, sub)
    }

    #[test]
    fn empty_path_set_gives_zero_channel() {
        let (bs, ms, sub) = small_system();
        let h = synthesize_channel(&bs, &ms, &sub, &PathSet::default()).unwrap();
        assert_eq!(h.dim(), (4, 3, 5));
        assert!(h.iter().all(|z| *z == c(0.0, 0.0)));
    }

    #[test]
    fn single_path_matches_triple_loop() {
        let (bs, ms, sub) = small_system();
        let mut paths = PathSet::default();
        paths.push(1.0, 2.0, 3.3e-7, c(1.0, 0.0));
        let h = synthesize_channel(&bs, &ms, &sub, &paths).unwrap();
        let cb = coupling_matrix(bs.coupling, 4).unwrap().dot(&steering_vector(&bs, 1.0).unwrap());
        let cm = coupling_matrix(ms.coupling, 3).unwrap().dot(&steering_vector(&ms, 2.0).unwrap());
        let ef = frequency_response(&sub, 3.3e-7).unwrap();
        for a in 0..4 {
            for b in 0..3 {
                for k in 0..5 {
                    assert!(close(h[(a, b, k)], cb[a] * cm[b] * ef[k], 1e-12));
                }
            }
        }
    }

    #[test]
    fn opposite_gains_cancel_and_scaling_is_linear() {
        let (bs, ms, sub) = small_system();
        let mut paths = PathSet::default();
        paths.push(0.7, 1.9, 1e-7, c(0.5, 0.25));
        paths.push(0.7, 1.9, 1e-7, c(-0.5, -0.25));
        let h = synthesize_channel(&bs, &ms, &sub, &paths).unwrap();
        assert!(h.iter().all(|z| z.norm() < 1e-15));

        let mut paths = PathSet::default();
        paths.push(0.7, 1.9, 1e-7, c(0.5, 0.25));
        paths.push(2.2, 0.4, 2e-7, c(-0.1, 0.8));
        let h = synthesize_channel(&bs, &ms, &sub, &paths).unwrap();
        let factor = c(-1.5, 2.0);
        let hs = synthesize_channel(&bs, &ms, &sub, &paths.scaled(factor)).unwrap();
        for (a, b) in h.iter().zip(hs.iter()) {
            assert!(close(a * factor, *b, 1e-14 * (1.0 + b.norm())));
        }
    }

    #[test]
    fn zero_spreads_reproduce_nominal() {
        let lambda = SPEED_OF_LIGHT / 28e9;
        let bs = ArrayParams::nominal_ula(8, lambda).unwrap();
        let ms = vec![ArrayParams::nominal_ula(4, lambda).unwrap(); 3];
        let sub = SubcarrierParams::uniform(28e9, 1.44e6, 8).unwrap();
        let sys = sample_impairments(&bs, &ms, &sub, &ImpairmentSpreads::none(), 3).unwrap();
        assert_eq!(sys.bs, bs);
        assert_eq!(sys.ms, ms);
        assert_eq!(sys.sub, sub);
    }

    #[test]
    fn impairment_laws_and_determinism() {
        let lambda = SPEED_OF_LIGHT / 28e9;
        let bs = ArrayParams::nominal_ula(16, lambda).unwrap();
        let ms = vec![ArrayParams::nominal_ula(8, lambda).unwrap(); 10];
        let sub = SubcarrierParams::uniform(28e9, 1.44e6, 8).unwrap();
        let spreads = ImpairmentSpreads {
            delta_a_prime: 0.2,
            delta_phi_m: 0.3,
            ppm: 2e-3,
            ..ImpairmentSpreads::default()
        };
        for seed in 0..20 {
            let sys = sample_impairments(&bs, &ms, &sub, &spreads, seed).unwrap();
            assert_eq!(sys, sample_impairments(&bs, &ms, &sub, &spreads, seed).unwrap());
            assert_eq!(sys.bs.coupling, spreads.coupling_true);
            for (p, q) in sys.bs.positions.iter().zip(&bs.positions) {
                assert!((p[1] - q[1]).abs() <= 0.24 * lambda);
                assert_eq!(p[0], q[0]);
                assert_eq!(p[2], q[2]);
            }
            for i in 0..16 {
                let da = sys.bs.gain_amplitudes[i] - 1.0;
                assert!((-0.4..=0.0).contains(&da));
                assert!(sys.bs.gain_phases[i].abs() <= 0.4);
            }
            for m in &sys.ms {
                for (p, q) in m.positions.iter().zip(&ms[0].positions) {
                    assert!((p[1] - q[1]).abs() <= 0.24 * lambda);
                }
                assert!(m.gain_amplitudes.iter().all(|a| (0.8..=1.0).contains(a)));
                assert!(m.gain_phases.iter().all(|p| p.abs() <= 0.3));
                assert_eq!(m.coupling, c(0.0, 0.0));
            }
            assert_ne!(sys.ms[0].positions, sys.ms[1].positions);
            for (i, (f, f0)) in sys.sub.frequencies.iter().zip(&sub.frequencies).enumerate() {
                assert!((f - f0 - (i + 1) as f64 * 2e-3 * 1.44e6).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn noise_edge_cases() {
        let (bs, ms, sub) = small_system();
        let mut paths = PathSet::default();
        paths.push(1.2, 0.8, 1e-7, c(1.0, 0.3));
        let h = synthesize_channel(&bs, &ms, &sub, &paths).unwrap();
        let (y, s2) = add_noise(&h, f64::INFINITY, 1).unwrap();
        assert_eq!(y, h);
        assert_eq!(s2, 0.0);
        let (_, s2) = add_noise(&h, 0.0, 1).unwrap();
        let energy = frobenius_norm_sq(h.iter());
        assert!((s2 - energy / h.len() as f64).abs() < 1e-15 * energy);
        let zero = Tensor3::zeros((2, 2, 2));
        assert!(matches!(add_noise(&zero, 10.0, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn noise_variance_monte_carlo() {
        let (bs, ms, sub) = small_system();
        let mut paths = PathSet::default();
        paths.push(1.2, 0.8, 1e-7, c(1.0, 0.3));
        let h = synthesize_channel(&bs, &ms, &sub, &paths).unwrap();
        let mut acc = 0.0;
        let mut count = 0.0;
        for seed in 0..1000 {
            let (y, s2) = add_noise(&h, 10.0, seed).unwrap();
            acc += frobenius_norm_sq((&y - &h).iter()) / (h.len() as f64 * s2);
            count += 1.0;
        }
        let ratio = acc / count;
        assert!((ratio - 1.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn placement_is_geometry_consistent() {
        let geometry = GeometryConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let period = 1.0 / 1.44e6;
        for _ in 0..200 {
            let p = sample_placement(&geometry, period, &mut rng).unwrap();
            let d = (p.position[0].powi(2) + p.position[1].powi(2)).sqrt();
            assert!((p.paths.delay[0] - d / SPEED_OF_LIGHT).abs() < 1e-18);
            assert!((p.paths.aoa[0].cos() * d - p.position[1]).abs() < 1e-9);
            assert!((p.paths.aoa[0] + p.paths.aod[0] - PI).abs() < 1e-15);
            assert!(p.paths.delay.iter().all(|&t| t >= p.paths.delay[0] && t < period));
            let los = p.paths.gain[0].norm();
            assert!(p.paths.gain[1..].iter().all(|g| g.norm() < los));
            p.paths.validate().unwrap();
        }
    }
}
