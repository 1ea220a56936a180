//! Factor dictionaries over angle and delay grids.
//!
//! The full dictionary is the Kronecker product `D_B ⊗ D_m ⊗ D_S`; it is
//! never formed. Columns are not normalized.

use std::f64::consts::PI;

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::channel::{coupled_steering_vector, frequency_response, ArrayParams, SubcarrierParams};
use crate::error::{Error, Result};
use crate::tensor::{adjoint, kron3, CMatrix, CVector};

/// Grid sizes `(A_B, A_M, A_S)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub a_b: usize,
    pub a_m: usize,
    pub a_s: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.a_b < 2 || self.a_m < 2 || self.a_s < 1 {
            return Err(Error::Config(format!(
                "grid sizes must satisfy A_B >= 2, A_M >= 2, A_S >= 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Angles whose cosines are equally spaced on `[-1, 1]`, starting at `π`.
pub fn build_angle_grid(count: usize) -> Result<Vec<f64>> {
    if count < 2 {
        return Err(Error::Domain(format!("angle grid needs at least 2 points, got {count}")));
    }
    Ok((0..count)
        .map(|j| {
            let c = -1.0 + 2.0 * j as f64 / (count - 1) as f64;
            if j == 0 {
                PI
            } else if j == count - 1 {
                0.0
            } else {
                c.clamp(-1.0, 1.0).acos()
            }
        })
        .collect())
}

/// Delays `j / (A_S Δf)`, covering one frequency-response period `[0, 1/Δf)`.
pub fn build_delay_grid(count: usize, spacing: f64) -> Result<Vec<f64>> {
    if count < 1 {
        return Err(Error::Domain("delay grid needs at least one point".into()));
    }
    if !(spacing > 0.0) {
        return Err(Error::Domain(format!("subcarrier spacing {spacing} must be positive")));
    }
    Ok((0..count).map(|j| j as f64 / (count as f64 * spacing)).collect())
}

/// The three factor dictionaries and the grids that index their columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DictionarySet {
    pub d_b: CMatrix,
    pub d_m: CMatrix,
    pub d_s: CMatrix,
    pub angle_grid_b: Vec<f64>,
    pub angle_grid_m: Vec<f64>,
    pub delay_grid: Vec<f64>,
}

/// Index triple of one Kronecker atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SupportEntry {
    pub i_b: usize,
    pub i_m: usize,
    pub i_s: usize,
}

impl SupportEntry {
    pub fn new(i_b: usize, i_m: usize, i_s: usize) -> Self {
        SupportEntry { i_b, i_m, i_s }
    }
}

/// Matrix whose columns are `C(c₁)·e(angle)` for each grid angle.
pub fn steering_dictionary(array: &ArrayParams, grid: &[f64]) -> Result<CMatrix> {
    let mut d = CMatrix::zeros((array.len(), grid.len()));
    for (mut col, &angle) in d.axis_iter_mut(Axis(1)).zip(grid) {
        col.assign(&coupled_steering_vector(array, angle)?);
    }
    Ok(d)
}

/// Matrix whose columns are frequency responses for each grid delay.
pub fn delay_dictionary(sub: &SubcarrierParams, grid: &[f64]) -> Result<CMatrix> {
    let mut d = CMatrix::zeros((sub.len(), grid.len()));
    for (mut col, &tau) in d.axis_iter_mut(Axis(1)).zip(grid) {
        col.assign(&frequency_response(sub, tau)?);
    }
    Ok(d)
}

/// Builds `D_B`, `D_m`, `D_S` on the standard grids. Coupling comes from each
/// array's `coupling` field, so nominal arrays give identity coupling.
pub fn build_dictionary_set(
    bs: &ArrayParams,
    ms: &ArrayParams,
    sub: &SubcarrierParams,
    grid: &GridSpec,
) -> Result<DictionarySet> {
    grid.validate()?;
    let angle_grid_b = build_angle_grid(grid.a_b)?;
    let angle_grid_m = build_angle_grid(grid.a_m)?;
    let delay_grid = build_delay_grid(grid.a_s, sub.spacing)?;
    DictionarySet::from_grids(bs, ms, sub, angle_grid_b, angle_grid_m, delay_grid)
}

impl DictionarySet {
    /// Builds the dictionaries on caller-supplied grids.
    pub fn from_grids(
        bs: &ArrayParams,
        ms: &ArrayParams,
        sub: &SubcarrierParams,
        angle_grid_b: Vec<f64>,
        angle_grid_m: Vec<f64>,
        delay_grid: Vec<f64>,
    ) -> Result<DictionarySet> {
        bs.validate()?;
        ms.validate()?;
        sub.validate()?;
        Ok(DictionarySet {
            d_b: steering_dictionary(bs, &angle_grid_b)?,
            d_m: steering_dictionary(ms, &angle_grid_m)?,
            d_s: delay_dictionary(sub, &delay_grid)?,
            angle_grid_b,
            angle_grid_m,
            delay_grid,
        })
    }

    /// Signal dimensions `(N_B, N_M, N_S)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.d_b.nrows(), self.d_m.nrows(), self.d_s.nrows())
    }

    /// Grid sizes `(A_B, A_M, A_S)`.
    pub fn grid_sizes(&self) -> (usize, usize, usize) {
        (self.d_b.ncols(), self.d_m.ncols(), self.d_s.ncols())
    }

    /// Flattened atom `D_B[:, i_b] ⊗ D_m[:, i_m] ⊗ D_S[:, i_s]`.
    pub fn atom(&self, entry: SupportEntry) -> CVector {
        kron3(
            &self.d_b.column(entry.i_b),
            &self.d_m.column(entry.i_m),
            &self.d_s.column(entry.i_s),
        )
    }

    pub fn contains(&self, entry: SupportEntry) -> bool {
        let (a, b, c) = self.grid_sizes();
        entry.i_b < a && entry.i_m < b && entry.i_s < c
    }

    /// Conjugate transposes `(D_B^H, D_m^H, D_S^H)`.
    pub fn adjoints(&self) -> [CMatrix; 3] {
        [adjoint(&self.d_b.view()), adjoint(&self.d_m.view()), adjoint(&self.d_s.view())]
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_b.ncols() != self.angle_grid_b.len()
            || self.d_m.ncols() != self.angle_grid_m.len()
            || self.d_s.ncols() != self.delay_grid.len()
        {
            return Err(Error::Shape("dictionary column counts do not match their grids".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{
        coupling_matrix, sample_impairments, steering_vector, synthesize_channel, ImpairmentSpreads, PathSet,
        SPEED_OF_LIGHT,
    };
    use crate::tensor::{flatten, C64};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn angle_grid_examples() {
        let g = build_angle_grid(3).unwrap();
        assert_eq!(g[0], PI);
        assert!((g[1] - PI / 2.0).abs() < 1e-15);
        assert_eq!(g[2], 0.0);
        assert_eq!(build_angle_grid(2).unwrap(), vec![PI, 0.0]);
        let cos: Vec<f64> = build_angle_grid(5).unwrap().iter().map(|a| a.cos()).collect();
        for (got, want) in cos.iter().zip([-1.0, -0.5, 0.0, 0.5, 1.0]) {
            assert!((got - want).abs() < 1e-15);
        }
        assert!(matches!(build_angle_grid(1), Err(Error::Domain(_))));
        assert!(build_angle_grid(160).unwrap().iter().all(|a| (0.0..=PI).contains(a)));
    }

    #[test]
    fn delay_grid_examples() {
        assert_eq!(build_delay_grid(4, 1.0).unwrap(), vec![0.0, 0.25, 0.5, 0.75]);
        assert_eq!(build_delay_grid(7, 3.0).unwrap()[0], 0.0);
        let g = build_delay_grid(1280, 1.44e6).unwrap();
        let last = *g.last().unwrap();
        assert!((last - (1279.0 / 1280.0) / 1.44e6).abs() < 1e-20);
        assert!((last - 6.9391e-7).abs() < 1e-10);
    }

    fn system() -> (ArrayParams, ArrayParams, SubcarrierParams) {
        let lambda = SPEED_OF_LIGHT / 28e9;
        (
            ArrayParams::nominal_ula(3, lambda).unwrap(),
            ArrayParams::nominal_ula(2, lambda).unwrap(),
            SubcarrierParams::uniform(28e9, 1.44e6, 4).unwrap(),
        )
    }

    #[test]
    fn nominal_broadside_and_zero_delay_columns_are_ones() {
        let (bs, ms, sub) = system();
        let d = build_dictionary_set(&bs, &ms, &sub, &GridSpec { a_b: 5, a_m: 3, a_s: 6 }).unwrap();
        // A = 5 has cosine 0 at index 2.
        assert!(d.d_b.column(2).iter().all(|z| (z - c(1.0, 0.0)).norm() < 1e-12));
        assert!(d.d_s.column(0).iter().all(|z| *z == c(1.0, 0.0)));
        assert!(d.d_s.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        let gram_diag: Vec<f64> = (0..6).map(|j| d.d_s.column(j).iter().map(|z| z.norm_sqr()).sum()).collect();
        assert!(gram_diag.iter().all(|g| (g - 4.0).abs() < 1e-12));
        d.validate().unwrap();
    }

    #[test]
    fn columns_match_dense_coupling_oracle() {
        let (mut bs, ms, sub) = system();
        bs.coupling = c(0.12, -0.07);
        bs.gain_amplitudes = vec![0.9, 1.0, 0.7];
        bs.gain_phases = vec![0.2, -0.1, 0.05];
        bs.positions[1][1] += 0.001;
        let d = build_dictionary_set(&bs, &ms, &sub, &GridSpec { a_b: 4, a_m: 2, a_s: 3 }).unwrap();
        let cb = coupling_matrix(bs.coupling, 3).unwrap();
        for (j, &angle) in d.angle_grid_b.iter().enumerate() {
            let oracle = cb.dot(&steering_vector(&bs, angle).unwrap());
            for i in 0..3 {
                assert!((d.d_b[(i, j)] - oracle[i]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_impairments_give_identical_sets() {
        let (bs, ms, sub) = system();
        let sys = sample_impairments(&bs, &[ms.clone()], &sub, &ImpairmentSpreads::none(), 9).unwrap();
        let grid = GridSpec { a_b: 6, a_m: 4, a_s: 5 };
        let nominal = build_dictionary_set(&bs, &ms, &sub, &grid).unwrap();
        let truth = build_dictionary_set(&sys.bs, &sys.ms[0], &sys.sub, &grid).unwrap();
        assert_eq!(nominal, truth);
    }

    #[test]
    fn on_grid_atom_reproduces_single_path_channel() {
        let (mut bs, ms, sub) = system();
        bs.coupling = c(0.1, 0.1);
        let d = build_dictionary_set(&bs, &ms, &sub, &GridSpec { a_b: 7, a_m: 5, a_s: 9 }).unwrap();
        let entry = SupportEntry::new(2, 4, 6);
        let mut paths = PathSet::default();
        paths.push(d.angle_grid_b[2], d.angle_grid_m[4], d.delay_grid[6], c(1.0, 0.0));
        let h = synthesize_channel(&bs, &ms, &sub, &paths).unwrap();
        let atom = d.atom(entry);
        for (a, b) in flatten(&h.view()).iter().zip(&atom) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
