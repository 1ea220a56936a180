//! Greedy sparse recovery over Kronecker-structured dictionaries.
//!
//! Two atom selectors are provided. [`omp_select`] forms the full correlation
//! tensor `C = D_S^H ×₃ (D_m^H ×₂ (D_B^H ×₁ R))` and returns its global
//! maximum, costing `O(A_B A_M A_S)` per selection. [`momp_select`] picks one
//! index per factor dictionary in sequence and then refines each index with
//! the others held fixed, costing `O(A_B + A_M + A_S)` in the grid sizes.
//!
//! [`sparse_recover`] runs the orthogonal matching pursuit loop: select,
//! append the Kronecker atom, re-fit every coefficient by least squares,
//! update the residual.

use ndarray::{Array2, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::dictionary::{DictionarySet, SupportEntry};
use crate::error::{Error, Result};
use crate::linalg::{least_squares, LsSolution};
use crate::tensor::{
    adjoint, contract_12, contract_13, contract_23, flatten, frobenius_norm_sq, from_flat, mode_n_product,
    slice_norms_sq, CMatrix, CVector, Mode, Tensor3, C64,
};

/// Atom selection strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selector {
    /// Exhaustive search over the full correlation tensor.
    Omp,
    /// Sequential per-dictionary search with coordinate refinement.
    Momp,
}

/// Parameters of the recovery loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecoveryConfig {
    pub selector: Selector,
    /// Upper bound on the support size.
    pub max_atoms: usize,
    /// Stop once `‖r‖ ≤ residual_tol · ‖y‖`. Zero disables the test.
    pub residual_tol: f64,
    /// Refinement rounds of the MOMP selector.
    pub n_refine: usize,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig {
            selector: Selector::Momp,
            max_atoms: 4,
            residual_tol: 0.0,
            n_refine: 3,
        }
    }
}

/// Output of [`sparse_recover`].
#[derive(Debug, Clone)]
pub struct RecoveryResult {
    pub support: Vec<SupportEntry>,
    pub coefficients: CVector,
    pub estimate: Tensor3,
    /// `‖r‖_F` before the first iteration followed by its value after every
    /// accepted atom.
    pub residual_norms: Vec<f64>,
}

impl RecoveryResult {
    fn empty(shape: (usize, usize, usize), y_norm: f64) -> Self {
        RecoveryResult {
            support: Vec::new(),
            coefficients: CVector::zeros(0),
            estimate: Tensor3::zeros(shape),
            residual_norms: vec![y_norm],
        }
    }
}

fn check_dims(residual: &ArrayView3<'_, C64>, dicts: &DictionarySet) -> Result<()> {
    if residual.dim() != dicts.dims() {
        return Err(Error::Shape(format!(
            "signal shape {:?} does not match dictionary rows {:?}",
            residual.dim(),
            dicts.dims()
        )));
    }
    Ok(())
}

/// Index of the largest value, lowest index on ties. `None` when every value
/// is zero.
fn argmax(values: impl IntoIterator<Item = f64>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.filter(|&(_, v)| v > 0.0)
}

/// Full correlation tensor `D_S^H ×₃ (D_m^H ×₂ (D_B^H ×₁ R))`.
pub fn correlation_tensor(residual: &ArrayView3<'_, C64>, dicts: &DictionarySet) -> Result<Tensor3> {
    check_dims(residual, dicts)?;
    let [bh, mh, sh] = dicts.adjoints();
    let c1 = mode_n_product(residual, &bh.view(), Mode::First)?;
    let c2 = mode_n_product(&c1.view(), &mh.view(), Mode::Second)?;
    mode_n_product(&c2.view(), &sh.view(), Mode::Third)
}

/// Exhaustive atom selection. Returns `None` for a zero residual. Ties go to
/// the lexicographically smallest index triple.
pub fn omp_select(residual: &ArrayView3<'_, C64>, dicts: &DictionarySet) -> Result<Option<SupportEntry>> {
    let c = correlation_tensor(residual, dicts)?;
    let (_, a_m, a_s) = c.dim();
    Ok(argmax(c.iter().map(|z| z.norm_sqr())).map(|(flat, _)| {
        SupportEntry::new(flat / (a_m * a_s), (flat / a_s) % a_m, flat % a_s)
    }))
}

/// Squared correlation `|a^H r|²` between the residual and one atom.
pub fn joint_correlation(residual: &ArrayView3<'_, C64>, dicts: &DictionarySet, entry: SupportEntry) -> f64 {
    let v = contract_23(residual, &dicts.d_m.column(entry.i_m), &dicts.d_s.column(entry.i_s));
    v.iter()
        .zip(dicts.d_b.column(entry.i_b))
        .map(|(x, a)| a.conj() * x)
        .sum::<C64>()
        .norm_sqr()
}

/// Sequential selection result together with the joint correlation reached
/// after the sequential stage and after every refinement round.
#[derive(Debug, Clone)]
pub struct MompTrace {
    pub entry: SupportEntry,
    pub joint: Vec<f64>,
}

fn best_column(dict_adj: &CMatrix, v: &CVector) -> Option<(usize, f64)> {
    argmax(dict_adj.dot(v).iter().map(|z| z.norm_sqr()))
}

/// Sequential MOMP selection with `n_refine` rounds of cyclic coordinate
/// refinement, recording the joint correlation along the way.
pub fn momp_select_traced(
    residual: &ArrayView3<'_, C64>,
    dicts: &DictionarySet,
    n_refine: usize,
) -> Result<Option<MompTrace>> {
    check_dims(residual, dicts)?;
    let [bh, mh, sh] = dicts.adjoints();

    // Step 1: correlate along D_B, keep the slice with the most energy.
    let c1 = mode_n_product(residual, &bh.view(), Mode::First)?;
    let Some((i_b, _)) = argmax(slice_norms_sq(&c1.view(), Mode::First)) else {
        return Ok(None);
    };
    // Step 2: correlate that slice along D_m, keep the strongest row.
    let c2 = mh.dot(&c1.index_axis(Axis(0), i_b));
    let Some((i_m, _)) = argmax(c2.outer_iter().map(|row| frobenius_norm_sq(row.iter()))) else {
        return Ok(None);
    };
    // Step 3: correlate that row along D_S.
    let c3 = sh.dot(&c2.index_axis(Axis(0), i_m));
    let Some((i_s, _)) = argmax(c3.iter().map(|z| z.norm_sqr())) else {
        return Ok(None);
    };

    let mut entry = SupportEntry::new(i_b, i_m, i_s);
    let mut joint = vec![joint_correlation(residual, dicts, entry)];
    // Step 4: re-optimize each index with the other two fixed.
    for _ in 0..n_refine {
        let before = entry;
        let v = contract_23(residual, &dicts.d_m.column(entry.i_m), &dicts.d_s.column(entry.i_s));
        if let Some((i, _)) = best_column(&bh, &v) {
            entry.i_b = i;
        }
        let v = contract_13(residual, &dicts.d_b.column(entry.i_b), &dicts.d_s.column(entry.i_s));
        if let Some((i, _)) = best_column(&mh, &v) {
            entry.i_m = i;
        }
        let v = contract_12(residual, &dicts.d_b.column(entry.i_b), &dicts.d_m.column(entry.i_m));
        if let Some((i, _)) = best_column(&sh, &v) {
            entry.i_s = i;
        }
        joint.push(joint_correlation(residual, dicts, entry));
        if entry == before {
            break;
        }
    }
    Ok(Some(MompTrace { entry, joint }))
}

/// Sequential MOMP atom selection. Returns `None` for a zero residual.
pub fn momp_select(residual: &ArrayView3<'_, C64>, dicts: &DictionarySet, n_refine: usize) -> Result<Option<SupportEntry>> {
    Ok(momp_select_traced(residual, dicts, n_refine)?.map(|t| t.entry))
}

/// Least-squares coefficients of `y` on the columns of `atoms`.
pub fn support_least_squares(y: &CVector, atoms: &CMatrix) -> Result<LsSolution> {
    least_squares(&atoms.view(), &y.view())
}

/// Matrix whose columns are the flattened atoms of `support`.
pub fn atom_matrix(dicts: &DictionarySet, support: &[SupportEntry]) -> CMatrix {
    let (n_b, n_m, n_s) = dicts.dims();
    let mut a = CMatrix::zeros((n_b * n_m * n_s, support.len()));
    for (mut col, &entry) in a.axis_iter_mut(Axis(1)).zip(support) {
        col.assign(&dicts.atom(entry));
    }
    a
}

/// Least-squares fit of `y` on a fixed support. Returns the coefficients and
/// the estimate `D_I x*`.
pub fn fit_support(y: &ArrayView3<'_, C64>, dicts: &DictionarySet, support: &[SupportEntry]) -> Result<(CVector, Tensor3)> {
    check_dims(y, dicts)?;
    if support.is_empty() {
        return Ok((CVector::zeros(0), Tensor3::zeros(y.dim())));
    }
    let a = atom_matrix(dicts, support);
    let sol = support_least_squares(&flatten(y), &a)?;
    let estimate = from_flat(a.dot(&sol.x), y.dim())?;
    Ok((sol.x, estimate))
}

/// Orthogonal matching pursuit with the chosen selector.
///
/// Stops when the support reaches `max_atoms`, when the relative residual
/// drops below `residual_tol`, when the selector returns an atom already in
/// the support, or when the least-squares re-fit does not lower the residual.
pub fn sparse_recover(y: &ArrayView3<'_, C64>, dicts: &DictionarySet, cfg: &RecoveryConfig) -> Result<RecoveryResult> {
    check_dims(y, dicts)?;
    if cfg.max_atoms == 0 {
        return Err(Error::Config("max_atoms must be at least 1".into()));
    }
    let shape = y.dim();
    let y_flat = flatten(y);
    let y_norm = frobenius_norm_sq(y_flat.iter()).sqrt();
    let mut result = RecoveryResult::empty(shape, y_norm);
    if y_norm == 0.0 {
        return Ok(result);
    }

    let mut residual = y.to_owned();
    let mut residual_norm = y_norm;
    let mut columns: Vec<CVector> = Vec::new();
    while result.support.len() < cfg.max_atoms {
        if cfg.residual_tol > 0.0 && residual_norm <= cfg.residual_tol * y_norm {
            break;
        }
        let selected = match cfg.selector {
            Selector::Omp => omp_select(&residual.view(), dicts)?,
            Selector::Momp => momp_select(&residual.view(), dicts, cfg.n_refine)?,
        };
        let Some(entry) = selected else { break };
        if result.support.contains(&entry) {
            break;
        }
        columns.push(dicts.atom(entry));
        let mut a = CMatrix::zeros((y_flat.len(), columns.len()));
        for (mut col, atom) in a.axis_iter_mut(Axis(1)).zip(&columns) {
            col.assign(atom);
        }
        let sol = support_least_squares(&y_flat, &a)?;
        let fitted = a.dot(&sol.x);
        let r_flat = &y_flat - &fitted;
        let new_norm = frobenius_norm_sq(r_flat.iter()).sqrt();
        if sol.rank_deficient || !(new_norm < residual_norm) {
            columns.pop();
            break;
        }
        result.support.push(entry);
        result.coefficients = sol.x;
        result.estimate = from_flat(fitted, shape)?;
        result.residual_norms.push(new_norm);
        residual = from_flat(r_flat, shape)?;
        residual_norm = new_norm;
    }
    Ok(result)
}

/// Angle–delay energy map: entry `(i, k)` is the norm over the MS mode of
/// `D_B^H ×₁ (D_S^H ×₃ Y)` at BS angle `i` and delay `k`.
pub fn angle_delay_map(y: &ArrayView3<'_, C64>, dicts: &DictionarySet) -> Result<Array2<f64>> {
    check_dims(y, dicts)?;
    let bh = adjoint(&dicts.d_b.view());
    let sh = adjoint(&dicts.d_s.view());
    let t = mode_n_product(&mode_n_product(y, &sh.view(), Mode::Third)?.view(), &bh.view(), Mode::First)?;
    let (a_b, _, a_s) = t.dim();
    Ok(Array2::from_shape_fn((a_b, a_s), |(i, k)| {
        t.index_axis(Axis(0), i)
            .column(k)
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }))
}

/// Normalized squared error `‖ĥ − h‖² / ‖h‖²`.
pub fn nmse(estimate: &ArrayView3<'_, C64>, truth: &ArrayView3<'_, C64>) -> f64 {
    let err: f64 = estimate.iter().zip(truth.iter()).map(|(a, b)| (a - b).norm_sqr()).sum();
    err / frobenius_norm_sq(truth.iter())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{kron3, outer3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_matrix(rng: &mut ChaCha8Rng, shape: (usize, usize)) -> CMatrix {
        CMatrix::from_shape_simple_fn(shape, || c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn random_dicts(rng: &mut ChaCha8Rng, dims: (usize, usize, usize), grids: (usize, usize, usize)) -> DictionarySet {
        DictionarySet {
            d_b: random_matrix(rng, (dims.0, grids.0)),
            d_m: random_matrix(rng, (dims.1, grids.1)),
            d_s: random_matrix(rng, (dims.2, grids.2)),
            angle_grid_b: vec![0.0; grids.0],
            angle_grid_m: vec![0.0; grids.1],
            delay_grid: vec![0.0; grids.2],
        }
    }

    /// Identity-block dictionaries: mutually orthogonal columns.
    fn orthogonal_dicts(dims: (usize, usize, usize)) -> DictionarySet {
        DictionarySet {
            d_b: CMatrix::eye(dims.0),
            d_m: CMatrix::eye(dims.1),
            d_s: CMatrix::eye(dims.2),
            angle_grid_b: vec![0.0; dims.0],
            angle_grid_m: vec![0.0; dims.1],
            delay_grid: vec![0.0; dims.2],
        }
    }

    fn atom_tensor(d: &DictionarySet, e: SupportEntry) -> Tensor3 {
        outer3(&d.d_b.column(e.i_b), &d.d_m.column(e.i_m), &d.d_s.column(e.i_s))
    }

    #[test]
    fn selects_single_orthogonal_atom() {
        let d = orthogonal_dicts((4, 3, 8));
        let e = SupportEntry::new(2, 1, 7);
        let r = atom_tensor(&d, e);
        assert_eq!(omp_select(&r.view(), &d).unwrap(), Some(e));
        assert_eq!(momp_select(&r.view(), &d, 0).unwrap(), Some(e));
        assert_eq!(momp_select(&r.view(), &d, 3).unwrap(), Some(e));
    }

    #[test]
    fn zero_residual_selects_nothing() {
        let d = orthogonal_dicts((2, 2, 2));
        let z = Tensor3::zeros((2, 2, 2));
        assert_eq!(omp_select(&z.view(), &d).unwrap(), None);
        assert_eq!(momp_select(&z.view(), &d, 2).unwrap(), None);
        let res = sparse_recover(&z.view(), &d, &RecoveryConfig::default()).unwrap();
        assert!(res.support.is_empty());
        assert!(res.estimate.iter().all(|z| *z == c(0.0, 0.0)));
    }

    #[test]
    fn omp_matches_flat_bruteforce() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let d = random_dicts(&mut rng, (3, 2, 4), (5, 4, 6));
        for _ in 0..20 {
            let r = Tensor3::from_shape_simple_fn((3, 2, 4), || c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let rv = flatten(&r.view());
            let mut best = (SupportEntry::new(0, 0, 0), -1.0);
            for i in 0..5 {
                for j in 0..4 {
                    for k in 0..6 {
                        let a = kron3(&d.d_b.column(i), &d.d_m.column(j), &d.d_s.column(k));
                        let v = a.iter().zip(&rv).map(|(a, x)| a.conj() * x).sum::<C64>().norm_sqr();
                        if v > best.1 {
                            best = (SupportEntry::new(i, j, k), v);
                        }
                    }
                }
            }
            assert_eq!(omp_select(&r.view(), &d).unwrap(), Some(best.0));
        }
    }

    #[test]
    fn refinement_never_decreases_joint_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let d = random_dicts(&mut rng, (4, 3, 8), (8, 6, 16));
            let r = Tensor3::from_shape_simple_fn((4, 3, 8), || c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let trace = momp_select_traced(&r.view(), &d, 3).unwrap().unwrap();
            for w in trace.joint.windows(2) {
                assert!(w[1] >= w[0] * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn n_refine_zero_is_pure_sequential() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let d = random_dicts(&mut rng, (4, 3, 5), (6, 5, 7));
        let r = Tensor3::from_shape_simple_fn((4, 3, 5), || c(rng.random(), rng.random()));
        let t = momp_select_traced(&r.view(), &d, 0).unwrap().unwrap();
        assert_eq!(t.joint.len(), 1);
        // Sequential oracle by direct loops.
        let [bh, mh, sh] = d.adjoints();
        let c1 = mode_n_product(&r.view(), &bh.view(), Mode::First).unwrap();
        let i_b = (0..6)
            .max_by(|&a, &b| {
                let na: f64 = c1.index_axis(Axis(0), a).iter().map(|z| z.norm_sqr()).sum();
                let nb: f64 = c1.index_axis(Axis(0), b).iter().map(|z| z.norm_sqr()).sum();
                na.partial_cmp(&nb).unwrap()
            })
            .unwrap();
        let c2 = mh.dot(&c1.index_axis(Axis(0), i_b));
        let i_m = (0..5)
            .max_by(|&a, &b| {
                let na: f64 = c2.row(a).iter().map(|z| z.norm_sqr()).sum();
                let nb: f64 = c2.row(b).iter().map(|z| z.norm_sqr()).sum();
                na.partial_cmp(&nb).unwrap()
            })
            .unwrap();
        let c3 = sh.dot(&c2.row(i_m));
        let i_s = (0..7).max_by(|&a, &b| c3[a].norm_sqr().partial_cmp(&c3[b].norm_sqr()).unwrap()).unwrap();
        assert_eq!(t.entry, SupportEntry::new(i_b, i_m, i_s));
    }

    #[test]
    fn recovers_orthogonal_three_sparse_signal() {
        let d = orthogonal_dicts((4, 3, 6));
        let entries = [SupportEntry::new(0, 1, 2), SupportEntry::new(3, 0, 5), SupportEntry::new(1, 2, 0)];
        let gains = [c(1.0, 0.5), c(-0.7, 0.2), c(0.3, -0.9)];
        let mut y = Tensor3::zeros((4, 3, 6));
        for (e, g) in entries.iter().zip(gains) {
            y = y + atom_tensor(&d, *e).mapv(|z| z * g);
        }
        for selector in [Selector::Omp, Selector::Momp] {
            let cfg = RecoveryConfig {
                selector,
                max_atoms: 3,
                residual_tol: 1e-3,
                n_refine: 3,
            };
            let res = sparse_recover(&y.view(), &d, &cfg).unwrap();
            let mut got = res.support.clone();
            got.sort();
            let mut want = entries.to_vec();
            want.sort();
            assert_eq!(got, want);
            assert!(nmse(&res.estimate.view(), &y.view()) < 1e-20);
            for w in res.residual_norms.windows(2) {
                assert!(w[1] < w[0]);
            }
        }
    }

    #[test]
    fn estimate_is_sum_of_weighted_atoms() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let d = random_dicts(&mut rng, (4, 3, 5), (6, 5, 7));
        let y = Tensor3::from_shape_simple_fn((4, 3, 5), || c(rng.random(), rng.random()));
        let res = sparse_recover(&y.view(), &d, &RecoveryConfig { max_atoms: 5, ..Default::default() }).unwrap();
        let mut sum = Tensor3::zeros((4, 3, 5));
        for (e, x) in res.support.iter().zip(&res.coefficients) {
            sum = sum + atom_tensor(&d, *e).mapv(|z| z * x);
        }
        assert!(frobenius_norm_sq((&sum - &res.estimate).iter()) < 1e-24 * frobenius_norm_sq(y.iter()));
    }

    #[test]
    fn angle_delay_map_peaks_at_generating_cell() {
        let d = orthogonal_dicts((4, 3, 6));
        let zero = angle_delay_map(&Tensor3::zeros((4, 3, 6)).view(), &d).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
        let y = atom_tensor(&d, SupportEntry::new(2, 1, 4));
        let map = angle_delay_map(&y.view(), &d).unwrap();
        assert_eq!(map.dim(), (4, 6));
        let (imax, _) = argmax(map.iter().copied()).unwrap();
        assert_eq!((imax / 6, imax % 6), (2, 4));
        assert_eq!(map.iter().filter(|&&v| v > 0.0).count(), 1);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let d = orthogonal_dicts((4, 3, 6));
        let y = Tensor3::zeros((4, 3, 5));
        assert!(matches!(omp_select(&y.view(), &d), Err(Error::Shape(_))));
        assert!(matches!(sparse_recover(&y.view(), &d, &RecoveryConfig::default()), Err(Error::Shape(_))));
    }
}
