//! Method of optimal directions (MOD) over a single dictionary dimension.
//!
//! Every dictionary entry is a free complex parameter. Training alternates
//! sparse coding of all snapshots with the closed-form dictionary update
//! `D = Y Xᴴ (X Xᴴ)⁻¹`, so it needs the whole observation matrix up front and
//! at least as many snapshots as atoms.

use ndarray::Axis;
use rayon::prelude::*;

use crate::dictionary::DictionarySet;
use crate::error::{Error, Result};
use crate::linalg::solve_hermitian_pd;
use crate::recovery::{sparse_recover, RecoveryConfig, Selector};
use crate::tensor::{adjoint, frobenius_norm_sq, CMatrix, CVector, C64};

/// Dictionary, codes and snapshots of a MOD run.
#[derive(Debug, Clone, PartialEq)]
pub struct ModState {
    /// `N × A`.
    pub dictionary: CMatrix,
    /// `A × L`, at most `max_atoms` nonzeros per column.
    pub code_matrix: CMatrix,
    /// `N × L`.
    pub observation_matrix: CMatrix,
    /// `‖Y − D X‖_F` right after each dictionary update.
    pub fit_history: Vec<f64>,
}

/// Wraps a single `N × A` dictionary as a three-factor set with trivial
/// second and third factors, so snapshots are `N × 1 × 1` tensors.
pub fn single_dimension_dictionaries(d: &CMatrix, angle_grid: Vec<f64>) -> DictionarySet {
    let one = CMatrix::from_elem((1, 1), C64::new(1.0, 0.0));
    DictionarySet {
        d_b: d.clone(),
        d_m: one.clone(),
        d_s: one,
        angle_grid_b: angle_grid,
        angle_grid_m: vec![std::f64::consts::FRAC_PI_2],
        delay_grid: vec![0.0],
    }
}

/// Sparse code of one snapshot `y` over `d` with plain OMP.
pub fn omp_code(y: &CVector, d: &CMatrix, max_atoms: usize) -> Result<CVector> {
    if y.len() != d.nrows() {
        return Err(Error::Shape(format!("snapshot length {} vs dictionary rows {}", y.len(), d.nrows())));
    }
    let dicts = single_dimension_dictionaries(d, vec![0.0; d.ncols()]);
    let cfg = RecoveryConfig {
        selector: Selector::Omp,
        max_atoms,
        residual_tol: 0.0,
        n_refine: 0,
    };
    let tensor = y.clone().into_shape_with_order((y.len(), 1, 1)).expect("contiguous vector");
    let res = sparse_recover(&tensor.view(), &dicts, &cfg)?;
    let mut code = CVector::zeros(d.ncols());
    for (entry, &x) in res.support.iter().zip(&res.coefficients) {
        code[entry.i_b] = x;
    }
    Ok(code)
}

/// Least-squares dictionary `D = Y Xᴴ (X Xᴴ)⁻¹` for snapshots `Y` (`N × L`)
/// and codes `X` (`A × L`).
pub fn mod_update(observations: &CMatrix, codes: &CMatrix) -> Result<CMatrix> {
    let (n, l) = observations.dim();
    let (a, lc) = codes.dim();
    if l != lc {
        return Err(Error::Shape(format!("{l} snapshots but {lc} code columns")));
    }
    if l < a {
        return Err(Error::RankDeficient(format!(
            "MOD needs at least as many observations as atoms: L = {l} < A = {a}"
        )));
    }
    let xh = adjoint(&codes.view());
    let gram = codes.dot(&xh);
    let rhs = observations.dot(&xh);
    // D G = Y Xᴴ  ⇔  G Dᴴ = (Y Xᴴ)ᴴ since G is Hermitian.
    let dh = solve_hermitian_pd(&gram.view(), &adjoint(&rhs.view()).view()).map_err(|e| match e {
        Error::RankDeficient(msg) => Error::RankDeficient(format!(
            "code Gram matrix is singular ({msg}); the number of observations must be well above the number of atoms"
        )),
        other => other,
    })?;
    let d = adjoint(&dh.view());
    debug_assert_eq!(d.dim(), (n, a));
    Ok(d)
}

fn fit(y: &CMatrix, d: &CMatrix, x: &CMatrix) -> f64 {
    frobenius_norm_sq((y - &d.dot(x)).iter()).sqrt()
}

/// Alternates OMP coding of every snapshot with a dictionary update.
///
/// The update is restricted to atoms that some snapshot actually uses; an
/// unused column would make `X Xᴴ` singular while carrying no information.
/// Updated columns are rescaled to norm `√N` with the inverse scale moved into
/// the codes, which leaves `D X` unchanged and keeps atom energies comparable
/// for the next coding step.
pub fn mod_train(observations: &CMatrix, initial: &CMatrix, max_atoms: usize, iterations: usize) -> Result<ModState> {
    let (n, l) = observations.dim();
    let a = initial.ncols();
    if initial.nrows() != n {
        return Err(Error::Shape(format!("dictionary has {} rows, snapshots {n}", initial.nrows())));
    }
    if l < a {
        return Err(Error::RankDeficient(format!(
            "MOD needs at least as many observations as atoms: L = {l} < A = {a}"
        )));
    }
    let mut d = initial.clone();
    let mut x = CMatrix::zeros((a, l));
    let mut fit_history = Vec::with_capacity(iterations);
    let target = (n as f64).sqrt();
    for _ in 0..iterations {
        let cols: Vec<CVector> = (0..l)
            .into_par_iter()
            .map(|t| omp_code(&observations.column(t).to_owned(), &d, max_atoms))
            .collect::<Result<_>>()?;
        for (t, c) in cols.iter().enumerate() {
            x.column_mut(t).assign(c);
        }
        let used: Vec<usize> = (0..a).filter(|&i| x.row(i).iter().any(|z| z.norm_sqr() > 0.0)).collect();
        if used.is_empty() {
            fit_history.push(fit(observations, &d, &x));
            continue;
        }
        let xu = x.select(Axis(0), &used);
        let du = mod_update(observations, &xu)?;
        for (k, &i) in used.iter().enumerate() {
            let col = du.column(k);
            let norm = frobenius_norm_sq(col.iter()).sqrt();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(Error::Numerical(format!("atom {i} collapsed during the MOD update")));
            }
            let scale = target / norm;
            d.column_mut(i).assign(&col.mapv(|z| z * scale));
            x.row_mut(i).mapv_inplace(|z| z / scale);
        }
        fit_history.push(fit(observations, &d, &x));
    }
    Ok(ModState {
        dictionary: d,
        code_matrix: x,
        observation_matrix: observations.clone(),
        fit_history,
    })
}

/// Mean NMSE of OMP estimates of `snapshots` against `truths` over `d`.
pub fn snapshot_nmse(snapshots: &CMatrix, truths: &CMatrix, d: &CMatrix, max_atoms: usize) -> Result<f64> {
    let l = snapshots.ncols();
    if l == 0 || truths.dim() != snapshots.dim() {
        return Err(Error::Shape("snapshots and truths must be non-empty and equally shaped".into()));
    }
    let errs: Vec<f64> = (0..l)
        .into_par_iter()
        .map(|t| {
            let code = omp_code(&snapshots.column(t).to_owned(), d, max_atoms)?;
            let est = d.dot(&code);
            let h = truths.column(t);
            Ok(frobenius_norm_sq((&est - &h).iter()) / frobenius_norm_sq(h.iter()))
        })
        .collect::<Result<_>>()?;
    Ok(errs.iter().sum::<f64>() / l as f64)
}

/// Stacks snapshot vectors as the columns of an `N × L` matrix.
pub fn stack_columns(columns: &[CVector]) -> Result<CMatrix> {
    let n = columns.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::Shape("snapshots differ in length".into()));
    }
    let mut m = CMatrix::zeros((n, columns.len()));
    for (t, c) in columns.iter().enumerate() {
        m.column_mut(t).assign(c);
    }
    Ok(m)
}
