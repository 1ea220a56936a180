//! Small dense complex solvers.
//!
//! Least squares goes through a Householder QR; the rank-deficient fallback
//! and Hermitian positive-definite solves are delegated to `nalgebra`.

use nalgebra::DMatrix;
use ndarray::{Array1, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::tensor::{CMatrix, CVector, C64};

/// Solution of a least-squares problem.
#[derive(Debug, Clone)]
pub struct LsSolution {
    pub x: CVector,
    /// Set when the design matrix was numerically rank deficient; `x` is then
    /// the minimum-norm minimizer.
    pub rank_deficient: bool,
}

/// Minimizes `‖y − A x‖₂` over complex `x`.
pub fn least_squares(a: &ArrayView2<'_, C64>, y: &ArrayView1<'_, C64>) -> Result<LsSolution> {
    let (n, t) = a.dim();
    if y.len() != n {
        return Err(Error::Shape(format!(
            "least squares: {} observations but matrix has {} rows",
            y.len(),
            n
        )));
    }
    if t == 0 {
        return Ok(LsSolution {
            x: CVector::zeros(0),
            rank_deficient: false,
        });
    }
    if t > n {
        return Ok(LsSolution {
            x: min_norm_solution(a, y),
            rank_deficient: true,
        });
    }

    let mut r = a.to_owned();
    let mut qty = y.to_owned();
    for k in 0..t {
        let norm = r.column(k).slice(ndarray::s![k..]).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let head = r[(k, k)];
        let phase = if head.norm() == 0.0 { C64::new(1.0, 0.0) } else { head / head.norm() };
        let alpha = -phase * norm;
        let mut v: Vec<C64> = (k..n).map(|i| r[(i, k)]).collect();
        v[0] -= alpha;
        let vnorm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            continue;
        }
        v.iter_mut().for_each(|z| *z /= vnorm);
        for j in k..t {
            let dot: C64 = v.iter().enumerate().map(|(i, vi)| vi.conj() * r[(k + i, j)]).sum();
            for (i, vi) in v.iter().enumerate() {
                r[(k + i, j)] -= *vi * dot * 2.0;
            }
        }
        let dot: C64 = v.iter().enumerate().map(|(i, vi)| vi.conj() * qty[k + i]).sum();
        for (i, vi) in v.iter().enumerate() {
            qty[k + i] -= *vi * dot * 2.0;
        }
    }

    let scale = (0..t).map(|k| r[(k, k)].norm()).fold(0.0, f64::max);
    let tol = scale * f64::EPSILON * (n.max(t) as f64) * 16.0;
    if scale == 0.0 || (0..t).any(|k| r[(k, k)].norm() <= tol) {
        return Ok(LsSolution {
            x: min_norm_solution(a, y),
            rank_deficient: true,
        });
    }

    let mut x = CVector::zeros(t);
    for k in (0..t).rev() {
        let mut acc = qty[k];
        for j in k + 1..t {
            acc -= r[(k, j)] * x[j];
        }
        x[k] = acc / r[(k, k)];
    }
    Ok(LsSolution { x, rank_deficient: false })
}

fn min_norm_solution(a: &ArrayView2<'_, C64>, y: &ArrayView1<'_, C64>) -> CVector {
    let m = to_nalgebra(a);
    let b = DMatrix::from_iterator(y.len(), 1, y.iter().copied());
    let svd = m.svd(true, true);
    let max_sv = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = max_sv * f64::EPSILON * (a.nrows().max(a.ncols()) as f64) * 16.0;
    match svd.solve(&b, eps) {
        Ok(sol) => Array1::from_iter(sol.iter().copied()),
        Err(_) => CVector::zeros(a.ncols()),
    }
}

pub(crate) fn to_nalgebra(a: &ArrayView2<'_, C64>) -> DMatrix<C64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

pub(crate) fn from_nalgebra(m: &DMatrix<C64>) -> CMatrix {
    CMatrix::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Solves `G Z = B` for Hermitian positive-definite `G`. Fails with
/// [`Error::RankDeficient`] when `G` is singular or too ill-conditioned for a
/// Cholesky factorization to be trusted.
pub fn solve_hermitian_pd(g: &ArrayView2<'_, C64>, b: &ArrayView2<'_, C64>) -> Result<CMatrix> {
    if g.nrows() != g.ncols() || g.nrows() != b.nrows() {
        return Err(Error::Shape(format!(
            "hermitian solve: G is {:?}, B is {:?}",
            g.dim(),
            b.dim()
        )));
    }
    let chol = to_nalgebra(g)
        .cholesky()
        .ok_or_else(|| Error::RankDeficient("Gram matrix is not positive definite".into()))?;
    let diag: Vec<f64> = chol.l_dirty().diagonal().iter().map(|z| z.re).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) || (min / max).powi(2) < 1e-13 {
        return Err(Error::RankDeficient(format!(
            "Gram matrix is numerically singular (pivot ratio {:.3e})",
            min / max
        )));
    }
    Ok(from_nalgebra(&chol.solve(&to_nalgebra(b))))
}
