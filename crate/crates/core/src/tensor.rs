//! Dense complex tensor primitives.
//!
//! Every third-order tensor in this crate is an [`ndarray::Array3`] in standard
//! (row-major) layout. Entry `(a, b, c)` of an `(n1, n2, n3)` tensor sits at
//! flat index `a * n2 * n3 + b * n3 + c`, which is exactly the ordering of
//! `vec(e1 ⊗ e2 ⊗ e3)`. All tensor/vector conversions go through
//! [`flatten`] and [`from_flat`] so that this convention lives in one place.

use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, ArrayView3, Axis, Zip};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CVector = Array1<C64>;
pub type CMatrix = Array2<C64>;
pub type Tensor3 = Array3<C64>;

/// One of the three tensor modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    First,
    Second,
    Third,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::First, Mode::Second, Mode::Third];

    pub fn axis(self) -> Axis {
        match self {
            Mode::First => Axis(0),
            Mode::Second => Axis(1),
            Mode::Third => Axis(2),
        }
    }

    /// Builds a mode from its 1-based number.
    pub fn from_number(n: usize) -> Result<Mode> {
        match n {
            1 => Ok(Mode::First),
            2 => Ok(Mode::Second),
            3 => Ok(Mode::Third),
            _ => Err(Error::Shape(format!("tensor mode must be 1, 2 or 3, got {n}"))),
        }
    }
}

/// Conjugate transpose of a complex matrix.
pub fn adjoint(m: &ArrayView2<'_, C64>) -> CMatrix {
    m.t().mapv(|z| z.conj())
}

/// Mode-n product `M ×_n T`: contracts the `mode` axis of `t` with the
/// columns of `m`. The output has `m.nrows()` entries along that mode.
pub fn mode_n_product(t: &ArrayView3<'_, C64>, m: &ArrayView2<'_, C64>, mode: Mode) -> Result<Tensor3> {
    let (n1, n2, n3) = t.dim();
    let size = t.len_of(mode.axis());
    if m.ncols() != size {
        return Err(Error::Shape(format!(
            "mode-{:?} product: matrix has {} columns but tensor mode size is {}",
            mode,
            m.ncols(),
            size
        )));
    }
    let rows = m.nrows();
    let t = t.as_standard_layout();
    Ok(match mode {
        Mode::First => {
            let flat = t.view().into_shape_with_order((n1, n2 * n3)).expect("standard layout");
            m.dot(&flat)
                .into_shape_with_order((rows, n2, n3))
                .expect("product shape")
        }
        Mode::Second => {
            let mut out = Tensor3::zeros((n1, rows, n3));
            for (slice, mut dst) in t.outer_iter().zip(out.outer_iter_mut()) {
                dst.assign(&m.dot(&slice));
            }
            out
        }
        Mode::Third => {
            let flat = t.view().into_shape_with_order((n1 * n2, n3)).expect("standard layout");
            flat.dot(&m.t())
                .into_shape_with_order((n1, n2, rows))
                .expect("product shape")
        }
    })
}

/// Mode-n matricization. Rows are indexed by the chosen mode; columns run over
/// the two remaining modes in increasing mode order, last mode fastest.
pub fn unfold(t: &ArrayView3<'_, C64>, mode: Mode) -> CMatrix {
    let (n1, n2, n3) = t.dim();
    match mode {
        Mode::First => t
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((n1, n2 * n3))
            .expect("standard layout"),
        Mode::Second => t
            .view()
            .permuted_axes([1, 0, 2])
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((n2, n1 * n3))
            .expect("standard layout"),
        Mode::Third => t
            .view()
            .permuted_axes([2, 0, 1])
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((n3, n1 * n2))
            .expect("standard layout"),
    }
}

/// Inverse of [`unfold`] for a target tensor shape.
pub fn fold(m: &ArrayView2<'_, C64>, mode: Mode, shape: (usize, usize, usize)) -> Result<Tensor3> {
    let (n1, n2, n3) = shape;
    let expected = match mode {
        Mode::First => (n1, n2 * n3),
        Mode::Second => (n2, n1 * n3),
        Mode::Third => (n3, n1 * n2),
    };
    if m.dim() != expected {
        return Err(Error::Shape(format!(
            "fold: matrix is {:?}, expected {:?} for shape {:?}",
            m.dim(),
            expected,
            shape
        )));
    }
    let owned = m.as_standard_layout().into_owned();
    Ok(match mode {
        Mode::First => owned.into_shape_with_order((n1, n2, n3)).expect("checked"),
        Mode::Second => owned
            .into_shape_with_order((n2, n1, n3))
            .expect("checked")
            .permuted_axes([1, 0, 2])
            .as_standard_layout()
            .into_owned(),
        Mode::Third => owned
            .into_shape_with_order((n3, n1, n2))
            .expect("checked")
            .permuted_axes([1, 2, 0])
            .as_standard_layout()
            .into_owned(),
    })
}

/// Squared Frobenius norm of slice `index` taken along `mode`.
pub fn slice_norm_sq(t: &ArrayView3<'_, C64>, mode: Mode, index: usize) -> Result<f64> {
    let size = t.len_of(mode.axis());
    if index >= size {
        return Err(Error::Shape(format!(
            "slice index {index} out of range for mode {mode:?} of size {size}"
        )));
    }
    Ok(t.index_axis(mode.axis(), index).iter().map(|z| z.norm_sqr()).sum())
}

/// Squared Frobenius norms of every slice along `mode`.
pub fn slice_norms_sq(t: &ArrayView3<'_, C64>, mode: Mode) -> Vec<f64> {
    t.axis_iter(mode.axis())
        .map(|slice| slice.iter().map(|z| z.norm_sqr()).sum())
        .collect()
}

pub fn frobenius_norm_sq<'a>(entries: impl IntoIterator<Item = &'a C64>) -> f64 {
    entries.into_iter().map(|z| z.norm_sqr()).sum()
}

/// Triple Kronecker product `v1 ⊗ v2 ⊗ v3`, ordered as [`flatten`] orders
/// the corresponding outer product.
pub fn kron3(v1: &ArrayView1<'_, C64>, v2: &ArrayView1<'_, C64>, v3: &ArrayView1<'_, C64>) -> CVector {
    let mut out = Vec::with_capacity(v1.len() * v2.len() * v3.len());
    for &a in v1 {
        for &b in v2 {
            let ab = a * b;
            out.extend(v3.iter().map(|&c| ab * c));
        }
    }
    Array1::from(out)
}

/// Rank-one tensor `v1 ∘ v2 ∘ v3`.
pub fn outer3(v1: &ArrayView1<'_, C64>, v2: &ArrayView1<'_, C64>, v3: &ArrayView1<'_, C64>) -> Tensor3 {
    let mut out = Tensor3::zeros((v1.len(), v2.len(), v3.len()));
    Zip::indexed(&mut out).for_each(|(a, b, c), z| *z = v1[a] * v2[b] * v3[c]);
    out
}

/// Row-major vectorization of a tensor.
pub fn flatten(t: &ArrayView3<'_, C64>) -> CVector {
    Array1::from_iter(t.iter().copied())
}

/// Reshapes a flat vector into a tensor of `shape` (inverse of [`flatten`]).
pub fn from_flat(v: CVector, shape: (usize, usize, usize)) -> Result<Tensor3> {
    let len = v.len();
    v.into_shape_with_order(shape)
        .map_err(|_| Error::Shape(format!("cannot view {len} entries as {shape:?}")))
}

/// Contracts modes 2 and 3 of `t` against `conj(v2)` and `conj(v3)`, giving a
/// vector along mode 1. Used to evaluate `D^H`-style correlations with one
/// index free.
pub fn contract_23(t: &ArrayView3<'_, C64>, v2: &ArrayView1<'_, C64>, v3: &ArrayView1<'_, C64>) -> CVector {
    t.outer_iter()
        .map(|slice| {
            slice
                .outer_iter()
                .zip(v2.iter())
                .map(|(row, &b)| b.conj() * row.iter().zip(v3).map(|(&x, &c)| c.conj() * x).sum::<C64>())
                .sum()
        })
        .collect()
}

/// Contracts modes 1 and 3 of `t` against `conj(v1)` and `conj(v3)`.
pub fn contract_13(t: &ArrayView3<'_, C64>, v1: &ArrayView1<'_, C64>, v3: &ArrayView1<'_, C64>) -> CVector {
    let (_, n2, _) = t.dim();
    let mut out = CVector::zeros(n2);
    for (slice, &a) in t.outer_iter().zip(v1) {
        let ac = a.conj();
        for (j, row) in slice.outer_iter().enumerate() {
            out[j] += ac * row.iter().zip(v3).map(|(&x, &c)| c.conj() * x).sum::<C64>();
        }
    }
    out
}

/// Contracts modes 1 and 2 of `t` against `conj(v1)` and `conj(v2)`.
pub fn contract_12(t: &ArrayView3<'_, C64>, v1: &ArrayView1<'_, C64>, v2: &ArrayView1<'_, C64>) -> CVector {
    let (_, _, n3) = t.dim();
    let mut out = CVector::zeros(n3);
    for (slice, &a) in t.outer_iter().zip(v1) {
        for (row, &b) in slice.outer_iter().zip(v2) {
            let w = (a * b).conj();
            out.zip_mut_with(&row, |o, &x| *o += w * x);
        }
    }
    out
}

/// Sub-view helper: the `(i, :, :)` slice as an owned matrix.
pub fn first_mode_slice(t: &ArrayView3<'_, C64>, i: usize) -> CMatrix {
    t.slice(s![i, .., ..]).to_owned()
}
