//! Small dense helpers shared by the solvers.

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

pub(crate) fn ensure_finite(m: ArrayView2<'_, f64>, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

fn to_nalgebra(m: ArrayView2<'_, f64>) -> DMatrix<f64> {
    let (r, c) = m.dim();
    DMatrix::from_fn(r, c, |i, j| m[[i, j]])
}

fn from_nalgebra(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Orthogonal polar factor `U Vᵀ` of a square matrix.
///
/// Each left singular vector is flipped so that its largest-magnitude
/// component is positive (with the paired right vector flipped as well), so
/// the factorization is reproducible even when singular values collide.
pub(crate) fn polar_factor(m: ArrayView2<'_, f64>) -> Array2<f64> {
    let (r, c) = m.dim();
    debug_assert_eq!(r, c);
    let svd = to_nalgebra(m).svd(true, true);
    let mut u = svd.u.expect("requested U");
    let mut v_t = svd.v_t.expect("requested Vt");
    for k in 0..u.ncols() {
        let mut best = 0usize;
        for i in 1..u.nrows() {
            if u[(i, k)].abs() > u[(best, k)].abs() {
                best = i;
            }
        }
        if u[(best, k)] < 0.0 {
            u.column_mut(k).neg_mut();
            v_t.row_mut(k).neg_mut();
        }
    }
    from_nalgebra(&(u * v_t))
}

#[cfg(test)]
pub(crate) fn row_norms(m: ArrayView2<'_, f64>) -> Vec<f64> {
    m.axis_iter(Axis(0))
        .map(|row| row.dot(&row).sqrt())
        .collect()
}

pub(crate) fn select_rows(m: ArrayView2<'_, f64>, rows: &[usize]) -> Array2<f64> {
    m.select(Axis(0), rows)
}

/// `max |AᵀA - I|`, the orthogonality defect of a square matrix.
pub(crate) fn orthogonality_defect(m: ArrayView2<'_, f64>) -> f64 {
    let gram = m.t().dot(&m);
    gram.indexed_iter()
        .map(|((i, j), v)| (v - if i == j { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max)
}

/// Indices of the `k` largest entries of `row`, descending, ties by lowest index.
pub(crate) fn top_k(row: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    let cmp = |a: &usize, b: &usize| row[*b].total_cmp(&row[*a]).then(a.cmp(b));
    if k < idx.len() {
        idx.select_nth_unstable_by(k, cmp);
        idx.truncate(k);
    }
    idx.sort_by(cmp);
    idx
}

/// Index of the largest entry, ties by lowest index.
pub(crate) fn argmax(row: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0usize;
    let mut best_val = f64::NEG_INFINITY;
    for (j, v) in row.into_iter().enumerate() {
        if v > best_val {
            best_val = v;
            best = j;
        }
    }
    best
}

/// Row-parallel map over the rows of `m`, preserving order.
pub(crate) fn map_rows<T, F>(m: ArrayView2<'_, f64>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, ndarray::ArrayView1<'_, f64>) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..m.nrows())
            .into_par_iter()
            .map(|i| f(i, m.row(i)))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..m.nrows()).map(|i| f(i, m.row(i))).collect()
    }
}
