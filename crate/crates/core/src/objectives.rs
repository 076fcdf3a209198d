//! Mapping estimation kernels: orthogonal Procrustes, the ℓ2 and RCSLS
//! alignment losses with their gradients, and retraction onto the
//! orthogonal group.
//!
//! Row-vector convention throughout: a word vector `x` is mapped to `x Q`.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg::{map_rows, orthogonality_defect, polar_factor, select_rows, top_k};
use crate::transport::{Assignment, TransportPlan};

/// Tolerance on `QᵀQ = I` accepted by [`OrthogonalMap::new`].
pub const ORTHOGONALITY_TOL: f64 = 1e-6;

/// Default neighborhood size of the RCSLS and CSLS criteria.
pub const DEFAULT_K: usize = 10;

/// A `d×d` orthogonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalMap {
    matrix: Array2<f64>,
}

impl OrthogonalMap {
    pub fn new(matrix: Array2<f64>) -> Result<Self> {
        let (r, c) = matrix.dim();
        if r != c {
            return Err(Error::Shape(format!("orthogonal map must be square, got {r}x{c}")));
        }
        let defect = orthogonality_defect(matrix.view());
        if defect.is_nan() || defect > ORTHOGONALITY_TOL {
            return Err(Error::InvalidArgument(format!(
                "matrix is not orthogonal (|QᵀQ - I| = {defect:.3e})"
            )));
        }
        Ok(Self { matrix })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            matrix: Array2::eye(d),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.matrix.view()
    }

    pub fn transpose(&self) -> OrthogonalMap {
        Self {
            matrix: self.matrix.t().to_owned(),
        }
    }

    /// `self · otherᵀ`: into this map's space, then back out through `other`.
    pub fn then_inverse(&self, other: &OrthogonalMap) -> OrthogonalMap {
        Self {
            matrix: self.matrix.dot(&other.matrix.t()),
        }
    }

    /// Maps every row of `x`.
    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        x.dot(&self.matrix)
    }

    pub fn defect(&self) -> f64 {
        orthogonality_defect(self.matrix.view())
    }
}

/// How the rows of a target matrix are paired with the source rows.
#[derive(Debug, Clone, Copy)]
pub enum Correspondence<'a> {
    /// Row `i` of the source pairs with row `targets[i]` of the target.
    Assignment(&'a Assignment),
    /// Row `i` pairs with the plan-weighted average of target rows.
    Plan(&'a TransportPlan),
}

impl Correspondence<'_> {
    /// `P Y`: the target rows aligned with the source rows.
    pub fn gather(&self, y: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        match self {
            Correspondence::Assignment(a) => {
                if a.num_targets() != y.nrows() {
                    return Err(Error::Shape(format!(
                        "assignment over {} targets applied to {} rows",
                        a.num_targets(),
                        y.nrows()
                    )));
                }
                Ok(select_rows(y, a.targets()))
            }
            Correspondence::Plan(p) => {
                if p.matrix().ncols() != y.nrows() {
                    return Err(Error::Shape(format!(
                        "plan with {} columns applied to {} rows",
                        p.matrix().ncols(),
                        y.nrows()
                    )));
                }
                Ok(p.row_stochastic().dot(&y))
            }
        }
    }

    fn rows(&self) -> usize {
        match self {
            Correspondence::Assignment(a) => a.len(),
            Correspondence::Plan(p) => p.matrix().nrows(),
        }
    }
}

fn check_same_width(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, what: &str) -> Result<()> {
    if a.ncols() != b.ncols() {
        return Err(Error::Shape(format!(
            "{what}: dimension {} vs {}",
            a.ncols(),
            b.ncols()
        )));
    }
    Ok(())
}

fn check_map(x: ArrayView2<'_, f64>, q: &OrthogonalMap) -> Result<()> {
    if x.ncols() != q.dim() {
        return Err(Error::Shape(format!(
            "vectors of dimension {} with a {}x{} map",
            x.ncols(),
            q.dim(),
            q.dim()
        )));
    }
    Ok(())
}

/// Closed-form minimizer of `|X Q - Y|²` over orthogonal `Q`: the polar factor of `XᵀY`.
pub fn procrustes(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<OrthogonalMap> {
    if x.dim() != y.dim() {
        return Err(Error::Shape(format!(
            "procrustes on {:?} and {:?}",
            x.dim(),
            y.dim()
        )));
    }
    Ok(OrthogonalMap {
        matrix: polar_factor(x.t().dot(&y).view()),
    })
}

/// Nearest orthogonal matrix in Frobenius norm.
pub fn retract_orthogonal(m: ArrayView2<'_, f64>) -> Result<OrthogonalMap> {
    let (r, c) = m.dim();
    if r != c {
        return Err(Error::Shape(format!("retraction of a {r}x{c} matrix")));
    }
    crate::linalg::ensure_finite(m, "retraction input")?;
    Ok(OrthogonalMap {
        matrix: polar_factor(m),
    })
}

/// `|X Q - P Y|²_F`.
pub fn l2_loss(
    x: ArrayView2<'_, f64>,
    q: &OrthogonalMap,
    p: Correspondence<'_>,
    y: ArrayView2<'_, f64>,
) -> Result<f64> {
    check_map(x, q)?;
    check_same_width(x, y, "l2_loss")?;
    if p.rows() != x.nrows() {
        return Err(Error::Shape(format!(
            "correspondence has {} rows for {} source vectors",
            p.rows(),
            x.nrows()
        )));
    }
    let py = p.gather(y)?;
    let diff = q.apply(x) - py;
    Ok(diff.iter().map(|v| v * v).sum())
}

/// `2n - 2 tr(Qᵀ Xᵀ P Y)`, equal to [`l2_loss`] when all rows have unit norm
/// and `P` is a permutation.
pub fn l2_linearized(
    x: ArrayView2<'_, f64>,
    q: &OrthogonalMap,
    p: Correspondence<'_>,
    y: ArrayView2<'_, f64>,
) -> Result<f64> {
    check_map(x, q)?;
    check_same_width(x, y, "l2_linearized")?;
    let py = p.gather(y)?;
    let trace: f64 = (q.apply(x) * py).sum();
    Ok(2.0 * x.nrows() as f64 - 2.0 * trace)
}

/// For each query, the `k` targets with the largest dot product.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborSet {
    k: usize,
    indices: Vec<Vec<usize>>,
}

impl NeighborSet {
    pub fn k(&self) -> usize {
        self.k
    }

    /// Neighbors of query `i`, most similar first.
    pub fn of(&self, i: usize) -> &[usize] {
        &self.indices[i]
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Top-`k` targets of each query by dot product, descending, ties by lowest index.
pub fn knn_dot(queries: ArrayView2<'_, f64>, targets: ArrayView2<'_, f64>, k: usize) -> Result<NeighborSet> {
    check_same_width(queries, targets, "knn_dot")?;
    if k == 0 || k > targets.nrows() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} with {} targets",
            targets.nrows()
        )));
    }
    let scores = queries.dot(&targets.t());
    let indices = map_rows(scores.view(), |_, row| {
        let row = row.to_vec();
        top_k(&row, k)
    });
    Ok(NeighborSet { k, indices })
}

/// Loss of one row-aligned batch pair with gradients for both maps.
#[derive(Debug, Clone)]
pub(crate) struct PairLoss {
    pub loss: f64,
    pub grad_source: Array2<f64>,
    pub grad_target: Array2<f64>,
}

pub(crate) struct RcslsInputs<'a> {
    pub source: ArrayView2<'a, f64>,
    pub source_map: &'a OrthogonalMap,
    pub aligned: ArrayView2<'a, f64>,
    pub target_map: &'a OrthogonalMap,
    pub source_pool: ArrayView2<'a, f64>,
    pub target_pool: ArrayView2<'a, f64>,
    pub k: usize,
}

/// Value and gradients of the RCSLS loss between two mapped sets.
///
/// `source` rows are mapped by `source_map`, `aligned` rows (already gathered
/// by the correspondence) by `target_map`. Neighborhoods are searched in the
/// mapped pools, which may be subsamples.
pub(crate) fn rcsls_pair(inputs: RcslsInputs<'_>) -> Result<PairLoss> {
    let RcslsInputs {
        source,
        source_map,
        aligned,
        target_map,
        source_pool,
        target_pool,
        k,
    } = inputs;
    let n = source.nrows();
    if aligned.nrows() != n {
        return Err(Error::Shape(format!("{n} sources with {} aligned targets", aligned.nrows())));
    }
    if n == 0 {
        return Err(Error::Shape("rcsls on an empty batch".into()));
    }
    if k == 0 || k > source_pool.nrows() || k > target_pool.nrows() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} out of range for pools of {} and {}",
            source_pool.nrows(),
            target_pool.nrows()
        )));
    }
    let a = source_map.apply(source);
    let b = target_map.apply(aligned);
    let ap = source_map.apply(source_pool);
    let bp = target_map.apply(target_pool);

    let nn_of_a = knn_dot(a.view(), bp.view(), k)?;
    let nn_of_b = knn_dot(b.view(), ap.view(), k)?;
    let inv_k = 1.0 / k as f64;
    let d = a.ncols();

    // Row i of `toward_a`: sum of pool targets near a_i; of `toward_b`: pool sources near b_i.
    let mut toward_a = Array2::<f64>::zeros((n, d));
    let mut toward_b = Array2::<f64>::zeros((n, d));
    // Scatter weights onto the pools for the pool-side gradients.
    let mut onto_target_pool = Array2::<f64>::zeros((target_pool.nrows(), d));
    let mut onto_source_pool = Array2::<f64>::zeros((source_pool.nrows(), d));
    let mut loss = -2.0 * (&a * &b).sum();
    for i in 0..n {
        for &j in nn_of_a.of(i) {
            let z = bp.row(j);
            loss += inv_k * z.dot(&a.row(i));
            toward_a.row_mut(i).scaled_add(inv_k, &z);
            onto_target_pool.row_mut(j).scaled_add(inv_k, &a.row(i));
        }
        for &j in nn_of_b.of(i) {
            let x = ap.row(j);
            loss += inv_k * x.dot(&b.row(i));
            toward_b.row_mut(i).scaled_add(inv_k, &x);
            onto_source_pool.row_mut(j).scaled_add(inv_k, &b.row(i));
        }
    }

    let scale = 1.0 / n as f64;
    let grad_source = (source.t().dot(&(toward_a - &b * 2.0)) + source_pool.t().dot(&onto_source_pool)) * scale;
    let grad_target = (aligned.t().dot(&(toward_b - &a * 2.0)) + target_pool.t().dot(&onto_target_pool)) * scale;
    Ok(PairLoss {
        loss: loss * scale,
        grad_source,
        grad_target,
    })
}

fn rcsls_full(
    x: ArrayView2<'_, f64>,
    q: &OrthogonalMap,
    p: Correspondence<'_>,
    y: ArrayView2<'_, f64>,
    k: usize,
) -> Result<PairLoss> {
    check_map(x, q)?;
    check_same_width(x, y, "rcsls")?;
    if p.rows() != x.nrows() {
        return Err(Error::Shape(format!(
            "correspondence has {} rows for {} source vectors",
            p.rows(),
            x.nrows()
        )));
    }
    let py = p.gather(y)?;
    let identity = OrthogonalMap::identity(q.dim());
    rcsls_pair(RcslsInputs {
        source: x,
        source_map: q,
        aligned: py.view(),
        target_map: &identity,
        source_pool: x,
        target_pool: py.view(),
        k,
    })
}

/// Unsupervised RCSLS loss with targets reordered by `P`, averaged over source rows.
///
/// Neighborhoods of the mapped sources are taken among the rows of `P Y`,
/// neighborhoods of `P Y` among the mapped sources, both at the current `Q`.
pub fn rcsls_loss(
    x: ArrayView2<'_, f64>,
    q: &OrthogonalMap,
    p: Correspondence<'_>,
    y: ArrayView2<'_, f64>,
    k: usize,
) -> Result<f64> {
    rcsls_full(x, q, p, y, k).map(|l| l.loss)
}

/// Gradient of [`rcsls_loss`] in `Q` with neighborhoods frozen at the current `Q`.
pub fn rcsls_subgradient(
    x: ArrayView2<'_, f64>,
    q: &OrthogonalMap,
    p: Correspondence<'_>,
    y: ArrayView2<'_, f64>,
    k: usize,
) -> Result<Array2<f64>> {
    rcsls_full(x, q, p, y, k).map(|l| l.grad_source)
}

/// Gradients of the linearized ℓ2 loss `-2 tr((S Qs)ᵀ (T Qt))` between
/// row-aligned raw sets `source` and `aligned`.
pub(crate) fn l2_pair(
    source: ArrayView2<'_, f64>,
    source_map: &OrthogonalMap,
    aligned: ArrayView2<'_, f64>,
    target_map: &OrthogonalMap,
) -> PairLoss {
    let a = source_map.apply(source);
    let b = target_map.apply(aligned);
    let diff = &a - &b;
    let loss = diff.iter().map(|v| v * v).sum::<f64>();
    PairLoss {
        loss,
        grad_source: source.t().dot(&b) * -2.0,
        grad_target: aligned.t().dot(&a) * -2.0,
    }
}

/// One projected gradient step `retract(Q - lr · grad)`.
pub(crate) fn descend(q: &OrthogonalMap, grad: ArrayView2<'_, f64>, lr: f64) -> Result<OrthogonalMap> {
    let stepped = &q.matrix - &(&grad * lr);
    retract_orthogonal(stepped.view())
}
