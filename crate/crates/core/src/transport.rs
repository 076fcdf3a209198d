//! Couplings between two point sets: entropic Sinkhorn, exact Hungarian
//! assignment, greedy row argmax and entropic Gromov-Wasserstein.
//!
//! Plans use uniform marginals, so a plan between `n` and `m` points has rows
//! summing to `1/n` and columns to `1/m`.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::linalg::{argmax, ensure_finite, map_rows};

/// A nonnegative coupling matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    matrix: Array2<f64>,
}

impl TransportPlan {
    pub fn new(matrix: Array2<f64>) -> Result<Self> {
        if matrix.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(
                "transport plan entries must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { matrix })
    }

    /// The uniform coupling `1/(n m)`.
    pub fn uniform(n: usize, m: usize) -> Self {
        Self {
            matrix: Array2::from_elem((n, m), 1.0 / (n * m) as f64),
        }
    }

    /// The `n×n` plan putting `1/n` on each `(i, targets[i])`.
    pub fn from_assignment(assignment: &Assignment) -> Self {
        let n = assignment.len();
        let mut matrix = Array2::zeros((n, assignment.num_targets()));
        for (i, &j) in assignment.targets().iter().enumerate() {
            matrix[[i, j]] = 1.0 / n as f64;
        }
        Self { matrix }
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.matrix.view()
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.matrix
    }

    pub fn row_sums(&self) -> Array1<f64> {
        self.matrix.sum_axis(Axis(1))
    }

    pub fn col_sums(&self) -> Array1<f64> {
        self.matrix.sum_axis(Axis(0))
    }

    /// Largest deviation of either marginal from uniform.
    pub fn marginal_error(&self) -> f64 {
        let (n, m) = self.matrix.dim();
        let rows = self.row_sums().iter().map(|s| (s - 1.0 / n as f64).abs()).fold(0.0, f64::max);
        let cols = self.col_sums().iter().map(|s| (s - 1.0 / m as f64).abs()).fold(0.0, f64::max);
        rows.max(cols)
    }

    /// Each row rescaled to unit mass, so `rescaled · Y` is the barycentric
    /// image of `Y` under the plan.
    pub fn row_stochastic(&self) -> Array2<f64> {
        let mut m = self.matrix.clone();
        for mut row in m.rows_mut() {
            let s = row.sum();
            if s > 0.0 {
                row /= s;
            }
        }
        m
    }

    /// Row-wise argmax of the plan.
    pub fn round(&self) -> Assignment {
        let targets = self.matrix.rows().into_iter().map(|r| argmax(r.iter().copied())).collect();
        Assignment {
            targets,
            num_targets: self.matrix.ncols(),
        }
    }
}

/// Row `i` is matched to column `targets[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    targets: Vec<usize>,
    num_targets: usize,
}

impl Assignment {
    pub fn new(targets: Vec<usize>, num_targets: usize) -> Result<Self> {
        if let Some(bad) = targets.iter().find(|&&t| t >= num_targets) {
            return Err(Error::InvalidArgument(format!(
                "target index {bad} out of range for {num_targets} columns"
            )));
        }
        Ok(Self {
            targets,
            num_targets,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            targets: (0..n).collect(),
            num_targets: n,
        }
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn num_targets(&self) -> usize {
        self.num_targets
    }

    pub fn is_permutation(&self) -> bool {
        if self.targets.len() != self.num_targets {
            return false;
        }
        let mut seen = vec![false; self.num_targets];
        self.targets.iter().all(|&t| !std::mem::replace(&mut seen[t], true))
    }

    pub fn cost(&self, cost: ArrayView2<'_, f64>) -> f64 {
        self.targets.iter().enumerate().map(|(i, &j)| cost[[i, j]]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornParams {
    pub reg: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SinkhornParams {
    fn default() -> Self {
        Self {
            reg: 0.05,
            tol: 1e-6,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SinkhornOutput {
    pub plan: TransportPlan,
    pub converged: bool,
    pub iterations: usize,
    /// Row-marginal violation at exit (columns are exact after each sweep).
    pub marginal_error: f64,
}

/// Entropically regularized optimal transport with uniform marginals.
///
/// Scaling iterations run on a kernel whose potentials are periodically
/// absorbed into log-domain dual variables, so small `reg` does not overflow.
pub fn sinkhorn(cost: ArrayView2<'_, f64>, reg: f64, tol: f64, max_iter: usize) -> Result<SinkhornOutput> {
    sinkhorn_warm(cost, SinkhornParams { reg, tol, max_iter }, None).map(|(out, _)| out)
}

/// Log-domain dual potentials `(f, g)` of a Sinkhorn solve.
pub(crate) type Potentials = (Array1<f64>, Array1<f64>);

const ABSORB_THRESHOLD: f64 = 1e30;

pub(crate) fn sinkhorn_warm(
    cost: ArrayView2<'_, f64>,
    params: SinkhornParams,
    warm: Option<Potentials>,
) -> Result<(SinkhornOutput, Potentials)> {
    let SinkhornParams { reg, tol, max_iter } = params;
    if !(reg > 0.0 && reg.is_finite()) {
        return Err(Error::InvalidArgument(format!("sinkhorn reg must be positive, got {reg}")));
    }
    if tol.is_nan() || tol <= 0.0 || max_iter == 0 {
        return Err(Error::InvalidArgument("sinkhorn needs tol > 0 and max_iter > 0".into()));
    }
    ensure_finite(cost, "sinkhorn cost")?;
    let (n, m) = cost.dim();
    if n == 0 || m == 0 {
        return Err(Error::Shape("sinkhorn on an empty cost matrix".into()));
    }
    let a = 1.0 / n as f64;
    let b = 1.0 / m as f64;

    let (mut f, mut g) = match warm {
        Some((_, g)) if g.len() == m => {
            // Keep the column potentials, re-derive rows so no kernel entry exceeds one.
            let f: Array1<f64> = cost
                .rows()
                .into_iter()
                .map(|r| r.iter().zip(g.iter()).map(|(c, g)| c - g).fold(f64::INFINITY, f64::min))
                .collect();
            (f, g)
        }
        _ => {
            // Start from c-transforms so every row and column of the kernel has a unit entry.
            let f: Array1<f64> = cost.rows().into_iter().map(|r| r.iter().copied().fold(f64::INFINITY, f64::min)).collect();
            let mut g = Array1::from_elem(m, f64::INFINITY);
            for (i, row) in cost.rows().into_iter().enumerate() {
                for (j, c) in row.iter().enumerate() {
                    g[j] = g[j].min(c - f[i]);
                }
            }
            (f, g)
        }
    };

    let kernel = |f: &Array1<f64>, g: &Array1<f64>| -> Array2<f64> {
        let mut k = Array2::zeros((n, m));
        for ((i, j), v) in k.indexed_iter_mut() {
            *v = ((f[i] + g[j] - cost[[i, j]]) / reg).exp();
        }
        k
    };

    let mut k = kernel(&f, &g);
    let mut u = Array1::<f64>::ones(n);
    let mut v = Array1::<f64>::ones(m);
    let mut err;
    let mut iterations = 0;

    loop {
        let kv = k.dot(&v);
        if iterations > 0 && (iterations % 10 == 0 || iterations == max_iter) {
            err = u.iter().zip(kv.iter()).map(|(u, s)| (u * s - a).abs()).fold(0.0, f64::max);
            if err <= tol || iterations == max_iter {
                break;
            }
        }
        iterations += 1;
        u.iter_mut().zip(kv.iter()).for_each(|(u, s)| *u = a / s.max(f64::MIN_POSITIVE));
        let mut ktu = Array1::<f64>::zeros(m);
        for (row, &ui) in k.rows().into_iter().zip(u.iter()) {
            ktu.scaled_add(ui, &row);
        }
        v.iter_mut().zip(ktu.iter()).for_each(|(v, s)| *v = b / s.max(f64::MIN_POSITIVE));

        let blown = u.iter().chain(v.iter()).any(|x| !(*x < ABSORB_THRESHOLD && *x > 1.0 / ABSORB_THRESHOLD));
        if blown {
            f.iter_mut().zip(u.iter()).for_each(|(f, u)| *f += reg * u.ln());
            g.iter_mut().zip(v.iter()).for_each(|(g, v)| *g += reg * v.ln());
            k = kernel(&f, &g);
            u.fill(1.0);
            v.fill(1.0);
        }
    }

    let mut plan = k;
    for ((i, j), p) in plan.indexed_iter_mut() {
        *p *= u[i] * v[j];
    }
    f.iter_mut().zip(u.iter()).for_each(|(f, u)| *f += reg * u.ln());
    g.iter_mut().zip(v.iter()).for_each(|(g, v)| *g += reg * v.ln());
    let converged = err <= tol;
    if !converged {
        log::debug!("sinkhorn stopped after {iterations} iterations, marginal error {err:.3e}");
    }
    Ok((
        SinkhornOutput {
            plan: TransportPlan { matrix: plan },
            converged,
            iterations,
            marginal_error: err,
        },
        (f, g),
    ))
}

/// `⟨C, P⟩ + reg Σ P log P`, the entropic transport objective of a plan.
pub fn entropic_objective(cost: ArrayView2<'_, f64>, plan: &TransportPlan, reg: f64) -> f64 {
    cost.iter()
        .zip(plan.matrix.iter())
        .map(|(c, &p)| c * p + if p > 0.0 { reg * p * p.ln() } else { 0.0 })
        .sum()
}

/// Exact minimum-cost perfect matching on a square cost matrix.
///
/// Shortest augmenting path with dual potentials, `O(n^3)`. Among equally
/// cheap columns the lowest index is taken first.
pub fn hungarian(cost: ArrayView2<'_, f64>) -> Result<Assignment> {
    let (n, m) = cost.dim();
    if n != m {
        return Err(Error::Shape(format!("hungarian needs a square matrix, got {n}x{m}")));
    }
    ensure_finite(cost, "hungarian cost")?;
    if n == 0 {
        return Ok(Assignment::identity(0));
    }

    // 1-based with column 0 as the virtual root.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut targets = vec![0usize; n];
    for j in 1..=n {
        targets[owner[j] - 1] = j - 1;
    }
    Ok(Assignment {
        targets,
        num_targets: n,
    })
}

/// Row-wise argmax of a score matrix. Not necessarily injective.
pub fn greedy_assign(score: ArrayView2<'_, f64>) -> Result<Assignment> {
    ensure_finite(score, "greedy score")?;
    let targets = map_rows(score, |_, row| argmax(row.iter().copied()));
    Ok(Assignment {
        targets,
        num_targets: score.ncols(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GwParams {
    /// Entropic weight, measured against plans with unit row mass.
    pub eps: f64,
    pub outer_iter: usize,
    /// Stop when the unit-row-mass plan moves less than this in max-norm.
    pub tol: f64,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
}

impl Default for GwParams {
    fn default() -> Self {
        Self {
            eps: 0.5,
            outer_iter: 50,
            tol: 1e-5,
            inner_tol: 1e-6,
            inner_max_iter: 5000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GwOutput {
    pub plan: TransportPlan,
    pub iterations: usize,
    pub converged: bool,
    /// Whether the last linearized subproblem met the inner tolerance.
    pub inner_converged: bool,
}

/// Pairwise Euclidean distances between the rows of `x`.
pub fn distance_matrix(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let gram = x.dot(&x.t());
    let n = x.nrows();
    Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            0.0
        } else {
            (gram[[i, i]] + gram[[j, j]] - 2.0 * gram[[i, j]]).max(0.0).sqrt()
        }
    })
}

/// Entropic Gromov-Wasserstein coupling between two point clouds.
///
/// Minimizes `Σ (|x_i - x_i'| - |y_j - y_j'|)² P(i,j) P(i',j') + eps Σ P log P`
/// over plans whose rows carry unit mass, by repeatedly linearizing the
/// quadratic term at the current plan and solving the linear problem with
/// Sinkhorn. The returned plan is rescaled to the uniform `1/n`, `1/m`
/// marginals used by the other solvers.
pub fn gromov_wasserstein(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, params: GwParams) -> Result<GwOutput> {
    let (n, m) = (x.nrows(), y.nrows());
    if n == 0 || m == 0 {
        return Err(Error::Shape("gromov_wasserstein on an empty point set".into()));
    }
    if params.eps.is_nan() || params.eps <= 0.0 {
        return Err(Error::InvalidArgument(format!("gw eps must be positive, got {}", params.eps)));
    }
    ensure_finite(x, "gw source points")?;
    ensure_finite(y, "gw target points")?;
    let dx = distance_matrix(x);
    let dy = distance_matrix(y);
    gromov_wasserstein_from_distances(dx.view(), dy.view(), params)
}

pub(crate) fn gromov_wasserstein_from_distances(
    dx: ArrayView2<'_, f64>,
    dy: ArrayView2<'_, f64>,
    params: GwParams,
) -> Result<GwOutput> {
    let (n, m) = (dx.nrows(), dy.nrows());
    let mut plan = TransportPlan::uniform(n, m);
    if params.outer_iter == 0 {
        return Ok(GwOutput {
            plan,
            iterations: 0,
            converged: false,
            inner_converged: true,
        });
    }

    // Square loss splits as a² + b² - 2ab, so the marginal terms are constant.
    let p = 1.0 / n as f64;
    let q = 1.0 / m as f64;
    let row_term: Array1<f64> = dx.mapv(|d| d * d).sum_axis(Axis(1)) * p;
    let col_term: Array1<f64> = dy.mapv(|d| d * d).sum_axis(Axis(1)) * q;
    // Unit-row-mass plans are n times the probability plans.
    let mass = n as f64;
    let inner = SinkhornParams {
        reg: params.eps,
        tol: params.inner_tol,
        max_iter: params.inner_max_iter,
    };

    let mut warm = None;
    let mut converged = false;
    let mut inner_converged = true;
    let mut iterations = 0;
    while iterations < params.outer_iter {
        iterations += 1;
        let cross = dx.dot(&plan.matrix).dot(&dy.t());
        let mut grad = cross;
        for ((i, j), c) in grad.indexed_iter_mut() {
            *c = 2.0 * mass * (row_term[i] + col_term[j] - 2.0 * *c);
        }
        let (out, potentials) = sinkhorn_warm(grad.view(), inner, warm.take())?;
        warm = Some(potentials);
        inner_converged = out.converged;
        log::trace!("gw outer {iterations}: {} sinkhorn iterations", out.iterations);
        let change = out
            .plan
            .matrix
            .iter()
            .zip(plan.matrix.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            * mass;
        plan = out.plan;
        if change < params.tol {
            converged = true;
            break;
        }
    }
    Ok(GwOutput {
        plan,
        iterations,
        converged,
        inner_converged,
    })
}

/// Gromov-Wasserstein quadratic cost `Σ (dx - dy)² P P` of a plan.
pub fn gw_energy(dx: ArrayView2<'_, f64>, dy: ArrayView2<'_, f64>, plan: &TransportPlan) -> f64 {
    let p = plan.matrix();
    let mut total = 0.0;
    for ((i, j), &pij) in p.indexed_iter() {
        if pij == 0.0 {
            continue;
        }
        for ((k, l), &pkl) in p.indexed_iter() {
            let diff = dx[[i, k]] - dy[[j, l]];
            total += diff * diff * pij * pkl;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, m), |_| rng.random::<f64>())
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    fn brute_force_min(cost: &Array2<f64>) -> f64 {
        permutations(cost.nrows())
            .iter()
            .map(|p| p.iter().enumerate().map(|(i, &j)| cost[[i, j]]).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn sinkhorn_constant_cost_is_uniform() {
        let cost = Array2::from_elem((3, 4), 2.5);
        let out = sinkhorn(cost.view(), 0.3, 1e-9, 100).unwrap();
        assert!(out.converged);
        for p in out.plan.matrix().iter() {
            assert!((p - 1.0 / 12.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sinkhorn_two_by_two() {
        // Fixed point of the 2x2 problem: diagonal entries 1/(2(1+e^{-1/reg})).
        let cost = array![[0.0, 1.0], [1.0, 0.0]];
        let out = sinkhorn(cost.view(), 0.05, 1e-10, 1000).unwrap();
        let expected = 0.5 / (1.0 + (-1.0f64 / 0.05).exp());
        let p = out.plan.matrix();
        assert!(p[[0, 0]] >= 0.49 && p[[1, 1]] >= 0.49);
        assert!(p[[0, 1]] <= 0.01 && p[[1, 0]] <= 0.01);
        assert!((p[[0, 0]] - expected).abs() < 1e-9);
    }

    #[test]
    fn sinkhorn_small_reg_does_not_overflow() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cost = random_matrix(&mut rng, 30, 20);
        let out = sinkhorn(cost.view(), 0.01, 1e-8, 20_000).unwrap();
        assert!(out.plan.matrix().iter().all(|v| v.is_finite()));
        assert!(out.converged);
        assert!(out.plan.marginal_error() < 1e-8);
    }

    #[test]
    fn sinkhorn_reports_non_convergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cost = random_matrix(&mut rng, 20, 20);
        let out = sinkhorn(cost.view(), 0.001, 1e-14, 3).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 3);
    }

    #[test]
    fn sinkhorn_rejects_non_finite() {
        let cost = array![[0.0, f64::NAN], [1.0, 0.0]];
        assert!(matches!(sinkhorn(cost.view(), 0.1, 1e-6, 10), Err(Error::NonFinite(_))));
    }

    #[test]
    fn hungarian_examples() {
        let cost = array![[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]];
        let a = hungarian(cost.view()).unwrap();
        assert_eq!(a.targets(), &[1, 0, 2]);
        assert_eq!(a.cost(cost.view()), 5.0);
        assert_eq!(brute_force_min(&cost), 5.0);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut c = random_matrix(&mut rng, 6, 6) + 1.0;
        for i in 0..6 {
            c[[i, i]] = 0.0;
        }
        assert_eq!(hungarian(c.view()).unwrap(), Assignment::identity(6));

        assert!(matches!(hungarian(Array2::zeros((2, 3)).view()), Err(Error::Shape(_))));
    }

    #[test]
    fn hungarian_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..100 {
            let n = 1 + trial % 7;
            let cost = random_matrix(&mut rng, n, n);
            let a = hungarian(cost.view()).unwrap();
            assert!(a.is_permutation());
            assert!((a.cost(cost.view()) - brute_force_min(&cost)).abs() < 1e-12);
        }
    }

    #[test]
    fn greedy_examples() {
        let a = greedy_assign(array![[0.9, 0.1], [0.2, 0.8]].view()).unwrap();
        assert_eq!(a.targets(), &[0, 1]);
        let a = greedy_assign(array![[0.9, 0.1], [0.8, 0.2]].view()).unwrap();
        assert_eq!(a.targets(), &[0, 0]);
        assert!(!a.is_permutation());
    }

    #[test]
    fn greedy_attains_row_maxima() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_matrix(&mut rng, 50, 50);
        let a = greedy_assign(s.view()).unwrap();
        for (i, &j) in a.targets().iter().enumerate() {
            let max = s.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(s[[i, j]], max);
        }
    }

    #[test]
    fn gw_zero_iterations_is_uniform() {
        let x = array![[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]];
        let params = GwParams {
            outer_iter: 0,
            ..GwParams::default()
        };
        let out = gromov_wasserstein(x.view(), x.view(), params).unwrap();
        assert_eq!(out.plan, TransportPlan::uniform(3, 3));
    }

    #[test]
    fn gw_recovers_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 10;
        let x = random_matrix(&mut rng, n, 3);
        let perm = [3, 7, 0, 9, 1, 4, 8, 2, 6, 5];
        let y = Array2::from_shape_fn((n, 3), |(i, j)| x[[perm[i], j]]);
        let params = GwParams {
            eps: 0.05,
            ..GwParams::default()
        };
        let out = gromov_wasserstein(x.view(), y.view(), params).unwrap();
        // y row i holds x row perm[i].
        let on_truth: f64 = (0..n).map(|i| out.plan.matrix()[[perm[i], i]]).sum();
        assert!(on_truth >= 0.8, "mass on true permutation {on_truth}");
        assert!(out.plan.marginal_error() < 1e-5, "{} {} {}", out.plan.marginal_error(), out.iterations, on_truth);
    }
}
