//! Unsupervised alignment of one language onto a pivot.
//!
//! The pipeline runs three stages: a Gromov-Wasserstein coupling of the most
//! frequent words seeds the map, stochastic ℓ2 Wasserstein-Procrustes refines
//! it on minibatches, and a final RCSLS stage with greedy assignments sharpens
//! it for retrieval.

use std::fmt;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embeddings::EmbeddingSet;
use crate::error::{Error, Result};
use crate::linalg::select_rows;
use crate::objectives::{
    descend, l2_pair, procrustes, rcsls_pair, OrthogonalMap, PairLoss, RcslsInputs, DEFAULT_K,
};
use crate::transport::{greedy_assign, gromov_wasserstein, sinkhorn, Assignment, GwParams};

/// Hyperparameters shared by the bilingual and multilingual aligners.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "cli", derive(serde::Serialize, serde::Deserialize))]
pub struct AlignerConfig {
    /// Number of leading words coupled by Gromov-Wasserstein at initialization.
    pub gw_size: usize,
    pub gw_eps: f64,
    pub gw_outer_iter: usize,
    pub gw_tol: f64,
    pub gw_inner_tol: f64,
    pub gw_inner_max_iter: usize,
    /// Batch size during the first epoch.
    pub batch_first: usize,
    /// Batch size for every later epoch.
    pub batch_rest: usize,
    pub lr_l2: f64,
    pub lr_rcsls_bilingual: f64,
    pub lr_rcsls_multi: f64,
    pub l2_epochs: usize,
    pub rcsls_epochs: usize,
    /// Number of leading ℓ2 steps whose batch assignment comes from Sinkhorn.
    pub sinkhorn_rounds: usize,
    pub sinkhorn_reg: f64,
    pub sinkhorn_tol: f64,
    pub sinkhorn_max_iter: usize,
    /// Size of the random pools searched for RCSLS neighborhoods.
    pub knn_subsample: usize,
    /// Multilingual iterations per epoch; derived from the expected vocabulary
    /// coverage when unset.
    pub iterations_per_epoch: Option<usize>,
    pub vocab_cap: usize,
    pub k: usize,
    pub seed: u64,
}

impl Default for AlignerConfig {
    fn default() -> Self {
        Self {
            gw_size: 2000,
            gw_eps: 0.5,
            gw_outer_iter: 50,
            gw_tol: 1e-5,
            gw_inner_tol: 1e-6,
            gw_inner_max_iter: 5000,
            batch_first: 500,
            batch_rest: 1000,
            lr_l2: 0.1,
            lr_rcsls_bilingual: 50.0,
            lr_rcsls_multi: 25.0,
            l2_epochs: 5,
            rcsls_epochs: 5,
            sinkhorn_rounds: 2,
            sinkhorn_reg: 0.05,
            sinkhorn_tol: 1e-6,
            sinkhorn_max_iter: 1000,
            knn_subsample: 4000,
            iterations_per_epoch: None,
            vocab_cap: crate::embeddings::DEFAULT_MAX_VOCAB,
            k: DEFAULT_K,
            seed: 0,
        }
    }
}

impl AlignerConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("gw_size", self.gw_size),
            ("gw_outer_iter", self.gw_outer_iter),
            ("gw_inner_max_iter", self.gw_inner_max_iter),
            ("batch_first", self.batch_first),
            ("batch_rest", self.batch_rest),
            ("sinkhorn_max_iter", self.sinkhorn_max_iter),
            ("knn_subsample", self.knn_subsample),
            ("vocab_cap", self.vocab_cap),
            ("k", self.k),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidArgument(format!("{name} must be positive")));
        }
        let reals = [
            ("gw_eps", self.gw_eps),
            ("gw_tol", self.gw_tol),
            ("gw_inner_tol", self.gw_inner_tol),
            ("lr_l2", self.lr_l2),
            ("lr_rcsls_bilingual", self.lr_rcsls_bilingual),
            ("lr_rcsls_multi", self.lr_rcsls_multi),
            ("sinkhorn_reg", self.sinkhorn_reg),
            ("sinkhorn_tol", self.sinkhorn_tol),
        ];
        if let Some((name, _)) = reals.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument(format!("{name} must be positive")));
        }
        if self.iterations_per_epoch == Some(0) {
            return Err(Error::InvalidArgument("iterations_per_epoch must be positive".into()));
        }
        if self.gw_size > self.vocab_cap {
            return Err(Error::InvalidArgument(format!(
                "gw_size {} exceeds vocab_cap {}",
                self.gw_size, self.vocab_cap
            )));
        }
        Ok(())
    }

    pub(crate) fn gw_params(&self) -> GwParams {
        GwParams {
            eps: self.gw_eps,
            outer_iter: self.gw_outer_iter,
            tol: self.gw_tol,
            inner_tol: self.gw_inner_tol,
            inner_max_iter: self.gw_inner_max_iter,
        }
    }

    pub(crate) fn batch_size(&self, epoch: usize) -> usize {
        if epoch == 0 {
            self.batch_first
        } else {
            self.batch_rest
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    L2,
    Rcsls,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::L2 => "l2",
            Phase::Rcsls => "rcsls",
        })
    }
}

/// Mean training loss of one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    /// 1-based, counted across both phases.
    pub epoch: usize,
    pub phase: Phase,
    pub loss: f64,
    /// Largest `|QᵀQ - I|` over the maps at the end of the epoch.
    pub max_defect: f64,
}

impl fmt::Display for TraceEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "epoch {} phase {} loss {}", self.epoch, self.phase, self.loss)
    }
}

#[derive(Debug, Clone)]
pub struct BilingualModel {
    /// Maps the source language into the pivot space.
    pub q: OrthogonalMap,
    /// Greedy nearest pivot word of every source word under `q`.
    pub final_assignment: Assignment,
    pub loss_trace: Vec<TraceEntry>,
}

fn check_pair(x: &EmbeddingSet, y: &EmbeddingSet) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::Shape(format!(
            "`{}` has dimension {} but `{}` has {}",
            x.lang(),
            x.dim(),
            y.lang(),
            y.dim()
        )));
    }
    if x.is_empty() || y.is_empty() {
        return Err(Error::InvalidArgument("cannot align an empty embedding set".into()));
    }
    Ok(())
}

/// Orthogonal map fitted to the Gromov-Wasserstein coupling of the first
/// `gw_size` words of each language.
pub fn init_gw(x: &EmbeddingSet, y: &EmbeddingSet, cfg: &AlignerConfig) -> Result<OrthogonalMap> {
    check_pair(x, y)?;
    let size = cfg.gw_size.min(x.len()).min(y.len());
    if size < cfg.gw_size {
        log::warn!("gw_size {} clamped to {size} by vocabulary size", cfg.gw_size);
    }
    let xs = x.matrix().slice_move(ndarray::s![..size, ..]);
    let ys = y.matrix().slice_move(ndarray::s![..size, ..]);
    let gw = gromov_wasserstein(xs, ys, cfg.gw_params())?;
    if !gw.converged {
        log::debug!("gromov-wasserstein stopped after {} outer iterations", gw.iterations);
    } else {
        log::debug!("gromov-wasserstein converged after {} outer iterations", gw.iterations);
    }
    let soft_targets = gw.plan.row_stochastic().dot(&ys);
    procrustes(xs, soft_targets.view())
}

/// Draws fixed-size batches without replacement, reshuffling once the order is exhausted.
#[derive(Debug)]
pub(crate) struct BatchCursor {
    order: Vec<usize>,
    pos: usize,
}

impl BatchCursor {
    pub fn new(len: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(rng);
        Self { order, pos: 0 }
    }

    pub fn next(&mut self, size: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let size = size.min(self.order.len());
        if self.pos + size > self.order.len() {
            self.order.shuffle(rng);
            self.pos = 0;
        }
        let batch = self.order[self.pos..self.pos + size].to_vec();
        self.pos += size;
        batch
    }
}

pub(crate) fn clamp_batch(size: usize, a: usize, b: usize) -> usize {
    let clamped = size.min(a).min(b);
    if clamped < size {
        log::warn!("batch size {size} clamped to {clamped} by vocabulary size");
    }
    clamped
}

fn random_rows(m: ArrayView2<'_, f64>, count: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    if count >= m.nrows() {
        return m.to_owned();
    }
    let idx = rand::seq::index::sample(rng, m.nrows(), count).into_vec();
    select_rows(m, &idx)
}

/// Assignment rule used for one training step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Matching {
    Sinkhorn,
    Greedy,
}

/// Matches a source batch to a target batch in the common space and returns
/// the raw target rows aligned with each source row.
pub(crate) fn match_batch(
    source: ArrayView2<'_, f64>,
    source_map: &OrthogonalMap,
    target: ArrayView2<'_, f64>,
    target_map: &OrthogonalMap,
    matching: Matching,
    cfg: &AlignerConfig,
) -> Result<Array2<f64>> {
    let a = source_map.apply(source);
    let b = target_map.apply(target);
    let scores = a.dot(&b.t());
    match matching {
        Matching::Greedy => {
            let assignment = greedy_assign(scores.view())?;
            Ok(select_rows(target, assignment.targets()))
        }
        Matching::Sinkhorn => {
            let sq_a: Vec<f64> = a.rows().into_iter().map(|r| r.dot(&r)).collect();
            let sq_b: Vec<f64> = b.rows().into_iter().map(|r| r.dot(&r)).collect();
            let mut cost = scores;
            for ((i, j), c) in cost.indexed_iter_mut() {
                *c = (sq_a[i] + sq_b[j] - 2.0 * *c).max(0.0);
            }
            let out = sinkhorn(cost.view(), cfg.sinkhorn_reg, cfg.sinkhorn_tol, cfg.sinkhorn_max_iter)?;
            if !out.converged {
                log::debug!("batch sinkhorn stopped with marginal error {:.2e}", out.marginal_error);
            }
            Ok(out.plan.row_stochastic().dot(&target))
        }
    }
}

/// Loss and gradients for one batch pair, per-row normalized for ℓ2.
pub(crate) struct PairStep<'a> {
    pub phase: Phase,
    pub matching: Matching,
    pub source: ArrayView2<'a, f64>,
    pub source_map: &'a OrthogonalMap,
    pub target: ArrayView2<'a, f64>,
    pub target_map: &'a OrthogonalMap,
    /// Full source and target sets, from which RCSLS neighbor pools are drawn.
    pub source_vocab: ArrayView2<'a, f64>,
    pub target_vocab: ArrayView2<'a, f64>,
}

pub(crate) fn pair_step(step: PairStep<'_>, cfg: &AlignerConfig, rng: &mut ChaCha8Rng) -> Result<(f64, PairLoss)> {
    let aligned = match_batch(step.source, step.source_map, step.target, step.target_map, step.matching, cfg)?;
    match step.phase {
        Phase::L2 => {
            let pair = l2_pair(step.source, step.source_map, aligned.view(), step.target_map);
            Ok((pair.loss / step.source.nrows() as f64, pair))
        }
        Phase::Rcsls => {
            let source_pool = random_rows(step.source_vocab, cfg.knn_subsample, rng);
            let target_pool = random_rows(step.target_vocab, cfg.knn_subsample, rng);
            let k = cfg.k.min(source_pool.nrows()).min(target_pool.nrows());
            let pair = rcsls_pair(RcslsInputs {
                source: step.source,
                source_map: step.source_map,
                aligned: aligned.view(),
                target_map: step.target_map,
                source_pool: source_pool.view(),
                target_pool: target_pool.view(),
                k,
            })?;
            Ok((pair.loss, pair))
        }
    }
}

/// Runs one phase of bilingual training, appending per-epoch means to `trace`.
#[allow(clippy::too_many_arguments)]
fn run_phase(
    x: &EmbeddingSet,
    y: &EmbeddingSet,
    mut q: OrthogonalMap,
    phase: Phase,
    epochs: usize,
    lr: f64,
    first_epoch: usize,
    cfg: &AlignerConfig,
    rng: &mut ChaCha8Rng,
    trace: &mut Vec<TraceEntry>,
) -> Result<OrthogonalMap> {
    let pivot = OrthogonalMap::identity(y.dim());
    let mut src = BatchCursor::new(x.len(), rng);
    let mut tgt = BatchCursor::new(y.len(), rng);
    let mut round = 0usize;
    for e in 0..epochs {
        let epoch = first_epoch + e;
        let b = clamp_batch(cfg.batch_size(epoch), x.len(), y.len());
        let steps = (x.len() / b).max(1);
        let mut total = 0.0;
        for _ in 0..steps {
            let xb = select_rows(x.matrix(), &src.next(b, rng));
            let yb = select_rows(y.matrix(), &tgt.next(b, rng));
            let matching = if phase == Phase::L2 && round < cfg.sinkhorn_rounds {
                Matching::Sinkhorn
            } else {
                Matching::Greedy
            };
            round += 1;
            let (loss, pair) = pair_step(
                PairStep {
                    phase,
                    matching,
                    source: xb.view(),
                    source_map: &q,
                    target: yb.view(),
                    target_map: &pivot,
                    source_vocab: x.matrix(),
                    target_vocab: y.matrix(),
                },
                cfg,
                rng,
            )?;
            total += loss;
            q = descend(&q, pair.grad_source.view(), lr)?;
        }
        let entry = TraceEntry {
            epoch: epoch + 1,
            phase,
            loss: total / steps as f64,
            max_defect: q.defect(),
        };
        log::info!("{entry}");
        trace.push(entry);
    }
    Ok(q)
}

/// Stochastic ℓ2 Wasserstein-Procrustes from `q0`. Returns the map and the
/// per-epoch mean per-word loss.
pub fn align_l2(
    x: &EmbeddingSet,
    y: &EmbeddingSet,
    q0: &OrthogonalMap,
    cfg: &AlignerConfig,
) -> Result<(OrthogonalMap, Vec<TraceEntry>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    align_l2_with(x, y, q0, cfg, &mut rng)
}

fn align_l2_with(
    x: &EmbeddingSet,
    y: &EmbeddingSet,
    q0: &OrthogonalMap,
    cfg: &AlignerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(OrthogonalMap, Vec<TraceEntry>)> {
    cfg.validate()?;
    check_pair(x, y)?;
    let mut trace = Vec::new();
    let q = run_phase(x, y, q0.clone(), Phase::L2, cfg.l2_epochs, cfg.lr_l2, 0, cfg, rng, &mut trace)?;
    Ok((q, trace))
}

/// RCSLS refinement with greedy batch assignments, starting from `q`.
pub fn align_rcsls(x: &EmbeddingSet, y: &EmbeddingSet, q: &OrthogonalMap, cfg: &AlignerConfig) -> Result<BilingualModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    align_rcsls_with(x, y, q, cfg, cfg.l2_epochs, &mut rng)
}

fn align_rcsls_with(
    x: &EmbeddingSet,
    y: &EmbeddingSet,
    q: &OrthogonalMap,
    cfg: &AlignerConfig,
    first_epoch: usize,
    rng: &mut ChaCha8Rng,
) -> Result<BilingualModel> {
    cfg.validate()?;
    check_pair(x, y)?;
    let mut trace = Vec::new();
    let q = run_phase(
        x,
        y,
        q.clone(),
        Phase::Rcsls,
        cfg.rcsls_epochs,
        cfg.lr_rcsls_bilingual,
        first_epoch,
        cfg,
        rng,
        &mut trace,
    )?;
    let final_assignment = greedy_assign(q.apply(x.matrix()).dot(&y.matrix().t()).view())?;
    Ok(BilingualModel {
        q,
        final_assignment,
        loss_trace: trace,
    })
}

/// Full unsupervised pipeline mapping `x` onto the pivot `y`. Deterministic
/// for a given configuration seed.
pub fn align_bilingual(x: &EmbeddingSet, y: &EmbeddingSet, cfg: &AlignerConfig) -> Result<BilingualModel> {
    cfg.validate()?;
    check_pair(x, y)?;
    let x = x.head(cfg.vocab_cap);
    let y = y.head(cfg.vocab_cap);
    let q0 = init_gw(&x, &y, cfg)?;
    align_bilingual_from(&x, &y, &q0, cfg)
}

/// Both training phases from a given initial map, skipping the
/// Gromov-Wasserstein initialization.
pub fn align_bilingual_from(
    x: &EmbeddingSet,
    y: &EmbeddingSet,
    q0: &OrthogonalMap,
    cfg: &AlignerConfig,
) -> Result<BilingualModel> {
    cfg.validate()?;
    check_pair(x, y)?;
    let x = x.head(cfg.vocab_cap);
    let y = y.head(cfg.vocab_cap);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (q1, mut trace) = align_l2_with(&x, &y, q0, cfg, &mut rng)?;
    let mut model = align_rcsls_with(&x, &y, &q1, cfg, cfg.l2_epochs, &mut rng)?;
    trace.append(&mut model.loss_trace);
    model.loss_trace = trace;
    Ok(model)
}

/// Fraction of rows whose assignment hits the known correspondence.
pub fn assignment_accuracy(assignment: &Assignment, truth: &[usize]) -> f64 {
    let hits = assignment
        .targets()
        .iter()
        .zip(truth)
        .filter(|(a, b)| a == b)
        .count();
    hits as f64 / truth.len().max(1) as f64
}

/// Greedy nearest-neighbor assignment of mapped source rows among target rows.
pub fn nearest_neighbors(x: ArrayView2<'_, f64>, q: &OrthogonalMap, y: ArrayView2<'_, f64>) -> Result<Assignment> {
    greedy_assign(q.apply(x).dot(&y.t()).view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::generate_family;

    fn small_cfg() -> AlignerConfig {
        AlignerConfig {
            gw_size: 200,
            batch_first: 100,
            batch_rest: 200,
            knn_subsample: 400,
            l2_epochs: 3,
            rcsls_epochs: 2,
            seed: 1,
            ..AlignerConfig::default()
        }
    }

    #[test]
    fn config_defaults() {
        let cfg = AlignerConfig::default();
        assert_eq!(cfg.gw_size, 2000);
        assert_eq!(cfg.gw_eps, 0.5);
        assert_eq!((cfg.batch_first, cfg.batch_rest), (500, 1000));
        assert_eq!(cfg.lr_l2, 0.1);
        assert_eq!((cfg.lr_rcsls_bilingual, cfg.lr_rcsls_multi), (50.0, 25.0));
        assert_eq!(cfg.sinkhorn_rounds, 2);
        assert_eq!(cfg.vocab_cap, 20000);
        assert_eq!(cfg.k, 10);
        assert_eq!(cfg.batch_size(0), 500);
        assert_eq!(cfg.batch_size(1), 1000);
        cfg.validate().unwrap();
    }

    #[test]
    fn config_validation() {
        let bad = AlignerConfig {
            gw_size: 30000,
            ..AlignerConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = AlignerConfig {
            batch_rest: 0,
            ..AlignerConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = AlignerConfig {
            lr_l2: -1.0,
            ..AlignerConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn trace_line_format() {
        let e = TraceEntry {
            epoch: 3,
            phase: Phase::Rcsls,
            loss: -1.5,
            max_defect: 0.0,
        };
        assert_eq!(e.to_string(), "epoch 3 phase rcsls loss -1.5");
    }

    #[test]
    fn batch_cursor_covers_everything_once_per_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut c = BatchCursor::new(10, &mut rng);
        let mut seen: Vec<usize> = (0..5).flat_map(|_| c.next(2, &mut rng)).collect();
        seen.sort();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn init_on_identical_sets_is_identity() {
        let fam = generate_family(1, 200, 8, 0.0, 2).unwrap();
        let q = init_gw(&fam.sets[0], &fam.sets[0], &small_cfg()).unwrap();
        let err = (&q.matrix() - &Array2::<f64>::eye(8)).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn init_recovers_permuted_rotation() {
        let fam = generate_family(2, 200, 8, 0.0, 3).unwrap();
        let q = init_gw(&fam.sets[1], &fam.sets[0], &small_cfg()).unwrap();
        let nn = nearest_neighbors(fam.sets[1].matrix(), &q, fam.sets[0].matrix()).unwrap();
        assert!(assignment_accuracy(&nn, &fam.correspondence(1, 0)) >= 0.9);
    }

    #[test]
    fn l2_fixed_point_on_identical_sets() {
        // With full batches both sides see the same words, so Q = I is stationary.
        let fam = generate_family(1, 300, 8, 0.0, 4).unwrap();
        let cfg = AlignerConfig {
            batch_first: 300,
            batch_rest: 300,
            ..small_cfg()
        };
        let (q, trace) = align_l2(&fam.sets[0], &fam.sets[0], &OrthogonalMap::identity(8), &cfg).unwrap();
        let err = (&q.matrix() - &Array2::<f64>::eye(8)).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-3, "{err}");
        assert_eq!(trace.len(), cfg.l2_epochs);
        assert!(trace.iter().all(|e| e.max_defect < 1e-6));
        // Greedy rounds reach the exact minimum; Sinkhorn rounds are only close.
        assert!(trace.last().unwrap().loss < 1e-9, "{:?}", trace);
    }

    #[test]
    fn l2_trace_does_not_increase_on_noiseless_pair() {
        let fam = generate_family(2, 300, 8, 0.0, 12).unwrap();
        let cfg = AlignerConfig {
            batch_first: 300,
            batch_rest: 300,
            gw_size: 300,
            l2_epochs: 4,
            ..small_cfg()
        };
        let q0 = init_gw(&fam.sets[1], &fam.sets[0], &cfg).unwrap();
        let (_, trace) = align_l2(&fam.sets[1], &fam.sets[0], &q0, &cfg).unwrap();
        for w in trace.windows(2) {
            assert!(w[1].loss <= w[0].loss + 1e-9, "{trace:?}");
        }
    }

    #[test]
    fn rcsls_on_identical_sets_keeps_identity_assignment() {
        let fam = generate_family(1, 300, 8, 0.0, 5).unwrap();
        let model = align_rcsls(&fam.sets[0], &fam.sets[0], &OrthogonalMap::identity(8), &small_cfg()).unwrap();
        let acc = assignment_accuracy(&model.final_assignment, &(0..300).collect::<Vec<_>>());
        assert!(acc >= 0.99, "{acc}");
    }

    #[test]
    fn pipeline_is_deterministic() {
        let fam = generate_family(2, 300, 8, 0.05, 6).unwrap();
        let cfg = AlignerConfig {
            gw_size: 300,
            ..small_cfg()
        };
        let a = align_bilingual(&fam.sets[1], &fam.sets[0], &cfg).unwrap();
        let b = align_bilingual(&fam.sets[1], &fam.sets[0], &cfg).unwrap();
        assert_eq!(a.q, b.q);
        assert_eq!(a.loss_trace, b.loss_trace);
        let acc = assignment_accuracy(&a.final_assignment, &fam.correspondence(1, 0));
        assert!(acc > 0.9, "{acc}");
    }

    #[test]
    fn mismatched_dimensions_are_rejected() {
        let a = generate_family(1, 50, 4, 0.0, 1).unwrap();
        let b = generate_family(1, 50, 5, 0.0, 1).unwrap();
        assert!(matches!(
            align_bilingual(&a.sets[0], &b.sets[0], &small_cfg()),
            Err(Error::Shape(_))
        ));
    }
}
