//! Joint alignment of several languages into the space of a pivot.
//!
//! Every non-pivot language `i` owns one orthogonal map `Q_i`; the pivot keeps
//! the identity. Training samples language pairs in proportion to a symmetric
//! weight matrix and takes one gradient step on both endpoints of each pair,
//! so that languages are also aligned with each other and not only with the
//! pivot.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bilingual::{
    clamp_batch, init_gw, pair_step, AlignerConfig, BatchCursor, Matching, PairStep, Phase, TraceEntry,
};
use crate::embeddings::EmbeddingSet;
use crate::error::{Error, Result};
use crate::linalg::select_rows;
use crate::objectives::{descend, OrthogonalMap};
use crate::transport::greedy_assign;

/// How pair weights are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightScheme {
    /// Pairs involving the pivot weigh `N`, all other pairs weigh 1.
    #[default]
    Umh,
    Uniform,
}

impl std::str::FromStr for WeightScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "umh" => Ok(Self::Umh),
            "uniform" => Ok(Self::Uniform),
            other => Err(Error::InvalidArgument(format!("unknown weight scheme `{other}`"))),
        }
    }
}

/// Weights over `num_langs` languages (pivot included) under `scheme`.
pub fn weights(num_langs: usize, scheme: WeightScheme) -> Result<Array2<f64>> {
    if num_langs < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least two languages, got {num_langs}"
        )));
    }
    let n = (num_langs - 1) as f64;
    Ok(Array2::from_shape_fn((num_langs, num_langs), |(i, j)| {
        if i == j {
            0.0
        } else if scheme == WeightScheme::Umh && (i == 0 || j == 0) {
            n
        } else {
            1.0
        }
    }))
}

/// The default weighting: `N` on pivot pairs, 1 elsewhere, 0 on the diagonal.
pub fn default_weights(num_langs: usize) -> Result<Array2<f64>> {
    weights(num_langs, WeightScheme::Umh)
}

pub fn uniform_weights(num_langs: usize) -> Result<Array2<f64>> {
    weights(num_langs, WeightScheme::Uniform)
}

fn validate_weights(w: ArrayView2<'_, f64>) -> Result<()> {
    let (r, c) = w.dim();
    if r != c || r < 2 {
        return Err(Error::Shape(format!("weights must be square over at least two languages, got {r}x{c}")));
    }
    for i in 0..r {
        if w[[i, i]] != 0.0 {
            return Err(Error::InvalidArgument(format!("weight diagonal must be zero at {i}")));
        }
        for j in 0..i {
            let v = w[[i, j]];
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("weight ({i}, {j}) = {v} is not a nonnegative real")));
            }
            if (v - w[[j, i]]).abs() > 1e-12 * v.abs().max(1.0) {
                return Err(Error::InvalidArgument(format!("weights are not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// Categorical distribution over unordered pairs `i < j`.
struct PairSampler {
    pairs: Vec<(usize, usize)>,
    dist: WeightedIndex<f64>,
}

impl PairSampler {
    fn new(w: ArrayView2<'_, f64>) -> Result<Self> {
        validate_weights(w)?;
        let mut pairs = Vec::new();
        let mut probs = Vec::new();
        for i in 0..w.nrows() {
            for j in i + 1..w.ncols() {
                if w[[i, j]] > 0.0 {
                    pairs.push((i, j));
                    probs.push(w[[i, j]]);
                }
            }
        }
        if pairs.is_empty() {
            return Err(Error::InvalidArgument("all pair weights are zero".into()));
        }
        let dist = WeightedIndex::new(&probs).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(Self { pairs, dist })
    }

    fn draw(&self, count: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
        (0..count).map(|_| self.pairs[self.dist.sample(rng)]).collect()
    }
}

/// Draws `count` unordered pairs `(i, j)` with `i < j`, i.i.d. with probability
/// proportional to `weights[i][j]`.
pub fn sample_pairs(weights: ArrayView2<'_, f64>, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<(usize, usize)>> {
    Ok(PairSampler::new(weights)?.draw(count, rng))
}

#[derive(Debug, Clone)]
pub struct MultiAlignment {
    /// Language identifiers, pivot first.
    pub languages: Vec<String>,
    /// `maps[0]` is the identity.
    pub maps: Vec<OrthogonalMap>,
    pub weights: Array2<f64>,
    pub loss_trace: Vec<TraceEntry>,
}

impl MultiAlignment {
    pub fn pivot(&self) -> &str {
        &self.languages[0]
    }

    pub fn map_of(&self, lang: &str) -> Result<&OrthogonalMap> {
        self.languages
            .iter()
            .position(|l| l == lang)
            .map(|i| &self.maps[i])
            .ok_or_else(|| Error::MissingMap(lang.to_string()))
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            languages: self.languages.clone(),
            maps: self.maps.clone(),
        }
    }
}

/// The trained maps of a multilingual run, as stored on disk.
///
/// The text format starts with a `<d> <languages> <pivot>` line followed by
/// one block per language: its identifier on a line of its own, then `d`
/// lines of `d` reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub languages: Vec<String>,
    pub maps: Vec<OrthogonalMap>,
}

impl Checkpoint {
    pub fn map_of(&self, lang: &str) -> Result<&OrthogonalMap> {
        self.languages
            .iter()
            .position(|l| l == lang)
            .map(|i| &self.maps[i])
            .ok_or_else(|| Error::MissingMap(lang.to_string()))
    }

    pub fn to_text(&self) -> String {
        let d = self.maps.first().map_or(0, OrthogonalMap::dim);
        let mut out = format!("{d} {} {}\n", self.languages.len(), self.languages[0]);
        for (lang, map) in self.languages.iter().zip(&self.maps) {
            out.push_str(lang);
            out.push('\n');
            for row in map.matrix().rows() {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                let _ = writeln!(out, "{}", line.join(" "));
            }
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines.next().ok_or_else(|| Error::parse(path, 1, "empty checkpoint"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let [d, count, pivot] = fields[..] else {
            return Err(Error::parse(path, 1, "expected `<d> <languages> <pivot>`"));
        };
        let d: usize = d.parse().map_err(|_| Error::parse(path, 1, "bad dimension"))?;
        let count: usize = count.parse().map_err(|_| Error::parse(path, 1, "bad language count"))?;
        let mut languages = Vec::with_capacity(count);
        let mut maps = Vec::with_capacity(count);
        for _ in 0..count {
            let (_, lang) = lines
                .next()
                .ok_or_else(|| Error::parse(path, 0, "checkpoint ends before all languages"))?;
            let mut m = Array2::zeros((d, d));
            for r in 0..d {
                let (no, line) = lines
                    .next()
                    .ok_or_else(|| Error::parse(path, 0, format!("matrix of `{lang}` is truncated")))?;
                let vals: Vec<f64> = line
                    .split_whitespace()
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::parse(path, no, "non-numeric matrix entry"))?;
                if vals.len() != d {
                    return Err(Error::parse(path, no, format!("expected {d} values, found {}", vals.len())));
                }
                m.row_mut(r).assign(&ndarray::Array1::from(vals));
            }
            languages.push(lang.trim().to_string());
            maps.push(OrthogonalMap::new(m)?);
        }
        if languages.first().map(String::as_str) != Some(pivot) {
            return Err(Error::parse(path, 1, format!("pivot `{pivot}` is not the first block")));
        }
        Ok(Self { languages, maps })
    }
}

/// Number of iterations after which every non-pivot vocabulary has, in
/// expectation, been visited once.
fn iterations_per_epoch(lens: &[usize], w: ArrayView2<'_, f64>, batch: usize) -> usize {
    let n = lens.len() - 1;
    let total: f64 = (0..w.nrows()).flat_map(|i| (i + 1..w.ncols()).map(move |j| (i, j))).map(|(i, j)| w[[i, j]]).sum();
    let mut needed = 1usize;
    for (i, &len) in lens.iter().enumerate().skip(1) {
        let share: f64 = w.row(i).sum() / total;
        if share <= 0.0 {
            continue;
        }
        let draws_per_iteration = n as f64 * share;
        let batches = len as f64 / batch as f64;
        needed = needed.max((batches / draws_per_iteration).ceil() as usize);
    }
    needed
}

fn check_sets(sets: &[EmbeddingSet]) -> Result<()> {
    if sets.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least two languages, got {}", sets.len())));
    }
    let d = sets[0].dim();
    for s in sets {
        if s.dim() != d {
            return Err(Error::Shape(format!(
                "`{}` has dimension {} but the pivot `{}` has {d}",
                s.lang(),
                s.dim(),
                sets[0].lang()
            )));
        }
        if s.is_empty() {
            return Err(Error::InvalidArgument(format!("`{}` is empty", s.lang())));
        }
    }
    Ok(())
}

/// Jointly aligns `sets` (pivot first) with pair weights `weights`.
///
/// Both endpoints of every sampled pair take a step from the same batch
/// gradient; pairs are drawn with the larger index as the source so the pivot
/// is always on the target side.
pub fn align_multi(sets: &[EmbeddingSet], weights: ArrayView2<'_, f64>, cfg: &AlignerConfig) -> Result<MultiAlignment> {
    cfg.validate()?;
    check_sets(sets)?;
    if weights.nrows() != sets.len() {
        return Err(Error::Shape(format!(
            "{} languages but weights of size {}",
            sets.len(),
            weights.nrows()
        )));
    }
    let heads: Vec<EmbeddingSet> = sets.iter().map(|s| s.head(cfg.vocab_cap)).collect();
    let mut maps = vec![OrthogonalMap::identity(heads[0].dim())];
    for s in &heads[1..] {
        maps.push(init_gw(s, &heads[0], cfg)?);
    }
    align_multi_from(&heads, weights, maps, cfg)
}

/// Joint training from given initial maps, one per language with the pivot's
/// first; the pivot's entry is replaced by the identity.
pub fn align_multi_from(
    sets: &[EmbeddingSet],
    weights: ArrayView2<'_, f64>,
    init: Vec<OrthogonalMap>,
    cfg: &AlignerConfig,
) -> Result<MultiAlignment> {
    cfg.validate()?;
    check_sets(sets)?;
    if weights.nrows() != sets.len() || init.len() != sets.len() {
        return Err(Error::Shape(format!(
            "{} languages but weights of size {} and {} initial maps",
            sets.len(),
            weights.nrows(),
            init.len()
        )));
    }
    let sampler = PairSampler::new(weights)?;
    let sets: Vec<EmbeddingSet> = sets.iter().map(|s| s.head(cfg.vocab_cap)).collect();
    let d = sets[0].dim();
    if let Some(m) = init.iter().find(|m| m.dim() != d) {
        return Err(Error::Shape(format!("initial map of size {} for dimension {d}", m.dim())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut maps = init;
    maps[0] = OrthogonalMap::identity(d);

    let lens: Vec<usize> = sets.iter().map(EmbeddingSet::len).collect();
    let min_len = lens.iter().copied().min().unwrap_or(0);
    let mut cursors: Vec<BatchCursor> = lens.iter().map(|&n| BatchCursor::new(n, &mut rng)).collect();
    let pairs_per_iteration = sets.len() - 1;
    let mut trace = Vec::new();
    let schedule = [
        (Phase::L2, cfg.l2_epochs, cfg.lr_l2),
        (Phase::Rcsls, cfg.rcsls_epochs, cfg.lr_rcsls_multi),
    ];
    let mut epoch = 0;
    for (phase, epochs, lr) in schedule {
        let mut round = 0usize;
        for _ in 0..epochs {
            let b = clamp_batch(cfg.batch_size(epoch), min_len, min_len);
            let iterations = cfg
                .iterations_per_epoch
                .unwrap_or_else(|| iterations_per_epoch(&lens, weights, b));
            let mut total = 0.0;
            let mut steps = 0usize;
            for _ in 0..iterations {
                let matching = if round < cfg.sinkhorn_rounds {
                    Matching::Sinkhorn
                } else {
                    Matching::Greedy
                };
                round += 1;
                for (lo, hi) in sampler.draw(pairs_per_iteration, &mut rng) {
                    let (s, t) = (hi, lo);
                    let xb = select_rows(sets[s].matrix(), &cursors[s].next(b, &mut rng));
                    let yb = select_rows(sets[t].matrix(), &cursors[t].next(b, &mut rng));
                    let (loss, pair) = pair_step(
                        PairStep {
                            phase,
                            matching,
                            source: xb.view(),
                            source_map: &maps[s],
                            target: yb.view(),
                            target_map: &maps[t],
                            source_vocab: sets[s].matrix(),
                            target_vocab: sets[t].matrix(),
                        },
                        cfg,
                        &mut rng,
                    )?;
                    total += loss;
                    steps += 1;
                    maps[s] = descend(&maps[s], pair.grad_source.view(), lr)?;
                    if t != 0 {
                        maps[t] = descend(&maps[t], pair.grad_target.view(), lr)?;
                    }
                }
            }
            let entry = TraceEntry {
                epoch: epoch + 1,
                phase,
                loss: total / steps.max(1) as f64,
                max_defect: maps.iter().map(OrthogonalMap::defect).fold(0.0, f64::max),
            };
            log::info!("{entry}");
            trace.push(entry);
            epoch += 1;
        }
    }

    Ok(MultiAlignment {
        languages: sets.iter().map(|s| s.lang().to_string()).collect(),
        maps,
        weights: weights.to_owned(),
        loss_trace: trace,
    })
}

/// Loss used to compare language pairs after training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairLossKind {
    #[default]
    Rcsls,
    L2,
}

/// Symmetric matrix of final pairwise losses in the common space.
///
/// Entry `(i, j)` averages the loss of `i` onto `j` and of `j` onto `i`, each
/// under the greedy assignment between the first `cfg.knn_subsample` words of
/// both languages. The ℓ2 loss is reported per word.
pub fn pair_loss_matrix(
    alignment: &MultiAlignment,
    sets: &[EmbeddingSet],
    kind: PairLossKind,
    cfg: &AlignerConfig,
) -> Result<Array2<f64>> {
    check_sets(sets)?;
    let maps: Vec<&OrthogonalMap> = sets.iter().map(|s| alignment.map_of(s.lang())).collect::<Result<_>>()?;
    if maps.iter().any(|m| m.dim() != sets[0].dim()) {
        return Err(Error::Shape("map dimension differs from the embeddings".into()));
    }
    let heads: Vec<EmbeddingSet> = sets.iter().map(|s| s.head(cfg.knn_subsample)).collect();
    let phase = match kind {
        PairLossKind::Rcsls => Phase::Rcsls,
        PairLossKind::L2 => Phase::L2,
    };
    // Pools are the full heads, so no randomness is consumed.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = sets.len();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (_, pair) = pair_step(
                PairStep {
                    phase,
                    matching: Matching::Greedy,
                    source: heads[i].matrix(),
                    source_map: maps[i],
                    target: heads[j].matrix(),
                    target_map: maps[j],
                    source_vocab: heads[i].matrix(),
                    target_vocab: heads[j].matrix(),
                },
                cfg,
                &mut rng,
            )?;
            let loss = match kind {
                PairLossKind::Rcsls => pair.loss,
                PairLossKind::L2 => pair.loss / heads[i].len() as f64,
            };
            out[[i, j]] += loss / 2.0;
            out[[j, i]] += loss / 2.0;
        }
    }
    Ok(out)
}

/// Greedy nearest-neighbor assignment of language `src` onto `tgt` in the common space.
pub fn common_space_neighbors(
    alignment: &MultiAlignment,
    src: &EmbeddingSet,
    tgt: &EmbeddingSet,
) -> Result<crate::transport::Assignment> {
    let a = alignment.map_of(src.lang())?.apply(src.matrix());
    let b = alignment.map_of(tgt.lang())?.apply(tgt.matrix());
    greedy_assign(a.dot(&b.t()).view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bilingual::assignment_accuracy;
    use crate::synthetic::generate_family;

    fn small_cfg() -> AlignerConfig {
        AlignerConfig {
            gw_size: 300,
            batch_first: 150,
            batch_rest: 300,
            knn_subsample: 300,
            l2_epochs: 2,
            rcsls_epochs: 2,
            seed: 3,
            ..AlignerConfig::default()
        }
    }

    #[test]
    fn default_weight_examples() {
        let w = default_weights(6).unwrap();
        for j in 1..6 {
            assert_eq!(w[[0, j]], 5.0);
            assert_eq!(w[[j, 0]], 5.0);
        }
        assert_eq!(w[[2, 4]], 1.0);
        assert!((0..6).all(|i| w[[i, i]] == 0.0));

        let two = default_weights(2).unwrap();
        assert_eq!(two, ndarray::array![[0.0, 1.0], [1.0, 0.0]]);

        let u = uniform_weights(4).unwrap();
        assert!(u.indexed_iter().all(|((i, j), &v)| v == if i == j { 0.0 } else { 1.0 }));
        assert!(default_weights(1).is_err());
    }

    #[test]
    fn single_pair_is_always_drawn() {
        let mut w = Array2::zeros((4, 4));
        w[[1, 3]] = 2.0;
        w[[3, 1]] = 2.0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_pairs(w.view(), 50, &mut rng).unwrap().iter().all(|&p| p == (1, 3)));
    }

    #[test]
    fn zero_or_asymmetric_weights_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_pairs(Array2::zeros((3, 3)).view(), 1, &mut rng).is_err());
        let mut w = default_weights(3).unwrap();
        w[[1, 2]] = 4.0;
        assert!(sample_pairs(w.view(), 1, &mut rng).is_err());
    }

    #[test]
    fn pivot_pair_frequency_matches_weights() {
        let w = default_weights(11).unwrap();
        let n = 10.0;
        let pairs_without_pivot = n * (n - 1.0) / 2.0;
        let expected = n * n / (n * n + pairs_without_pivot);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let draws = sample_pairs(w.view(), 100_000, &mut rng).unwrap();
        let observed = draws.iter().filter(|(i, _)| *i == 0).count() as f64 / draws.len() as f64;
        assert!((observed - expected).abs() < 0.02, "{observed} vs {expected}");
    }

    #[test]
    fn sampling_is_seeded() {
        let w = default_weights(5).unwrap();
        let a = sample_pairs(w.view(), 20, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = sample_pairs(w.view(), 20, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn epoch_covers_each_language() {
        let w = default_weights(4).unwrap();
        // Language 1 is drawn with probability 5/12 per pair and 3 pairs per iteration.
        assert_eq!(iterations_per_epoch(&[1000, 1000, 1000, 1000], w.view(), 100), 8);
    }

    #[test]
    fn pivot_stays_identity_and_maps_stay_orthogonal() {
        let fam = generate_family(3, 300, 8, 0.02, 1).unwrap();
        let w = default_weights(3).unwrap();
        let al = align_multi(&fam.sets, w.view(), &small_cfg()).unwrap();
        assert_eq!(al.maps[0], OrthogonalMap::identity(8));
        assert!(al.loss_trace.iter().all(|e| e.max_defect < 1e-6));
        assert_eq!(al.languages, vec!["l0", "l1", "l2"]);
        for i in 1..3 {
            let nn = common_space_neighbors(&al, &fam.sets[i], &fam.sets[0]).unwrap();
            assert!(assignment_accuracy(&nn, &fam.correspondence(i, 0)) > 0.9);
        }
    }

    #[test]
    fn same_seed_same_maps() {
        let fam = generate_family(3, 200, 6, 0.05, 2).unwrap();
        let w = default_weights(3).unwrap();
        let a = align_multi(&fam.sets, w.view(), &small_cfg()).unwrap();
        let b = align_multi(&fam.sets, w.view(), &small_cfg()).unwrap();
        assert_eq!(a.maps, b.maps);
        assert_eq!(a.loss_trace, b.loss_trace);
    }

    #[test]
    fn rejects_single_language_and_mixed_dimensions() {
        let fam = generate_family(1, 50, 4, 0.0, 1).unwrap();
        let w = default_weights(2).unwrap();
        assert!(align_multi(&fam.sets, w.view(), &small_cfg()).is_err());
        let other = generate_family(1, 50, 5, 0.0, 1).unwrap();
        let mixed = vec![fam.sets[0].clone(), other.sets[0].clone()];
        assert!(matches!(align_multi(&mixed, w.view(), &small_cfg()), Err(Error::Shape(_))));
    }

    #[test]
    fn checkpoint_round_trip() {
        let fam = generate_family(3, 40, 4, 0.0, 8).unwrap();
        let cp = Checkpoint {
            languages: vec!["l0".into(), "l1".into(), "l2".into()],
            maps: fam.true_maps.clone(),
        };
        let text = cp.to_text();
        assert!(text.starts_with("4 3 l0\nl0\n"));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("maps.txt");
        cp.write(&path).unwrap();
        assert_eq!(Checkpoint::read(&path).unwrap(), cp);
    }

    #[test]
    fn truncated_checkpoint_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("maps.txt");
        fs::write(&path, "2 2 en\nen\n1 0\n0 1\nfr\n1 0\n").unwrap();
        assert!(matches!(Checkpoint::read(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn pair_losses_of_identical_languages_are_equal() {
        let fam = generate_family(1, 100, 5, 0.0, 4).unwrap();
        let sets: Vec<EmbeddingSet> = (0..3)
            .map(|i| {
                EmbeddingSet::new(format!("l{i}"), fam.sets[0].words().to_vec(), fam.sets[0].matrix().to_owned()).unwrap()
            })
            .collect();
        let al = MultiAlignment {
            languages: vec!["l0".into(), "l1".into(), "l2".into()],
            maps: vec![OrthogonalMap::identity(5); 3],
            weights: default_weights(3).unwrap(),
            loss_trace: Vec::new(),
        };
        for kind in [PairLossKind::Rcsls, PairLossKind::L2] {
            let m = pair_loss_matrix(&al, &sets, kind, &small_cfg()).unwrap();
            assert!((0..3).all(|i| m[[i, i]] == 0.0));
            let v = m[[0, 1]];
            assert!(m.indexed_iter().all(|((i, j), &x)| i == j || (x - v).abs() < 1e-12));
        }
    }

    #[test]
    fn pair_loss_needs_a_map_for_every_language() {
        let fam = generate_family(3, 60, 4, 0.0, 4).unwrap();
        let al = MultiAlignment {
            languages: vec!["l0".into(), "l1".into()],
            maps: vec![OrthogonalMap::identity(4); 2],
            weights: default_weights(2).unwrap(),
            loss_trace: Vec::new(),
        };
        assert!(matches!(
            pair_loss_matrix(&al, &fam.sets, PairLossKind::Rcsls, &small_cfg()),
            Err(Error::MissingMap(_))
        ));
    }

    #[test]
    fn pair_loss_follows_noise_level() {
        let (n, d, seed) = (400, 10, 21);
        let clean = generate_family(2, n, d, 0.0, seed).unwrap();
        let mut sets = vec![clean.sets[0].clone()];
        let mut maps = vec![OrthogonalMap::identity(d)];
        for (k, sigma) in [0.0, 0.05, 0.3].into_iter().enumerate() {
            // Same seed, so the latent cloud, map and permutation are shared.
            let fam = generate_family(2, n, d, sigma, seed).unwrap();
            let s = &fam.sets[1];
            sets.push(EmbeddingSet::new(format!("n{k}"), s.words().to_vec(), s.matrix().to_owned()).unwrap());
            maps.push(fam.map_to_pivot(1));
        }
        let al = MultiAlignment {
            languages: sets.iter().map(|s| s.lang().to_string()).collect(),
            maps,
            weights: default_weights(4).unwrap(),
            loss_trace: Vec::new(),
        };
        for kind in [PairLossKind::Rcsls, PairLossKind::L2] {
            let m = pair_loss_matrix(&al, &sets, kind, &small_cfg()).unwrap();
            assert!(m[[1, 0]] < m[[2, 0]] && m[[2, 0]] < m[[3, 0]], "{kind:?}: {m:?}");
        }
    }
}
