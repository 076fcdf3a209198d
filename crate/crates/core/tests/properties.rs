use hyperalign::embeddings::{compose_lexicons, normalize, EmbeddingSet, Lexicon};
use hyperalign::multilingual::{default_weights, sample_pairs};
use hyperalign::objectives::retract_orthogonal;
use hyperalign::synthetic::random_orthogonal;
use hyperalign::transport::{
    entropic_objective, gromov_wasserstein, greedy_assign, hungarian, sinkhorn, Assignment, GwParams, TransportPlan,
};
use ndarray::{Array2, Axis};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn matrix(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(lo..hi, rows * cols).prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

fn sized_matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = Array2<f64>> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(r, c)| matrix(r, c, 0.0, 1.0))
}

fn lexicon(src: &str, tgt: &str) -> impl Strategy<Value = Lexicon> {
    let (src, tgt) = (src.to_string(), tgt.to_string());
    prop::collection::vec((0u8..6, 0u8..6), 0..15).prop_map(move |pairs| {
        Lexicon::new(
            src.clone(),
            tgt.clone(),
            pairs.into_iter().map(|(a, b)| (format!("{src}{a}"), format!("p{b}"))),
        )
    })
}

fn unit_rows(seed: u64, n: usize, d: usize) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = random_orthogonal(&mut rng, d.max(n));
    q.matrix().slice(ndarray::s![..n, ..d]).to_owned()
        + Array2::from_shape_fn((n, d), |(i, j)| ((i * 7 + j * 3) % 5) as f64 * 0.1)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn normalize_is_idempotent(m in (1usize..12, 1usize..8).prop_flat_map(|(r, c)| matrix(r, c, 0.1, 3.0))) {
        let words = (0..m.nrows()).map(|i| format!("w{i}")).collect();
        let set = EmbeddingSet::new("xx", words, m).unwrap();
        let once = normalize(&set).unwrap();
        let twice = normalize(&once).unwrap();
        for (a, b) in once.matrix().iter().zip(twice.matrix().iter()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        for row in once.matrix().rows() {
            prop_assert!((row.dot(&row) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn composition_equals_join(ab in lexicon("a", "p"), pb in lexicon("p", "b")) {
        // Rename the right lexicon's targets so they live in language `b`.
        let pb = Lexicon::new("p", "b", pb.pairs().map(|(p, t)| (t.to_string(), format!("b{}", &p[1..]))));
        let composed = compose_lexicons(&ab, &pb).unwrap();
        let mut expected = Vec::new();
        for (a, p) in ab.pairs() {
            for (p2, b) in pb.pairs() {
                if p == p2 {
                    expected.push((a.to_string(), b.to_string()));
                }
            }
        }
        let expected = Lexicon::new("a", "b", expected);
        prop_assert_eq!(composed, expected);
    }

    #[test]
    fn sinkhorn_meets_marginals_and_beats_the_product_plan(cost in sized_matrix(12, 12), reg in 0.05f64..1.0) {
        let (n, m) = cost.dim();
        let out = sinkhorn(cost.view(), reg, 1e-10, 20_000).unwrap();
        prop_assert!(out.converged);
        let plan = out.plan.matrix();
        for s in plan.sum_axis(Axis(1)) {
            prop_assert!((s - 1.0 / n as f64).abs() < 1e-6);
        }
        for s in plan.sum_axis(Axis(0)) {
            prop_assert!((s - 1.0 / m as f64).abs() < 1e-6);
        }
        let product = TransportPlan::uniform(n, m);
        prop_assert!(
            entropic_objective(cost.view(), &out.plan, reg) <= entropic_objective(cost.view(), &product, reg) + 1e-9
        );
    }

    #[test]
    fn hungarian_beats_every_feasible_reference(cost in (1usize..9).prop_flat_map(|n| matrix(n, n, 0.0, 1.0))) {
        let h = hungarian(cost.view()).unwrap();
        prop_assert!(h.is_permutation());
        let score = cost.mapv(|c| -c);
        let g = greedy_assign(score.view()).unwrap();
        let best = h.cost(cost.view());
        prop_assert!(best <= Assignment::identity(cost.nrows()).cost(cost.view()) + 1e-12);
        if g.is_permutation() {
            prop_assert!(best <= g.cost(cost.view()) + 1e-12);
        }
    }

    #[test]
    fn retraction_lands_on_the_orthogonal_group(m in (2usize..8).prop_flat_map(|d| matrix(d, d, -1.0, 1.0))) {
        let d = m.nrows();
        let nudged = &m + &(Array2::<f64>::eye(d) * 3.0);
        let q = retract_orthogonal(nudged.view()).unwrap();
        prop_assert!(q.defect() < 1e-10);
    }

    #[test]
    fn sampled_pairs_are_distinct_languages(langs in 2usize..9, seed in any::<u64>()) {
        let w = default_weights(langs).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (i, j) in sample_pairs(w.view(), 50, &mut rng).unwrap() {
            prop_assert!(i < j && j < langs);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn gromov_wasserstein_ignores_rotations(seed in any::<u64>(), n in 6usize..20) {
        let x = unit_rows(seed, n, 4);
        let y = unit_rows(seed.wrapping_add(1), n, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = random_orthogonal(&mut rng, 4);
        let params = GwParams::default();
        let base = gromov_wasserstein(x.view(), y.view(), params).unwrap().plan;
        let turned = gromov_wasserstein(r.apply(x.view()).view(), y.view(), params).unwrap().plan;
        let diff = (&base.matrix() - &turned.matrix()).iter().map(|v| v.abs()).fold(0.0, f64::max);
        prop_assert!(diff < 1e-8);
    }
}
