//! Synthetic embedding families with known ground truth.
//!
//! Every language is a noisy, row-permuted, rotated copy of one shared latent
//! point cloud, so the correct common space and all translations are known.

use nalgebra::DMatrix;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::embeddings::{normalize, EmbeddingSet, Lexicon};
use crate::error::{Error, Result};
use crate::objectives::OrthogonalMap;

#[derive(Debug, Clone)]
pub struct SyntheticFamily {
    pub sets: Vec<EmbeddingSet>,
    pub true_maps: Vec<OrthogonalMap>,
    /// Row `k` of `sets[i]` is a copy of latent row `true_perms[i][k]`.
    pub true_perms: Vec<Vec<usize>>,
    pub latent: Array2<f64>,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of `R`'s diagonal folded into `Q`.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> OrthogonalMap {
    let g = DMatrix::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let (mut q, r) = qr.unpack();
    for k in 0..d {
        if r[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
        }
    }
    OrthogonalMap::new(Array2::from_shape_fn((d, d), |(i, j)| q[(i, j)])).expect("QR factor is orthogonal")
}

pub fn language_tag(i: usize) -> String {
    format!("l{i}")
}

pub fn word_token(latent_row: usize) -> String {
    format!("w{latent_row}")
}

/// Builds `num_langs` languages over an `n×d` latent cloud; language 0 is the pivot.
pub fn generate_family(num_langs: usize, n: usize, d: usize, sigma: f64, seed: u64) -> Result<SyntheticFamily> {
    if num_langs == 0 {
        return Err(Error::InvalidArgument("a family needs at least one language".into()));
    }
    if d < 2 || n < d {
        return Err(Error::InvalidArgument(format!("need n >= d >= 2, got n={n}, d={d}")));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma must be >= 0, got {sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut latent: Array2<f64> = Array2::from_shape_fn((n, d), |_| StandardNormal.sample(&mut rng));
    for mut row in latent.rows_mut() {
        let norm = row.dot(&row).sqrt();
        row /= norm;
    }

    let mut sets = Vec::with_capacity(num_langs);
    let mut true_maps = Vec::with_capacity(num_langs);
    let mut true_perms = Vec::with_capacity(num_langs);
    for lang in 0..num_langs {
        let (map, perm) = if lang == 0 {
            (OrthogonalMap::identity(d), (0..n).collect::<Vec<_>>())
        } else {
            let map = random_orthogonal(&mut rng, d);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            (map, perm)
        };
        let noise: Array2<f64> = Array2::from_shape_fn((n, d), |_| StandardNormal.sample(&mut rng));
        let noisy = &latent + &(noise * sigma);
        let permuted = Array2::from_shape_fn((n, d), |(k, c)| noisy[[perm[k], c]]);
        let rotated = map.apply(permuted.view());
        let words = perm.iter().map(|&r| word_token(r)).collect();
        let set = normalize(&EmbeddingSet::new(language_tag(lang), words, rotated)?)?;
        sets.push(set);
        true_maps.push(map);
        true_perms.push(perm);
    }
    Ok(SyntheticFamily {
        sets,
        true_maps,
        true_perms,
        latent,
        noise_sigma: sigma,
        seed,
    })
}

impl SyntheticFamily {
    pub fn num_langs(&self) -> usize {
        self.sets.len()
    }

    /// For each row of language `i`, the row of language `j` holding the same latent point.
    pub fn correspondence(&self, i: usize, j: usize) -> Vec<usize> {
        let mut inverse_j = vec![0usize; self.true_perms[j].len()];
        for (row, &latent) in self.true_perms[j].iter().enumerate() {
            inverse_j[latent] = row;
        }
        self.true_perms[i].iter().map(|&latent| inverse_j[latent]).collect()
    }

    /// The map sending language `i` into the pivot frame, i.e. `true_maps[i]ᵀ`.
    pub fn map_to_pivot(&self, i: usize) -> OrthogonalMap {
        self.true_maps[i].transpose()
    }
}

/// Translation pairs between languages `i` and `j` induced by the shared latent rows.
pub fn ground_truth_lexicon(family: &SyntheticFamily, i: usize, j: usize) -> Result<Lexicon> {
    let count = family.num_langs();
    if i >= count || j >= count {
        return Err(Error::InvalidArgument(format!(
            "language index out of range for a family of {count}"
        )));
    }
    let target_words = family.sets[j].words();
    let pairs = family
        .correspondence(i, j)
        .into_iter()
        .zip(family.sets[i].words())
        .map(|(row_j, w)| (w.clone(), target_words[row_j].clone()));
    Ok(Lexicon::new(family.sets[i].lang(), family.sets[j].lang(), pairs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::compose_lexicons;
    use crate::linalg::{argmax, row_norms};
    use crate::objectives::procrustes;

    #[test]
    fn rows_are_unit_norm_and_words_track_latent_rows() {
        let fam = generate_family(3, 50, 4, 0.1, 7).unwrap();
        for (set, perm) in fam.sets.iter().zip(&fam.true_perms) {
            assert!(row_norms(set.matrix()).iter().all(|n| (n - 1.0).abs() < 1e-12));
            for (k, w) in set.words().iter().enumerate() {
                assert_eq!(w, &word_token(perm[k]));
            }
        }
        assert_eq!(fam.sets[0].lang(), "l0");
        assert_eq!(fam.true_maps[0], OrthogonalMap::identity(4));
    }

    #[test]
    fn noiseless_relative_map_is_recovered() {
        let fam = generate_family(2, 200, 10, 0.0, 3).unwrap();
        let corr = fam.correspondence(1, 0);
        let x = fam.sets[1].matrix();
        let y = fam.sets[0].matrix().select(ndarray::Axis(0), &corr);
        let q = procrustes(x, y.view()).unwrap();
        let truth = fam.map_to_pivot(1);
        let err: f64 = (&q.matrix() - &truth.matrix()).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn same_seed_same_family() {
        let a = generate_family(3, 60, 5, 0.05, 11).unwrap();
        let b = generate_family(3, 60, 5, 0.05, 11).unwrap();
        for (x, y) in a.sets.iter().zip(&b.sets) {
            assert_eq!(x, y);
        }
        assert_eq!(a.true_perms, b.true_perms);
        let c = generate_family(3, 60, 5, 0.05, 12).unwrap();
        assert_ne!(a.sets[1], c.sets[1]);
    }

    #[test]
    fn noisy_family_stays_recoverable() {
        let fam = generate_family(2, 2000, 50, 0.05, 5).unwrap();
        let mapped = fam.map_to_pivot(1).apply(fam.sets[1].matrix());
        let scores = mapped.dot(&fam.sets[0].matrix().t());
        let corr = fam.correspondence(1, 0);
        let hits = scores
            .rows()
            .into_iter()
            .zip(&corr)
            .filter(|(row, &truth)| argmax(row.iter().copied()) == truth)
            .count();
        assert!(hits as f64 / 2000.0 >= 0.99, "{hits}");
    }

    #[test]
    fn lexicon_examples() {
        let fam = generate_family(3, 30, 3, 0.0, 1).unwrap();
        let same = ground_truth_lexicon(&fam, 0, 0).unwrap();
        assert_eq!(same.len(), 30);
        assert!((0..30).all(|r| same.contains(&word_token(r), &word_token(r))));

        let direct = ground_truth_lexicon(&fam, 1, 2).unwrap();
        assert_eq!(direct.len(), 30);
        let via = compose_lexicons(
            &ground_truth_lexicon(&fam, 1, 0).unwrap(),
            &ground_truth_lexicon(&fam, 0, 2).unwrap(),
        )
        .unwrap();
        assert_eq!(via, direct);
        assert!(ground_truth_lexicon(&fam, 0, 3).is_err());
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(generate_family(2, 3, 5, 0.0, 0).is_err());
        assert!(generate_family(2, 10, 1, 0.0, 0).is_err());
        assert!(generate_family(2, 10, 3, -1.0, 0).is_err());
    }
}
