//! Variation operators over [`BitConfig`]s. Frozen genes are never touched.

use rand::Rng;

use crate::error::{Error, Result};
use crate::space::{BitConfig, SearchSpace};

/// With probability `prob`, swaps each free gene between the parents with
/// probability one half; otherwise returns copies of the parents.
pub fn crossover<R: Rng + ?Sized>(
    a: &BitConfig,
    b: &BitConfig,
    space: &SearchSpace,
    rng: &mut R,
    prob: f64,
) -> Result<(BitConfig, BitConfig)> {
    if a.len() != space.layer_count() || b.len() != space.layer_count() {
        return Err(Error::InvalidConfig(format!(
            "crossover parents have {} and {} layers, space has {}",
            a.len(),
            b.len(),
            space.layer_count()
        )));
    }
    let mut left = a.clone();
    let mut right = b.clone();
    if rng.random::<f64>() < prob {
        for &i in space.free_layers() {
            if rng.random::<bool>() {
                let (x, y) = (left.bits()[i], right.bits()[i]);
                left.set(i, y);
                right.set(i, x);
            }
        }
    }
    Ok((left, right))
}

/// With probability `prob`, resamples each free gene with probability
/// `1 / free_layers` to a different allowed value.
pub fn mutate<R: Rng + ?Sized>(
    config: &BitConfig,
    space: &SearchSpace,
    rng: &mut R,
    prob: f64,
) -> BitConfig {
    let mut child = config.clone();
    if rng.random::<f64>() >= prob {
        return child;
    }
    let free = space.free_layers();
    let gene_rate = 1.0 / free.len() as f64;
    for &i in free {
        if rng.random::<f64>() >= gene_rate {
            continue;
        }
        let choices = &space.layers()[i].choices;
        if choices.len() < 2 {
            continue;
        }
        let current = child.bits()[i];
        // Uniform over the other values: draw from len-1 slots, skip current.
        let mut pick = rng.random_range(0..choices.len() - 1);
        if choices[pick] == current {
            pick = choices.len() - 1;
        }
        child.set(i, choices[pick]);
    }
    child
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::LayerSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn space(n: usize, choices: &[u8]) -> SearchSpace {
        SearchSpace::from_layers(
            (0..n)
                .map(|i| LayerSpec::new(format!("l{i}"), 1, choices.to_vec()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn identical_parents_are_a_fixed_point() {
        let s = space(6, &[2, 3, 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = s.random_config(&mut rng);
        for _ in 0..50 {
            let (x, y) = crossover(&a, &a, &s, &mut rng, 1.0).unwrap();
            assert_eq!(x, a);
            assert_eq!(y, a);
        }
    }

    #[test]
    fn zero_probabilities_are_identity() {
        let s = space(6, &[2, 3, 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = s.min_config();
        let b = s.max_config();
        let (x, y) = crossover(&a, &b, &s, &mut rng, 0.0).unwrap();
        assert_eq!((x, y), (a.clone(), b));
        for _ in 0..100 {
            assert_eq!(mutate(&a, &s, &mut rng, 0.0), a);
        }
    }

    #[test]
    fn crossover_swap_rate_is_one_half() {
        // 1000 trials on 10 genes; per-gene swap count within 3 sigma of 500.
        let s = space(10, &[2, 4]);
        let a = s.min_config();
        let b = s.max_config();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let trials = 1000;
        let mut swaps = [0usize; 10];
        for _ in 0..trials {
            let (x, _) = crossover(&a, &b, &s, &mut rng, 1.0).unwrap();
            for (g, &bit) in x.bits().iter().enumerate() {
                if bit == 4 {
                    swaps[g] += 1;
                }
            }
        }
        let sigma = (trials as f64 * 0.25).sqrt();
        for c in swaps {
            assert!((c as f64 - 500.0).abs() <= 3.0 * sigma, "{swaps:?}");
        }
    }

    #[test]
    fn single_binary_gene_always_flips() {
        let s = space(1, &[2, 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut c = s.min_config();
        for _ in 0..100 {
            let next = mutate(&c, &s, &mut rng, 1.0);
            assert_ne!(next, c);
            c = next;
        }
    }

    #[test]
    fn mean_changed_genes_is_one() {
        // 10^4 forced mutations on 20 genes: changed-gene count ~ Binomial(20, 1/20).
        let s = space(20, &[2, 3, 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let trials = 10_000;
        let base = s.random_config(&mut rng);
        let total: usize = (0..trials)
            .map(|_| {
                let m = mutate(&base, &s, &mut rng, 1.0);
                m.bits().iter().zip(base.bits()).filter(|(a, b)| a != b).count()
            })
            .sum();
        let mean = total as f64 / trials as f64;
        let var = 20.0 * 0.05 * 0.95;
        let sigma_mean = (var / trials as f64).sqrt();
        assert!((mean - 1.0).abs() <= 3.0 * sigma_mean, "mean = {mean}");
    }

    #[test]
    fn space_mismatch_rejected() {
        let s = space(3, &[2, 4]);
        let other = space(4, &[2, 4]).min_config();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(crossover(&s.min_config(), &other, &s, &mut rng, 1.0).is_err());
    }
}
