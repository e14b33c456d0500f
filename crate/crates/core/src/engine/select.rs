//! Seeding the inner search and picking which of its proposals to verify.

use std::collections::HashSet;

use rand::Rng;

use super::archive::{Archive, ParetoFront};
use crate::moea::{crowding_distance, mutate, NsgaResult, ObjectivePoint};
use crate::space::{BitConfig, SearchSpace};

/// Initial population for one inner run: the current front, then alternating
/// mutated copies of front members and uniform random configs. A front
/// larger than `size` is thinned by crowding distance.
pub fn seed_population<R: Rng + ?Sized>(
    front: &ParetoFront,
    space: &SearchSpace,
    size: usize,
    rng: &mut R,
) -> Vec<BitConfig> {
    let members = front.configs();
    if members.len() >= size {
        let distance = crowding_distance(&front.points());
        let mut order: Vec<usize> = (0..members.len()).collect();
        order.sort_by(|&a, &b| distance[b].total_cmp(&distance[a]).then(a.cmp(&b)));
        order.truncate(size);
        order.sort_unstable();
        return order.into_iter().map(|i| members[i].clone()).collect();
    }
    let mut population = members.clone();
    let mut slot = 0usize;
    while population.len() < size {
        let next = if slot.is_multiple_of(2) && !members.is_empty() {
            mutate(&members[(slot / 2) % members.len()], space, rng, 1.0)
        } else {
            space.random_config(rng)
        };
        population.push(next);
        slot += 1;
    }
    population
}

/// Up to `k` configs from the best `pool` members of the final population
/// that are not yet archived. When more remain, a farthest-first traversal
/// over the normalized predicted objectives keeps them spread along the
/// front. When fewer remain, the rest of the population tops them up in
/// order. Returned in population order.
pub fn select_candidates(
    result: &NsgaResult,
    archive: &Archive,
    k: usize,
    pool: usize,
) -> Vec<BitConfig> {
    let mut seen = HashSet::new();
    let survivors: Vec<(&BitConfig, ObjectivePoint)> = result
        .population
        .iter()
        .take(pool)
        .filter(|ind| !archive.contains(&ind.config) && seen.insert(&ind.config))
        .map(|ind| (&ind.config, ind.objectives))
        .collect();
    if survivors.len() <= k {
        let mut out: Vec<BitConfig> = survivors.into_iter().map(|(c, _)| c.clone()).collect();
        for ind in result.population.iter().skip(pool) {
            if out.len() == k {
                break;
            }
            if !archive.contains(&ind.config) && seen.insert(&ind.config) {
                out.push(ind.config.clone());
            }
        }
        return out;
    }
    let picked = farthest_first(
        &survivors.iter().map(|(_, p)| *p).collect::<Vec<_>>(),
        k,
    );
    picked.into_iter().map(|i| survivors[i].0.clone()).collect()
}

/// Greedy max-min subset of size `k`, starting from index 0. Ties go to the
/// lower index. Returned ascending.
pub(crate) fn farthest_first(points: &[ObjectivePoint], k: usize) -> Vec<usize> {
    if points.is_empty() || k == 0 {
        return Vec::new();
    }
    let norm = |f: fn(&ObjectivePoint) -> f64| {
        let lo = points.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        points
            .iter()
            .map(|p| if span > 0.0 { (f(p) - lo) / span } else { 0.0 })
            .collect::<Vec<f64>>()
    };
    let s = norm(|p| p.score);
    let b = norm(|p| p.bits);
    let dist = |i: usize, j: usize| ((s[i] - s[j]).powi(2) + (b[i] - b[j]).powi(2)).sqrt();

    let mut chosen = vec![0usize];
    let mut taken = vec![false; points.len()];
    taken[0] = true;
    let mut nearest: Vec<f64> = (0..points.len()).map(|i| dist(i, 0)).collect();
    while chosen.len() < k.min(points.len()) {
        let mut best = None;
        for i in 0..points.len() {
            if taken[i] {
                continue;
            }
            match best {
                Some(j) if nearest[i] <= nearest[j] => {}
                _ => best = Some(i),
            }
        }
        let next = best.expect("fewer chosen than points");
        taken[next] = true;
        chosen.push(next);
        for i in 0..points.len() {
            nearest[i] = nearest[i].min(dist(i, next));
        }
    }
    chosen.sort_unstable();
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moea::Individual;
    use crate::space::LayerSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn space() -> SearchSpace {
        SearchSpace::from_layers(
            (0..6)
                .map(|i| LayerSpec::new(format!("l{i}"), 1, vec![2, 3, 4]))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn farthest_first_spreads() {
        let pts: Vec<ObjectivePoint> = [(0.0, 4.0), (0.1, 3.9), (0.5, 3.0), (1.0, 2.0), (0.95, 2.05)]
            .iter()
            .map(|&(s, b)| ObjectivePoint::new(s, b))
            .collect();
        assert_eq!(farthest_first(&pts, 2), vec![0, 3]);
        assert_eq!(farthest_first(&pts, 3), vec![0, 2, 3]);
        assert_eq!(farthest_first(&pts, 10), vec![0, 1, 2, 3, 4]);
        assert!(farthest_first(&pts, 0).is_empty());
    }

    #[test]
    fn seed_population_contains_front_and_has_size() {
        let s = space();
        let mut archive = Archive::new(s.clone());
        archive.insert(s.max_config(), 0.0, 0).unwrap();
        archive.insert(s.min_config(), 1.0, 0).unwrap();
        let front = super::super::archive::pareto_front(&archive).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pop = seed_population(&front, &s, 10, &mut rng);
        assert_eq!(pop.len(), 10);
        assert_eq!(&pop[..2], &[s.min_config(), s.max_config()]);
        for c in &pop {
            s.validate(c).unwrap();
        }
        // Slot 0 is a forced mutation of the first front member.
        assert_ne!(pop[2], s.min_config());

        let small = seed_population(&front, &s, 1, &mut rng);
        assert_eq!(small.len(), 1);
    }

    #[test]
    fn candidates_skip_archived_and_duplicates() {
        let s = space();
        let mut archive = Archive::new(s.clone());
        archive.insert(s.max_config(), 0.0, 0).unwrap();
        let c = |bits: Vec<u8>| s.config(bits).unwrap();
        let ind = |cfg: BitConfig, sc: f64| Individual {
            objectives: ObjectivePoint::new(sc, s.effective_bits(&cfg)),
            config: cfg,
        };
        let population = vec![
            ind(s.max_config(), 0.0),
            ind(c(vec![2, 4, 4, 4, 4, 4]), 0.1),
            ind(c(vec![2, 4, 4, 4, 4, 4]), 0.1),
            ind(c(vec![2, 2, 4, 4, 4, 4]), 0.2),
            ind(s.min_config(), 1.0),
        ];
        let result = NsgaResult {
            rank: vec![0; 5],
            crowding: vec![0.0; 5],
            fronts: vec![(0..5).collect()],
            population,
            stats: Default::default(),
        };
        let all = select_candidates(&result, &archive, 10, 100);
        assert_eq!(all.len(), 3);
        assert!(!all.contains(&s.max_config()));
        let two = select_candidates(&result, &archive, 2, 100);
        assert_eq!(two, vec![c(vec![2, 4, 4, 4, 4, 4]), s.min_config()]);
        let pooled = select_candidates(&result, &archive, 1, 2);
        assert_eq!(pooled, vec![c(vec![2, 4, 4, 4, 4, 4])]);
        let topped_up = select_candidates(&result, &archive, 2, 2);
        assert_eq!(topped_up, vec![c(vec![2, 4, 4, 4, 4, 4]), c(vec![2, 2, 4, 4, 4, 4])]);
    }
}
