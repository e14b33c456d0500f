use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::operators::{crossover, mutate};
use super::sort::{crowding_distance, non_dominated_sort};
use super::{Individual, ObjectivePoint};
use crate::error::{Error, Result};
use crate::space::{BitConfig, SearchSpace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NsgaParams {
    pub population: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    pub seed: u64,
}

impl Default for NsgaParams {
    fn default() -> Self {
        Self {
            population: 200,
            generations: 20,
            crossover_prob: 0.9,
            mutation_prob: 0.1,
            seed: 0,
        }
    }
}

impl NsgaParams {
    pub fn validate(&self) -> Result<()> {
        if self.population < 4 || !self.population.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "population must be even and at least 4, got {}",
                self.population
            )));
        }
        for (name, p) in [
            ("crossover_prob", self.crossover_prob),
            ("mutation_prob", self.mutation_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must lie in [0, 1], got {p}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NsgaStats {
    /// Objective values requested for the seed population.
    pub seed_requests: usize,
    /// Objective values requested for offspring, `population` per generation.
    pub offspring_requests: usize,
    /// Configs actually passed to the objective after memoization.
    pub objective_calls: usize,
}

impl NsgaStats {
    pub fn requests(&self) -> usize {
        self.seed_requests + self.offspring_requests
    }
}

#[derive(Debug, Clone)]
pub struct NsgaResult {
    /// Final population ordered by (rank, crowding descending, survival order).
    pub population: Vec<Individual>,
    pub rank: Vec<usize>,
    pub crowding: Vec<f64>,
    /// Indices into `population`.
    pub fronts: Vec<Vec<usize>>,
    pub stats: NsgaStats,
}

/// Objective values with a per-run cache, so each distinct config reaches
/// the objective at most once.
struct Memo<F> {
    objective: F,
    cache: HashMap<BitConfig, ObjectivePoint>,
    calls: usize,
}

impl<F> Memo<F>
where
    F: FnMut(&[BitConfig]) -> Result<Vec<ObjectivePoint>>,
{
    fn evaluate(&mut self, configs: &[BitConfig]) -> Result<Vec<ObjectivePoint>> {
        let mut missing: Vec<BitConfig> = Vec::new();
        for c in configs {
            if !self.cache.contains_key(c) && !missing.contains(c) {
                missing.push(c.clone());
            }
        }
        if !missing.is_empty() {
            let values = (self.objective)(&missing)?;
            if values.len() != missing.len() {
                return Err(Error::LengthMismatch {
                    expected: missing.len(),
                    found: values.len(),
                });
            }
            if values.iter().any(|p| !p.is_finite()) {
                return Err(Error::InvalidParameter(
                    "objective returned a non-finite value".into(),
                ));
            }
            self.calls += missing.len();
            self.cache.extend(missing.into_iter().zip(values));
        }
        Ok(configs.iter().map(|c| self.cache[c]).collect())
    }
}

fn assign_fitness(points: &[ObjectivePoint]) -> (Vec<usize>, Vec<f64>, Vec<Vec<usize>>) {
    let fronts = non_dominated_sort(points);
    let mut rank = vec![0; points.len()];
    let mut crowding = vec![0.0; points.len()];
    for (r, front) in fronts.iter().enumerate() {
        let members: Vec<ObjectivePoint> = front.iter().map(|&i| points[i]).collect();
        for (&i, d) in front.iter().zip(crowding_distance(&members)) {
            rank[i] = r;
            crowding[i] = d;
        }
    }
    (rank, crowding, fronts)
}

/// Crowded comparison: lower rank, then larger crowding, then lower index.
fn better(a: usize, b: usize, rank: &[usize], crowding: &[f64]) -> bool {
    match rank[a].cmp(&rank[b]) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => match crowding[a].total_cmp(&crowding[b]) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => a < b,
        },
    }
}

fn tournament<R: Rng>(rng: &mut R, rank: &[usize], crowding: &[f64]) -> usize {
    let n = rank.len();
    let a = rng.random_range(0..n);
    let mut b = rng.random_range(0..n - 1);
    if b >= a {
        b += 1;
    }
    if better(a, b, rank, crowding) {
        a
    } else {
        b
    }
}

/// (μ+λ) survival: whole fronts while they fit, then the most crowded-apart
/// members of the first front that does not.
fn environmental_selection(points: &[ObjectivePoint], size: usize) -> Vec<usize> {
    let mut chosen = Vec::with_capacity(size);
    for front in non_dominated_sort(points) {
        if chosen.len() + front.len() <= size {
            chosen.extend(front);
            if chosen.len() == size {
                break;
            }
            continue;
        }
        let members: Vec<ObjectivePoint> = front.iter().map(|&i| points[i]).collect();
        let distance = crowding_distance(&members);
        let mut order: Vec<usize> = (0..front.len()).collect();
        order.sort_by(|&a, &b| distance[b].total_cmp(&distance[a]).then(a.cmp(&b)));
        let room = size - chosen.len();
        chosen.extend(order.into_iter().take(room).map(|k| front[k]));
        break;
    }
    chosen
}

/// Runs NSGA-II from `seed_population` (exactly `params.population`
/// configs). The objective receives batches of distinct, not-yet-seen
/// configs and must return `(score, bits)` for each.
pub fn nsga2_run<F>(
    space: &SearchSpace,
    seed_population: Vec<BitConfig>,
    objective: F,
    params: &NsgaParams,
) -> Result<NsgaResult>
where
    F: FnMut(&[BitConfig]) -> Result<Vec<ObjectivePoint>>,
{
    params.validate()?;
    if seed_population.len() != params.population {
        return Err(Error::InvalidParameter(format!(
            "seed population has {} members, expected {}",
            seed_population.len(),
            params.population
        )));
    }
    for c in &seed_population {
        space.validate(c)?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut memo = Memo {
        objective,
        cache: HashMap::new(),
        calls: 0,
    };
    let mut stats = NsgaStats {
        seed_requests: seed_population.len(),
        ..NsgaStats::default()
    };

    let mut configs = seed_population;
    let mut points = memo.evaluate(&configs)?;

    for _ in 0..params.generations {
        let (rank, crowding, _) = assign_fitness(&points);
        let mut offspring = Vec::with_capacity(params.population);
        while offspring.len() < params.population {
            let p1 = tournament(&mut rng, &rank, &crowding);
            let p2 = tournament(&mut rng, &rank, &crowding);
            let (c1, c2) = crossover(
                &configs[p1],
                &configs[p2],
                space,
                &mut rng,
                params.crossover_prob,
            )?;
            offspring.push(mutate(&c1, space, &mut rng, params.mutation_prob));
            offspring.push(mutate(&c2, space, &mut rng, params.mutation_prob));
        }
        let child_points = memo.evaluate(&offspring)?;
        stats.offspring_requests += offspring.len();

        configs.extend(offspring);
        points.extend(child_points);
        let survivors = environmental_selection(&points, params.population);
        configs = survivors.iter().map(|&i| configs[i].clone()).collect();
        points = survivors.iter().map(|&i| points[i]).collect();
    }

    let (rank, crowding, _) = assign_fitness(&points);
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        rank[a]
            .cmp(&rank[b])
            .then(crowding[b].total_cmp(&crowding[a]))
            .then(a.cmp(&b))
    });
    let population: Vec<Individual> = order
        .iter()
        .map(|&i| Individual {
            config: configs[i].clone(),
            objectives: points[i],
        })
        .collect();
    let rank: Vec<usize> = order.iter().map(|&i| rank[i]).collect();
    let crowding: Vec<f64> = order.iter().map(|&i| crowding[i]).collect();
    let mut fronts: Vec<Vec<usize>> = Vec::new();
    for (i, &r) in rank.iter().enumerate() {
        if r == fronts.len() {
            fronts.push(Vec::new());
        }
        fronts[r].push(i);
    }
    stats.objective_calls = memo.calls;
    Ok(NsgaResult {
        population,
        rank,
        crowding,
        fronts,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::LayerSpec;

    fn space(n: usize) -> SearchSpace {
        SearchSpace::from_layers(
            (0..n)
                .map(|i| LayerSpec::new(format!("l{i}"), 1 + i as u64, vec![2, 3, 4]))
                .collect(),
        )
        .unwrap()
    }

    fn objective(space: &SearchSpace) -> impl FnMut(&[BitConfig]) -> Result<Vec<ObjectivePoint>> + '_ {
        move |configs| {
            Ok(configs
                .iter()
                .map(|c| {
                    let score: f64 = c
                        .bits()
                        .iter()
                        .enumerate()
                        .map(|(i, &b)| (i + 1) as f64 / f64::from(b * b))
                        .sum();
                    ObjectivePoint::new(score, space.effective_bits(c))
                })
                .collect())
        }
    }

    fn seeds(space: &SearchSpace, n: usize, seed: u64) -> Vec<BitConfig> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| space.random_config(&mut rng)).collect()
    }

    #[test]
    fn zero_generations_returns_sorted_seeds() {
        let s = space(5);
        let params = NsgaParams {
            population: 8,
            generations: 0,
            ..NsgaParams::default()
        };
        let seed = seeds(&s, 8, 1);
        let out = nsga2_run(&s, seed.clone(), objective(&s), &params).unwrap();
        assert_eq!(out.population.len(), 8);
        assert!(out.rank.windows(2).all(|w| w[0] <= w[1]));
        let mut got: Vec<_> = out.population.iter().map(|i| i.config.clone()).collect();
        let mut want = seed;
        got.sort();
        want.sort();
        assert_eq!(got, want);
        assert_eq!(out.stats.offspring_requests, 0);
    }

    #[test]
    fn request_accounting() {
        let s = space(6);
        let params = NsgaParams {
            population: 20,
            generations: 7,
            ..NsgaParams::default()
        };
        let out = nsga2_run(&s, seeds(&s, 20, 2), objective(&s), &params).unwrap();
        assert_eq!(out.stats.seed_requests, 20);
        assert_eq!(out.stats.offspring_requests, 140);
        assert!(out.stats.objective_calls <= 20 * 8);
    }

    #[test]
    fn deterministic_under_seed() {
        let s = space(6);
        let params = NsgaParams {
            population: 16,
            generations: 5,
            seed: 11,
            ..NsgaParams::default()
        };
        let a = nsga2_run(&s, seeds(&s, 16, 3), objective(&s), &params).unwrap();
        let b = nsga2_run(&s, seeds(&s, 16, 3), objective(&s), &params).unwrap();
        let cfgs = |r: &NsgaResult| r.population.iter().map(|i| i.config.clone()).collect::<Vec<_>>();
        assert_eq!(cfgs(&a), cfgs(&b));
    }

    #[test]
    fn rejects_bad_params() {
        let s = space(3);
        let odd = NsgaParams {
            population: 5,
            ..NsgaParams::default()
        };
        assert!(nsga2_run(&s, seeds(&s, 5, 0), objective(&s), &odd).is_err());
        let ok = NsgaParams {
            population: 4,
            ..NsgaParams::default()
        };
        assert!(nsga2_run(&s, seeds(&s, 3, 0), objective(&s), &ok).is_err());
    }

    #[test]
    fn selection_keeps_first_fronts() {
        let p: Vec<ObjectivePoint> = [(1.0, 4.0), (2.0, 3.0), (3.0, 2.0), (2.0, 5.0), (5.0, 5.0)]
            .iter()
            .map(|&(s, b)| ObjectivePoint::new(s, b))
            .collect();
        assert_eq!(environmental_selection(&p, 4), vec![0, 1, 2, 3]);
        // Front 0 truncated to two: both boundary points survive.
        assert_eq!(environmental_selection(&p, 2), vec![0, 2]);
    }
}
