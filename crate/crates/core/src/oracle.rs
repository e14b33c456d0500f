//! Exhaustive ground truth for small spaces, and hypervolume.

use std::collections::BTreeSet;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::engine::{ArchiveEntry, ParetoFront};
use crate::error::{Error, Result};
use crate::evaluators::{check_scores, Evaluator};
use crate::moea::ObjectivePoint;
use crate::space::{BitConfig, SearchSpace};

pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

const BATCH: usize = 4096;

/// Exact front of a space found by evaluating every configuration.
#[derive(Debug, Clone)]
pub struct EnumeratedFront {
    pub front: ParetoFront,
    pub evaluated: usize,
}

/// Scores every configuration (frozen layers held fixed) and keeps the
/// non-dominated ones. Configurations are visited in lexicographic order of
/// the free layers' choice indices. Refuses spaces larger than `cap`.
pub fn enumerate_front<E: Evaluator + ?Sized>(
    space: &SearchSpace,
    evaluator: &mut E,
    cap: u64,
) -> Result<EnumeratedFront> {
    let size = space.size();
    if size > BigUint::from(cap) {
        return Err(Error::SpaceTooLarge {
            size: size.to_string(),
            cap,
        });
    }
    let free = space.free_layers();
    let mut digits = vec![0usize; free.len()];
    let mut current = space.min_config();
    let mut front: Vec<ArchiveEntry> = Vec::new();
    let mut evaluated = 0;
    let mut done = false;
    while !done {
        let mut batch = Vec::with_capacity(BATCH);
        while batch.len() < BATCH && !done {
            batch.push(current.clone());
            // Odometer step, last free layer fastest.
            done = true;
            for k in (0..free.len()).rev() {
                let layer = &space.layers()[free[k]];
                digits[k] += 1;
                if digits[k] < layer.choices.len() {
                    current.set(free[k], layer.choices[digits[k]]);
                    done = false;
                    break;
                }
                digits[k] = 0;
                current.set(free[k], layer.choices[0]);
            }
        }
        let scores = evaluator
            .evaluate_batch(&batch)
            .map_err(|e| Error::eval("enumeration", e))?;
        check_scores(batch.len(), &scores).map_err(|e| Error::eval("enumeration", e))?;
        evaluated += batch.len();
        front.extend(batch.into_iter().zip(scores).map(|(config, score)| ArchiveEntry {
            bits: space.effective_bits(&config),
            config,
            score,
            iteration: 0,
        }));
        front = ParetoFront::from_entries(&front).entries().to_vec();
    }
    Ok(EnumeratedFront {
        front: ParetoFront::from_entries(&front),
        evaluated,
    })
}

/// Area dominated by `points` and bounded by `reference`, both objectives
/// minimized. Every point must be at least as good as the reference in both
/// objectives; points on its boundary contribute nothing.
pub fn hypervolume(points: &[ObjectivePoint], reference: ObjectivePoint) -> Result<f64> {
    if !reference.is_finite() {
        return Err(Error::Hypervolume("reference point is not finite".into()));
    }
    for p in points {
        if !p.is_finite() {
            return Err(Error::Hypervolume("point is not finite".into()));
        }
        if p.score > reference.score || p.bits > reference.bits {
            return Err(Error::Hypervolume(format!(
                "point ({}, {}) does not dominate the reference ({}, {})",
                p.score, p.bits, reference.score, reference.bits
            )));
        }
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.bits.total_cmp(&b.bits).then(a.score.total_cmp(&b.score)));
    // Sweep in bits; each step adds a slab whose height is the best score so far.
    let mut area = 0.0;
    let mut best = reference.score;
    let mut k = 0;
    while k < sorted.len() {
        let start = sorted[k].bits;
        while k < sorted.len() && sorted[k].bits == start {
            best = best.min(sorted[k].score);
            k += 1;
        }
        let end = sorted.get(k).map_or(reference.bits, |p| p.bits);
        area += (end - start) * (reference.score - best);
    }
    Ok(area)
}

/// A reference point beyond every given point: 1.1 × the largest score and
/// the space's all-max effective bits plus 0.1.
pub fn default_reference(space: &SearchSpace, point_sets: &[&[ObjectivePoint]]) -> ObjectivePoint {
    let max_score = point_sets
        .iter()
        .flat_map(|s| s.iter())
        .map(|p| p.score)
        .fold(0.0f64, f64::max);
    let score = if max_score > 0.0 { 1.1 * max_score } else { 1.0 };
    ObjectivePoint::new(score, space.effective_bits_range().1 + 0.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontComparison {
    /// Hypervolume of the found front over that of the true front; 1 when
    /// both are zero.
    pub hypervolume_ratio: f64,
    pub found_hypervolume: f64,
    pub true_hypervolume: f64,
    /// True front points absent from the found front.
    pub missing_points: Vec<ObjectivePoint>,
    /// Found front points absent from the true front.
    pub spurious_points: Vec<ObjectivePoint>,
}

fn point_key(p: &ObjectivePoint) -> (u64, u64) {
    (p.score.to_bits(), p.bits.to_bits())
}

/// Points of `a` whose exact objective values do not occur in `b`,
/// deduplicated, in `a`'s order.
fn point_difference(a: &[ObjectivePoint], b: &[ObjectivePoint]) -> Vec<ObjectivePoint> {
    let other: BTreeSet<(u64, u64)> = b.iter().map(point_key).collect();
    let mut seen = BTreeSet::new();
    a.iter()
        .filter(|p| !other.contains(&point_key(p)) && seen.insert(point_key(p)))
        .copied()
        .collect()
}

pub fn compare_fronts(
    found: &[ObjectivePoint],
    truth: &[ObjectivePoint],
    reference: ObjectivePoint,
) -> Result<FrontComparison> {
    let found_hv = hypervolume(found, reference)?;
    let true_hv = hypervolume(truth, reference)?;
    let ratio = if true_hv > 0.0 {
        found_hv / true_hv
    } else if found_hv == 0.0 {
        1.0
    } else {
        f64::INFINITY
    };
    Ok(FrontComparison {
        hypervolume_ratio: ratio,
        found_hypervolume: found_hv,
        true_hypervolume: true_hv,
        missing_points: point_difference(truth, found),
        spurious_points: point_difference(found, truth),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coincidence {
    pub coincident: bool,
    /// Front members under the first evaluator only, sorted.
    pub only_first: Vec<BitConfig>,
    /// Front members under the second evaluator only, sorted.
    pub only_second: Vec<BitConfig>,
    pub first_front_size: usize,
    pub second_front_size: usize,
}

/// Enumerates the exact front under each evaluator and compares the sets of
/// configurations on them.
pub fn verify_front_coincidence<E1, E2>(
    space: &SearchSpace,
    q1: &mut E1,
    q2: &mut E2,
    cap: u64,
) -> Result<Coincidence>
where
    E1: Evaluator + ?Sized,
    E2: Evaluator + ?Sized,
{
    let a: BTreeSet<BitConfig> = enumerate_front(space, q1, cap)?.front.configs().into_iter().collect();
    let b: BTreeSet<BitConfig> = enumerate_front(space, q2, cap)?.front.configs().into_iter().collect();
    let only_first: Vec<BitConfig> = a.difference(&b).cloned().collect();
    let only_second: Vec<BitConfig> = b.difference(&a).cloned().collect();
    Ok(Coincidence {
        coincident: only_first.is_empty() && only_second.is_empty(),
        only_first,
        only_second,
        first_front_size: a.len(),
        second_front_size: b.len(),
    })
}
