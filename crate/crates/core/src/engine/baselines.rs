//! Reference allocators to compare the search against.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluators::Evaluator;
use crate::sensitivity::SensitivityProfile;
use crate::space::{BitConfig, SearchSpace};

/// Slack on reachability checks against the achievable bit range.
const RANGE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneShotOutcome {
    pub config: BitConfig,
    pub bits: f64,
    /// Number of most sensitive free layers kept at maximum precision.
    pub promoted: usize,
}

fn check_reachable(space: &SearchSpace, target: f64) -> Result<(f64, f64)> {
    let (min, max) = space.effective_bits_range();
    if !target.is_finite() || target < min - RANGE_SLACK || target > max + RANGE_SLACK {
        return Err(Error::Unreachable { target, min, max });
    }
    Ok((min, max))
}

/// Keeps the `m` most sensitive free layers at maximum precision and drops
/// the rest to minimum, with `m` chosen so the effective bits land closest to
/// `target`. Ties go to the smaller `m`. No evaluator calls.
pub fn one_shot_search(
    space: &SearchSpace,
    profile: &SensitivityProfile,
    target: f64,
) -> Result<OneShotOutcome> {
    if profile.scores.len() != space.layer_count() {
        return Err(Error::LengthMismatch {
            expected: space.layer_count(),
            found: profile.scores.len(),
        });
    }
    check_reachable(space, target)?;
    let order: Vec<usize> = profile
        .ranking()
        .into_iter()
        .filter(|&i| !space.is_frozen(i))
        .collect();
    let mut config = space.min_config();
    let mut best = OneShotOutcome {
        bits: space.effective_bits(&config),
        config: config.clone(),
        promoted: 0,
    };
    for (m, &layer) in order.iter().enumerate() {
        config.set(layer, space.layers()[layer].max_choice());
        let bits = space.effective_bits(&config);
        if (bits - target).abs() < (best.bits - target).abs() {
            best = OneShotOutcome {
                config: config.clone(),
                bits,
                promoted: m + 1,
            };
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyOutcome {
    pub config: BitConfig,
    pub bits: f64,
    /// Score of the final config; `None` if no demotion was needed, since the
    /// greedy procedure then never evaluates anything.
    pub score: Option<f64>,
    pub rounds: usize,
    pub evaluations: usize,
}

/// Starts from all-max and, each round, demotes to minimum the one layer
/// whose demotion yields the lowest score, until the effective bits are at
/// or below `target`. Ties go to the lower layer index. A round over `r`
/// remaining layers costs `r` evaluations.
pub fn greedy_search<E: Evaluator + ?Sized>(
    space: &SearchSpace,
    evaluator: &mut E,
    target: f64,
) -> Result<GreedyOutcome> {
    let (min, max) = space.effective_bits_range();
    if !target.is_finite() || target < min - RANGE_SLACK {
        return Err(Error::Unreachable { target, min, max });
    }
    let mut current = space.max_config();
    let mut remaining: Vec<usize> = space
        .free_layers()
        .iter()
        .copied()
        .filter(|&i| space.layers()[i].choices.len() > 1)
        .collect();
    let mut score = None;
    let mut rounds = 0;
    let mut evaluations = 0;
    while space.effective_bits(&current) > target + RANGE_SLACK {
        let trials: Vec<BitConfig> = remaining
            .iter()
            .map(|&i| {
                let mut t = current.clone();
                t.set(i, space.layers()[i].min_choice());
                t
            })
            .collect();
        if trials.is_empty() {
            return Err(Error::Unreachable { target, min, max });
        }
        let scores = evaluator
            .evaluate_batch(&trials)
            .map_err(|e| Error::eval(format!("greedy round {}", rounds + 1), e))?;
        crate::evaluators::check_scores(trials.len(), &scores)
            .map_err(|e| Error::eval(format!("greedy round {}", rounds + 1), e))?;
        evaluations += trials.len();
        let mut pick = 0;
        for (k, s) in scores.iter().enumerate() {
            if *s < scores[pick] {
                pick = k;
            }
        }
        debug!(
            "greedy round {}: demote layer {} (score {})",
            rounds + 1,
            remaining[pick],
            scores[pick]
        );
        current = trials.into_iter().nth(pick).expect("pick is in range");
        score = Some(scores[pick]);
        remaining.remove(pick);
        rounds += 1;
    }
    Ok(GreedyOutcome {
        bits: space.effective_bits(&current),
        config: current,
        score,
        rounds,
        evaluations,
    })
}
