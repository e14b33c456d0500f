//! Per-layer sensitivity probing and outlier pruning of the search space.
//!
//! Each layer is probed by dropping it alone to its lowest precision while
//! every other layer sits at its highest. Layers whose probe score exceeds a
//! multiple of the median are frozen at maximum precision before the search.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluators::Evaluator;
use crate::space::{BitConfig, SearchSpace};

pub const DEFAULT_MULTIPLIER: f64 = 2.0;

/// Multipliers of the usual threshold ablation.
pub const ABLATION_MULTIPLIERS: [f64; 4] = [1.5, 2.0, 3.0, 5.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityProfile {
    /// Probe score per layer, lower is less sensitive.
    pub scores: Vec<f64>,
    pub median: f64,
    pub threshold_multiplier: f64,
}

impl SensitivityProfile {
    pub fn from_scores(scores: Vec<f64>, threshold_multiplier: f64) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Empty("sensitivity scores"));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidParameter(
                "sensitivity scores must be finite".into(),
            ));
        }
        check_multiplier(threshold_multiplier)?;
        let median = median(&scores);
        Ok(Self {
            scores,
            median,
            threshold_multiplier,
        })
    }

    /// Layers whose score is strictly above `multiplier · median`.
    pub fn outliers(&self, multiplier: f64) -> Vec<usize> {
        let threshold = multiplier * self.median;
        self.scores
            .iter()
            .enumerate()
            .filter(|(_, &s)| s > threshold)
            .map(|(i, _)| i)
            .collect()
    }

    /// Layer indices ordered by descending score, ties by index.
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        order.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        order
    }
}

fn check_multiplier(multiplier: f64) -> Result<()> {
    if !(multiplier.is_finite() && multiplier > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "threshold multiplier must be positive, got {multiplier}"
        )));
    }
    Ok(())
}

/// Median; even lengths average the two central order statistics.
pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Config with every layer at its maximum choice except `layer` at its
/// minimum. Frozen assignments are ignored: probing happens on the raw space.
pub fn probe_config(space: &SearchSpace, layer: usize) -> BitConfig {
    let bits = space
        .layers()
        .iter()
        .enumerate()
        .map(|(i, l)| if i == layer { l.min_choice() } else { l.max_choice() })
        .collect();
    BitConfig::from_bits_unchecked(bits)
}

/// Issues exactly one evaluation per layer.
pub fn measure_sensitivity<E: Evaluator + ?Sized>(
    space: &SearchSpace,
    evaluator: &mut E,
) -> Result<SensitivityProfile> {
    let mut scores = Vec::with_capacity(space.layer_count());
    for (i, layer) in space.layers().iter().enumerate() {
        let probe = probe_config(space, i);
        let score = evaluator.evaluate(&probe).map_err(|e| {
            Error::eval(format!("sensitivity probe for layer {i} ('{}')", layer.name), e)
        })?;
        if !score.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "sensitivity probe for layer {i} returned {score}"
            )));
        }
        if score < 0.0 {
            warn!("layer {i} probe score {score} is negative; clamping to 0");
        }
        scores.push(score.max(0.0));
    }
    SensitivityProfile::from_scores(scores, DEFAULT_MULTIPLIER)
}

#[derive(Debug, Clone)]
pub struct PruneOutcome {
    pub space: SearchSpace,
    /// Layers above the threshold, ascending.
    pub outliers: Vec<usize>,
    /// `outliers.len() / layer_count`.
    pub excluded_fraction: f64,
}

/// Freezes every layer scoring above `multiplier · median` at its maximum
/// choice. Layers that were already frozen keep their value.
pub fn prune_space(
    space: &SearchSpace,
    profile: &SensitivityProfile,
    multiplier: f64,
) -> Result<PruneOutcome> {
    check_multiplier(multiplier)?;
    if profile.scores.len() != space.layer_count() {
        return Err(Error::LengthMismatch {
            expected: space.layer_count(),
            found: profile.scores.len(),
        });
    }
    let outliers = profile.outliers(multiplier);
    let extra: Vec<(usize, u8)> = outliers
        .iter()
        .filter(|&&i| !space.is_frozen(i))
        .map(|&i| (i, space.layers()[i].max_choice()))
        .collect();
    let pruned = space.with_frozen(extra)?;
    Ok(PruneOutcome {
        space: pruned,
        excluded_fraction: outliers.len() as f64 / space.layer_count() as f64,
        outliers,
    })
}
