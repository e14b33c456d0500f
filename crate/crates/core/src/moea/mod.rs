//! Two-objective NSGA-II over bit configurations.
//!
//! Both objectives are minimized: the quality loss (`score`) and the
//! effective bits per weight (`bits`).

mod nsga2;
mod operators;
mod sort;

use serde::{Deserialize, Serialize};

use crate::space::BitConfig;

pub use nsga2::{nsga2_run, NsgaParams, NsgaResult, NsgaStats};
pub use operators::{crossover, mutate};
pub use sort::{crowding_distance, dominates, non_dominated_sort, pareto_indices};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectivePoint {
    pub score: f64,
    pub bits: f64,
}

impl ObjectivePoint {
    pub fn new(score: f64, bits: f64) -> Self {
        Self { score, bits }
    }

    pub fn is_finite(&self) -> bool {
        self.score.is_finite() && self.bits.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub config: BitConfig,
    pub objectives: ObjectivePoint,
}
