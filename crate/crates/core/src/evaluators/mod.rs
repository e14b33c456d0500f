//! Verified quality scoring of bit configurations.
//!
//! An [`Evaluator`] maps a batch of configs to scores, lower is better. The
//! search treats it as the ground truth it spends budget on, so it must be
//! deterministic for a given instance: the same config always gets the same
//! score within one session.

mod external;
pub mod protocol;
mod synthetic;

use std::time::Duration;

use thiserror::Error;

use crate::space::BitConfig;

pub use external::{ExternalEvaluator, ExternalOptions};
pub use synthetic::{ModelKind, SyntheticModel};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("failed to spawn evaluator `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("evaluator i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("handshake failed: {0}")]
    Handshake(String),
    #[error("no response within {0:?}")]
    Timeout(Duration),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("evaluator reported an error for request {id:?}: {message}")]
    Remote { id: Option<u64>, message: String },
    #[error("evaluator process exited: {0}")]
    Exited(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("{0}")]
    Invalid(String),
}

pub trait Evaluator {
    /// Scores aligned with `configs`.
    fn evaluate_batch(&mut self, configs: &[BitConfig]) -> Result<Vec<f64>, EvalError>;

    fn evaluate(&mut self, config: &BitConfig) -> Result<f64, EvalError> {
        let scores = self.evaluate_batch(std::slice::from_ref(config))?;
        Ok(scores[0])
    }
}

impl<E: Evaluator + ?Sized> Evaluator for &mut E {
    fn evaluate_batch(&mut self, configs: &[BitConfig]) -> Result<Vec<f64>, EvalError> {
        (**self).evaluate_batch(configs)
    }
}

impl<E: Evaluator + ?Sized> Evaluator for Box<E> {
    fn evaluate_batch(&mut self, configs: &[BitConfig]) -> Result<Vec<f64>, EvalError> {
        (**self).evaluate_batch(configs)
    }
}

/// Checks an evaluator reply against the batch it answers.
pub(crate) fn check_scores(expected: usize, scores: &[f64]) -> Result<(), EvalError> {
    if scores.len() != expected {
        return Err(EvalError::Invalid(format!(
            "expected {expected} scores, got {}",
            scores.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(EvalError::Invalid(format!(
            "score {i} is not finite ({})",
            scores[i]
        )));
    }
    Ok(())
}

/// Per-config closure as an evaluator.
pub struct FnEvaluator<F>(pub F);

impl<F: FnMut(&BitConfig) -> f64> Evaluator for FnEvaluator<F> {
    fn evaluate_batch(&mut self, configs: &[BitConfig]) -> Result<Vec<f64>, EvalError> {
        Ok(configs.iter().map(&mut self.0).collect())
    }
}

/// Counts how many configs and batches reach the inner evaluator.
#[derive(Debug)]
pub struct CountingEvaluator<E> {
    inner: E,
    configs: usize,
    batches: usize,
}

impl<E> CountingEvaluator<E> {
    pub fn new(inner: E) -> Self {
        Self {
            inner,
            configs: 0,
            batches: 0,
        }
    }

    /// Total configs evaluated.
    pub fn count(&self) -> usize {
        self.configs
    }

    pub fn batches(&self) -> usize {
        self.batches
    }

    pub fn reset(&mut self) {
        self.configs = 0;
        self.batches = 0;
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    pub fn into_inner(self) -> E {
        self.inner
    }
}

impl<E: Evaluator> Evaluator for CountingEvaluator<E> {
    fn evaluate_batch(&mut self, configs: &[BitConfig]) -> Result<Vec<f64>, EvalError> {
        self.configs += configs.len();
        self.batches += 1;
        self.inner.evaluate_batch(configs)
    }
}

/// Applies a score transform `g` to an inner evaluator: `g ∘ Q`.
pub struct MappedEvaluator<E, G> {
    inner: E,
    transform: G,
}

impl<E, G> MappedEvaluator<E, G> {
    pub fn new(inner: E, transform: G) -> Self {
        Self { inner, transform }
    }
}

impl<E: Evaluator, G: Fn(f64) -> f64> Evaluator for MappedEvaluator<E, G> {
    fn evaluate_batch(&mut self, configs: &[BitConfig]) -> Result<Vec<f64>, EvalError> {
        let mut scores = self.inner.evaluate_batch(configs)?;
        for s in &mut scores {
            *s = (self.transform)(*s);
        }
        Ok(scores)
    }
}

/// Fans a batch out over several evaluators, one contiguous slice each, and
/// reassembles scores in input order.
pub struct ParallelEvaluator<E> {
    workers: Vec<E>,
}

impl<E: Evaluator + Send> ParallelEvaluator<E> {
    pub fn new(workers: Vec<E>) -> Self {
        assert!(!workers.is_empty(), "at least one worker");
        Self { workers }
    }

    pub fn workers(&self) -> usize {
        self.workers.len()
    }
}

impl<E: Evaluator + Send> Evaluator for ParallelEvaluator<E> {
    fn evaluate_batch(&mut self, configs: &[BitConfig]) -> Result<Vec<f64>, EvalError> {
        if self.workers.len() == 1 || configs.len() <= 1 {
            return self.workers[0].evaluate_batch(configs);
        }
        let chunk = configs.len().div_ceil(self.workers.len());
        let results: Vec<Result<Vec<f64>, EvalError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = self
                .workers
                .iter_mut()
                .zip(configs.chunks(chunk))
                .map(|(worker, part)| scope.spawn(move || worker.evaluate_batch(part)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("evaluator worker panicked"))
                .collect()
        });
        let mut scores = Vec::with_capacity(configs.len());
        for r in results {
            scores.extend(r?);
        }
        Ok(scores)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(bits: &[u8]) -> BitConfig {
        BitConfig::from_bits_unchecked(bits.to_vec())
    }

    #[test]
    fn counting_and_mapping() {
        let inner = FnEvaluator(|c: &BitConfig| c.bits()[0] as f64);
        let mut counted = CountingEvaluator::new(MappedEvaluator::new(inner, |s| s * 10.0));
        let scores = counted
            .evaluate_batch(&[cfg(&[1]), cfg(&[2]), cfg(&[3])])
            .unwrap();
        assert_eq!(scores, vec![10.0, 20.0, 30.0]);
        assert_eq!(counted.evaluate(&cfg(&[4])).unwrap(), 40.0);
        assert_eq!(counted.count(), 4);
        assert_eq!(counted.batches(), 2);
    }

    #[test]
    fn parallel_preserves_order() {
        let workers: Vec<_> = (0..3)
            .map(|_| FnEvaluator(|c: &BitConfig| c.bits().iter().map(|&b| b as f64).sum()))
            .collect();
        let mut par = ParallelEvaluator::new(workers);
        let configs: Vec<_> = (0..10u8).map(|i| cfg(&[i, 1])).collect();
        let scores = par.evaluate_batch(&configs).unwrap();
        let expected: Vec<f64> = (0..10).map(|i| i as f64 + 1.0).collect();
        assert_eq!(scores, expected);
    }

    #[test]
    fn check_scores_rejects_bad_replies() {
        assert!(check_scores(2, &[1.0]).is_err());
        assert!(check_scores(1, &[f64::NAN]).is_err());
        assert!(check_scores(1, &[0.5]).is_ok());
    }
}
