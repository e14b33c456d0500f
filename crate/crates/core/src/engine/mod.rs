//! Surrogate-assisted search over bit configurations.
//!
//! The outer loop keeps an [`Archive`] of verified samples. Each iteration
//! fits the surrogate to the archive, runs NSGA-II on the predicted
//! objectives seeded from the archive's front, and spends `candidates`
//! evaluator calls verifying a spread-out subset of what it found.

mod archive;
mod baselines;
mod checkpoint;
mod select;

use std::collections::HashSet;
use std::path::PathBuf;

use log::{debug, info, warn};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluators::{check_scores, Evaluator};
use crate::moea::{nsga2_run, NsgaParams, NsgaStats, ObjectivePoint};
use crate::sensitivity::{measure_sensitivity, prune_space, SensitivityProfile};
use crate::space::{BitConfig, SearchSpace};
use crate::surrogate::{FeatureEncoder, RbfSurrogate, Surrogate, DEFAULT_REGULARIZATION};

pub use archive::{
    pareto_front, select_optimal, Archive, ArchiveEntry, ArchiveRecord, FrontRecord,
    ParetoFront, DEFAULT_TOLERANCE,
};
pub use baselines::{greedy_search, one_shot_search, GreedyOutcome, OneShotOutcome};
pub use checkpoint::{Checkpoint, CheckpointState, RngState, ARCHIVE_FILE, FRONT_FILE, STATE_FILE};
pub use select::{seed_population, select_candidates};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    /// Random configs verified before the first iteration.
    pub initial_samples: usize,
    pub iterations: usize,
    /// Configs verified per iteration.
    pub candidates: usize,
    /// How many of the best final-population members candidates are drawn from.
    pub subset_pool: usize,
    /// Inner search settings. The seed is replaced per iteration.
    pub nsga: NsgaParams,
    /// Freeze layers above this multiple of the median sensitivity before
    /// searching; `None` searches the space as given.
    pub prune_multiplier: Option<f64>,
    pub regularization: f64,
    pub seed: u64,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            initial_samples: 250,
            iterations: 200,
            candidates: 50,
            subset_pool: 100,
            nsga: NsgaParams::default(),
            prune_multiplier: None,
            regularization: DEFAULT_REGULARIZATION,
            seed: 0,
        }
    }
}

impl SearchParams {
    pub fn validate(&self) -> Result<()> {
        self.nsga.validate()?;
        if self.initial_samples == 0 {
            return Err(Error::InvalidParameter("initial_samples must be positive".into()));
        }
        if self.candidates == 0 {
            return Err(Error::InvalidParameter("candidates must be positive".into()));
        }
        if self.subset_pool < self.candidates {
            return Err(Error::InvalidParameter(format!(
                "subset_pool ({}) is smaller than candidates ({})",
                self.subset_pool, self.candidates
            )));
        }
        if self.nsga.population < self.candidates {
            return Err(Error::InvalidParameter(format!(
                "population ({}) is smaller than candidates ({})",
                self.nsga.population, self.candidates
            )));
        }
        if let Some(m) = self.prune_multiplier {
            if !(m.is_finite() && m > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "prune multiplier must be positive, got {m}"
                )));
            }
        }
        if !(self.regularization.is_finite() && self.regularization >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "regularization must be non-negative, got {}",
                self.regularization
            )));
        }
        Ok(())
    }

    /// Evaluator calls of a run that verifies a full batch every iteration,
    /// sensitivity probes excluded.
    pub fn evaluation_budget(&self) -> usize {
        self.initial_samples + self.iterations * self.candidates
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    /// Probe calls spent on pruning, zero when pruning is off.
    pub sensitivity_evaluations: usize,
    pub initial_requested: usize,
    pub initial_evaluations: usize,
    pub iteration_evaluations: usize,
    pub iterations_completed: usize,
    /// Surrogate requests summed over all inner runs.
    pub predictor: NsgaStats,
    pub pruned_layers: Vec<usize>,
    pub excluded_fraction: Option<f64>,
}

impl SearchReport {
    /// Verified samples: initial plus per-iteration.
    pub fn search_evaluations(&self) -> usize {
        self.initial_evaluations + self.iteration_evaluations
    }

    pub fn total_evaluations(&self) -> usize {
        self.sensitivity_evaluations + self.search_evaluations()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SearchStatus {
    Completed,
    /// A later iteration failed; everything verified before it is kept.
    Aborted { iteration: usize, reason: String },
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    /// The space actually searched, after pruning.
    pub space: SearchSpace,
    pub archive: Archive,
    pub front: ParetoFront,
    pub report: SearchReport,
    pub status: SearchStatus,
    pub sensitivity: Option<SensitivityProfile>,
}

/// Passed to the observer after every completed iteration.
pub struct IterationEvent<'a> {
    pub iteration: usize,
    pub archive: &'a Archive,
    pub verified: usize,
    pub predictor: NsgaStats,
}

#[derive(Default)]
pub struct SearchOptions<'a> {
    /// Save a checkpoint here after initialization and every iteration.
    pub checkpoint_dir: Option<PathBuf>,
    #[allow(clippy::type_complexity)]
    pub observer: Option<Box<dyn FnMut(&IterationEvent<'_>) + 'a>>,
}

/// Runs the full search with the cubic RBF surrogate.
pub fn search<E: Evaluator + ?Sized>(
    space: &SearchSpace,
    evaluator: &mut E,
    params: &SearchParams,
) -> Result<SearchOutcome> {
    let mut surrogate = RbfSurrogate::new(params.regularization);
    search_with(space, evaluator, params, &mut surrogate, SearchOptions::default())
}

/// Runs the full search. Errors before the first iteration (bad parameters,
/// failed pruning or initial evaluations) are returned as `Err`; failures
/// inside the loop end the run with [`SearchStatus::Aborted`].
pub fn search_with<E, S>(
    space: &SearchSpace,
    evaluator: &mut E,
    params: &SearchParams,
    surrogate: &mut S,
    mut options: SearchOptions<'_>,
) -> Result<SearchOutcome>
where
    E: Evaluator + ?Sized,
    S: Surrogate + ?Sized,
{
    params.validate()?;
    let mut report = SearchReport::default();
    let mut sensitivity = None;
    let space = match params.prune_multiplier {
        Some(m) => {
            let profile = measure_sensitivity(space, evaluator)?;
            report.sensitivity_evaluations = space.layer_count();
            let pruned = prune_space(space, &profile, m)?;
            info!(
                "pruning froze {} of {} layers ({:.2}%)",
                pruned.outliers.len(),
                space.layer_count(),
                100.0 * pruned.excluded_fraction
            );
            report.pruned_layers = pruned.outliers;
            report.excluded_fraction = Some(pruned.excluded_fraction);
            sensitivity = Some(profile);
            pruned.space
        }
        None => space.clone(),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let archive = initialize_archive(&space, evaluator, params.initial_samples, &mut rng)?;
    report.initial_requested = params.initial_samples;
    report.initial_evaluations = archive.len();

    let state = Checkpoint {
        state: CheckpointState {
            iteration: 0,
            params: params.clone(),
            space: space.to_file(),
            report,
            rng: RngState::capture(&rng),
        },
        archive,
    };
    if let Some(dir) = &options.checkpoint_dir {
        state.save(dir)?;
    }
    let mut outcome = run_loop(state, rng, evaluator, surrogate, &mut options)?;
    outcome.sensitivity = sensitivity;
    Ok(outcome)
}

/// Continues a checkpointed run up to `checkpoint.state.params.iterations`.
pub fn resume<E, S>(
    checkpoint: Checkpoint,
    evaluator: &mut E,
    surrogate: &mut S,
    mut options: SearchOptions<'_>,
) -> Result<SearchOutcome>
where
    E: Evaluator + ?Sized,
    S: Surrogate + ?Sized,
{
    checkpoint.state.params.validate()?;
    let rng = checkpoint.state.rng.restore()?;
    info!(
        "resuming after iteration {} with {} archived samples",
        checkpoint.state.iteration,
        checkpoint.archive.len()
    );
    run_loop(checkpoint, rng, evaluator, surrogate, &mut options)
}

/// Verifies `n` distinct uniform random configs. Gives up on finding more
/// after `max(100 n, 1000)` draws, which only happens when the space has
/// fewer than `n` members or nearly so.
pub fn initialize_archive<E, R>(
    space: &SearchSpace,
    evaluator: &mut E,
    n: usize,
    rng: &mut R,
) -> Result<Archive>
where
    E: Evaluator + ?Sized,
    R: Rng + ?Sized,
{
    let max_draws = n.saturating_mul(100).max(1000);
    let mut seen = HashSet::with_capacity(n);
    let mut configs = Vec::with_capacity(n);
    let mut draws = 0;
    while configs.len() < n && draws < max_draws {
        let c = space.random_config(rng);
        draws += 1;
        if seen.insert(c.clone()) {
            configs.push(c);
        }
    }
    if configs.len() < n {
        warn!(
            "only {} distinct initial configs found after {draws} draws (requested {n})",
            configs.len()
        );
    }
    let scores = evaluator
        .evaluate_batch(&configs)
        .map_err(|e| Error::eval("initial samples", e))?;
    check_scores(configs.len(), &scores).map_err(|e| Error::eval("initial samples", e))?;
    let mut archive = Archive::new(space.clone());
    for (c, s) in configs.into_iter().zip(scores) {
        archive.insert(c, s, 0)?;
    }
    Ok(archive)
}

/// One outer iteration: fit, search the surrogate, verify. Returns how many
/// new samples were archived and the inner run's request counts.
fn iterate<E, S>(
    archive: &mut Archive,
    iteration: usize,
    params: &SearchParams,
    rng: &mut ChaCha8Rng,
    evaluator: &mut E,
    surrogate: &mut S,
) -> Result<(usize, NsgaStats)>
where
    E: Evaluator + ?Sized,
    S: Surrogate + ?Sized,
{
    let space = archive.space().clone();
    let encoder = FeatureEncoder::new(&space);
    let x: Vec<_> = archive.entries().iter().map(|e| encoder.encode(&e.config)).collect();
    let y: Vec<f64> = archive.entries().iter().map(|e| e.score).collect();
    surrogate.fit(&x, &y)?;

    let front = pareto_front(archive)?;
    let seeds = seed_population(&front, &space, params.nsga.population, rng);
    let nsga = NsgaParams {
        seed: rng.next_u64(),
        ..params.nsga.clone()
    };
    let objective = |configs: &[BitConfig]| -> Result<Vec<ObjectivePoint>> {
        let features: Vec<_> = configs.iter().map(|c| encoder.encode(c)).collect();
        let predicted = surrogate.predict_batch(&features)?;
        Ok(configs
            .iter()
            .zip(predicted)
            .map(|(c, s)| ObjectivePoint::new(s, space.effective_bits(c)))
            .collect())
    };
    let result = nsga2_run(&space, seeds, objective, &nsga)?;
    let candidates = select_candidates(&result, archive, params.candidates, params.subset_pool);
    if candidates.len() < params.candidates {
        debug!(
            "iteration {iteration}: only {} unarchived candidates",
            candidates.len()
        );
    }
    let context = || format!("iteration {iteration} verification");
    let scores = evaluator
        .evaluate_batch(&candidates)
        .map_err(|e| Error::eval(context(), e))?;
    check_scores(candidates.len(), &scores).map_err(|e| Error::eval(context(), e))?;
    let mut added = 0;
    for (c, s) in candidates.into_iter().zip(scores) {
        if archive.insert(c, s, iteration)? {
            added += 1;
        }
    }
    Ok((added, result.stats))
}

fn run_loop<E, S>(
    mut checkpoint: Checkpoint,
    mut rng: ChaCha8Rng,
    evaluator: &mut E,
    surrogate: &mut S,
    options: &mut SearchOptions<'_>,
) -> Result<SearchOutcome>
where
    E: Evaluator + ?Sized,
    S: Surrogate + ?Sized,
{
    let params = checkpoint.state.params.clone();
    let mut status = SearchStatus::Completed;
    while checkpoint.state.iteration < params.iterations {
        let iteration = checkpoint.state.iteration + 1;
        match iterate(
            &mut checkpoint.archive,
            iteration,
            &params,
            &mut rng,
            evaluator,
            surrogate,
        ) {
            Ok((verified, stats)) => {
                let report = &mut checkpoint.state.report;
                report.iteration_evaluations += verified;
                report.iterations_completed = iteration;
                report.predictor.seed_requests += stats.seed_requests;
                report.predictor.offspring_requests += stats.offspring_requests;
                report.predictor.objective_calls += stats.objective_calls;
                checkpoint.state.iteration = iteration;
                checkpoint.state.rng = RngState::capture(&rng);
                debug!(
                    "iteration {iteration}: verified {verified}, archive {}",
                    checkpoint.archive.len()
                );
                if let Some(dir) = &options.checkpoint_dir {
                    checkpoint.save(dir)?;
                }
                if let Some(observer) = options.observer.as_mut() {
                    observer(&IterationEvent {
                        iteration,
                        archive: &checkpoint.archive,
                        verified,
                        predictor: stats,
                    });
                }
            }
            Err(e) => {
                warn!("search aborted in iteration {iteration}: {e}");
                status = SearchStatus::Aborted {
                    iteration,
                    reason: e.to_string(),
                };
                break;
            }
        }
    }
    let front = pareto_front(&checkpoint.archive)?;
    Ok(SearchOutcome {
        space: checkpoint.archive.space().clone(),
        front,
        report: checkpoint.state.report,
        status,
        sensitivity: None,
        archive: checkpoint.archive,
    })
}
