use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use bitalloc::engine::{
    self, greedy_search, one_shot_search, select_optimal, Checkpoint, FrontRecord, SearchOptions,
    SearchOutcome, SearchParams, SearchStatus, ARCHIVE_FILE, FRONT_FILE,
};
use bitalloc::evaluators::{Evaluator, MappedEvaluator};
use bitalloc::moea::ObjectivePoint;
use bitalloc::oracle::{compare_fronts, default_reference, enumerate_front, verify_front_coincidence};
use bitalloc::sensitivity::{measure_sensitivity, prune_space, SensitivityProfile, ABLATION_MULTIPLIERS};
use bitalloc::space::{BitConfig, SearchSpace};
use bitalloc::surrogate::RbfSurrogate;
use log::{info, warn};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};
use crate::evaluator;
use crate::output::{
    self, create_dir, percent, target_path, write_allocation, write_archive, write_json,
    MANIFEST_FILE, ORACLE_FILE, PROFILE_FILE,
};
use crate::{BaselineArgs, CommonArgs, Method, OracleArgs, SearchArgs, SensitivityArgs, VERSION};

fn load_space(common: &CommonArgs) -> CliResult<SearchSpace> {
    let path = common
        .space
        .as_ref()
        .ok_or_else(|| CliError::Config("--space is required".into()))?;
    SearchSpace::load(path).map_err(CliError::config)
}

fn out_dir(common: &CommonArgs, fallback: Option<&Path>) -> CliResult<PathBuf> {
    let dir = common
        .out
        .clone()
        .or_else(|| fallback.map(Path::to_path_buf))
        .ok_or_else(|| CliError::Config("--out is required".into()))?;
    create_dir(&dir)?;
    Ok(dir)
}

fn write_manifest<C: Serialize>(dir: &Path, command: &str, seed: u64, config: &C, result: Value) -> CliResult<()> {
    let manifest = json!({
        "tool": "bitalloc",
        "version": VERSION,
        "command": command,
        "seed": seed,
        "config": config,
        "result": result,
    });
    write_json(&dir.join(MANIFEST_FILE), &manifest)
}

#[derive(Serialize)]
struct ProfileFile<'a> {
    scores: &'a [f64],
    median: f64,
    frozen: Vec<&'a str>,
    excluded_fraction: f64,
}

fn write_profile(path: &Path, space: &SearchSpace, profile: &SensitivityProfile, frozen: &[usize]) -> CliResult<()> {
    write_json(
        path,
        &ProfileFile {
            scores: &profile.scores,
            median: profile.median,
            frozen: frozen.iter().map(|&i| space.layers()[i].name.as_str()).collect(),
            excluded_fraction: frozen.len() as f64 / space.layer_count() as f64,
        },
    )
}

pub fn sensitivity(args: &SensitivityArgs) -> CliResult<()> {
    let space = load_space(&args.common)?;
    let dir = out_dir(&args.common, None)?;
    let mut ev = evaluator::build(&args.common.evaluator, &space, args.common.parallel)?;
    let profile = measure_sensitivity(&space, &mut ev)?;

    let frozen = match args.prune_multiplier.0 {
        Some(m) => prune_space(&space, &profile, m)?.outliers,
        None => Vec::new(),
    };
    write_profile(&dir.join(PROFILE_FILE), &space, &profile, &frozen)?;

    let l = space.layer_count();
    println!("median sensitivity {:.6} over {l} layers", profile.median);
    let mut ablation = Vec::new();
    for m in ABLATION_MULTIPLIERS {
        let out = prune_space(&space, &profile, m)?;
        println!(
            "multiplier {m}: {} of {l} layers excluded ({})",
            out.outliers.len(),
            percent(out.excluded_fraction)
        );
        ablation.push(json!({"multiplier": m, "excluded": out.outliers.len(), "excluded_fraction": out.excluded_fraction}));
    }
    if let Some(m) = args.prune_multiplier.0 {
        let names: Vec<&str> = frozen.iter().map(|&i| space.layers()[i].name.as_str()).collect();
        println!("frozen at multiplier {m}: {}", if names.is_empty() { "none".into() } else { names.join(", ") });
    }
    write_manifest(
        &dir,
        "sensitivity",
        args.common.seed,
        args,
        json!({"evaluations": ev.count(), "ablation": ablation}),
    )
}

fn search_params(args: &SearchArgs) -> SearchParams {
    let mut p = SearchParams {
        seed: args.common.seed,
        prune_multiplier: args.prune_multiplier.0,
        ..SearchParams::default()
    };
    if let Some(v) = args.initial {
        p.initial_samples = v;
    }
    if let Some(v) = args.iterations {
        p.iterations = v;
    }
    if let Some(v) = args.candidates {
        p.candidates = v;
    }
    if let Some(v) = args.subset_pool {
        p.subset_pool = v;
    }
    if let Some(v) = args.population {
        p.nsga.population = v;
    }
    if let Some(v) = args.generations {
        p.nsga.generations = v;
    }
    if let Some(v) = args.crossover {
        p.nsga.crossover_prob = v;
    }
    if let Some(v) = args.mutation {
        p.nsga.mutation_prob = v;
    }
    // The pool must hold at least K candidates; follow K when only it was raised.
    if args.subset_pool.is_none() {
        p.subset_pool = p.subset_pool.max(p.candidates);
    }
    p
}

fn progress_options(dir: &Path) -> SearchOptions<'static> {
    SearchOptions {
        checkpoint_dir: Some(dir.to_path_buf()),
        observer: Some(Box::new(|e: &engine::IterationEvent<'_>| {
            info!(
                "iteration {}: {} new, archive {}",
                e.iteration,
                e.verified,
                e.archive.len()
            )
        })),
    }
}

#[derive(Serialize)]
struct Selection<'a> {
    target_bits: f64,
    tolerance: f64,
    effective_bits: f64,
    score: f64,
    iteration: usize,
    bits: &'a [u8],
}

pub fn search(args: &SearchArgs) -> CliResult<()> {
    if !(args.tolerance.is_finite() && args.tolerance >= 0.0) {
        return Err(CliError::Config(format!("--tolerance must be non-negative, got {}", args.tolerance)));
    }
    let dir = out_dir(&args.common, args.resume.as_deref())?;

    let (outcome, params) = match &args.resume {
        Some(from) => {
            let mut checkpoint = Checkpoint::load(from).map_err(CliError::config)?;
            if let Some(i) = args.iterations {
                checkpoint.state.params.iterations = i;
            }
            let params = checkpoint.state.params.clone();
            let space = match &args.common.space {
                Some(_) => load_space(&args.common)?,
                None => checkpoint.archive.space().unfrozen(),
            };
            let mut ev = evaluator::build(&args.common.evaluator, &space, args.common.parallel)?;
            let mut surrogate = RbfSurrogate::new(params.regularization);
            let outcome = engine::resume(checkpoint, &mut ev, &mut surrogate, progress_options(&dir))?;
            (outcome, params)
        }
        None => {
            let space = load_space(&args.common)?;
            let params = search_params(args);
            params.validate()?;
            let mut ev = evaluator::build(&args.common.evaluator, &space, args.common.parallel)?;
            let mut surrogate = RbfSurrogate::new(params.regularization);
            let outcome = engine::search_with(&space, &mut ev, &params, &mut surrogate, progress_options(&dir))?;
            if let (Some(profile), Some(_)) = (&outcome.sensitivity, params.prune_multiplier) {
                write_profile(&dir.join(PROFILE_FILE), &space, profile, &outcome.report.pruned_layers)?;
            }
            (outcome, params)
        }
    };

    write_archive(&dir.join(ARCHIVE_FILE), &outcome.archive)?;
    write_json(&dir.join(FRONT_FILE), &outcome.front.to_records())?;
    let missing = write_selections(&dir, &outcome, &args.target_bits, args.tolerance)?;

    let status = match &outcome.status {
        SearchStatus::Completed => json!("completed"),
        SearchStatus::Aborted { iteration, reason } => json!({"aborted": {"iteration": iteration, "reason": reason}}),
    };
    write_manifest(
        &dir,
        "search",
        params.seed,
        &json!({"args": args, "params": params}),
        json!({"status": status, "report": outcome.report, "front_size": outcome.front.len()}),
    )?;
    println!(
        "{} evaluations, archive {}, front {}",
        outcome.report.total_evaluations(),
        outcome.archive.len(),
        outcome.front.len()
    );

    if let SearchStatus::Aborted { iteration, reason } = &outcome.status {
        return Err(CliError::Runtime(format!(
            "search aborted in iteration {iteration}: {reason} (resume with --resume {})",
            dir.display()
        )));
    }
    if !missing.is_empty() {
        return Err(CliError::Runtime(missing.join("; ")));
    }
    Ok(())
}

/// Writes selection and allocation files per target; returns the messages
/// for targets without an eligible config.
fn write_selections(dir: &Path, outcome: &SearchOutcome, targets: &[f64], tolerance: f64) -> CliResult<Vec<String>> {
    let mut missing = Vec::new();
    for &t in targets {
        match select_optimal(&outcome.archive, t, tolerance) {
            Ok(entry) => {
                write_json(
                    &target_path(dir, "selection", t, "json"),
                    &Selection {
                        target_bits: t,
                        tolerance,
                        effective_bits: entry.bits,
                        score: entry.score,
                        iteration: entry.iteration,
                        bits: entry.config.bits(),
                    },
                )?;
                write_allocation(&target_path(dir, "allocation", t, "csv"), &outcome.space, &entry.config)?;
                println!("target {t}: score {:.6} at {:.4} bits", entry.score, entry.bits);
            }
            Err(e) => {
                warn!("target {t}: {e}");
                missing.push(e.to_string());
            }
        }
    }
    Ok(missing)
}

#[derive(Serialize)]
struct BaselineResult<'a> {
    method: Method,
    target_bits: f64,
    effective_bits: f64,
    score: f64,
    /// Evaluator calls made by the search itself.
    evaluations: usize,
    sensitivity_evaluations: usize,
    bits: &'a [u8],
}

pub fn baseline(args: &BaselineArgs) -> CliResult<()> {
    let space = load_space(&args.common)?;
    let dir = out_dir(&args.common, None)?;
    let mut ev = evaluator::build(&args.common.evaluator, &space, args.common.parallel)?;
    let label = match args.method {
        Method::OneShot => "one-shot",
        Method::Greedy => "greedy",
    };

    let profile = match args.method {
        Method::OneShot => Some(measure_sensitivity(&space, &mut ev)?),
        Method::Greedy => None,
    };
    let sensitivity_evaluations = ev.count();
    let mut results = Vec::new();
    for &t in &args.target_bits {
        let (config, bits, evaluations, score): (BitConfig, f64, usize, Option<f64>) = match &profile {
            Some(profile) => {
                let out = one_shot_search(&space, profile, t)?;
                (out.config, out.bits, 0, None)
            }
            None => {
                let out = greedy_search(&space, &mut ev, t)?;
                (out.config, out.bits, out.evaluations, out.score)
            }
        };
        let score = match score {
            Some(s) => s,
            None => ev.evaluate(&config)?,
        };
        let result = BaselineResult {
            method: args.method,
            target_bits: t,
            effective_bits: bits,
            score,
            evaluations,
            sensitivity_evaluations,
            bits: config.bits(),
        };
        write_json(&target_path(&dir, &format!("baseline_{label}"), t, "json"), &result)?;
        write_allocation(&target_path(&dir, &format!("allocation_{label}"), t, "csv"), &space, &config)?;
        println!("{label} target {t}: score {score:.6} at {bits:.4} bits, {evaluations} evaluations");
        results.push(json!({"target_bits": t, "score": score, "evaluations": evaluations}));
    }
    write_manifest(
        &dir,
        "baseline",
        args.common.seed,
        args,
        json!({"results": results, "total_evaluations": ev.count()}),
    )
}

fn read_front(path: &Path) -> CliResult<Vec<ObjectivePoint>> {
    let file = File::open(path).map_err(|e| CliError::Config(format!("failed to read {}: {e}", path.display())))?;
    let records: Vec<FrontRecord> = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| CliError::Config(format!("failed to parse {}: {e}", path.display())))?;
    Ok(records.iter().map(|r| ObjectivePoint::new(r.score, r.eff_bits)).collect())
}

pub fn oracle(args: &OracleArgs) -> CliResult<()> {
    let space = load_space(&args.common)?;
    let dir = out_dir(&args.common, None)?;
    let found = args.front.as_deref().map(read_front).transpose()?;

    let mut ev = evaluator::build(&args.common.evaluator, &space, args.common.parallel)?;
    let truth = enumerate_front(&space, &mut ev, args.cap)?;
    let truth_points = truth.front.points();
    println!("exhaustive front: {} of {} configs", truth.front.len(), truth.evaluated);

    let comparison = match &found {
        Some(points) => {
            let reference = default_reference(&space, &[points, &truth_points]);
            let cmp = compare_fronts(points, &truth_points, reference)?;
            println!("hypervolume ratio: {:.6}", cmp.hypervolume_ratio);
            Some(cmp)
        }
        None => None,
    };

    let transform = args.transform;
    let mut first = evaluator::build(&args.common.evaluator, &space, args.common.parallel)?;
    let second = evaluator::build(&args.common.evaluator, &space, args.common.parallel)?;
    let mut mapped = MappedEvaluator::new(second, move |q| transform.apply(q));
    let coincidence = verify_front_coincidence(&space, &mut first, &mut mapped, args.cap)?;
    println!("coincident: {}", coincidence.coincident);
    let bits = |cs: &[BitConfig]| cs.iter().map(|c| c.bits().to_vec()).collect::<Vec<_>>();
    if !coincidence.coincident {
        println!("only under identity: {:?}", bits(&coincidence.only_first));
        println!("only under {}: {:?}", output::transform_name(transform), bits(&coincidence.only_second));
    }

    let report = json!({
        "evaluated": truth.evaluated,
        "true_front": truth.front.to_records(),
        "comparison": comparison,
        "coincidence": {
            "transform": transform,
            "coincident": coincidence.coincident,
            "first_front_size": coincidence.first_front_size,
            "second_front_size": coincidence.second_front_size,
            "only_first": bits(&coincidence.only_first),
            "only_second": bits(&coincidence.only_second),
        },
    });
    write_json(&dir.join(ORACLE_FILE), &report)?;
    write_manifest(
        &dir,
        "oracle",
        args.common.seed,
        args,
        json!({"evaluated": truth.evaluated, "coincident": coincidence.coincident}),
    )
}
