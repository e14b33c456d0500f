//! `--evaluator` parsing and construction.

use std::path::PathBuf;
use std::str::FromStr;

use bitalloc::evaluators::{
    CountingEvaluator, Evaluator, ExternalEvaluator, ExternalOptions, ParallelEvaluator,
    SyntheticModel,
};
use bitalloc::space::SearchSpace;
use serde::Serialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EvaluatorSpec {
    /// Parameters file of a synthetic quality model.
    Synthetic { params: PathBuf },
    /// Command line of an external evaluator process, split on whitespace.
    Exec { command: Vec<String> },
}

impl FromStr for EvaluatorSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if let Some(path) = s.strip_prefix("synthetic:") {
            if path.is_empty() {
                return Err("synthetic: needs a parameters file".into());
            }
            Ok(EvaluatorSpec::Synthetic {
                params: PathBuf::from(path),
            })
        } else if let Some(cmd) = s.strip_prefix("exec:") {
            let command: Vec<String> = cmd.split_whitespace().map(String::from).collect();
            if command.is_empty() {
                return Err("exec: needs a command".into());
            }
            Ok(EvaluatorSpec::Exec { command })
        } else {
            Err(format!(
                "expected synthetic:<params.json> or exec:<command...>, got '{s}'"
            ))
        }
    }
}

pub type BoxedEvaluator = Box<dyn Evaluator + Send>;

/// Builds `parallel` evaluator instances behind one fan-out evaluator, with a
/// call counter on top.
pub fn build(
    spec: &EvaluatorSpec,
    space: &SearchSpace,
    parallel: usize,
) -> CliResult<CountingEvaluator<ParallelEvaluator<BoxedEvaluator>>> {
    if parallel == 0 {
        return Err(CliError::Config("--parallel must be at least 1".into()));
    }
    let workers: Vec<BoxedEvaluator> = match spec {
        EvaluatorSpec::Synthetic { params } => {
            let model = SyntheticModel::load(params).map_err(CliError::config)?;
            if model.layers() != space.layer_count() {
                return Err(CliError::Config(format!(
                    "{} describes {} layers but the space has {}",
                    params.display(),
                    model.layers(),
                    space.layer_count()
                )));
            }
            (0..parallel)
                .map(|_| Box::new(model.clone()) as BoxedEvaluator)
                .collect()
        }
        EvaluatorSpec::Exec { command } => {
            let mut workers = Vec::with_capacity(parallel);
            for _ in 0..parallel {
                let ev = ExternalEvaluator::spawn(command.clone(), space, ExternalOptions::default())
                    .map_err(|e| CliError::Runtime(format!("evaluator '{}': {e}", command.join(" "))))?;
                workers.push(Box::new(ev) as BoxedEvaluator);
            }
            workers
        }
    };
    Ok(CountingEvaluator::new(ParallelEvaluator::new(workers)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_both_forms() {
        assert_eq!(
            "synthetic:m.json".parse::<EvaluatorSpec>().unwrap(),
            EvaluatorSpec::Synthetic {
                params: "m.json".into()
            }
        );
        assert_eq!(
            "exec:python3 eval.py --model p.json".parse::<EvaluatorSpec>().unwrap(),
            EvaluatorSpec::Exec {
                command: vec!["python3".into(), "eval.py".into(), "--model".into(), "p.json".into()]
            }
        );
        assert!("exec:".parse::<EvaluatorSpec>().is_err());
        assert!("model.json".parse::<EvaluatorSpec>().is_err());
    }
}
