//! Files written into the run directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use bitalloc::engine::Archive;
use bitalloc::space::{BitConfig, SearchSpace};
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PROFILE_FILE: &str = "profile.json";
pub const ORACLE_FILE: &str = "oracle.json";

pub fn write_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Write {
        path: path.to_path_buf(),
        source,
    }
}

pub fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Config(format!("cannot create output directory {}: {e}", dir.display())))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let file = File::create(path).map_err(write_err(path))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value)
        .map_err(|e| CliError::Write {
            path: path.to_path_buf(),
            source: e.into(),
        })?;
    out.write_all(b"\n").map_err(write_err(path))?;
    out.flush().map_err(write_err(path))
}

pub fn write_archive(path: &Path, archive: &Archive) -> CliResult<()> {
    let file = File::create(path).map_err(write_err(path))?;
    let mut out = BufWriter::new(file);
    archive.write_jsonl(&mut out).map_err(write_err(path))?;
    out.flush().map_err(write_err(path))
}

/// File-name label for a bit target, e.g. `3.00`.
pub fn target_label(target: f64) -> String {
    format!("{target:.2}")
}

pub fn target_path(dir: &Path, stem: &str, target: f64, ext: &str) -> PathBuf {
    dir.join(format!("{stem}_{}.{ext}", target_label(target)))
}

/// Splits a layer name such as `model.layers.7.mlp.down_proj` into its
/// module (`down_proj`) and block index (`7`).
pub fn module_and_block(name: &str) -> (String, Option<usize>) {
    let module = name.rsplit(['.', '/']).next().unwrap_or(name).to_string();
    let block = name
        .split(['.', '/', '_'])
        .find_map(|part| part.parse::<usize>().ok());
    (module, block)
}

#[derive(Serialize)]
struct AllocationRow<'a> {
    layer: &'a str,
    module: String,
    block: Option<usize>,
    params: u64,
    bits: u8,
}

/// One row per layer, in space order.
pub fn write_allocation(path: &Path, space: &SearchSpace, config: &BitConfig) -> CliResult<()> {
    let csv_err = |e: csv::Error| CliError::Write {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for (layer, &bits) in space.layers().iter().zip(config.bits()) {
        let (module, block) = module_and_block(&layer.name);
        w.serialize(AllocationRow {
            layer: &layer.name,
            module,
            block,
            params: layer.params,
            bits,
        })
        .map_err(csv_err)?;
    }
    w.flush().map_err(write_err(path))
}

pub fn transform_name(t: crate::Transform) -> &'static str {
    match t {
        crate::Transform::Identity => "identity",
        crate::Transform::Negate => "negate",
        crate::Transform::Exp => "exp",
        crate::Transform::Cube => "cube",
    }
}

/// Percentage with two decimals, e.g. `1.07%`.
pub fn percent(fraction: f64) -> String {
    format!("{:.2}%", 100.0 * fraction)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_names() {
        assert_eq!(
            module_and_block("model.layers.7.mlp.down_proj"),
            ("down_proj".to_string(), Some(7))
        );
        assert_eq!(module_and_block("12.q_proj"), ("q_proj".to_string(), Some(12)));
        assert_eq!(module_and_block("lm_head"), ("lm_head".to_string(), None));
    }

    #[test]
    fn labels() {
        assert_eq!(target_label(3.0), "3.00");
        assert_eq!(target_label(2.5), "2.50");
        assert_eq!(percent(0.0107), "1.07%");
        assert_eq!(percent(3.0 / 224.0), "1.34%");
    }
}
