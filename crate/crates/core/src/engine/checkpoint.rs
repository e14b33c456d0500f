//! On-disk search state, written after every iteration.
//!
//! A checkpoint directory holds `checkpoint.json` (parameters, searched
//! space, counters, generator state), `archive.jsonl`, and a `front.json`
//! snapshot that is written but never read back.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::archive::{Archive, ParetoFront};
use super::{SearchParams, SearchReport};
use crate::error::{Error, Result};
use crate::space::{SearchSpace, SpaceFile};

pub const STATE_FILE: &str = "checkpoint.json";
pub const ARCHIVE_FILE: &str = "archive.jsonl";
pub const FRONT_FILE: &str = "front.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    /// Decimal, since JSON numbers cannot hold a u128 exactly.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        use rand::SeedableRng;
        let pos: u128 = self
            .word_pos
            .parse()
            .map_err(|e| Error::Checkpoint(format!("bad word_pos '{}': {e}", self.word_pos)))?;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointState {
    /// Iterations completed so far.
    pub iteration: usize,
    pub params: SearchParams,
    /// The space actually searched, after pruning.
    pub space: SpaceFile,
    pub report: SearchReport,
    pub rng: RngState,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub state: CheckpointState,
    pub archive: Archive,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes to a sibling temp file and renames it over `path`.
fn write_atomic(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let tmp: PathBuf = path.with_extension("tmp");
    let file = File::create(&tmp).map_err(io_err(&tmp))?;
    let mut out = BufWriter::new(file);
    write(&mut out).map_err(io_err(&tmp))?;
    out.flush().map_err(io_err(&tmp))?;
    drop(out);
    fs::rename(&tmp, path).map_err(io_err(path))
}

impl Checkpoint {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        write_atomic(&dir.join(ARCHIVE_FILE), |out| self.archive.write_jsonl(out))?;
        if !self.archive.is_empty() {
            let front = ParetoFront::from_entries(self.archive.entries()).to_records();
            write_atomic(&dir.join(FRONT_FILE), |out| {
                serde_json::to_writer_pretty(&mut *out, &front)?;
                out.write_all(b"\n")
            })?;
        }
        write_atomic(&dir.join(STATE_FILE), |out| {
            serde_json::to_writer_pretty(&mut *out, &self.state)?;
            out.write_all(b"\n")
        })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let state_path = dir.join(STATE_FILE);
        let text = fs::read_to_string(&state_path).map_err(io_err(&state_path))?;
        let state: CheckpointState =
            serde_json::from_str(&text).map_err(|source| Error::Parse {
                path: state_path.clone(),
                source,
            })?;
        let space = SearchSpace::from_file(state.space.clone())?;
        let archive_path = dir.join(ARCHIVE_FILE);
        let file = File::open(&archive_path).map_err(io_err(&archive_path))?;
        let archive = Archive::read_jsonl(space, BufReader::new(file))?;
        Ok(Self { state, archive })
    }

    pub fn exists(dir: &Path) -> bool {
        dir.join(STATE_FILE).is_file()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngCore, SeedableRng};

    #[test]
    fn rng_state_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..37 {
            rng.next_u32();
        }
        let state = RngState::capture(&rng);
        let json = serde_json::to_string(&state).unwrap();
        let mut back = serde_json::from_str::<RngState>(&json).unwrap().restore().unwrap();
        for _ in 0..10 {
            assert_eq!(rng.next_u64(), back.next_u64());
        }
    }
}
