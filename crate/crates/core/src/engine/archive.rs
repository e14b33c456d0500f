//! The archive of verified samples and its Pareto front.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moea::{pareto_indices, ObjectivePoint};
use crate::space::{BitConfig, SearchSpace};

#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveEntry {
    pub config: BitConfig,
    /// Verified evaluator score.
    pub score: f64,
    /// Effective bits per weight.
    pub bits: f64,
    /// Outer iteration that produced the entry; 0 for initial samples.
    pub iteration: usize,
}

impl ArchiveEntry {
    pub fn objectives(&self) -> ObjectivePoint {
        ObjectivePoint::new(self.score, self.bits)
    }
}

/// One line of an archive file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArchiveRecord {
    pub bits: Vec<u8>,
    pub score: f64,
    pub eff_bits: f64,
    pub iter: usize,
}

/// Verified samples in insertion order, unique by config.
#[derive(Debug, Clone)]
pub struct Archive {
    space: SearchSpace,
    entries: Vec<ArchiveEntry>,
    index: HashMap<BitConfig, usize>,
}

impl Archive {
    pub fn new(space: SearchSpace) -> Self {
        Self {
            space,
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn entries(&self) -> &[ArchiveEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, config: &BitConfig) -> bool {
        self.index.contains_key(config)
    }

    pub fn get(&self, config: &BitConfig) -> Option<&ArchiveEntry> {
        self.index.get(config).map(|&i| &self.entries[i])
    }

    /// Adds a verified sample. Returns `false` without modifying the archive
    /// if the config is already present.
    pub fn insert(&mut self, config: BitConfig, score: f64, iteration: usize) -> Result<bool> {
        self.space.validate(&config)?;
        if !score.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "archive score for {config} is not finite"
            )));
        }
        if self.index.contains_key(&config) {
            return Ok(false);
        }
        let bits = self.space.effective_bits(&config);
        self.index.insert(config.clone(), self.entries.len());
        self.entries.push(ArchiveEntry {
            config,
            score,
            bits,
            iteration,
        });
        Ok(true)
    }

    pub fn objective_points(&self) -> Vec<ObjectivePoint> {
        self.entries.iter().map(ArchiveEntry::objectives).collect()
    }

    /// Writes one JSON object per line, in insertion order.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.entries {
            let record = ArchiveRecord {
                bits: e.config.bits().to_vec(),
                score: e.score,
                eff_bits: e.bits,
                iter: e.iteration,
            };
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    /// Reads an archive file written by [`Archive::write_jsonl`]. Effective
    /// bits are recomputed and must agree with the stored value.
    pub fn read_jsonl<R: BufRead>(space: SearchSpace, input: R) -> Result<Self> {
        let mut archive = Archive::new(space);
        for (n, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::Checkpoint(format!("archive line {}: {e}", n + 1)))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: ArchiveRecord = serde_json::from_str(&line)
                .map_err(|e| Error::Checkpoint(format!("archive line {}: {e}", n + 1)))?;
            let config = archive.space.config(record.bits)?;
            let bits = archive.space.effective_bits(&config);
            if (bits - record.eff_bits).abs() > 1e-12 {
                return Err(Error::Checkpoint(format!(
                    "archive line {}: stored eff_bits {} disagrees with {bits}",
                    n + 1,
                    record.eff_bits
                )));
            }
            if !archive.insert(config, record.score, record.iter)? {
                return Err(Error::Checkpoint(format!(
                    "archive line {}: duplicate config",
                    n + 1
                )));
            }
        }
        Ok(archive)
    }
}

/// Front export record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrontRecord {
    pub eff_bits: f64,
    pub score: f64,
    pub bits: Vec<u8>,
}

/// Mutually non-dominated archive entries, ascending in bits.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoFront {
    entries: Vec<ArchiveEntry>,
}

impl ParetoFront {
    /// Non-dominated subset of `entries`, ordered by (bits, score, input order).
    pub fn from_entries(entries: &[ArchiveEntry]) -> Self {
        let points: Vec<ObjectivePoint> = entries.iter().map(ArchiveEntry::objectives).collect();
        let mut members: Vec<ArchiveEntry> = pareto_indices(&points)
            .into_iter()
            .map(|i| entries[i].clone())
            .collect();
        // Stable sort keeps insertion order among exact ties.
        members.sort_by(|a, b| a.bits.total_cmp(&b.bits).then(a.score.total_cmp(&b.score)));
        Self { entries: members }
    }

    pub fn entries(&self) -> &[ArchiveEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn points(&self) -> Vec<ObjectivePoint> {
        self.entries.iter().map(ArchiveEntry::objectives).collect()
    }

    pub fn configs(&self) -> Vec<BitConfig> {
        self.entries.iter().map(|e| e.config.clone()).collect()
    }

    pub fn to_records(&self) -> Vec<FrontRecord> {
        self.entries
            .iter()
            .map(|e| FrontRecord {
                eff_bits: e.bits,
                score: e.score,
                bits: e.config.bits().to_vec(),
            })
            .collect()
    }
}

pub fn pareto_front(archive: &Archive) -> Result<ParetoFront> {
    if archive.is_empty() {
        return Err(Error::Empty("archive"));
    }
    Ok(ParetoFront::from_entries(archive.entries()))
}

/// Slack added to the tolerance so that targets sitting exactly on the
/// boundary survive floating-point rounding of the effective bits.
const TOLERANCE_SLACK: f64 = 1e-12;

pub const DEFAULT_TOLERANCE: f64 = 0.005;

/// Lowest-score entry whose effective bits lie within `tolerance` of
/// `target_bits`; ties go to fewer bits, then earlier insertion.
pub fn select_optimal(archive: &Archive, target_bits: f64, tolerance: f64) -> Result<&ArchiveEntry> {
    if !(tolerance.is_finite() && tolerance >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be non-negative, got {tolerance}"
        )));
    }
    let best = archive
        .entries()
        .iter()
        .filter(|e| (e.bits - target_bits).abs() <= tolerance + TOLERANCE_SLACK)
        .reduce(|best, e| {
            let better = e.score < best.score || (e.score == best.score && e.bits < best.bits);
            if better {
                e
            } else {
                best
            }
        });
    best.ok_or_else(|| Error::NotFound {
        target: target_bits,
        tolerance,
        nearest: archive
            .entries()
            .iter()
            .map(|e| e.bits)
            .min_by(|a, b| (a - target_bits).abs().total_cmp(&(b - target_bits).abs())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{LayerSpec, QuantOverhead};
    use std::collections::BTreeMap;

    fn space() -> SearchSpace {
        SearchSpace::from_layers(
            (0..4)
                .map(|i| LayerSpec::new(format!("l{i}"), 1, vec![2, 3, 4]))
                .collect(),
        )
        .unwrap()
    }

    fn entry(score: f64, bits: f64) -> ArchiveEntry {
        ArchiveEntry {
            config: BitConfig::from_bits_unchecked(vec![]),
            score,
            bits,
            iteration: 0,
        }
    }

    #[test]
    fn insert_dedups_and_validates() {
        let s = space();
        let mut a = Archive::new(s.clone());
        assert!(a.insert(s.max_config(), 0.1, 0).unwrap());
        assert!(!a.insert(s.max_config(), 0.5, 3).unwrap());
        assert_eq!(a.len(), 1);
        assert_eq!(a.entries()[0].score, 0.1);
        assert_eq!(a.entries()[0].bits, 4.25);
        assert!(a
            .insert(BitConfig::from_bits_unchecked(vec![9, 9, 9, 9]), 0.1, 0)
            .is_err());
        assert!(a.insert(s.min_config(), f64::NAN, 0).is_err());
    }

    #[test]
    fn front_examples() {
        let single = ParetoFront::from_entries(&[entry(0.5, 3.0)]);
        assert_eq!(single.len(), 1);

        let f = ParetoFront::from_entries(&[entry(0.1, 3.0), entry(0.2, 2.5), entry(0.3, 2.5)]);
        let pts: Vec<(f64, f64)> = f.points().iter().map(|p| (p.score, p.bits)).collect();
        assert_eq!(pts, vec![(0.2, 2.5), (0.1, 3.0)]);

        assert!(pareto_front(&Archive::new(space())).is_err());
    }

    #[test]
    fn select_optimal_filters_then_minimizes() {
        let layers = vec![LayerSpec::new("a", 1000, (1..=255).collect::<Vec<u8>>())];
        let s = SearchSpace::new(layers, QuantOverhead::NONE, BTreeMap::new()).unwrap();
        let mut a = Archive::new(s.clone());
        // Single layer with bits b has effective bits b; emulate fractional
        // bits through direct entries.
        a.entries = vec![
            ArchiveEntry { config: s.config(vec![1]).unwrap(), score: 0.5, bits: 2.49, iteration: 0 },
            ArchiveEntry { config: s.config(vec![2]).unwrap(), score: 0.4, bits: 2.502, iteration: 0 },
            ArchiveEntry { config: s.config(vec![3]).unwrap(), score: 0.3, bits: 2.51, iteration: 0 },
        ];
        let picked = select_optimal(&a, 2.5, DEFAULT_TOLERANCE).unwrap();
        assert_eq!(picked.bits, 2.502);

        match select_optimal(&a, 3.0, DEFAULT_TOLERANCE) {
            Err(Error::NotFound { nearest: Some(b), .. }) => assert_eq!(b, 2.51),
            other => panic!("{other:?}"),
        }
        assert!(select_optimal(&a, 2.5, -1.0).is_err());
    }

    #[test]
    fn select_optimal_tie_break() {
        let s = space();
        let mut a = Archive::new(s.clone());
        a.insert(s.config(vec![4, 4, 4, 2]).unwrap(), 0.2, 0).unwrap();
        a.insert(s.config(vec![4, 4, 2, 4]).unwrap(), 0.2, 0).unwrap();
        let picked = select_optimal(&a, 3.75, 0.0).unwrap();
        assert_eq!(picked.config.bits(), &[4, 4, 4, 2]);
    }

    #[test]
    fn all_max_selected_at_top_target() {
        let s = space();
        let mut a = Archive::new(s.clone());
        a.insert(s.max_config(), 0.01, 0).unwrap();
        a.insert(s.min_config(), 0.9, 0).unwrap();
        a.insert(s.config(vec![4, 4, 4, 3]).unwrap(), 0.02, 0).unwrap();
        let picked = select_optimal(&a, 4.25, DEFAULT_TOLERANCE).unwrap();
        assert_eq!(&picked.config, &s.max_config());
    }

    #[test]
    fn jsonl_round_trip() {
        let s = space();
        let mut a = Archive::new(s.clone());
        a.insert(s.config(vec![2, 3, 4, 2]).unwrap(), 0.123_456_789_012_345_6, 0).unwrap();
        a.insert(s.max_config(), 1.0 / 3.0, 4).unwrap();
        let mut buf = Vec::new();
        a.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(r#"{"bits":[2,3,4,2],"score":0.1234567890123456,"eff_bits":3.0,"iter":0}"#), "{text}");
        let back = Archive::read_jsonl(s, buf.as_slice()).unwrap();
        assert_eq!(back.entries(), a.entries());
        let mut again = Vec::new();
        back.write_jsonl(&mut again).unwrap();
        assert_eq!(buf, again);
    }
}
