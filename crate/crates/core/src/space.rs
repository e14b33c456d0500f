//! Search space description, candidate encoding and the memory objective.
//!
//! A [`SearchSpace`] is an ordered list of quantizable layers, each with its
//! own alphabet of allowed bit-widths, plus the per-group overhead of the
//! quantization scheme and an optional set of layers frozen at a fixed
//! precision. A [`BitConfig`] assigns one bit-width to every layer, frozen
//! ones included, so a serialized config is self-describing.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use num_bigint::BigUint;
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One quantizable layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    /// Number of weights in the layer.
    pub params: u64,
    /// Allowed bit-widths, strictly ascending.
    pub choices: Vec<u8>,
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, params: u64, choices: impl Into<Vec<u8>>) -> Self {
        Self {
            name: name.into(),
            params,
            choices: choices.into(),
        }
    }

    pub fn min_choice(&self) -> u8 {
        self.choices[0]
    }

    pub fn max_choice(&self) -> u8 {
        self.choices[self.choices.len() - 1]
    }

    fn validate(&self) -> Result<()> {
        if self.params == 0 {
            return Err(Error::InvalidSpace(format!(
                "layer '{}' has zero parameters",
                self.name
            )));
        }
        if self.choices.is_empty() {
            return Err(Error::InvalidSpace(format!(
                "layer '{}' has an empty choice list",
                self.name
            )));
        }
        if self.choices[0] == 0 {
            return Err(Error::InvalidSpace(format!(
                "layer '{}' allows a zero bit-width",
                self.name
            )));
        }
        if self.choices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSpace(format!(
                "layer '{}' choices must be strictly ascending, got {:?}",
                self.name, self.choices
            )));
        }
        Ok(())
    }
}

/// Per-group storage overhead of grouped quantization: every `group_size`
/// weights carry one scale and one zero point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantOverhead {
    pub group_size: u32,
    pub scale_bits: u32,
    pub zero_bits: u32,
}

impl Default for QuantOverhead {
    fn default() -> Self {
        Self {
            group_size: 128,
            scale_bits: 16,
            zero_bits: 16,
        }
    }
}

impl QuantOverhead {
    pub const NONE: QuantOverhead = QuantOverhead {
        group_size: 1,
        scale_bits: 0,
        zero_bits: 0,
    };

    /// Extra bits per weight.
    pub fn bits_per_weight(&self) -> f64 {
        f64::from(self.scale_bits + self.zero_bits) / f64::from(self.group_size)
    }
}

/// A bit-width per layer, aligned with [`SearchSpace::layers`].
///
/// Equality and hashing are over the full vector; the archive relies on this
/// for deduplication.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BitConfig(Vec<u8>);

impl BitConfig {
    pub(crate) fn from_bits_unchecked(bits: Vec<u8>) -> Self {
        BitConfig(bits)
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub(crate) fn set(&mut self, layer: usize, bits: u8) {
        self.0[layer] = bits;
    }

    pub fn into_bits(self) -> Vec<u8> {
        self.0
    }
}

impl fmt::Display for BitConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, b) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{b}")?;
        }
        write!(f, "]")
    }
}

/// On-disk layout of a search-space file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpaceFile {
    pub group_size: u32,
    pub scale_bits: u32,
    pub zero_bits: u32,
    pub layers: Vec<LayerFile>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub frozen: BTreeMap<String, u8>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerFile {
    pub name: String,
    pub params: u64,
    pub choices: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    layers: Vec<LayerSpec>,
    overhead: QuantOverhead,
    frozen: BTreeMap<usize, u8>,
    free: Vec<usize>,
    total_params: u128,
}

impl SearchSpace {
    pub fn new(
        layers: Vec<LayerSpec>,
        overhead: QuantOverhead,
        frozen: BTreeMap<usize, u8>,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidSpace("no layers".into()));
        }
        if overhead.group_size == 0 {
            return Err(Error::InvalidSpace("group_size must be at least 1".into()));
        }
        let mut names = HashSet::with_capacity(layers.len());
        for layer in &layers {
            layer.validate()?;
            if !names.insert(layer.name.as_str()) {
                return Err(Error::InvalidSpace(format!(
                    "duplicate layer name '{}'",
                    layer.name
                )));
            }
        }
        for (&idx, &bits) in &frozen {
            let layer = layers.get(idx).ok_or_else(|| {
                Error::InvalidSpace(format!("frozen index {idx} out of range"))
            })?;
            if !layer.choices.contains(&bits) {
                return Err(Error::InvalidSpace(format!(
                    "layer '{}' frozen at {bits} bits, which is not among {:?}",
                    layer.name, layer.choices
                )));
            }
        }
        let free: Vec<usize> = (0..layers.len())
            .filter(|i| !frozen.contains_key(i))
            .collect();
        if free.is_empty() {
            return Err(Error::InvalidSpace("every layer is frozen".into()));
        }
        let total_params = layers.iter().map(|l| u128::from(l.params)).sum();
        Ok(Self {
            layers,
            overhead,
            frozen,
            free,
            total_params,
        })
    }

    /// Unconstrained space with the default overhead.
    pub fn from_layers(layers: Vec<LayerSpec>) -> Result<Self> {
        Self::new(layers, QuantOverhead::default(), BTreeMap::new())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let file: SpaceFile = serde_json::from_str(&text).map_err(|source| Error::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_file(file)
    }

    pub fn from_file(file: SpaceFile) -> Result<Self> {
        let layers: Vec<LayerSpec> = file
            .layers
            .into_iter()
            .map(|l| LayerSpec::new(l.name, l.params, l.choices))
            .collect();
        let index: HashMap<&str, usize> = layers
            .iter()
            .enumerate()
            .map(|(i, l)| (l.name.as_str(), i))
            .collect();
        let mut frozen = BTreeMap::new();
        for (name, bits) in &file.frozen {
            let idx = *index.get(name.as_str()).ok_or_else(|| {
                Error::InvalidSpace(format!("frozen layer '{name}' is not declared"))
            })?;
            frozen.insert(idx, *bits);
        }
        let overhead = QuantOverhead {
            group_size: file.group_size,
            scale_bits: file.scale_bits,
            zero_bits: file.zero_bits,
        };
        Self::new(layers, overhead, frozen)
    }

    pub fn to_file(&self) -> SpaceFile {
        SpaceFile {
            group_size: self.overhead.group_size,
            scale_bits: self.overhead.scale_bits,
            zero_bits: self.overhead.zero_bits,
            layers: self
                .layers
                .iter()
                .map(|l| LayerFile {
                    name: l.name.clone(),
                    params: l.params,
                    choices: l.choices.clone(),
                })
                .collect(),
            frozen: self
                .frozen
                .iter()
                .map(|(&i, &b)| (self.layers[i].name.clone(), b))
                .collect(),
        }
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn overhead(&self) -> QuantOverhead {
        self.overhead
    }

    pub fn frozen(&self) -> &BTreeMap<usize, u8> {
        &self.frozen
    }

    pub fn is_frozen(&self, layer: usize) -> bool {
        self.frozen.contains_key(&layer)
    }

    /// Indices of the non-frozen layers, ascending.
    pub fn free_layers(&self) -> &[usize] {
        &self.free
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    /// Copy of this space with additional layers frozen. Existing frozen
    /// entries are kept.
    pub fn with_frozen(&self, extra: impl IntoIterator<Item = (usize, u8)>) -> Result<Self> {
        let mut frozen = self.frozen.clone();
        frozen.extend(extra);
        Self::new(self.layers.clone(), self.overhead, frozen)
    }

    /// Copy of this space with nothing frozen.
    pub fn unfrozen(&self) -> Self {
        Self::new(self.layers.clone(), self.overhead, BTreeMap::new())
            .expect("a valid space stays valid without frozen layers")
    }

    /// Number of configurations ignoring frozen assignments.
    pub fn unconstrained_size(&self) -> BigUint {
        self.layers
            .iter()
            .fold(BigUint::from(1u32), |acc, l| acc * l.choices.len())
    }

    /// Number of configurations reachable with frozen layers held fixed.
    pub fn size(&self) -> BigUint {
        self.free
            .iter()
            .fold(BigUint::from(1u32), |acc, &i| acc * self.layers[i].choices.len())
    }

    /// Validates `bits` against this space.
    pub fn config(&self, bits: Vec<u8>) -> Result<BitConfig> {
        self.check_bits(&bits)?;
        Ok(BitConfig(bits))
    }

    pub fn validate(&self, config: &BitConfig) -> Result<()> {
        self.check_bits(&config.0)
    }

    fn check_bits(&self, bits: &[u8]) -> Result<()> {
        if bits.len() != self.layers.len() {
            return Err(Error::InvalidConfig(format!(
                "expected {} layers, got {}",
                self.layers.len(),
                bits.len()
            )));
        }
        for (i, (&b, layer)) in bits.iter().zip(&self.layers).enumerate() {
            if !layer.choices.contains(&b) {
                return Err(Error::InvalidConfig(format!(
                    "layer '{}' cannot take {b} bits (choices {:?})",
                    layer.name, layer.choices
                )));
            }
            if let Some(&f) = self.frozen.get(&i) {
                if f != b {
                    return Err(Error::InvalidConfig(format!(
                        "layer '{}' is frozen at {f} bits, got {b}",
                        layer.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Every free layer at `pick(layer)`, frozen layers at their frozen value.
    fn uniform_config(&self, pick: impl Fn(&LayerSpec) -> u8) -> BitConfig {
        BitConfig(
            self.layers
                .iter()
                .enumerate()
                .map(|(i, l)| self.frozen.get(&i).copied().unwrap_or_else(|| pick(l)))
                .collect(),
        )
    }

    pub fn min_config(&self) -> BitConfig {
        self.uniform_config(LayerSpec::min_choice)
    }

    pub fn max_config(&self) -> BitConfig {
        self.uniform_config(LayerSpec::max_choice)
    }

    /// Parameter-weighted average bits per weight, including the per-group
    /// scale/zero overhead.
    pub fn effective_bits(&self, config: &BitConfig) -> f64 {
        debug_assert_eq!(config.len(), self.layers.len());
        // Integer accumulation keeps uniform configs exact (e.g. 2.25, 4.25).
        let weighted: u128 = self
            .layers
            .iter()
            .zip(&config.0)
            .map(|(l, &b)| u128::from(l.params) * u128::from(b))
            .sum();
        weighted as f64 / self.total_params as f64 + self.overhead.bits_per_weight()
    }

    /// Effective bits of the all-min and all-max configs.
    pub fn effective_bits_range(&self) -> (f64, f64) {
        (
            self.effective_bits(&self.min_config()),
            self.effective_bits(&self.max_config()),
        )
    }

    /// Uniform draw over the free layers' choices.
    pub fn random_config<R: Rng + ?Sized>(&self, rng: &mut R) -> BitConfig {
        let mut bits: Vec<u8> = self
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| self.frozen.get(&i).copied().unwrap_or(l.choices[0]))
            .collect();
        for &i in &self.free {
            bits[i] = *self.layers[i]
                .choices
                .choose(rng)
                .expect("choices are non-empty");
        }
        BitConfig(bits)
    }
}
