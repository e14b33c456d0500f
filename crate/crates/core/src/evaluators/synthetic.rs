//! Closed-form stand-ins for a quantization-quality evaluator.
//!
//! The separable model scores a config as `Σ_i s_i · p(b_i)`; the
//! interaction model adds `Σ_{i<j} M_ij · p(b_i) · p(b_j)`. Observation noise
//! is drawn from a generator seeded by the config itself, so repeated
//! evaluation of a config is exactly repeatable.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{EvalError, Evaluator};
use crate::error::{Error, Result};
use crate::space::BitConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Separable,
    Interaction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticModel {
    pub kind: ModelKind,
    /// Per-layer sensitivity weights `s_i`.
    pub weights: Vec<f64>,
    /// Degradation `p(b)` per bit-width, strictly decreasing in `b`.
    pub penalty: BTreeMap<u8, f64>,
    /// Symmetric non-negative `M`, required for [`ModelKind::Interaction`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interaction: Option<Vec<Vec<f64>>>,
    /// Standard deviation of the Gaussian observation noise.
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticModel {
    /// `{2: 1.0, 3: 0.3, 4: 0.1}`.
    pub fn default_penalty() -> BTreeMap<u8, f64> {
        BTreeMap::from([(2, 1.0), (3, 0.3), (4, 0.1)])
    }

    pub fn separable(weights: Vec<f64>, penalty: BTreeMap<u8, f64>) -> Result<Self> {
        let model = Self {
            kind: ModelKind::Separable,
            weights,
            penalty,
            interaction: None,
            noise: 0.0,
            seed: 0,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn interaction(
        weights: Vec<f64>,
        penalty: BTreeMap<u8, f64>,
        matrix: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let model = Self {
            kind: ModelKind::Interaction,
            weights,
            penalty,
            interaction: Some(matrix),
            noise: 0.0,
            seed: 0,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn with_noise(mut self, std: f64, seed: u64) -> Result<Self> {
        self.noise = std;
        self.seed = seed;
        self.validate()?;
        Ok(self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let model: Self = serde_json::from_str(&text).map_err(|source| Error::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.weights.is_empty() {
            return bad("synthetic model has no layer weights".into());
        }
        if self.weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return bad("synthetic weights must be positive and finite".into());
        }
        if self.penalty.is_empty() {
            return bad("penalty table is empty".into());
        }
        if self.penalty.values().any(|p| !p.is_finite() || *p <= 0.0) {
            return bad("penalties must be positive and finite".into());
        }
        // BTreeMap iterates in ascending bit order.
        let values: Vec<f64> = self.penalty.values().copied().collect();
        if values.windows(2).any(|w| w[1] >= w[0]) {
            return bad("penalty must be strictly decreasing in bit-width".into());
        }
        if !self.noise.is_finite() || self.noise < 0.0 {
            return bad("noise must be a non-negative standard deviation".into());
        }
        match (self.kind, &self.interaction) {
            (ModelKind::Interaction, None) => {
                return bad("interaction model needs an interaction matrix".into())
            }
            (_, Some(m)) => {
                let n = self.weights.len();
                if m.len() != n || m.iter().any(|row| row.len() != n) {
                    return bad(format!("interaction matrix must be {n}x{n}"));
                }
                for i in 0..n {
                    for j in 0..n {
                        let v = m[i][j];
                        if !v.is_finite() || v < 0.0 {
                            return bad("interaction entries must be non-negative".into());
                        }
                        if v != m[j][i] {
                            return bad(format!("interaction matrix not symmetric at ({i},{j})"));
                        }
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn layers(&self) -> usize {
        self.weights.len()
    }

    fn penalties(&self, config: &BitConfig) -> std::result::Result<Vec<f64>, EvalError> {
        if config.len() != self.weights.len() {
            return Err(EvalError::Invalid(format!(
                "config has {} layers, model has {}",
                config.len(),
                self.weights.len()
            )));
        }
        config
            .bits()
            .iter()
            .map(|b| {
                self.penalty
                    .get(b)
                    .copied()
                    .ok_or_else(|| EvalError::Invalid(format!("no penalty for {b} bits")))
            })
            .collect()
    }

    fn separable_term(&self, p: &[f64]) -> f64 {
        self.weights.iter().zip(p).map(|(s, p)| s * p).sum()
    }

    fn interaction_term(&self, p: &[f64]) -> f64 {
        let Some(m) = &self.interaction else {
            return 0.0;
        };
        let mut total = 0.0;
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                total += m[i][j] * p[i] * p[j];
            }
        }
        total
    }

    fn noise_for(&self, config: &BitConfig) -> f64 {
        if self.noise == 0.0 {
            return 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config_hash(config) ^ self.seed);
        let z: f64 = StandardNormal.sample(&mut rng);
        self.noise * z
    }

    /// `Σ s_i p(b_i)` plus noise, ignoring any interaction matrix.
    pub fn separable_eval(&self, config: &BitConfig) -> std::result::Result<f64, EvalError> {
        let p = self.penalties(config)?;
        Ok(self.separable_term(&p) + self.noise_for(config))
    }

    /// Separable term plus pairwise interactions plus noise.
    pub fn interaction_eval(&self, config: &BitConfig) -> std::result::Result<f64, EvalError> {
        let p = self.penalties(config)?;
        Ok(self.separable_term(&p) + self.interaction_term(&p) + self.noise_for(config))
    }

    pub fn score(&self, config: &BitConfig) -> std::result::Result<f64, EvalError> {
        match self.kind {
            ModelKind::Separable => self.separable_eval(config),
            ModelKind::Interaction => self.interaction_eval(config),
        }
    }
}

impl Evaluator for SyntheticModel {
    fn evaluate_batch(&mut self, configs: &[BitConfig]) -> std::result::Result<Vec<f64>, EvalError> {
        configs.iter().map(|c| self.score(c)).collect()
    }
}

/// FNV-1a over the bits vector; stable across platforms and releases.
pub(crate) fn config_hash(config: &BitConfig) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in config.bits() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(bits: &[u8]) -> BitConfig {
        BitConfig::from_bits_unchecked(bits.to_vec())
    }

    #[test]
    fn all_max_closed_form() {
        let model = SyntheticModel::separable(vec![1.0; 5], SyntheticModel::default_penalty())
            .unwrap();
        let s = model.score(&cfg(&[4; 5])).unwrap();
        assert!((s - 0.5).abs() < 1e-15);
    }

    #[test]
    fn demoting_heaviest_layer_hurts_most() {
        let model = SyntheticModel::separable(
            vec![0.5, 2.0, 7.5, 1.0],
            SyntheticModel::default_penalty(),
        )
        .unwrap();
        let base = model.score(&cfg(&[4; 4])).unwrap();
        let deltas: Vec<f64> = (0..4)
            .map(|i| {
                let mut bits = [4u8; 4];
                bits[i] = 2;
                model.score(&cfg(&bits)).unwrap() - base
            })
            .collect();
        let argmax = (0..4)
            .max_by(|&a, &b| deltas[a].partial_cmp(&deltas[b]).unwrap())
            .unwrap();
        assert_eq!(argmax, 2);
    }

    #[test]
    fn noise_is_repeatable_per_config() {
        let model = SyntheticModel::separable(vec![1.0; 3], SyntheticModel::default_penalty())
            .unwrap()
            .with_noise(0.05, 9)
            .unwrap();
        let a = model.score(&cfg(&[2, 3, 4])).unwrap();
        let b = model.score(&cfg(&[2, 3, 4])).unwrap();
        let c = model.score(&cfg(&[4, 3, 2])).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert_ne!(a, c);
        let quiet = SyntheticModel::separable(vec![1.0; 3], SyntheticModel::default_penalty())
            .unwrap();
        assert_eq!(quiet.score(&cfg(&[2, 3, 4])).unwrap(), quiet.score(&cfg(&[2, 3, 4])).unwrap());
    }

    #[test]
    fn zero_interaction_reduces_to_separable() {
        let w = vec![1.0, 2.0, 3.0];
        let sep = SyntheticModel::separable(w.clone(), SyntheticModel::default_penalty()).unwrap();
        let int =
            SyntheticModel::interaction(w, SyntheticModel::default_penalty(), vec![vec![0.0; 3]; 3])
                .unwrap();
        for bits in [[2, 3, 4], [4, 4, 4], [2, 2, 3]] {
            let c = cfg(&bits);
            assert_eq!(sep.score(&c).unwrap(), int.score(&c).unwrap());
        }
    }

    #[test]
    fn symmetric_layers_swap_invariant() {
        // Layers 0 and 1 share weight and interaction pattern.
        let m = vec![
            vec![0.0, 0.4, 0.2],
            vec![0.4, 0.0, 0.2],
            vec![0.2, 0.2, 0.0],
        ];
        let model = SyntheticModel::interaction(
            vec![1.5, 1.5, 0.7],
            SyntheticModel::default_penalty(),
            m,
        )
        .unwrap();
        let a = model.score(&cfg(&[2, 4, 3])).unwrap();
        let b = model.score(&cfg(&[4, 2, 3])).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn hand_expanded_three_layer_instance() {
        // p = (1.0, 0.3, 0.1) for bits (2, 3, 4)
        // separable: 1*1.0 + 2*0.3 + 3*0.1 = 1.9
        // pairs: M01*1.0*0.3 + M02*1.0*0.1 + M12*0.3*0.1
        //      = 0.5*0.3 + 0.25*0.1 + 2.0*0.03 = 0.15 + 0.025 + 0.06 = 0.235
        let m = vec![
            vec![0.0, 0.5, 0.25],
            vec![0.5, 0.0, 2.0],
            vec![0.25, 2.0, 0.0],
        ];
        let model =
            SyntheticModel::interaction(vec![1.0, 2.0, 3.0], SyntheticModel::default_penalty(), m)
                .unwrap();
        let s = model.score(&cfg(&[2, 3, 4])).unwrap();
        assert!((s - 2.135).abs() < 1e-12, "{s}");
    }

    #[test]
    fn validation() {
        let increasing = BTreeMap::from([(2, 0.1), (4, 0.2)]);
        assert!(SyntheticModel::separable(vec![1.0], increasing).is_err());
        assert!(SyntheticModel::separable(vec![-1.0], SyntheticModel::default_penalty()).is_err());
        let asym = vec![vec![0.0, 1.0], vec![0.5, 0.0]];
        assert!(
            SyntheticModel::interaction(vec![1.0, 1.0], SyntheticModel::default_penalty(), asym)
                .is_err()
        );
        let model = SyntheticModel::separable(vec![1.0], SyntheticModel::default_penalty()).unwrap();
        assert!(model.score(&cfg(&[8])).is_err());
        assert!(model.score(&cfg(&[2, 2])).is_err());
    }

    #[test]
    fn params_file_shape() {
        let json = r#"{"kind":"interaction","weights":[1.0,2.0],
            "penalty":{"2":1.0,"3":0.3,"4":0.1},
            "interaction":[[0,0.5],[0.5,0]],"noise":0.01,"seed":3}"#;
        let model: SyntheticModel = serde_json::from_str(json).unwrap();
        model.validate().unwrap();
        assert_eq!(model.kind, ModelKind::Interaction);
        assert_eq!(model.penalty[&3], 0.3);
    }
}
