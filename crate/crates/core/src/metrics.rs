//! Softmax, KL and Jensen–Shannon divergence over logits.
//!
//! All divergences are in nats, so the JSD is bounded by `ln 2`.

use crate::error::{Error, Result};

/// Unnormalized log-scores over a vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "logit vector needs at least 2 entries, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "logit {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution(Vec<f64>);

impl Distribution {
    /// Accepts non-negative entries summing to one within `1e-9`.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidParameter(
                "probabilities must be finite and non-negative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self(probs))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn midpoint(&self, other: &Distribution) -> Distribution {
        Distribution(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| 0.5 * (a + b))
                .collect(),
        )
    }
}

/// Max-shifted exponential normalization.
pub fn softmax(z: &LogitVector) -> Distribution {
    let max = z.0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.0.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Distribution(exps.into_iter().map(|e| e / total).collect())
}

/// `Σ p_i ln(p_i / q_i)` with `0 · ln(0/q) = 0`.
pub fn kl_divergence(p: &Distribution, q: &Distribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            expected: p.len(),
            found: q.len(),
        });
    }
    let mut total = 0.0;
    for (i, (&pi, &qi)) in p.0.iter().zip(&q.0).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(Error::UndefinedDivergence { index: i });
        }
        total += pi * (pi / qi).ln();
    }
    // Rounding can leave a tiny negative residue for p ≈ q.
    Ok(total.max(0.0))
}

/// Jensen–Shannon divergence between the softmax distributions of two logit
/// vectors.
pub fn jsd(z: &LogitVector, z_hat: &LogitVector) -> Result<f64> {
    if z.len() != z_hat.len() {
        return Err(Error::LengthMismatch {
            expected: z.len(),
            found: z_hat.len(),
        });
    }
    Ok(jsd_distributions(&softmax(z), &softmax(z_hat)))
}

/// JSD between two distributions of equal length.
pub fn jsd_distributions(s: &Distribution, s_hat: &Distribution) -> f64 {
    let m = s.midpoint(s_hat);
    // m_i >= p_i / 2 everywhere, so neither KL term can be undefined.
    let left = kl_divergence(s, &m).expect("midpoint covers the support");
    let right = kl_divergence(s_hat, &m).expect("midpoint covers the support");
    0.5 * (left + right)
}

/// Mean JSD over a calibration set of (reference, quantized) logit pairs.
/// Lower is better.
pub fn quality_score<'a, I>(pairs: I) -> Result<f64>
where
    I: IntoIterator<Item = (&'a LogitVector, &'a LogitVector)>,
{
    let mut total = 0.0;
    let mut count = 0usize;
    for (z, z_hat) in pairs {
        total += jsd(z, z_hat)?;
        count += 1;
    }
    if count == 0 {
        return Err(Error::Empty("calibration pair sequence"));
    }
    Ok(total / count as f64)
}
