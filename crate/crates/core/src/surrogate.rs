//! Cubic radial-basis-function surrogate of the quality score.
//!
//! The interpolant is
//!
//! ```text
//! s(x) = Σ_i w_i ‖x − x_i‖³ + b + aᵀx
//! ```
//!
//! fitted by solving the saddle-point system
//!
//! ```text
//! [ Φ + λI  P ] [w]   [y]
//! [ Pᵀ      0 ] [c] = [0]      Φ_ij = ‖x_i − x_j‖³,  P_i = (1, x_iᵀ)
//! ```
//!
//! Inputs are bit-widths of the free layers scaled to `[0, 1]`.

use std::cmp::Ordering;
use std::collections::HashMap;

use log::debug;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::space::{BitConfig, SearchSpace};

/// Default ridge on the kernel block.
pub const DEFAULT_REGULARIZATION: f64 = 1e-8;

const BATCH_BLOCK: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(features: Vec<f64>) -> Self {
        Self(features)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Maps configs of one space to feature vectors: each free layer becomes
/// `(bits − min) / (max − min)`, frozen layers are dropped.
#[derive(Debug, Clone)]
pub struct FeatureEncoder {
    free: Vec<usize>,
    offset: Vec<f64>,
    scale: Vec<f64>,
}

impl FeatureEncoder {
    pub fn new(space: &SearchSpace) -> Self {
        let free = space.free_layers().to_vec();
        let mut offset = Vec::with_capacity(free.len());
        let mut scale = Vec::with_capacity(free.len());
        for &i in &free {
            let layer = &space.layers()[i];
            let lo = f64::from(layer.min_choice());
            let span = f64::from(layer.max_choice()) - lo;
            offset.push(lo);
            scale.push(if span > 0.0 { 1.0 / span } else { 0.0 });
        }
        Self {
            free,
            offset,
            scale,
        }
    }

    pub fn dim(&self) -> usize {
        self.free.len()
    }

    pub fn encode(&self, config: &BitConfig) -> FeatureVector {
        let bits = config.bits();
        FeatureVector(
            self.free
                .iter()
                .zip(self.offset.iter().zip(&self.scale))
                .map(|(&i, (lo, s))| (f64::from(bits[i]) - lo) * s)
                .collect(),
        )
    }
}

pub fn encode(config: &BitConfig, space: &SearchSpace) -> FeatureVector {
    FeatureEncoder::new(space).encode(config)
}

#[derive(Debug, Clone)]
pub struct RbfModel {
    /// `n × d`, one center per row.
    centers: DMatrix<f64>,
    center_sq_norms: DVector<f64>,
    weights: DVector<f64>,
    /// `[b, a_1, …, a_d]`.
    tail: DVector<f64>,
    regularization: f64,
}

#[inline]
fn cubic(r: f64) -> f64 {
    r * r * r
}

fn cmp_features(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Merges exact duplicates (averaging their targets) and returns the
/// distinct centers in lexicographic order, so the fit does not depend on
/// the order samples arrive in.
fn merge_duplicates(x: &[FeatureVector], y: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut groups: HashMap<Vec<u64>, (usize, Vec<f64>)> = HashMap::new();
    for (k, (xi, &yi)) in x.iter().zip(y).enumerate() {
        let key: Vec<u64> = xi.0.iter().map(|v| v.to_bits()).collect();
        groups.entry(key).or_insert_with(|| (k, Vec::new())).1.push(yi);
    }
    let mut merged: Vec<(Vec<f64>, f64)> = groups
        .into_values()
        .map(|(first, mut ys)| {
            ys.sort_by(f64::total_cmp);
            let mean = ys.iter().sum::<f64>() / ys.len() as f64;
            (x[first].0.clone(), mean)
        })
        .collect();
    merged.sort_by(|a, b| cmp_features(&a.0, &b.0));
    merged.into_iter().unzip()
}

/// Fits the interpolant. Needs at least `dim + 2` distinct inputs.
pub fn fit_rbf(x: &[FeatureVector], y: &[f64], regularization: f64) -> Result<RbfModel> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if !(regularization.is_finite() && regularization >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "regularization must be non-negative, got {regularization}"
        )));
    }
    let dim = x[0].dim();
    if let Some(bad) = x.iter().find(|v| v.dim() != dim) {
        return Err(Error::LengthMismatch {
            expected: dim,
            found: bad.dim(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("targets must be finite".into()));
    }

    let (centers, targets) = merge_duplicates(x, y);
    let n = centers.len();
    if n < dim + 2 {
        return Err(Error::TooFewSamples {
            needed: dim + 2,
            found: n,
        });
    }

    let size = n + dim + 1;
    let mut system = DMatrix::<f64>::zeros(size, size);
    for i in 0..n {
        for j in 0..i {
            let r = distance(&centers[i], &centers[j]);
            let phi = cubic(r);
            system[(i, j)] = phi;
            system[(j, i)] = phi;
        }
        system[(i, i)] = regularization;
        system[(i, n)] = 1.0;
        system[(n, i)] = 1.0;
        for (k, &v) in centers[i].iter().enumerate() {
            system[(i, n + 1 + k)] = v;
            system[(n + 1 + k, i)] = v;
        }
    }
    let mut rhs = DVector::<f64>::zeros(size);
    rhs.rows_mut(0, n).copy_from_slice(&targets);

    let solution = solve(&system, &rhs)?;
    let center_matrix = DMatrix::from_fn(n, dim, |i, k| centers[i][k]);
    let center_sq_norms = DVector::from_iterator(
        n,
        centers.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>()),
    );
    Ok(RbfModel {
        centers: center_matrix,
        center_sq_norms,
        weights: solution.rows(0, n).into_owned(),
        tail: solution.rows(n, dim + 1).into_owned(),
        regularization,
    })
}

fn residual_ok(system: &DMatrix<f64>, rhs: &DVector<f64>, x: &DVector<f64>) -> bool {
    if x.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let scale = system.amax() * x.amax() + rhs.amax() + 1.0;
    (system * x - rhs).amax() <= 1e-6 * scale
}

/// Partial-pivot LU, falling back to an SVD least-squares solve when the
/// system is singular or the LU answer does not satisfy it.
fn solve(system: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(x) = system.clone().lu().solve(rhs) {
        if residual_ok(system, rhs, &x) {
            return Ok(x);
        }
    }
    debug!("RBF system is singular or ill-conditioned; using SVD fallback");
    let svd = system.clone().svd(true, true);
    let eps = f64::EPSILON * system.nrows() as f64 * svd.singular_values.max();
    let x = svd
        .solve(rhs, eps)
        .map_err(|e| Error::Fit(e.to_string()))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("least-squares solution is not finite".into()));
    }
    Ok(x)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

impl RbfModel {
    pub fn dim(&self) -> usize {
        self.centers.ncols()
    }

    /// Number of distinct centers.
    pub fn len(&self) -> usize {
        self.centers.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn weights(&self) -> &[f64] {
        self.weights.as_slice()
    }

    /// Intercept followed by one linear coefficient per feature.
    pub fn tail_coefficients(&self) -> &[f64] {
        self.tail.as_slice()
    }

    pub fn regularization(&self) -> f64 {
        self.regularization
    }

    pub fn centers(&self) -> Vec<FeatureVector> {
        self.centers
            .row_iter()
            .map(|r| FeatureVector(r.iter().copied().collect()))
            .collect()
    }

    fn check_dim(&self, x: &FeatureVector) -> Result<()> {
        if x.dim() != self.dim() {
            return Err(Error::LengthMismatch {
                expected: self.dim(),
                found: x.dim(),
            });
        }
        Ok(())
    }

    fn affine(&self, x: &[f64]) -> f64 {
        self.tail[0]
            + x.iter()
                .zip(self.tail.iter().skip(1))
                .map(|(v, a)| v * a)
                .sum::<f64>()
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<f64> {
        self.check_dim(x)?;
        let q = x.as_slice();
        let kernel: f64 = self
            .centers
            .row_iter()
            .zip(self.weights.iter())
            .map(|(c, w)| {
                let r2: f64 = c.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
                w * cubic(r2.sqrt())
            })
            .sum();
        Ok(kernel + self.affine(q))
    }

    /// Predictions for many points at once. Distances come from one matrix
    /// product per block of queries.
    pub fn predict_batch(&self, xs: &[FeatureVector]) -> Result<Vec<f64>> {
        for x in xs {
            self.check_dim(x)?;
        }
        let dim = self.dim();
        let mut out = Vec::with_capacity(xs.len());
        for block in xs.chunks(BATCH_BLOCK) {
            let queries = DMatrix::from_fn(block.len(), dim, |i, k| block[i].0[k]);
            let gram = &queries * self.centers.transpose();
            for (i, x) in block.iter().enumerate() {
                let q_norm: f64 = x.0.iter().map(|v| v * v).sum();
                let mut kernel = 0.0;
                for j in 0..self.len() {
                    let r2 = (q_norm + self.center_sq_norms[j] - 2.0 * gram[(i, j)]).max(0.0);
                    kernel += self.weights[j] * r2 * r2.sqrt();
                }
                out.push(kernel + self.affine(&x.0));
            }
        }
        Ok(out)
    }
}

/// A model of the quality score over encoded configs, refitted from the
/// archive at every search iteration.
pub trait Surrogate {
    fn fit(&mut self, x: &[FeatureVector], y: &[f64]) -> Result<()>;

    /// Fails if called before a successful [`Surrogate::fit`].
    fn predict_batch(&self, xs: &[FeatureVector]) -> Result<Vec<f64>>;
}

/// [`Surrogate`] backed by [`fit_rbf`].
#[derive(Debug, Clone)]
pub struct RbfSurrogate {
    regularization: f64,
    model: Option<RbfModel>,
}

impl RbfSurrogate {
    pub fn new(regularization: f64) -> Self {
        Self {
            regularization,
            model: None,
        }
    }

    pub fn model(&self) -> Option<&RbfModel> {
        self.model.as_ref()
    }
}

impl Default for RbfSurrogate {
    fn default() -> Self {
        Self::new(DEFAULT_REGULARIZATION)
    }
}

impl Surrogate for RbfSurrogate {
    fn fit(&mut self, x: &[FeatureVector], y: &[f64]) -> Result<()> {
        self.model = Some(fit_rbf(x, y, self.regularization)?);
        Ok(())
    }

    fn predict_batch(&self, xs: &[FeatureVector]) -> Result<Vec<f64>> {
        self.model
            .as_ref()
            .ok_or_else(|| Error::Fit("surrogate used before fitting".into()))?
            .predict_batch(xs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::LayerSpec;

    fn space() -> SearchSpace {
        SearchSpace::from_layers(vec![
            LayerSpec::new("a", 1, vec![2, 3, 4]),
            LayerSpec::new("b", 1, vec![2, 3, 4]),
            LayerSpec::new("c", 1, vec![2, 3, 4]),
        ])
        .unwrap()
        .with_frozen([(1, 4)])
        .unwrap()
    }

    #[test]
    fn encoding_examples() {
        let s = space();
        assert_eq!(encode(&s.min_config(), &s).as_slice(), &[0.0, 0.0]);
        assert_eq!(encode(&s.max_config(), &s).as_slice(), &[1.0, 1.0]);
        let mid = s.config(vec![3, 4, 2]).unwrap();
        assert_eq!(encode(&mid, &s).as_slice(), &[0.5, 0.0]);
    }

    fn grid(dim: usize, levels: usize) -> Vec<FeatureVector> {
        let total = levels.pow(dim as u32);
        (0..total)
            .map(|mut k| {
                let mut v = Vec::with_capacity(dim);
                for _ in 0..dim {
                    v.push((k % levels) as f64 / (levels - 1) as f64);
                    k /= levels;
                }
                FeatureVector(v)
            })
            .collect()
    }

    #[test]
    fn constant_targets_reproduced() {
        let x = grid(2, 3);
        let y = vec![0.42; x.len()];
        let model = fit_rbf(&x, &y, 0.0).unwrap();
        for xi in &x {
            assert!((model.predict(xi).unwrap() - 0.42).abs() < 1e-8);
        }
    }

    #[test]
    fn duplicates_are_merged() {
        let mut x = grid(2, 3);
        let mut y: Vec<f64> = x.iter().map(|v| v.0[0] * v.0[1]).collect();
        x.push(x[4].clone());
        y.push(y[4] + 0.2);
        let model = fit_rbf(&x, &y, 0.0).unwrap();
        assert_eq!(model.len(), 9);
        assert!((model.predict(&x[4]).unwrap() - (y[4] + 0.1)).abs() < 1e-8);
    }

    #[test]
    fn too_few_samples() {
        let x = grid(3, 2)[..4].to_vec();
        let y = vec![0.0; 4];
        assert!(matches!(
            fit_rbf(&x, &y, 0.0),
            Err(Error::TooFewSamples { needed: 5, found: 4 })
        ));
    }

    #[test]
    fn dimension_mismatch() {
        let x = grid(2, 3);
        let y = vec![1.0; x.len()];
        let model = fit_rbf(&x, &y, 0.0).unwrap();
        assert!(model.predict(&FeatureVector(vec![0.0; 3])).is_err());
        assert!(fit_rbf(&x, &y[..3], 0.0).is_err());
        assert!(fit_rbf(&x, &y, -1.0).is_err());
    }

    #[test]
    fn degenerate_points_use_fallback() {
        // All centers on a line: the affine tail is not identifiable.
        let x: Vec<FeatureVector> = (0..6)
            .map(|i| FeatureVector(vec![i as f64 / 5.0, i as f64 / 5.0]))
            .collect();
        let y: Vec<f64> = (0..6).map(|i| (i as f64).sin()).collect();
        let model = fit_rbf(&x, &y, 0.0).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert!((model.predict(xi).unwrap() - yi).abs() < 1e-6);
        }
    }
}
