//! Jump-diffusion return models.
//!
//! Both models write the per-period return vector `R` as a Gaussian diffusion
//! plus compound-Poisson jump terms:
//!
//! * [`Model1Params`]: independent diffusions with a common variance, a
//!   per-asset compound-Poisson jump and a systemic multivariate jump.
//! * [`Model2Params`]: a correlated Gaussian diffusion plus a systemic jump.
//!
//! Each model exposes its exact first two moments, its Laplace exponent
//! `κ(u) = ln E[exp(−u·R)]` with gradient and Hessian, the joint density as a
//! truncated Poisson mixture of Gaussians, and a seeded sampler.

mod model1;
mod model2;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ReturnSample;
use crate::error::{Error, Result};

pub use model1::Model1Params;
pub use model2::Model2Params;

/// Largest exponent argument accepted before reporting `ExponentOverflow`.
pub const DEFAULT_EXPONENT_CAP: f64 = 700.0;

/// Rows generated per independent random substream.
const SAMPLER_CHUNK: usize = 16_384;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "model1")]
    Model1,
    #[serde(rename = "model2")]
    Model2,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::Model1 => f.write_str("model1"),
            ModelKind::Model2 => f.write_str("model2"),
        }
    }
}

/// Controls the infinite Poisson sums of the joint densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    /// Maximum Poisson probability mass discarded per summation index.
    pub tail_mass: f64,
    /// Hard cap on retained terms per summation index.
    pub max_terms: usize,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self { tail_mass: 1e-10, max_terms: 64 }
    }
}

impl TruncationPolicy {
    pub fn new(tail_mass: f64, max_terms: usize) -> Result<Self> {
        let p = Self { tail_mass, max_terms };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tail_mass > 0.0 && self.tail_mass < 1.0) {
            return Err(Error::InvalidParameter(format!("tail_mass {} not in (0,1)", self.tail_mass)));
        }
        if self.max_terms == 0 {
            return Err(Error::InvalidParameter("max_terms must be at least 1".into()));
        }
        Ok(())
    }

    /// Poisson probabilities `P(N = 0..=K)` where `K` is the smallest index
    /// whose cumulative mass reaches `1 − tail_mass`.
    pub fn poisson_weights(&self, intensity: f64) -> Result<Vec<f64>> {
        let mut p = (-intensity).exp();
        let mut weights = vec![p];
        let mut cumulative = p;
        let target = 1.0 - self.tail_mass;
        while cumulative < target {
            if weights.len() >= self.max_terms {
                return Err(Error::TruncationBudgetExceeded {
                    intensity,
                    max_terms: self.max_terms,
                    tail_mass: self.tail_mass,
                });
            }
            let k = weights.len() as f64;
            p *= intensity / k;
            cumulative += p;
            weights.push(p);
        }
        Ok(weights)
    }
}

/// Common interface of both return models.
pub trait ReturnModel: Send + Sync {
    fn kind(&self) -> ModelKind;

    fn n_assets(&self) -> usize;

    /// Exact expected return vector.
    fn mean(&self) -> DVector<f64>;

    /// Exact covariance matrix.
    fn covariance(&self) -> DMatrix<f64>;

    fn laplace_exponent_capped(&self, u: &DVector<f64>, cap: f64) -> Result<f64>;

    fn laplace_gradient_capped(&self, u: &DVector<f64>, cap: f64) -> Result<DVector<f64>>;

    fn laplace_hessian_capped(&self, u: &DVector<f64>, cap: f64) -> Result<DMatrix<f64>>;

    /// Joint density of `R` at `r`.
    fn density(&self, r: &DVector<f64>, policy: &TruncationPolicy) -> Result<f64>;

    /// `count` independent draws, reproducible from `seed`.
    fn sample(&self, count: usize, seed: u64) -> Result<ReturnSample>;

    /// `κ(u) = ln E[exp(−u·R)]`.
    fn laplace_exponent(&self, u: &DVector<f64>) -> Result<f64> {
        self.laplace_exponent_capped(u, DEFAULT_EXPONENT_CAP)
    }

    fn laplace_gradient(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.laplace_gradient_capped(u, DEFAULT_EXPONENT_CAP)
    }

    fn laplace_hessian(&self, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.laplace_hessian_capped(u, DEFAULT_EXPONENT_CAP)
    }
}

/// Either model, as read from a parameter file.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ModelParams {
    Model1(Model1Params),
    Model2(Model2Params),
}

impl ModelParams {
    pub fn as_model(&self) -> &dyn ReturnModel {
        match self {
            ModelParams::Model1(p) => p,
            ModelParams::Model2(p) => p,
        }
    }

    /// Parses a parameter document; a `Q` field selects Model 2. Extra
    /// metadata fields (as written by the estimator) are ignored.
    pub fn from_json_value(value: serde_json::Value) -> Result<Self> {
        let is_model2 = value.get("Q").is_some();
        Ok(if is_model2 {
            ModelParams::Model2(serde_json::from_value(value)?)
        } else {
            ModelParams::Model1(serde_json::from_value(value)?)
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Self::from_json_value(serde_json::from_str(s)?)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl<'de> Deserialize<'de> for ModelParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(d)?;
        ModelParams::from_json_value(value).map_err(serde::de::Error::custom)
    }
}

impl From<Model1Params> for ModelParams {
    fn from(p: Model1Params) -> Self {
        ModelParams::Model1(p)
    }
}

impl From<Model2Params> for ModelParams {
    fn from(p: Model2Params) -> Self {
        ModelParams::Model2(p)
    }
}

impl ReturnModel for ModelParams {
    fn kind(&self) -> ModelKind {
        self.as_model().kind()
    }
    fn n_assets(&self) -> usize {
        self.as_model().n_assets()
    }
    fn mean(&self) -> DVector<f64> {
        self.as_model().mean()
    }
    fn covariance(&self) -> DMatrix<f64> {
        self.as_model().covariance()
    }
    fn laplace_exponent_capped(&self, u: &DVector<f64>, cap: f64) -> Result<f64> {
        self.as_model().laplace_exponent_capped(u, cap)
    }
    fn laplace_gradient_capped(&self, u: &DVector<f64>, cap: f64) -> Result<DVector<f64>> {
        self.as_model().laplace_gradient_capped(u, cap)
    }
    fn laplace_hessian_capped(&self, u: &DVector<f64>, cap: f64) -> Result<DMatrix<f64>> {
        self.as_model().laplace_hessian_capped(u, cap)
    }
    fn density(&self, r: &DVector<f64>, policy: &TruncationPolicy) -> Result<f64> {
        self.as_model().density(r, policy)
    }
    fn sample(&self, count: usize, seed: u64) -> Result<ReturnSample> {
        self.as_model().sample(count, seed)
    }
}

pub(crate) fn check_direction(u: &DVector<f64>, n: usize) -> Result<()> {
    if u.len() != n {
        return Err(Error::InvalidParameter(format!("direction has length {}, expected {n}", u.len())));
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("direction has non-finite entries".into()));
    }
    Ok(())
}

/// `exp(arg)` after checking the overflow cap.
pub(crate) fn guarded_exp(arg: f64, cap: f64) -> Result<f64> {
    if arg > cap || arg.is_nan() {
        return Err(Error::ExponentOverflow { argument: arg, cap });
    }
    Ok(arg.exp())
}

pub(crate) fn guarded_expm1(arg: f64, cap: f64) -> Result<f64> {
    if arg > cap || arg.is_nan() {
        return Err(Error::ExponentOverflow { argument: arg, cap });
    }
    Ok(arg.exp_m1())
}

/// Fills a `count x n` sample in fixed-size chunks, each driven by its own
/// ChaCha substream `(seed, chunk index)`, so the output does not depend on
/// the number of worker threads.
pub(crate) fn sample_rows<F>(n: usize, count: usize, seed: u64, draw_row: F) -> Result<DMatrix<f64>>
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) + Sync,
{
    if count == 0 {
        return Err(Error::InvalidParameter("sample count must be at least 1".into()));
    }
    let mut data = vec![0.0; count * n];
    data.par_chunks_mut(SAMPLER_CHUNK * n.max(1)).enumerate().for_each(|(chunk, block)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(chunk as u64);
        for row in block.chunks_mut(n.max(1)) {
            draw_row(&mut rng, row);
        }
    });
    Ok(DMatrix::from_row_slice(count, n, &data))
}

/// Poisson draw that tolerates a zero intensity.
pub(crate) fn poisson_draw<R: rand::Rng>(dist: Option<&rand_distr::Poisson<f64>>, rng: &mut R) -> f64 {
    use rand_distr::Distribution;
    dist.map_or(0.0, |d| d.sample(rng))
}

pub(crate) fn poisson_dist(intensity: f64) -> Option<rand_distr::Poisson<f64>> {
    (intensity > 0.0).then(|| rand_distr::Poisson::new(intensity).expect("positive finite intensity"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_truncation_reaches_tail_mass() {
        let policy = TruncationPolicy::default();
        for &lam in &[0.0, 0.01, 0.5, 3.0, 10.0] {
            let w = policy.poisson_weights(lam).unwrap();
            let mass: f64 = w.iter().sum();
            assert!(mass >= 1.0 - 1e-10 - 1e-15, "lam {lam}: {mass}");
            // K is minimal: dropping the last term falls short
            if w.len() > 1 {
                assert!(mass - w[w.len() - 1] < 1.0 - 1e-10);
            }
        }
        assert_eq!(policy.poisson_weights(0.0).unwrap(), vec![1.0]);
    }

    #[test]
    fn truncation_budget_enforced() {
        let policy = TruncationPolicy::new(1e-10, 5).unwrap();
        assert!(matches!(
            policy.poisson_weights(4.0),
            Err(Error::TruncationBudgetExceeded { max_terms: 5, .. })
        ));
        assert!(TruncationPolicy::new(0.0, 4).is_err());
        assert!(TruncationPolicy::new(1e-9, 0).is_err());
    }

    #[test]
    fn sampler_is_thread_count_independent() {
        let draw = |rng: &mut ChaCha8Rng, row: &mut [f64]| {
            use rand::Rng;
            for v in row.iter_mut() {
                *v = rng.random::<f64>();
            }
        };
        let a = sample_rows(2, 40_000, 9, draw).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| sample_rows(2, 40_000, 9, draw).unwrap());
        assert_eq!(a, b);
        assert!(sample_rows(2, 0, 9, draw).is_err());
    }
}
