use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{
    check_direction, guarded_exp, guarded_expm1, poisson_dist, poisson_draw, sample_rows, ModelKind,
    ReturnModel, TruncationPolicy,
};
use crate::data::ReturnSample;
use crate::error::{Error, Result};
use crate::linalg::{self, serde_matrix, serde_vector};

/// `R = X + Σ_{k≤M} W_k` with `X ~ N(μ̃, Q)`, `M ~ Poisson(λ)` and
/// `W_k ~ N(μ, A)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Model2Raw")]
pub struct Model2Params {
    pub n: usize,
    #[serde(with = "serde_vector")]
    pub mu_tilde: DVector<f64>,
    #[serde(rename = "Q", serialize_with = "serde_matrix::serialize")]
    pub q: DMatrix<f64>,
    pub lambda: f64,
    #[serde(with = "serde_vector")]
    pub mu: DVector<f64>,
    #[serde(rename = "A", serialize_with = "serde_matrix::serialize")]
    pub a: DMatrix<f64>,
}

#[derive(Deserialize)]
struct Model2Raw {
    n: Option<usize>,
    mu_tilde: Vec<f64>,
    #[serde(rename = "Q")]
    q: Vec<Vec<f64>>,
    lambda: f64,
    mu: Vec<f64>,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
}

impl TryFrom<Model2Raw> for Model2Params {
    type Error = Error;

    fn try_from(raw: Model2Raw) -> Result<Self> {
        let q = linalg::matrix_from_rows(&raw.q).map_err(Error::InvalidParameter)?;
        let a = linalg::matrix_from_rows(&raw.a).map_err(Error::InvalidParameter)?;
        let p = Model2Params::new(DVector::from_vec(raw.mu_tilde), q, raw.lambda, DVector::from_vec(raw.mu), a)?;
        if let Some(n) = raw.n {
            if n != p.n {
                return Err(Error::InvalidParameter(format!("n = {n} but vectors have length {}", p.n)));
            }
        }
        Ok(p)
    }
}

impl Model2Params {
    pub fn new(mu_tilde: DVector<f64>, q: DMatrix<f64>, lambda: f64, mu: DVector<f64>, a: DMatrix<f64>) -> Result<Self> {
        let p = Self { n: mu_tilde.len(), mu_tilde, q, lambda, mu, a };
        p.validate()?;
        Ok(p)
    }

    /// Multivariate normal `N(μ̃, Q)` (no jumps).
    pub fn gaussian(mu_tilde: DVector<f64>, q: DMatrix<f64>) -> Result<Self> {
        let n = mu_tilde.len();
        Self::new(mu_tilde, q, 0.0, DVector::zeros(n), DMatrix::zeros(n, n))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if n == 0 {
            return Err(Error::InvalidParameter("asset count must be positive".into()));
        }
        for (name, v) in [("mu_tilde", &self.mu_tilde), ("mu", &self.mu)] {
            if v.len() != n {
                return Err(Error::InvalidParameter(format!("{name} has length {}, expected {n}", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} has non-finite entries")));
            }
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        linalg::check_symmetric_psd(&self.q, "Q", n)?;
        linalg::check_symmetric_psd(&self.a, "A", n)
    }

    fn jump_arg(&self, u: &DVector<f64>) -> f64 {
        -u.dot(&self.mu) + 0.5 * (u.transpose() * &self.a * u)[(0, 0)]
    }
}

impl ReturnModel for Model2Params {
    fn kind(&self) -> ModelKind {
        ModelKind::Model2
    }

    fn n_assets(&self) -> usize {
        self.n
    }

    fn mean(&self) -> DVector<f64> {
        &self.mu_tilde + &self.mu * self.lambda
    }

    fn covariance(&self) -> DMatrix<f64> {
        &self.q + (&self.a + &self.mu * self.mu.transpose()) * self.lambda
    }

    fn laplace_exponent_capped(&self, u: &DVector<f64>, cap: f64) -> Result<f64> {
        check_direction(u, self.n)?;
        let mut value = -u.dot(&self.mu_tilde) + 0.5 * (u.transpose() * &self.q * u)[(0, 0)];
        if self.lambda > 0.0 {
            value += self.lambda * guarded_expm1(self.jump_arg(u), cap)?;
        }
        Ok(value)
    }

    fn laplace_gradient_capped(&self, u: &DVector<f64>, cap: f64) -> Result<DVector<f64>> {
        check_direction(u, self.n)?;
        let mut g = -&self.mu_tilde + &self.q * u;
        if self.lambda > 0.0 {
            let e = guarded_exp(self.jump_arg(u), cap)?;
            g += (&self.a * u - &self.mu) * (self.lambda * e);
        }
        Ok(g)
    }

    fn laplace_hessian_capped(&self, u: &DVector<f64>, cap: f64) -> Result<DMatrix<f64>> {
        check_direction(u, self.n)?;
        let mut h = self.q.clone();
        if self.lambda > 0.0 {
            let e = guarded_exp(self.jump_arg(u), cap)?;
            let d = &self.a * u - &self.mu;
            h += (&d * d.transpose() + &self.a) * (self.lambda * e);
        }
        Ok(h)
    }

    fn density(&self, r: &DVector<f64>, policy: &TruncationPolicy) -> Result<f64> {
        check_direction(r, self.n)?;
        policy.validate()?;
        let weights = policy.poisson_weights(self.lambda)?;
        let mut total = 0.0;
        for (m, w) in weights.iter().enumerate() {
            let mf = m as f64;
            let mean = &self.mu_tilde + &self.mu * mf;
            let cov = &self.q + &self.a * mf;
            let chol = linalg::cholesky_pd(&cov)
                .map_err(|_| Error::SingularCovariance(format!("mixture term m={m}")))?;
            total += w * linalg::gaussian_log_pdf(r, &mean, &chol).exp();
        }
        Ok(total.max(0.0))
    }

    fn sample(&self, count: usize, seed: u64) -> Result<ReturnSample> {
        let n = self.n;
        let chol_q = linalg::psd_factor(&self.q);
        let chol_a = linalg::psd_factor(&self.a);
        let jumps = poisson_dist(self.lambda);
        let returns = sample_rows(n, count, seed, |rng: &mut ChaCha8Rng, row: &mut [f64]| {
            let z = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
            let x = &self.mu_tilde + &chol_q * z;
            row.copy_from_slice(x.as_slice());
            let m = poisson_draw(jumps.as_ref(), rng);
            if m > 0.0 {
                let z = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
                let w = &chol_a * z;
                for i in 0..n {
                    row[i] += m * self.mu[i] + m.sqrt() * w[i];
                }
            }
        })?;
        ReturnSample::unnamed(returns)
    }
}
