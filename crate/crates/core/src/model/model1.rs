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

/// `R = X + H + Σ_{k≤M} W_k` with `X_i ~ N(μ̃_i, σ²)` independent,
/// `H_i` a compound Poisson sum of `N(θ_i, σ_i²)` jumps at rate `λ_i`, and
/// `M ~ Poisson(γ)` systemic jumps `W_k ~ N(μ, A)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Model1Raw")]
pub struct Model1Params {
    pub n: usize,
    #[serde(with = "serde_vector")]
    pub mu_tilde: DVector<f64>,
    pub sigma: f64,
    #[serde(with = "serde_vector")]
    pub lambda: DVector<f64>,
    #[serde(with = "serde_vector")]
    pub theta: DVector<f64>,
    #[serde(with = "serde_vector")]
    pub sigma_jump: DVector<f64>,
    pub gamma: f64,
    #[serde(with = "serde_vector")]
    pub mu: DVector<f64>,
    #[serde(rename = "A", serialize_with = "serde_matrix::serialize")]
    pub a: DMatrix<f64>,
}

#[derive(Deserialize)]
struct Model1Raw {
    n: Option<usize>,
    mu_tilde: Vec<f64>,
    sigma: f64,
    lambda: Vec<f64>,
    theta: Vec<f64>,
    sigma_jump: Vec<f64>,
    gamma: f64,
    mu: Vec<f64>,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
}

impl TryFrom<Model1Raw> for Model1Params {
    type Error = Error;

    fn try_from(raw: Model1Raw) -> Result<Self> {
        let a = linalg::matrix_from_rows(&raw.a).map_err(Error::InvalidParameter)?;
        let p = Model1Params::new(
            DVector::from_vec(raw.mu_tilde),
            raw.sigma,
            DVector::from_vec(raw.lambda),
            DVector::from_vec(raw.theta),
            DVector::from_vec(raw.sigma_jump),
            raw.gamma,
            DVector::from_vec(raw.mu),
            a,
        )?;
        if let Some(n) = raw.n {
            if n != p.n {
                return Err(Error::InvalidParameter(format!("n = {n} but vectors have length {}", p.n)));
            }
        }
        Ok(p)
    }
}

impl Model1Params {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mu_tilde: DVector<f64>,
        sigma: f64,
        lambda: DVector<f64>,
        theta: DVector<f64>,
        sigma_jump: DVector<f64>,
        gamma: f64,
        mu: DVector<f64>,
        a: DMatrix<f64>,
    ) -> Result<Self> {
        let p = Self { n: mu_tilde.len(), mu_tilde, sigma, lambda, theta, sigma_jump, gamma, mu, a };
        p.validate()?;
        Ok(p)
    }

    /// Pure diffusion: all jump intensities zero.
    pub fn gaussian(mu_tilde: DVector<f64>, sigma: f64) -> Result<Self> {
        let n = mu_tilde.len();
        Self::new(
            mu_tilde,
            sigma,
            DVector::zeros(n),
            DVector::zeros(n),
            DVector::zeros(n),
            0.0,
            DVector::zeros(n),
            DMatrix::zeros(n, n),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if n == 0 {
            return Err(Error::InvalidParameter("asset count must be positive".into()));
        }
        for (name, v) in [
            ("mu_tilde", &self.mu_tilde),
            ("lambda", &self.lambda),
            ("theta", &self.theta),
            ("sigma_jump", &self.sigma_jump),
            ("mu", &self.mu),
        ] {
            if v.len() != n {
                return Err(Error::InvalidParameter(format!("{name} has length {}, expected {n}", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} has non-finite entries")));
            }
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidParameter(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if self.lambda.iter().any(|&l| l < 0.0) {
            return Err(Error::InvalidParameter("lambda must be elementwise >= 0".into()));
        }
        if self.sigma_jump.iter().any(|&s| s < 0.0) {
            return Err(Error::InvalidParameter("sigma_jump must be elementwise >= 0".into()));
        }
        linalg::check_symmetric_psd(&self.a, "A", n)
    }

    fn systemic_arg(&self, u: &DVector<f64>) -> f64 {
        -u.dot(&self.mu) + 0.5 * (u.transpose() * &self.a * u)[(0, 0)]
    }

    fn asset_arg(&self, k: usize, uk: f64) -> f64 {
        -self.theta[k] * uk + 0.5 * self.sigma_jump[k].powi(2) * uk * uk
    }
}

impl ReturnModel for Model1Params {
    fn kind(&self) -> ModelKind {
        ModelKind::Model1
    }

    fn n_assets(&self) -> usize {
        self.n
    }

    fn mean(&self) -> DVector<f64> {
        DVector::from_fn(self.n, |i, _| self.mu_tilde[i] + self.lambda[i] * self.theta[i] + self.gamma * self.mu[i])
    }

    fn covariance(&self) -> DMatrix<f64> {
        let s2 = self.sigma * self.sigma;
        DMatrix::from_fn(self.n, self.n, |i, j| {
            let systemic = self.gamma * (self.a[(i, j)] + self.mu[i] * self.mu[j]);
            if i == j {
                s2 + self.lambda[i] * (self.theta[i].powi(2) + self.sigma_jump[i].powi(2)) + systemic
            } else {
                systemic
            }
        })
    }

    fn laplace_exponent_capped(&self, u: &DVector<f64>, cap: f64) -> Result<f64> {
        check_direction(u, self.n)?;
        let mut value = -u.dot(&self.mu_tilde) + 0.5 * self.sigma * self.sigma * u.norm_squared();
        if self.gamma > 0.0 {
            value += self.gamma * guarded_expm1(self.systemic_arg(u), cap)?;
        }
        for k in 0..self.n {
            if self.lambda[k] > 0.0 {
                value += self.lambda[k] * guarded_expm1(self.asset_arg(k, u[k]), cap)?;
            }
        }
        Ok(value)
    }

    fn laplace_gradient_capped(&self, u: &DVector<f64>, cap: f64) -> Result<DVector<f64>> {
        check_direction(u, self.n)?;
        let mut g = -&self.mu_tilde + u * (self.sigma * self.sigma);
        if self.gamma > 0.0 {
            let e = guarded_exp(self.systemic_arg(u), cap)?;
            g += (&self.a * u - &self.mu) * (self.gamma * e);
        }
        for k in 0..self.n {
            if self.lambda[k] > 0.0 {
                let e = guarded_exp(self.asset_arg(k, u[k]), cap)?;
                g[k] += self.lambda[k] * e * (self.sigma_jump[k].powi(2) * u[k] - self.theta[k]);
            }
        }
        Ok(g)
    }

    fn laplace_hessian_capped(&self, u: &DVector<f64>, cap: f64) -> Result<DMatrix<f64>> {
        check_direction(u, self.n)?;
        let mut h = DMatrix::<f64>::identity(self.n, self.n) * (self.sigma * self.sigma);
        if self.gamma > 0.0 {
            let e = guarded_exp(self.systemic_arg(u), cap)?;
            let d = &self.a * u - &self.mu;
            h += (&d * d.transpose() + &self.a) * (self.gamma * e);
        }
        for k in 0..self.n {
            if self.lambda[k] > 0.0 {
                let e = guarded_exp(self.asset_arg(k, u[k]), cap)?;
                let s2 = self.sigma_jump[k].powi(2);
                let d = s2 * u[k] - self.theta[k];
                h[(k, k)] += self.lambda[k] * e * (d * d + s2);
            }
        }
        Ok(h)
    }

    fn density(&self, r: &DVector<f64>, policy: &TruncationPolicy) -> Result<f64> {
        check_direction(r, self.n)?;
        policy.validate()?;
        let n = self.n;
        let asset_weights: Vec<Vec<f64>> = (0..n)
            .map(|i| policy.poisson_weights(self.lambda[i]))
            .collect::<Result<_>>()?;
        let systemic_weights = policy.poisson_weights(self.gamma)?;

        // odometer over (k_1..k_n, m)
        let mut idx = vec![0usize; n + 1];
        let limits: Vec<usize> = asset_weights
            .iter()
            .map(Vec::len)
            .chain(std::iter::once(systemic_weights.len()))
            .collect();
        let mut total = 0.0;
        loop {
            let m = idx[n] as f64;
            let mut weight = systemic_weights[idx[n]];
            for i in 0..n {
                weight *= asset_weights[i][idx[i]];
            }
            let mean = DVector::from_fn(n, |i, _| {
                self.mu_tilde[i] + idx[i] as f64 * self.theta[i] + m * self.mu[i]
            });
            let mut cov = &self.a * m;
            for i in 0..n {
                cov[(i, i)] += self.sigma * self.sigma + idx[i] as f64 * self.sigma_jump[i].powi(2);
            }
            let chol = linalg::cholesky_pd(&cov).map_err(|_| {
                Error::SingularCovariance(format!("mixture term k={:?}, m={}", &idx[..n], idx[n]))
            })?;
            total += weight * linalg::gaussian_log_pdf(r, &mean, &chol).exp();

            let mut pos = 0;
            loop {
                if pos > n {
                    return Ok(total.max(0.0));
                }
                idx[pos] += 1;
                if idx[pos] < limits[pos] {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
        }
    }

    fn sample(&self, count: usize, seed: u64) -> Result<ReturnSample> {
        let n = self.n;
        let chol_a = linalg::psd_factor(&self.a);
        let systemic = poisson_dist(self.gamma);
        let per_asset: Vec<_> = self.lambda.iter().map(|&l| poisson_dist(l)).collect();
        let returns = sample_rows(n, count, seed, |rng: &mut ChaCha8Rng, row: &mut [f64]| {
            for i in 0..n {
                let z: f64 = StandardNormal.sample(rng);
                let mut r = self.mu_tilde[i] + self.sigma * z;
                let k = poisson_draw(per_asset[i].as_ref(), rng);
                if k > 0.0 {
                    let zj: f64 = StandardNormal.sample(rng);
                    r += k * self.theta[i] + k.sqrt() * self.sigma_jump[i] * zj;
                }
                row[i] = r;
            }
            let m = poisson_draw(systemic.as_ref(), rng);
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
