//! Extended least squares fitting of both return models.
//!
//! The objective is `Σ_i [(y_i − μ̄) G⁻¹ (y_i − μ̄)ᵀ + ln|G|]` with `μ̄`, `G`
//! the model-implied mean and covariance. Since neither depends on `i` it is
//! evaluated as `N ln|G| + tr(G⁻¹ S)`, `S` being the scatter about `μ̄`.

pub mod nelder_mead;
pub mod reparam;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ReturnSample;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{Model1Params, Model2Params, ModelKind, ModelParams};

pub const DEFAULT_STARTS: usize = 16;

/// Intensity used by the moment-matched Gaussian start.
const GAUSSIAN_START_INTENSITY: f64 = 0.1;
/// Starts within this relative distance of the best objective count as tied.
const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct ElsProblem {
    data: ReturnSample,
    kind: ModelKind,
    sample_mean: DVector<f64>,
    /// Scatter about the sample mean, `Σ (y_i − ȳ)(y_i − ȳ)ᵀ`.
    scatter: DMatrix<f64>,
}

impl ElsProblem {
    pub fn new(data: ReturnSample, kind: ModelKind) -> Result<Self> {
        let n = data.n_assets();
        if data.len() < n + 2 {
            return Err(Error::TooFewRows { needed: n + 2, got: data.len() });
        }
        if data.returns.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("return sample contains non-finite entries".into()));
        }
        let sample_mean = data.sample_mean();
        let scatter = data.biased_covariance() * data.len() as f64;
        Ok(Self { data, kind, sample_mean, scatter })
    }

    pub fn data(&self) -> &ReturnSample {
        &self.data
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn n_obs(&self) -> usize {
        self.data.len()
    }

    pub fn n_assets(&self) -> usize {
        self.data.n_assets()
    }

    fn check_params(&self, params: &ModelParams) -> Result<()> {
        let m = params.as_model();
        if m.kind() != self.kind || m.n_assets() != self.n_assets() {
            return Err(Error::InvalidParameter(format!(
                "expected {} parameters for {} assets, got {} for {}",
                self.kind,
                self.n_assets(),
                m.kind(),
                m.n_assets()
            )));
        }
        Ok(())
    }

    /// ELS objective in trace form.
    pub fn objective(&self, params: &ModelParams) -> Result<f64> {
        self.check_params(params)?;
        let m = params.as_model();
        self.objective_from_moments(&m.mean(), &m.covariance())
    }

    fn objective_from_moments(&self, mean: &DVector<f64>, g: &DMatrix<f64>) -> Result<f64> {
        let chol = g_cholesky(g)?;
        let n_obs = self.n_obs() as f64;
        let d = &self.sample_mean - mean;
        let s = &self.scatter + &d * d.transpose() * n_obs;
        let trace = chol.solve(&s).trace();
        Ok(n_obs * linalg::log_det(&chol) + trace)
    }

    /// ELS objective as the literal per-observation sum.
    pub fn objective_direct(&self, params: &ModelParams) -> Result<f64> {
        self.check_params(params)?;
        let m = params.as_model();
        let mean = m.mean();
        let chol = g_cholesky(&m.covariance())?;
        let log_det = linalg::log_det(&chol);
        let mut total = 0.0;
        for row in self.data.returns.row_iter() {
            let d = row.transpose() - &mean;
            total += d.dot(&chol.solve(&d)) + log_det;
        }
        Ok(total)
    }

    /// Moment-matched starting points. The first is the Gaussian start
    /// (sample moments, intensities 0.1, no mean jump); the rest draw
    /// intensities log-uniformly from `[1e-3, 1]`.
    pub fn starting_points(&self, count: usize, seed: u64) -> Result<Vec<ModelParams>> {
        (0..count)
            .map(|k| {
                if k == 0 {
                    self.moment_matched(GAUSSIAN_START_INTENSITY, None)
                } else {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(k as u64);
                    self.moment_matched(10f64.powf(rng.random_range(-3.0..=0.0)), Some(&mut rng))
                }
            })
            .collect()
    }

    /// Parameters whose implied mean and covariance equal the sample ones.
    /// Jump mean directions and shares come from `rng` when given.
    fn moment_matched(&self, intensity: f64, mut rng: Option<&mut ChaCha8Rng>) -> Result<ModelParams> {
        let n = self.n_assets();
        let ybar = &self.sample_mean;
        let s = &self.scatter / self.n_obs() as f64;
        // jump share of the covariance grows with the intensity
        let share = 0.5 * intensity / (intensity + 0.1);
        let mut uniform = |lo: f64, hi: f64| rng.as_deref_mut().map_or(0.0, |r| r.random_range(lo..hi));
        match self.kind {
            ModelKind::Model2 => {
                let j = &s * (share / intensity);
                let kappa = uniform(0.0, 0.5);
                let z = DVector::from_fn(n, |_, _| uniform(-1.0, 1.0));
                let mu = if z.norm() > 0.0 { linalg::psd_factor(&j) * &z * (kappa.sqrt() / z.norm()) } else { DVector::zeros(n) };
                let a = &j - &mu * mu.transpose();
                let q = &s * (1.0 - share);
                let mu_tilde = ybar - &mu * intensity;
                Ok(Model2Params { n, mu_tilde, q, lambda: intensity, mu, a }.into())
            }
            ModelKind::Model1 => {
                let min_eig = s.clone().symmetric_eigen().eigenvalues.min().max(0.0);
                let d = share * min_eig;
                let sigma = (d / 2.0).sqrt();
                let lambda = DVector::from_element(n, intensity);
                let rho = uniform(0.0, 0.5);
                let mut theta = DVector::zeros(n);
                let mut sigma_jump = DVector::zeros(n);
                for i in 0..n {
                    let per = d / 2.0 / intensity;
                    let sign = if uniform(-1.0, 1.0) < 0.0 { -1.0 } else { 1.0 };
                    theta[i] = sign * (rho * per).sqrt();
                    sigma_jump[i] = ((1.0 - rho) * per).sqrt();
                }
                let b = &s - DMatrix::<f64>::identity(n, n) * d;
                let gamma = intensity;
                let j = &b / gamma;
                let kappa = uniform(0.0, 0.5);
                let z = DVector::from_fn(n, |_, _| uniform(-1.0, 1.0));
                let mu = if z.norm() > 0.0 { linalg::psd_factor(&j) * &z * (kappa.sqrt() / z.norm()) } else { DVector::zeros(n) };
                let a = &j - &mu * mu.transpose();
                let mu_tilde = ybar - lambda.component_mul(&theta) - &mu * gamma;
                Ok(Model1Params { n, mu_tilde, sigma, lambda, theta, sigma_jump, gamma, mu, a }.into())
            }
        }
    }
}

fn g_cholesky(g: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularG("non-finite entries".into()));
    }
    let chol = g.clone().cholesky().ok_or_else(|| Error::SingularG("Cholesky factorization failed".into()))?;
    if chol.l_dirty().diagonal().iter().any(|&d| d <= 0.0) {
        return Err(Error::SingularG("determinant is not positive".into()));
    }
    Ok(chol)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    #[serde(flatten)]
    pub params: ModelParams,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub n_obs: usize,
    pub diagnostics: FitDiagnostics,
}

/// Distance between the fitted implied moments and the sample moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub mean_max_abs_diff: f64,
    pub covariance_max_abs_diff: f64,
    pub starts: usize,
    pub failed_starts: usize,
}

struct StartOutcome {
    params: ModelParams,
    objective: f64,
    iterations: usize,
    converged: bool,
}

fn total_intensity(p: &ModelParams) -> f64 {
    match p {
        ModelParams::Model1(p) => p.lambda.sum() + p.gamma,
        ModelParams::Model2(p) => p.lambda,
    }
}

/// Multi-start Nelder–Mead in the reparameterized space. Among starts tied
/// with the best objective the one with the smallest total jump intensity
/// wins, since the moments do not identify the jump decomposition.
pub fn fit_els(problem: &ElsProblem, starts: usize, seed: u64) -> Result<FitResult> {
    fit_els_with(problem, starts, seed, nelder_mead::Settings::default())
}

pub fn fit_els_with(problem: &ElsProblem, starts: usize, seed: u64, settings: nelder_mead::Settings) -> Result<FitResult> {
    if starts == 0 {
        return Err(Error::InvalidParameter("need at least one start".into()));
    }
    let kind = problem.kind();
    let n = problem.n_assets();
    let initial = problem.starting_points(starts, seed)?;
    let outcomes: Vec<Option<StartOutcome>> = initial
        .par_iter()
        .map(|p0| {
            let x0 = reparam::encode(p0);
            let f = |x: &DVector<f64>| problem.objective(&reparam::decode(kind, n, x)).unwrap_or(f64::INFINITY);
            let m = nelder_mead::minimize(f, &x0, settings);
            if !m.value.is_finite() {
                return None;
            }
            Some(StartOutcome {
                params: reparam::decode(kind, n, &m.x),
                objective: m.value,
                iterations: m.iterations,
                converged: m.converged,
            })
        })
        .collect();

    let failed = outcomes.iter().filter(|o| o.is_none()).count();
    let ok: Vec<&StartOutcome> = outcomes.iter().flatten().collect();
    let best_value = ok.iter().map(|o| o.objective).fold(f64::INFINITY, f64::min);
    if !best_value.is_finite() {
        return Err(Error::AllStartsFailed(starts));
    }
    let tol = TIE_TOL * best_value.abs().max(1.0);
    let chosen = ok
        .iter()
        .filter(|o| o.objective <= best_value + tol)
        .min_by(|a, b| total_intensity(&a.params).total_cmp(&total_intensity(&b.params)))
        .expect("best start is within tolerance of itself");

    let model = chosen.params.as_model();
    let s = problem.data.biased_covariance();
    let diagnostics = FitDiagnostics {
        mean_max_abs_diff: (model.mean() - &problem.sample_mean).amax(),
        covariance_max_abs_diff: (model.covariance() - s).amax(),
        starts,
        failed_starts: failed,
    };
    Ok(FitResult {
        params: chosen.params.clone(),
        objective: chosen.objective,
        iterations: chosen.iterations,
        converged: chosen.converged,
        n_obs: problem.n_obs(),
        diagnostics,
    })
}
