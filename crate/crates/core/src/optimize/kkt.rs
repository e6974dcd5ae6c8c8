//! First-order optimality diagnostics for the joint `(ω, s)` problem
//!
//! ```text
//! min  f(ω, s) = (κ(sω) − ln α) / s
//! s.t. h₁ = m·ω − μ* = 0,  h₂ = Σω − 1 = 0,
//!      g_i = −ω_i ≤ 0 (i = 1..n),  g_{n+1} = −s ≤ 0
//! ```
//!
//! with Lagrangian `L = f + Σ ν_k g_k + η₁h₁ + η₂h₂`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{evar_objective, evar_objective_gradient, Portfolio};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::ReturnModel;
use crate::risk::RiskLevel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    /// `ν₁..ν_n` for `−ω_i ≤ 0`, then `ν_{n+1}` for `−s ≤ 0`.
    pub nu: Vec<f64>,
    /// `η₁` (return constraint), `η₂` (budget constraint).
    pub eta: [f64; 2],
}

impl Multipliers {
    pub fn zeros(n: usize) -> Self {
        Self { nu: vec![0.0; n + 1], eta: [0.0; 2] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub stationarity_inf_norm: f64,
    pub primal_feasibility: f64,
    pub complementarity: f64,
    pub dual_feasibility: f64,
    pub multipliers: Multipliers,
    /// Set by the solver when the optimal weights are not unique.
    #[serde(default)]
    pub non_unique: bool,
}

impl KktReport {
    pub fn max_violation(&self) -> f64 {
        self.stationarity_inf_norm
            .max(self.primal_feasibility)
            .max(self.complementarity)
            .max(self.dual_feasibility)
    }
}

/// `∇L` over `(ω, s)` given the objective gradient.
pub fn lagrangian_gradient_from(
    objective_gradient: &DVector<f64>,
    means: &DVector<f64>,
    multipliers: &Multipliers,
) -> DVector<f64> {
    let n = means.len();
    let mut grad = objective_gradient.clone();
    for i in 0..n {
        grad[i] += -multipliers.nu[i] + multipliers.eta[0] * means[i] + multipliers.eta[1];
    }
    grad[n] -= multipliers.nu[n];
    grad
}

/// Lagrangian value at `(ω, s)`.
pub fn lagrangian<M: ReturnModel + ?Sized>(
    model: &M,
    level: RiskLevel,
    point: &Portfolio,
    s: f64,
    multipliers: &Multipliers,
) -> Result<f64> {
    let means = model.mean();
    let w = &point.weights;
    let f = evar_objective(model, level, w, s)?;
    let g: f64 = w.iter().zip(&multipliers.nu).map(|(wi, nu)| -nu * wi).sum::<f64>() - multipliers.nu[w.len()] * s;
    let h1 = means.dot(w) - point.target_return;
    let h2 = w.sum() - 1.0;
    Ok(f + g + multipliers.eta[0] * h1 + multipliers.eta[1] * h2)
}

/// Analytic `∇L` over `(ω, s)`.
pub fn lagrangian_gradient<M: ReturnModel + ?Sized>(
    model: &M,
    level: RiskLevel,
    point: &Portfolio,
    s: f64,
    multipliers: &Multipliers,
) -> Result<DVector<f64>> {
    check_multipliers(multipliers, point.weights.len())?;
    let grad = evar_objective_gradient(model, level, &point.weights, s)?;
    Ok(lagrangian_gradient_from(&grad, &model.mean(), multipliers))
}

/// Evaluates all KKT residuals at `(ω, s)` for the given multipliers.
pub fn kkt_check<M: ReturnModel + ?Sized>(
    model: &M,
    level: RiskLevel,
    point: &Portfolio,
    s: f64,
    multipliers: &Multipliers,
) -> Result<KktReport> {
    let grad = lagrangian_gradient(model, level, point, s, multipliers)?;
    Ok(report_from_gradient(&grad, &model.mean(), point, s, multipliers))
}

pub(crate) fn report_from_gradient(
    lagrangian_grad: &DVector<f64>,
    means: &DVector<f64>,
    point: &Portfolio,
    s: f64,
    multipliers: &Multipliers,
) -> KktReport {
    let w = &point.weights;
    let n = w.len();
    let h1 = (means.dot(w) - point.target_return).abs();
    let h2 = (w.sum() - 1.0).abs();
    let bound_violation = w.iter().map(|&wi| (-wi).max(0.0)).fold((-s).max(0.0), f64::max);
    let complementarity = (0..=n)
        .map(|k| {
            let g = if k < n { -w[k] } else { -s };
            (multipliers.nu[k] * g).abs()
        })
        .fold(0.0, f64::max);
    let dual = multipliers.nu.iter().fold(0.0_f64, |acc, &nu| acc.max(-nu));
    KktReport {
        stationarity_inf_norm: lagrangian_grad.amax(),
        primal_feasibility: h1.max(h2).max(bound_violation),
        complementarity,
        dual_feasibility: dual,
        multipliers: multipliers.clone(),
        non_unique: false,
    }
}

/// Least-squares fit of `(ν, η)` to the stationarity system, with `ν ≥ 0`
/// on the bounds that hold and zero elsewhere.
pub fn recover_multipliers(
    objective_gradient: &DVector<f64>,
    means: &DVector<f64>,
    weights: &DVector<f64>,
    s: f64,
    bound_tol: f64,
) -> Multipliers {
    let n = weights.len();
    // s sits at its bound only if it is (numerically) zero
    let mut active: Vec<usize> = (0..n).filter(|&i| weights[i] <= bound_tol).collect();
    if s <= bound_tol {
        active.push(n);
    }
    // unknowns: η₁, η₂, then ν for each active bound
    let mut a = DMatrix::zeros(n + 1, 2 + active.len());
    for i in 0..n {
        a[(i, 0)] = means[i];
        a[(i, 1)] = 1.0;
    }
    for (k, &j) in active.iter().enumerate() {
        a[(j, 2 + k)] = -1.0;
    }
    let sol = linalg::nnls_partial(&a, &(-objective_gradient), 2);
    let mut nu = vec![0.0; n + 1];
    for (k, &j) in active.iter().enumerate() {
        nu[j] = sol[2 + k];
    }
    Multipliers { nu, eta: [sol[0], sol[1]] }
}

fn check_multipliers(m: &Multipliers, n: usize) -> Result<()> {
    if m.nu.len() != n + 1 {
        return Err(Error::InvalidParameter(format!("expected {} bound multipliers, got {}", n + 1, m.nu.len())));
    }
    Ok(())
}
