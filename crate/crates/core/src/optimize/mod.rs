//! Constrained portfolio problems on the long-only simplex.
//!
//! The EVaR problem is solved jointly over the weights and the EVaR
//! auxiliary variable `s`; the Markowitz problem minimizes `ωΣωᵀ` under the
//! same constraints. Both use the active-set Newton solver in
//! [`active_set`].

mod active_set;
mod frontier;
pub mod kkt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::serde_vector;
use crate::model::ReturnModel;
use crate::risk::{evar_model, EvarResult, RiskLevel};

use active_set::{Constraints, SmoothProblem};
pub use frontier::{efficient_frontier, target_grid, write_frontier_csv, FrontierEntry, FrontierError, FrontierPoint, RiskKind};
pub use kkt::{kkt_check, lagrangian, lagrangian_gradient, recover_multipliers, KktReport, Multipliers};

/// Lower bound kept on `s` inside the solver.
pub const S_FLOOR: f64 = 1e-8;
/// Solutions whose KKT stationarity exceeds this are reported as stalls.
pub const KKT_TOLERANCE: f64 = 1e-6;

pub const BOUND_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    #[serde(with = "serde_vector")]
    pub weights: DVector<f64>,
    pub target_return: f64,
}

impl Portfolio {
    pub fn new(weights: DVector<f64>, target_return: f64) -> Self {
        Self { weights, target_return }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub portfolio: Portfolio,
    pub evar: EvarResult,
    pub kkt: KktReport,
}

/// `(κ(sω) − ln α)/s`.
pub fn evar_objective<M: ReturnModel + ?Sized>(model: &M, level: RiskLevel, weights: &DVector<f64>, s: f64) -> Result<f64> {
    Ok((model.laplace_exponent(&(weights * s))? - level.alpha().ln()) / s)
}

/// Gradient of [`evar_objective`] over `(ω, s)`, length `n + 1`.
pub fn evar_objective_gradient<M: ReturnModel + ?Sized>(
    model: &M,
    level: RiskLevel,
    weights: &DVector<f64>,
    s: f64,
) -> Result<DVector<f64>> {
    let n = weights.len();
    let u = weights * s;
    let kappa = model.laplace_exponent(&u)? - level.alpha().ln();
    let g = model.laplace_gradient(&u)?;
    let mut out = DVector::zeros(n + 1);
    out.rows_mut(0, n).copy_from(&g);
    out[n] = weights.dot(&g) / s - kappa / (s * s);
    Ok(out)
}

/// Hessian of [`evar_objective`] over `(ω, s)`.
pub fn evar_objective_hessian<M: ReturnModel + ?Sized>(
    model: &M,
    level: RiskLevel,
    weights: &DVector<f64>,
    s: f64,
) -> Result<DMatrix<f64>> {
    let n = weights.len();
    let u = weights * s;
    let kappa = model.laplace_exponent(&u)? - level.alpha().ln();
    let g = model.laplace_gradient(&u)?;
    let h = model.laplace_hessian(&u)?;
    let hw = &h * weights;
    let mut out = DMatrix::zeros(n + 1, n + 1);
    out.view_mut((0, 0), (n, n)).copy_from(&(&h * s));
    out.view_mut((0, n), (n, 1)).copy_from(&hw);
    out.view_mut((n, 0), (1, n)).copy_from(&hw.transpose());
    out[(n, n)] = weights.dot(&hw) / s - 2.0 * weights.dot(&g) / (s * s) + 2.0 * kappa / (s * s * s);
    Ok(out)
}

struct EvarProblem<'a, M: ?Sized> {
    model: &'a M,
    level: RiskLevel,
    n: usize,
}

impl<M: ReturnModel + ?Sized> SmoothProblem for EvarProblem<'_, M> {
    fn value(&self, x: &DVector<f64>) -> Result<f64> {
        let w = x.rows(0, self.n).into_owned();
        evar_objective(self.model, self.level, &w, x[self.n])
    }
    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let w = x.rows(0, self.n).into_owned();
        evar_objective_gradient(self.model, self.level, &w, x[self.n])
    }
    fn hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let w = x.rows(0, self.n).into_owned();
        evar_objective_hessian(self.model, self.level, &w, x[self.n])
    }
}

struct VarianceProblem<'a> {
    cov: &'a DMatrix<f64>,
}

impl SmoothProblem for VarianceProblem<'_> {
    fn value(&self, x: &DVector<f64>) -> Result<f64> {
        Ok((x.transpose() * self.cov * x)[(0, 0)])
    }
    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.cov * x * 2.0)
    }
    fn hessian(&self, _x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.cov * 2.0)
    }
}

/// Range `[min_i m_i, max_i m_i]` of returns reachable on the simplex.
pub fn attainable_range(means: &DVector<f64>) -> (f64, f64) {
    (means.min(), means.max())
}

fn check_target(means: &DVector<f64>, mu_star: f64) -> Result<()> {
    let (lo, hi) = attainable_range(means);
    let tol = 1e-12 * mu_star.abs().max(1.0);
    if !mu_star.is_finite() || mu_star < lo - tol || mu_star > hi + tol {
        return Err(Error::InfeasibleTarget { target: mu_star, min: lo, max: hi });
    }
    Ok(())
}

/// Splits assets by mean relative to the target.
fn partition(means: &DVector<f64>, mu_star: f64) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let tol = 1e-12 * mu_star.abs().max(1.0);
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    let mut eq = Vec::new();
    for (i, &m) in means.iter().enumerate() {
        if m < mu_star - tol {
            lo.push(i);
        } else if m > mu_star + tol {
            hi.push(i);
        } else {
            eq.push(i);
        }
    }
    (lo, hi, eq)
}

fn combine(means: &DVector<f64>, mu_star: f64, group_weights: impl Fn(&[usize]) -> Vec<f64>) -> Result<DVector<f64>> {
    check_target(means, mu_star)?;
    let n = means.len();
    let (lo, hi, eq) = partition(means, mu_star);
    let mut w = DVector::zeros(n);
    let place = |w: &mut DVector<f64>, idx: &[usize], vals: &[f64], scale: f64| {
        for (&i, &v) in idx.iter().zip(vals) {
            w[i] += scale * v;
        }
    };
    let eq_share = if eq.is_empty() { 0.0 } else if lo.is_empty() || hi.is_empty() { 1.0 } else { eq.len() as f64 / n as f64 };
    if eq_share < 1.0 {
        let wl = group_weights(&lo);
        let wh = group_weights(&hi);
        let ml: f64 = lo.iter().zip(&wl).map(|(&i, v)| means[i] * v).sum();
        let mh: f64 = hi.iter().zip(&wh).map(|(&i, v)| means[i] * v).sum();
        let t = ((mu_star - ml) / (mh - ml)).clamp(0.0, 1.0);
        place(&mut w, &lo, &wl, (1.0 - eq_share) * (1.0 - t));
        place(&mut w, &hi, &wh, (1.0 - eq_share) * t);
    }
    if eq_share > 0.0 {
        let we = group_weights(&eq);
        place(&mut w, &eq, &we, eq_share);
    }
    Ok(w)
}

/// Deterministic feasible weights: uniform mixes below and above the target.
pub fn feasible_start(means: &DVector<f64>, mu_star: f64) -> Result<DVector<f64>> {
    combine(means, mu_star, |idx| vec![1.0 / idx.len() as f64; idx.len()])
}

/// Random feasible weights: Dirichlet(1) mixes below and above the target.
pub fn random_feasible_start<R: Rng + ?Sized>(means: &DVector<f64>, mu_star: f64, rng: &mut R) -> Result<DVector<f64>> {
    let draws: Vec<f64> = (0..means.len()).map(|_| Exp1.sample(rng)).collect();
    combine(means, mu_star, |idx| {
        let total: f64 = idx.iter().map(|&i| draws[i]).sum();
        idx.iter().map(|&i| draws[i] / total).collect()
    })
}

fn simplex_constraints(means: &DVector<f64>, mu_star: f64, extra: usize) -> Constraints {
    let n = means.len();
    let dim = n + extra;
    let mut eq = DMatrix::zeros(2, dim);
    for i in 0..n {
        eq[(0, i)] = means[i];
        eq[(1, i)] = 1.0;
    }
    let mut lower = DVector::zeros(dim);
    for j in n..dim {
        lower[j] = S_FLOOR;
    }
    Constraints { eq, rhs: DVector::from_vec(vec![mu_star, 1.0]), lower }
}

/// Minimizes `(κ(sω) − ln α)/s` jointly over `(ω, s)` subject to
/// `m·ω = μ*`, `Σω = 1`, `ω ≥ 0`, where `m` is the model mean.
pub fn solve_evar<M: ReturnModel + ?Sized>(model: &M, level: RiskLevel, mu_star: f64) -> Result<Solution> {
    let means = model.mean();
    let start = feasible_start(&means, mu_star)?;
    solve_evar_from(model, level, mu_star, &start)
}

/// [`solve_evar`] from caller-supplied feasible starting weights.
pub fn solve_evar_from<M: ReturnModel + ?Sized>(
    model: &M,
    level: RiskLevel,
    mu_star: f64,
    start: &DVector<f64>,
) -> Result<Solution> {
    let n = model.n_assets();
    let means = model.mean();
    check_target(&means, mu_star)?;
    if start.len() != n {
        return Err(Error::InvalidParameter(format!("start has {} weights, expected {n}", start.len())));
    }
    let s0 = evar_model(model, start, level)?.s_star;
    let mut x0 = DVector::zeros(n + 1);
    x0.rows_mut(0, n).copy_from(start);
    x0[n] = s0.max(S_FLOOR);

    let cons = simplex_constraints(&means, mu_star, 1);
    let problem = EvarProblem { model, level, n };
    let out = active_set::solve(&problem, &cons, x0)?;

    let weights = out.x.rows(0, n).into_owned();
    let s = out.x[n];
    let portfolio = Portfolio::new(weights.clone(), mu_star);
    let grad = evar_objective_gradient(model, level, &weights, s)?;
    let multipliers = recover_multipliers(&grad, &means, &weights, s, BOUND_TOL);
    let lag = kkt::lagrangian_gradient_from(&grad, &means, &multipliers);
    let mut report = kkt::report_from_gradient(&lag, &means, &portfolio, s, &multipliers);
    report.non_unique = out.non_unique;

    if report.stationarity_inf_norm > KKT_TOLERANCE || !out.value.is_finite() {
        return Err(Error::SolverStall {
            stationarity: report.stationarity_inf_norm,
            iterations: out.iterations,
            best_weights: weights.iter().copied().collect(),
            best_objective: out.value,
        });
    }
    let evar = EvarResult { value: out.value, s_star: s, iterations: out.iterations, converged: out.converged };
    Ok(Solution { portfolio, evar, kkt: report })
}

/// Markowitz minimum variance on the long-only simplex with a return target.
pub fn solve_min_variance(cov: &DMatrix<f64>, means: &DVector<f64>, mu_star: f64) -> Result<Portfolio> {
    let n = means.len();
    if cov.nrows() != n || cov.ncols() != n {
        return Err(Error::InvalidParameter(format!("covariance is {}x{}, expected {n}x{n}", cov.nrows(), cov.ncols())));
    }
    let start = feasible_start(means, mu_star)?;
    let cons = simplex_constraints(means, mu_star, 0);
    let out = active_set::solve(&VarianceProblem { cov }, &cons, start)?;

    // KKT verification on the variance problem itself
    let grad = cov * &out.x * 2.0;
    let mut padded = DVector::zeros(n + 1);
    padded.rows_mut(0, n).copy_from(&grad);
    let multipliers = recover_multipliers(&padded, means, &out.x, 1.0, BOUND_TOL);
    let lag = kkt::lagrangian_gradient_from(&padded, means, &multipliers);
    if lag.amax() > KKT_TOLERANCE {
        return Err(Error::SolverStall {
            stationarity: lag.amax(),
            iterations: out.iterations,
            best_weights: out.x.iter().copied().collect(),
            best_objective: out.value,
        });
    }
    Ok(Portfolio::new(out.x, mu_star))
}
