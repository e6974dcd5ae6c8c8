//! Entropic Value at Risk.
//!
//! For a return `X` (a gain; losses are `−X`) and level `α ∈ (0,1)`,
//!
//! ```text
//! EVaR_α(X) = inf_{s>0} (ln E[exp(−sX)] − ln α) / s
//! ```
//!
//! For a portfolio `ω` the log moment generating function is the model
//! Laplace exponent along the ray `s·ω`, so the analytic route only needs
//! `κ`. The empirical route replaces the expectation by a sample mean.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::ReturnSample;
use crate::error::{Error, Result};
use crate::model::ReturnModel;

/// Lower end of the search range for `s`.
pub const S_MIN: f64 = 1e-8;
/// Upper end of the search range for `s`.
pub const S_MAX: f64 = 1e6;

const BRACKET_FACTOR: f64 = 4.0;
const GOLDEN: f64 = 0.381_966_011_250_105_1;
const BRACKET_WIDTH: f64 = 1e-12;
const MAX_GOLDEN_STEPS: usize = 400;

/// The level `α` of `EVaR_α`. A 95% confidence level corresponds to
/// `α = 0.05`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct RiskLevel(f64);

impl RiskLevel {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(Self(alpha))
        } else {
            Err(Error::InvalidParameter(format!("alpha must lie in (0,1), got {alpha}")))
        }
    }

    /// Maps a confidence level such as 0.95 to `α = 1 − confidence`.
    pub fn from_confidence(confidence: f64) -> Result<Self> {
        if confidence > 0.0 && confidence < 1.0 {
            Self::new(1.0 - confidence)
        } else {
            Err(Error::InvalidParameter(format!("confidence must lie in (0,1), got {confidence}")))
        }
    }

    pub fn alpha(self) -> f64 {
        self.0
    }

    pub fn confidence(self) -> f64 {
        1.0 - self.0
    }
}

impl TryFrom<f64> for RiskLevel {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<RiskLevel> for f64 {
    fn from(l: RiskLevel) -> f64 {
        l.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvarResult {
    /// EVaR in return units.
    pub value: f64,
    /// Minimizing `s`. Infinite when the infimum is only reached in the limit.
    pub s_star: f64,
    /// Objective evaluations used.
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `(log_mgf(s) − ln α)/s` over `s ∈ [S_MIN, S_MAX]`.
///
/// `log_mgf(s)` must return `ln E[exp(−sX)]`. Exponent overflow during the
/// search counts as `+∞`.
pub fn minimize_entropic<F>(mut log_mgf: F, level: RiskLevel) -> Result<EvarResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    let neg_log_alpha = -level.alpha().ln();
    let mut evals = 0usize;
    let mut last_overflow = None;
    let mut f = |s: f64| -> Result<f64> {
        evals += 1;
        match log_mgf(s) {
            Ok(v) if v.is_nan() => Ok(f64::INFINITY),
            Ok(v) => Ok((v + neg_log_alpha) / s),
            Err(e @ Error::ExponentOverflow { .. }) => {
                last_overflow = Some(e);
                Ok(f64::INFINITY)
            }
            Err(e) => Err(e),
        }
    };

    let mut b = 1.0;
    let mut fb = f(b)?;
    while !fb.is_finite() {
        if b <= S_MIN {
            drop(f);
            return Err(last_overflow.unwrap_or(Error::NoInteriorMinimum { cap: S_MIN }));
        }
        b = (b / BRACKET_FACTOR).max(S_MIN);
        fb = f(b)?;
    }

    let (mut a, mut c);
    let up = (b * BRACKET_FACTOR).min(S_MAX);
    let f_up = f(up)?;
    if f_up < fb {
        a = b;
        b = up;
        fb = f_up;
        loop {
            if b >= S_MAX {
                return Err(Error::NoInteriorMinimum { cap: S_MAX });
            }
            let next = (b * BRACKET_FACTOR).min(S_MAX);
            let fn_ = f(next)?;
            if fn_ >= fb {
                c = next;
                break;
            }
            a = b;
            b = next;
            fb = fn_;
        }
    } else {
        c = up;
        loop {
            if b <= S_MIN {
                return Err(Error::NoInteriorMinimum { cap: S_MIN });
            }
            let next = (b / BRACKET_FACTOR).max(S_MIN);
            let fn_ = f(next)?;
            if fn_ >= fb {
                a = next;
                break;
            }
            c = b;
            b = next;
            fb = fn_;
        }
    }

    // golden-section refinement keeping fb <= f(a), f(c)
    let mut steps = 0;
    while c - a > BRACKET_WIDTH * b.max(1.0) && steps < MAX_GOLDEN_STEPS {
        steps += 1;
        let x = if c - b > b - a { b + GOLDEN * (c - b) } else { b - GOLDEN * (b - a) };
        let fx = f(x)?;
        if fx < fb {
            if x > b {
                a = b;
            } else {
                c = b;
            }
            b = x;
            fb = fx;
        } else if x > b {
            c = x;
        } else {
            a = x;
        }
    }

    // one Newton step on finite-difference derivatives
    let h = 1e-4 * b;
    if b - h > 0.0 {
        let fp = f(b + h)?;
        let fm = f(b - h)?;
        let d1 = (fp - fm) / (2.0 * h);
        let d2 = (fp - 2.0 * fb + fm) / (h * h);
        if d2 > 0.0 && d1.is_finite() {
            let x = b - d1 / d2;
            if x > a && x < c {
                let fx = f(x)?;
                if fx < fb {
                    b = x;
                    fb = fx;
                }
            }
        }
    }

    drop(f);
    Ok(EvarResult { value: fb, s_star: b, iterations: evals, converged: true })
}

/// EVaR of `ω·R` from a Laplace exponent `kappa(u) = ln E[exp(−u·R)]`.
pub fn evar_analytic<K>(kappa: K, weights: &DVector<f64>, level: RiskLevel) -> Result<EvarResult>
where
    K: Fn(&DVector<f64>) -> Result<f64>,
{
    check_weights(weights)?;
    minimize_entropic(|s| kappa(&(weights * s)), level)
}

/// [`evar_analytic`] bound to a model's Laplace exponent.
pub fn evar_model<M: ReturnModel + ?Sized>(model: &M, weights: &DVector<f64>, level: RiskLevel) -> Result<EvarResult> {
    evar_analytic(|u| model.laplace_exponent(u), weights, level)
}

/// Sample analogue: the empirical log-MGF of `ω·R` via log-sum-exp.
///
/// When the objective keeps decreasing up to `S_MAX` the infimum is the
/// limit `max_j(−ω·R_j)`; that value is returned with `s_star = ∞`.
pub fn evar_empirical(sample: &ReturnSample, weights: &DVector<f64>, level: RiskLevel) -> Result<EvarResult> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    check_weights(weights)?;
    let losses: Vec<f64> = sample.portfolio_returns(weights)?.iter().map(|r| -r).collect();
    evar_from_losses(&losses, level)
}

/// EVaR from portfolio losses `−ω·R_j`.
pub fn evar_from_losses(losses: &[f64], level: RiskLevel) -> Result<EvarResult> {
    if losses.is_empty() {
        return Err(Error::EmptySample);
    }
    let max_loss = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_n = (losses.len() as f64).ln();
    let log_mgf = |s: f64| -> Result<f64> {
        let top = s * max_loss;
        let sum: f64 = losses.iter().map(|&l| (s * l - top).exp()).sum();
        Ok(top + sum.ln() - log_n)
    };
    match minimize_entropic(log_mgf, level) {
        Err(Error::NoInteriorMinimum { cap }) if cap == S_MAX => {
            let at_cap = (log_mgf(S_MAX)? - level.alpha().ln()) / S_MAX;
            let value = at_cap.min(max_loss);
            Ok(EvarResult { value, s_star: f64::INFINITY, iterations: 0, converged: true })
        }
        other => other,
    }
}

/// Lower empirical quantile of the loss `−ω·R`: the smallest loss whose
/// empirical CDF reaches `1 − α`.
pub fn var_empirical(sample: &ReturnSample, weights: &DVector<f64>, level: RiskLevel) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut losses: Vec<f64> = sample.portfolio_returns(weights)?.iter().map(|r| -r).collect();
    losses.sort_by(f64::total_cmp);
    let n = losses.len();
    // guard against (1−α)·N landing a hair above an integer
    let rank = ((level.confidence() * n as f64) - 1e-9).ceil().max(1.0) as usize;
    Ok(losses[rank.min(n) - 1])
}

/// `√(ω Σ ωᵀ)`.
pub fn stdev_portfolio(cov: &DMatrix<f64>, weights: &DVector<f64>) -> Result<f64> {
    if cov.nrows() != weights.len() || cov.ncols() != weights.len() {
        return Err(Error::InvalidParameter(format!(
            "covariance is {}x{} for {} weights",
            cov.nrows(),
            cov.ncols(),
            weights.len()
        )));
    }
    let q = (weights.transpose() * cov * weights)[(0, 0)];
    if q < -1e-12 {
        return Err(Error::NegativeQuadraticForm(q));
    }
    Ok(q.max(0.0).sqrt())
}

fn check_weights(weights: &DVector<f64>) -> Result<()> {
    if weights.is_empty() || weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::InvalidParameter("weights must be a non-empty finite vector".into()));
    }
    Ok(())
}
