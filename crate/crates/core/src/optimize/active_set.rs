//! Primal active-set Newton method for smooth objectives under linear
//! equality constraints and lower bounds.
//!
//! Each iteration takes a (Levenberg-regularized) Newton step in the null
//! space of the equality constraints restricted to the free variables, with
//! a ratio test against the bounds and Armijo backtracking. Bounds that
//! block a step join the working set; a bound leaves it when its multiplier
//! turns negative at a stationary point of the reduced problem.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg;

pub(crate) trait SmoothProblem {
    fn value(&self, x: &DVector<f64>) -> Result<f64>;
    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
    fn hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>>;
}

pub(crate) struct Constraints {
    /// Equality rows over all variables.
    pub eq: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub lower: DVector<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub x: DVector<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Reduced Hessian is singular at the solution.
    pub non_unique: bool,
}

const MAX_ITERATIONS: usize = 500;
const GRAD_TOL: f64 = 1e-11;
const MULTIPLIER_TOL: f64 = 1e-10;
const ARMIJO: f64 = 1e-4;
const TIE_TOL: f64 = 1e-9;
const WEAK_MULTIPLIER: f64 = 1e-8;

struct Iterate {
    x: DVector<f64>,
    value: f64,
    /// Reduced gradient within ten times the convergence tolerance.
    near_stationary: bool,
}

fn is_overflow(e: &Error) -> bool {
    matches!(e, Error::ExponentOverflow { .. })
}

pub(crate) fn solve<P: SmoothProblem>(problem: &P, cons: &Constraints, x0: DVector<f64>) -> Result<Outcome> {
    let dim = x0.len();
    let mut x = x0;
    let mut active: Vec<bool> = (0..dim).map(|j| x[j] <= cons.lower[j]).collect();
    for j in 0..dim {
        if active[j] {
            x[j] = cons.lower[j];
        }
    }
    let mut value = problem.value(&x)?;
    let mut history: Vec<Iterate> = Vec::new();
    let mut converged = false;
    let mut non_unique = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let g = problem.gradient(&x)?;
        let h = problem.hessian(&x)?;
        let free: Vec<usize> = (0..dim).filter(|&j| !active[j]).collect();
        let c_free = cons.eq.select_columns(&free);
        let z = linalg::null_space(&c_free);
        let g_free = DVector::from_iterator(free.len(), free.iter().map(|&j| g[j]));
        let rg = z.transpose() * &g_free;
        let reduced_norm = rg.amax();
        let scale = g.amax().max(1.0);
        history.push(Iterate { x: x.clone(), value, near_stationary: reduced_norm <= 10.0 * GRAD_TOL * scale });

        let h_free = h.select_rows(&free).select_columns(&free);
        let rh = z.transpose() * &h_free * &z;

        let mut direction = None;
        if reduced_norm <= GRAD_TOL * scale {
            let rank_deficient = free.len() - z.ncols() < cons.eq.nrows();
            let nu = if rank_deficient {
                // η is not unique: fit (η, ν ≥ 0) jointly. A nonzero residual is a
                // feasible descent direction.
                let (nu, residual) = bound_multipliers(&g, cons, &active);
                if residual.amax() > MULTIPLIER_TOL * scale {
                    for j in 0..dim {
                        if active[j] && residual[j] > 0.0 {
                            active[j] = false;
                        }
                    }
                    direction = Some(residual);
                }
                nu
            } else {
                // multipliers: g_F + C_Fᵀη = 0, ν_j = g_j + (Cᵀη)_j on the working set
                let eta = linalg::lstsq(&c_free.transpose(), &(-&g_free));
                let ceta = cons.eq.transpose() * &eta;
                let nu = DVector::from_fn(dim, |j, _| if active[j] { g[j] + ceta[j] } else { 0.0 });
                let release = (0..dim)
                    .filter(|&j| active[j] && nu[j] < -MULTIPLIER_TOL * scale)
                    .min_by(|&a, &b| nu[a].total_cmp(&nu[b]));
                if let Some(j) = release {
                    active[j] = false;
                    continue;
                }
                nu
            };
            if direction.is_none() {
                converged = true;
                // bounds held with a vanishing multiplier do not pin their variable
                let loose: Vec<usize> = (0..dim).filter(|&j| !active[j] || nu[j] <= WEAK_MULTIPLIER * scale).collect();
                let z_loose = linalg::null_space(&cons.eq.select_columns(&loose));
                let h_loose = h.select_rows(&loose).select_columns(&loose);
                non_unique = reduced_singular(&(z_loose.transpose() * h_loose * &z_loose));
                break;
            }
        }

        let d = match direction {
            Some(d) => d,
            None => {
                let p = regularized_solve(&rh, &rg);
                let d_free = &z * p;
                let mut d = DVector::zeros(dim);
                for (k, &j) in free.iter().enumerate() {
                    d[j] = d_free[k];
                }
                d
            }
        };
        let free: Vec<usize> = (0..dim).filter(|&j| !active[j]).collect();
        let slope = g.dot(&d);
        if !(slope < 0.0) {
            // no descent direction left at working precision
            break;
        }

        let mut t_max = f64::INFINITY;
        let mut blocking = None;
        for &j in &free {
            if d[j] < 0.0 {
                let t = (x[j] - cons.lower[j]) / -d[j];
                if t < t_max {
                    t_max = t;
                    blocking = Some(j);
                }
            }
        }
        let mut t = t_max.min(1.0);
        let mut accepted = None;
        for _ in 0..80 {
            let mut trial = &x + &d * t;
            clamp_to_bounds(&mut trial, &cons.lower);
            match problem.value(&trial) {
                Ok(v) if v.is_finite() && v <= value + ARMIJO * t * slope => {
                    accepted = Some((trial, v));
                    break;
                }
                Ok(_) => {}
                Err(e) if is_overflow(&e) => {}
                Err(e) => return Err(e),
            }
            t *= 0.5;
        }
        let Some((mut trial, v)) = accepted else {
            break;
        };
        if t == t_max {
            if let Some(j) = blocking {
                trial[j] = cons.lower[j];
                active[j] = true;
            }
        }
        for j in 0..dim {
            if !active[j] && trial[j] <= cons.lower[j] {
                trial[j] = cons.lower[j];
                active[j] = true;
            }
        }
        x = trial;
        value = v;
    }

    // lexicographically smallest among converged-quality iterates within the tie tolerance
    if converged {
        let best = value;
        let tol = TIE_TOL * best.abs().max(1.0);
        if let Some(lex) = history
            .iter()
            .filter(|it| it.near_stationary && it.value <= best + tol)
            .min_by(|a, b| lex_cmp(&a.x, &b.x))
        {
            if lex_cmp(&lex.x, &x).is_lt() {
                x = lex.x.clone();
                value = lex.value;
            }
        }
    }

    project_equalities(&mut x, cons);
    let value = problem.value(&x).unwrap_or(value);
    Ok(Outcome { x, value, iterations, converged, non_unique })
}

/// Bound multipliers from `g + Cᵀη − ν = 0` with `ν ≥ 0` on the working set,
/// and the residual of that fit.
fn bound_multipliers(g: &DVector<f64>, cons: &Constraints, active: &[bool]) -> (DVector<f64>, DVector<f64>) {
    let dim = g.len();
    let rows = cons.eq.nrows();
    let bound: Vec<usize> = (0..dim).filter(|&j| active[j]).collect();
    let mut a = DMatrix::zeros(dim, rows + bound.len());
    a.columns_mut(0, rows).copy_from(&cons.eq.transpose());
    for (k, &j) in bound.iter().enumerate() {
        a[(j, rows + k)] = -1.0;
    }
    let b = -g;
    let sol = linalg::nnls_partial(&a, &b, rows);
    let residual = &b - &a * &sol;
    let mut nu = DVector::zeros(dim);
    for (k, &j) in bound.iter().enumerate() {
        nu[j] = sol[rows + k];
    }
    (nu, residual)
}

fn lex_cmp(a: &DVector<f64>, b: &DVector<f64>) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    std::cmp::Ordering::Equal
}

fn clamp_to_bounds(x: &mut DVector<f64>, lower: &DVector<f64>) {
    for j in 0..x.len() {
        if x[j] < lower[j] {
            x[j] = lower[j];
        }
    }
}

fn reduced_singular(rh: &DMatrix<f64>) -> bool {
    if rh.nrows() == 0 {
        return false;
    }
    let eig = SymmetricEigen::new(rh.clone()).eigenvalues;
    let scale = eig.amax().max(1e-300);
    eig.min() <= 1e-9 * scale
}

/// Solves `(RH + τI) p = −rg`, raising τ until the matrix factors.
fn regularized_solve(rh: &DMatrix<f64>, rg: &DVector<f64>) -> DVector<f64> {
    let k = rh.nrows();
    if k == 0 {
        return DVector::zeros(0);
    }
    let scale = rh.diagonal().amax().max(1e-12);
    let mut tau = 0.0;
    for _ in 0..40 {
        let m = rh + DMatrix::<f64>::identity(k, k) * tau;
        if let Some(c) = Cholesky::new(m) {
            let p = c.solve(&(-rg));
            if p.iter().all(|v| v.is_finite()) {
                return p;
            }
        }
        tau = if tau == 0.0 { 1e-10 * scale } else { tau * 10.0 };
    }
    -rg / scale
}

/// Minimal-norm correction of the free variables onto the equality set.
fn project_equalities(x: &mut DVector<f64>, cons: &Constraints) {
    let dim = x.len();
    for _ in 0..2 {
        let residual = &cons.rhs - &cons.eq * &*x;
        if residual.amax() == 0.0 {
            return;
        }
        let free: Vec<usize> = (0..dim).filter(|&j| x[j] > cons.lower[j]).collect();
        if free.is_empty() {
            return;
        }
        let c_free = cons.eq.select_columns(&free);
        let delta = linalg::lstsq(&c_free, &residual);
        for (k, &j) in free.iter().enumerate() {
            x[j] = (x[j] + delta[k]).max(cons.lower[j]);
        }
    }
}
