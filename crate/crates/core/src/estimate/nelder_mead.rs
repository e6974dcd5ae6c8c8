//! Nelder–Mead simplex search with dimension-adaptive coefficients.

use nalgebra::DVector;

#[derive(Debug, Clone, Copy)]
pub struct Settings {
    pub max_evaluations: usize,
    /// Simplex diameter tolerance, relative to `max(1, |x_best|∞)`.
    pub x_tol: f64,
    /// Objective spread tolerance, relative to `max(1, |f_best|)`.
    pub f_tol: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self { max_evaluations: 20_000, x_tol: 1e-8, f_tol: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: DVector<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `f` from `x0`. Non-finite values are treated as `+∞`.
pub fn minimize<F>(mut f: F, x0: &DVector<f64>, settings: Settings) -> Minimum
where
    F: FnMut(&DVector<f64>) -> f64,
{
    let n = x0.len();
    let nf = n.max(1) as f64;
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf);
    let mut evals = 0;
    let mut eval = |x: &DVector<f64>, evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut simplex: Vec<(DVector<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = eval(x0, &mut evals);
    simplex.push((x0.clone(), v0));
    for j in 0..n {
        let mut x = x0.clone();
        x[j] += if x[j] != 0.0 { 0.05 * x[j] } else { 0.00025 };
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }

    let mut iterations = 0;
    let mut converged = false;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let x_scale = simplex[0].0.amax().max(1.0);
        let diameter = simplex[1..].iter().map(|(x, _)| (x - &simplex[0].0).amax()).fold(0.0, f64::max);
        if best.is_finite() && diameter <= settings.x_tol * x_scale && worst - best <= settings.f_tol * best.abs().max(1.0)
        {
            converged = true;
            break;
        }
        if evals >= settings.max_evaluations || n == 0 {
            break;
        }
        iterations += 1;

        let centroid = simplex[..n].iter().fold(DVector::zeros(n), |acc, (x, _)| acc + x) / nf;
        let worst_x = simplex[n].0.clone();
        let second = simplex[n - 1].1;

        let xr = &centroid + (&centroid - &worst_x) * alpha;
        let fr = eval(&xr, &mut evals);
        if fr < best {
            let xe = &centroid + (&xr - &centroid) * beta;
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < second {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst {
            let xc = &centroid + (&xr - &centroid) * gamma;
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = &centroid + (&worst_x - &centroid) * gamma;
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < fr.min(worst) {
            simplex[n] = (xc, fc);
            continue;
        }
        let x_best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x = &x_best + (&vertex.0 - &x_best) * delta;
            let v = eval(&x, &mut evals);
            *vertex = (x, v);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Minimum { x, value, evaluations: evals, iterations, converged }
}
