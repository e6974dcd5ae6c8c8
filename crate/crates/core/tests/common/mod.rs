#![allow(dead_code)]

use jdevar_core::data::ReturnSample;
use jdevar_core::model::{Model1Params, Model2Params, ModelParams, ReturnModel};
use jdevar_core::optimize::evar_objective;
use jdevar_core::risk::{minimize_entropic, RiskLevel};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn fixture_model() -> Model1Params {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/frontier_model1.json");
    match ModelParams::from_json_str(&std::fs::read_to_string(path).unwrap()).unwrap() {
        ModelParams::Model1(p) => p,
        ModelParams::Model2(_) => panic!("fixture should be model 1"),
    }
}

fn random_psd<R: Rng>(rng: &mut R, n: usize, scale: f64, ridge: f64) -> DMatrix<f64> {
    let l = DMatrix::from_fn(n, n, |i, j| if j <= i { rng.random_range(-scale..scale) } else { 0.0 });
    &l * l.transpose() + DMatrix::identity(n, n) * ridge
}

fn uniform_vec<R: Rng>(rng: &mut R, n: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(lo..hi))
}

/// Weekly-scale model 1 parameters.
pub fn random_model1<R: Rng>(rng: &mut R, n: usize) -> Model1Params {
    Model1Params::new(
        uniform_vec(rng, n, -0.01, 0.01),
        rng.random_range(0.01..0.05),
        uniform_vec(rng, n, 0.0, 0.5),
        uniform_vec(rng, n, -0.05, 0.05),
        uniform_vec(rng, n, 0.01, 0.05),
        rng.random_range(0.0..0.5),
        uniform_vec(rng, n, -0.05, 0.05),
        random_psd(rng, n, 0.03, 0.0),
    )
    .unwrap()
}

/// Weekly-scale model 2 parameters.
pub fn random_model2<R: Rng>(rng: &mut R, n: usize) -> Model2Params {
    Model2Params::new(
        uniform_vec(rng, n, -0.01, 0.01),
        random_psd(rng, n, 0.03, 1e-4),
        rng.random_range(0.0..0.5),
        uniform_vec(rng, n, -0.05, 0.05),
        random_psd(rng, n, 0.03, 0.0),
    )
    .unwrap()
}

/// Random point on the simplex.
pub fn random_simplex<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    let e = DVector::from_fn(n, |_, _| -rng.random_range(f64::EPSILON..1.0).ln());
    let total = e.sum();
    e / total
}

pub fn sample_mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `ln mean(exp(−u·R))` and the delta-method standard error of that log.
pub fn empirical_log_mgf(sample: &ReturnSample, u: &DVector<f64>) -> (f64, f64) {
    let values: Vec<f64> = (sample.returns.clone() * u).iter().map(|x| (-x).exp()).collect();
    let (m, se) = sample_mean_and_se(&values);
    (m.ln(), se / m)
}

/// `min_s F(ω, s)` by the one-dimensional minimizer.
pub fn nested_evar<M: ReturnModel + ?Sized>(model: &M, level: RiskLevel, w: &DVector<f64>) -> f64 {
    minimize_entropic(|s| model.laplace_exponent(&(w * s)), level).unwrap().value
}

pub fn joint_objective<M: ReturnModel + ?Sized>(model: &M, level: RiskLevel, w: &DVector<f64>, s: f64) -> f64 {
    evar_objective(model, level, w, s).unwrap()
}

/// Points on the 1-D feasible segment `{m·ω = μ*, Σω = 1, ω ≥ 0}` for three
/// assets, spaced 0.01 apart in the largest-moving coordinate.
pub fn feasible_segment_grid(means: &DVector<f64>, mu_star: f64, step: f64) -> Vec<DVector<f64>> {
    assert_eq!(means.len(), 3);
    // intersections of the line with each face ω_k = 0
    let mut ends = Vec::new();
    for k in 0..3 {
        let (i, j) = ((k + 1) % 3, (k + 2) % 3);
        let det = means[i] - means[j];
        if det.abs() < 1e-15 {
            continue;
        }
        let mut w = DVector::zeros(3);
        w[i] = (mu_star - means[j]) / det;
        w[j] = 1.0 - w[i];
        if w.iter().all(|&v| v >= -1e-12) {
            ends.push(w.map(|v| v.max(0.0)));
        }
    }
    assert!(!ends.is_empty(), "target not attainable");
    let (a, b) = ends
        .iter()
        .flat_map(|x| ends.iter().map(move |y| (x, y)))
        .max_by(|p, q| (p.0 - p.1).amax().total_cmp(&(q.0 - q.1).amax()))
        .unwrap();
    let span = (b - a).amax();
    let steps = (span / step).ceil().max(1.0) as usize;
    (0..=steps).map(|k| a + (b - a) * (k as f64 / steps as f64)).collect()
}
