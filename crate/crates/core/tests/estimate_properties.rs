mod common;

use common::*;
use jdevar_core::data::ReturnSample;
use jdevar_core::estimate::{fit_els, reparam, ElsProblem};
use jdevar_core::linalg;
use jdevar_core::model::{Model1Params, Model2Params, ModelKind, ModelParams, ReturnModel};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_sample(seed: u64, rows: usize) -> ReturnSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_model2(&mut rng, 3).sample(rows, seed).unwrap()
}

fn gaussian_log_likelihood(data: &ReturnSample, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let chol = linalg::cholesky_pd(cov).unwrap();
    data.returns.row_iter().map(|r| linalg::gaussian_log_pdf(&r.transpose(), mean, &chol)).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn objective_is_row_permutation_invariant(seed in any::<u64>()) {
        let data = random_sample(seed, 60);
        let mut rows: Vec<usize> = (0..data.len()).collect();
        rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        let shuffled = ReturnSample::unnamed(data.returns.select_rows(&rows)).unwrap();
        for kind in [ModelKind::Model1, ModelKind::Model2] {
            let a = ElsProblem::new(data.clone(), kind).unwrap();
            let b = ElsProblem::new(shuffled.clone(), kind).unwrap();
            for p in a.starting_points(3, seed).unwrap() {
                let (x, y) = (a.objective(&p).unwrap(), b.objective(&p).unwrap());
                prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn trace_form_equals_direct_sum(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = random_sample(seed, 40);
        let p2 = ElsProblem::new(data.clone(), ModelKind::Model2).unwrap();
        let m2: ModelParams = random_model2(&mut rng, 3).into();
        let (a, b) = (p2.objective(&m2).unwrap(), p2.objective_direct(&m2).unwrap());
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        let p1 = ElsProblem::new(data, ModelKind::Model1).unwrap();
        let m1: ModelParams = random_model1(&mut rng, 3).into();
        let (a, b) = (p1.objective(&m1).unwrap(), p1.objective_direct(&m1).unwrap());
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn reparameterization_round_trips(seed in any::<u64>(), n in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in [ModelParams::from(random_model1(&mut rng, n)), ModelParams::from(random_model2(&mut rng, n))] {
            let kind = p.as_model().kind();
            let back = reparam::decode(kind, n, &reparam::encode(&p));
            let (a, b) = (serde_json::to_value(&p).unwrap(), serde_json::to_value(&back).unwrap());
            let flat = |v: &serde_json::Value| -> Vec<f64> {
                let mut out = Vec::new();
                fn walk(v: &serde_json::Value, out: &mut Vec<f64>) {
                    match v {
                        serde_json::Value::Number(x) => out.push(x.as_f64().unwrap()),
                        serde_json::Value::Array(xs) => xs.iter().for_each(|x| walk(x, out)),
                        serde_json::Value::Object(m) => m.values().for_each(|x| walk(x, out)),
                        _ => {}
                    }
                }
                walk(v, &mut out);
                out
            };
            for (x, y) in flat(&a).iter().zip(flat(&b).iter()) {
                prop_assert!((x - y).abs() <= 1e-10, "{} vs {}", x, y);
            }
        }
    }

    #[test]
    fn els_is_minus_twice_gaussian_log_likelihood(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = random_sample(seed, 30);
        let model = random_model2(&mut rng, 3);
        let problem = ElsProblem::new(data.clone(), ModelKind::Model2).unwrap();
        let els = problem.objective(&model.clone().into()).unwrap();
        let ll = gaussian_log_likelihood(&data, &model.mean(), &model.covariance());
        let constant = data.len() as f64 * 3.0 * (2.0 * std::f64::consts::PI).ln();
        prop_assert!((els - (-2.0 * ll - constant)).abs() <= 1e-8 * els.abs().max(1.0));
    }
}

#[test]
fn gaussian_fit_recovers_maximum_likelihood_moments() {
    let truth = Model2Params::gaussian(
        DVector::from_vec(vec![0.003, -0.001, 0.002]),
        DMatrix::from_row_slice(3, 3, &[4e-4, 1e-4, 5e-5, 1e-4, 3e-4, 8e-5, 5e-5, 8e-5, 5e-4]),
    )
    .unwrap();
    let data = truth.sample(2000, 3).unwrap();
    let (ybar, s) = (data.sample_mean(), data.biased_covariance());
    for kind in [ModelKind::Model1, ModelKind::Model2] {
        let fit = fit_els(&ElsProblem::new(data.clone(), kind).unwrap(), 8, 4).unwrap();
        let m = fit.params.as_model();
        assert!((m.mean() - &ybar).amax() <= 1e-6 * ybar.amax(), "{kind}");
        assert!((m.covariance() - &s).amax() <= 1e-6 * s.amax(), "{kind}");
        assert!(fit.diagnostics.mean_max_abs_diff <= 1e-6 * ybar.amax());
        // the Gaussian log-likelihood is maximal at the fitted moments
        let ll = gaussian_log_likelihood(&data, &m.mean(), &m.covariance());
        let mut nudged = m.covariance();
        nudged[(0, 0)] *= 1.01;
        assert!(gaussian_log_likelihood(&data, &m.mean(), &nudged) < ll);
    }
}

#[test]
fn jump_free_data_gives_small_intensities() {
    let truth = Model2Params::gaussian(
        DVector::from_vec(vec![0.002, 0.001, 0.0]),
        DMatrix::from_row_slice(3, 3, &[4e-4, 1e-4, 0.0, 1e-4, 3e-4, 5e-5, 0.0, 5e-5, 2e-4]),
    )
    .unwrap();
    let data = truth.sample(3000, 5).unwrap();
    let fit2 = fit_els(&ElsProblem::new(data.clone(), ModelKind::Model2).unwrap(), 16, 6).unwrap();
    let ModelParams::Model2(p2) = &fit2.params else { panic!("expected model 2") };
    assert!(p2.lambda <= 0.05, "lambda {}", p2.lambda);
    let fit1 = fit_els(&ElsProblem::new(data, ModelKind::Model1).unwrap(), 16, 6).unwrap();
    let ModelParams::Model1(p1) = &fit1.params else { panic!("expected model 1") };
    assert!(p1.gamma <= 0.05 && p1.lambda.amax() <= 0.05, "gamma {} lambda {}", p1.gamma, p1.lambda);
}

#[test]
fn fit_never_worse_than_gaussian_start() {
    let data = fixture_model().sample(800, 8).unwrap();
    for kind in [ModelKind::Model1, ModelKind::Model2] {
        let problem = ElsProblem::new(data.clone(), kind).unwrap();
        let start = problem.starting_points(1, 0).unwrap().remove(0);
        let fit = fit_els(&problem, 6, 1).unwrap();
        assert!(fit.objective <= problem.objective(&start).unwrap() + 1e-9);
        assert_eq!(fit.n_obs, 800);
    }
}

#[test]
fn model1_fit_matches_moments_of_jump_data() {
    let truth = Model1Params::new(
        DVector::from_vec(vec![0.003, 0.001, 0.002]),
        0.02,
        DVector::from_vec(vec![0.2, 0.3, 0.1]),
        DVector::from_vec(vec![-0.02, 0.01, -0.03]),
        DVector::from_vec(vec![0.02, 0.03, 0.02]),
        0.5,
        DVector::from_vec(vec![-0.02, -0.03, -0.01]),
        DMatrix::from_row_slice(3, 3, &[1e-3, 8e-4, 8e-4, 8e-4, 1e-3, 8e-4, 8e-4, 8e-4, 1e-3]),
    )
    .unwrap();
    let n_rows = 5000;
    let data = truth.sample(n_rows, 12).unwrap();
    let fit = fit_els(&ElsProblem::new(data, ModelKind::Model1).unwrap(), 16, 2).unwrap();
    let m = fit.params.as_model();
    let cov = truth.covariance();
    for i in 0..3 {
        let se = (cov[(i, i)] / n_rows as f64).sqrt();
        assert!((m.mean()[i] - truth.mean()[i]).abs() <= 3.0 * se);
    }
    assert!((m.covariance() - &cov).component_div(&cov).amax() <= 0.15);
}

#[test]
fn fits_are_reproducible() {
    let data = random_sample(3, 200);
    let problem = ElsProblem::new(data, ModelKind::Model2).unwrap();
    let a = fit_els(&problem, 4, 42).unwrap();
    let b = fit_els(&problem, 4, 42).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}
