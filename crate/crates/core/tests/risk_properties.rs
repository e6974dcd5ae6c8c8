mod common;

use common::*;
use jdevar_core::data::ReturnSample;
use jdevar_core::model::{Model2Params, ReturnModel};
use jdevar_core::risk::{evar_empirical, evar_from_losses, evar_model, var_empirical, RiskLevel};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn losses_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-0.2f64..0.2, 2..200)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn empirical_translation_invariance(losses in losses_strategy(), c in -0.1f64..0.1, alpha in 0.01f64..0.5) {
        let level = RiskLevel::new(alpha).unwrap();
        let base = evar_from_losses(&losses, level).unwrap().value;
        // a gain shifted by c is a loss shifted by -c
        let shifted: Vec<f64> = losses.iter().map(|l| l - c).collect();
        let moved = evar_from_losses(&shifted, level).unwrap().value;
        prop_assert!((moved - (base - c)).abs() <= 1e-9);
    }

    #[test]
    fn empirical_positive_homogeneity(losses in losses_strategy(), k in 0.1f64..10.0, alpha in 0.01f64..0.5) {
        let level = RiskLevel::new(alpha).unwrap();
        let base = evar_from_losses(&losses, level).unwrap().value;
        let scaled: Vec<f64> = losses.iter().map(|l| l * k).collect();
        let got = evar_from_losses(&scaled, level).unwrap().value;
        prop_assert!((got - k * base).abs() <= 1e-8 * (k * base).abs().max(1e-3));
    }

    #[test]
    fn empirical_subadditivity(pairs in prop::collection::vec((-0.2f64..0.2, -0.2f64..0.2), 2..200), alpha in 0.01f64..0.5) {
        let level = RiskLevel::new(alpha).unwrap();
        let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let sum: Vec<f64> = pairs.iter().map(|p| p.0 + p.1).collect();
        let lhs = evar_from_losses(&sum, level).unwrap().value;
        let rhs = evar_from_losses(&x, level).unwrap().value + evar_from_losses(&y, level).unwrap().value;
        prop_assert!(lhs <= rhs + 1e-9);
    }

    #[test]
    fn empirical_monotonicity(losses in losses_strategy(), bumps in prop::collection::vec(0.0f64..0.1, 200), alpha in 0.01f64..0.5) {
        let level = RiskLevel::new(alpha).unwrap();
        let bigger: Vec<f64> = losses.iter().zip(&bumps).map(|(l, b)| l + b).collect();
        prop_assert!(evar_from_losses(&bigger, level).unwrap().value >= evar_from_losses(&losses, level).unwrap().value - 1e-9);
    }

    #[test]
    fn evar_bounded_by_mean_and_max_loss(losses in losses_strategy(), alpha in 0.01f64..0.5) {
        let level = RiskLevel::new(alpha).unwrap();
        let e = evar_from_losses(&losses, level).unwrap().value;
        let mean = losses.iter().sum::<f64>() / losses.len() as f64;
        let max = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(e >= mean - 1e-9 && e <= max + 1e-9);
    }

    #[test]
    fn var_below_evar(losses in losses_strategy(), alpha in 0.01f64..0.5) {
        let level = RiskLevel::new(alpha).unwrap();
        let r = DMatrix::from_column_slice(losses.len(), 1, &losses.iter().map(|l| -l).collect::<Vec<_>>());
        let sample = ReturnSample::unnamed(r).unwrap();
        let w = DVector::from_element(1, 1.0);
        prop_assert!(var_empirical(&sample, &w, level).unwrap() <= evar_empirical(&sample, &w, level).unwrap().value + 1e-9);
    }

    #[test]
    fn analytic_evar_decreases_in_alpha(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_model1(&mut rng, 3);
        let w = random_simplex(&mut rng, 3);
        let mut previous = f64::INFINITY;
        for k in 0..10 {
            let v = evar_model(&model, &w, RiskLevel::new(0.01 + 0.05 * k as f64).unwrap()).unwrap().value;
            prop_assert!(v <= previous + 1e-12);
            previous = v;
        }
    }
}

#[test]
fn gaussian_closed_form_single_asset() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let m = rng.random_range(-0.1..0.1);
        let v: f64 = rng.random_range(1e-4..1.0);
        let alpha = rng.random_range(0.001..0.5);
        let model = Model2Params::gaussian(DVector::from_element(1, m), DMatrix::from_element(1, 1, v)).unwrap();
        let got = evar_model(&model, &DVector::from_element(1, 1.0), RiskLevel::new(alpha).unwrap()).unwrap();
        let s_star = (-2.0 * alpha.ln() / v).sqrt();
        assert!((got.value - (-m + (v * -2.0 * alpha.ln()).sqrt())).abs() <= 1e-8);
        assert!((got.s_star - s_star).abs() <= 1e-6 * s_star);
    }
}

/// The empirical EVaR of many model draws agrees with the analytic value once
/// the plug-in estimator's downward bias is removed by the bootstrap.
#[test]
fn empirical_evar_converges_to_analytic() {
    let level = RiskLevel::new(0.05).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for k in 0..4 {
        let model: Box<dyn ReturnModel> =
            if k % 2 == 0 { Box::new(random_model1(&mut rng, 3)) } else { Box::new(random_model2(&mut rng, 3)) };
        let w = random_simplex(&mut rng, 3);
        let analytic = evar_model(model.as_ref(), &w, level).unwrap().value;
        let losses: Vec<f64> = model.sample(200_000, 40 + k).unwrap().portfolio_returns(&w).unwrap().iter().map(|r| -r).collect();
        let full = evar_from_losses(&losses, level).unwrap().value;
        // bootstrap spread of the empirical estimator
        let boots: Vec<f64> = (0..50)
            .map(|_| {
                let resample: Vec<f64> = (0..losses.len()).map(|_| losses[rng.random_range(0..losses.len())]).collect();
                evar_from_losses(&resample, level).unwrap().value
            })
            .collect();
        let (boot_mean, se) = sample_mean_and_se(&boots);
        let sd = se * (boots.len() as f64).sqrt();
        let corrected = 2.0 * full - boot_mean;
        assert!((corrected - analytic).abs() <= 3.0 * sd, "case {k}: empirical {corrected} vs analytic {analytic} (sd {sd})");
    }
}
