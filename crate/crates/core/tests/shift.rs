//! Monte Carlo checks of importance weighting and the synthetic generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wrcp_core::conformal::residual_scores;
use wrcp_core::datagen::{Concept, SourceSpec, SyntheticTask};
use wrcp_core::density::normalize_weights;
use wrcp_core::dist::{wasserstein1, EmpiricalDist};
use wrcp_core::model::MlpModel;

fn covariate_shift_task() -> SyntheticTask {
    let spec = |mean: Vec<f64>| SourceSpec {
        mean,
        scale: 1.0,
        concept: Concept::Linear { c: 0.5 },
        noise: 0.2,
    };
    SyntheticTask {
        d: 2,
        sources: vec![spec(vec![0.0, 0.0]), spec(vec![0.8, 0.4])],
        seed: 0,
    }
}

#[test]
fn oracle_weighted_calibration_matches_target_scores() {
    // Same conditional law, shifted features: weighting the calibration
    // scores by q(x)/p(x) recovers the score law on the target.
    let task = covariate_shift_task();
    let model = MlpModel::new(2, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cal = task.draw_source(0, 2000, &mut rng);
    let target = task.draw_source(1, 50_000, &mut rng);
    let raw: Vec<f64> = cal
        .x
        .rows()
        .into_iter()
        .map(|r| {
            let x = r.to_vec();
            task.sources[1].feature_density(&x) / task.sources[0].feature_density(&x)
        })
        .collect();
    let cal_scores = residual_scores(&model, cal.x.view(), &cal.y).unwrap();
    let weighted = EmpiricalDist::new(cal_scores.clone(), normalize_weights(&raw).unwrap()).unwrap();
    let unweighted = EmpiricalDist::uniform(cal_scores).unwrap();
    let target_scores = EmpiricalDist::uniform(residual_scores(&model, target.x.view(), &target.y).unwrap()).unwrap();
    let w_weighted = wasserstein1(&weighted, &target_scores);
    let w_plain = wasserstein1(&unweighted, &target_scores);
    assert!(w_weighted <= 0.05, "{w_weighted}");
    assert!(5.0 * w_weighted < w_plain, "{w_weighted} vs {w_plain}");
}

#[test]
fn synthetic_residuals_are_gaussian_with_the_noise_scale() {
    let task = covariate_shift_task();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (i, spec) in task.sources.iter().enumerate() {
        let n = 20_000;
        let s = task.draw_source(i, n, &mut rng);
        let z: Vec<f64> = s
            .x
            .rows()
            .into_iter()
            .zip(&s.y)
            .map(|(x, y)| (y - spec.truth(x)) / spec.noise)
            .collect();
        let mean = z.iter().sum::<f64>() / n as f64;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        // 3σ Monte Carlo bands for the mean (1/√n) and variance (√(2/n))
        assert!(mean.abs() <= 3.0 / (n as f64).sqrt(), "source {i}: mean {mean}");
        assert!((var - 1.0).abs() <= 3.0 * (2.0 / n as f64).sqrt(), "source {i}: var {var}");
    }
}
