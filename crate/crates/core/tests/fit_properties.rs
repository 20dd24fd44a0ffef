mod common;

use ccpl_core::fit::{
    apply_model, fit, objective, AffineOdModel, LossWeights, Objective, PARAM_COUNT,
};
use ccpl_core::CcplConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit_direction(rng: &mut ChaCha8Rng) -> [f64; PARAM_COUNT] {
    let mut u: [f64; PARAM_COUNT] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
    let n = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    u.iter_mut().for_each(|v| *v /= n);
    u
}

#[test]
fn assembled_gradient_matches_directional_estimate() {
    let pairs: Vec<_> = common::synthetic_pairs().into_iter().take(2).collect();
    let cfg = CcplConfig::default();
    let obj = Objective::new(&pairs, &cfg).unwrap();
    let h = cfg.fit.fd_step;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let base = AffineOdModel::identity().params();
    for _ in 0..5 {
        let p: [f64; PARAM_COUNT] = std::array::from_fn(|i| base[i] + rng.random_range(-0.1..0.1));
        let u = unit_direction(&mut rng);
        let g = obj.gradient(&p).unwrap();
        let assembled: f64 = g.iter().zip(&u).map(|(a, b)| a * b).sum();
        let plus = obj.value(&std::array::from_fn(|i| p[i] + h * u[i])).unwrap();
        let minus = obj.value(&std::array::from_fn(|i| p[i] - h * u[i])).unwrap();
        let direct = (plus - minus) / (2.0 * h);
        let rel = (assembled - direct).abs() / assembled.abs().max(direct.abs());
        assert!(rel < 1e-3, "relative error {rel}");
    }
}

#[test]
fn total_is_weighted_sum_of_terms() {
    let pairs = common::synthetic_pairs();
    let cfg = CcplConfig::default();
    let b = objective(&AffineOdModel::identity(), &pairs[..2], &cfg).unwrap();
    let w = &cfg.fit.weights;
    let sum = w.pix * b.mse + w.dual * b.dual + w.fd * b.fd + w.cross * b.cross + w.ssim * b.ssim;
    assert!((b.total - sum).abs() <= 1e-12 * b.total.abs().max(1.0));
    assert!(b.mse > 0.0 && b.dual > 0.0 && b.fd > 0.0 && b.cross > 0.0 && b.ssim > 0.0);
}

#[test]
fn pixel_fit_recovers_known_model() {
    let pairs = common::synthetic_pairs();
    let mut cfg = CcplConfig::default();
    cfg.fit.weights = LossWeights::pixel_only();
    let (model, trace) = fit(&pairs, &AffineOdModel::identity(), &cfg).unwrap();
    assert!(trace.is_non_increasing());
    let truth = common::known_model();
    for (got, want) in model.params().iter().zip(truth.params()) {
        assert!((got - want).abs() < 0.05, "{got} vs {want}");
    }
    let mse: f64 = pairs
        .iter()
        .map(|p| ccpl_core::metrics::mse(&apply_model(&model, &p.source, 255.0), &p.target).unwrap())
        .sum::<f64>()
        / pairs.len() as f64;
    assert!(mse < 1.0, "{mse}");
}
