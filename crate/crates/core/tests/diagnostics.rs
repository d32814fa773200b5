use lfvi::diagnostics::{
    metrics_meanfield, noise_invert, stability_diffs, weighted_quantile, InvertConfig, StepRule,
};
use lfvi::lfvi::ClosureRatio;
use lfvi::models::normal_normal::NormalNormalModel;
use lfvi::models::{Dataset, HimModel};
use lfvi::ndcore::{RngStream, Tape, Tensor, Var};
use lfvi::variational::{GlobalApprox, GlobalKind};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

fn exact_loglik(tape: &mut Tape, f: Var) -> Var {
    let x = tape.slice_cols(f, 0, 1);
    let b = tape.slice_cols(f, 1, 2);
    let d = tape.sub(x, b);
    let sq = tape.square(d);
    let h = tape.scale(sq, -0.5);
    tape.add_scalar(h, -0.5 * (2.0 * std::f64::consts::PI).ln())
}

#[test]
fn an_exact_ratio_has_constant_differences() {
    let model = NormalNormalModel::standard();
    let mut rng = RngStream::new(3, 0);
    let data = Dataset::new(Tensor::matrix(20, 1, rng.normals(20)), None).unwrap();
    let q = GlobalApprox::meanfield(GlobalKind::MeanfieldNormal, vec![0.3], vec![0.8]).unwrap();
    let features = model.data_features(&data.x);
    let diffs = stability_diffs(&model, &data, &features, &q, &ClosureRatio(exact_loglik), 64, &mut rng).unwrap();
    let mean = diffs.iter().sum::<f64>() / 64.0;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / 63.0;
    assert!(var < 1e-10, "{var}");
    assert!(mean.abs() < 1e-9, "{mean}");
}

#[test]
fn inversion_recovers_affine_noise() {
    let j = [[2.0, 0.5], [-0.3, 1.5], [0.1, 0.2]];
    let g = |tape: &mut Tape, e: Var| {
        let jm = tape.constant(Tensor::matrix(2, 3, vec![j[0][0], j[1][0], j[2][0], j[0][1], j[1][1], j[2][1]]));
        let y = tape.matmul(e, jm);
        let c = tape.constant(Tensor::row(vec![1.0, -1.0, 0.5]));
        tape.add(y, c)
    };
    let eps_true = [0.7, -1.2];
    let target: Vec<f64> = (0..3)
        .map(|k| [1.0, -1.0, 0.5][k] + j[k][0] * eps_true[0] + j[k][1] * eps_true[1])
        .collect();
    let inv = noise_invert(&g, &[0.0, 0.0], &target, &InvertConfig::default()).unwrap();
    assert!(inv.converged);
    for (a, b) in inv.eps.iter().zip(eps_true) {
        assert!((a - b).abs() < 1e-7, "{a} vs {b}");
    }
    assert!(inv.residuals.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn a_too_large_fixed_step_does_not_converge() {
    let g = |tape: &mut Tape, e: Var| tape.scale(e, 10.0);
    let cfg = InvertConfig {
        max_iters: 20,
        rule: StepRule::Fixed { rho: 1.0 },
        ..InvertConfig::default()
    };
    let inv = noise_invert(&g, &[0.0], &[1.0], &cfg).unwrap();
    assert!(!inv.converged);
    assert!(inv.residuals.last().unwrap() > &inv.residuals[0]);
}

#[test]
fn meanfield_intervals_match_normal_quantiles() {
    let q = GlobalApprox::meanfield(GlobalKind::MeanfieldNormal, vec![1.0, -2.0], vec![0.5, 2.0]).unwrap();
    let m = metrics_meanfield(&q, &[1.0, 5.0]).unwrap();
    for (k, (loc, scale)) in [(1.0, 0.5), (-2.0, 2.0)].into_iter().enumerate() {
        let n = Normal::new(loc, scale).unwrap();
        assert!((m.ci95[k].0 - n.inverse_cdf(0.025)).abs() < 1e-8);
        assert!((m.ci95[k].1 - n.inverse_cdf(0.975)).abs() < 1e-8);
    }
    assert_eq!(m.ci95_contains, vec![true, false]);
    let oracle = -(Normal::new(1.0, 0.5).unwrap().ln_pdf(1.0) + Normal::new(-2.0, 2.0).unwrap().ln_pdf(5.0));
    assert!((m.nlp_true - oracle).abs() < 1e-9);
}

#[test]
fn weighted_quantile_with_equal_weights_is_the_order_statistic() {
    let v = [5.0, 1.0, 4.0, 2.0, 3.0];
    let w = [1.0; 5];
    assert_eq!(weighted_quantile(&v, &w, 0.5), 3.0);
    assert_eq!(weighted_quantile(&v, &w, 0.2), 1.0);
    assert_eq!(weighted_quantile(&v, &[0.0, 0.0, 0.0, 0.0, 1.0], 0.1), 3.0);
}
