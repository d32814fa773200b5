use lfvi::lfvi::{lfvi_fit, param_hash, LfviConfig};
use lfvi::models::normal_normal::NormalNormalModel;
use lfvi::models::{simulate_dataset, HimModel};
use lfvi::ndcore::RngStream;
use lfvi::Error;

fn short_cfg(seed: u64, iterations: usize) -> LfviConfig {
    LfviConfig {
        seed,
        n_iterations: iterations,
        ratio_steps_per_q_step: 5,
        ratio_batch_size: 128,
        ..LfviConfig::default()
    }
}

#[test]
fn conjugate_fit_lands_near_the_exact_posterior() {
    let model = NormalNormalModel::standard();
    let rng = RngStream::new(5, 99);
    let beta = model.prior_sample(&mut rng.derive(&[0]));
    let data = simulate_dataset(&model, &beta, 100, None, &rng.derive(&[1])).unwrap();
    let (m, v) = model.posterior(data.x.data());
    let fit = lfvi_fit(&model, &data, short_cfg(5, 1000)).unwrap();
    assert!(fit.diverged.is_none());
    let qm = fit.q_global.mean()[0];
    assert!((qm - m).abs() < 0.2, "{qm} vs {m}");
    assert!(fit.q_global.scale()[0] < 5.0 * v.sqrt());
}

#[test]
fn fits_are_bitwise_reproducible() {
    let model = NormalNormalModel::standard();
    let data = simulate_dataset(&model, &[0.4], 100, None, &RngStream::new(1, 1)).unwrap();
    let hash = |seed| {
        let fit = lfvi_fit(&model, &data, short_cfg(seed, 30)).unwrap();
        (param_hash(fit.q_global.params()), param_hash(fit.ratio.net.params()))
    };
    assert_eq!(hash(2), hash(2));
    assert_ne!(hash(2), hash(3));
}

#[test]
fn an_oversized_batch_is_a_contract_error() {
    let model = NormalNormalModel::standard();
    let data = simulate_dataset(&model, &[0.0], 10, None, &RngStream::new(1, 1)).unwrap();
    let cfg = LfviConfig {
        batch_size: 11,
        ..short_cfg(0, 5)
    };
    assert!(matches!(lfvi_fit(&model, &data, cfg), Err(Error::Contract(_))));
}
