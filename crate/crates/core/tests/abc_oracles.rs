use lfvi::abc::{
    accept, mcmc_abc, rejection_abc, simulate_candidates, smc_abc, AbcConfig, DatasetSimulator,
    SummaryKind, SummaryScale,
};
use lfvi::models::normal_normal::NormalNormalModel;
use lfvi::models::Dataset;
use lfvi::ndcore::{RngStream, Tensor};
use lfvi::Error;
use statrs::distribution::{ContinuousCDF, Normal};

fn one_observation() -> Dataset {
    Dataset::new(Tensor::matrix(1, 1, vec![1.0]), None).unwrap()
}

/// The settings documented for the conjugate check.
fn oracle_cfg() -> AbcConfig {
    let mut c = AbcConfig {
        tolerance: 0.05,
        n_simulations: 100_000,
        ..AbcConfig::default()
    };
    c.mcmc.proposal_std = 0.7;
    c.mcmc.n_steps = 10_000;
    c.mcmc.burn_in = 2_000;
    c.mcmc.chains = 16;
    c.smc.schedule = vec![1.0, 0.3, 0.05];
    c.smc.population_size = 2000;
    c
}

fn setup() -> (NormalNormalModel, Dataset) {
    (NormalNormalModel::standard(), one_observation())
}

#[test]
fn three_samplers_recover_the_conjugate_mean() {
    let (model, data) = setup();
    let sim = DatasetSimulator::for_data(&model, &data, SummaryKind::SampleMean);
    let obs = sim.observed_summary(&data);
    let (exact, _) = model.posterior(&[1.0]);
    assert_eq!(exact, 0.5);
    let c = oracle_cfg();
    let rng = RngStream::new(11, 0);
    let rej = rejection_abc(&sim, &obs, &c, &rng).unwrap();
    let mc = mcmc_abc(&sim, &obs, &c, &rng).unwrap();
    let smc = smc_abc(&sim, &obs, &c, &rng).unwrap();
    assert!(smc.collapsed.is_none());
    assert_eq!(smc.generations.len(), 3);
    for (name, m) in [
        ("rejection", rej.mean()[0]),
        ("mcmc", mc.mean()[0]),
        ("smc", smc.final_output().mean()[0]),
    ] {
        assert!((m - exact).abs() < 0.07, "{name} mean {m}");
    }
}

#[test]
fn smc_weights_normalize_each_generation() {
    let (model, data) = setup();
    let sim = DatasetSimulator::for_data(&model, &data, SummaryKind::SampleMean);
    let obs = sim.observed_summary(&data);
    let mut c = oracle_cfg();
    c.n_simulations = 20_000;
    c.smc.population_size = 500;
    let out = smc_abc(&sim, &obs, &c, &RngStream::new(3, 0)).unwrap();
    for g in &out.generations {
        let s: f64 = g.samples.iter().map(|s| s.weight).sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(g.ess >= 5.0);
    }
}

#[test]
fn infinite_tolerance_returns_the_prior() {
    let (model, data) = setup();
    let sim = DatasetSimulator::for_data(&model, &data, SummaryKind::SampleMean);
    let obs = sim.observed_summary(&data);
    let c = AbcConfig {
        tolerance: f64::INFINITY,
        n_simulations: 10_000,
        ..AbcConfig::default()
    };
    let out = rejection_abc(&sim, &obs, &c, &RngStream::new(5, 0)).unwrap();
    assert_eq!(out.summary.rate, 1.0);
    let mut xs: Vec<f64> = out.samples.iter().map(|s| s.beta[0]).collect();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let normal = Normal::new(0.0, 1.0).unwrap();
    let ks = xs
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let f = normal.cdf(*x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 0.05, "ks {ks}");
}

#[test]
fn acceptance_shrinks_with_tolerance_on_fixed_simulations() {
    let (model, data) = setup();
    let sim = DatasetSimulator::for_data(&model, &data, SummaryKind::SampleMean);
    let obs = sim.observed_summary(&data);
    let cands = simulate_candidates(&sim, &obs, &SummaryScale::unit(1), 5000, &RngStream::new(1, 0)).unwrap();
    let mut last = usize::MAX;
    for eps in [4.0, 2.0, 1.0, 0.5, 0.25, 0.1, 0.05, 0.01] {
        let k = accept(&cands, eps).len();
        assert!(k <= last);
        last = k;
    }
}

#[test]
fn zero_proposal_keeps_the_chain_at_its_start() {
    let (model, data) = setup();
    let sim = DatasetSimulator::for_data(&model, &data, SummaryKind::SampleMean);
    let obs = sim.observed_summary(&data);
    let mut c = oracle_cfg();
    c.mcmc.proposal_std = 0.0;
    c.mcmc.chains = 1;
    c.mcmc.n_steps = 500;
    c.mcmc.burn_in = 0;
    let out = mcmc_abc(&sim, &obs, &c, &RngStream::new(2, 0)).unwrap();
    let first = out.samples[0].beta.clone();
    assert!(out.samples.iter().all(|s| s.beta == first));
}

#[test]
fn single_generation_smc_is_rejection() {
    let (model, data) = setup();
    let sim = DatasetSimulator::for_data(&model, &data, SummaryKind::SampleMean);
    let obs = sim.observed_summary(&data);
    let mut c = oracle_cfg();
    c.n_simulations = 20_000;
    c.tolerance = 0.3;
    c.smc.schedule = vec![0.3];
    let rng = RngStream::new(8, 0);
    let smc = smc_abc(&sim, &obs, &c, &rng).unwrap();
    let rej = rejection_abc(&sim, &obs, &c, &rng).unwrap();
    assert_eq!(smc.final_output().samples, rej.samples);
}

#[test]
fn impossible_tolerance_is_reported() {
    let (model, data) = setup();
    let sim = DatasetSimulator::for_data(&model, &data, SummaryKind::SampleMean);
    let obs = sim.observed_summary(&data);
    let mut c = AbcConfig {
        tolerance: 1e-12,
        n_simulations: 1000,
        ..AbcConfig::default()
    };
    assert!(matches!(
        rejection_abc(&sim, &obs, &c, &RngStream::new(1, 0)),
        Err(Error::NoAcceptances { .. })
    ));
    c.mcmc.init_budget = 100;
    assert!(matches!(
        mcmc_abc(&sim, &obs, &c, &RngStream::new(1, 0)),
        Err(Error::InitFailed(100))
    ));
}

#[test]
fn samplers_are_deterministic() {
    let (model, data) = setup();
    let sim = DatasetSimulator::for_data(&model, &data, SummaryKind::SampleMean);
    let obs = sim.observed_summary(&data);
    let mut c = oracle_cfg();
    c.n_simulations = 5000;
    c.tolerance = 0.2;
    c.smc.schedule = vec![1.0, 0.2];
    c.smc.population_size = 200;
    c.mcmc.chains = 2;
    let rng = RngStream::new(4, 0);
    assert_eq!(
        mcmc_abc(&sim, &obs, &c, &rng).unwrap().to_jsonl(),
        mcmc_abc(&sim, &obs, &c, &rng).unwrap().to_jsonl()
    );
    assert_eq!(
        smc_abc(&sim, &obs, &c, &rng).unwrap().to_jsonl(),
        smc_abc(&sim, &obs, &c, &rng).unwrap().to_jsonl()
    );
}
