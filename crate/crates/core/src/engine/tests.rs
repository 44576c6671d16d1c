use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::params::{BetaPrior, DirichletPrior, GammaPrior};
use crate::sim::{gillespie_simulate, sample_observations};

fn priors() -> PriorSpec {
    PriorSpec {
        beta: GammaPrior::new(2.0, 100.0),
        gamma: None,
        mu: GammaPrior::new(2.0, 4.0),
        rho: BetaPrior::new(2.0, 2.0),
        phi: Some(GammaPrior::new(2.0, 0.2)),
        p_init: DirichletPrior { alpha: vec![9.0, 1.0, 0.5] },
    }
}

fn truth() -> Params {
    Params { beta: 0.02, gamma: None, mu: 0.5, rho: 0.6, phi: None, p_init: vec![0.9, 0.1, 0.0] }
}

fn synthetic(seed: u64) -> (Dataset, PopulationHistory) {
    let model = ModelSpec::sir();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = [27, 3, 0];
    let window = (0.0, 8.0);
    let ev = gillespie_simulate(&model, &EpochSchedule::constant(Rates::from_params(&truth())), &init, window, &mut rng)
        .unwrap();
    let h = disaggregate(&ev, &subjects_from_counts(&init), 3, window, &mut rng).unwrap();
    let times: Vec<f64> = (0..=8).map(|t| t as f64).collect();
    let d = sample_observations(&h, &model, &times, &Emission::Binomial { rho: 0.6 }, &mut rng).unwrap();
    (d, h)
}

fn config() -> RunConfig {
    let mut c = RunConfig::new(ModelSpec::sir(), EmissionKind::Binomial, priors());
    c.iterations = 60;
    c.burn_in = 10;
    c.thin = 5;
    c.subjects_per_iter = Some(4);
    c.seed = 11;
    c
}

#[test]
fn zero_iterations_is_empty() {
    let (d, _) = synthetic(1);
    let mut c = config();
    c.iterations = 0;
    c.burn_in = 0;
    let out = run_chain(&c, &d, 0).unwrap();
    assert!(out.draws.is_empty() && out.logpost.is_empty() && out.snapshots.is_empty());
}

#[test]
fn same_seed_same_output() {
    let (d, _) = synthetic(2);
    let c = config();
    let a = run_chain(&c, &d, 0).unwrap();
    let b = run_chain(&c, &d, 0).unwrap();
    assert_eq!(a.draws, b.draws);
    assert_eq!(a.logpost.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.logpost.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    assert_eq!(a.snapshots, b.snapshots);
    let other = run_chain(&c, &d, 1).unwrap();
    assert_ne!(a.draws, other.draws);
    let par = run_chains(&RunConfig { chains: 2, ..c }, &d).unwrap();
    assert_eq!(par[0].draws, a.draws);
    assert_eq!(par[1].draws, other.draws);
}

#[test]
fn output_shapes_and_counters() {
    let (d, _) = synthetic(3);
    let c = config();
    let out = run_chain(&c, &d, 0).unwrap();
    assert_eq!(out.draws.len(), 60);
    assert_eq!(out.logpost.len(), 60);
    assert_eq!(out.accept_rate.len(), 60);
    assert_eq!(out.snapshots.len(), 10);
    assert!(out.snapshots.iter().all(|(it, _)| *it >= 10 && (it + 1 - 10) % 5 == 0));
    let k = out.counters;
    assert_eq!(k.proposed, 60 * 4);
    assert_eq!(k.accepted + k.rejected, k.proposed);
    assert!(out.logpost.iter().all(|x| x.is_finite()));
    let model = ModelSpec::sir();
    for (_, h) in &out.snapshots {
        h.validate(&model).unwrap();
        let prev = observed_prevalence(h, &d, &model);
        assert!(prev.iter().zip(&d.counts).all(|(i, y)| i >= y));
    }
}

#[test]
fn negative_binomial_chain_runs() {
    let (d, _) = synthetic(4);
    let mut c = config();
    c.emission = EmissionKind::NegBinomial;
    c.emission_pilot = 20;
    let out = run_chain(&c, &d, 0).unwrap();
    assert_eq!(out.counters.param_proposed, 60);
    assert!(out.draws.iter().all(|p| p.phi.is_some()));
}

#[test]
fn initialization_cases() {
    let model = ModelSpec::sir();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let zeros = Dataset::new(vec![0.0, 1.0, 2.0], vec![0, 0, 0], 20).unwrap();
    initialize_paths(&model, &truth(), EmissionKind::Binomial, &zeros, 1, &mut rng).unwrap();
    let big = Dataset::new(vec![0.0, 1.0], vec![20, 20], 20).unwrap();
    let mut nb = truth();
    nb.phi = Some(3.0);
    initialize_paths(&model, &nb, EmissionKind::NegBinomial, &big, 1, &mut rng).unwrap();
    assert!(matches!(
        initialize_paths(&model, &truth(), EmissionKind::Binomial, &big, 10, &mut rng),
        Err(Error::InitializationFailed { attempts: 10 })
    ));

    let (d, _) = synthetic(6);
    let mut p = truth();
    p.rho = 0.999;
    for _ in 0..100 {
        let h = initialize_paths(&model, &p, EmissionKind::Binomial, &d, DEFAULT_INIT_ATTEMPTS, &mut rng).unwrap();
        let prev = observed_prevalence(&h, &d, &model);
        assert!(prev.iter().zip(&d.counts).all(|(i, y)| i >= y));
    }
}

#[test]
fn config_validation() {
    let mut c = config();
    assert!(c.validate(30).is_ok());
    c.burn_in = 60;
    assert!(c.validate(30).is_err());
    let mut c = config();
    c.thin = 0;
    assert!(c.validate(30).is_err());
    let mut c = config();
    c.subjects_per_iter = Some(31);
    assert!(c.validate(30).is_err());
    let mut c = config();
    c.subjects_per_iter = None;
    assert_eq!(c.subjects_per_iter(750), 75);
    assert_eq!(c.subjects_per_iter(5), 1);
    c.method = Method::Pmmh;
    c.pmmh.particles = 0;
    assert!(c.validate(30).is_err());
    assert_eq!("pmmh".parse::<Method>().unwrap(), Method::Pmmh);
}

#[test]
fn pmmh_method_runs() {
    let (d, _) = synthetic(7);
    let mut c = config();
    c.method = Method::Pmmh;
    c.pmmh.particles = 20;
    let out = run_chain(&c, &d, 0).unwrap();
    assert_eq!(out.draws.len(), 60);
    assert!(out.snapshots.is_empty());
    assert!(out.degenerate_fraction.is_some());
    assert_eq!(out.counters.param_proposed, 60);
}
