//! Chain orchestration for both the data-augmentation sampler and PMMH.
//!
//! Within one iteration of the data-augmentation chain the chain's random
//! stream is consumed in this order: subject selection, the subject updates
//! in selection order, the rate draws in transition order, the emission
//! parameter update, and the initial-probability draw.

use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bridge::BridgeSampler;
use crate::ctmc::DecompositionCache;
use crate::data::Dataset;
use crate::emission::{Emission, EmissionKind};
use crate::error::{Error, Result};
use crate::gibbs::{sample_prior, update_p_init, update_rates, update_rho_binomial, update_rho_phi_rwmh};
use crate::history::PopulationHistory;
use crate::likelihood::{ctmc_loglik_from_stats, emission_loglik, observed_prevalence, sufficient_statistics};
use crate::model::ModelSpec;
use crate::params::{Params, PriorSpec};
use crate::pmmh::{adaptive_rwmh_chain, sample_multinomial, PathSim, PmmhConfig};
use crate::proposal::{ProposalConfig, SubjectUpdater, UpdateOutcome};
use crate::rwmh::{AdaptiveWalk, RandomWalk};
use crate::sim::{disaggregate, gillespie_simulate_checked, subjects_from_counts, EpochSchedule, Rates};

pub const DEFAULT_INIT_ATTEMPTS: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Bda,
    Pmmh,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bda" | "da" => Ok(Method::Bda),
            "pmmh" => Ok(Method::Pmmh),
            other => Err(Error::InvalidParameter(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PmmhSettings {
    pub particles: usize,
    pub path_sim: PathSim,
    /// Adaptation length; defaults to a fifth of the iterations.
    pub pilot: Option<u64>,
    /// Initial random-walk standard deviation on the transformed scale.
    pub scale: f64,
}

impl Default for PmmhSettings {
    fn default() -> Self {
        PmmhSettings { particles: 500, path_sim: PathSim::Exact, pilot: None, scale: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub emission: EmissionKind,
    pub priors: PriorSpec,
    /// Starting parameters; a prior draw when absent.
    pub init: Option<Params>,
    pub iterations: usize,
    pub burn_in: usize,
    /// Keep every `thin`-th latent history after burn-in.
    pub thin: usize,
    /// Defaults to a tenth of the population.
    pub subjects_per_iter: Option<usize>,
    pub bridge_sampler: BridgeSampler,
    pub seed: u64,
    pub chains: usize,
    pub method: Method,
    pub pmmh: PmmhSettings,
    /// Adaptation length of the negative-binomial `(rho, phi)` walk.
    pub emission_pilot: u64,
    pub init_attempts: u64,
}

impl RunConfig {
    pub fn new(model: ModelSpec, emission: EmissionKind, priors: PriorSpec) -> Self {
        RunConfig {
            model,
            emission,
            priors,
            init: None,
            iterations: 1000,
            burn_in: 0,
            thin: 250,
            subjects_per_iter: None,
            bridge_sampler: BridgeSampler::ModifiedRejection,
            seed: 1,
            chains: 1,
            method: Method::Bda,
            pmmh: PmmhSettings::default(),
            emission_pilot: 10_000,
            init_attempts: DEFAULT_INIT_ATTEMPTS,
        }
    }

    pub fn subjects_per_iter(&self, population: usize) -> usize {
        self.subjects_per_iter.unwrap_or_else(|| (population / 10).max(1)).min(population)
    }

    pub fn validate(&self, population: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.iterations > 0 && self.burn_in >= self.iterations {
            return bad(format!("burn_in {} must be below iterations {}", self.burn_in, self.iterations));
        }
        if self.thin == 0 {
            return bad("thin must be at least 1".into());
        }
        if self.chains == 0 {
            return bad("chains must be at least 1".into());
        }
        if population == 0 {
            return bad("population must be positive".into());
        }
        if let Some(m) = self.subjects_per_iter {
            if m == 0 || m > population {
                return bad(format!("subjects_per_iter {m} outside 1..={population}"));
            }
        }
        self.priors.validate(&self.model)?;
        if self.emission == EmissionKind::NegBinomial && self.priors.phi.is_none() {
            return bad("negative-binomial emission needs prior.phi".into());
        }
        if let Some(p) = &self.init {
            p.validate(&self.model)?;
            Emission::from_params(self.emission, p)?;
        }
        if self.method == Method::Pmmh {
            if self.pmmh.particles == 0 {
                return Err(Error::NoParticles);
            }
            if let PathSim::TauLeap(h) = self.pmmh.path_sim {
                if !(h > 0.0 && h.is_finite()) {
                    return bad(format!("tau-leap step {h}"));
                }
            }
        }
        Ok(())
    }
}

/// Proposal and acceptance tallies. For path updates `accepted + rejected`
/// always equals `proposed`; infeasible updates count as rejections.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AcceptCounters {
    pub proposed: u64,
    pub accepted: u64,
    pub rejected: u64,
    pub infeasible: u64,
    /// Random-walk parameter moves (negative-binomial emission or PMMH).
    pub param_proposed: u64,
    pub param_accepted: u64,
}

impl AcceptCounters {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    pub fn param_rate(&self) -> f64 {
        if self.param_proposed == 0 {
            0.0
        } else {
            self.param_accepted as f64 / self.param_proposed as f64
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ChainOutput {
    pub chain: usize,
    /// Parameters after every iteration, burn-in included.
    pub draws: Vec<Params>,
    pub logpost: Vec<f64>,
    /// Running acceptance rate of the main Metropolis step after each
    /// iteration: path updates for BDA, parameter moves for PMMH.
    pub accept_rate: Vec<f64>,
    /// Retained latent histories with their iteration index.
    pub snapshots: Vec<(usize, PopulationHistory)>,
    pub counters: AcceptCounters,
    /// PMMH only: fraction of filter runs that returned `-inf`.
    pub degenerate_fraction: Option<f64>,
    pub elapsed: Duration,
}

impl ChainOutput {
    /// Draws after burn-in.
    pub fn kept(&self, burn_in: usize) -> &[Params] {
        &self.draws[burn_in.min(self.draws.len())..]
    }
}

/// Random stream of chain `chain`: same seed, distinct stream.
pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

/// Simulates histories from the model until one is compatible with the
/// data under the emission distribution.
pub fn initialize_paths<R: Rng + ?Sized>(
    model: &ModelSpec,
    params: &Params,
    emission: EmissionKind,
    dataset: &Dataset,
    max_attempts: u64,
    rng: &mut R,
) -> Result<PopulationHistory> {
    let em = Emission::from_params(emission, params)?;
    let schedule = EpochSchedule::constant(Rates::from_params(params));
    let window = dataset.window();
    for _ in 0..max_attempts {
        let init = sample_multinomial(dataset.population, &params.p_init, rng);
        let keep = |j: usize, c: &[usize]| em.loglik(dataset.counts[j], c[model.infectious()] as u64).is_finite();
        let Some(events) = gillespie_simulate_checked(model, &schedule, &init, window, &dataset.times, keep, rng)? else {
            continue;
        };
        let history = disaggregate(&events, &subjects_from_counts(&init), model.n_states(), window, rng)?;
        debug_assert!(emission_loglik(&history, dataset, &em, model).is_finite());
        return Ok(history);
    }
    Err(Error::InitializationFailed { attempts: max_attempts })
}

/// Runs chain number `chain` of `config` on `dataset`.
pub fn run_chain(config: &RunConfig, dataset: &Dataset, chain: usize) -> Result<ChainOutput> {
    dataset.validate()?;
    config.validate(dataset.population)?;
    let mut rng = chain_rng(config.seed, chain);
    let mut out = ChainOutput { chain, ..Default::default() };
    if config.iterations == 0 {
        return Ok(out);
    }
    let clock = Instant::now();
    match config.method {
        Method::Bda => run_bda(config, dataset, &mut rng, &mut out)?,
        Method::Pmmh => run_pmmh(config, dataset, &mut rng, &mut out)?,
    }
    out.elapsed = clock.elapsed();
    Ok(out)
}

/// Runs every chain on its own thread.
pub fn run_chains(config: &RunConfig, dataset: &Dataset) -> Result<Vec<ChainOutput>> {
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..config.chains).map(|c| s.spawn(move || run_chain(config, dataset, c))).collect();
        handles.into_iter().map(|h| h.join().expect("chain thread panicked")).collect()
    })
}

/// State of one data-augmentation chain: parameters, the latent history and
/// the per-chain caches. `step` performs one full sweep.
#[derive(Debug, Clone)]
pub struct BdaSampler {
    pub params: Params,
    pub history: PopulationHistory,
    cache: DecompositionCache,
    cur_ctmc: f64,
    nb_walk: AdaptiveWalk,
}

impl BdaSampler {
    /// Starts from `config.init` (or a prior draw) and a simulated history
    /// that is compatible with the data.
    pub fn new<R: Rng + ?Sized>(config: &RunConfig, dataset: &Dataset, rng: &mut R) -> Result<Self> {
        let mut params = match &config.init {
            Some(p) => p.clone(),
            None => sample_prior(&config.priors, &config.model, rng),
        };
        if config.emission == EmissionKind::Binomial {
            params.phi = None;
        }
        let history = initialize_paths(&config.model, &params, config.emission, dataset, config.init_attempts, rng)?;
        Self::from_state(config, params, history)
    }

    pub fn from_state(config: &RunConfig, params: Params, history: PopulationHistory) -> Result<Self> {
        params.validate(&config.model)?;
        let cache = DecompositionCache::new(&config.model, &params);
        let cur_ctmc = ctmc_loglik_from_stats(&sufficient_statistics(&history, &config.model), &config.model, &params);
        let nb_walk = AdaptiveWalk::new(RandomWalk::diagonal(&[0.1, 0.1])?, 0.234, config.emission_pilot);
        Ok(BdaSampler { params, history, cache, cur_ctmc, nb_walk })
    }

    /// One iteration: path updates for a random subset of subjects, then the
    /// rates, the emission parameters and the initial distribution. Returns
    /// the log-posterior after the sweep.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        config: &RunConfig,
        dataset: &Dataset,
        counters: &mut AcceptCounters,
        rng: &mut R,
    ) -> Result<f64> {
        let model = &config.model;
        let n = dataset.population;
        let emission = Emission::from_params(config.emission, &self.params)?;
        let updater = SubjectUpdater {
            model,
            dataset,
            emission,
            params: &self.params,
            config: ProposalConfig::new(config.bridge_sampler),
        };
        for subject in rand::seq::index::sample(rng, n, config.subjects_per_iter(n)) {
            let outcome = updater.update(&mut self.history, &mut self.cur_ctmc, subject, &mut self.cache, rng)?;
            counters.proposed += 1;
            match outcome {
                UpdateOutcome::Accepted => counters.accepted += 1,
                UpdateOutcome::Rejected => counters.rejected += 1,
                UpdateOutcome::Infeasible => {
                    counters.rejected += 1;
                    counters.infeasible += 1;
                }
            }
        }

        let params = &mut self.params;
        let stats = sufficient_statistics(&self.history, model);
        update_rates(&stats, model, &config.priors, params, rng);
        let prev = observed_prevalence(&self.history, dataset, model);
        match config.emission {
            EmissionKind::Binomial => {
                params.rho = update_rho_binomial(&prev, &dataset.counts, config.priors.rho, rng)?;
            }
            EmissionKind::NegBinomial => {
                let acc = update_rho_phi_rwmh(&prev, &dataset.counts, params, &config.priors, &mut self.nb_walk, rng)?;
                counters.param_proposed += 1;
                counters.param_accepted += acc as u64;
            }
        }
        params.p_init = update_p_init(&stats.initial, &config.priors.p_init.alpha, rng);
        self.cache.set_params(params);
        self.cur_ctmc = ctmc_loglik_from_stats(&stats, model, params);

        let emission = Emission::from_params(config.emission, params)?;
        let e: f64 = dataset.counts.iter().zip(&prev).map(|(&y, &i)| emission.loglik(y, i)).sum();
        Ok(e + self.cur_ctmc + config.priors.log_density(model, params))
    }
}

fn run_bda(config: &RunConfig, dataset: &Dataset, rng: &mut ChaCha8Rng, out: &mut ChainOutput) -> Result<()> {
    let mut sampler = BdaSampler::new(config, dataset, rng)?;
    for it in 0..config.iterations {
        let lp = sampler.step(config, dataset, &mut out.counters, rng)?;
        out.logpost.push(lp);
        out.draws.push(sampler.params.clone());
        out.accept_rate.push(out.counters.rate());
        if it >= config.burn_in && (it + 1 - config.burn_in) % config.thin == 0 {
            debug_assert!(sampler.history.validate(&config.model).is_ok());
            out.snapshots.push((it, sampler.history.clone()));
        }
    }
    Ok(())
}

fn run_pmmh(config: &RunConfig, dataset: &Dataset, rng: &mut ChaCha8Rng, out: &mut ChainOutput) -> Result<()> {
    let s = &config.pmmh;
    let pm = PmmhConfig {
        particles: s.particles,
        path_sim: s.path_sim,
        iterations: config.iterations,
        pilot: s.pilot.unwrap_or((config.iterations / 5) as u64),
        step: s.scale,
        init_attempts: 100,
    };
    let res = adaptive_rwmh_chain(dataset, &config.model, config.emission, &config.priors, config.init.as_ref(), &pm, rng)?;
    out.counters.param_proposed = res.proposed;
    out.counters.param_accepted = res.accepted;
    out.degenerate_fraction = Some(res.degenerate_fraction());
    out.draws = res.draws;
    out.logpost = res.logpost;
    out.accept_rate = res.accept_rate;
    Ok(())
}

#[cfg(test)]
mod tests;
