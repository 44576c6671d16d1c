//! Particle marginal Metropolis-Hastings: a bootstrap particle filter over
//! the lumped counts supplies an unbiased likelihood estimate to an adaptive
//! random-walk sampler on transformed parameters.

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::ctmc::MAX_STATES;
use crate::data::Dataset;
use crate::emission::{Emission, EmissionKind};
use crate::error::{Error, Result};
use crate::gibbs::sample_prior;
use crate::model::ModelSpec;
use crate::params::{Params, PriorSpec};
use crate::rwmh::{AdaptiveWalk, RandomWalk};
use crate::sim::{gillespie_advance, tau_leap_advance, Rates};

/// How particle paths are propagated between observations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathSim {
    Exact,
    /// Multinomial tau-leaping with the given step.
    TauLeap(f64),
}

/// Draw from `Multinomial(n, p)`, by sequential binomials.
pub fn sample_multinomial<R: Rng + ?Sized>(n: usize, p: &[f64], rng: &mut R) -> Vec<usize> {
    let mut out = vec![0; p.len()];
    let mut left = n as u64;
    let mut mass = 1.0;
    for (i, &pi) in p.iter().enumerate() {
        if left == 0 {
            break;
        }
        if i + 1 == p.len() || mass <= 0.0 {
            out[i] = left as usize;
            break;
        }
        let q = (pi / mass).clamp(0.0, 1.0);
        let k = Binomial::new(left, q).expect("probability clamped").sample(rng);
        out[i] = k as usize;
        left -= k;
        mass -= pi;
    }
    out
}

/// Lumped counts and log-weights of a particle population.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    n_states: usize,
    counts: Vec<[usize; MAX_STATES]>,
    log_weights: Vec<f64>,
    loglik: f64,
    degenerate: bool,
}

impl ParticleEnsemble {
    /// Particles drawn independently from the initial multinomial.
    pub fn initialize<R: Rng + ?Sized>(
        n_particles: usize,
        population: usize,
        p_init: &[f64],
        rng: &mut R,
    ) -> Result<Self> {
        if n_particles == 0 {
            return Err(Error::NoParticles);
        }
        let counts = (0..n_particles)
            .map(|_| {
                let c = sample_multinomial(population, p_init, rng);
                let mut a = [0; MAX_STATES];
                a[..c.len()].copy_from_slice(&c);
                a
            })
            .collect();
        Ok(ParticleEnsemble {
            n_states: p_init.len(),
            counts,
            log_weights: vec![0.0; n_particles],
            loglik: 0.0,
            degenerate: false,
        })
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn counts(&self, i: usize) -> &[usize] {
        &self.counts[i][..self.n_states]
    }

    pub fn loglik(&self) -> f64 {
        self.loglik
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn propagate<R: Rng + ?Sized>(
        &mut self,
        model: &ModelSpec,
        rates: Rates,
        t0: f64,
        t1: f64,
        sim: PathSim,
        rng: &mut R,
    ) {
        let n = self.n_states;
        for c in &mut self.counts {
            match sim {
                PathSim::Exact => gillespie_advance(model, rates, &mut c[..n], t0, t1, rng),
                PathSim::TauLeap(h) => tau_leap_advance(model, rates, &mut c[..n], t0, t1, h, rng),
            }
        }
    }

    /// Weights particles by the emission probability of `y` and adds the
    /// log mean weight to the running estimate.
    pub fn weight(&mut self, model: &ModelSpec, emission: &Emission, y: u64) {
        let inf = model.infectious();
        for (w, c) in self.log_weights.iter_mut().zip(&self.counts) {
            *w = emission.loglik(y, c[inf] as u64);
        }
        let top = self.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY || top.is_nan() {
            self.degenerate = true;
            self.loglik = f64::NEG_INFINITY;
            return;
        }
        let s: f64 = self.log_weights.iter().map(|w| (w - top).exp()).sum();
        self.loglik += top + (s / self.len() as f64).ln();
    }

    pub fn resample<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        if self.degenerate {
            return;
        }
        let top = self.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = self.log_weights.iter().map(|x| (x - top).exp()).collect();
        let pick = WeightedIndex::new(&w).expect("at least one positive weight");
        let old = std::mem::take(&mut self.counts);
        self.counts = (0..old.len()).map(|_| old[pick.sample(rng)]).collect();
        self.log_weights.fill(0.0);
    }
}

/// Bootstrap particle filter estimate of `log p(Y | theta)`, with
/// multinomial resampling after every observation.
pub fn bootstrap_loglik<R: Rng + ?Sized>(
    dataset: &Dataset,
    model: &ModelSpec,
    params: &Params,
    emission: &Emission,
    n_particles: usize,
    sim: PathSim,
    rng: &mut R,
) -> Result<f64> {
    if n_particles == 0 {
        return Err(Error::NoParticles);
    }
    if dataset.is_empty() {
        return Ok(0.0);
    }
    let rates = Rates::from_params(params);
    let mut ens = ParticleEnsemble::initialize(n_particles, dataset.population, &params.p_init, rng)?;
    let mut t = dataset.times[0];
    for (l, (&tl, &y)) in dataset.times.iter().zip(&dataset.counts).enumerate() {
        if l > 0 {
            ens.propagate(model, rates, t, tl, sim, rng);
            t = tl;
        }
        ens.weight(model, emission, y);
        if ens.is_degenerate() {
            return Ok(f64::NEG_INFINITY);
        }
        if l + 1 < dataset.len() {
            ens.resample(rng);
        }
    }
    Ok(ens.loglik())
}

/// Map between parameters and the unconstrained coordinates of the random
/// walk: logs for rates and `phi`, logit for `rho`, and additive log-ratios
/// for the initial probabilities with the last state as reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform {
    uses_gamma: bool,
    uses_phi: bool,
    n_states: usize,
}

impl Transform {
    pub fn new(model: &ModelSpec, emission: EmissionKind) -> Self {
        Transform {
            uses_gamma: model.uses_gamma(),
            uses_phi: emission == EmissionKind::NegBinomial,
            n_states: model.n_states(),
        }
    }

    pub fn dim(&self) -> usize {
        3 + self.uses_gamma as usize + self.uses_phi as usize + self.n_states - 1
    }

    pub fn to_unconstrained(&self, p: &Params) -> Vec<f64> {
        let mut z = vec![p.beta.ln()];
        if self.uses_gamma {
            z.push(p.gamma.unwrap_or(0.0).ln());
        }
        z.push(p.mu.ln());
        z.push((p.rho / (1.0 - p.rho)).ln());
        if self.uses_phi {
            z.push(p.phi.unwrap_or(0.0).ln());
        }
        let last = p.p_init[self.n_states - 1];
        z.extend(p.p_init[..self.n_states - 1].iter().map(|x| (x / last).ln()));
        z
    }

    pub fn to_params(&self, z: &[f64]) -> Params {
        let mut it = z.iter().copied();
        let mut next = || it.next().expect("dimension checked");
        let beta = next().exp();
        let gamma = self.uses_gamma.then(|| next().exp());
        let mu = next().exp();
        let rho = 1.0 / (1.0 + (-next()).exp());
        let phi = self.uses_phi.then(|| next().exp());
        let alr = &z[self.dim() - (self.n_states - 1)..];
        let top = alr.iter().copied().fold(0.0, f64::max);
        let mut p: Vec<f64> = alr.iter().map(|a| (a - top).exp()).collect();
        p.push((-top).exp());
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= total);
        Params { beta, gamma, mu, rho, phi, p_init: p }
    }

    /// `ln |d params / d z|`.
    pub fn log_jacobian(&self, p: &Params) -> f64 {
        let mut j = p.beta.ln() + p.mu.ln() + p.rho.ln() + (1.0 - p.rho).ln();
        if self.uses_gamma {
            j += p.gamma.unwrap_or(0.0).ln();
        }
        if self.uses_phi {
            j += p.phi.unwrap_or(0.0).ln();
        }
        j + p.p_init.iter().map(|x| x.ln()).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PmmhConfig {
    pub particles: usize,
    pub path_sim: PathSim,
    pub iterations: usize,
    /// Adaptation length; the walk is frozen afterwards.
    pub pilot: u64,
    /// Initial proposal standard deviation on every transformed coordinate.
    pub step: f64,
    pub init_attempts: usize,
}

impl PmmhConfig {
    pub fn new(particles: usize, path_sim: PathSim, iterations: usize) -> Self {
        PmmhConfig {
            particles,
            path_sim,
            iterations,
            pilot: (iterations / 5) as u64,
            step: 0.1,
            init_attempts: 100,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct PmmhOutput {
    pub draws: Vec<Params>,
    /// Likelihood estimate attached to each retained state.
    pub loglik: Vec<f64>,
    pub logpost: Vec<f64>,
    /// Running acceptance rate after each iteration.
    pub accept_rate: Vec<f64>,
    pub accepted: u64,
    pub proposed: u64,
    pub filter_runs: u64,
    /// Filter runs that returned an estimate of `-inf`.
    pub degenerate_runs: u64,
}

impl PmmhOutput {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    pub fn degenerate_fraction(&self) -> f64 {
        if self.filter_runs == 0 {
            0.0
        } else {
            self.degenerate_runs as f64 / self.filter_runs as f64
        }
    }
}

/// Marginal Metropolis-Hastings with a pluggable log-likelihood.
///
/// Each iteration draws, in order: the random-walk increment, whatever
/// `loglik` consumes, and one uniform for the accept step. Without `init`
/// every start attempt is a fresh prior draw.
#[allow(clippy::too_many_arguments)]
pub fn marginal_mh_chain<R, F>(
    model: &ModelSpec,
    emission: EmissionKind,
    priors: &PriorSpec,
    init: Option<&Params>,
    config: &PmmhConfig,
    mut loglik: F,
    rng: &mut R,
) -> Result<PmmhOutput>
where
    R: Rng + ?Sized,
    F: FnMut(&Params, &mut R) -> Result<f64>,
{
    let tf = Transform::new(model, emission);
    let mut out = PmmhOutput::default();
    let mut state = None;
    for _ in 0..config.init_attempts.max(1) {
        let theta = match init {
            Some(p) => p.clone(),
            None => sample_prior(priors, model, rng),
        };
        let lp = priors.log_density(model, &theta) + tf.log_jacobian(&theta);
        if !lp.is_finite() {
            if init.is_some() {
                return Err(Error::InvalidParameter(
                    "initial parameters lie on the boundary of the prior support".into(),
                ));
            }
            continue;
        }
        let ll = loglik(&theta, rng)?;
        out.filter_runs += 1;
        if ll == f64::NEG_INFINITY {
            out.degenerate_runs += 1;
        }
        if ll.is_finite() {
            state = Some((tf.to_unconstrained(&theta), theta, ll, lp));
            break;
        }
    }
    let Some((mut z, mut theta, mut ll, mut lp)) = state else {
        return Err(Error::NonFiniteLikelihood { attempts: config.init_attempts.max(1) as u64 });
    };
    let walk = RandomWalk::diagonal(&vec![config.step; tf.dim()])?;
    let mut walk = AdaptiveWalk::new(walk, 0.234, config.pilot);
    for _ in 0..config.iterations {
        let z_new = walk.propose(&z, rng);
        let theta_new = tf.to_params(&z_new);
        let lp_new = priors.log_density(model, &theta_new) + tf.log_jacobian(&theta_new);
        let ll_new = if lp_new.is_finite() {
            let v = loglik(&theta_new, rng)?;
            out.filter_runs += 1;
            if v == f64::NEG_INFINITY {
                out.degenerate_runs += 1;
            }
            v
        } else {
            f64::NEG_INFINITY
        };
        let log_alpha = (ll_new + lp_new) - (ll + lp);
        let u: f64 = rng.random();
        let accept = log_alpha == f64::INFINITY || (log_alpha.is_finite() && u.ln() < log_alpha);
        out.proposed += 1;
        if accept {
            out.accepted += 1;
            z = z_new;
            theta = theta_new;
            ll = ll_new;
            lp = lp_new;
        }
        walk.record(accept, &z);
        out.draws.push(theta.clone());
        out.loglik.push(ll);
        out.logpost.push(ll + priors.log_density(model, &theta));
        out.accept_rate.push(out.accepted as f64 / out.proposed as f64);
    }
    Ok(out)
}

/// PMMH chain with bootstrap-filter likelihood estimates.
pub fn adaptive_rwmh_chain<R: Rng + ?Sized>(
    dataset: &Dataset,
    model: &ModelSpec,
    emission: EmissionKind,
    priors: &PriorSpec,
    init: Option<&Params>,
    config: &PmmhConfig,
    rng: &mut R,
) -> Result<PmmhOutput> {
    if config.particles == 0 {
        return Err(Error::NoParticles);
    }
    if let PathSim::TauLeap(h) = config.path_sim {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau-leap step {h}")));
        }
    }
    dataset.validate()?;
    priors.validate(model)?;
    let loglik = |theta: &Params, rng: &mut R| {
        let em = Emission::from_params(emission, theta)?;
        bootstrap_loglik(dataset, model, theta, &em, config.particles, config.path_sim, rng)
    };
    marginal_mh_chain(model, emission, priors, init, config, loglik, rng)
}
