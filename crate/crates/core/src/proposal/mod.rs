//! Subject-path proposal and Metropolis-Hastings update.
//!
//! With every other subject held fixed, subject `j` evolves as a
//! time-inhomogeneous chain whose infection rate changes only at the other
//! subjects' event times. A new path is drawn in three stages: states at
//! the observation times (forward filtering, backward sampling), states at
//! the remaining breakpoints, then endpoint-conditioned bridges on each
//! piece. The proposal ignores how subject `j` affects everyone else, which
//! the acceptance ratio corrects.

mod hmm;
mod partition;
mod skeleton;

pub use hmm::hmm_sample;
pub use partition::IntervalPartition;
pub use skeleton::skeleton_sample;

use rand::Rng;

use crate::bridge::{sample_bridge, BridgeProblem, BridgeSampler, DEFAULT_RETRY_BUDGET};
use crate::ctmc::{homogeneous_path_loglik, DecompositionCache, SquareMat, MAX_STATES};
use crate::data::Dataset;
use crate::emission::Emission;
use crate::error::Result;
use crate::history::{Jump, PopulationHistory, SubjectPath};
use crate::likelihood::ctmc_loglik;
use crate::model::ModelSpec;
use crate::params::Params;

/// Redraws allowed when a proposed event time collides with an existing one.
const COLLISION_RETRIES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProposalConfig {
    pub sampler: BridgeSampler,
    pub retry_budget: u64,
}

impl ProposalConfig {
    pub fn new(sampler: BridgeSampler) -> Self {
        ProposalConfig { sampler, retry_budget: DEFAULT_RETRY_BUDGET }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOutcome {
    Accepted,
    Rejected,
    /// No path for this subject is compatible with the data; counted as a
    /// rejection.
    Infeasible,
}

/// A partition together with its per-piece transition matrices.
#[derive(Debug, Clone)]
pub struct PreparedPartition {
    pub partition: IntervalPartition,
    pub tpms: Vec<SquareMat>,
}

impl PreparedPartition {
    pub fn new(partition: IntervalPartition, cache: &mut DecompositionCache) -> Self {
        cache.prepare(partition.prevalence.iter().copied());
        let tpms = (0..partition.n_intervals())
            .map(|k| cache.entry(partition.prevalence[k]).transition_matrix(partition.len(k)))
            .collect();
        PreparedPartition { partition, tpms }
    }

    /// Transition matrices between consecutive observation times.
    pub fn observation_tpms(&self) -> Vec<SquareMat> {
        self.partition
            .obs_break
            .windows(2)
            .map(|w| {
                let mut p = self.tpms[w[0]];
                for m in &self.tpms[w[0] + 1..w[1]] {
                    p = &p * m;
                }
                p
            })
            .collect()
    }
}

/// Emission log-weights for each observation and each state of subject `j`.
pub fn emission_log_weights(
    partition: &IntervalPartition,
    dataset: &Dataset,
    emission: &Emission,
    model: &ModelSpec,
) -> Vec<[f64; MAX_STATES]> {
    let inf = model.infectious();
    dataset
        .counts
        .iter()
        .zip(&partition.obs_prevalence)
        .map(|(&y, &ip)| {
            let mut w = [f64::NEG_INFINITY; MAX_STATES];
            for (s, x) in w.iter_mut().enumerate().take(model.n_states()) {
                *x = emission.loglik(y, ip as u64 + (s == inf) as u64);
            }
            w
        })
        .collect()
}

/// Fills in the states at every breakpoint given the states at the
/// observation times.
pub fn skeleton_states<R: Rng + ?Sized>(
    prepared: &PreparedPartition,
    obs_states: &[usize],
    monotone: bool,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let part = &prepared.partition;
    let mut states = vec![0; part.breaks.len()];
    for (l, &b) in part.obs_break.iter().enumerate() {
        states[b] = obs_states[l];
    }
    for w in part.obs_break.windows(2) {
        skeleton_sample(&prepared.tpms[w[0]..w[1]], &mut states[w[0]..=w[1]], monotone, rng)?;
    }
    Ok(states)
}

/// Bridges between consecutive breakpoint states.
pub fn bridge_fill<R: Rng + ?Sized>(
    prepared: &PreparedPartition,
    states: &[usize],
    cache: &DecompositionCache,
    monotone: bool,
    config: ProposalConfig,
    rng: &mut R,
) -> Result<SubjectPath> {
    let part = &prepared.partition;
    let mut jumps = Vec::new();
    for k in 0..part.n_intervals() {
        let (a, b) = (states[k], states[k + 1]);
        let q = cache.entry(part.prevalence[k]).rate();
        if a == b && (monotone || !(q[(a, a)] < 0.0)) {
            continue;
        }
        let (start, end) = part.interval(k);
        let problem = BridgeProblem {
            rate: q,
            start,
            end,
            from: a,
            to: b,
            endpoint_prob: Some(prepared.tpms[k][(a, b)]),
        };
        jumps.extend(sample_bridge(&problem, config.sampler, config.retry_budget, rng)?);
    }
    Ok(SubjectPath { initial: states[0], jumps })
}

/// Log-density of `path` under the time-inhomogeneous chain defined by the
/// partition, including the initial-state probability.
pub fn proposal_logdensity(
    path: &SubjectPath,
    partition: &IntervalPartition,
    cache: &DecompositionCache,
    p_init: &[f64],
) -> f64 {
    let mut ll = p_init[path.initial].ln();
    let mut state = path.initial;
    let mut rest: &[Jump] = &path.jumps;
    for k in 0..partition.n_intervals() {
        let (start, end) = partition.interval(k);
        let last = k + 1 == partition.n_intervals();
        let n_in = rest.iter().take_while(|j| j.time < end || (last && j.time <= end)).count();
        let (inside, tail) = rest.split_at(n_in);
        let q = cache.entry(partition.prevalence[k]).rate();
        ll += homogeneous_path_loglik(q, state, inside, start, end);
        if let Some(j) = inside.last() {
            state = j.to;
        }
        rest = tail;
    }
    if ll.is_nan() {
        f64::NEG_INFINITY
    } else {
        ll
    }
}

/// Everything needed to propose and accept a new path for one subject.
#[derive(Debug, Clone, Copy)]
pub struct SubjectUpdater<'a> {
    pub model: &'a ModelSpec,
    pub dataset: &'a Dataset,
    pub emission: Emission,
    pub params: &'a Params,
    pub config: ProposalConfig,
}

/// A drawn path with the proposal log-densities of it and of the current
/// path.
#[derive(Debug, Clone)]
pub struct Proposal {
    pub path: SubjectPath,
    pub log_q_new: f64,
    pub log_q_cur: f64,
    pub partition: IntervalPartition,
}

impl SubjectUpdater<'_> {
    pub fn prepare(
        &self,
        history: &PopulationHistory,
        subject: usize,
        cache: &mut DecompositionCache,
    ) -> Result<PreparedPartition> {
        let part = IntervalPartition::build(history, subject, &self.dataset.times, self.model.infectious())?;
        Ok(PreparedPartition::new(part, cache))
    }

    /// Draws a new path for `subject`; `None` if the data rule out every
    /// path.
    pub fn propose<R: Rng + ?Sized>(
        &self,
        history: &PopulationHistory,
        subject: usize,
        cache: &mut DecompositionCache,
        rng: &mut R,
    ) -> Result<Option<Proposal>> {
        debug_assert_eq!(cache.params(), self.params);
        let prepared = self.prepare(history, subject, cache)?;
        let log_em = emission_log_weights(&prepared.partition, self.dataset, &self.emission, self.model);
        let Some(obs_states) = hmm_sample(&self.params.p_init, &log_em, &prepared.observation_tpms(), rng) else {
            return Ok(None);
        };
        let states = skeleton_states(&prepared, &obs_states, self.model.monotone, rng)?;
        let path = bridge_fill(&prepared, &states, cache, self.model.monotone, self.config, rng)?;
        let log_q_new = proposal_logdensity(&path, &prepared.partition, cache, &self.params.p_init);
        let log_q_cur =
            proposal_logdensity(&history.subject_path(subject), &prepared.partition, cache, &self.params.p_init);
        Ok(Some(Proposal { path, log_q_new, log_q_cur, partition: prepared.partition }))
    }

    /// One Metropolis-Hastings update of `subject`. `cur_ctmc` holds the
    /// latent-process log-likelihood of `history` and is kept in sync.
    pub fn update<R: Rng + ?Sized>(
        &self,
        history: &mut PopulationHistory,
        cur_ctmc: &mut f64,
        subject: usize,
        cache: &mut DecompositionCache,
        rng: &mut R,
    ) -> Result<UpdateOutcome> {
        for _ in 0..COLLISION_RETRIES {
            let Some(prop) = self.propose(history, subject, cache, rng)? else {
                return Ok(UpdateOutcome::Infeasible);
            };
            let mut candidate = history.clone();
            if candidate.replace_subject(subject, &prop.path).is_err() {
                continue;
            }
            let new_ctmc = ctmc_loglik(&candidate, self.model, self.params);
            let log_alpha = log_acceptance(new_ctmc, *cur_ctmc, prop.log_q_new, prop.log_q_cur);
            let u: f64 = rng.random();
            if u.ln() < log_alpha {
                *history = candidate;
                *cur_ctmc = new_ctmc;
                return Ok(UpdateOutcome::Accepted);
            }
            return Ok(UpdateOutcome::Rejected);
        }
        Ok(UpdateOutcome::Rejected)
    }
}

/// `log [pi(new) q(cur)] - log [pi(cur) q(new)]` with the conventions that
/// an impossible proposal is never accepted and an impossible current state
/// is always left.
pub fn log_acceptance(new_ctmc: f64, cur_ctmc: f64, log_q_new: f64, log_q_cur: f64) -> f64 {
    if new_ctmc == f64::NEG_INFINITY || log_q_new == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if cur_ctmc == f64::NEG_INFINITY || log_q_cur == f64::NEG_INFINITY {
        return f64::INFINITY;
    }
    (new_ctmc - cur_ctmc) + (log_q_cur - log_q_new)
}
