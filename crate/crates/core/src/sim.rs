//! Forward simulation of epidemics.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp1};

use crate::data::Dataset;
use crate::emission::Emission;
use crate::error::{Error, Result};
use crate::history::{Event, LumpedEvent, PopulationHistory};
use crate::model::{ModelSpec, RateForm, RateParam};
use crate::params::Params;

/// Rate parameters only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub beta: f64,
    pub gamma: f64,
    pub mu: f64,
}

impl Rates {
    pub fn from_params(p: &Params) -> Self {
        Rates { beta: p.beta, gamma: p.gamma.unwrap_or(0.0), mu: p.mu }
    }

    pub fn get(&self, p: RateParam) -> f64 {
        match p {
            RateParam::Beta => self.beta,
            RateParam::Gamma => self.gamma,
            RateParam::Mu => self.mu,
        }
    }

    /// Per-subject rate of transition `k` given current counts.
    pub fn subject_rate(&self, model: &ModelSpec, k: usize, counts: &[usize]) -> f64 {
        let tr = &model.transitions[k];
        match tr.form {
            RateForm::InfectiveContact => self.beta * counts[model.infectious()] as f64,
            RateForm::Constant(p) => self.get(p),
        }
    }

    /// Population-level rate of transition `k`.
    pub fn lumped_rate(&self, model: &ModelSpec, k: usize, counts: &[usize]) -> f64 {
        self.subject_rate(model, k, counts) * counts[model.transitions[k].from] as f64
    }
}

/// Piecewise-constant rates. Epoch `i` applies from `starts[i]` until the
/// next start; the process restarts at each boundary with the new rates and
/// the current counts.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSchedule {
    pub starts: Vec<f64>,
    pub rates: Vec<Rates>,
}

impl EpochSchedule {
    pub fn constant(rates: Rates) -> Self {
        EpochSchedule { starts: vec![f64::NEG_INFINITY], rates: vec![rates] }
    }

    pub fn new(starts: Vec<f64>, rates: Vec<Rates>) -> Result<Self> {
        if starts.is_empty() || starts.len() != rates.len() {
            return Err(Error::InvalidParameter("epoch starts and rates must pair up".into()));
        }
        if starts.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("epoch boundaries must increase".into()));
        }
        for r in &rates {
            if [r.beta, r.gamma, r.mu].iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
                return Err(Error::InvalidParameter(format!("bad epoch rates {r:?}")));
            }
        }
        Ok(EpochSchedule { starts, rates })
    }

    /// Index of the epoch in force at `t`.
    pub fn index_at(&self, t: f64) -> usize {
        self.starts.partition_point(|&s| s <= t).saturating_sub(1)
    }

    fn covers(&self, t: f64) -> bool {
        self.starts[0] <= t
    }
}

/// Exact simulation of the lumped chain on `(t0, t1)`, calling `on_event`
/// for each event. `counts` is updated in place.
fn gillespie_run<R: Rng + ?Sized>(
    model: &ModelSpec,
    schedule: &EpochSchedule,
    counts: &mut [usize],
    t0: f64,
    t1: f64,
    rng: &mut R,
    mut on_event: impl FnMut(f64, usize),
) {
    let nt = model.transitions.len();
    let mut t = t0;
    let mut e = schedule.index_at(t0);
    let mut lumped = [0.0; 4];
    loop {
        let boundary = schedule.starts.get(e + 1).copied().unwrap_or(f64::INFINITY).min(t1);
        let rates = &schedule.rates[e];
        let mut total = 0.0;
        for (k, l) in lumped.iter_mut().enumerate().take(nt) {
            *l = rates.lumped_rate(model, k, counts);
            total += *l;
        }
        let next = if total > 0.0 {
            let x: f64 = Exp1.sample(rng);
            t + x / total
        } else {
            f64::INFINITY
        };
        if next >= boundary {
            if boundary >= t1 {
                return;
            }
            t = boundary;
            e += 1;
            continue;
        }
        if next <= t {
            continue;
        }
        t = next;
        let mut u = rng.random::<f64>() * total;
        let mut k = 0;
        for (i, &l) in lumped.iter().enumerate().take(nt) {
            if l > 0.0 {
                k = i;
                u -= l;
                if u < 0.0 {
                    break;
                }
            }
        }
        let tr = &model.transitions[k];
        counts[tr.from] -= 1;
        counts[tr.to] += 1;
        on_event(t, k);
    }
}

/// Lumped event sequence of one epidemic on the open window.
pub fn gillespie_simulate<R: Rng + ?Sized>(
    model: &ModelSpec,
    schedule: &EpochSchedule,
    initial: &[usize],
    window: (f64, f64),
    rng: &mut R,
) -> Result<Vec<LumpedEvent>> {
    if initial.len() != model.n_states() {
        return Err(Error::InvalidParameter("initial counts do not match the model".into()));
    }
    if !schedule.covers(window.0) {
        return Err(Error::InvalidParameter("epoch schedule starts after the window".into()));
    }
    let mut counts = initial.to_vec();
    let mut events = Vec::new();
    gillespie_run(model, schedule, &mut counts, window.0, window.1, rng, |t, k| {
        let tr = &model.transitions[k];
        events.push(LumpedEvent { time: t, from: tr.from as u8, to: tr.to as u8 });
    });
    Ok(events)
}

/// Like [`gillespie_simulate`], but stops at each sorted checkpoint in the
/// window and hands the counts there to `keep`. Returns `None` as soon as
/// `keep` rejects a checkpoint.
pub fn gillespie_simulate_checked<R: Rng + ?Sized>(
    model: &ModelSpec,
    schedule: &EpochSchedule,
    initial: &[usize],
    window: (f64, f64),
    checkpoints: &[f64],
    mut keep: impl FnMut(usize, &[usize]) -> bool,
    rng: &mut R,
) -> Result<Option<Vec<LumpedEvent>>> {
    if initial.len() != model.n_states() {
        return Err(Error::InvalidParameter("initial counts do not match the model".into()));
    }
    if !schedule.covers(window.0) {
        return Err(Error::InvalidParameter("epoch schedule starts after the window".into()));
    }
    let mut counts = initial.to_vec();
    let mut events = Vec::new();
    let mut t = window.0;
    for (j, &c) in checkpoints.iter().enumerate() {
        let c = c.clamp(window.0, window.1);
        if c > t {
            gillespie_run(model, schedule, &mut counts, t, c, rng, |s, k| {
                let tr = &model.transitions[k];
                events.push(LumpedEvent { time: s, from: tr.from as u8, to: tr.to as u8 });
            });
            t = c;
        }
        if !keep(j, &counts) {
            return Ok(None);
        }
    }
    gillespie_run(model, schedule, &mut counts, t, window.1, rng, |s, k| {
        let tr = &model.transitions[k];
        events.push(LumpedEvent { time: s, from: tr.from as u8, to: tr.to as u8 });
    });
    Ok(Some(events))
}

/// Advances lumped counts from `t0` to `t1` without recording events.
pub fn gillespie_advance<R: Rng + ?Sized>(
    model: &ModelSpec,
    rates: Rates,
    counts: &mut [usize],
    t0: f64,
    t1: f64,
    rng: &mut R,
) {
    gillespie_run(model, &EpochSchedule::constant(rates), counts, t0, t1, rng, |_, _| {});
}

/// Subject states in canonical order: all subjects of state 0 first, then
/// state 1, and so on.
pub fn subjects_from_counts(counts: &[usize]) -> Vec<usize> {
    counts.iter().enumerate().flat_map(|(s, &c)| std::iter::repeat_n(s, c)).collect()
}

/// Assigns each lumped event to a subject chosen uniformly among those in
/// the event's source state.
pub fn disaggregate<R: Rng + ?Sized>(
    events: &[LumpedEvent],
    initial_states: &[usize],
    n_states: usize,
    window: (f64, f64),
    rng: &mut R,
) -> Result<PopulationHistory> {
    let mut members: Vec<Vec<u32>> = vec![Vec::new(); n_states];
    for (j, &s) in initial_states.iter().enumerate() {
        if s >= n_states {
            return Err(Error::InvalidHistory(format!("subject {j} in unknown state {s}")));
        }
        members[s].push(j as u32);
    }
    let mut out = Vec::with_capacity(events.len());
    for e in events {
        let from = &mut members[e.from as usize];
        if from.is_empty() {
            return Err(Error::NoEligibleSubject { time: e.time });
        }
        let i = rng.random_range(0..from.len());
        let subject = from.swap_remove(i);
        members[e.to as usize].push(subject);
        out.push(Event { time: e.time, subject, from: e.from, to: e.to });
    }
    PopulationHistory::new(n_states, window, initial_states.to_vec(), out)
}

/// Subject-level simulation: every subject runs its own exponential clock
/// with rates depending on the current counts, and the earliest fires.
pub fn simulate_subjects<R: Rng + ?Sized>(
    model: &ModelSpec,
    rates: Rates,
    initial_states: &[usize],
    window: (f64, f64),
    rng: &mut R,
) -> Result<PopulationHistory> {
    let n = model.n_states();
    let mut states = initial_states.to_vec();
    let mut counts = vec![0; n];
    for &s in &states {
        counts[s] += 1;
    }
    let mut t = window.0;
    let mut events = Vec::new();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for (j, &s) in states.iter().enumerate() {
            let Some(k) = model.exit_transition(s) else { continue };
            let rate = rates.subject_rate(model, k, &counts);
            if rate > 0.0 {
                let x: f64 = Exp1.sample(rng);
                let dt = x / rate;
                if best.is_none_or(|b| dt < b.0) {
                    best = Some((dt, j, k));
                }
            }
        }
        let Some((dt, j, k)) = best else { break };
        if t + dt >= window.1 {
            break;
        }
        if t + dt <= t {
            continue;
        }
        t += dt;
        let tr = model.transitions[k];
        counts[tr.from] -= 1;
        counts[tr.to] += 1;
        states[j] = tr.to;
        events.push(Event { time: t, subject: j as u32, from: tr.from as u8, to: tr.to as u8 });
    }
    PopulationHistory::new(n, window, initial_states.to_vec(), events)
}

/// Draws observed counts at `times` given the latent history.
pub fn sample_observations<R: Rng + ?Sized>(
    history: &PopulationHistory,
    model: &ModelSpec,
    times: &[f64],
    emission: &Emission,
    rng: &mut R,
) -> Result<Dataset> {
    let all = history.counts_at_sorted(times)?;
    let counts = all.iter().map(|c| emission.sample(c[model.infectious()] as u64, rng)).collect();
    Dataset::new(times.to_vec(), counts, history.population())
}

/// One multinomial leap of length `h`: every compartment loses a binomial
/// number of subjects with probability `1 - exp(-rate h)`, split across its
/// exit channels in proportion to their rates. Rates are frozen at the start
/// of the step.
pub fn tau_leap_step<R: Rng + ?Sized>(model: &ModelSpec, rates: Rates, counts: &mut [usize], h: f64, rng: &mut R) {
    let before = counts.to_vec();
    for s in 0..model.n_states() {
        // Each supported model has at most one exit per compartment, but the
        // split below handles any number.
        let channels: Vec<(usize, f64)> = model
            .transitions
            .iter()
            .enumerate()
            .filter(|(_, tr)| tr.from == s)
            .map(|(k, _)| (k, rates.subject_rate(model, k, &before)))
            .collect();
        let total: f64 = channels.iter().map(|c| c.1).sum();
        if !(total > 0.0) || before[s] == 0 {
            continue;
        }
        let p = -(-total * h).exp_m1();
        let mut leaving = Binomial::new(before[s] as u64, p.clamp(0.0, 1.0)).expect("valid p").sample(rng) as usize;
        let mut rest = total;
        for (i, &(k, r)) in channels.iter().enumerate() {
            let take = if i + 1 == channels.len() || rest <= 0.0 {
                leaving
            } else {
                Binomial::new(leaving as u64, (r / rest).clamp(0.0, 1.0)).expect("valid p").sample(rng) as usize
            };
            rest -= r;
            leaving -= take;
            let tr = &model.transitions[k];
            counts[tr.from] -= take;
            counts[tr.to] += take;
        }
    }
}

/// Advances counts from `t0` to `t1` with leaps of at most `step`.
pub fn tau_leap_advance<R: Rng + ?Sized>(
    model: &ModelSpec,
    rates: Rates,
    counts: &mut [usize],
    t0: f64,
    t1: f64,
    step: f64,
    rng: &mut R,
) {
    let mut t = t0;
    while t < t1 {
        let h = step.min(t1 - t);
        tau_leap_step(model, rates, counts, h, rng);
        t += h;
        if t1 - t < 1e-12 * step {
            break;
        }
    }
}

/// Count path on the grid `t0, t0 + step, ...` up to and including `t1`.
pub fn tau_leap_simulate<R: Rng + ?Sized>(
    model: &ModelSpec,
    rates: Rates,
    initial: &[usize],
    step: f64,
    window: (f64, f64),
    rng: &mut R,
) -> Result<Vec<(f64, Vec<usize>)>> {
    if !(step > 0.0) {
        return Err(Error::InvalidParameter(format!("tau-leap step {step}")));
    }
    let mut counts = initial.to_vec();
    let mut out = vec![(window.0, counts.clone())];
    let n_steps = ((window.1 - window.0) / step).ceil() as usize;
    for i in 1..=n_steps {
        let t_prev = window.0 + (i - 1) as f64 * step;
        let t = (window.0 + i as f64 * step).min(window.1);
        tau_leap_step(model, rates, &mut counts, t - t_prev, rng);
        out.push((t, counts.clone()));
    }
    Ok(out)
}

/// Compartment counts just after every event, starting from the initial
/// counts.
pub fn count_trajectory(
    initial: &[usize],
    start: f64,
    events: &[LumpedEvent],
) -> Vec<(f64, Vec<usize>)> {
    let mut c = initial.to_vec();
    let mut out = vec![(start, c.clone())];
    for e in events {
        c[e.from as usize] -= 1;
        c[e.to as usize] += 1;
        out.push((e.time, c.clone()));
    }
    out
}
