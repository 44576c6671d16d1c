//! Complete-data likelihood and the sufficient statistics behind the Gibbs
//! updates.

use crate::data::Dataset;
use crate::emission::Emission;
use crate::history::{LumpedEvent, PopulationHistory};
use crate::model::{ModelSpec, RateForm};
use crate::params::{xlogy, Params};

/// Event counts and exposures per model transition.
///
/// `exposure[k]` is the integral over the window of the number of subjects
/// in the source state of transition `k`, multiplied by the infective count
/// for infective-contact transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    pub counts: Vec<u64>,
    pub exposure: Vec<f64>,
    /// Sum of `ln I` at the left limit of every infection; `-inf` if some
    /// infection happened with no infectives present.
    pub log_contact: f64,
    pub initial: Vec<usize>,
}

pub fn sufficient_statistics(history: &PopulationHistory, model: &ModelSpec) -> SufficientStats {
    let (start, end) = history.window();
    let counts = history.initial_counts();
    stats_from_lumped(model, &counts, (start, end), history.events().iter().map(|e| LumpedEvent {
        time: e.time,
        from: e.from,
        to: e.to,
    }))
}

/// Same statistics computed from a lumped event sequence.
pub fn stats_from_lumped(
    model: &ModelSpec,
    initial: &[usize],
    window: (f64, f64),
    events: impl IntoIterator<Item = LumpedEvent>,
) -> SufficientStats {
    let nt = model.transitions.len();
    let inf = model.infectious();
    let mut c = initial.to_vec();
    let mut out = SufficientStats {
        counts: vec![0; nt],
        exposure: vec![0.0; nt],
        log_contact: 0.0,
        initial: initial.to_vec(),
    };
    let mut last = window.0;
    let accumulate = |c: &[usize], dt: f64, exposure: &mut [f64]| {
        for (k, tr) in model.transitions.iter().enumerate() {
            let mut level = c[tr.from] as f64;
            if tr.form == RateForm::InfectiveContact {
                level *= c[inf] as f64;
            }
            exposure[k] += level * dt;
        }
    };
    for e in events {
        accumulate(&c, e.time - last, &mut out.exposure);
        last = e.time;
        let (from, to) = (e.from as usize, e.to as usize);
        if let Some(k) = model.transition_index(from, to) {
            out.counts[k] += 1;
            if model.transitions[k].form == RateForm::InfectiveContact {
                out.log_contact += (c[inf] as f64).ln();
            }
        }
        c[from] -= 1;
        c[to] += 1;
    }
    accumulate(&c, window.1 - last, &mut out.exposure);
    out
}

/// Log-likelihood of the latent process alone: initial states, jumps and
/// exposure, without emission terms.
pub fn ctmc_loglik_from_stats(stats: &SufficientStats, model: &ModelSpec, params: &Params) -> f64 {
    let mut ll: f64 = stats
        .initial
        .iter()
        .zip(&params.p_init)
        .map(|(&n, &p)| xlogy(n as f64, p))
        .sum();
    ll += stats.log_contact;
    for (k, tr) in model.transitions.iter().enumerate() {
        let rate = params.rate(tr.form.param());
        ll += xlogy(stats.counts[k] as f64, rate) - rate * stats.exposure[k];
    }
    if ll.is_nan() {
        f64::NEG_INFINITY
    } else {
        ll
    }
}

pub fn ctmc_loglik(history: &PopulationHistory, model: &ModelSpec, params: &Params) -> f64 {
    ctmc_loglik_from_stats(&sufficient_statistics(history, model), model, params)
}

/// Latent prevalence at each observation time.
pub fn observed_prevalence(history: &PopulationHistory, dataset: &Dataset, model: &ModelSpec) -> Vec<u64> {
    history
        .counts_at_sorted(&dataset.times)
        .map(|cs| cs.iter().map(|c| c[model.infectious()] as u64).collect())
        .unwrap_or_else(|_| vec![0; dataset.len()])
}

/// Sum of emission log-probabilities over the observations.
pub fn emission_loglik(
    history: &PopulationHistory,
    dataset: &Dataset,
    emission: &Emission,
    model: &ModelSpec,
) -> f64 {
    let prev = observed_prevalence(history, dataset, model);
    dataset
        .counts
        .iter()
        .zip(&prev)
        .map(|(&y, &i)| emission.loglik(y, i))
        .sum()
}

pub fn complete_data_loglik(
    history: &PopulationHistory,
    dataset: &Dataset,
    params: &Params,
    emission: &Emission,
    model: &ModelSpec,
) -> f64 {
    let e = emission_loglik(history, dataset, emission, model);
    if e == f64::NEG_INFINITY {
        return e;
    }
    e + ctmc_loglik(history, model, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::{Event, Jump, SubjectPath};
    use proptest::prelude::*;

    fn params(beta: f64, mu: f64, p: Vec<f64>) -> Params {
        Params { beta, gamma: None, mu, rho: 0.5, phi: None, p_init: p }
    }

    fn two_subject() -> PopulationHistory {
        PopulationHistory::new(
            3,
            (0.0, 1.0),
            vec![0, 1],
            vec![Event { time: 0.4, subject: 1, from: 1, to: 2 }],
        )
        .unwrap()
    }

    #[test]
    fn no_events_all_susceptible() {
        let model = ModelSpec::sir();
        let h = PopulationHistory::new(3, (0.0, 3.0), vec![0; 6], vec![]).unwrap();
        let ds = Dataset::new(vec![0.0, 1.5, 3.0], vec![0, 0, 0], 6).unwrap();
        let p = params(0.7, 1.1, vec![0.8, 0.1, 0.1]);
        let em = Emission::Binomial { rho: 0.37 };
        let ll = complete_data_loglik(&h, &ds, &p, &em, &model);
        assert!((ll - 6.0 * 0.8f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn two_subject_hand_value() {
        let model = ModelSpec::sir();
        let h = two_subject();
        let p = params(1.0, 2.0, vec![0.5, 0.3, 0.2]);
        let want = 0.5f64.ln() + 0.3f64.ln() + 2.0f64.ln() - 0.4 * (1.0 * 1.0 * 1.0 + 2.0 * 1.0);
        assert!((ctmc_loglik(&h, &model, &p) - want).abs() < 1e-12);
        let ds = Dataset::new(vec![], vec![], 2).unwrap();
        let em = Emission::Binomial { rho: 0.5 };
        assert!((complete_data_loglik(&h, &ds, &p, &em, &model) - want).abs() < 1e-12);
    }

    #[test]
    fn two_subject_statistics() {
        let s = sufficient_statistics(&two_subject(), &ModelSpec::sir());
        assert_eq!(s.counts, vec![0, 1]);
        assert!((s.exposure[0] - 0.4).abs() < 1e-15);
        assert!((s.exposure[1] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn empty_history_statistics() {
        let h = PopulationHistory::new(4, (1.0, 3.5), vec![0, 0, 2, 1, 1], vec![]).unwrap();
        let s = sufficient_statistics(&h, &ModelSpec::seir());
        assert_eq!(s.counts, vec![0, 0, 0]);
        // S*I, E, I
        assert_eq!(s.exposure, vec![2.5 * 2.0 * 1.0, 2.5 * 2.0, 2.5 * 1.0]);
    }

    #[test]
    fn infection_without_infectives_is_impossible() {
        let model = ModelSpec::sir();
        let h = PopulationHistory::new(
            3,
            (0.0, 1.0),
            vec![0, 0],
            vec![Event { time: 0.5, subject: 0, from: 0, to: 1 }],
        )
        .unwrap();
        let p = params(1.0, 1.0, vec![1.0, 0.0, 0.0]);
        assert_eq!(ctmc_loglik(&h, &model, &p), f64::NEG_INFINITY);
    }

    #[test]
    fn data_violation_gives_neg_infinity() {
        let model = ModelSpec::sir();
        let h = two_subject();
        let ds = Dataset::new(vec![0.0, 1.0], vec![1, 1], 2).unwrap();
        let p = params(1.0, 2.0, vec![0.5, 0.3, 0.2]);
        let em = Emission::Binomial { rho: 0.5 };
        assert_eq!(complete_data_loglik(&h, &ds, &p, &em, &model), f64::NEG_INFINITY);
    }

    /// Histories whose event times lie on a 1/64 grid, so midpoint sums on a
    /// finer dyadic grid integrate the step functions exactly.
    fn dyadic_history(model: ModelSpec) -> impl Strategy<Value = (ModelSpec, PopulationHistory)> {
        let ns = model.n_states();
        proptest::collection::vec((0..ns, proptest::collection::vec(1u32..256, 0..4)), 1..7)
            .prop_map(move |subs| {
                let mut used = std::collections::HashSet::new();
                let paths: Vec<SubjectPath> = subs
                    .into_iter()
                    .map(|(s, mut ticks)| {
                        ticks.sort();
                        ticks.dedup();
                        ticks.retain(|t| used.insert(*t));
                        let mut cur = s;
                        let mut jumps = Vec::new();
                        for t in ticks {
                            let Some(k) = model.exit_transition(cur) else { break };
                            cur = model.transitions[k].to;
                            jumps.push(Jump { time: t as f64 / 64.0, to: cur });
                        }
                        SubjectPath { initial: s, jumps }
                    })
                    .collect();
                let h = PopulationHistory::from_paths(ns, (0.0, 4.0), &paths).unwrap();
                (model.clone(), h)
            })
    }

    fn any_model_history() -> impl Strategy<Value = (ModelSpec, PopulationHistory)> {
        prop_oneof![
            dyadic_history(ModelSpec::sir()),
            dyadic_history(ModelSpec::seir()),
            dyadic_history(ModelSpec::sirs()),
        ]
    }

    proptest! {
        #[test]
        fn exposures_match_grid_quadrature((model, h) in any_model_history()) {
            let s = sufficient_statistics(&h, &model);
            let steps = 4 * 1024;
            let dt = 4.0 / steps as f64;
            let mids: Vec<f64> = (0..steps).map(|i| (i as f64 + 0.5) * dt).collect();
            let counts = h.counts_at_sorted(&mids).unwrap();
            let inf = model.infectious();
            for (k, tr) in model.transitions.iter().enumerate() {
                let q: f64 = counts.iter().map(|c| {
                    let mut v = c[tr.from] as f64;
                    if tr.form == RateForm::InfectiveContact { v *= c[inf] as f64; }
                    v * dt
                }).sum();
                prop_assert!((q - s.exposure[k]).abs() < 1e-9);
            }
        }

        #[test]
        fn lumped_evaluation_agrees((model, h) in any_model_history(), beta in 0.01f64..3.0, mu in 0.01f64..3.0, g in 0.01f64..3.0) {
            let n = model.n_states();
            let p = Params {
                beta, gamma: model.uses_gamma().then_some(g), mu, rho: 0.5, phi: None,
                p_init: vec![1.0 / n as f64; n],
            };
            let direct = ctmc_loglik(&h, &model, &p);
            let lumped = stats_from_lumped(&model, &h.initial_counts(), h.window(), h.lumped());
            let via_lumped = ctmc_loglik_from_stats(&lumped, &model, &p);
            prop_assert!(direct == via_lumped || (direct - via_lumped).abs() < 1e-9);
        }

        #[test]
        fn exchangeable_under_relabeling((model, h) in any_model_history(), rot in 0usize..7) {
            let n = model.n_states();
            let p = Params {
                beta: 0.3, gamma: model.uses_gamma().then_some(0.4), mu: 0.5, rho: 0.5, phi: None,
                p_init: vec![1.0 / n as f64; n],
            };
            let mut paths = h.subject_paths();
            let r = rot % paths.len();
            paths.rotate_left(r);
            let relabeled = PopulationHistory::from_paths(n, h.window(), &paths).unwrap();
            let a = ctmc_loglik(&h, &model, &p);
            let b = ctmc_loglik(&relabeled, &model, &p);
            prop_assert!(a == b || (a - b).abs() < 1e-9);
        }
    }
}
