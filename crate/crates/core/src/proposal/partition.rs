use crate::error::{Error, Result};
use crate::history::PopulationHistory;

/// The observation window cut at the other subjects' event times and at
/// the observation times, with the excluded prevalence on each piece.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalPartition {
    /// Strictly increasing, from `t_1` to `t_L`.
    pub breaks: Vec<f64>,
    /// Prevalence among the other subjects on `[breaks[k], breaks[k + 1])`.
    pub prevalence: Vec<usize>,
    /// Index into `breaks` of each observation time.
    pub obs_break: Vec<usize>,
    /// Excluded prevalence just before each observation time.
    pub obs_prevalence: Vec<usize>,
}

impl IntervalPartition {
    pub fn build(history: &PopulationHistory, subject: usize, times: &[f64], infectious: usize) -> Result<Self> {
        let (start, end) = history.window();
        if times.first() != Some(&start) || times.last() != Some(&end) {
            return Err(Error::BrokenPartition { index: 0 });
        }
        let ex = history.excluded_prevalence(subject, infectious);
        let nb = ex.breakpoints.len();
        let mut cur = ex.values[0];
        let mut out = IntervalPartition {
            breaks: vec![start],
            prevalence: Vec::with_capacity(nb + times.len()),
            obs_break: vec![0],
            obs_prevalence: vec![cur],
        };
        let (mut e, mut o) = (1, 1);
        while e < nb - 1 || o < times.len() {
            let te = if e < nb - 1 { ex.breakpoints[e] } else { f64::INFINITY };
            let to = if o < times.len() { times[o] } else { f64::INFINITY };
            // An observation tied with an event sees the configuration
            // before the event.
            let t = te.min(to);
            if t > *out.breaks.last().expect("nonempty") {
                out.prevalence.push(cur);
                out.breaks.push(t);
            } else if t < *out.breaks.last().expect("nonempty") {
                return Err(Error::BrokenPartition { index: out.breaks.len() });
            }
            if to <= te {
                out.obs_break.push(out.breaks.len() - 1);
                out.obs_prevalence.push(cur);
                o += 1;
            } else {
                cur = ex.values[e];
                e += 1;
            }
        }
        Ok(out)
    }

    pub fn n_intervals(&self) -> usize {
        self.prevalence.len()
    }

    pub fn interval(&self, k: usize) -> (f64, f64) {
        (self.breaks[k], self.breaks[k + 1])
    }

    pub fn len(&self, k: usize) -> f64 {
        self.breaks[k + 1] - self.breaks[k]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::{Event, SubjectPath};
    use proptest::prelude::*;

    #[test]
    fn single_subject_is_one_piece_per_observation_gap() {
        let h = PopulationHistory::new(3, (0.0, 4.0), vec![0], vec![]).unwrap();
        let p = IntervalPartition::build(&h, 0, &[0.0, 4.0], 1).unwrap();
        assert_eq!(p.breaks, vec![0.0, 4.0]);
        assert_eq!(p.prevalence, vec![0]);
        assert_eq!(p.obs_break, vec![0, 1]);
    }

    #[test]
    fn observations_become_breakpoints() {
        let h = PopulationHistory::new(
            3,
            (0.0, 3.0),
            vec![0, 1],
            vec![Event { time: 1.5, subject: 1, from: 1, to: 2 }],
        )
        .unwrap();
        let p = IntervalPartition::build(&h, 0, &[0.0, 1.0, 2.0, 3.0], 1).unwrap();
        assert_eq!(p.breaks, vec![0.0, 1.0, 1.5, 2.0, 3.0]);
        assert_eq!(p.prevalence, vec![1, 1, 0, 0]);
        assert_eq!(p.obs_break, vec![0, 1, 3, 4]);
        assert_eq!(p.obs_prevalence, vec![1, 1, 0, 0]);
    }

    #[test]
    fn single_observation() {
        let h = PopulationHistory::new(3, (2.0, 2.0), vec![0, 1], vec![]).unwrap();
        let p = IntervalPartition::build(&h, 0, &[2.0], 1).unwrap();
        assert_eq!(p.breaks, vec![2.0]);
        assert_eq!(p.n_intervals(), 0);
        assert_eq!(p.obs_prevalence, vec![1]);
    }

    proptest! {
        #[test]
        fn matches_excluded_prevalence_at_midpoints(
            subs in proptest::collection::vec((0usize..3, 0.01f64..9.99, 0.01f64..9.99), 1..8),
            j_seed in 0usize..100,
        ) {
            let paths: Vec<SubjectPath> = subs.iter().map(|&(s, a, b)| {
                let (a, b) = (a.min(b), a.max(b));
                let mut jumps = vec![];
                if s == 0 { jumps.push(crate::history::Jump { time: a, to: 1 }); }
                if s <= 1 && b > a { jumps.push(crate::history::Jump { time: b, to: 2 }); }
                SubjectPath { initial: s, jumps }
            }).collect();
            let Ok(h) = PopulationHistory::from_paths(3, (0.0, 10.0), &paths) else { return Ok(()) };
            if h.validate(&crate::model::ModelSpec::sir()).is_err() { return Ok(()); }
            let j = j_seed % paths.len();
            let times = [0.0, 2.5, 5.0, 7.5, 10.0];
            let p = IntervalPartition::build(&h, j, &times, 1).unwrap();
            prop_assert!(p.breaks.windows(2).all(|w| w[0] < w[1]));
            let ex = h.excluded_prevalence(j, 1);
            for k in 0..p.n_intervals() {
                let (a, b) = p.interval(k);
                prop_assert_eq!(p.prevalence[k], ex.at(0.5 * (a + b)));
            }
            for (l, &b) in p.obs_break.iter().enumerate() {
                prop_assert_eq!(p.breaks[b], times[l]);
            }
            // Subject j's own events are not breakpoints.
            for jump in h.subject_path(j).jumps {
                prop_assert!(!p.breaks.contains(&jump.time) || times.contains(&jump.time));
            }
            // Rebuilding after pinning j elsewhere gives the same partition.
            let mut other = h.clone();
            other.replace_subject(j, &SubjectPath::constant(2)).unwrap();
            prop_assert_eq!(IntervalPartition::build(&other, j, &times, 1).unwrap(), p);
        }
    }
}
