//! The augmented data: every subject's disease history on `[t_1, t_L]`.
//!
//! Histories are stored as per-subject initial states plus one time-ordered
//! event list. Compartment counts are derived from the event list and follow
//! the left-limit convention: the configuration at time `t` is the one just
//! before `t`.

use crate::error::{Error, Result};
use crate::model::ModelSpec;

/// One subject changing state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub subject: u32,
    pub from: u8,
    pub to: u8,
}

/// A subject-level jump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub time: f64,
    pub to: usize,
}

/// A single subject's path: its state at the start and its jumps.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectPath {
    pub initial: usize,
    pub jumps: Vec<Jump>,
}

impl SubjectPath {
    pub fn constant(state: usize) -> Self {
        SubjectPath { initial: state, jumps: Vec::new() }
    }

    /// State occupied just before `t`.
    pub fn state_before(&self, t: f64) -> usize {
        self.jumps
            .iter()
            .take_while(|j| j.time < t)
            .last()
            .map_or(self.initial, |j| j.to)
    }

    pub fn final_state(&self) -> usize {
        self.jumps.last().map_or(self.initial, |j| j.to)
    }
}

/// A lumped (subject-free) event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LumpedEvent {
    pub time: f64,
    pub from: u8,
    pub to: u8,
}

/// Piecewise-constant prevalence excluding one subject.
///
/// `values[k]` holds on `[breakpoints[k], breakpoints[k + 1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcludedPrevalence {
    pub breakpoints: Vec<f64>,
    pub values: Vec<usize>,
}

impl ExcludedPrevalence {
    /// Value just before `t`.
    pub fn at(&self, t: f64) -> usize {
        let k = self.breakpoints[1..].partition_point(|&b| b < t);
        self.values[k.min(self.values.len() - 1)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationHistory {
    n_states: usize,
    start: f64,
    end: f64,
    initial: Vec<u8>,
    events: Vec<Event>,
}

impl PopulationHistory {
    pub fn new(
        n_states: usize,
        window: (f64, f64),
        initial: Vec<usize>,
        mut events: Vec<Event>,
    ) -> Result<Self> {
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        let h = PopulationHistory {
            n_states,
            start: window.0,
            end: window.1,
            initial: initial.into_iter().map(|s| s as u8).collect(),
            events,
        };
        h.check_basic()?;
        Ok(h)
    }

    /// Builds a history from per-subject paths.
    pub fn from_paths(n_states: usize, window: (f64, f64), paths: &[SubjectPath]) -> Result<Self> {
        let initial = paths.iter().map(|p| p.initial).collect();
        let mut events = Vec::new();
        for (j, p) in paths.iter().enumerate() {
            let mut cur = p.initial;
            for jump in &p.jumps {
                events.push(Event { time: jump.time, subject: j as u32, from: cur as u8, to: jump.to as u8 });
                cur = jump.to;
            }
        }
        Self::new(n_states, window, initial, events)
    }

    fn check_basic(&self) -> Result<()> {
        if !(self.start <= self.end) {
            return Err(Error::InvalidHistory(format!("bad window [{}, {}]", self.start, self.end)));
        }
        if self.initial.iter().any(|&s| s as usize >= self.n_states) {
            return Err(Error::InvalidHistory("initial state out of range".into()));
        }
        for e in &self.events {
            if e.subject as usize >= self.initial.len() {
                return Err(Error::InvalidHistory(format!("unknown subject {}", e.subject)));
            }
            if !(e.time > self.start && e.time < self.end) {
                return Err(Error::InvalidHistory(format!("event at {} outside window", e.time)));
            }
        }
        Ok(())
    }

    pub fn population(&self) -> usize {
        self.initial.len()
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn window(&self) -> (f64, f64) {
        (self.start, self.end)
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn initial_state(&self, subject: usize) -> usize {
        self.initial[subject] as usize
    }

    pub fn initial_states(&self) -> impl Iterator<Item = usize> + '_ {
        self.initial.iter().map(|&s| s as usize)
    }

    pub fn initial_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_states];
        for &s in &self.initial {
            c[s as usize] += 1;
        }
        c
    }

    /// Full validity check against `model`.
    pub fn validate(&self, model: &ModelSpec) -> Result<()> {
        if model.n_states() != self.n_states {
            return Err(Error::InvalidHistory("state count does not match model".into()));
        }
        self.check_consistent()?;
        for e in &self.events {
            if model.transition_index(e.from as usize, e.to as usize).is_none() {
                return Err(Error::InvalidHistory(format!(
                    "transition {} -> {} not in {}",
                    e.from, e.to, model.kind
                )));
            }
        }
        Ok(())
    }

    /// Model-free checks: times strictly increasing and every event leaving
    /// the state its subject occupies.
    pub fn check_consistent(&self) -> Result<()> {
        self.check_basic()?;
        if let Some(w) = self.events.windows(2).position(|w| w[1].time <= w[0].time) {
            return Err(Error::InvalidHistory(format!(
                "event times not strictly increasing at {}",
                w + 1
            )));
        }
        let mut state: Vec<u8> = self.initial.clone();
        for e in &self.events {
            if e.to as usize >= self.n_states || e.to == e.from {
                return Err(Error::InvalidHistory(format!("bad transition {} -> {}", e.from, e.to)));
            }
            let s = &mut state[e.subject as usize];
            if *s != e.from {
                return Err(Error::InvalidHistory(format!(
                    "subject {} leaves state {} but occupies {}",
                    e.subject, e.from, s
                )));
            }
            *s = e.to;
        }
        Ok(())
    }

    /// Compartment counts just before `t`.
    pub fn counts_at(&self, t: f64) -> Result<Vec<usize>> {
        if !(t >= self.start && t <= self.end) {
            return Err(Error::OutsideWindow { time: t, start: self.start, end: self.end });
        }
        let mut c = self.initial_counts();
        for e in self.events.iter().take_while(|e| e.time < t) {
            c[e.from as usize] -= 1;
            c[e.to as usize] += 1;
        }
        Ok(c)
    }

    /// Counts at each of the sorted times `ts`, in one pass.
    pub fn counts_at_sorted(&self, ts: &[f64]) -> Result<Vec<Vec<usize>>> {
        let mut c = self.initial_counts();
        let mut k = 0;
        let mut out = Vec::with_capacity(ts.len());
        for &t in ts {
            if !(t >= self.start && t <= self.end) {
                return Err(Error::OutsideWindow { time: t, start: self.start, end: self.end });
            }
            while k < self.events.len() && self.events[k].time < t {
                let e = self.events[k];
                c[e.from as usize] -= 1;
                c[e.to as usize] += 1;
                k += 1;
            }
            out.push(c.clone());
        }
        Ok(out)
    }

    /// Count trajectory: the initial counts at `t_1` followed by the counts
    /// just after each event.
    pub fn count_path(&self) -> Vec<(f64, Vec<usize>)> {
        let mut c = self.initial_counts();
        let mut out = Vec::with_capacity(self.events.len() + 1);
        out.push((self.start, c.clone()));
        for e in &self.events {
            c[e.from as usize] -= 1;
            c[e.to as usize] += 1;
            out.push((e.time, c.clone()));
        }
        out
    }

    /// Prevalence of `infectious` excluding `subject`, as a step function
    /// whose breakpoints are the other subjects' event times plus the window
    /// endpoints.
    pub fn excluded_prevalence(&self, subject: usize, infectious: usize) -> ExcludedPrevalence {
        let inf = infectious as u8;
        let mut level = self
            .initial
            .iter()
            .enumerate()
            .filter(|&(i, &s)| i != subject && s == inf)
            .count();
        let mut breakpoints = vec![self.start];
        let mut values = vec![level];
        for e in self.events.iter().filter(|e| e.subject as usize != subject) {
            if e.from == inf {
                level -= 1;
            }
            if e.to == inf {
                level += 1;
            }
            breakpoints.push(e.time);
            values.push(level);
        }
        breakpoints.push(self.end);
        ExcludedPrevalence { breakpoints, values }
    }

    pub fn subject_path(&self, subject: usize) -> SubjectPath {
        let jumps = self
            .events
            .iter()
            .filter(|e| e.subject as usize == subject)
            .map(|e| Jump { time: e.time, to: e.to as usize })
            .collect();
        SubjectPath { initial: self.initial[subject] as usize, jumps }
    }

    pub fn subject_paths(&self) -> Vec<SubjectPath> {
        let mut paths: Vec<SubjectPath> =
            self.initial.iter().map(|&s| SubjectPath::constant(s as usize)).collect();
        for e in &self.events {
            paths[e.subject as usize].jumps.push(Jump { time: e.time, to: e.to as usize });
        }
        paths
    }

    /// Replaces `subject`'s path. Fails, leaving the history untouched, if a
    /// new event time collides with an existing one or leaves the window.
    pub fn replace_subject(&mut self, subject: usize, path: &SubjectPath) -> Result<()> {
        let mut fresh = Vec::with_capacity(path.jumps.len());
        let mut cur = path.initial;
        for j in &path.jumps {
            if !(j.time > self.start && j.time < self.end) {
                return Err(Error::InvalidHistory(format!("event at {} outside window", j.time)));
            }
            fresh.push(Event { time: j.time, subject: subject as u32, from: cur as u8, to: j.to as u8 });
            cur = j.to;
        }
        let kept: Vec<Event> =
            self.events.iter().copied().filter(|e| e.subject as usize != subject).collect();
        let mut merged = Vec::with_capacity(kept.len() + fresh.len());
        let (mut a, mut b) = (0, 0);
        while a < kept.len() || b < fresh.len() {
            let take_kept = b == fresh.len() || (a < kept.len() && kept[a].time < fresh[b].time);
            if take_kept {
                merged.push(kept[a]);
                a += 1;
            } else {
                merged.push(fresh[b]);
                b += 1;
            }
            let n = merged.len();
            if n > 1 && merged[n - 1].time <= merged[n - 2].time {
                return Err(Error::InvalidHistory(format!(
                    "event time collision at {}",
                    merged[n - 1].time
                )));
            }
        }
        self.events = merged;
        self.initial[subject] = path.initial as u8;
        Ok(())
    }

    /// Drops subject labels.
    pub fn lumped(&self) -> Vec<LumpedEvent> {
        self.events
            .iter()
            .map(|e| LumpedEvent { time: e.time, from: e.from, to: e.to })
            .collect()
    }
}
